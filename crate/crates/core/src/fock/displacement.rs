//! Displacement operator matrix elements in the number basis.

use crate::{Error, Result, C64};

/// Dense row-major complex square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: C64) {
        self.data[row * self.n + col] = v;
    }

    pub fn row(&self, row: usize) -> &[C64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let orow = &other.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Largest entrywise deviation from the identity over the leading `k`×`k` block.
    pub fn identity_defect(&self, k: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..k.min(self.n) {
            for j in 0..k.min(self.n) {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.get(i, j) - target).norm());
            }
        }
        worst
    }
}

const RESCALE: f64 = 1e150;

/// Fills `out[n]` with ⟨n+k|D(xi)|n⟩ for n in 0..len, k ≥ 0.
///
/// Runs the three-term Laguerre recurrence on the normalized polynomials
/// h_n = sqrt(n! k! / (n+k)!) L_n^(k)(x) and carries the exponential
/// prefactor in log form so neither part over- nor underflows.
fn lower_diagonal(xi: C64, k: usize, len: usize, out: &mut Vec<C64>) {
    out.clear();
    let x = xi.norm_sqr();
    let r = xi.norm();
    let kf = k as f64;
    let ln_kfact: f64 = (1..=k).map(|j| (j as f64).ln()).sum();
    let phase = (xi / r).powu(k as u32);
    let log_pref = kf * r.ln() - 0.5 * x - 0.5 * ln_kfact;
    let mut log_scale = 0.0;
    let mut h_prev = 0.0;
    let mut h = 1.0;
    for n in 0..len {
        if n == 1 {
            h_prev = h;
            h = (1.0 + kf - x) / (kf + 1.0).sqrt();
        } else if n >= 2 {
            let nf = n as f64;
            let a = (2.0 * nf - 1.0 + kf - x) / (nf * (nf + kf)).sqrt();
            let b = ((nf - 1.0) * (nf + kf - 1.0) / (nf * (nf + kf))).sqrt();
            let next = a * h - b * h_prev;
            h_prev = h;
            h = next;
        }
        if h.abs() > RESCALE {
            h /= RESCALE;
            h_prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
        out.push(phase * ((log_pref + log_scale).exp() * h));
    }
}

/// ⟨m|D(xi)|n⟩ on the truncated basis of dimension `n_max`.
///
/// The entries are those of the full operator, truncated, not the
/// exponential of a truncated generator.
pub fn displacement_matrix(xi: C64, n_max: usize) -> Result<CMatrix> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be >= 1"));
    }
    let x = xi.norm_sqr();
    if x > n_max as f64 {
        return Err(Error::DisplacementOverflow { xi_sq: x, n_max });
    }
    if x == 0.0 {
        return Ok(CMatrix::identity(n_max));
    }
    let mut d = CMatrix::zeros(n_max);
    let mut buf = Vec::with_capacity(n_max);
    for k in 0..n_max {
        let len = n_max - k;
        lower_diagonal(xi, k, len, &mut buf);
        for (n, &v) in buf.iter().enumerate() {
            d.set(n + k, n, v);
        }
        if k > 0 {
            // D(xi)_{n, n+k} = conj(D(-xi)_{n+k, n})
            lower_diagonal(-xi, k, len, &mut buf);
            for (n, v) in buf.iter().enumerate() {
                d.set(n, n + k, v.conj());
            }
        }
    }
    Ok(d)
}

/// D(xi) applied to `v`.
pub fn displace(xi: C64, v: &[C64]) -> Result<Vec<C64>> {
    if xi.norm_sqr() == 0.0 {
        return Ok(v.to_vec());
    }
    Ok(displacement_matrix(xi, v.len())?.mul_vec(v))
}

/// Number-basis coefficients of the coherent state |beta⟩.
pub fn coherent_state(beta: C64, n_max: usize) -> Result<Vec<C64>> {
    if beta.norm_sqr() > n_max as f64 {
        return Err(Error::DisplacementOverflow {
            xi_sq: beta.norm_sqr(),
            n_max,
        });
    }
    let mut v = Vec::with_capacity(n_max);
    let mut c = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    for n in 0..n_max {
        if n > 0 {
            c = c * beta / (n as f64).sqrt();
        }
        v.push(c);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fact(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Associated Laguerre polynomial by explicit sum.
    fn laguerre(n: u32, k: u32, x: f64) -> f64 {
        (0..=n)
            .map(|j| {
                let binom = fact(n + k) / (fact(n - j) * fact(k + j));
                binom * (-x).powi(j as i32) / fact(j)
            })
            .sum()
    }

    #[test]
    fn identity_at_zero() {
        let d = displacement_matrix(C64::new(0.0, 0.0), 32).unwrap();
        assert_eq!(d, CMatrix::identity(32));
    }

    #[test]
    fn vacuum_overlap() {
        for xi in [C64::new(0.3, 0.4), C64::new(-1.5, 0.2), C64::new(0.0, 2.0)] {
            let d = displacement_matrix(xi, 24).unwrap();
            assert!((d.get(0, 0) - C64::new((-0.5 * xi.norm_sqr()).exp(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn matches_closed_form_small_indices() {
        let xi = C64::new(0.7, -0.4);
        let d = displacement_matrix(xi, 16).unwrap();
        let x = xi.norm_sqr();
        for m in 0..10u32 {
            for n in 0..10u32 {
                let exact = if m >= n {
                    (fact(n) / fact(m)).sqrt() * xi.powu(m - n) * (-0.5 * x).exp() * laguerre(n, m - n, x)
                } else {
                    (fact(m) / fact(n)).sqrt() * (-xi.conj()).powu(n - m) * (-0.5 * x).exp() * laguerre(m, n - m, x)
                };
                let got = d.get(m as usize, n as usize);
                assert!((got - exact).norm() < 1e-12, "({m},{n}) {got} vs {exact}");
            }
        }
    }

    #[test]
    fn inverse_is_negated_argument() {
        let n = 256;
        for xi in [C64::new(2.0, 0.0), C64::new(-0.9, 1.1), C64::new(0.05, -0.02)] {
            let d = displacement_matrix(xi, n).unwrap();
            let dm = displacement_matrix(-xi, n).unwrap();
            let prod = d.matmul(&dm);
            assert!(prod.identity_defect(128) < 1e-10, "{}", prod.identity_defect(128));
        }
    }

    #[test]
    fn large_basis_entries_are_finite_and_bounded() {
        let n = 512;
        let d = displacement_matrix(C64::new(0.0, 0.2), n).unwrap();
        for i in 0..n {
            for v in d.row(i) {
                assert!(v.re.is_finite() && v.im.is_finite());
                assert!(v.norm() <= 1.0 + 1e-12);
            }
        }
        // columns of a unitary have unit norm away from the truncation edge
        for col in [0usize, 100, 400] {
            let s: f64 = (0..n).map(|i| d.get(i, col).norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(
            displacement_matrix(C64::new(5.0, 0.0), 16),
            Err(Error::DisplacementOverflow { .. })
        ));
    }

    #[test]
    fn coherent_state_is_displaced_vacuum() {
        let beta = C64::new(1.2, -0.7);
        let mut vac = vec![C64::new(0.0, 0.0); 64];
        vac[0] = C64::new(1.0, 0.0);
        let a = displace(beta, &vac).unwrap();
        let b = coherent_state(beta, 64).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-13);
        }
    }
}
