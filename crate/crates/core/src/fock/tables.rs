//! Trigonometric operator tables and the banded kernel that applies the
//! time-dressed standing-wave coupling.

use crate::fock::displacement::displacement_matrix;
use crate::{Error, PhysParams, Result, C64};

/// Entries below this magnitude are dropped from the ends of each kernel column.
const KERNEL_CUTOFF: f64 = 1e-18;

/// ⟨m|cos X|n⟩ and ⟨m|sin X|n⟩ for X = eta (a + a†), dense and row-major.
///
/// At time t the operators carry the extra phase e^{i(m-n) w t}. The packed
/// kernel stores only the significant band of each column.
#[derive(Debug, Clone)]
pub struct TrigTables {
    pub eta: f64,
    pub n_max: usize,
    pub cos_mat: Vec<f64>,
    pub sin_mat: Vec<f64>,
    kernel: Kernel,
}

#[derive(Debug, Clone, Copy)]
struct Band {
    lo: usize,
    len: usize,
    off: usize,
}

/// Column-packed storage of cos X (same-parity rows) and sin X
/// (opposite-parity rows), rows stepping by two.
#[derive(Debug, Clone)]
struct Kernel {
    cos_bands: Vec<Band>,
    sin_bands: Vec<Band>,
    vals: Vec<f64>,
    /// `reach[n]`: one past the largest row touched by any column below `n`, at least `n`.
    reach: Vec<usize>,
}

impl TrigTables {
    #[inline]
    pub fn cos(&self, m: usize, n: usize) -> f64 {
        self.cos_mat[m * self.n_max + n]
    }

    #[inline]
    pub fn sin(&self, m: usize, n: usize) -> f64 {
        self.sin_mat[m * self.n_max + n]
    }

    /// Rows that columns `0..n` can reach in one application.
    #[inline]
    pub(crate) fn reach(&self, n: usize) -> usize {
        self.kernel.reach[n.min(self.n_max)]
    }

    /// Accumulates y_k += M z_k for the pair (z1, z2), where M = c cos X - s sin X.
    ///
    /// Columns at or above `cols`, or where both inputs are below `cut_sq` in
    /// squared magnitude, are skipped. The outputs must be zeroed by the caller.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate_pair(
        &self,
        c: f64,
        s: f64,
        z1: &[C64],
        z2: &[C64],
        y1: &mut [C64],
        y2: &mut [C64],
        cols: usize,
        cut_sq: f64,
    ) {
        let k = &self.kernel;
        for n in 0..cols.min(self.n_max) {
            let (a, b) = (z1[n], z2[n]);
            if a.norm_sqr() <= cut_sq && b.norm_sqr() <= cut_sq {
                continue;
            }
            let cb = k.cos_bands[n];
            if cb.len > 0 {
                let (ca, cbv) = (a * c, b * c);
                let vals = &k.vals[cb.off..cb.off + cb.len];
                for (j, &v) in vals.iter().enumerate() {
                    let m = cb.lo + 2 * j;
                    y1[m] += ca * v;
                    y2[m] += cbv * v;
                }
            }
            let sb = k.sin_bands[n];
            if sb.len > 0 {
                let (sa, sbv) = (a * -s, b * -s);
                let vals = &k.vals[sb.off..sb.off + sb.len];
                for (j, &v) in vals.iter().enumerate() {
                    let m = sb.lo + 2 * j;
                    y1[m] += sa * v;
                    y2[m] += sbv * v;
                }
            }
        }
    }
}

fn pack(mat: &[f64], n_max: usize, col: usize, parity: usize, vals: &mut Vec<f64>) -> Band {
    // rows with (row + col) % 2 == parity
    let first = (col + parity) % 2;
    let rows: Vec<usize> = (first..n_max).step_by(2).collect();
    let big = |m: usize| mat[m * n_max + col].abs() >= KERNEL_CUTOFF;
    let lo = rows.iter().position(|&m| big(m));
    let hi = rows.iter().rposition(|&m| big(m));
    match (lo, hi) {
        (Some(lo), Some(hi)) => {
            let off = vals.len();
            for &m in &rows[lo..=hi] {
                vals.push(mat[m * n_max + col]);
            }
            Band {
                lo: rows[lo],
                len: hi - lo + 1,
                off,
            }
        }
        _ => Band {
            lo: 0,
            len: 0,
            off: vals.len(),
        },
    }
}

/// Builds the cos/sin tables from D(i eta) = exp(iX): cos X is its real and
/// sin X its imaginary part.
pub fn build_trig_tables(eta: f64, n_max: usize) -> Result<TrigTables> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
    }
    let d = displacement_matrix(C64::new(0.0, eta), n_max)?;
    let mut cos_mat = vec![0.0; n_max * n_max];
    let mut sin_mat = vec![0.0; n_max * n_max];
    for m in 0..n_max {
        for n in 0..n_max {
            let v = d.get(m, n);
            cos_mat[m * n_max + n] = v.re;
            sin_mat[m * n_max + n] = v.im;
        }
    }
    let mut vals = Vec::new();
    let mut cos_bands = Vec::with_capacity(n_max);
    let mut sin_bands = Vec::with_capacity(n_max);
    for col in 0..n_max {
        cos_bands.push(pack(&cos_mat, n_max, col, 0, &mut vals));
        sin_bands.push(pack(&sin_mat, n_max, col, 1, &mut vals));
    }
    let mut reach = Vec::with_capacity(n_max + 1);
    let mut r = 0usize;
    reach.push(0);
    for col in 0..n_max {
        for b in [cos_bands[col], sin_bands[col]] {
            if b.len > 0 {
                r = r.max(b.lo + 2 * (b.len - 1) + 1);
            }
        }
        r = r.max(col + 1);
        reach.push(r);
    }
    Ok(TrigTables {
        eta,
        n_max,
        cos_mat,
        sin_mat,
        kernel: Kernel {
            cos_bands,
            sin_bands,
            vals,
            reach,
        },
    })
}

/// Scalar classical part of the standing-wave phase, eta (alpha e^{-iwt} + c.c.).
#[inline]
pub fn classical_phase(frame_alpha: C64, t: f64, p: &PhysParams) -> f64 {
    2.0 * p.eta * (frame_alpha * C64::cis(-p.omega_t * t)).re
}

/// Fills `ph[n] = e^{i w t n}` for n < len.
#[inline]
pub(crate) fn fill_phases(ph: &mut [C64], w_t: f64, len: usize) {
    let step = C64::cis(w_t);
    let mut z = C64::new(1.0, 0.0);
    for p in ph.iter_mut().take(len) {
        *p = z;
        z *= step;
    }
}

/// cos{eta[(alpha + a) e^{-iwt} + h.c.]} applied to `state`, without the
/// Omega/2 prefactor.
pub fn apply_modulated_cos(state: &[C64], t: f64, frame_alpha: C64, tables: &TrigTables, p: &PhysParams) -> Vec<C64> {
    let n = tables.n_max;
    assert_eq!(state.len(), n);
    let phi = classical_phase(frame_alpha, t, p);
    let mut ph = vec![C64::new(0.0, 0.0); n];
    fill_phases(&mut ph, p.omega_t * t, n);
    let z: Vec<C64> = state.iter().zip(&ph).map(|(v, e)| v * e.conj()).collect();
    let zero = vec![C64::new(0.0, 0.0); n];
    let mut y = vec![C64::new(0.0, 0.0); n];
    let mut dummy = vec![C64::new(0.0, 0.0); n];
    tables.accumulate_pair(phi.cos(), phi.sin(), &z, &zero, &mut y, &mut dummy, n, 0.0);
    y.iter().zip(&ph).map(|(v, e)| v * e).collect()
}

/// ⟨2n|cos X|0⟩ = (-1)^n eta^{2n} e^{-eta^2/2} / sqrt((2n)!).
pub fn matrix_element_2n(eta: f64, n: u32) -> f64 {
    let two_n = 2 * n;
    let ln_fact: f64 = (1..=two_n).map(|j| f64::from(j).ln()).sum();
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    if eta == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    sign * (f64::from(two_n) * eta.ln() - 0.5 * eta * eta - 0.5 * ln_fact).exp()
}
