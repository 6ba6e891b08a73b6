//! Waiting-time distributions and mean waiting times between quantum jumps.
//!
//! After a jump the ion is in the electronic ground state and, in the
//! semi-quantum picture, oscillates with a fixed amplitude `a` and phase
//! `zeta`. The internal state then obeys a real linear system with the
//! periodic coupling g(τ) = (Ω/2) cos(2πa cos(ω_T τ + ζ)).

pub mod bessel;
pub mod quantum;

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::Serialize;

use crate::csvio;
use crate::ensemble::{map_indexed, Execution};
use crate::{Error, PhysParams, Result};

pub use bessel::{bessel_j, bessel_j_seq, j0_zero};
pub use quantum::{
    coherent_local, first_jump_mean_vs_eta, first_jump_mean_vs_eta_with, mean_wait_quantum, mean_wait_quantum_from,
    mean_wait_quantum_with, perturbative_first_jump_rate, squeezed_vacuum, FirstJumpPoint, QuantumWaitOptions,
    WaitEstimate, WaitEstimator,
};

/// Default integration step for the waiting-time ODEs.
pub const WAIT_DT: f64 = 1e-3;
/// ζ grid used for phase averages.
pub const N_ZETA: usize = 32;
/// B² level at which a wait counts as finished.
pub const B2_STOP: f64 = 1e-10;
/// Longest wait, in lifetimes, before the mean is declared divergent.
pub const MAX_WAIT: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WtdCurve {
    pub tau_grid: Vec<f64>,
    pub w_values: Vec<f64>,
    pub a: f64,
    /// `None` when averaged over the phase.
    pub zeta: Option<f64>,
}

impl WtdCurve {
    pub fn trapezoid_integral(&self) -> f64 {
        self.tau_grid
            .windows(2)
            .zip(self.w_values.windows(2))
            .map(|(t, w)| 0.5 * (t[1] - t[0]) * (w[0] + w[1]))
            .sum()
    }

    /// First moment by the trapezoid rule.
    pub fn mean(&self) -> f64 {
        self.tau_grid
            .windows(2)
            .zip(self.w_values.windows(2))
            .map(|(t, w)| 0.5 * (t[1] - t[0]) * (t[0] * w[0] + t[1] * w[1]))
            .sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let comment = match self.zeta {
            Some(z) => format!("a={} zeta={}", csvio::fmt(self.a), csvio::fmt(z)),
            None => format!("a={} zeta=averaged", csvio::fmt(self.a)),
        };
        csvio::write_table_file(
            path,
            Some(&comment),
            &["tau", "w"],
            self.tau_grid.iter().zip(&self.w_values).map(|(&t, &w)| vec![t, w]),
        )
    }
}

/// Phase-function form of the internal state: c⁻ + i c⁺ = B e^{iβ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseFnState {
    pub beta: f64,
    /// ln B.
    pub b_log: f64,
}

#[inline]
pub fn coupling(a: f64, zeta: f64, tau: f64, p: &PhysParams) -> f64 {
    0.5 * p.rabi * (TAU * a * (p.omega_t * tau + zeta).cos()).cos()
}

fn check_amplitude(a: f64) -> Result<()> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("amplitude must be >= 0, got {a}")));
    }
    Ok(())
}

fn grid_steps(tau_max: f64, dt: f64) -> Result<usize> {
    if !(tau_max > 0.0 && dt > 0.0) {
        return Err(Error::invalid("tau_max and dt must be > 0"));
    }
    Ok((tau_max / dt).round().max(1.0) as usize)
}

/// One RK4 step of the amplitude system (c⁻, c⁺).
fn amp_step(y: [f64; 2], g0: f64, gh: f64, g1: f64, h: f64, half_gamma: f64) -> [f64; 2] {
    let f = |g: f64, y: [f64; 2]| [-g * y[1], g * y[0] - half_gamma * y[1]];
    let k1 = f(g0, y);
    let k2 = f(gh, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
    let k3 = f(gh, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
    let k4 = f(g1, [y[0] + h * k3[0], y[1] + h * k3[1]]);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Waiting-time density γ|c⁺(τ)|² starting from the ground state.
pub fn wtd_exact(a: f64, zeta: f64, p: &PhysParams, tau_max: f64, dt: f64) -> Result<WtdCurve> {
    check_amplitude(a)?;
    let n = grid_steps(tau_max, dt)?;
    let h = tau_max / n as f64;
    let hg = 0.5 * p.gamma();
    let mut y = [1.0, 0.0];
    let mut tau_grid = Vec::with_capacity(n + 1);
    let mut w_values = Vec::with_capacity(n + 1);
    tau_grid.push(0.0);
    w_values.push(0.0);
    for k in 0..n {
        let t0 = k as f64 * h;
        y = amp_step(
            y,
            coupling(a, zeta, t0, p),
            coupling(a, zeta, t0 + 0.5 * h, p),
            coupling(a, zeta, t0 + h, p),
            h,
            hg,
        );
        tau_grid.push((k + 1) as f64 * h);
        w_values.push(p.gamma() * y[1] * y[1]);
    }
    Ok(WtdCurve {
        tau_grid,
        w_values,
        a,
        zeta: Some(zeta),
    })
}

/// Uniform ζ average of `wtd_exact` over `n_zeta` phases.
pub fn wtd_zeta_avg(a: f64, p: &PhysParams, tau_max: f64, dt: f64, n_zeta: usize) -> Result<WtdCurve> {
    if n_zeta < 1 {
        return Err(Error::invalid("n_zeta must be >= 1"));
    }
    let curves = map_indexed(n_zeta, Execution::default(), |k| {
        wtd_exact(a, TAU * k as f64 / n_zeta as f64, p, tau_max, dt)
    });
    let mut out: Option<WtdCurve> = None;
    for c in curves {
        let c = c?;
        match out.as_mut() {
            None => out = Some(c),
            Some(o) => o.w_values.iter_mut().zip(&c.w_values).for_each(|(x, y)| *x += y),
        }
    }
    let mut out = out.expect("n_zeta >= 1");
    out.w_values.iter_mut().for_each(|w| *w /= n_zeta as f64);
    out.zeta = None;
    Ok(out)
}

/// Integrates the (β, ln B) system on a uniform grid, including τ = 0.
pub fn phase_fn_trajectory(a: f64, zeta: f64, p: &PhysParams, tau_max: f64, dt: f64) -> Result<Vec<PhaseFnState>> {
    check_amplitude(a)?;
    let n = grid_steps(tau_max, dt)?;
    let h = tau_max / n as f64;
    let g = p.gamma();
    let f = |c: f64, s: PhaseFnState| [c - 0.25 * g * (2.0 * s.beta).sin(), -0.5 * g * s.beta.sin().powi(2)];
    let add = |s: PhaseFnState, k: [f64; 2], w: f64| PhaseFnState {
        beta: s.beta + w * k[0],
        b_log: s.b_log + w * k[1],
    };
    let mut s = PhaseFnState { beta: 0.0, b_log: 0.0 };
    let mut out = Vec::with_capacity(n + 1);
    out.push(s);
    for k in 0..n {
        let t0 = k as f64 * h;
        let (c0, ch, c1) = (
            coupling(a, zeta, t0, p),
            coupling(a, zeta, t0 + 0.5 * h, p),
            coupling(a, zeta, t0 + h, p),
        );
        let k1 = f(c0, s);
        let k2 = f(ch, add(s, k1, 0.5 * h));
        let k3 = f(ch, add(s, k2, 0.5 * h));
        let k4 = f(c1, add(s, k3, h));
        s = PhaseFnState {
            beta: s.beta + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            b_log: s.b_log + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        };
        out.push(s);
    }
    Ok(out)
}

/// W = −d(B²)/dτ = γ B² sin²β from the phase-function trajectory.
pub fn wtd_from_phase(states: &[PhaseFnState], p: &PhysParams) -> Vec<f64> {
    states
        .iter()
        .map(|s| p.gamma() * (2.0 * s.b_log).exp() * s.beta.sin().powi(2))
        .collect()
}

/// Monodromy over one coupling period and the Gram integral ∫ΦᵀΦ over it.
fn period_map(a: f64, zeta: f64, p: &PhysParams, dt: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    // cos(x cos θ) is even under θ → θ + π, so g has period π/ω_T.
    let period = PI / p.omega_t;
    let n = (period / dt).ceil().max(1.0) as usize;
    let h = period / n as f64;
    let hg = 0.5 * p.gamma();
    // y = [c1⁻, c1⁺, c2⁻, c2⁺, G11, G12, G22]
    let f = |g: f64, y: &[f64; 7]| -> [f64; 7] {
        [
            -g * y[1],
            g * y[0] - hg * y[1],
            -g * y[3],
            g * y[2] - hg * y[3],
            y[0] * y[0] + y[1] * y[1],
            y[0] * y[2] + y[1] * y[3],
            y[2] * y[2] + y[3] * y[3],
        ]
    };
    let axpy = |y: &[f64; 7], k: &[f64; 7], w: f64| -> [f64; 7] {
        let mut o = *y;
        for i in 0..7 {
            o[i] += w * k[i];
        }
        o
    };
    let mut y = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    for k in 0..n {
        let t0 = k as f64 * h;
        let (g0, gh, g1) = (
            coupling(a, zeta, t0, p),
            coupling(a, zeta, t0 + 0.5 * h, p),
            coupling(a, zeta, t0 + h, p),
        );
        let k1 = f(g0, &y);
        let k2 = f(gh, &axpy(&y, &k1, 0.5 * h));
        let k3 = f(gh, &axpy(&y, &k2, 0.5 * h));
        let k4 = f(g1, &axpy(&y, &k3, h));
        for i in 0..7 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let m = [[y[0], y[2]], [y[1], y[3]]];
    let gram = [[y[4], y[5]], [y[5], y[6]]];
    (m, gram)
}

fn spectral_radius(m: &[[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (0.5 * tr + s).abs().max((0.5 * tr - s).abs())
    } else {
        det.abs().sqrt()
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let piv = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Mean waiting time ∫B² dτ for one amplitude and phase, with step `dt`.
///
/// The solution after k whole periods is Φ(s)Mᵏ, so the integral is the
/// (1,1) entry of X = Σ (Mᵀ)ᵏ G Mᵏ, which solves X − MᵀXM = G.
pub fn mean_wait_exact_with(a: f64, zeta: f64, p: &PhysParams, dt: f64) -> Result<f64> {
    check_amplitude(a)?;
    let (m, gram) = period_map(a, zeta, p, dt);
    let rho = spectral_radius(&m);
    let period = PI / p.omega_t;
    // Periods until B² falls to the stopping level.
    if !(rho < 1.0) || B2_STOP.ln() / (2.0 * rho.ln()) * period > MAX_WAIT {
        return Err(Error::NonConvergence(format!(
            "a={a} zeta={zeta}: per-period decay factor {rho:.12} too close to one"
        )));
    }
    let basis = [
        [[1.0, 0.0], [0.0, 0.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, 0.0], [0.0, 1.0]],
    ];
    let mut lhs = [[0.0; 3]; 3];
    for (col, e) in basis.iter().enumerate() {
        let mut f = *e;
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        s += m[k][i] * e[k][l] * m[l][j];
                    }
                }
                f[i][j] -= s;
            }
        }
        lhs[0][col] = f[0][0];
        lhs[1][col] = f[0][1];
        lhs[2][col] = f[1][1];
    }
    let x = solve3(lhs, [gram[0][0], gram[0][1], gram[1][1]])
        .ok_or_else(|| Error::NonConvergence(format!("a={a} zeta={zeta}: singular period map")))?;
    Ok(x[0])
}

pub fn mean_wait_exact(a: f64, zeta: f64, p: &PhysParams) -> Result<f64> {
    mean_wait_exact_with(a, zeta, p, WAIT_DT)
}

/// Mean waiting time by marching ∫B² until B² < 10⁻¹⁰. Much slower than
/// `mean_wait_exact`; kept as an independent check.
pub fn mean_wait_direct(a: f64, zeta: f64, p: &PhysParams, dt: f64) -> Result<f64> {
    check_amplitude(a)?;
    let hg = 0.5 * p.gamma();
    let mut y = [1.0, 0.0];
    let mut integral = 0.0;
    let mut k = 0u64;
    loop {
        let t0 = k as f64 * dt;
        if t0 > MAX_WAIT {
            return Err(Error::NonConvergence(format!(
                "a={a} zeta={zeta}: B² still above threshold"
            )));
        }
        let b0 = y[0] * y[0] + y[1] * y[1];
        let (g0, gh, g1) = (
            coupling(a, zeta, t0, p),
            coupling(a, zeta, t0 + 0.5 * dt, p),
            coupling(a, zeta, t0 + dt, p),
        );
        let gq = coupling(a, zeta, t0 + 0.25 * dt, p);
        let ym = amp_step(y, g0, gq, gh, 0.5 * dt, hg);
        y = amp_step(y, g0, gh, g1, dt, hg);
        let bm = ym[0] * ym[0] + ym[1] * ym[1];
        let b1 = y[0] * y[0] + y[1] * y[1];
        // Simpson on the step.
        integral += dt / 6.0 * (b0 + 4.0 * bm + b1);
        k += 1;
        if b1 < B2_STOP {
            return Ok(integral);
        }
    }
}

/// Uniform average of `mean_wait_exact` over `n_zeta` phases.
pub fn mean_wait_zeta_avg(a: f64, p: &PhysParams, n_zeta: usize) -> Result<f64> {
    if n_zeta < 4 {
        return Err(Error::invalid(format!("n_zeta must be >= 4, got {n_zeta}")));
    }
    if a == 0.0 {
        return mean_wait_exact(0.0, 0.0, p);
    }
    let mut s = 0.0;
    for k in 0..n_zeta {
        s += mean_wait_exact(a, TAU * k as f64 / n_zeta as f64, p)?;
    }
    Ok(s / n_zeta as f64)
}

/// ζ-averaged exact mean waits over an amplitude grid.
pub fn mean_wait_curve(a_grid: &[f64], p: &PhysParams, n_zeta: usize, exec: Execution) -> Result<Vec<f64>> {
    map_indexed(a_grid.len(), exec, |i| mean_wait_zeta_avg(a_grid[i], p, n_zeta))
        .into_iter()
        .collect()
}

/// Partial sum over |n| ≤ n_terms of the Fourier–Bessel series for the phase
/// β(τ) of the small-angle equation β' = g − (γ/2)β, after transients.
pub fn beta_series(a: f64, zeta: f64, tau: f64, p: &PhysParams, n_terms: usize) -> f64 {
    let j = bessel_j_seq(n_terms, TAU * a);
    let theta = p.omega_t * tau + zeta;
    let hg = 0.5 * p.gamma();
    let mut s = j[0] / hg;
    // Odd orders cancel between n and −n; even ones pair to 2(−1)^{n/2}.
    for n in (2..=n_terms).step_by(2) {
        let sign = if (n / 2) % 2 == 0 { 1.0 } else { -1.0 };
        let w = n as f64 * p.omega_t;
        let (sn, cn) = (n as f64 * theta).sin_cos();
        // Re[e^{inθ} / (γ/2 + i n ω)]
        let re = (hg * cn + w * sn) / (hg * hg + w * w);
        s += 2.0 * sign * j[n] * re;
    }
    0.5 * p.rabi * s
}

/// d.c. component of β² from the series: (Ω/2)² [J₀²/(γ/2)² + Σ_{k≥1} 2J²_{2k}/((γ/2)² + (2kω)²)].
pub fn beta_sq_dc(a: f64, p: &PhysParams) -> f64 {
    let x = TAU * a;
    let hg2 = 0.25 * p.gamma() * p.gamma();
    let mut n_max = (x.ceil() as usize + 40).max(40);
    n_max += n_max % 2;
    let j = bessel_j_seq(n_max, x);
    let mut s = j[0] * j[0] / hg2;
    for k in 1..=n_max / 2 {
        let w = 2.0 * k as f64 * p.omega_t;
        let term = 2.0 * j[2 * k] * j[2 * k] / (hg2 + w * w);
        s += term;
        if (2 * k) as f64 > x && term < 1e-14 * s {
            break;
        }
    }
    0.25 * p.rabi * p.rabi * s
}

/// Exponential-approximation mean waiting time, 1/(γ⟨β²⟩_dc).
pub fn mean_wait_approx(a: f64, p: &PhysParams) -> f64 {
    1.0 / (p.gamma() * beta_sq_dc(a, p))
}

/// One row of meanwait.csv. Missing estimates are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanWaitRow {
    pub a: f64,
    pub tau_exact: f64,
    pub tau_approx: f64,
    pub tau_quantum: f64,
    pub eta: f64,
}

pub fn write_meanwait_csv(path: &Path, rows: &[MeanWaitRow]) -> Result<()> {
    csvio::write_table_file(
        path,
        None,
        &["a", "tau_exact", "tau_approx", "tau_quantum", "eta"],
        rows.iter()
            .map(|r| vec![r.a, r.tau_exact, r.tau_approx, r.tau_quantum, r.eta]),
    )
}

/// Local maxima of a sampled curve, refined by a parabola through each
/// maximum and its neighbours.
pub fn local_maxima(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] {
            let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
            let h = x[i + 1] - x[i];
            let d = y0 - 2.0 * y1 + y2;
            let off = if d != 0.0 { 0.5 * h * (y0 - y2) / d } else { 0.0 };
            out.push((x[i] + off, y1 - 0.25 * (y0 - y2) * off / h));
        }
    }
    out
}

/// Local minima, same refinement as `local_maxima`.
pub fn local_minima(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    local_maxima(x, &neg).into_iter().map(|(a, v)| (a, -v)).collect()
}
