//! First-jump statistics from full quantum trajectories.
//!
//! Two estimators of the mean time to the first jump from a prepared state:
//! `FirstJump` samples jump times directly; `Survival` integrates the no-jump
//! probability ‖ψ(τ)‖² of the deterministic unnormalized evolution, which is
//! the exact conditional mean for each sampled phase.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::ensemble::stream::tag;
use crate::ensemble::{map_indexed, split_stream, Execution};
use crate::fock::{build_trig_tables, coherent_state, matrix_element_2n, FockPair, QuantumEngine, TrigTables};
use crate::{Error, NumericalControls, PhysParams, Result, C64};

use super::MAX_WAIT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WaitEstimator {
    FirstJump,
    Survival,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumWaitOptions {
    pub estimator: WaitEstimator,
    pub execution: Execution,
    /// Give up on a single wait after this many lifetimes.
    pub max_time: f64,
}

impl Default for QuantumWaitOptions {
    fn default() -> Self {
        Self {
            estimator: WaitEstimator::Survival,
            execution: Execution::default(),
            max_time: MAX_WAIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaitEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl WaitEstimate {
    fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n).sqrt(),
            n: v.len(),
        }
    }
}

/// Geometric tail estimate, relative to the running integral, below which the
/// survival integral stops even if the decay ratio is still drifting.
const TAIL_REL: f64 = 1e-6;

/// ∫‖ψ(τ)‖² dτ for the no-jump evolution of `eng`, by the trapezoid rule.
///
/// Once the decay per trap period has settled to a constant ratio, or the
/// geometric estimate of what remains is negligible, the remaining periods are
/// summed as a geometric series.
fn survival_integral(eng: &mut QuantumEngine, max_time: f64) -> Result<f64> {
    let period_steps = (eng.p.trap_period() / eng.dt).round().max(1.0) as u64;
    let dt = eng.dt;
    let mut s_prev = eng.survival();
    let mut total = 0.0;
    let mut this_period = 0.0;
    let mut last_period: Option<f64> = None;
    let mut last_ratio: Option<f64> = None;
    let mut settled = 0;
    loop {
        eng.coherent()?;
        let s = eng.survival();
        let inc = 0.5 * dt * (s_prev + s);
        total += inc;
        this_period += inc;
        s_prev = s;
        if s < super::B2_STOP {
            return Ok(total);
        }
        if eng.t() > max_time {
            return Err(Error::NonConvergence(format!(
                "no-jump probability {s:.3e} after {max_time} lifetimes"
            )));
        }
        if eng.step.is_multiple_of(period_steps) {
            if let Some(prev) = last_period {
                let r = this_period / prev;
                let tail = this_period * r / (1.0 - r);
                match last_ratio {
                    Some(q) if r < 1.0 && ((r - q).abs() < 1e-7 || tail < TAIL_REL * total) => settled += 1,
                    _ => settled = 0,
                }
                if settled >= 3 {
                    return Ok(total + tail);
                }
                last_ratio = Some(r);
            }
            last_period = Some(this_period);
            this_period = 0.0;
        }
    }
}

fn first_jump_time<R: Rng + ?Sized>(eng: &mut QuantumEngine, rng: &mut R, max_time: f64) -> Result<f64> {
    loop {
        if eng.advance(rng)?.is_some() {
            return Ok(eng.t());
        }
        if eng.t() > max_time {
            return Err(Error::NonConvergence(format!("no jump within {max_time} lifetimes")));
        }
    }
}

/// Mean time to the first jump from |g⟩ ⊗ `psi0`, one value per sample.
fn estimate<F>(
    p: &PhysParams,
    c: &NumericalControls,
    tables: &Arc<TrigTables>,
    n_samples: usize,
    seed: u64,
    opts: &QuantumWaitOptions,
    prepare: F,
) -> Result<WaitEstimate>
where
    F: Fn(usize, &mut crate::ensemble::Stream) -> Result<FockPair> + Sync + Send,
{
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    let vals = map_indexed(n_samples, opts.execution, |i| -> Result<f64> {
        let mut rng = split_stream(seed, tag::WAITING + i as u64);
        let pair = prepare(i, &mut rng)?;
        let mut eng = QuantumEngine::with_state(*p, c, tables.clone(), pair)?;
        match opts.estimator {
            WaitEstimator::Survival => survival_integral(&mut eng, opts.max_time),
            WaitEstimator::FirstJump => first_jump_time(&mut eng, &mut rng, opts.max_time),
        }
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(WaitEstimate::from_values(&vals))
}

/// Mean first-jump time for a coherent centre-of-mass state of amplitude `a`
/// (|α̃| = πa/η) with phase drawn uniformly. The survival estimator uses
/// stratified phases, one per stratum.
pub fn mean_wait_quantum_with(
    a: f64,
    p: &PhysParams,
    c: &NumericalControls,
    tables: &Arc<TrigTables>,
    n_samples: usize,
    seed: u64,
    opts: &QuantumWaitOptions,
) -> Result<WaitEstimate> {
    if !(a >= 0.0) {
        return Err(Error::invalid(format!("amplitude must be >= 0, got {a}")));
    }
    let radius = p.alpha_for_amplitude(a);
    let n_max = c.n_max;
    let stratified = opts.estimator == WaitEstimator::Survival;
    estimate(p, c, tables, n_samples, seed, opts, move |i, rng| {
        let u: f64 = rng.random();
        let zeta = if stratified {
            TAU * (i as f64 + u) / n_samples as f64
        } else {
            TAU * u
        };
        // zeta = ω t − arg α̃ at t = 0.
        Ok(FockPair::ground(n_max, C64::from_polar(radius, -zeta)))
    })
}

pub fn mean_wait_quantum<R: Rng + ?Sized>(
    a: f64,
    eta: f64,
    p: &PhysParams,
    c: &NumericalControls,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let p = p.with_eta(eta)?;
    let tables = Arc::new(build_trig_tables(eta, c.n_max)?);
    let seed = rng.random();
    Ok(mean_wait_quantum_with(a, &p, c, &tables, n_samples, seed, &QuantumWaitOptions::default())?.mean)
}

/// Same as `mean_wait_quantum_with` but starting from an arbitrary local ket,
/// given for ζ = 0 and rotated with the sampled phase, at frame offset
/// πa/η e^{−iζ}.
pub fn mean_wait_quantum_from(
    a: f64,
    local: &[C64],
    p: &PhysParams,
    c: &NumericalControls,
    tables: &Arc<TrigTables>,
    n_samples: usize,
    seed: u64,
    opts: &QuantumWaitOptions,
) -> Result<WaitEstimate> {
    if local.len() != c.n_max {
        return Err(Error::invalid("initial ket length differs from n_max"));
    }
    let radius = p.alpha_for_amplitude(a);
    estimate(p, c, tables, n_samples, seed, opts, |i, rng| {
        let u: f64 = rng.random();
        let zeta = TAU * (i as f64 + u) / n_samples as f64;
        let ket = local
            .iter()
            .enumerate()
            .map(|(n, z)| z * C64::cis(-(n as f64) * zeta))
            .collect();
        Ok(FockPair::from_local(ket, C64::from_polar(radius, -zeta), 0.0))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstJumpPoint {
    pub eta: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Mean predicted by `perturbative_first_jump_rate`.
    pub perturbative: f64,
}

/// Mean first-jump time from the trap ground state for each η.
pub fn first_jump_mean_vs_eta_with(
    eta_grid: &[f64],
    p: &PhysParams,
    c: &NumericalControls,
    n_samples: usize,
    seed: u64,
    opts: &QuantumWaitOptions,
) -> Result<Vec<FirstJumpPoint>> {
    eta_grid
        .iter()
        .enumerate()
        .map(|(k, &eta)| {
            let pe = p.with_eta(eta)?;
            let tables = Arc::new(build_trig_tables(eta, c.n_max)?);
            // The survival integral is deterministic here: one sample suffices.
            let n = match opts.estimator {
                WaitEstimator::Survival => 1,
                WaitEstimator::FirstJump => n_samples,
            };
            let n_max = c.n_max;
            let stream_seed = seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let e = estimate(&pe, c, &tables, n, stream_seed, opts, move |_, _| {
                Ok(FockPair::ground(n_max, C64::new(0.0, 0.0)))
            })
            .map_err(|e| Error::NonConvergence(format!("eta={eta}: {e}")))?;
            Ok(FirstJumpPoint {
                eta,
                mean: e.mean,
                stderr: e.stderr,
                n: e.n,
                perturbative: 1.0 / perturbative_first_jump_rate(eta, p),
            })
        })
        .collect()
}

pub fn first_jump_mean_vs_eta<R: Rng + ?Sized>(
    eta_grid: &[f64],
    p: &PhysParams,
    c: &NumericalControls,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<FirstJumpPoint>> {
    let seed = rng.random();
    first_jump_mean_vs_eta_with(eta_grid, p, c, n_samples, seed, &QuantumWaitOptions::default())
}

/// Scattering rate from the trap ground state treating each sideband |0⟩ → |2n⟩
/// as an independent two-level transition with Rabi frequency Ω|⟨2n|cos X|0⟩|
/// and detuning 2nω_T (steady-state excited population times γ).
pub fn perturbative_first_jump_rate(eta: f64, p: &PhysParams) -> f64 {
    let g = p.gamma();
    let mut rate = 0.0;
    for n in 0..200u32 {
        let om = p.rabi * matrix_element_2n(eta, n).abs();
        let det = 2.0 * f64::from(n) * p.omega_t;
        let term = g * 0.25 * om * om / (det * det + 0.25 * g * g + 0.5 * om * om);
        rate += term;
        if f64::from(n) > eta * eta && term < 1e-16 * rate {
            break;
        }
    }
    rate
}

/// Amplitude-squeezed initial ket: squeezed vacuum with the small-variance
/// quadrature along the real (radial, at ζ = 0) axis, `db` in decibels.
pub fn squeezed_vacuum(db: f64, n_max: usize) -> Vec<C64> {
    let r = db * std::f64::consts::LN_10 / 20.0;
    let t = r.tanh();
    let mut v = vec![C64::new(0.0, 0.0); n_max];
    let mut c = 1.0 / r.cosh().sqrt();
    for m in 0..n_max.div_ceil(2) {
        v[2 * m] = C64::new(c, 0.0);
        let mf = m as f64;
        c *= -t * ((2.0 * mf + 1.0) * (2.0 * mf + 2.0)).sqrt() / (2.0 * (mf + 1.0));
    }
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= n);
    v
}

/// Coherent local ket |β⟩, exposed for sensitivity comparisons against
/// `squeezed_vacuum`.
pub fn coherent_local(beta: C64, n_max: usize) -> Result<Vec<C64>> {
    coherent_state(beta, n_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::quadrature_variances;

    fn controls(n_max: usize) -> NumericalControls {
        NumericalControls {
            n_max,
            ..Default::default()
        }
    }

    #[test]
    fn small_eta_ground_wait_is_two_level_value() {
        let p = PhysParams::new(1e-4, 1.0, 2.0).unwrap();
        let c = controls(16);
        let tables = Arc::new(build_trig_tables(p.eta, 16).unwrap());
        let e = mean_wait_quantum_with(0.0, &p, &c, &tables, 1, 1, &QuantumWaitOptions::default()).unwrap();
        assert!((e.mean - 2.25).abs() < 2e-3, "{}", e.mean);
    }

    #[test]
    fn first_jump_sampling_agrees_with_survival() {
        let p = PhysParams::new(0.3, 1.0, 2.0).unwrap();
        let c = controls(32);
        let tables = Arc::new(build_trig_tables(p.eta, 32).unwrap());
        let surv = mean_wait_quantum_with(0.0, &p, &c, &tables, 1, 5, &QuantumWaitOptions::default()).unwrap();
        let opts = QuantumWaitOptions {
            estimator: WaitEstimator::FirstJump,
            ..Default::default()
        };
        let fj = mean_wait_quantum_with(0.0, &p, &c, &tables, 3000, 5, &opts).unwrap();
        assert!(
            (fj.mean - surv.mean).abs() < 3.5 * fj.stderr,
            "{} vs {} ± {}",
            surv.mean,
            fj.mean,
            fj.stderr
        );
    }

    #[test]
    fn geometric_tail_matches_full_integration() {
        let p = PhysParams::new(0.2, 1.0, 2.0).unwrap();
        let c = controls(160);
        let tables = Arc::new(build_trig_tables(p.eta, 160).unwrap());
        let alpha = C64::from_polar(p.alpha_for_amplitude(0.6), -0.4);
        let mk = || QuantumEngine::with_state(p, &c, tables.clone(), FockPair::ground(160, alpha)).unwrap();
        let fast = survival_integral(&mut mk(), MAX_WAIT).unwrap();
        // Brute force down to 1e-10 without extrapolation.
        let mut eng = mk();
        let mut s_prev = eng.survival();
        let mut total = 0.0;
        while s_prev > 1e-10 {
            eng.coherent().unwrap();
            let s = eng.survival();
            total += 0.5 * eng.dt * (s + s_prev);
            s_prev = s;
        }
        assert!(((fast - total) / total).abs() < 1e-6, "{fast} vs {total}");
    }

    #[test]
    fn perturbative_rate_collapses_at_large_eta() {
        let p = PhysParams::default();
        let r0 = perturbative_first_jump_rate(1e-9, &p);
        // Resonant two-level value γ(Ω²/4)/(γ²/4 + Ω²/2).
        assert!((r0 - 1.0 / 2.25).abs() < 1e-12);
        let r05 = perturbative_first_jump_rate(0.5, &p);
        let r3 = perturbative_first_jump_rate(3.0, &p);
        assert!(r05 / r3 > 10.0, "{}", r05 / r3);
        let mut prev = perturbative_first_jump_rate(1.5, &p);
        for k in 1..=6 {
            let r = perturbative_first_jump_rate(1.5 + 0.25 * k as f64, &p);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn squeezed_vacuum_is_amplitude_squeezed() {
        let v = squeezed_vacuum(3.0, 64);
        let s = FockPair::from_local(v, C64::new(5.0, 0.0), 0.0);
        let (u, w) = quadrature_variances(&s).unwrap();
        let want = 0.25 * 10f64.powf(-0.3);
        assert!((u - want).abs() < 1e-6, "{u} vs {want}");
        assert!(w > 0.25);
    }
}
