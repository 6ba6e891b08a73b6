//! Amplitude-dependent phase-space diffusion: per-jump kick covariances
//! measured from pinned trajectories, and the diffusion-limit SDE that
//! replaces individual jumps by Wiener increments.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::ensemble::exec::{map_indexed, Execution};
use crate::ensemble::stream::{split_stream, tag};
use crate::fock::{amplitude_global, build_trig_tables, QuantumEngine};
use crate::phasespace::{self, resolve_kick};
use crate::record::{Sample, TrajectoryRecord};
use crate::semiquantum::SemiEngine;
use crate::{csvio, Error, NumericalControls, PhysParams, Result, C64};

/// One jump seen from the pinned amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KickSample {
    /// Change of the amplitude along the pre-jump direction of alpha~.
    pub delta_par: f64,
    /// Change across it.
    pub delta_perp: f64,
    /// Pre-jump amplitude in wavelengths.
    pub a: f64,
    /// Time since the previous jump.
    pub wait: f64,
}

/// Per-node kick second moments, mean waits and their Cholesky factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCurve {
    pub eta: f64,
    pub a_grid: Vec<f64>,
    pub c11: Vec<f64>,
    pub c12: Vec<f64>,
    pub c22: Vec<f64>,
    pub tau_bar: Vec<f64>,
    pub n: Vec<u64>,
    /// Standard errors of c11, c12, c22 (zero when read back from CSV).
    #[serde(default)]
    pub se: Vec<[f64; 3]>,
    /// Lower-triangular factors (b11, b21, b22) per node.
    factors: Vec<[f64; 3]>,
}

/// Cholesky factor of a 2×2 symmetric matrix, returned as [b11, b21, b22].
///
/// Pivots that round to zero or slightly below it are clamped to zero.
/// Matrices with an eigenvalue below -1e-12 are rejected.
pub fn factor_covariance(c: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let (a, b, d) = (c[0][0], 0.5 * (c[0][1] + c[1][0]), c[1][1]);
    let min_eig = 0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt();
    if min_eig < -1e-12 {
        return Err(Error::Indefinite { min_eig });
    }
    let l11 = a.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
    let l22 = (d - l21 * l21).max(0.0).sqrt();
    Ok([[l11, 0.0], [l21, l22]])
}

impl CovarianceCurve {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        eta: f64,
        a_grid: Vec<f64>,
        c11: Vec<f64>,
        c12: Vec<f64>,
        c22: Vec<f64>,
        tau_bar: Vec<f64>,
        n: Vec<u64>,
    ) -> Result<Self> {
        let len = a_grid.len();
        if len < 2
            || [c11.len(), c12.len(), c22.len(), tau_bar.len(), n.len()]
                .iter()
                .any(|&l| l != len)
        {
            return Err(Error::invalid("covariance curve columns must have equal length >= 2"));
        }
        if a_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("covariance grid must be increasing"));
        }
        let factors = (0..len)
            .map(|i| {
                let l = factor_covariance([[c11[i], c12[i]], [c12[i], c22[i]]])?;
                Ok([l[0][0], l[1][0], l[1][1]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            eta,
            se: vec![[0.0; 3]; len],
            a_grid,
            c11,
            c12,
            c22,
            tau_bar,
            n,
            factors,
        })
    }

    /// Constant curve: same covariance and mean wait at every node.
    pub fn uniform(eta: f64, a_max: f64, c: [f64; 3], tau: f64) -> Result<Self> {
        let a_grid = vec![0.0, a_max];
        Self::new(
            eta,
            a_grid,
            vec![c[0]; 2],
            vec![c[1]; 2],
            vec![c[2]; 2],
            vec![tau; 2],
            vec![0; 2],
        )
    }

    pub fn a_range(&self) -> (f64, f64) {
        (self.a_grid[0], *self.a_grid.last().expect("non-empty"))
    }

    /// Linearly interpolated mean wait and Cholesky factor at amplitude `a`.
    pub fn interpolate(&self, a: f64) -> Result<(f64, [f64; 3])> {
        let (min, max) = self.a_range();
        if !(a >= min && a <= max) {
            return Err(Error::OutOfGrid { a, min, max });
        }
        let i = self.a_grid.partition_point(|&x| x <= a).clamp(1, self.a_grid.len() - 1);
        let (x0, x1) = (self.a_grid[i - 1], self.a_grid[i]);
        let w = (a - x0) / (x1 - x0);
        let lerp = |u: f64, v: f64| u + w * (v - u);
        let f0 = self.factors[i - 1];
        let f1 = self.factors[i];
        Ok((
            lerp(self.tau_bar[i - 1], self.tau_bar[i]),
            [lerp(f0[0], f1[0]), lerp(f0[1], f1[1]), lerp(f0[2], f1[2])],
        ))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.a_grid.len()).map(|i| {
            vec![
                self.a_grid[i],
                self.c11[i],
                self.c12[i],
                self.c22[i],
                self.tau_bar[i],
                self.n[i] as f64,
            ]
        });
        csvio::write_table_file(
            path,
            Some(&format!("eta={}", csvio::fmt(self.eta))),
            &["a", "c11", "c12", "c22", "tau_bar", "n"],
            rows,
        )
    }

    /// Reads `covariance.csv`; `eta` is taken from the comment line when present.
    pub fn read_csv(path: &Path, eta: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let from_file = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .flat_map(|l| l.split_whitespace())
            .find_map(|kv| kv.strip_prefix("eta=").and_then(|v| v.parse::<f64>().ok()));
        let eta = eta
            .or(from_file)
            .ok_or_else(|| Error::invalid("covariance file has no eta"))?;
        let (header, rows) = csvio::read_table(path)?;
        let col = |name: &str| -> Result<Vec<f64>> {
            let j = header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("missing column {name}")))?;
            Ok(rows.iter().map(|r| r[j]).collect())
        };
        Self::new(
            eta,
            col("a")?,
            col("c11")?,
            col("c12")?,
            col("c22")?,
            col("tau_bar")?,
            col("n")?.into_iter().map(|x| x as u64).collect(),
        )
    }
}

/// How the pinned estimators condition on amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinOptions {
    /// Jumps to collect per grid node, after burn-in.
    pub n_jumps: usize,
    /// Added to the initial phase of alpha~ at every node.
    pub phase_offset: f64,
    /// Re-pin when the amplitude drifts further than this from the node.
    pub tolerance: f64,
    pub execution: Execution,
}

impl PinOptions {
    pub fn new(n_jumps: usize, grid_step: f64) -> Self {
        Self {
            n_jumps,
            phase_offset: 0.0,
            tolerance: 0.5 * grid_step,
            execution: Execution::Parallel,
        }
    }
}

fn pin(alpha: C64, target_abs: f64) -> C64 {
    if alpha.norm_sqr() > 0.0 {
        alpha * (target_abs / alpha.norm())
    } else {
        C64::new(target_abs, 0.0)
    }
}

/// Semi-quantum kicks collected while holding the amplitude near `a`.
pub fn pinned_kicks_semi(
    a: f64,
    p: &PhysParams,
    c: &NumericalControls,
    opt: &PinOptions,
    stream: u64,
) -> Result<Vec<KickSample>> {
    let mut rng = split_stream(c.seed, tag::COVARIANCE + stream);
    let target = p.alpha_for_amplitude(a);
    let mut eng = SemiEngine::new(*p, c.dt, C64::from_polar(target, opt.phase_offset));
    let mut out = Vec::with_capacity(opt.n_jumps);
    let mut last_t = 0.0;
    let mut burn_in = true;
    while out.len() < opt.n_jumps {
        if let Some(ev) = eng.advance(&mut rng)? {
            let (par, perp) = resolve_kick(ev.increment, ev.alpha_pre);
            if !burn_in {
                out.push(KickSample {
                    delta_par: par,
                    delta_perp: perp,
                    a: p.eta / std::f64::consts::PI * ev.alpha_pre.norm(),
                    wait: ev.t - last_t,
                });
            }
            burn_in = false;
            last_t = ev.t;
            if (eng.amplitude() - a).abs() > opt.tolerance {
                eng.state.osc.alpha_tilde = pin(eng.state.osc.alpha_tilde, target);
            }
        }
    }
    Ok(out)
}

/// Quantum kicks, including the frame shift that removes the mean amplitude
/// picked up between jumps. With `ablate_dipole` only the recoil is kept.
#[allow(clippy::too_many_arguments)]
pub fn pinned_kicks_quantum(
    a: f64,
    p: &PhysParams,
    c: &NumericalControls,
    tables: &Arc<crate::fock::TrigTables>,
    opt: &PinOptions,
    ablate_dipole: bool,
    stream: u64,
) -> Result<Vec<KickSample>> {
    let mut rng = split_stream(c.seed, tag::COVARIANCE + stream);
    let target = p.alpha_for_amplitude(a);
    let mut eng = QuantumEngine::new(*p, c, tables.clone(), C64::from_polar(target, opt.phase_offset))?;
    let mut out = Vec::with_capacity(opt.n_jumps);
    let mut last_t = 0.0;
    let mut burn_in = true;
    while out.len() < opt.n_jumps {
        let rate = eng.coherent()?;
        if rng.random::<f64>() >= rate * eng.dt {
            continue;
        }
        let a_pre = amplitude_global(&eng.pair, p)?;
        let angles = phasespace::sample_recoil(&mut rng);
        let ev = eng.jump(angles)?;
        let (pre, t) = (ev.alpha_pre, ev.t);
        let delta = if ablate_dipole {
            phasespace::recoil_increment(&angles, t, p)
        } else {
            ev.increment
        };
        let (par, perp) = resolve_kick(delta, pre);
        if !burn_in {
            out.push(KickSample {
                delta_par: par,
                delta_perp: perp,
                a: a_pre,
                wait: t - last_t,
            });
        }
        burn_in = false;
        last_t = t;
        let a_now = p.eta / std::f64::consts::PI * eng.pair.frame_alpha.norm();
        if (a_now - a).abs() > opt.tolerance {
            eng.pair.frame_alpha = pin(eng.pair.frame_alpha, target);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
struct Bin {
    n: u64,
    s11: f64,
    s12: f64,
    s22: f64,
    q11: f64,
    q12: f64,
    q22: f64,
    wait: f64,
}

/// Bins kicks by nearest grid node and forms second moments and mean waits.
pub fn aggregate(eta: f64, a_grid: &[f64], samples: &[Vec<KickSample>]) -> Result<CovarianceCurve> {
    let mut bins = vec![Bin::default(); a_grid.len()];
    for s in samples.iter().flatten() {
        let i = a_grid.partition_point(|&x| x < s.a);
        let k = if i == 0 {
            0
        } else if i == a_grid.len() || (s.a - a_grid[i - 1]) <= (a_grid[i] - s.a) {
            i - 1
        } else {
            i
        };
        let b = &mut bins[k];
        let (x11, x12, x22) = (
            s.delta_par * s.delta_par,
            s.delta_par * s.delta_perp,
            s.delta_perp * s.delta_perp,
        );
        b.n += 1;
        b.s11 += x11;
        b.s12 += x12;
        b.s22 += x22;
        b.q11 += x11 * x11;
        b.q12 += x12 * x12;
        b.q22 += x22 * x22;
        b.wait += s.wait;
    }
    for (k, b) in bins.iter().enumerate() {
        if b.n < 100 {
            log::warn!("covariance node a={:.3} has only {} jumps", a_grid[k], b.n);
        }
    }
    let mean = |s: f64, n: u64| if n > 0 { s / n as f64 } else { 0.0 };
    let se = |s: f64, q: f64, n: u64| {
        if n > 1 {
            let m = s / n as f64;
            ((q / n as f64 - m * m).max(0.0) / (n - 1) as f64).sqrt()
        } else {
            0.0
        }
    };
    let mut curve = CovarianceCurve::new(
        eta,
        a_grid.to_vec(),
        bins.iter().map(|b| mean(b.s11, b.n)).collect(),
        bins.iter().map(|b| mean(b.s12, b.n)).collect(),
        bins.iter().map(|b| mean(b.s22, b.n)).collect(),
        bins.iter().map(|b| mean(b.wait, b.n)).collect(),
        bins.iter().map(|b| b.n).collect(),
    )?;
    curve.se = bins
        .iter()
        .map(|b| [se(b.s11, b.q11, b.n), se(b.s12, b.q12, b.n), se(b.s22, b.q22, b.n)])
        .collect();
    Ok(curve)
}

pub fn estimate_covariance_semi(
    a_grid: &[f64],
    p: &PhysParams,
    c: &NumericalControls,
    opt: &PinOptions,
) -> Result<CovarianceCurve> {
    if opt.n_jumps < 100 {
        log::warn!("only {} jumps per node requested", opt.n_jumps);
    }
    let samples = map_indexed(a_grid.len(), opt.execution, |k| {
        pinned_kicks_semi(a_grid[k], p, c, opt, k as u64)
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    aggregate(p.eta, a_grid, &samples)
}

pub fn estimate_covariance_quantum(
    a_grid: &[f64],
    p: &PhysParams,
    c: &NumericalControls,
    opt: &PinOptions,
    ablate_dipole: bool,
) -> Result<CovarianceCurve> {
    if opt.n_jumps < 100 {
        log::warn!("only {} jumps per node requested", opt.n_jumps);
    }
    let tables = Arc::new(build_trig_tables(p.eta, c.n_max)?);
    let samples = map_indexed(a_grid.len(), opt.execution, |k| {
        pinned_kicks_quantum(a_grid[k], p, c, &tables, opt, ablate_dipole, k as u64)
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    aggregate(p.eta, a_grid, &samples)
}

/// One Euler–Maruyama step of the diffusion-limit equation.
pub fn sde_step<R: Rng + ?Sized>(alpha: C64, dt: f64, curve: &CovarianceCurve, rng: &mut R) -> Result<C64> {
    let a = curve.eta / std::f64::consts::PI * alpha.norm();
    let (tau, b) = curve.interpolate(a)?;
    let s = (dt / tau).sqrt();
    let w1: f64 = rng.sample(StandardNormal);
    let w2: f64 = rng.sample(StandardNormal);
    let par = b[0] * w1 * s;
    let perp = (b[1] * w1 + b[2] * w2) * s;
    let dir = if alpha.norm_sqr() > 0.0 {
        alpha / alpha.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    Ok(alpha + dir * C64::new(par, perp))
}

/// SDE path with the same stepping interface as the trajectory engines.
#[derive(Debug, Clone)]
pub struct DiffusionEngine {
    pub p: PhysParams,
    pub curve: Arc<CovarianceCurve>,
    pub dt: f64,
    pub alpha: C64,
    pub step: u64,
}

impl PartialEq for DiffusionEngine {
    fn eq(&self, o: &Self) -> bool {
        self.p == o.p && self.dt == o.dt && self.alpha == o.alpha && self.step == o.step
    }
}

impl DiffusionEngine {
    pub fn new(p: PhysParams, curve: Arc<CovarianceCurve>, dt: f64, alpha0: C64) -> Self {
        Self {
            p,
            curve,
            dt,
            alpha: alpha0,
            step: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn sample(&self) -> Sample {
        Sample {
            t: self.t(),
            a: self.curve.eta / std::f64::consts::PI * self.alpha.norm(),
            p_excited: 0.0,
        }
    }

    pub fn run_to_step<R: Rng + ?Sized>(
        &mut self,
        target_step: u64,
        stride: u64,
        rng: &mut R,
        record: &mut TrajectoryRecord,
    ) -> Result<()> {
        let stride = stride.max(1);
        while self.step < target_step {
            self.alpha = sde_step(self.alpha, self.dt, &self.curve, rng).inspect_err(|_e| {
                log::debug!("diffusion path terminated at t = {}", self.t());
            })?;
            self.step += 1;
            if self.step.is_multiple_of(stride) {
                record.samples.push(self.sample());
            }
        }
        record.final_alpha = self.alpha;
        record.final_t = self.t();
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64(self.p.eta);
        w.f64(self.p.omega_t);
        w.f64(self.p.rabi);
        w.f64(self.dt);
        w.c64(self.alpha);
        w.u64(self.step);
    }

    pub fn decode(r: &mut Reader<'_>, curve: Arc<CovarianceCurve>) -> Result<Self> {
        let p = PhysParams {
            eta: r.f64()?,
            omega_t: r.f64()?,
            rabi: r.f64()?,
        };
        Ok(Self {
            p,
            curve,
            dt: r.f64()?,
            alpha: r.c64()?,
            step: r.u64()?,
        })
    }
}
