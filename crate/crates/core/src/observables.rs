//! Post-processing: amplitude for the quantum engine, ensemble heating curves,
//! Husimi Q functions and quadrature variances.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::csvio;
use crate::ensemble::{map_indexed, split_stream, Execution};
use crate::fock::{self, FockPair, QuantumEngine, TrigTables};
use crate::record::TrajectoryRecord;
use crate::{Error, NumericalControls, PhysParams, Result, C64};

/// Amplitude of oscillation of the reduced centre-of-mass state in wavelengths.
pub fn amplitude_a_quantum(s: &FockPair, p: &PhysParams) -> Result<f64> {
    fock::amplitude_global(s, p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatingCurve {
    pub t_grid: Vec<f64>,
    pub scaled_t: Vec<f64>,
    pub mean_a2: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj: usize,
}

impl HeatingCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_with(path, None)
    }

    /// Same as `write_csv` with a leading `# comment` line.
    pub fn write_csv_with(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let n = self.n_traj as f64;
        csvio::write_table_file(
            path,
            comment,
            &["t", "eta4_t", "mean_A2", "stderr", "n"],
            (0..self.t_grid.len()).map(|i| vec![self.t_grid[i], self.scaled_t[i], self.mean_a2[i], self.stderr[i], n]),
        )
    }
}

/// Mean and standard error of A² across trajectories on `t_grid`. Each
/// trajectory contributes its last sample at or before the grid time.
pub fn heating_curve(records: &[&TrajectoryRecord], p: &PhysParams, t_grid: &[f64]) -> Result<HeatingCurve> {
    if records.len() < 2 {
        return Err(Error::invalid(format!(
            "heating curve needs at least 2 trajectories, got {}",
            records.len()
        )));
    }
    let n = records.len() as f64;
    let mut mean_a2 = Vec::with_capacity(t_grid.len());
    let mut stderr = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for r in records {
            let a = r
                .amplitude_at(t + 1e-9)
                .ok_or_else(|| Error::invalid(format!("no sample at or before t = {t}")))?;
            let a2 = a * a;
            s1 += a2;
            s2 += a2 * a2;
        }
        let m = s1 / n;
        let var = ((s2 - n * m * m) / (n - 1.0)).max(0.0);
        mean_a2.push(m);
        stderr.push((var / n).sqrt());
    }
    let eta4 = p.eta.powi(4);
    Ok(HeatingCurve {
        t_grid: t_grid.to_vec(),
        scaled_t: t_grid.iter().map(|t| eta4 * t).collect(),
        mean_a2,
        stderr,
        n_traj: records.len(),
    })
}

/// Square grid in the global phase-space plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub center: C64,
    /// Half-width of the square.
    pub extent: f64,
    /// Points per side.
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(center: C64, extent: f64, resolution: usize) -> Result<Self> {
        if !(extent > 0.0) || resolution < 2 {
            return Err(Error::invalid("grid needs extent > 0 and resolution >= 2"));
        }
        Ok(Self {
            center,
            extent,
            resolution,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.resolution - 1) as f64
    }

    pub fn point(&self, i_re: usize, i_im: usize) -> C64 {
        let h = self.spacing();
        self.center + C64::new(-self.extent + i_re as f64 * h, -self.extent + i_im as f64 * h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QGrid {
    pub spec: GridSpec,
    /// Row-major, rows indexed by the imaginary part.
    pub values: Vec<f64>,
}

impl QGrid {
    pub fn get(&self, i_re: usize, i_im: usize) -> f64 {
        self.values[i_im * self.spec.resolution + i_re]
    }

    pub fn normalization(&self) -> f64 {
        let h = self.spec.spacing();
        self.values.iter().sum::<f64>() * h * h
    }

    pub fn boundary_max(&self) -> f64 {
        let n = self.spec.resolution;
        let mut m: f64 = 0.0;
        for i in 0..n {
            m = m
                .max(self.get(i, 0))
                .max(self.get(i, n - 1))
                .max(self.get(0, i))
                .max(self.get(n - 1, i));
        }
        m
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.spec.resolution;
        csvio::write_table_file(
            path,
            None,
            &["re_beta", "im_beta", "q"],
            (0..n * n).map(|k| {
                let (i, j) = (k % n, k / n);
                let b = self.spec.point(i, j);
                vec![b.re, b.im, self.values[k]]
            }),
        )
    }
}

/// ⟨beta|v⟩ e^{|beta|²/2} for a local-frame ket, by Horner accumulation.
fn overlap_unscaled(v: &[C64], beta: C64) -> C64 {
    let x = beta.conj();
    let mut acc = C64::new(0.0, 0.0);
    for n in (0..v.len()).rev() {
        acc = v[n] + acc * x / ((n + 1) as f64).sqrt();
    }
    acc
}

/// Husimi function of the normalized reduced centre-of-mass state.
pub fn q_function(s: &FockPair, spec: &GridSpec) -> Result<QGrid> {
    let norm = s.norm_sqr();
    if !(norm > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let n = spec.resolution;
    let values = map_indexed(n * n, Execution::default(), |k| {
        let beta = spec.point(k % n, k / n) - s.frame_alpha;
        let w = (-beta.norm_sqr()).exp();
        let q = overlap_unscaled(&s.psi_minus, beta).norm_sqr() + overlap_unscaled(&s.psi_plus, beta).norm_sqr();
        w * q / (PI * norm)
    });
    let g = QGrid { spec: *spec, values };
    let b = g.boundary_max();
    if b > 1e-6 {
        log::warn!("Q grid too small: boundary value {b:.3e}");
    }
    Ok(g)
}

/// Variances of X_u = (a e^{-iu} + a† e^{iu})/2 along the mean amplitude
/// direction and the orthogonal (phase) direction. Vacuum gives 1/4.
pub fn quadrature_variances(s: &FockPair) -> Result<(f64, f64)> {
    let m = fock::local_moments(s)?;
    let mean = s.frame_alpha + m.a;
    if mean.norm() < 1e-12 {
        return Err(Error::UndefinedDirection);
    }
    let u = mean.arg();
    // Variances are displacement invariant, so local moments suffice.
    let var = |u: f64| {
        let e = C64::from_polar(1.0, -u);
        (2.0 * (m.aa * e * e).re + 2.0 * m.ada + 1.0) / 4.0 - (m.a * e).re.powi(2)
    };
    Ok((var(u), var(u + PI / 2.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SqueezeBin {
    pub a: f64,
    pub amp_var: f64,
    pub phase_var: f64,
    pub n: usize,
}

/// Options for the conditional-variance scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeOptions {
    pub n_traj: usize,
    pub t_final: f64,
    /// Steps between variance samples.
    pub sample_every: u64,
    pub alpha0: C64,
    pub execution: Execution,
}

/// Runs quantum trajectories, samples both quadrature variances uniformly in
/// time and averages them in amplitude bins centred on `a_centers` with
/// half-width `half_width`.
pub fn squeeze_scan(
    p: &PhysParams,
    c: &NumericalControls,
    tables: Arc<TrigTables>,
    opt: &SqueezeOptions,
    a_centers: &[f64],
    half_width: f64,
) -> Result<Vec<SqueezeBin>> {
    let n_steps = (opt.t_final / c.dt).round() as u64;
    let every = opt.sample_every.max(1);
    let per_traj = map_indexed(opt.n_traj, opt.execution, |i| -> Result<Vec<(f64, f64, f64)>> {
        let mut rng = split_stream(c.seed, crate::ensemble::stream::tag::SQUEEZE + i as u64);
        let mut eng = QuantumEngine::new(*p, c, tables.clone(), opt.alpha0)?;
        let mut out = Vec::new();
        while eng.step < n_steps {
            eng.advance(&mut rng)?;
            if eng.step % every == 0 {
                let a = fock::amplitude_global(&eng.pair, p)?;
                if let Ok((u, v)) = quadrature_variances(&eng.pair) {
                    out.push((a, u, v));
                }
            }
        }
        Ok(out)
    });
    let mut sums = vec![(0.0, 0.0, 0usize); a_centers.len()];
    for r in per_traj {
        for (a, u, v) in r? {
            for (k, &ac) in a_centers.iter().enumerate() {
                if (a - ac).abs() <= half_width {
                    sums[k].0 += u;
                    sums[k].1 += v;
                    sums[k].2 += 1;
                }
            }
        }
    }
    Ok(a_centers
        .iter()
        .zip(sums)
        .map(|(&a, (u, v, n))| {
            let d = n.max(1) as f64;
            SqueezeBin {
                a,
                amp_var: if n > 0 { u / d } else { f64::NAN },
                phase_var: if n > 0 { v / d } else { f64::NAN },
                n,
            }
        })
        .collect())
}

pub fn write_squeeze_csv(path: &Path, bins: &[SqueezeBin]) -> Result<()> {
    csvio::write_table_file(
        path,
        None,
        &["a", "amp_var", "phase_var", "n"],
        bins.iter().map(|b| vec![b.a, b.amp_var, b.phase_var, b.n as f64]),
    )
}
