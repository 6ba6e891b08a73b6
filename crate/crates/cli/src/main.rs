//! `ionheat`: command-line front end. Each subcommand writes its outputs and
//! prints a one-line JSON run manifest to standard output.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ionheat_core::diffusion::{estimate_covariance_quantum, estimate_covariance_semi, CovarianceCurve, PinOptions};
use ionheat_core::ensemble::{
    resume_ensemble, run_ensemble, split_stream, stream::tag, with_workers, Checkpoint, EnsembleSpec, Execution,
    RunOptions,
};
use ionheat_core::fock::{self, build_trig_tables, matrix_element_2n, QuantumEngine};
use ionheat_core::observables::{self, heating_curve, q_function, squeeze_scan, GridSpec, SqueezeOptions};
use ionheat_core::params::{regime_report, AmplitudeGrid, Config};
use ionheat_core::record::Model;
use ionheat_core::waiting::{
    self, first_jump_mean_vs_eta_with, mean_wait_approx, mean_wait_curve, mean_wait_quantum_with, write_meanwait_csv,
    MeanWaitRow, QuantumWaitOptions, WaitEstimator,
};
use ionheat_core::{semiquantum, NumericalControls, PhysParams, C64};

#[derive(Parser, Debug)]
#[command(
    name = "ionheat",
    version,
    about = "Stochastic heating of a trapped ion in a resonant standing wave"
)]
#[command(
    after_help = "Units: times in atomic lifetimes, frequencies in units of the decay rate, \
amplitudes of oscillation in optical wavelengths.\n\
Environment: IONHEAT_WORKERS caps the worker pool; RUST_LOG sets the log level."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ensemble heating curve. CSV columns: t, eta4_t, mean_A2, stderr, n.
    Heat(HeatArgs),
    /// One trajectory: jumps as JSON lines {t, theta, phi, re_alpha, im_alpha}
    /// and samples as CSV (t, A, p_excited).
    Traj(TrajArgs),
    /// Semi-quantum waiting-time density. CSV columns: tau, w.
    Wtd(WtdArgs),
    /// Mean waiting time against amplitude. CSV columns: a, tau_exact,
    /// tau_approx, tau_quantum, eta.
    Meanwait(MeanwaitArgs),
    /// Per-jump kick covariances on the amplitude grid. CSV columns: a, c11,
    /// c12, c22, tau_bar, n.
    Cov(CovArgs),
    /// Diffusion-limit SDE ensemble from a covariance table. CSV columns: t,
    /// eta4_t, mean_A2, stderr, n.
    Diffuse(DiffuseArgs),
    /// Husimi Q function of a quantum trajectory state. CSV columns: re_beta,
    /// im_beta, q.
    Qfunc(QfuncArgs),
    /// Conditional quadrature variances binned by amplitude. CSV columns: a,
    /// amp_var, phase_var, n.
    Squeeze(SqueezeArgs),
    /// Ground-state matrix elements <2n|cos X|0>. CSV columns: n, element,
    /// element_sq.
    Matelem(MatelemArgs),
    /// Mean first-jump time from the trap ground state against eta. CSV
    /// columns: eta, mean, stderr, n, perturbative.
    Firstjump(FirstjumpArgs),
    /// Regime diagnostics for the configured parameters (JSON).
    Regime(RegimeArgs),
}

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON config with keys eta, omega_t, rabi, dt, n_max, tail_tol, seed, a_grid.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Lamb-Dicke parameter (dimensionless) [default: 0.2].
    #[arg(long)]
    eta: Option<f64>,
    /// Trap frequency in units of the decay rate [default: 1].
    #[arg(long)]
    omega_t: Option<f64>,
    /// Rabi frequency in units of the decay rate [default: 2].
    #[arg(long)]
    rabi: Option<f64>,
    /// Integration step in lifetimes [default: 0.001].
    #[arg(long)]
    dt: Option<f64>,
    /// Fock-basis dimension [default: 512].
    #[arg(long)]
    n_max: Option<usize>,
    /// Largest population allowed in the top 5% of the Fock basis [default: 1e-8].
    #[arg(long)]
    tail_tol: Option<f64>,
    /// Master seed (decimal or 0x-prefixed hex) [default: 0x5eed1e57].
    #[arg(long, value_parser = parse_seed)]
    seed: Option<u64>,
    /// Smallest grid amplitude in wavelengths [default: 0].
    #[arg(long)]
    a_min: Option<f64>,
    /// Largest grid amplitude in wavelengths [default: 3].
    #[arg(long)]
    a_max: Option<f64>,
    /// Grid step in wavelengths [default: 0.01].
    #[arg(long)]
    a_step: Option<f64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, env = "IONHEAT_WORKERS")]
    workers: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ModelArg {
    Semi,
    Quantum,
    Diffusion,
}

impl ModelArg {
    fn model(self) -> Model {
        match self {
            ModelArg::Semi => Model::Semi,
            ModelArg::Quantum => Model::Quantum,
            ModelArg::Diffusion => Model::Diffusion,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum EstimatorArg {
    Survival,
    FirstJump,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct HeatArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "semi")]
    model: ModelArg,
    /// Number of trajectories.
    #[arg(long, default_value_t = 64)]
    n_traj: usize,
    /// Run length in lifetimes.
    #[arg(long, default_value_t = 1e4)]
    t_final: f64,
    /// Initial amplitude of oscillation in wavelengths.
    #[arg(long, default_value_t = 0.0)]
    a0: f64,
    /// Steps between recorded samples.
    #[arg(long, default_value_t = 1000)]
    stride: u64,
    /// Output times, evenly spaced over (0, t_final].
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Covariance table for the diffusion model (from `cov`).
    #[arg(long, value_name = "FILE")]
    cov: Option<PathBuf>,
    /// SDE step in lifetimes (diffusion model).
    #[arg(long, default_value_t = 1.0)]
    sde_dt: f64,
    /// Checkpoint file, rewritten every --checkpoint-every seconds of wall time.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Seconds of wall time between checkpoints.
    #[arg(long, default_value_t = 300.0)]
    checkpoint_every: f64,
    /// Continue from --checkpoint instead of starting over.
    #[arg(long, requires = "checkpoint")]
    resume: bool,
    /// Output path.
    #[arg(long, default_value = "heating.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct TrajArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "semi")]
    model: ModelArg,
    /// Run length in lifetimes.
    #[arg(long, default_value_t = 1e3)]
    t_final: f64,
    /// Initial amplitude in wavelengths.
    #[arg(long, default_value_t = 0.0)]
    a0: f64,
    /// Steps between recorded samples.
    #[arg(long, default_value_t = 100)]
    stride: u64,
    /// Trajectory index; selects the random stream used by `heat`.
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, default_value = "jumps.jsonl")]
    out_jumps: PathBuf,
    #[arg(long, default_value = "samples.csv")]
    out_samples: PathBuf,
    /// Binary dump of the final normalized state (quantum model).
    #[arg(long, value_name = "FILE")]
    dump_state: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct WtdArgs {
    #[command(flatten)]
    common: Common,
    /// Amplitude in wavelengths.
    #[arg(long)]
    a: f64,
    /// Oscillation phase in radians; omitted means an average over phases.
    #[arg(long)]
    zeta: Option<f64>,
    /// Largest delay in lifetimes.
    #[arg(long, default_value_t = 50.0)]
    tau_max: f64,
    /// Phases in the average.
    #[arg(long, default_value_t = waiting::N_ZETA)]
    n_zeta: usize,
    /// Output path.
    #[arg(long, default_value = "wtd.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct MeanwaitArgs {
    #[command(flatten)]
    common: Common,
    /// `semi` gives the exact and approximate curves, `quantum` adds the
    /// quantum estimate.
    #[arg(long, value_enum, default_value = "semi")]
    model: ModelArg,
    /// Phases in the average.
    #[arg(long, default_value_t = waiting::N_ZETA)]
    n_zeta: usize,
    /// Phase samples per amplitude for the quantum estimate.
    #[arg(long, default_value_t = 32)]
    samples: usize,
    /// Output path.
    #[arg(long, default_value = "meanwait.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct CovArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "semi")]
    model: ModelArg,
    /// Jumps per grid node.
    #[arg(long, default_value_t = 10_000)]
    jumps: usize,
    /// Quantum model only: keep the recoil, drop the inter-jump drift.
    #[arg(long)]
    ablate_dipole: bool,
    /// Output path.
    #[arg(long, default_value = "covariance.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct DiffuseArgs {
    #[command(flatten)]
    common: Common,
    /// Covariance table from `cov`.
    #[arg(long, value_name = "FILE")]
    cov: PathBuf,
    #[arg(long, default_value_t = 1024)]
    n_traj: usize,
    /// Run length in lifetimes.
    #[arg(long, default_value_t = 1e4)]
    t_final: f64,
    /// SDE step in lifetimes.
    #[arg(long, default_value_t = 1.0)]
    sde_dt: f64,
    /// Initial amplitude in wavelengths.
    #[arg(long, default_value_t = 0.0)]
    a0: f64,
    /// Output times, evenly spaced over (0, t_final].
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Output path.
    #[arg(long, default_value = "diffusion_curve.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct QfuncArgs {
    #[command(flatten)]
    common: Common,
    /// State dump written by `traj --dump-state`; otherwise a quantum
    /// trajectory is run to --t.
    #[arg(long, value_name = "FILE")]
    state: Option<PathBuf>,
    /// Time in lifetimes at which to take the state.
    #[arg(long, default_value_t = 100.0)]
    t: f64,
    /// Initial amplitude in wavelengths.
    #[arg(long, default_value_t = 0.0)]
    a0: f64,
    /// Trajectory index (random stream).
    #[arg(long, default_value_t = 0)]
    index: u64,
    /// Half-width of the square beta grid (local-frame units).
    #[arg(long, default_value_t = 4.0)]
    extent: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 81)]
    resolution: usize,
    /// Output path.
    #[arg(long, default_value = "qfunc.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct SqueezeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 16)]
    n_traj: usize,
    /// Run length in lifetimes.
    #[arg(long, default_value_t = 400.0)]
    t_final: f64,
    /// Initial amplitude in wavelengths.
    #[arg(long, default_value_t = 0.38)]
    a0: f64,
    /// Steps between variance samples.
    #[arg(long, default_value_t = 1000)]
    sample_every: u64,
    /// Bin centres in wavelengths, comma separated; defaults to the amplitude grid.
    #[arg(long, value_delimiter = ',')]
    bins: Vec<f64>,
    /// Bin half-width in wavelengths.
    #[arg(long, default_value_t = 0.03)]
    half_width: f64,
    /// Output path.
    #[arg(long, default_value = "squeeze.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct MatelemArgs {
    #[command(flatten)]
    common: Common,
    /// Inclusive range of n, as `lo..hi`.
    #[arg(long, default_value = "0..3", value_parser = parse_range)]
    n: (u32, u32),
    /// Output path.
    #[arg(long, default_value = "matelem.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct FirstjumpArgs {
    #[command(flatten)]
    common: Common,
    /// Values of eta, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2,2.5,3")]
    eta_grid: Vec<f64>,
    #[arg(long, value_enum, default_value = "survival")]
    estimator: EstimatorArg,
    /// Samples per eta for the first-jump estimator.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Output path.
    #[arg(long, default_value = "firstjump.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(allow_negative_numbers = true)]
struct RegimeArgs {
    #[command(flatten)]
    common: Common,
    /// Amplitude of oscillation in wavelengths.
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Also write the report to this JSON file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad flag values: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_seed(s: &str) -> std::result::Result<u64, String> {
    let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(h) => u64::from_str_radix(&h.replace('_', ""), 16),
        None => s.replace('_', "").parse(),
    };
    r.map_err(|e| format!("not a 64-bit seed: {e}"))
}

fn parse_range(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got {s}"))?;
    let lo: u32 = a.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: u32 = b.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if hi < lo {
        return Err(format!("empty range {s}"));
    }
    Ok((lo, hi))
}

/// Resolved configuration plus what is needed to reproduce the run.
struct Setup {
    p: PhysParams,
    c: NumericalControls,
    workers: Option<usize>,
}

impl Setup {
    fn execution(&self) -> Execution {
        if self.workers == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            execution: self.execution(),
            workers: self.workers,
            ..RunOptions::default()
        }
    }
}

fn setup(common: &Common) -> Result<Setup> {
    let file = match &common.config {
        Some(path) => Config::from_path(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))?,
        None => Config::default(),
    };
    let grid = match (common.a_min, common.a_max, common.a_step) {
        (None, None, None) => None,
        (lo, hi, step) => {
            let base = file.a_grid.unwrap_or_default();
            Some(
                AmplitudeGrid::new(
                    lo.unwrap_or(base.min),
                    hi.unwrap_or(base.max),
                    step.unwrap_or(base.step),
                )
                .map_err(|e| usage(format!("--a-min/--a-max/--a-step: {e}")))?,
            )
        }
    };
    let flags = Config {
        eta: common.eta,
        omega_t: common.omega_t,
        rabi: common.rabi,
        dt: common.dt,
        n_max: common.n_max,
        tail_tol: common.tail_tol,
        seed: common.seed,
        a_grid: grid,
    };
    let (p, c) = file.overridden_by(&flags).resolve().map_err(|e| {
        let msg = e.to_string();
        let flag = ["eta", "omega_t", "rabi", "dt", "n_max", "tail_tol"]
            .into_iter()
            .find(|k| msg.contains(&format!(" {k} must")));
        match flag {
            Some(k) => usage(format!("--{}: {msg}", k.replace('_', "-"))),
            None => usage(msg),
        }
    })?;
    if common.workers == Some(0) {
        return Err(usage("--workers must be >= 1"));
    }
    Ok(Setup {
        p,
        c,
        workers: common.workers,
    })
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{name} must be > 0, got {x}")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("{name} must be >= 0, got {x}")))
    }
}

fn time_grid(t_final: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| t_final * k as f64 / points as f64).collect()
}

fn alpha0(s: &Setup, a0: f64) -> C64 {
    C64::new(s.p.alpha_for_amplitude(a0), 0.0)
}

/// Subcommand result: output files plus a summary for the manifest.
struct Report {
    outputs: Vec<PathBuf>,
    summary: Value,
}

fn heat(a: &HeatArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    positive("--t-final", a.t_final)?;
    non_negative("--a0", a.a0)?;
    if a.n_traj < 2 {
        return Err(usage("--n-traj must be >= 2 for a heating curve"));
    }
    if a.points == 0 {
        return Err(usage("--points must be >= 1"));
    }
    let mut spec = EnsembleSpec::new(a.model.model(), s.p, s.c, a.n_traj, a.t_final)
        .with_stride(a.stride)
        .with_alpha0(alpha0(&s, a.a0));
    if a.model == ModelArg::Diffusion {
        let path = a.cov.as_ref().ok_or_else(|| usage("--model diffusion needs --cov"))?;
        positive("--sde-dt", a.sde_dt)?;
        let curve = CovarianceCurve::read_csv(path, Some(s.p.eta))
            .with_context(|| format!("reading covariance table {}", path.display()))?;
        spec = spec.with_curve(Arc::new(curve), a.sde_dt);
        spec.sample_stride = 1;
    }
    let mut opts = s.run_options();
    opts.checkpoint_path = a.checkpoint.clone();
    opts.checkpoint_every = Duration::from_secs_f64(a.checkpoint_every.max(0.0));
    let run = if a.resume {
        let path = a.checkpoint.as_ref().expect("clap enforces --checkpoint");
        let ck = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        resume_ensemble(&spec, &ck, &opts).context("ensemble")?
    } else {
        run_ensemble(&spec, &opts).context("ensemble")?
    };
    let sample_dt = spec.sample_stride as f64 * spec.step_dt();
    let grid: Vec<f64> = time_grid(a.t_final, a.points)
        .into_iter()
        .map(|t| (t / sample_dt).floor() * sample_dt)
        .collect();
    let records = run.records();
    let curve = heating_curve(&records, &s.p, &grid).context("heating curve")?;
    curve.write_csv_with(&a.out, Some(&run.header()))?;
    let mut outputs = vec![a.out.clone()];
    if let Some(ck) = &a.checkpoint {
        outputs.push(ck.clone());
    }
    for (i, m) in run.failures() {
        log::warn!("trajectory {i} excluded: {m}");
    }
    Ok((
        s,
        Report {
            outputs,
            summary: json!({
                "n_traj": run.n_traj(),
                "n_success": run.n_success(),
                "n_failed": run.n_failed(),
                "final_mean_A2": curve.mean_a2.last(),
                "spec_hash": format!("{:016x}", run.spec_hash),
            }),
        },
    ))
}

fn traj(a: &TrajArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    positive("--t-final", a.t_final)?;
    non_negative("--a0", a.a0)?;
    let mut rng = split_stream(s.c.seed, tag::TRAJECTORY + a.index);
    let start = alpha0(&s, a.a0);
    let mut outputs = vec![a.out_jumps.clone(), a.out_samples.clone()];
    let rec = match a.model {
        ModelArg::Semi => {
            if a.dump_state.is_some() {
                return Err(usage("--dump-state needs --model quantum"));
            }
            semiquantum::run_trajectory(&s.p, s.c.dt, a.t_final, start, a.stride, &mut rng).context("trajectory")?
        }
        ModelArg::Quantum => {
            let tables = Arc::new(build_trig_tables(s.p.eta, s.c.n_max).context("operator tables")?);
            let mut eng = QuantumEngine::new(s.p, &s.c, tables, start).context("initial state")?;
            let mut rec = ionheat_core::record::TrajectoryRecord {
                samples: vec![eng.sample()?],
                final_alpha: start,
                ..Default::default()
            };
            let n_steps = (a.t_final / s.c.dt).round() as u64;
            eng.run_to_step(n_steps, a.stride, &mut rng, &mut rec)
                .context("trajectory")?;
            if let Some(path) = &a.dump_state {
                fock::write_state_dump(BufWriter::new(File::create(path)?), &eng.pair)?;
                outputs.push(path.clone());
            }
            rec
        }
        ModelArg::Diffusion => return Err(usage("--model diffusion is not available for traj; use diffuse")),
    };
    rec.write_jumps_jsonl(BufWriter::new(create(&a.out_jumps)?))?;
    rec.write_samples_csv(BufWriter::new(create(&a.out_samples)?))?;
    Ok((
        s,
        Report {
            outputs,
            summary: json!({
                "jumps": rec.jumps.len(),
                "final_A": rec.samples.last().map(|x| x.a),
                "final_t": rec.final_t,
            }),
        },
    ))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn wtd(a: &WtdArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    non_negative("--a", a.a)?;
    positive("--tau-max", a.tau_max)?;
    let curve = match a.zeta {
        Some(z) => waiting::wtd_exact(a.a, z, &s.p, a.tau_max, waiting::WAIT_DT),
        None => waiting::wtd_zeta_avg(a.a, &s.p, a.tau_max, waiting::WAIT_DT, a.n_zeta),
    }
    .context("waiting-time density")?;
    curve.write_csv(&a.out)?;
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({ "integral": curve.trapezoid_integral(), "mean_truncated": curve.mean() }),
        },
    ))
}

fn meanwait(a: &MeanwaitArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    let grid = s.c.a_grid.nodes();
    let exec = s.execution();
    let workers = s.workers;
    let exact = with_workers(workers, || mean_wait_curve(&grid, &s.p, a.n_zeta, exec)).context("exact mean wait")?;
    let quantum = match a.model {
        ModelArg::Semi => vec![f64::NAN; grid.len()],
        ModelArg::Quantum => {
            let tables = Arc::new(build_trig_tables(s.p.eta, s.c.n_max).context("operator tables")?);
            let opts = QuantumWaitOptions {
                execution: exec,
                ..QuantumWaitOptions::default()
            };
            with_workers(workers, || {
                grid.iter()
                    .enumerate()
                    .map(|(k, &x)| {
                        mean_wait_quantum_with(x, &s.p, &s.c, &tables, a.samples, s.c.seed ^ k as u64, &opts)
                            .map(|e| e.mean)
                            .with_context(|| format!("quantum mean wait at A = {x}"))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        }
        ModelArg::Diffusion => return Err(usage("--model must be semi or quantum")),
    };
    let rows: Vec<MeanWaitRow> = grid
        .iter()
        .zip(exact.iter().zip(&quantum))
        .map(|(&x, (&e, &q))| MeanWaitRow {
            a: x,
            tau_exact: e,
            tau_approx: mean_wait_approx(x, &s.p),
            tau_quantum: q,
            eta: s.p.eta,
        })
        .collect();
    write_meanwait_csv(&a.out, &rows)?;
    let peaks: Vec<f64> = waiting::local_maxima(&grid, &exact)
        .into_iter()
        .map(|(x, _)| x)
        .collect();
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({ "points": rows.len(), "peaks": peaks }),
        },
    ))
}

fn cov(a: &CovArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    let grid = s.c.a_grid.nodes();
    let mut opt = PinOptions::new(a.jumps, s.c.a_grid.step);
    opt.execution = s.execution();
    let curve = with_workers(s.workers, || match a.model {
        ModelArg::Semi => estimate_covariance_semi(&grid, &s.p, &s.c, &opt),
        ModelArg::Quantum => estimate_covariance_quantum(&grid, &s.p, &s.c, &opt, a.ablate_dipole),
        ModelArg::Diffusion => Err(ionheat_core::Error::InvalidParameter(
            "--model must be semi or quantum".into(),
        )),
    })
    .context("covariance estimate")?;
    curve.write_csv(&a.out)?;
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({ "nodes": grid.len(), "jumps_per_node": a.jumps }),
        },
    ))
}

fn diffuse(a: &DiffuseArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    positive("--t-final", a.t_final)?;
    positive("--sde-dt", a.sde_dt)?;
    non_negative("--a0", a.a0)?;
    if a.n_traj < 2 {
        return Err(usage("--n-traj must be >= 2"));
    }
    let curve = CovarianceCurve::read_csv(&a.cov, Some(s.p.eta))
        .with_context(|| format!("reading covariance table {}", a.cov.display()))?;
    let spec = EnsembleSpec::new(Model::Diffusion, s.p, s.c, a.n_traj, a.t_final)
        .with_curve(Arc::new(curve), a.sde_dt)
        .with_stride(1)
        .with_alpha0(alpha0(&s, a.a0));
    let run = run_ensemble(&spec, &s.run_options()).context("diffusion ensemble")?;
    let grid: Vec<f64> = time_grid(a.t_final, a.points)
        .into_iter()
        .map(|t| (t / a.sde_dt).floor() * a.sde_dt)
        .collect();
    let h = heating_curve(&run.records(), &s.p, &grid).context("heating curve")?;
    h.write_csv_with(&a.out, Some(&run.header()))?;
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({
                "n_traj": run.n_traj(),
                "n_success": run.n_success(),
                "n_failed": run.n_failed(),
                "final_mean_A2": h.mean_a2.last(),
            }),
        },
    ))
}

fn qfunc(a: &QfuncArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    let pair = match &a.state {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            fock::read_state_dump(std::io::BufReader::new(f)).context("reading state dump")?
        }
        None => {
            positive("--t", a.t)?;
            non_negative("--a0", a.a0)?;
            let tables = Arc::new(build_trig_tables(s.p.eta, s.c.n_max).context("operator tables")?);
            let mut eng = QuantumEngine::new(s.p, &s.c, tables, alpha0(&s, a.a0)).context("initial state")?;
            let mut rng = split_stream(s.c.seed, tag::TRAJECTORY + a.index);
            let mut rec = ionheat_core::record::TrajectoryRecord::default();
            let n_steps = (a.t / s.c.dt).round() as u64;
            eng.run_to_step(n_steps, u64::MAX, &mut rng, &mut rec)
                .context("trajectory")?;
            eng.pair
        }
    };
    let spec = GridSpec::new(C64::new(0.0, 0.0), a.extent, a.resolution).map_err(|e| usage(e.to_string()))?;
    let q = with_workers(s.workers, || q_function(&pair, &spec)).context("Q function")?;
    q.write_csv(&a.out)?;
    let amp = observables::amplitude_a_quantum(&pair, &s.p)?;
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({
                "normalization": q.normalization(),
                "boundary_max": q.boundary_max(),
                "A": amp,
                "t": pair.t,
                "frame_alpha": [pair.frame_alpha.re, pair.frame_alpha.im],
            }),
        },
    ))
}

fn squeeze(a: &SqueezeArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    positive("--t-final", a.t_final)?;
    positive("--half-width", a.half_width)?;
    non_negative("--a0", a.a0)?;
    let centers = if a.bins.is_empty() {
        s.c.a_grid.nodes()
    } else {
        a.bins.clone()
    };
    let tables = Arc::new(build_trig_tables(s.p.eta, s.c.n_max).context("operator tables")?);
    let opt = SqueezeOptions {
        n_traj: a.n_traj,
        t_final: a.t_final,
        sample_every: a.sample_every,
        alpha0: alpha0(&s, a.a0),
        execution: s.execution(),
    };
    let bins = with_workers(s.workers, || {
        squeeze_scan(&s.p, &s.c, tables, &opt, &centers, a.half_width)
    })
    .context("squeezing scan")?;
    observables::write_squeeze_csv(&a.out, &bins)?;
    let filled = bins.iter().filter(|b| b.n > 0).count();
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({ "bins": bins.len(), "filled_bins": filled }),
        },
    ))
}

fn matelem(a: &MatelemArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    let (lo, hi) = a.n;
    let rows: Vec<Vec<f64>> = (lo..=hi)
        .map(|n| {
            let v = matrix_element_2n(s.p.eta, n);
            vec![f64::from(n), v, v * v]
        })
        .collect();
    let comment = format!("eta={}", s.p.eta);
    ionheat_core::csvio::write_table_file(&a.out, Some(&comment), &["n", "element", "element_sq"], rows.clone())?;
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({ "element_sq": rows.iter().map(|r| r[2]).collect::<Vec<_>>() }),
        },
    ))
}

fn firstjump(a: &FirstjumpArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    for &e in &a.eta_grid {
        positive("--eta-grid entry", e)?;
    }
    let opts = QuantumWaitOptions {
        estimator: match a.estimator {
            EstimatorArg::Survival => WaitEstimator::Survival,
            EstimatorArg::FirstJump => WaitEstimator::FirstJump,
        },
        execution: s.execution(),
        ..QuantumWaitOptions::default()
    };
    let pts = with_workers(s.workers, || {
        first_jump_mean_vs_eta_with(&a.eta_grid, &s.p, &s.c, a.samples, s.c.seed, &opts)
    })
    .context("first-jump means")?;
    ionheat_core::csvio::write_table_file(
        &a.out,
        None,
        &["eta", "mean", "stderr", "n", "perturbative"],
        pts.iter()
            .map(|q| vec![q.eta, q.mean, q.stderr, q.n as f64, q.perturbative]),
    )?;
    Ok((
        s,
        Report {
            outputs: vec![a.out.clone()],
            summary: json!({ "means": pts.iter().map(|q| q.mean).collect::<Vec<_>>() }),
        },
    ))
}

fn regime(a: &RegimeArgs) -> Result<(Setup, Report)> {
    let s = setup(&a.common)?;
    non_negative("--x0", a.x0)?;
    let r = regime_report(&s.p, a.x0)?;
    let value = serde_json::to_value(r)?;
    let mut outputs = Vec::new();
    if let Some(path) = &a.out {
        std::fs::write(path, serde_json::to_string_pretty(&value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path.clone());
    }
    Ok((
        s,
        Report {
            outputs,
            summary: value,
        },
    ))
}

fn run(cli: &Cli) -> Result<(Setup, Report)> {
    match &cli.command {
        Command::Heat(a) => heat(a),
        Command::Traj(a) => traj(a),
        Command::Wtd(a) => wtd(a),
        Command::Meanwait(a) => meanwait(a),
        Command::Cov(a) => cov(a),
        Command::Diffuse(a) => diffuse(a),
        Command::Qfunc(a) => qfunc(a),
        Command::Squeeze(a) => squeeze(a),
        Command::Matelem(a) => matelem(a),
        Command::Firstjump(a) => firstjump(a),
        Command::Regime(a) => regime(a),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Heat(_) => "heat",
        Command::Traj(_) => "traj",
        Command::Wtd(_) => "wtd",
        Command::Meanwait(_) => "meanwait",
        Command::Cov(_) => "cov",
        Command::Diffuse(_) => "diffuse",
        Command::Qfunc(_) => "qfunc",
        Command::Squeeze(_) => "squeeze",
        Command::Matelem(_) => "matelem",
        Command::Firstjump(_) => "firstjump",
        Command::Regime(_) => "regime",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let t0 = Instant::now();
    match run(&cli) {
        Ok((s, report)) => {
            let manifest = json!({
                "command": command_name(&cli.command),
                "version": env!("CARGO_PKG_VERSION"),
                "argv": argv,
                "params": s.p,
                "controls": s.c,
                "seed": s.c.seed,
                "workers": s.workers,
                "outputs": report.outputs,
                "summary": report.summary,
                "wall_time_s": t0.elapsed().as_secs_f64(),
            });
            println!("{manifest}");
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("run `ionheat {} --help` for the flag list", command_name(&cli.command));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
