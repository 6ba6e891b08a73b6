//! Monte-Carlo orchestration: one independent stream per trajectory,
//! optional parallel execution, checkpoint and resume.

pub mod checkpoint;
pub mod exec;
pub mod stream;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::diffusion::{CovarianceCurve, DiffusionEngine};
use crate::fock::{build_trig_tables, QuantumEngine, TrigTables};
use crate::record::{Model, TrajectoryRecord};
use crate::semiquantum::SemiEngine;
use crate::{Error, NumericalControls, PhysParams, Result, C64};

pub use checkpoint::Checkpoint;
pub use exec::{map_indexed, with_workers, Execution};
pub use stream::{split_stream, Stream};

/// What to run. Everything that influences the numbers lives here and feeds
/// the checkpoint hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub model: Model,
    pub n_traj: usize,
    /// Run length in lifetimes.
    pub t_final: f64,
    /// Record a sample every this many steps.
    pub sample_stride: u64,
    pub params: PhysParams,
    pub controls: NumericalControls,
    /// Initial rotating-frame amplitude (frame offset for the quantum model).
    pub alpha0: C64,
    /// Step of the diffusion model in lifetimes.
    pub sde_dt: f64,
    /// Tabulated diffusion data, required by the diffusion model.
    #[serde(skip)]
    pub curve: Option<Arc<CovarianceCurve>>,
}

impl EnsembleSpec {
    pub fn new(model: Model, params: PhysParams, controls: NumericalControls, n_traj: usize, t_final: f64) -> Self {
        Self {
            model,
            n_traj,
            t_final,
            sample_stride: 1000,
            params,
            controls,
            alpha0: C64::new(0.0, 0.0),
            sde_dt: 1.0,
            curve: None,
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.sample_stride = stride.max(1);
        self
    }

    pub fn with_alpha0(mut self, alpha0: C64) -> Self {
        self.alpha0 = alpha0;
        self
    }

    pub fn with_curve(mut self, curve: Arc<CovarianceCurve>, sde_dt: f64) -> Self {
        self.curve = Some(curve);
        self.sde_dt = sde_dt;
        self
    }

    pub fn step_dt(&self) -> f64 {
        match self.model {
            Model::Diffusion => self.sde_dt,
            _ => self.controls.dt,
        }
    }

    pub fn total_steps(&self) -> u64 {
        (self.t_final / self.step_dt()).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controls.validate()?;
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj must be >= 1"));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::invalid(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if self.model == Model::Diffusion {
            if self.curve.is_none() {
                return Err(Error::invalid("diffusion model needs a covariance curve"));
            }
            if !(self.sde_dt > 0.0) {
                return Err(Error::invalid(format!("sde_dt must be > 0, got {}", self.sde_dt)));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> u64 {
        let mut bytes = serde_json::to_vec(self).expect("spec serializes");
        if let Some(c) = &self.curve {
            bytes.extend(serde_json::to_vec(&**c).expect("curve serializes"));
        }
        checkpoint::hash64(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Running,
    Done,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Engine {
    Semi(SemiEngine),
    Quantum(Box<QuantumEngine>),
    Diffusion(DiffusionEngine),
}

impl Engine {
    fn step(&self) -> u64 {
        match self {
            Engine::Semi(e) => e.step,
            Engine::Quantum(e) => e.step,
            Engine::Diffusion(e) => e.step,
        }
    }

    fn run_to_step(&mut self, target: u64, stride: u64, rng: &mut Stream, rec: &mut TrajectoryRecord) -> Result<()> {
        match self {
            Engine::Semi(e) => e.run_to_step(target, stride, rng, rec),
            Engine::Quantum(e) => e.run_to_step(target, stride, rng, rec),
            Engine::Diffusion(e) => e.run_to_step(target, stride, rng, rec),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub index: usize,
    pub engine: Engine,
    pub rng: Stream,
    pub record: TrajectoryRecord,
    pub status: Status,
}

impl Trajectory {
    fn advance(&mut self, target: u64, stride: u64) {
        if self.status != Status::Running || self.engine.step() >= target {
            return;
        }
        if let Err(e) = self.engine.run_to_step(target, stride, &mut self.rng, &mut self.record) {
            let e = e.in_trajectory(self.index);
            log::warn!("{e}");
            self.status = Status::Failed(e.to_string());
        }
    }
}

/// Controls that do not change results.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub execution: Execution,
    pub workers: Option<usize>,
    pub checkpoint_path: Option<PathBuf>,
    /// Minimum wall time between checkpoint writes.
    pub checkpoint_every: Duration,
    /// Stop (leaving trajectories resumable) once this step is reached.
    pub stop_at_step: Option<u64>,
    /// Steps per scheduling segment.
    pub segment_steps: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            execution: Execution::Parallel,
            workers: None,
            checkpoint_path: None,
            checkpoint_every: Duration::from_secs(300),
            stop_at_step: None,
            segment_steps: 100_000,
        }
    }
}

impl RunOptions {
    pub fn sequential() -> Self {
        Self {
            execution: Execution::Sequential,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub spec_hash: u64,
    pub trajectories: Vec<Trajectory>,
}

impl EnsembleRun {
    pub fn is_complete(&self) -> bool {
        self.trajectories.iter().all(|t| t.status != Status::Running)
    }

    pub fn n_traj(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_failed(&self) -> usize {
        self.trajectories
            .iter()
            .filter(|t| matches!(t.status, Status::Failed(_)))
            .count()
    }

    pub fn n_success(&self) -> usize {
        self.n_traj() - self.n_failed()
    }

    /// Records of trajectories that did not fail, in index order.
    pub fn records(&self) -> Vec<&TrajectoryRecord> {
        self.trajectories
            .iter()
            .filter(|t| !matches!(t.status, Status::Failed(_)))
            .map(|t| &t.record)
            .collect()
    }

    pub fn failures(&self) -> Vec<(usize, &str)> {
        self.trajectories
            .iter()
            .filter_map(|t| match &t.status {
                Status::Failed(m) => Some((t.index, m.as_str())),
                _ => None,
            })
            .collect()
    }

    /// `n_traj=.. n_success=.. n_failed=..` for output headers.
    pub fn header(&self) -> String {
        format!(
            "n_traj={} n_success={} n_failed={}",
            self.n_traj(),
            self.n_success(),
            self.n_failed()
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec_hash: self.spec_hash,
            records: self.trajectories.iter().map(encode_trajectory).collect(),
        }
    }
}

fn tables_for(spec: &EnsembleSpec) -> Result<Option<Arc<TrigTables>>> {
    if spec.model == Model::Quantum {
        Ok(Some(Arc::new(build_trig_tables(spec.params.eta, spec.controls.n_max)?)))
    } else {
        Ok(None)
    }
}

fn stream_for(spec: &EnsembleSpec, index: usize) -> Stream {
    split_stream(spec.controls.seed, stream::tag::TRAJECTORY + index as u64)
}

fn new_trajectory(spec: &EnsembleSpec, tables: &Option<Arc<TrigTables>>, index: usize) -> Result<Trajectory> {
    let engine = match spec.model {
        Model::Semi => Engine::Semi(SemiEngine::new(spec.params, spec.controls.dt, spec.alpha0)),
        Model::Quantum => Engine::Quantum(Box::new(QuantumEngine::new(
            spec.params,
            &spec.controls,
            tables.clone().expect("tables built for quantum model"),
            spec.alpha0,
        )?)),
        Model::Diffusion => Engine::Diffusion(DiffusionEngine::new(
            spec.params,
            spec.curve.clone().expect("validated"),
            spec.sde_dt,
            spec.alpha0,
        )),
    };
    let first = match &engine {
        Engine::Semi(e) => e.sample(),
        Engine::Quantum(e) => e.sample()?,
        Engine::Diffusion(e) => e.sample(),
    };
    Ok(Trajectory {
        index,
        engine,
        rng: stream_for(spec, index),
        record: TrajectoryRecord {
            samples: vec![first],
            final_alpha: spec.alpha0,
            ..Default::default()
        },
        status: Status::Running,
    })
}

fn encode_trajectory(t: &Trajectory) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(t.index as u64);
    match &t.status {
        Status::Running => w.u8(0),
        Status::Done => w.u8(1),
        Status::Failed(m) => {
            w.u8(2);
            w.str(m);
        }
    }
    w.u128(stream::stream_position(&t.rng));
    let mut e = Writer::new();
    match &t.engine {
        Engine::Semi(s) => {
            w.u8(0);
            s.encode(&mut e);
        }
        Engine::Quantum(q) => {
            w.u8(1);
            q.encode(&mut e);
        }
        Engine::Diffusion(d) => {
            w.u8(2);
            d.encode(&mut e);
        }
    }
    w.record(&e.into_bytes());
    let mut r = Writer::new();
    t.record.encode(&mut r);
    w.record(&r.into_bytes());
    w.into_bytes()
}

fn decode_trajectory(spec: &EnsembleSpec, tables: &Option<Arc<TrigTables>>, bytes: &[u8]) -> Result<Trajectory> {
    let mut r = Reader::new(bytes);
    let index = r.u64()? as usize;
    let status = match r.u8()? {
        0 => Status::Running,
        1 => Status::Done,
        2 => Status::Failed(r.string()?),
        s => return Err(Error::Checkpoint(format!("unknown status {s}"))),
    };
    let pos = r.u128()?;
    let kind = r.u8()?;
    let mut er = r.record()?;
    let engine = match (kind, spec.model) {
        (0, Model::Semi) => Engine::Semi(SemiEngine::decode(&mut er)?),
        (1, Model::Quantum) => Engine::Quantum(Box::new(QuantumEngine::decode(
            &mut er,
            tables.clone().expect("tables built for quantum model"),
        )?)),
        (2, Model::Diffusion) => Engine::Diffusion(DiffusionEngine::decode(
            &mut er,
            spec.curve.clone().expect("validated"),
        )?),
        (k, m) => return Err(Error::Checkpoint(format!("engine kind {k} does not match model {m}"))),
    };
    let record = TrajectoryRecord::decode(&mut r.record()?)?;
    Ok(Trajectory {
        index,
        engine,
        rng: stream::restore_stream(spec.controls.seed, stream::tag::TRAJECTORY + index as u64, pos),
        record,
        status,
    })
}

/// Runs the ensemble from scratch.
pub fn run_ensemble(spec: &EnsembleSpec, opts: &RunOptions) -> Result<EnsembleRun> {
    spec.validate()?;
    let tables = tables_for(spec)?;
    let trajectories = (0..spec.n_traj)
        .map(|i| new_trajectory(spec, &tables, i))
        .collect::<Result<Vec<_>>>()?;
    drive(
        spec,
        opts,
        EnsembleRun {
            spec_hash: spec.hash(),
            trajectories,
        },
    )
}

/// Continues from a checkpoint written for the same spec.
pub fn resume_ensemble(spec: &EnsembleSpec, ck: &Checkpoint, opts: &RunOptions) -> Result<EnsembleRun> {
    spec.validate()?;
    let hash = spec.hash();
    if ck.spec_hash != hash {
        return Err(Error::Checkpoint(format!(
            "checkpoint was written for spec {:016x}, not {:016x}",
            ck.spec_hash, hash
        )));
    }
    if ck.records.len() != spec.n_traj {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} trajectories, spec asks for {}",
            ck.records.len(),
            spec.n_traj
        )));
    }
    let tables = tables_for(spec)?;
    let trajectories = ck
        .records
        .iter()
        .map(|b| decode_trajectory(spec, &tables, b))
        .collect::<Result<Vec<_>>>()?;
    drive(
        spec,
        opts,
        EnsembleRun {
            spec_hash: hash,
            trajectories,
        },
    )
}

fn drive(spec: &EnsembleSpec, opts: &RunOptions, mut run: EnsembleRun) -> Result<EnsembleRun> {
    let total = spec.total_steps();
    let stop = opts.stop_at_step.map_or(total, |s| s.min(total));
    let seg = opts.segment_steps.max(1);
    let stride = spec.sample_stride.max(1);
    let mut last_ck = Instant::now();
    let mut target = run
        .trajectories
        .iter()
        .filter(|t| t.status == Status::Running)
        .map(|t| t.engine.step())
        .min()
        .unwrap_or(stop);
    let exec = opts.execution;
    with_workers(opts.workers, || -> Result<()> {
        while target < stop {
            target = (target + seg).min(stop);
            exec::for_each_mut(&mut run.trajectories, exec, |_, t| t.advance(target, stride));
            if let Some(path) = &opts.checkpoint_path {
                if last_ck.elapsed() >= opts.checkpoint_every && target < stop {
                    run.checkpoint().save(path)?;
                    last_ck = Instant::now();
                    log::info!("checkpoint at step {target} written to {}", path.display());
                }
            }
        }
        Ok(())
    })?;
    for t in &mut run.trajectories {
        if t.status == Status::Running && t.engine.step() >= total {
            t.status = Status::Done;
        }
    }
    if let Some(path) = &opts.checkpoint_path {
        run.checkpoint().save(path)?;
    }
    Ok(run)
}
