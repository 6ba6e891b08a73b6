//! Trajectory records: jump events plus sampled observables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::phasespace::RecoilAngles;
use crate::{Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Semi,
    Quantum,
    Diffusion,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Semi => "semi",
            Model::Quantum => "quantum",
            Model::Diffusion => "diffusion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    /// Integration step after which the jump occurred.
    pub step: u64,
    pub t: f64,
    pub angles: RecoilAngles,
    /// Rotating-frame amplitude (frame offset for the quantum engine) before the jump.
    pub alpha_pre: C64,
    /// Total change of that amplitude at the jump.
    pub increment: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// Amplitude of oscillation in wavelengths.
    pub a: f64,
    pub p_excited: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub jumps: Vec<JumpEvent>,
    pub samples: Vec<Sample>,
    pub final_alpha: C64,
    pub final_t: f64,
    /// Mid-interval renormalizations of the unnormalized state.
    pub rescales: u64,
}

#[derive(Serialize)]
struct JumpLine {
    t: f64,
    theta: f64,
    phi: f64,
    re_alpha: f64,
    im_alpha: f64,
}

impl TrajectoryRecord {
    /// Amplitude at time `t`: the last sample taken at or before `t`.
    pub fn amplitude_at(&self, t: f64) -> Option<f64> {
        let idx = self.samples.partition_point(|s| s.t <= t + 1e-9);
        idx.checked_sub(1).map(|i| self.samples[i].a)
    }

    /// One JSON object per jump with the pre-jump amplitude.
    pub fn write_jumps_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for j in &self.jumps {
            let line = JumpLine {
                t: j.t,
                theta: j.angles.theta,
                phi: j.angles.phi,
                re_alpha: j.alpha_pre.re,
                im_alpha: j.alpha_pre.im,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Sampled series as CSV with columns `t,A,p_excited`.
    pub fn write_samples_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "A", "p_excited"])?;
        for s in &self.samples {
            out.write_record(&[
                crate::csvio::fmt(s.t),
                crate::csvio::fmt(s.a),
                crate::csvio::fmt(s.p_excited),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.jumps.len() as u64);
        for j in &self.jumps {
            w.u64(j.step);
            w.f64(j.t);
            w.f64(j.angles.theta);
            w.f64(j.angles.phi);
            w.c64(j.alpha_pre);
            w.c64(j.increment);
        }
        w.u64(self.samples.len() as u64);
        for s in &self.samples {
            w.f64(s.t);
            w.f64(s.a);
            w.f64(s.p_excited);
        }
        w.c64(self.final_alpha);
        w.f64(self.final_t);
        w.u64(self.rescales);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let nj = r.u64()? as usize;
        let mut jumps = Vec::with_capacity(nj.min(1 << 20));
        for _ in 0..nj {
            jumps.push(JumpEvent {
                step: r.u64()?,
                t: r.f64()?,
                angles: RecoilAngles {
                    theta: r.f64()?,
                    phi: r.f64()?,
                },
                alpha_pre: r.c64()?,
                increment: r.c64()?,
            });
        }
        let ns = r.u64()? as usize;
        let mut samples = Vec::with_capacity(ns.min(1 << 20));
        for _ in 0..ns {
            samples.push(Sample {
                t: r.f64()?,
                a: r.f64()?,
                p_excited: r.f64()?,
            });
        }
        Ok(Self {
            jumps,
            samples,
            final_alpha: r.c64()?,
            final_t: r.f64()?,
            rescales: r.u64()?,
        })
    }
}
