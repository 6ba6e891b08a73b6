//! Semi-quantum trajectories: a quantized two-level electronic state driven by
//! a Rabi frequency that the classical centre-of-mass motion modulates through
//! the standing wave, interrupted by photon-scattering jumps that kick the
//! phase-space amplitude.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::phasespace::{self, OscState, RecoilAngles};
use crate::record::{JumpEvent, Sample, TrajectoryRecord};
use crate::{Error, PhysParams, Result, C64};

/// Renormalize the unnormalized amplitudes when their squared norm drops below this.
pub const RENORM_THRESHOLD: f64 = 1e-6;

/// Unnormalized Schrödinger amplitudes of the ground (`c_minus`) and excited
/// (`c_plus`) electronic states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalAmps {
    pub c_minus: C64,
    pub c_plus: C64,
}

impl InternalAmps {
    pub fn ground() -> Self {
        Self {
            c_minus: C64::new(1.0, 0.0),
            c_plus: C64::new(0.0, 0.0),
        }
    }

    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.c_minus.norm_sqr() + self.c_plus.norm_sqr()
    }

    pub fn excited_population(&self) -> f64 {
        let n = self.norm_sqr();
        if n > 0.0 {
            self.c_plus.norm_sqr() / n
        } else {
            0.0
        }
    }

    fn scaled(self, s: f64) -> Self {
        Self {
            c_minus: self.c_minus * s,
            c_plus: self.c_plus * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiState {
    pub internal: InternalAmps,
    pub osc: OscState,
}

impl SemiState {
    pub fn ground(alpha0: C64) -> Self {
        Self {
            internal: InternalAmps::ground(),
            osc: OscState::new(alpha0, 0.0),
        }
    }
}

/// Instantaneous Rabi coupling (Omega/2) cos[eta (alpha~ e^{-i w t} + c.c.)].
#[inline]
pub fn rabi_modulation(osc: &OscState, p: &PhysParams) -> f64 {
    modulation_at(osc.alpha_tilde, osc.t, p)
}

#[inline]
fn modulation_at(alpha: C64, t: f64, p: &PhysParams) -> f64 {
    let x = 2.0 * p.eta * (alpha * C64::cis(-p.omega_t * t)).re;
    0.5 * p.rabi * x.cos()
}

#[inline]
fn derivative(g: f64, half_gamma: f64, c: InternalAmps) -> InternalAmps {
    InternalAmps {
        c_minus: -c.c_plus * g,
        c_plus: c.c_minus * g - c.c_plus * half_gamma,
    }
}

/// One classical RK4 step with the coupling sampled at the start, middle and
/// end of the step.
#[inline]
fn rk4(c: InternalAmps, g0: f64, gh: f64, g1: f64, dt: f64, half_gamma: f64) -> InternalAmps {
    let add = |a: InternalAmps, b: InternalAmps, h: f64| InternalAmps {
        c_minus: a.c_minus + b.c_minus * h,
        c_plus: a.c_plus + b.c_plus * h,
    };
    let k1 = derivative(g0, half_gamma, c);
    let k2 = derivative(gh, half_gamma, add(c, k1, 0.5 * dt));
    let k3 = derivative(gh, half_gamma, add(c, k2, 0.5 * dt));
    let k4 = derivative(g1, half_gamma, add(c, k3, dt));
    let w = dt / 6.0;
    InternalAmps {
        c_minus: c.c_minus + (k1.c_minus + (k2.c_minus + k3.c_minus) * 2.0 + k4.c_minus) * w,
        c_plus: c.c_plus + (k1.c_plus + (k2.c_plus + k3.c_plus) * 2.0 + k4.c_plus) * w,
    }
}

/// Advances the electronic amplitudes by `dt` with the phase-space amplitude
/// held fixed.
pub fn coherent_step(s: &SemiState, dt: f64, p: &PhysParams) -> SemiState {
    let a = s.osc.alpha_tilde;
    let t = s.osc.t;
    let internal = rk4(
        s.internal,
        modulation_at(a, t, p),
        modulation_at(a, t + 0.5 * dt, p),
        modulation_at(a, t + dt, p),
        dt,
        0.5 * p.gamma(),
    );
    SemiState {
        internal,
        osc: OscState::new(a, t + dt),
    }
}

pub fn jump_rate(s: &SemiState, p: &PhysParams) -> Result<f64> {
    let n = s.internal.norm_sqr();
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(p.gamma() * s.internal.c_plus.norm_sqr() / n)
}

/// Resets to the ground state (carrying over the excited amplitude, normalized)
/// and kicks the phase-space amplitude.
pub fn apply_jump(s: &SemiState, a: &RecoilAngles, p: &PhysParams) -> SemiState {
    let cp = s.internal.c_plus;
    let c_minus = if cp.norm_sqr() > 0.0 {
        cp / cp.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    SemiState {
        internal: InternalAmps {
            c_minus,
            c_plus: C64::new(0.0, 0.0),
        },
        osc: phasespace::kick(&s.osc, a, p),
    }
}

/// Step-by-step semi-quantum integrator.
///
/// Time is `step * dt` exactly, so splitting a run into segments never changes
/// the result.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiEngine {
    pub p: PhysParams,
    pub dt: f64,
    pub state: SemiState,
    pub step: u64,
    pub rescales: u64,
}

impl SemiEngine {
    pub fn new(p: PhysParams, dt: f64, alpha0: C64) -> Self {
        Self {
            p,
            dt,
            state: SemiState::ground(alpha0),
            step: 0,
            rescales: 0,
        }
    }

    #[inline]
    pub fn t(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn amplitude(&self) -> f64 {
        phasespace::amplitude_a(&self.state.osc, &self.p)
    }

    pub fn sample(&self) -> Sample {
        Sample {
            t: self.t(),
            a: self.amplitude(),
            p_excited: self.state.internal.excited_population(),
        }
    }

    /// Coherent step plus underflow guard; returns the jump rate at the end of the step.
    fn coherent(&mut self) -> Result<f64> {
        let t0 = self.t();
        let t1 = (self.step + 1) as f64 * self.dt;
        let a = self.state.osc.alpha_tilde;
        let p = &self.p;
        self.state.internal = rk4(
            self.state.internal,
            modulation_at(a, t0, p),
            modulation_at(a, 0.5 * (t0 + t1), p),
            modulation_at(a, t1, p),
            self.dt,
            0.5 * p.gamma(),
        );
        self.step += 1;
        self.state.osc.t = t1;
        let n = self.state.internal.norm_sqr();
        if n < RENORM_THRESHOLD {
            if !(n > 0.0) {
                return Err(Error::ZeroNorm);
            }
            self.state.internal = self.state.internal.scaled(1.0 / n.sqrt());
            self.rescales += 1;
        }
        jump_rate(&self.state, &self.p)
    }

    fn jump(&mut self, angles: RecoilAngles) -> JumpEvent {
        let pre = self.state.osc.alpha_tilde;
        self.state = apply_jump(&self.state, &angles, &self.p);
        JumpEvent {
            step: self.step,
            t: self.t(),
            angles,
            alpha_pre: pre,
            increment: self.state.osc.alpha_tilde - pre,
        }
    }

    /// One step of the Monte-Carlo scheme: coherent evolution, then a jump
    /// with probability `rate * dt`.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<JumpEvent>> {
        let rate = self.coherent()?;
        let u: f64 = rng.random();
        if u < rate * self.dt {
            let angles = phasespace::sample_recoil(rng);
            Ok(Some(self.jump(angles)))
        } else {
            Ok(None)
        }
    }

    /// Runs until `target_step`, appending jumps and every `stride`-th sample.
    pub fn run_to_step<R: Rng + ?Sized>(
        &mut self,
        target_step: u64,
        stride: u64,
        rng: &mut R,
        record: &mut TrajectoryRecord,
    ) -> Result<()> {
        let stride = stride.max(1);
        while self.step < target_step {
            if let Some(ev) = self.advance(rng)? {
                record.jumps.push(ev);
            }
            if self.step.is_multiple_of(stride) {
                record.samples.push(self.sample());
            }
        }
        record.final_alpha = self.state.osc.alpha_tilde;
        record.final_t = self.t();
        record.rescales = self.rescales;
        Ok(())
    }

    /// Re-runs the deterministic integrator, applying the recorded jumps at
    /// their recorded steps.
    pub fn replay(p: PhysParams, dt: f64, alpha0: C64, jumps: &[JumpEvent], n_steps: u64) -> Result<Self> {
        let mut eng = Self::new(p, dt, alpha0);
        let mut next = jumps.iter().peekable();
        while eng.step < n_steps {
            eng.coherent()?;
            if let Some(j) = next.peek() {
                if j.step == eng.step {
                    eng.jump(j.angles);
                    next.next();
                }
            }
        }
        Ok(eng)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64(self.p.eta);
        w.f64(self.p.omega_t);
        w.f64(self.p.rabi);
        w.f64(self.dt);
        w.c64(self.state.internal.c_minus);
        w.c64(self.state.internal.c_plus);
        w.c64(self.state.osc.alpha_tilde);
        w.f64(self.state.osc.t);
        w.u64(self.step);
        w.u64(self.rescales);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let p = PhysParams {
            eta: r.f64()?,
            omega_t: r.f64()?,
            rabi: r.f64()?,
        };
        let dt = r.f64()?;
        let internal = InternalAmps {
            c_minus: r.c64()?,
            c_plus: r.c64()?,
        };
        let osc = OscState::new(r.c64()?, r.f64()?);
        Ok(Self {
            p,
            dt,
            state: SemiState { internal, osc },
            step: r.u64()?,
            rescales: r.u64()?,
        })
    }
}

/// Runs a single semi-quantum trajectory from the electronic ground state.
pub fn run_trajectory<R: Rng + ?Sized>(
    p: &PhysParams,
    dt: f64,
    t_final: f64,
    alpha0: C64,
    sample_stride: u64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    if !(t_final > 0.0) {
        return Err(Error::invalid(format!("t_final must be > 0, got {t_final}")));
    }
    let mut eng = SemiEngine::new(*p, dt, alpha0);
    let mut rec = TrajectoryRecord {
        samples: vec![eng.sample()],
        ..Default::default()
    };
    let n_steps = (t_final / dt).round() as u64;
    eng.run_to_step(n_steps, sample_stride, rng, &mut rec)?;
    Ok(rec)
}
