//! Rotating-frame phase-space point, recoil sampling and the kick map shared by
//! both trajectory engines.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, PhysParams, Result, C64};

/// Classical centre-of-mass state: rotating-frame complex amplitude and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    pub alpha_tilde: C64,
    pub t: f64,
}

impl OscState {
    pub fn new(alpha_tilde: C64, t: f64) -> Self {
        Self { alpha_tilde, t }
    }
}

/// Direction of a scattered photon. The emitting dipole points along z, the
/// ion moves along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoilAngles {
    /// Polar angle in [0, pi].
    pub theta: f64,
    /// Azimuth in [0, 2 pi).
    pub phi: f64,
}

impl RecoilAngles {
    /// Projection of the unit recoil onto the axis of motion.
    #[inline]
    pub fn projection(&self) -> f64 {
        self.theta.sin() * self.phi.cos()
    }
}

/// Solves F(u) = v for u = cos(theta), where F(u) = (2 + 3u - u^3) / 4 is the
/// cumulative distribution of cos(theta) under p(theta) = (3/4) sin^3(theta).
fn inverse_cdf_cos_theta(v: f64) -> f64 {
    let q = 4.0 * v - 2.0;
    // trigonometric root of u^3 - 3u + q = 0 lying in [-1, 1]
    let mut u = 2.0 * (((1.0 - 2.0 * v).clamp(-1.0, 1.0).acos() + 2.0 * TAU) / 3.0).cos();
    for _ in 0..4 {
        let f = 3.0 * u - u * u * u - q;
        let df = 3.0 - 3.0 * u * u;
        if df.abs() < 1e-6 {
            break;
        }
        let next = u - f / df;
        if (next - u).abs() < 1e-12 {
            u = next;
            break;
        }
        u = next;
    }
    u.clamp(-1.0, 1.0)
}

/// Draws a recoil direction from the dipole radiation pattern: phi uniform,
/// theta with density (3/4) sin^3(theta).
pub fn sample_recoil<R: Rng + ?Sized>(rng: &mut R) -> RecoilAngles {
    let v: f64 = rng.random();
    let w: f64 = rng.random();
    RecoilAngles {
        theta: inverse_cdf_cos_theta(v).acos(),
        phi: TAU * w,
    }
}

/// Rotating-frame increment of the amplitude produced by a recoil at time `t`.
#[inline]
pub fn recoil_increment(a: &RecoilAngles, t: f64, p: &PhysParams) -> C64 {
    C64::i() * p.eta * a.projection() * C64::cis(p.omega_t * t)
}

pub fn kick(s: &OscState, a: &RecoilAngles, p: &PhysParams) -> OscState {
    OscState {
        alpha_tilde: s.alpha_tilde + recoil_increment(a, s.t, p),
        t: s.t,
    }
}

/// Oscillation amplitude in wavelengths.
#[inline]
pub fn amplitude_a(s: &OscState, p: &PhysParams) -> f64 {
    p.eta / PI * s.alpha_tilde.norm()
}

/// Phase of the oscillation, omega_t t - arg(alpha~), wrapped to [0, 2 pi).
pub fn phase_zeta(s: &OscState, p: &PhysParams) -> Result<f64> {
    if s.alpha_tilde.norm_sqr() == 0.0 {
        return Err(Error::UndefinedPhase);
    }
    Ok(wrap_angle(p.omega_t * s.t - s.alpha_tilde.arg()))
}

/// Wraps to [0, 2 pi).
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Components of a phase-space increment along (amplitude) and across
/// (phase) the direction of `alpha`.
#[inline]
pub fn resolve_kick(increment: C64, alpha: C64) -> (f64, f64) {
    let dir = if alpha.norm_sqr() > 0.0 {
        alpha / alpha.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let r = increment * dir.conj();
    (r.re, r.im)
}
