//! Physical and numerical configuration.
//!
//! Units: the excited-state decay rate is one, so times are in lifetimes and
//! frequencies in units of the decay rate. The optical wavenumber enters only
//! through the Lamb-Dicke parameter.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Decay rate of the excited electronic state. Fixed: it defines the time unit.
pub const GAMMA: f64 = 1.0;

/// Dimensionless physical configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Lamb-Dicke parameter.
    pub eta: f64,
    /// Trap frequency.
    pub omega_t: f64,
    /// Rabi frequency of the standing-wave drive at an antinode.
    pub rabi: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            eta: 0.2,
            omega_t: 1.0,
            rabi: 2.0,
        }
    }
}

impl PhysParams {
    pub fn new(eta: f64, omega_t: f64, rabi: f64) -> Result<Self> {
        let p = Self { eta, omega_t, rabi };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::new(eta, self.omega_t, self.rabi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.omega_t > 0.0 && self.omega_t.is_finite()) {
            return Err(Error::invalid(format!("omega_t must be > 0, got {}", self.omega_t)));
        }
        if !(self.rabi >= 0.0 && self.rabi.is_finite()) {
            return Err(Error::invalid(format!("rabi must be >= 0, got {}", self.rabi)));
        }
        Ok(())
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        GAMMA
    }

    /// Trap period in lifetimes.
    pub fn trap_period(&self) -> f64 {
        std::f64::consts::TAU / self.omega_t
    }

    /// Phase-space radius |alpha~| that corresponds to an amplitude `a` in wavelengths.
    pub fn alpha_for_amplitude(&self, a: f64) -> f64 {
        std::f64::consts::PI * a / self.eta
    }
}

/// Amplitude grid in wavelengths, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for AmplitudeGrid {
    fn default() -> Self {
        Self {
            min: 0.0,
            max: 3.0,
            step: 0.01,
        }
    }
}

impl AmplitudeGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(max >= min) || min < 0.0 {
            return Err(Error::invalid(format!(
                "amplitude grid needs 0 <= min <= max and step > 0, got ({min}, {max}, {step})"
            )));
        }
        Ok(Self { min, max, step })
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.min + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericalControls {
    /// Coherent-evolution step in lifetimes.
    pub dt: f64,
    /// Fock-basis dimension.
    pub n_max: usize,
    /// Largest population tolerated in the top 5% of the Fock basis.
    pub tail_tol: f64,
    /// Master seed for all random streams.
    pub seed: u64,
    pub a_grid: AmplitudeGrid,
}

impl Default for NumericalControls {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_max: 512,
            tail_tol: 1e-8,
            seed: 0x5eed_1e57,
            a_grid: AmplitudeGrid::default(),
        }
    }
}

impl NumericalControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.n_max < 16 {
            return Err(Error::invalid(format!("n_max must be >= 16, got {}", self.n_max)));
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(Error::invalid(format!(
                "tail_tol must lie in (0, 1), got {}",
                self.tail_tol
            )));
        }
        Ok(())
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// On-disk configuration. Every key is optional; missing keys keep defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub eta: Option<f64>,
    pub omega_t: Option<f64>,
    pub rabi: Option<f64>,
    pub dt: Option<f64>,
    pub n_max: Option<usize>,
    pub tail_tol: Option<f64>,
    pub seed: Option<u64>,
    pub a_grid: Option<AmplitudeGrid>,
}

impl Config {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Values set in `other` take precedence.
    pub fn overridden_by(self, other: &Config) -> Config {
        Config {
            eta: other.eta.or(self.eta),
            omega_t: other.omega_t.or(self.omega_t),
            rabi: other.rabi.or(self.rabi),
            dt: other.dt.or(self.dt),
            n_max: other.n_max.or(self.n_max),
            tail_tol: other.tail_tol.or(self.tail_tol),
            seed: other.seed.or(self.seed),
            a_grid: other.a_grid.or(self.a_grid),
        }
    }

    pub fn resolve(&self) -> Result<(PhysParams, NumericalControls)> {
        let dp = PhysParams::default();
        let dc = NumericalControls::default();
        let p = PhysParams::new(
            self.eta.unwrap_or(dp.eta),
            self.omega_t.unwrap_or(dp.omega_t),
            self.rabi.unwrap_or(dp.rabi),
        )?;
        let c = NumericalControls {
            dt: self.dt.unwrap_or(dc.dt),
            n_max: self.n_max.unwrap_or(dc.n_max),
            tail_tol: self.tail_tol.unwrap_or(dc.tail_tol),
            seed: self.seed.unwrap_or(dc.seed),
            a_grid: self.a_grid.unwrap_or(dc.a_grid),
        };
        c.validate()?;
        Ok((p, c))
    }
}

/// How far a parameter set sits from the usual small-recoil assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// Ground-state momentum spread in units of the photon momentum, 1/(2 eta).
    pub delta_p_over_hbar_k: f64,
    /// Wavepacket well localized in momentum: spread >= 10 photon momenta.
    pub momentum_spread_ok: bool,
    /// Distance travelled per lifetime relative to the wavelength, (omega_t/gamma) x0.
    pub travel_ratio: f64,
    /// Travel per lifetime <= lambda / 10.
    pub travel_ok: bool,
    /// Recoil energy over the linewidth, eta^2 omega_t / gamma.
    pub recoil_ratio: f64,
    /// Recoil ratio at least ten times below 2 pi eta.
    pub recoil_ok: bool,
}

/// `x0_wavelengths` is the oscillation amplitude in wavelengths.
pub fn regime_report(p: &PhysParams, x0_wavelengths: f64) -> Result<RegimeReport> {
    if !(x0_wavelengths >= 0.0) {
        return Err(Error::invalid(format!("x0 must be >= 0, got {x0_wavelengths}")));
    }
    let delta_p_over_hbar_k = 1.0 / (2.0 * p.eta);
    let travel_ratio = p.omega_t / p.gamma() * x0_wavelengths;
    let recoil_ratio = p.eta * p.eta * p.omega_t / p.gamma();
    Ok(RegimeReport {
        delta_p_over_hbar_k,
        momentum_spread_ok: delta_p_over_hbar_k >= 10.0,
        travel_ratio,
        travel_ok: travel_ratio <= 0.1,
        recoil_ratio,
        recoil_ok: 10.0 * recoil_ratio <= std::f64::consts::TAU * p.eta,
    })
}
