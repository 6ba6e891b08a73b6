//! Stochastic heating of a harmonically trapped ion driven on a two-level
//! resonance by a standing-wave field.
//!
//! Two trajectory engines are provided:
//!
//! * [`semiquantum`]: the centre of mass is a classical phase-space point that
//!   receives a momentum kick at every scattered photon, the electronic state is
//!   a non-Hermitian two-level amplitude pair.
//! * [`fock`]: both the electronic and the centre-of-mass state are quantized,
//!   the centre-of-mass kets live in a Fock basis that is recentred on the mean
//!   oscillator amplitude after every jump.
//!
//! On top of these sit the waiting-time analysis ([`waiting`]), the
//! phase-space diffusion limit ([`diffusion`]), derived observables
//! ([`observables`]) and the Monte-Carlo orchestration ([`ensemble`]).
//!
//! All times are in atomic lifetimes (the decay rate is fixed to one) and
//! amplitudes of oscillation are measured in optical wavelengths.

pub mod binio;
pub mod csvio;
pub mod diffusion;
pub mod ensemble;
pub mod error;
pub mod fock;
pub mod observables;
pub mod params;
pub mod phasespace;
pub mod record;
pub mod semiquantum;
pub mod waiting;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use params::{NumericalControls, PhysParams};
