//! Simulation and analysis toolkit for atomic-frequency-comb (AFC) quantum
//! memories fed with time-bin entangled photon pairs.
//!
//! The crate is split along the physical chain of the experiment:
//!
//! - [`spectral`]: optical line shapes and linewidth/lifetime conversion.
//! - [`source`]: pair-number statistics, the two-photon coincidence profile
//!   and analytic coincidence/accidental rates.
//! - [`afc`]: comb construction, closed-form storage efficiencies, a
//!   frequency-domain echo simulation, and storage-time selection.
//! - [`franson`]: unbalanced-interferometer peak structure, fringes and
//!   visibility.
//! - [`montecarlo`]: a seeded time-tag generator for the whole chain.
//! - [`analysis`]: coincidence histograms, g2, CAR, the entanglement witness
//!   and calibration fits.

pub mod afc;
pub mod analysis;
pub mod checks;
pub mod error;
pub mod franson;
pub mod montecarlo;
pub mod source;
pub mod spectral;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// A value with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ± {}", self.value, self.sigma)
    }
}
