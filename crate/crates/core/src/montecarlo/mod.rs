//! Seeded time-tag generator for the full chain: pair source, AFC memory on
//! the signal arm, Franson interferometers, and threshold detectors.

mod engine;
mod outcome;
mod tagio;

use serde::{Deserialize, Serialize};

use crate::afc::AfcComb;
use crate::error::{invalid, require_non_negative, require_positive, require_probability, Result};

pub use engine::{run_experiment, ExperimentConfig, RunSummary, TagStreams};
pub use outcome::{pair_outcome_table, Arrival, Outcome, OutcomeTable};
pub use tagio::{read_etag, read_tags_csv, write_etag, write_tags_csv, ETAG_MAGIC, ETAG_VERSION};

/// Signal photon, interferometer output 1 (or the only output without interferometers).
pub const SIGNAL_PORT1: u8 = 0;
pub const SIGNAL_PORT2: u8 = 1;
/// Idler photon, interferometer output 1 (or the only output without interferometers).
pub const IDLER_PORT1: u8 = 2;
pub const IDLER_PORT2: u8 = 3;
pub const CHANNEL_COUNT: u16 = 4;

/// Threshold single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    /// Dark-count rate (Hz).
    pub dark_rate: f64,
    /// Gaussian timing jitter, one standard deviation (s).
    pub jitter_sigma: f64,
    /// Non-paralyzable dead time (s).
    pub dead_time: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.85,
            dark_rate: 100.0,
            jitter_sigma: 50e-12,
            dead_time: 20e-9,
        }
    }
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_rate: 0.0,
            jitter_sigma: 0.0,
            dead_time: 20e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_probability("efficiency", self.efficiency)?;
        require_non_negative("dark_rate", self.dark_rate)?;
        require_non_negative("jitter_sigma", self.jitter_sigma)?;
        require_non_negative("dead_time", self.dead_time)
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub channel: u8,
    /// Absolute arrival time (ps).
    pub time_ps: u64,
}

impl TimeTag {
    pub fn new(channel: u8, time_ps: u64) -> Self {
        Self { channel, time_ps }
    }
}

/// One measurement cycle: polarization, AFC preparation, a wait, then the memory window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSchedule {
    pub polarization_window: f64,
    pub afc_window: f64,
    pub delay: f64,
    pub memory_window: f64,
    pub trailing_delay: f64,
}

impl Default for ExperimentSchedule {
    fn default() -> Self {
        Self {
            polarization_window: 1.8,
            afc_window: 1.9,
            delay: 0.2,
            memory_window: 1.0,
            trailing_delay: 0.1,
        }
    }
}

impl ExperimentSchedule {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("polarization_window", self.polarization_window)?;
        require_non_negative("afc_window", self.afc_window)?;
        require_non_negative("delay", self.delay)?;
        require_positive("memory_window", self.memory_window)?;
        require_non_negative("trailing_delay", self.trailing_delay)
    }

    pub fn cycle(&self) -> f64 {
        self.polarization_window
            + self.afc_window
            + self.delay
            + self.memory_window
            + self.trailing_delay
    }

    pub fn duty_cycle(&self) -> f64 {
        self.memory_window / self.cycle()
    }

    /// Offset of the memory window from the start of a cycle.
    pub fn memory_offset(&self) -> f64 {
        self.polarization_window + self.afc_window + self.delay
    }

    /// Memory windows `[start, end)` intersecting `[0, duration)`.
    pub fn memory_windows(&self, duration: f64) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        require_positive("duration", duration)?;
        let cycle = self.cycle();
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let start = k as f64 * cycle + self.memory_offset();
            if start >= duration {
                break;
            }
            let end = (start + self.memory_window).min(duration);
            out.push((start, end));
            k += 1;
        }
        Ok(out)
    }
}

/// What the memory does to one signal photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryActionModel {
    /// Probability of passing straight through, `exp(-d_eff)`.
    pub transmission_prob: f64,
    /// Probability of re-emission after one storage time.
    pub echo_efficiency: f64,
    /// Storage time (s).
    pub storage_time: f64,
}

impl MemoryActionModel {
    /// Transmission from the comb-averaged optical depth; the echo efficiency is supplied.
    pub fn from_comb(comb: &AfcComb, echo_efficiency: f64) -> Result<Self> {
        comb.validate()?;
        let model = Self {
            transmission_prob: (-comb.mean_optical_depth()).exp(),
            echo_efficiency,
            storage_time: comb.storage_time(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        require_probability("transmission_prob", self.transmission_prob)?;
        require_probability("echo_efficiency", self.echo_efficiency)?;
        require_positive("storage_time", self.storage_time)?;
        if self.transmission_prob + self.echo_efficiency > 1.0 + 1e-12 {
            return Err(invalid(
                "memory",
                format!(
                    "transmission {} plus echo efficiency {} exceeds 1",
                    self.transmission_prob, self.echo_efficiency
                ),
            ));
        }
        Ok(())
    }

    pub fn loss_prob(&self) -> f64 {
        (1.0 - self.transmission_prob - self.echo_efficiency).max(0.0)
    }
}
