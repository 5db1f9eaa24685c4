//! Franson interferometry with time-bin pairs: where the coincidence peaks
//! sit, how the central peak oscillates with the summed phase, how to
//! read a visibility off counts, and whether a pair of interferometers is
//! matched well enough to show two-photon interference at all.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{
    invalid, require_non_negative, require_positive, require_probability, Error, Result,
};
use crate::Estimate;

/// Time-bin two-photon state over the basis `{ee, el, le, ll}` (signal bin first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBinState {
    pub amplitudes: [Complex64; 4],
    /// Coherence factor `V_int` multiplying every off-diagonal element of the density matrix.
    pub coherence: f64,
    /// Separation between the early and late bins (s).
    pub bin_separation: f64,
    /// Photon coherence time (s); arrival times closer than this are indistinguishable.
    pub coherence_time: f64,
}

impl Default for TimeBinState {
    fn default() -> Self {
        Self::maximally_entangled(1.0)
    }
}

impl TimeBinState {
    /// `(|ee> + |ll>) / sqrt(2)` with coherence `v_int`.
    pub fn maximally_entangled(v_int: f64) -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amplitudes: [
                Complex64::new(h, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(h, 0.0),
            ],
            coherence: v_int,
            bin_separation: 32e-9,
            coherence_time: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let norm: f64 = self.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(invalid(
                "amplitudes",
                format!("squared norm is {norm}, expected 1"),
            ));
        }
        require_probability("coherence", self.coherence)?;
        require_positive("bin_separation", self.bin_separation)?;
        require_positive("coherence_time", self.coherence_time)
    }

    /// Density matrix `rho_jk = c_j c_k^*`, off-diagonals scaled by the coherence factor.
    pub fn density_matrix(&self) -> [[Complex64; 4]; 4] {
        let mut rho = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (j, row) in rho.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                let mut v = self.amplitudes[j] * self.amplitudes[k].conj();
                if j != k {
                    v *= self.coherence;
                }
                *cell = v;
            }
        }
        rho
    }
}

/// Two unbalanced Mach-Zehnder interferometers, one per photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FransonPair {
    /// Long-minus-short path delay of the signal interferometer (s).
    pub delay_signal: f64,
    pub delay_idler: f64,
    /// Phase on the long arm of the signal interferometer (rad).
    pub phase_signal: f64,
    pub phase_idler: f64,
    /// Loss probability in the short arm of both interferometers.
    pub loss_short: f64,
    /// Loss probability in the long arm of both interferometers.
    pub loss_long: f64,
    /// Standard deviation of the Gaussian jitter on the summed phase per measurement window (rad).
    pub phase_noise_sigma: f64,
}

impl Default for FransonPair {
    fn default() -> Self {
        Self {
            delay_signal: 32e-9,
            delay_idler: 32e-9,
            phase_signal: 0.0,
            phase_idler: 0.0,
            loss_short: 0.0,
            loss_long: 0.0,
            phase_noise_sigma: 0.0,
        }
    }
}

impl FransonPair {
    pub fn validate(&self) -> Result<()> {
        require_positive("delay_signal", self.delay_signal)?;
        require_positive("delay_idler", self.delay_idler)?;
        if !self.phase_signal.is_finite() || !self.phase_idler.is_finite() {
            return Err(invalid("phase", "phases must be finite"));
        }
        require_probability("loss_short", self.loss_short)?;
        require_probability("loss_long", self.loss_long)?;
        require_non_negative("phase_noise_sigma", self.phase_noise_sigma)
    }

    /// Summed phase `phi_s + phi_i` that sets the central-peak fringe.
    pub fn total_phase(&self) -> f64 {
        self.phase_signal + self.phase_idler
    }

    /// Same pair with the summed phase moved to `phi`, keeping the idler phase.
    pub fn with_total_phase(mut self, phi: f64) -> Self {
        self.phase_signal = phi - self.phase_idler;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakLabel {
    SideEl,
    Accidental,
    Central,
    SideLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    /// Signal-minus-idler delay (s).
    pub time: f64,
    pub label: PeakLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakStructure {
    /// Peaks in ascending time.
    pub peaks: Vec<Peak>,
    /// False when the storage time is not a half-integer multiple of the pump period.
    pub half_integer: bool,
}

/// Expected coincidence peaks around a retrieved echo.
///
/// The echo lands at `t_M`; the two phase-insensitive side peaks at
/// `t_M -/+ delay`; accidental peaks between neighbouring pump pulses at the
/// integer multiples of the period bracketing `t_M`.
pub fn peak_structure(storage_time: f64, delay: f64, rep_period: f64) -> Result<PeakStructure> {
    require_positive("storage_time", storage_time)?;
    require_non_negative("delay", delay)?;
    require_positive("rep_period", rep_period)?;
    let mut ratio = storage_time / rep_period;
    if (ratio - ratio.round()).abs() < 1e-9 {
        ratio = ratio.round();
    }
    let frac = ratio - ratio.floor();
    let half_integer = (frac - 0.5).abs() < 1e-6;

    let mut peaks = vec![
        Peak {
            time: storage_time - delay,
            label: PeakLabel::SideEl,
        },
        Peak {
            time: storage_time,
            label: PeakLabel::Central,
        },
        Peak {
            time: storage_time + delay,
            label: PeakLabel::SideLe,
        },
    ];
    let below = ratio.floor() * rep_period;
    let above = ratio.ceil() * rep_period;
    peaks.push(Peak {
        time: below,
        label: PeakLabel::Accidental,
    });
    if above != below {
        peaks.push(Peak {
            time: above,
            label: PeakLabel::Accidental,
        });
    }
    peaks.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(PeakStructure {
        peaks,
        half_integer,
    })
}

/// Relative central-peak rate at output `port` (1 or 2): `(1 +/- V cos phi) / 2`.
pub fn central_peak_rate(total_phase: f64, v: f64, port: u8) -> Result<f64> {
    require_probability("visibility", v)?;
    let c = v * total_phase.cos();
    match port {
        1 => Ok(0.5 * (1.0 + c)),
        2 => Ok(0.5 * (1.0 - c)),
        _ => Err(invalid("port", format!("must be 1 or 2, got {port}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    /// Summed phase (rad).
    pub phase: f64,
    pub count: f64,
}

/// Counts from which a visibility is estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum FringeData {
    Extrema { max: f64, min: f64 },
    Scan(Vec<FringePoint>),
}

/// Result of fitting `A (1 + V cos(phi + phi0))` to a fringe scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub visibility: Estimate,
    pub amplitude: f64,
    pub phase_offset: f64,
}

/// Fringe visibility with a Poissonian uncertainty.
pub fn visibility(data: &FringeData) -> Result<Estimate> {
    match data {
        FringeData::Extrema { max, min } => visibility_extrema(*max, *min),
        FringeData::Scan(points) => fit_fringe(points).map(|f| f.visibility),
    }
}

/// `(max - min) / (max + min)`, with `sqrt(N)` errors on both counts.
pub fn visibility_extrema(max: f64, min: f64) -> Result<Estimate> {
    require_non_negative("max", max)?;
    require_non_negative("min", min)?;
    let sum = max + min;
    if sum <= 0.0 {
        return Err(Error::UndefinedVisibility);
    }
    let v = (max - min) / sum;
    let sigma = 2.0 * (max * min * sum).sqrt() / (sum * sum);
    Ok(Estimate::new(v, sigma))
}

/// Weighted least-squares fit of `a + b cos phi + c sin phi`, weights `1 / max(N, 1)`.
pub fn fit_fringe(points: &[FringePoint]) -> Result<FringeFit> {
    if points.len() < 4 {
        return Err(invalid(
            "points",
            format!("a fringe fit needs at least 4 phases, got {}", points.len()),
        ));
    }
    for p in points {
        require_non_negative("count", p.count)?;
        if !p.phase.is_finite() {
            return Err(invalid("phase", "must be finite"));
        }
    }
    if points.iter().all(|p| p.count == 0.0) {
        return Err(Error::UndefinedVisibility);
    }

    let mut normal = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for p in points {
        let w = 1.0 / p.count.max(1.0);
        let x = [1.0, p.phase.cos(), p.phase.sin()];
        for j in 0..3 {
            rhs[j] += w * x[j] * p.count;
            for k in 0..3 {
                normal[j][k] += w * x[j] * x[k];
            }
        }
    }
    let cov = invert3(&normal).ok_or(Error::FitDegenerate(
        "fringe phases do not span a full period",
    ))?;
    let coef: Vec<f64> = (0..3)
        .map(|j| (0..3).map(|k| cov[j][k] * rhs[k]).sum())
        .collect();
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    if a <= 0.0 {
        return Err(Error::FitDegenerate("fitted mean count is not positive"));
    }
    let r = b.hypot(c);
    let v = r / a;
    let grad = if r > 0.0 {
        [-v / a, b / (a * r), c / (a * r)]
    } else {
        [0.0, 1.0 / a, 0.0]
    };
    let mut var = 0.0;
    for j in 0..3 {
        for k in 0..3 {
            var += grad[j] * cov[j][k] * grad[k];
        }
    }
    Ok(FringeFit {
        visibility: Estimate::new(v, var.max(0.0).sqrt()),
        amplitude: a,
        phase_offset: (-c).atan2(b),
    })
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
    if det.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *cell = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    Some(inv)
}

/// Default tolerance on `|delay - pump period|`, one pump pulse width.
pub const DEFAULT_DELAY_TOLERANCE: f64 = 4e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayClause {
    /// An interferometer delay does not match the pump period.
    PeriodMismatch,
    /// An interferometer delay is not longer than the single-photon coherence time.
    BelowCoherence,
    /// The two delays differ by more than the two-photon coherence.
    PairMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayDiagnostics {
    pub pass: bool,
    pub failed: Vec<DelayClause>,
    pub reasons: Vec<String>,
}

/// Checks the three delay conditions for two-photon interference.
pub fn delay_matching_check(
    delay_signal: f64,
    delay_idler: f64,
    single_photon_coherence: f64,
    pump_period: f64,
    pair_coherence_floor: f64,
    tolerance: f64,
) -> Result<DelayDiagnostics> {
    for (name, v) in [
        ("delay_signal", delay_signal),
        ("delay_idler", delay_idler),
        ("single_photon_coherence", single_photon_coherence),
        ("pump_period", pump_period),
        ("pair_coherence_floor", pair_coherence_floor),
        ("tolerance", tolerance),
    ] {
        require_positive(name, v)?;
    }
    let ns = |t: f64| t * 1e9;
    let mut failed = Vec::new();
    let mut reasons = Vec::new();

    let off = [
        (delay_signal - pump_period).abs(),
        (delay_idler - pump_period).abs(),
    ];
    if off.iter().any(|&d| d >= tolerance) {
        failed.push(DelayClause::PeriodMismatch);
        reasons.push(format!(
            "delays {:.3} ns / {:.3} ns differ from the pump period {:.3} ns by more than {:.3} ns",
            ns(delay_signal),
            ns(delay_idler),
            ns(pump_period),
            ns(tolerance)
        ));
    }
    if delay_signal <= single_photon_coherence || delay_idler <= single_photon_coherence {
        failed.push(DelayClause::BelowCoherence);
        reasons.push(format!(
            "delays {:.3} ns / {:.3} ns do not exceed the single-photon coherence time {:.3} ns",
            ns(delay_signal),
            ns(delay_idler),
            ns(single_photon_coherence)
        ));
    }
    let mismatch = (delay_signal - delay_idler).abs();
    if mismatch >= pair_coherence_floor {
        failed.push(DelayClause::PairMismatch);
        reasons.push(format!(
            "delay mismatch {:.3} ns is not below the two-photon coherence {:.3} ns",
            ns(mismatch),
            ns(pair_coherence_floor)
        ));
    }
    Ok(DelayDiagnostics {
        pass: failed.is_empty(),
        failed,
        reasons,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeRow {
    pub phase_deg: f64,
    pub counts_port1: u64,
    pub counts_port2: u64,
}

pub fn write_fringe_csv<W: Write>(mut out: W, rows: &[FringeRow]) -> io::Result<()> {
    writeln!(out, "phase_deg,counts_port1,counts_port2")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.phase_deg, r.counts_port1, r.counts_port2)?;
    }
    Ok(())
}
