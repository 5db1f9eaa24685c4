//! Photon-pair source model: pair-number statistics, the two-photon
//! coincidence profile of a cavity-enhanced source, and analytic
//! coincidence/accidental rates for click detectors.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, Result};
use crate::montecarlo::DetectorModel;
use crate::spectral::SpectralLine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PumpMode {
    #[default]
    Pulsed,
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpTrain {
    /// Pulse repetition period (s).
    pub period: f64,
    /// Pulse duration (s).
    pub pulse_width: f64,
    pub mode: PumpMode,
    /// Mean number of pairs per pulse (or per `period` in CW mode).
    pub mean_pairs_per_pulse: f64,
}

impl Default for PumpTrain {
    fn default() -> Self {
        Self {
            period: 32e-9,
            pulse_width: 4e-9,
            mode: PumpMode::Pulsed,
            mean_pairs_per_pulse: 0.01,
        }
    }
}

impl PumpTrain {
    pub fn validate(&self) -> Result<()> {
        require_positive("period", self.period)?;
        require_positive("pulse_width", self.pulse_width)?;
        if self.pulse_width > self.period {
            return Err(invalid(
                "pulse_width",
                format!(
                    "{} s exceeds the period {} s",
                    self.pulse_width, self.period
                ),
            ));
        }
        require_non_negative("mean_pairs_per_pulse", self.mean_pairs_per_pulse)
    }
}

/// Photon-number distribution of the pairs emitted in one pump pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PairStatistics {
    /// Single-mode thermal, `P(n) = mu^n / (1 + mu)^(n + 1)`.
    #[default]
    Thermal,
    Poissonian,
}

impl PairStatistics {
    pub fn pmf(self, mu: f64, n: u32) -> Result<f64> {
        require_non_negative("mu", mu)?;
        Ok(match self {
            PairStatistics::Thermal => {
                if mu == 0.0 {
                    if n == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    // exp/ln form keeps large n finite
                    (n as f64 * (mu / (1.0 + mu)).ln() - (1.0 + mu).ln()).exp()
                }
            }
            PairStatistics::Poissonian => {
                if mu == 0.0 {
                    if n == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let ln_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
                    (n as f64 * mu.ln() - mu - ln_fact).exp()
                }
            }
        })
    }

    /// Probability generating function `E[z^n]`.
    pub fn pgf(self, mu: f64, z: f64) -> f64 {
        match self {
            PairStatistics::Thermal => 1.0 / (1.0 + mu * (1.0 - z)),
            PairStatistics::Poissonian => (-mu * (1.0 - z)).exp(),
        }
    }

    /// Probability of at least one pair.
    pub fn p_nonzero(self, mu: f64) -> f64 {
        1.0 - self.pgf(mu, 0.0)
    }
}

/// Single-mode thermal pair-number distribution.
pub fn pair_number_pmf(mu: f64, n: u32) -> Result<f64> {
    PairStatistics::Thermal.pmf(mu, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSource {
    pub pump: PumpTrain,
    pub signal_line: SpectralLine,
    pub idler_line: SpectralLine,
    /// Signal photon lifetime in the cavity (s).
    pub signal_lifetime: f64,
    /// Idler photon lifetime in the cavity (s).
    pub idler_lifetime: f64,
    /// Flat background rate added to every detection channel (Hz).
    pub noise_rate_per_channel: f64,
    pub statistics: PairStatistics,
}

impl PairSource {
    /// Builds a source whose lifetimes follow from the line widths, `T = 1/(2 pi dnu)`.
    pub fn from_lines(
        pump: PumpTrain,
        signal_line: SpectralLine,
        idler_line: SpectralLine,
    ) -> Result<Self> {
        signal_line.validate()?;
        idler_line.validate()?;
        let src = Self {
            pump,
            signal_line,
            idler_line,
            signal_lifetime: signal_line.lifetime(),
            idler_lifetime: idler_line.lifetime(),
            noise_rate_per_channel: 0.0,
            statistics: PairStatistics::Thermal,
        };
        src.validate()?;
        Ok(src)
    }

    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        self.signal_line.validate()?;
        self.idler_line.validate()?;
        require_positive("signal_lifetime", self.signal_lifetime)?;
        require_positive("idler_lifetime", self.idler_lifetime)?;
        require_non_negative("noise_rate_per_channel", self.noise_rate_per_channel)
    }

    pub fn with_mean_pairs(mut self, mu: f64) -> Self {
        self.pump.mean_pairs_per_pulse = mu;
        self
    }
}

/// Peak-normalized probability of an idler-start / signal-stop coincidence at delay `tau`.
///
/// The profile decays as `exp(-tau/T_s)` for positive delays and `exp(tau/T_i)` for negative ones.
pub fn coincidence_profile(idler_lifetime: f64, signal_lifetime: f64, tau: f64) -> Result<f64> {
    require_positive("idler_lifetime", idler_lifetime)?;
    require_positive("signal_lifetime", signal_lifetime)?;
    Ok(if tau >= 0.0 {
        (-tau / signal_lifetime).exp()
    } else {
        (tau / idler_lifetime).exp()
    })
}

/// Full width at half maximum of [`coincidence_profile`], `ln2 (T_i + T_s)`.
pub fn profile_fwhm(idler_lifetime: f64, signal_lifetime: f64) -> Result<f64> {
    require_positive("idler_lifetime", idler_lifetime)?;
    require_positive("signal_lifetime", signal_lifetime)?;
    Ok(LN_2 * (idler_lifetime + signal_lifetime))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticRates {
    /// Rate of coincidences in the central window, true plus accidental (Hz).
    pub cc_rate: f64,
    /// Rate of accidental coincidences expected in one window (Hz).
    pub accidental_rate: f64,
    /// `(true + accidental) / accidental`; infinite when no accidentals are possible.
    pub car: f64,
}

/// Coincidence and accidental rates for threshold detectors.
///
/// Pulsed mode evaluates exact click probabilities per pulse from the generating
/// function of the pair statistics: a click on a detector of efficiency `eta`
/// fails with probability `G(1 - eta) exp(-n)`, where `n` is the mean number of
/// dark and noise counts inside `window`. Accidentals are the product of the
/// single-click probabilities of independent pulses. CW mode treats pairs as a
/// Poisson process of rate `mu / period`.
pub fn analytic_rates(
    src: &PairSource,
    signal_det: &DetectorModel,
    idler_det: &DetectorModel,
    window: f64,
) -> Result<AnalyticRates> {
    src.validate()?;
    signal_det.validate()?;
    idler_det.validate()?;
    require_positive("window", window)?;
    let mu = src.pump.mean_pairs_per_pulse;
    let (eta_s, eta_i) = (signal_det.efficiency, idler_det.efficiency);
    let noise_s = (src.noise_rate_per_channel + signal_det.dark_rate) * window;
    let noise_i = (src.noise_rate_per_channel + idler_det.dark_rate) * window;

    match src.pump.mode {
        PumpMode::Pulsed => {
            let stats = src.statistics;
            let none_s = stats.pgf(mu, 1.0 - eta_s) * (-noise_s).exp();
            let none_i = stats.pgf(mu, 1.0 - eta_i) * (-noise_i).exp();
            let none_both =
                stats.pgf(mu, (1.0 - eta_s) * (1.0 - eta_i)) * (-(noise_s + noise_i)).exp();
            let p_s = 1.0 - none_s;
            let p_i = 1.0 - none_i;
            let p_si = (1.0 - none_s - none_i + none_both).max(0.0);
            let acc = p_s * p_i;
            let pulse_rate = 1.0 / src.pump.period;
            Ok(AnalyticRates {
                cc_rate: p_si * pulse_rate,
                accidental_rate: acc * pulse_rate,
                car: if acc > 0.0 { p_si / acc } else { f64::INFINITY },
            })
        }
        PumpMode::Cw => {
            let pair_rate = mu / src.pump.period;
            let singles_s = pair_rate * eta_s + noise_s / window;
            let singles_i = pair_rate * eta_i + noise_i / window;
            let true_rate = pair_rate * eta_s * eta_i;
            let acc = singles_s * singles_i * window;
            Ok(AnalyticRates {
                cc_rate: true_rate + acc,
                accidental_rate: acc,
                car: if acc > 0.0 {
                    (true_rate + acc) / acc
                } else {
                    f64::INFINITY
                },
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::LineShape;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_source(mu: f64) -> PairSource {
        let signal = SpectralLine::new(0.0, 185e6, LineShape::Lorentzian).unwrap();
        let idler = SpectralLine::new(0.0, 183e6, LineShape::Lorentzian).unwrap();
        PairSource::from_lines(PumpTrain::default(), signal, idler)
            .unwrap()
            .with_mean_pairs(mu)
    }

    fn ideal_detector() -> DetectorModel {
        DetectorModel {
            efficiency: 1.0,
            dark_rate: 0.0,
            jitter_sigma: 0.0,
            dead_time: 0.0,
        }
    }

    #[test]
    fn thermal_pmf_values() {
        assert_eq!(pair_number_pmf(0.0, 0).unwrap(), 1.0);
        assert_eq!(pair_number_pmf(0.0, 3).unwrap(), 0.0);
        assert!((pair_number_pmf(0.1, 1).unwrap() - 0.1 / 1.21).abs() < 1e-15);
        assert!(pair_number_pmf(-0.1, 0).is_err());
    }

    #[test]
    fn pmf_normalized_with_correct_mean() {
        for stats in [PairStatistics::Thermal, PairStatistics::Poissonian] {
            for mu in [0.01, 0.1, 0.5, 2.0] {
                let (mut total, mut mean) = (0.0, 0.0);
                for n in 0..400 {
                    let p = stats.pmf(mu, n).unwrap();
                    total += p;
                    mean += n as f64 * p;
                }
                assert!(
                    (1.0 - total).abs() < 1e-12,
                    "{stats:?} mu={mu} total={total}"
                );
                assert!((mean - mu).abs() < 1e-10, "{stats:?} mu={mu} mean={mean}");
            }
        }
    }

    #[test]
    fn derived_lifetimes_follow_linewidths() {
        let src = reference_source(0.1);
        let expect_s = 1.0 / (2.0 * std::f64::consts::PI * 185e6);
        assert!(((src.signal_lifetime - expect_s) / expect_s).abs() < 1e-9);
    }

    #[test]
    fn profile_shape() {
        let (ti, ts) = (997e-12, 980e-12);
        assert_eq!(coincidence_profile(ti, ts, 0.0).unwrap(), 1.0);
        assert!((coincidence_profile(ti, ts, ts).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((coincidence_profile(ti, ts, -ti).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!(coincidence_profile(0.0, ts, 0.0).is_err());
        // continuity at zero
        let left = coincidence_profile(ti, ts, -1e-18).unwrap();
        assert!((left - 1.0).abs() < 1e-6);
    }

    /// Bisection on each flank of the profile; independent of the closed form.
    fn numerical_fwhm(ti: f64, ts: f64) -> f64 {
        let half = |tau: f64| coincidence_profile(ti, ts, tau).unwrap() - 0.5;
        let bisect = |mut lo: f64, mut hi: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if half(lo).signum() == half(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let right = bisect(0.0, 50.0 * ts);
        let left = bisect(-50.0 * ti, 0.0);
        right - left
    }

    #[test]
    fn fwhm_matches_measured_peak_width() {
        let w = profile_fwhm(997e-12, 980e-12).unwrap();
        assert!((w - 1370e-12).abs() < 1e-12, "{w}");
        let sym = profile_fwhm(1e-9, 1e-9).unwrap();
        assert!((sym - 2.0 * LN_2 * 1e-9).abs() < 1e-24);
    }

    #[test]
    fn fwhm_agrees_with_half_max_search() {
        // frozen from the bisection oracle: 2.7726 ns for (1 ns, 3 ns)
        let numeric = numerical_fwhm(1e-9, 3e-9);
        assert!((numeric - 2.7726e-9).abs() < 1e-13);
        for (ti, ts) in [(1e-9, 3e-9), (997e-12, 980e-12), (5e-12, 2e-9)] {
            let closed = profile_fwhm(ti, ts).unwrap();
            let numeric = numerical_fwhm(ti, ts);
            assert!(((closed - numeric) / numeric).abs() < 1e-3);
        }
    }

    #[test]
    fn profile_area_is_sum_of_lifetimes() {
        let (ti, ts): (f64, f64) = (997e-12, 980e-12);
        let h = 0.1e-12;
        let span = 40.0 * ti.max(ts);
        let n = (2.0 * span / h) as usize;
        // midpoint rule
        let area: f64 = (0..n)
            .map(|k| {
                let tau = -span + (k as f64 + 0.5) * h;
                coincidence_profile(ti, ts, tau).unwrap() * h
            })
            .sum();
        assert!(((area - (ti + ts)) / (ti + ts)).abs() < 1e-3);
    }

    #[test]
    fn car_limit_without_loss() {
        let src = reference_source(0.1);
        let det = ideal_detector();
        let rates = analytic_rates(&src, &det, &det, 4e-9).unwrap();
        assert!((rates.car - 11.0).abs() < 1e-12, "{}", rates.car);

        let tiny = analytic_rates(&reference_source(1e-6), &det, &det, 4e-9).unwrap();
        assert!((tiny.car - (1.0 + 1e6)).abs() / 1e6 < 1e-6);

        let dark = analytic_rates(&reference_source(0.0), &det, &det, 4e-9).unwrap();
        assert!(dark.car.is_infinite());
        assert!(analytic_rates(&src, &det, &det, 0.0).is_err());
    }

    /// Brute-force sampling of pair numbers with click detection.
    #[test]
    fn car_matches_sampled_pair_numbers() {
        let mu = 0.1;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = mu / (1.0 + mu);
        let sample_n = |rng: &mut ChaCha8Rng| {
            let mut n = 0u32;
            while rng.random::<f64>() < q {
                n += 1;
            }
            n
        };
        let pulses = 400_000;
        let clicks: Vec<bool> = (0..pulses).map(|_| sample_n(&mut rng) > 0).collect();
        let coincident = clicks.iter().filter(|&&c| c).count() as f64;
        let accidental = clicks.windows(2).filter(|w| w[0] && w[1]).count() as f64;
        let car = coincident / accidental * ((pulses - 1) as f64 / pulses as f64);
        let sigma = car * (1.0 / coincident + 1.0 / accidental).sqrt();
        let det = ideal_detector();
        let analytic = analytic_rates(&reference_source(mu), &det, &det, 4e-9)
            .unwrap()
            .car;
        assert!(
            (car - analytic).abs() < 3.0 * sigma,
            "sampled {car} ± {sigma}, analytic {analytic}"
        );
    }

    #[test]
    fn cc_rate_linear_at_low_mu() {
        let det = DetectorModel {
            efficiency: 0.3,
            ..ideal_detector()
        };
        let a = analytic_rates(&reference_source(1e-4), &det, &det, 4e-9).unwrap();
        let b = analytic_rates(&reference_source(2e-4), &det, &det, 4e-9).unwrap();
        assert!((b.cc_rate / a.cc_rate - 2.0).abs() < 1e-3);
    }

    #[test]
    fn cw_rates() {
        let mut src = reference_source(0.01);
        src.pump.mode = PumpMode::Cw;
        let det = DetectorModel {
            efficiency: 0.5,
            ..ideal_detector()
        };
        let r = analytic_rates(&src, &det, &det, 4e-9).unwrap();
        let pair_rate: f64 = 0.01 / 32e-9;
        let acc = (pair_rate * 0.5).powi(2) * 4e-9;
        assert!((r.accidental_rate - acc).abs() / acc < 1e-12);
        assert!(r.car > 1.0);
    }

    proptest! {
        #[test]
        fn rates_monotone_in_mu(
            mu in 1e-4f64..2.0,
            step in 1.01f64..3.0,
            eta_s in 0.05f64..1.0,
            eta_i in 0.05f64..1.0,
            dark in 0.0f64..1e4,
            poisson in any::<bool>(),
        ) {
            let det_s = DetectorModel { efficiency: eta_s, dark_rate: dark, ..ideal_detector() };
            let det_i = DetectorModel { efficiency: eta_i, dark_rate: dark, ..ideal_detector() };
            let mut lo = reference_source(mu);
            let mut hi = reference_source(mu * step);
            if poisson {
                lo.statistics = PairStatistics::Poissonian;
                hi.statistics = PairStatistics::Poissonian;
            }
            let a = analytic_rates(&lo, &det_s, &det_i, 4e-9).unwrap();
            let b = analytic_rates(&hi, &det_s, &det_i, 4e-9).unwrap();
            prop_assert!(b.cc_rate > a.cc_rate);
            prop_assert!(b.car < a.car);
        }

        #[test]
        fn fwhm_symmetric_case(t in 1e-12f64..1e-6) {
            let w = profile_fwhm(t, t).unwrap();
            prop_assert!((w - 2.0 * LN_2 * t).abs() <= 1e-15 * t);
        }
    }

    #[test]
    fn pump_validation() {
        let mut p = PumpTrain::default();
        assert!(p.validate().is_ok());
        p.pulse_width = 40e-9;
        assert!(p.validate().is_err());
        p.pulse_width = 4e-9;
        p.mean_pairs_per_pulse = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn p_nonzero_consistent_with_pmf() {
        let p = PairStatistics::Thermal.p_nonzero(0.2);
        assert!((p - (1.0 - pair_number_pmf(0.2, 0).unwrap())).abs() < 1e-15);
        let p = PairStatistics::Poissonian.p_nonzero(0.2);
        let p0 = PairStatistics::Poissonian.pmf(0.2, 0).unwrap();
        assert!((p - (1.0 - p0)).abs() < 1e-15);
    }
}
