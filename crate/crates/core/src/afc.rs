//! Atomic frequency comb: comb construction, closed-form storage efficiency,
//! a frequency-domain echo simulation, counts-based efficiency, and the
//! storage-time arithmetic imposed by side holes and the pump period.

use std::f64::consts::{LN_2, PI};
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, Error, Result};
use crate::spectral::{LineShape, SpectralLine};
use crate::Estimate;

/// Envelope level below which teeth are dropped.
const ENVELOPE_CUTOFF: f64 = 1e-3;

/// Side-hole splitting per unit field in Er:Y2SiO5 (Hz/T).
pub const SIDE_HOLE_SLOPE: f64 = 2.11e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ToothShape {
    #[default]
    Lorentzian,
    Gaussian,
    Square,
}

/// A periodic absorption profile.
///
/// `alpha(nu) = d0 + envelope(nu) * sum_k tooth(nu - center - k * spacing)`, with
/// teeth of peak optical depth `d` and full width `spacing / finesse`. The
/// envelope is a Gaussian of FWHM `envelope_fwhm` centred on `center`; an
/// infinite width disables it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfcComb {
    /// Tooth spacing (Hz), the inverse storage time.
    pub tooth_spacing: f64,
    pub finesse: f64,
    /// Peak optical depth of a tooth.
    pub peak_depth: f64,
    /// Flat background optical depth.
    pub background: f64,
    pub tooth_shape: ToothShape,
    pub envelope_fwhm: f64,
    /// Detuning of the comb centre (Hz).
    pub center: f64,
}

/// Creates a comb whose teeth are spaced by `1 / storage_time`.
pub fn build_comb(
    storage_time: f64,
    peak_depth: f64,
    background: f64,
    finesse: f64,
    shape: ToothShape,
    envelope_fwhm: f64,
) -> Result<AfcComb> {
    require_positive("storage_time", storage_time)?;
    let comb = AfcComb {
        tooth_spacing: 1.0 / storage_time,
        finesse,
        peak_depth,
        background,
        tooth_shape: shape,
        envelope_fwhm,
        center: 0.0,
    };
    comb.validate()?;
    Ok(comb)
}

impl AfcComb {
    pub fn validate(&self) -> Result<()> {
        require_positive("tooth_spacing", self.tooth_spacing)?;
        if !(self.finesse > 1.0) || !self.finesse.is_finite() {
            return Err(invalid(
                "finesse",
                format!(
                    "must exceed 1 or adjacent teeth merge, got {}",
                    self.finesse
                ),
            ));
        }
        require_non_negative("peak_depth", self.peak_depth)?;
        require_non_negative("background", self.background)?;
        if !(self.envelope_fwhm > 0.0) {
            return Err(invalid("envelope_fwhm", "must be positive (or infinite)"));
        }
        if !self.center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        Ok(())
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn storage_time(&self) -> f64 {
        1.0 / self.tooth_spacing
    }

    /// Full width at half maximum of one tooth (Hz).
    pub fn tooth_fwhm(&self) -> f64 {
        self.tooth_spacing / self.finesse
    }

    pub fn envelope(&self, nu: f64) -> f64 {
        if self.envelope_fwhm.is_infinite() {
            return 1.0;
        }
        let x = (nu - self.center) / self.envelope_fwhm;
        let e = (-4.0 * LN_2 * x * x).exp();
        if e < ENVELOPE_CUTOFF {
            0.0
        } else {
            e
        }
    }

    /// Sum of all teeth at `nu`, without envelope or background.
    pub fn comb_profile(&self, nu: f64) -> f64 {
        let d = self.peak_depth;
        if d == 0.0 {
            return 0.0;
        }
        let x = (nu - self.center) / self.tooth_spacing;
        match self.tooth_shape {
            ToothShape::Lorentzian => {
                // closed-form lattice sum of unit-peak Lorentzians
                let a = PI / self.finesse;
                d * 0.5 * a * a.sinh() / (a.cosh() - (2.0 * PI * x).cos())
            }
            ToothShape::Gaussian => {
                let frac = x - x.round();
                let k = 4.0 * LN_2 * self.finesse * self.finesse;
                (-4..=4)
                    .map(|j| {
                        let u = frac - j as f64;
                        (-k * u * u).exp()
                    })
                    .sum::<f64>()
                    * d
            }
            ToothShape::Square => {
                let frac = x - x.round();
                if frac.abs() < 0.5 / self.finesse {
                    d
                } else {
                    0.0
                }
            }
        }
    }

    /// Optical depth at detuning `nu`.
    pub fn absorption(&self, nu: f64) -> f64 {
        let env = self.envelope(nu);
        if env == 0.0 {
            self.background
        } else {
            self.background + env * self.comb_profile(nu)
        }
    }

    /// Optical depth averaged over the cell `[nu - width/2, nu + width/2]`.
    ///
    /// Square teeth are integrated exactly so that their edges do not alias
    /// on a coarse grid; smooth shapes are point-sampled.
    pub fn cell_absorption(&self, nu: f64, width: f64) -> f64 {
        if self.tooth_shape != ToothShape::Square || self.peak_depth == 0.0 {
            return self.absorption(nu);
        }
        let env = self.envelope(nu);
        if env == 0.0 {
            return self.background;
        }
        let duty = 1.0 / self.finesse;
        // cumulative tooth coverage in units of the spacing
        let coverage = |y: f64| {
            let n = (y + 0.5).floor();
            n * duty + (y - n).clamp(-0.5 * duty, 0.5 * duty)
        };
        let a = (nu - 0.5 * width - self.center) / self.tooth_spacing;
        let b = (nu + 0.5 * width - self.center) / self.tooth_spacing;
        let fill = (coverage(b) - coverage(a)) / (b - a);
        self.background + env * self.peak_depth * fill
    }

    /// Comb-averaged optical depth seen by a broadband photon.
    pub fn mean_optical_depth(&self) -> f64 {
        let per_tooth = match self.tooth_shape {
            ToothShape::Lorentzian => PI / 2.0,
            ToothShape::Gaussian => (PI / (4.0 * LN_2)).sqrt(),
            ToothShape::Square => 1.0,
        };
        self.background + self.peak_depth * per_tooth / self.finesse
    }

    /// Writes `detuning_hz,optical_depth` rows for `n` points spanning `[start, stop]`.
    pub fn write_absorption_csv<W: Write>(
        &self,
        mut out: W,
        start: f64,
        stop: f64,
        n: usize,
    ) -> io::Result<()> {
        writeln!(out, "detuning_hz,optical_depth")?;
        let step = if n > 1 {
            (stop - start) / (n - 1) as f64
        } else {
            0.0
        };
        for k in 0..n {
            let nu = start + step * k as f64;
            writeln!(out, "{nu},{}", self.absorption(nu))?;
        }
        Ok(())
    }
}

/// Storage efficiency of a comb with Gaussian-like teeth of finesse `F`:
/// `(d/F)^2 exp(-d/F) exp(-d0) exp(-pi^2 / (2 ln2 F^2))`.
pub fn efficiency_lorentzian(d: f64, finesse: f64, d0: f64) -> Result<f64> {
    require_non_negative("d", d)?;
    require_non_negative("d0", d0)?;
    if !(finesse > 1.0) {
        return Err(invalid("finesse", format!("must exceed 1, got {finesse}")));
    }
    let r = d / finesse;
    let dephasing = (-PI * PI / (2.0 * LN_2 * finesse * finesse)).exp();
    Ok(r * r * (-r).exp() * (-d0).exp() * dephasing)
}

/// Optimal square-tooth comb for a given optical depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SquareOptimum {
    /// Optimal tooth half-width as an angular frequency (rad/s), so that
    /// `gamma_opt * t_M = atan(2 pi / d)`.
    pub gamma_opt: f64,
    /// Storage efficiency including the background factor `exp(-d0)`.
    pub eta_opt: f64,
    /// Tooth full width in Hz, `gamma_opt / pi`.
    pub tooth_width_hz: f64,
    /// Equivalent finesse, spacing over tooth full width.
    pub finesse: f64,
}

/// Square-tooth optimum: `Gamma t_M = atan(2 pi / d)` and
/// `eta = (d/pi)^2 sin^2(Gamma t_M) exp(-d Gamma t_M / pi) exp(-d0)`.
pub fn optimal_square_params(d: f64, d0: f64, storage_time: f64) -> Result<SquareOptimum> {
    require_positive("d", d)?;
    require_non_negative("d0", d0)?;
    require_positive("storage_time", storage_time)?;
    let phase = (2.0 * PI / d).atan();
    let eta = square_efficiency(d, phase) * (-d0).exp();
    let gamma_opt = phase / storage_time;
    Ok(SquareOptimum {
        gamma_opt,
        eta_opt: eta,
        tooth_width_hz: gamma_opt / PI,
        finesse: PI / phase,
    })
}

/// Square-tooth efficiency as a function of the dimensionless half-width `Gamma t_M`.
pub fn square_efficiency(d: f64, gamma_tm: f64) -> f64 {
    let s = gamma_tm.sin();
    (d / PI).powi(2) * s * s * (-d * gamma_tm / PI).exp()
}

/// Frequency sampling for [`simulate_echo`], centred on the input line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub span_hz: f64,
    pub n_samples: usize,
}

impl FrequencyGrid {
    pub fn resolution(&self) -> f64 {
        self.span_hz / self.n_samples as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoResult {
    /// Sample times (s), ascending.
    pub time_grid: Vec<f64>,
    /// Output intensity per time bin, normalized to the total input energy.
    pub output_intensity: Vec<f64>,
    /// Energy fraction in the directly transmitted lobe.
    pub transmission_fraction: f64,
    /// Energy fraction in the lobe at one storage time.
    pub first_echo_efficiency: f64,
    /// Delay of the first echo: intensity centroid of its lobe minus that of the input (s).
    pub echo_time: f64,
}

impl EchoResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time_s,intensity")?;
        for (t, i) in self.time_grid.iter().zip(&self.output_intensity) {
            writeln!(out, "{t},{i}")?;
        }
        Ok(())
    }
}

/// Propagates a single-photon wavepacket through the comb in the frequency domain.
///
/// The medium transfers field amplitude with `H(nu) = exp(-chi(nu)/2)`, where
/// `chi` is the causal response whose real part is the sampled optical depth.
/// The imaginary (dispersive) part is obtained by discarding the negative-time
/// half of the transform of `alpha`. Expanding `H` in powers of the storage
/// delay shows that the first echo then carries `|a_1|^2 exp(-a_0)` of the
/// input, with `a_k` the Fourier coefficients of the comb.
///
/// A Lorentzian input line is modelled as the one-sided exponential wavepacket
/// emitted by a cavity; a Gaussian one as a transform-limited Gaussian pulse.
/// Lobe energies are integrated over `|t - t_lobe| < 5 T_c`, where `T_c` is
/// the photon lifetime of the input line.
pub fn simulate_echo(
    comb: &AfcComb,
    input: &SpectralLine,
    grid: &FrequencyGrid,
) -> Result<EchoResult> {
    comb.validate()?;
    input.validate()?;
    if grid.n_samples < 2 || !(grid.span_hz > 0.0) {
        return Err(invalid(
            "grid",
            "needs a positive span and at least two samples",
        ));
    }
    let dnu = grid.resolution();
    let max_step = comb.tooth_fwhm() / 10.0;
    if dnu >= max_step {
        return Err(Error::Resolution {
            reason: format!(
                "resolution {dnu:.4e} Hz is not finer than a tenth of the tooth width ({max_step:.4e} Hz)"
            ),
            required_samples: (grid.span_hz / max_step).floor() as usize + 1,
        });
    }
    let needed_half_span = input.half_span_below(1e-4);
    if 0.5 * grid.span_hz < needed_half_span {
        return Err(Error::Resolution {
            reason: format!(
                "span {:.4e} Hz does not cover the input line down to 1e-4 ({:.4e} Hz needed)",
                grid.span_hz,
                2.0 * needed_half_span
            ),
            required_samples: (2.0 * needed_half_span / dnu).ceil() as usize,
        });
    }

    let n = grid.n_samples;
    let nu0 = input.center - 0.5 * grid.span_hz;
    let alpha: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| comb.cell_absorption(nu0 + (j as f64 + 0.5) * dnu, dnu))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    // causal completion of the absorption profile
    let mut response: Vec<Complex64> = alpha.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    inverse.process(&mut response);
    let scale = 1.0 / n as f64;
    for (m, r) in response.iter_mut().enumerate() {
        let weight = if m == 0 || (n % 2 == 0 && m == n / 2) {
            1.0
        } else if m < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *r *= weight * scale;
    }
    forward.process(&mut response);
    let transfer = response;

    let field_in: Vec<Complex64> = (0..n)
        .map(|j| {
            let nu = nu0 + (j as f64 + 0.5) * dnu;
            input_field(input, nu)
        })
        .collect();
    let mut field_out: Vec<Complex64> = field_in
        .iter()
        .zip(&transfer)
        .map(|(e, chi)| e * (-0.5 * chi).exp())
        .collect();
    let mut time_in = field_in;
    inverse.process(&mut time_in);
    inverse.process(&mut field_out);

    let energy_in: f64 = time_in.iter().map(|e| e.norm_sqr()).sum();
    let span_t = 1.0 / dnu;
    let time_of = |m: usize| {
        if m < n.div_ceil(2) {
            m as f64 / n as f64 * span_t
        } else {
            (m as f64 - n as f64) / n as f64 * span_t
        }
    };

    // ascending time order
    let start = n.div_ceil(2);
    let order: Vec<usize> = (start..n).chain(0..start).collect();
    let time_grid: Vec<f64> = order.iter().map(|&m| time_of(m)).collect();
    let output_intensity: Vec<f64> = order
        .iter()
        .map(|&m| field_out[m].norm_sqr() / energy_in)
        .collect();

    let storage = comb.storage_time();
    let half_window = (5.0 * input.lifetime()).min(0.5 * storage);
    let lobe = |center: f64| -> f64 {
        time_grid
            .iter()
            .zip(&output_intensity)
            .filter(|(t, _)| (**t - center).abs() < half_window)
            .map(|(_, i)| i)
            .sum()
    };
    let transmission_fraction = lobe(0.0);
    let first_echo_efficiency = lobe(storage);
    let input_intensity: Vec<f64> = order
        .iter()
        .map(|&m| time_in[m].norm_sqr() / energy_in)
        .collect();
    let centroid = |intensity: &[f64], center: f64| -> Option<f64> {
        let (mut w, mut wt) = (0.0, 0.0);
        for (t, i) in time_grid.iter().zip(intensity) {
            if (*t - center).abs() < half_window {
                w += i;
                wt += i * t;
            }
        }
        (w > 0.0).then(|| wt / w)
    };
    let echo_time = match (
        centroid(&output_intensity, storage),
        centroid(&input_intensity, 0.0),
    ) {
        (Some(echo), Some(input)) => echo - input,
        _ => storage,
    };

    Ok(EchoResult {
        time_grid,
        output_intensity,
        transmission_fraction,
        first_echo_efficiency,
        echo_time,
    })
}

fn input_field(line: &SpectralLine, nu: f64) -> Complex64 {
    match line.shape {
        LineShape::Lorentzian => Complex64::new(1.0, 2.0 * (nu - line.center) / line.fwhm).inv(),
        LineShape::Gaussian => Complex64::new(line.weight(nu).sqrt(), 0.0),
    }
}

/// Memory efficiency from coincidence and single counts:
/// `(cc_echo / cc_trans) * (sc_trans / sc_input)`, with `sqrt(N)` errors propagated.
pub fn efficiency_from_counts(
    cc_echo: u64,
    cc_trans: u64,
    sc_trans: u64,
    sc_input: u64,
) -> Result<Estimate> {
    if cc_trans == 0 {
        return Err(Error::DivisionDomain(
            "transmitted coincidence count is zero",
        ));
    }
    if sc_input == 0 {
        return Err(Error::DivisionDomain("input single count is zero"));
    }
    let (ce, ct, st, si) = (
        cc_echo as f64,
        cc_trans as f64,
        sc_trans as f64,
        sc_input as f64,
    );
    let eta = ce / ct * st / si;
    let d_ce = st / (ct * si) * ce.sqrt();
    let d_ct = eta / ct.sqrt();
    let d_st = ce / (ct * si) * st.sqrt();
    let d_si = eta / si.sqrt();
    let sigma = (d_ce * d_ce + d_ct * d_ct + d_st * d_st + d_si * d_si).sqrt();
    Ok(Estimate::new(eta, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetConfig {
    /// Field magnitude (T).
    pub field: f64,
    /// Field angle to the D1 axis (degrees); informational.
    pub angle_deg: f64,
    /// Crystal temperature (K).
    pub temperature: f64,
}

impl Default for MagnetConfig {
    fn default() -> Self {
        Self {
            field: 1.5,
            angle_deg: 120.0,
            temperature: 0.23,
        }
    }
}

impl MagnetConfig {
    pub fn validate(&self) -> Result<()> {
        require_non_negative("field", self.field)?;
        require_positive("temperature", self.temperature)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideHoles {
    /// Side-hole splitting (Hz).
    pub splitting: f64,
    /// Storage time of a comb with this period, `1 / splitting`; `None` at zero field.
    pub storage_period: Option<f64>,
}

/// Side-hole splitting `slope * B` and the equivalent comb period.
pub fn side_hole_splitting(mag: &MagnetConfig, slope: f64) -> Result<SideHoles> {
    mag.validate()?;
    require_non_negative("slope", slope)?;
    let splitting = slope * mag.field;
    Ok(SideHoles {
        splitting,
        storage_period: (splitting > 0.0).then(|| 1.0 / splitting),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageCandidate {
    pub storage_time: f64,
    /// Distance to the nearest integer multiple of the side-hole period (s).
    pub residual: f64,
    /// `n` in `storage_time = (n + 1/2) * rep_period`.
    pub half_integer_index: u64,
    /// Nearest integer multiple of the side-hole period.
    pub side_multiple: u64,
}

/// Storage times at half-integer multiples of the pump period inside
/// `[lo, hi]`, ranked by distance to an integer multiple of the side-hole
/// period (ties broken by the shorter time).
pub fn optimize_storage_time(
    rep_period: f64,
    side_period: f64,
    range: (f64, f64),
) -> Result<Vec<StorageCandidate>> {
    require_positive("rep_period", rep_period)?;
    require_positive("side_period", side_period)?;
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(invalid(
            "range",
            format!("[{lo}, {hi}] is not a valid interval"),
        ));
    }
    let eps = 1e-9;
    let first = (lo / rep_period - 0.5 - eps).ceil().max(0.0) as u64;
    let last = (hi / rep_period - 0.5 + eps).floor();
    if last < 0.0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<StorageCandidate> = (first..=last as u64)
        .map(|n| {
            let t = (n as f64 + 0.5) * rep_period;
            let m = (t / side_period).round();
            StorageCandidate {
                storage_time: t,
                residual: (t - m * side_period).abs(),
                half_integer_index: n,
                side_multiple: m as u64,
            }
        })
        .collect();
    // residuals compared on a femtosecond grid so rounding noise cannot break ties
    let fs = |t: f64| (t * 1e15).round() as i64;
    out.sort_by_key(|c| (fs(c.residual), fs(c.storage_time)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multiplexing {
    /// Time-bandwidth product, storage time over photon duration.
    pub tbp: f64,
    /// Number of pump pulses inside one storage time.
    pub mode_count: f64,
}

/// Time-bandwidth product and temporal mode count.
///
/// Inputs are quantized to femtoseconds first, so durations that are exact
/// multiples of each other produce exact ratios.
pub fn multiplexing_metrics(
    storage_time: f64,
    photon_width: f64,
    rep_period: f64,
) -> Result<Multiplexing> {
    require_positive("storage_time", storage_time)?;
    require_positive("photon_width", photon_width)?;
    require_positive("rep_period", rep_period)?;
    let fs = |t: f64| (t * 1e15).round().max(1.0);
    Ok(Multiplexing {
        tbp: fs(storage_time) / fs(photon_width),
        mode_count: fs(storage_time) / fs(rep_period),
    })
}
