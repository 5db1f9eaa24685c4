//! From time tags to figures of merit: coincidence histograms, g2 and CAR,
//! the coincidence-profile fit, the entanglement witness, and the two
//! calibration fits (spin temperature and side-hole slope).

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_non_negative, require_positive, Error, Result};
use crate::montecarlo::TimeTag;
use crate::Estimate;

const PS: f64 = 1e12;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Histogram of stop-minus-start delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    /// Bin width (s).
    pub bin_width: f64,
    /// Lower edge of the first bin (s).
    pub origin: f64,
    pub counts: Vec<u64>,
    pub start_channel: u8,
    pub stop_channel: u8,
    /// Time spanned by the tags that were histogrammed (s).
    pub integration_time: f64,
}

impl CoincidenceHistogram {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.origin + self.bin_width * self.counts.len() as f64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.origin + (k as f64 + 0.5) * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts in bins whose centres lie in `[tau - window/2, tau + window/2)`.
    pub fn window_counts(&self, tau: f64, window: f64) -> u64 {
        let (lo, hi) = (tau - 0.5 * window, tau + 0.5 * window);
        // a small slack keeps centres that sit exactly on an edge stable
        let eps = 1e-6 * self.bin_width;
        self.counts
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let c = self.bin_center(*k);
                c >= lo - eps && c < hi - eps
            })
            .map(|(_, n)| n)
            .sum()
    }

    /// Whether a window around `tau` lies inside the histogram range.
    pub fn contains_window(&self, tau: f64, window: f64) -> bool {
        let eps = 1e-6 * self.bin_width;
        tau - 0.5 * window >= self.origin - eps && tau + 0.5 * window <= self.end() + eps
    }

    /// Copy with a constant per-bin background removed (counts floor at zero).
    pub fn with_background_subtracted(&self, per_bin: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.counts {
            *c = (*c as f64 - per_bin).max(0.0).round() as u64;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "tau_s,counts")?;
        for (k, n) in self.counts.iter().enumerate() {
            writeln!(out, "{:e},{n}", self.bin_center(k))?;
        }
        Ok(())
    }
}

fn check_sorted(times: &[u64], channel: u8) -> Result<()> {
    match times.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::InputOrder {
            channel,
            index: i + 1,
        }),
        None => Ok(()),
    }
}

/// Histogram of `t_stop - t_start` over every start/stop pair whose delay lies in `range`.
///
/// Tags of other channels are ignored. Each channel must be time-ordered.
/// Bin edges are placed on whole picoseconds starting at `range.0`; the last
/// bin is extended so the bins tile `range`.
pub fn build_histogram(
    tags: &[TimeTag],
    start_channel: u8,
    stop_channel: u8,
    bin_width: f64,
    range: (f64, f64),
) -> Result<CoincidenceHistogram> {
    let starts: Vec<u64> = tags
        .iter()
        .filter(|t| t.channel == start_channel)
        .map(|t| t.time_ps)
        .collect();
    let stops: Vec<u64> = tags
        .iter()
        .filter(|t| t.channel == stop_channel)
        .map(|t| t.time_ps)
        .collect();
    check_sorted(&starts, start_channel)?;
    check_sorted(&stops, stop_channel)?;
    let mut hist = histogram_sorted(&starts, &stops, bin_width, range)?;
    hist.start_channel = start_channel;
    hist.stop_channel = stop_channel;
    let first = tags.iter().map(|t| t.time_ps).min();
    let last = tags.iter().map(|t| t.time_ps).max();
    if let (Some(a), Some(b)) = (first, last) {
        hist.integration_time = (b - a) as f64 / PS;
    }
    Ok(hist)
}

/// Two-pointer sweep over sorted start and stop times (ps).
pub fn histogram_sorted(
    starts: &[u64],
    stops: &[u64],
    bin_width: f64,
    range: (f64, f64),
) -> Result<CoincidenceHistogram> {
    require_positive("bin_width", bin_width)?;
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(invalid("range", format!("[{lo}, {hi}] is empty")));
    }
    let bin_ps = (bin_width * PS).round() as i64;
    if bin_ps < 1 {
        return Err(invalid("bin_width", "must be at least 1 ps"));
    }
    let lo_ps = (lo * PS).round() as i64;
    let hi_ps = (hi * PS).round() as i64;
    let n_bins = ((hi_ps - lo_ps) as f64 / bin_ps as f64).ceil().max(1.0) as usize;
    let end_ps = lo_ps + n_bins as i64 * bin_ps;
    let mut counts = vec![0u64; n_bins];

    let mut first = 0usize;
    for &s in starts {
        let s = s as i64;
        while first < stops.len() && (stops[first] as i64) - s < lo_ps {
            first += 1;
        }
        let mut j = first;
        while j < stops.len() {
            let dt = stops[j] as i64 - s;
            if dt >= end_ps {
                break;
            }
            counts[((dt - lo_ps) / bin_ps) as usize] += 1;
            j += 1;
        }
    }
    Ok(CoincidenceHistogram {
        bin_width: bin_ps as f64 / PS,
        origin: lo_ps as f64 / PS,
        counts,
        start_channel: 0,
        stop_channel: 0,
        integration_time: 0.0,
    })
}

/// Ratio of central-window counts to the mean side-window count.
fn window_ratio(
    hist: &CoincidenceHistogram,
    center: f64,
    sides: &[f64],
    window: f64,
) -> Result<Estimate> {
    require_positive("window", window)?;
    if sides.is_empty() {
        return Err(invalid("side_taus", "at least one side window is needed"));
    }
    let mut all = vec![center];
    all.extend_from_slice(sides);
    for (i, a) in all.iter().enumerate() {
        if !hist.contains_window(*a, window) {
            return Err(invalid(
                "window",
                format!("window at {a:e} s falls outside the histogram"),
            ));
        }
        for b in &all[i + 1..] {
            if (a - b).abs() < window - 1e-6 * hist.bin_width {
                return Err(invalid("side_taus", "windows overlap"));
            }
        }
    }
    let c = hist.window_counts(center, window) as f64;
    let side_total: f64 = sides
        .iter()
        .map(|&t| hist.window_counts(t, window) as f64)
        .sum();
    if side_total == 0.0 {
        return Err(Error::UndefinedCorrelation("no counts in the side windows"));
    }
    let n = sides.len() as f64;
    let mean = side_total / n;
    let sigma_mean = side_total.sqrt() / n;
    let value = c / mean;
    let sigma = ((c.sqrt() / mean).powi(2) + (c * sigma_mean / (mean * mean)).powi(2)).sqrt();
    Ok(Estimate::new(value, sigma))
}

/// `g2 = C(center) / mean(C(side))`, with Poisson errors.
pub fn g2_from_histogram(
    hist: &CoincidenceHistogram,
    center_tau: f64,
    side_taus: &[f64],
    window: f64,
) -> Result<Estimate> {
    window_ratio(hist, center_tau, side_taus, window)
}

/// Coincidence-to-accidental ratio, with accidental windows at every
/// multiple of `period` from the centre that fits inside the histogram.
pub fn car_from_histogram(
    hist: &CoincidenceHistogram,
    center_tau: f64,
    window: f64,
    period: f64,
) -> Result<Estimate> {
    require_positive("period", period)?;
    if window < hist.bin_width * (1.0 - 1e-9) {
        return Err(invalid("window", "must be at least one bin wide"));
    }
    let mut sides = Vec::new();
    for sign in [-1.0, 1.0] {
        let mut k = 1.0;
        loop {
            let tau = center_tau + sign * k * period;
            if !hist.contains_window(tau, window) {
                break;
            }
            sides.push(tau);
            k += 1.0;
        }
    }
    window_ratio(hist, center_tau, &sides, window)
}

/// Per-pulse detection probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceStats {
    pub p_si: f64,
    pub p_s: f64,
    pub p_i: f64,
}

impl CoincidenceStats {
    pub fn new(p_si: f64, p_s: f64, p_i: f64) -> Result<Self> {
        for (name, p) in [("p_si", p_si), ("p_s", p_s), ("p_i", p_i)] {
            crate::error::require_probability(name, p)?;
        }
        if p_si > p_s.min(p_i) {
            return Err(invalid("p_si", "joint probability exceeds a marginal"));
        }
        Ok(Self { p_si, p_s, p_i })
    }

    pub fn g2(&self) -> Result<f64> {
        if self.p_s == 0.0 || self.p_i == 0.0 {
            return Err(Error::UndefinedCorrelation(
                "a single-detection probability is zero",
            ));
        }
        Ok(self.p_si / (self.p_s * self.p_i))
    }
}

/// Decay constants on both sides of a coincidence peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileFit {
    /// Rising side, idler lifetime (s).
    pub idler_lifetime: Estimate,
    /// Falling side, signal lifetime (s).
    pub signal_lifetime: Estimate,
    /// `ln2 (T_i + T_s)`.
    pub fwhm: Estimate,
}

/// Fits `ln N` linearly on each side of the peak at `center_tau`, using whole
/// bins within `span` of the centre that hold at least `min_counts` counts.
/// Weights are the counts themselves.
pub fn fit_coincidence_profile(
    hist: &CoincidenceHistogram,
    center_tau: f64,
    span: f64,
    min_counts: u64,
) -> Result<ProfileFit> {
    require_positive("span", span)?;
    let eps = 1e-6 * hist.bin_width;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (k, &n) in hist.counts.iter().enumerate() {
        if n < min_counts.max(1) {
            continue;
        }
        let lo = hist.origin + k as f64 * hist.bin_width - center_tau;
        let hi = lo + hist.bin_width;
        let x = 0.5 * (lo + hi);
        if lo >= -eps && hi <= span + eps {
            right.push((x, n as f64));
        } else if hi <= eps && lo >= -span - eps {
            left.push((x, n as f64));
        }
    }
    let (slope_r, sigma_r) = weighted_log_slope(&right)?;
    let (slope_l, sigma_l) = weighted_log_slope(&left)?;
    if slope_r >= 0.0 || slope_l <= 0.0 {
        return Err(Error::FitDegenerate(
            "counts do not decay away from the peak",
        ));
    }
    let t_s = Estimate::new(-1.0 / slope_r, sigma_r / (slope_r * slope_r));
    let t_i = Estimate::new(1.0 / slope_l, sigma_l / (slope_l * slope_l));
    let ln2 = std::f64::consts::LN_2;
    Ok(ProfileFit {
        idler_lifetime: t_i,
        signal_lifetime: t_s,
        fwhm: Estimate::new(
            ln2 * (t_i.value + t_s.value),
            ln2 * t_i.sigma.hypot(t_s.sigma),
        ),
    })
}

/// Slope of `ln y` against `x`, weights `y`; returns the slope and its standard error.
fn weighted_log_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::FitDegenerate(
            "fewer than three usable bins on one side of the peak",
        ));
    }
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, n) in points {
        let y = n.ln();
        sw += n;
        sx += n * x;
        sy += n * y;
        sxx += n * x * x;
        sxy += n * x * y;
    }
    let det = sw * sxx - sx * sx;
    if det <= 0.0 {
        return Err(Error::FitDegenerate("bins do not span a range of delays"));
    }
    let slope = (sw * sxy - sx * sy) / det;
    Ok((slope, (sw / det).sqrt()))
}

/// Cross-projection probabilities in the three measurement bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisProjections {
    /// `1 / (g2 + 2)`.
    pub pz_cross: f64,
    /// `(1 - V) / 4`.
    pub px_cross: f64,
    /// `(1 + V) / 4`.
    pub py_cross: f64,
}

fn check_witness_inputs(g2: f64, v: f64) -> Result<()> {
    if g2.is_nan() || g2 < 0.0 {
        return Err(invalid("g2", format!("must be non-negative, got {g2}")));
    }
    crate::error::require_probability("visibility", v)
}

pub fn basis_projections(g2: f64, v: f64) -> Result<BasisProjections> {
    check_witness_inputs(g2, v)?;
    Ok(BasisProjections {
        pz_cross: 1.0 / (g2 + 2.0),
        px_cross: (1.0 - v) / 4.0,
        py_cross: (1.0 + v) / 4.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessResult {
    pub port: u8,
    pub visibility: Estimate,
    pub g2: Estimate,
    pub w: Estimate,
    /// Whether `W + k sigma_W < 0`.
    pub entangled: bool,
    pub k_sigma: f64,
}

/// `W = 1/(g2 + 2) - V/2` with first-order error propagation.
pub fn witness(g2: Estimate, v: Estimate, port: u8, k_sigma: f64) -> Result<WitnessResult> {
    check_witness_inputs(g2.value, v.value)?;
    require_non_negative("sigma_g2", g2.sigma)?;
    require_non_negative("sigma_v", v.sigma)?;
    require_non_negative("k_sigma", k_sigma)?;
    let p = basis_projections(g2.value, v.value)?;
    let w = p.pz_cross + p.px_cross - p.py_cross;
    let d = g2.value + 2.0;
    let sigma = if d.is_finite() {
        (g2.sigma / (d * d)).hypot(0.5 * v.sigma)
    } else {
        0.5 * v.sigma
    };
    Ok(WitnessResult {
        port,
        visibility: v,
        g2,
        w: Estimate::new(w, sigma),
        entangled: w + k_sigma * sigma < 0.0,
        k_sigma,
    })
}

/// An energy splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    Joules(f64),
    Hertz(f64),
}

impl Splitting {
    pub fn joules(self) -> f64 {
        match self {
            Splitting::Joules(e) => e,
            Splitting::Hertz(f) => PLANCK * f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannPoint {
    pub splitting: Splitting,
    /// Upper-to-lower population ratio in `(0, 1]`.
    pub population_ratio: f64,
}

/// Spin temperature from `ratio = exp(-dE / (k_B T))`.
///
/// `ln ratio` is fitted linearly in `dE / k_B` through the origin; the
/// uncertainty comes from the residual scatter and is zero for a single point.
pub fn boltzmann_temperature(points: &[BoltzmannPoint]) -> Result<Estimate> {
    if points.is_empty() {
        return Err(invalid("points", "no data"));
    }
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut xy = Vec::with_capacity(points.len());
    for p in points {
        let r = p.population_ratio;
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(
                "population_ratio",
                format!("must lie in (0, 1], got {r}"),
            ));
        }
        let x = p.splitting.joules() / BOLTZMANN;
        require_non_negative("splitting", x)?;
        let y = r.ln();
        sxx += x * x;
        sxy += x * y;
        xy.push((x, y));
    }
    if sxx == 0.0 {
        return Err(Error::FitDegenerate("all splittings are zero"));
    }
    let beta = -sxy / sxx;
    if beta <= 0.0 {
        return Err(Error::FitDegenerate(
            "populations are not thermally suppressed",
        ));
    }
    let sigma_beta = if xy.len() > 1 {
        let rss: f64 = xy.iter().map(|(x, y)| (y + beta * x).powi(2)).sum();
        (rss / (xy.len() - 1) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(Estimate::new(1.0 / beta, sigma_beta / (beta * beta)))
}

/// Slope of splitting against field through the origin (Hz/T).
pub fn fit_side_hole_slope(points: &[(f64, f64)]) -> Result<Estimate> {
    if points.is_empty() {
        return Err(invalid("points", "no data"));
    }
    for &(b, s) in points {
        require_non_negative("field", b)?;
        if !s.is_finite() {
            return Err(invalid("splitting", "must be finite"));
        }
    }
    let sxx: f64 = points.iter().map(|(b, _)| b * b).sum();
    if sxx == 0.0 {
        return Err(Error::FitDegenerate("all fields are zero"));
    }
    let slope = points.iter().map(|(b, s)| b * s).sum::<f64>() / sxx;
    let sigma = if points.len() > 1 {
        let rss: f64 = points.iter().map(|(b, s)| (s - slope * b).powi(2)).sum();
        (rss / (points.len() - 1) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    Ok(Estimate::new(slope, sigma))
}
