//! TOML experiment description.
//!
//! Every physical quantity is a string carrying its unit. Sections that are
//! left out take the library defaults; `[franson]` and `[memory]` switch the
//! interferometers and the memory on.

use std::path::Path;

use echo_lab::afc::{
    build_comb, efficiency_lorentzian, side_hole_splitting, square_efficiency, AfcComb,
    MagnetConfig, SideHoles, ToothShape, SIDE_HOLE_SLOPE,
};
use echo_lab::franson::{delay_matching_check, DelayDiagnostics, FransonPair, TimeBinState};
use echo_lab::montecarlo::{
    DetectorModel, ExperimentConfig, ExperimentSchedule, MemoryActionModel,
};
use echo_lab::source::{PairSource, PairStatistics, PumpMode, PumpTrain};
use echo_lab::spectral::{lifetime_linewidth_convert, Conversion, SpectralLine};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::units::{Angle, Field, Frequency, Temperature, Time};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub duration: Option<Time>,
    pub chunk_duration: Option<Time>,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub state: StateSection,
    pub franson: Option<FransonSection>,
    pub memory: Option<MemorySection>,
    #[serde(default)]
    pub detectors: Vec<DetectorSection>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub period: Time,
    pub pulse_width: Time,
    pub mode: PumpMode,
    pub mean_pairs_per_pulse: f64,
    pub signal_linewidth: Frequency,
    pub idler_linewidth: Frequency,
    /// Overrides the lifetime implied by the linewidth.
    pub signal_lifetime: Option<Time>,
    pub idler_lifetime: Option<Time>,
    pub noise_rate: Frequency,
    pub statistics: PairStatistics,
}

impl Default for SourceSection {
    fn default() -> Self {
        let pump = PumpTrain::default();
        Self {
            period: Time(pump.period),
            pulse_width: Time(pump.pulse_width),
            mode: pump.mode,
            mean_pairs_per_pulse: pump.mean_pairs_per_pulse,
            signal_linewidth: Frequency(185e6),
            idler_linewidth: Frequency(183e6),
            signal_lifetime: None,
            idler_lifetime: None,
            noise_rate: Frequency(0.0),
            statistics: PairStatistics::Thermal,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSection {
    /// Coherence factor of the time-bin state.
    pub visibility: f64,
    pub bin_separation: Time,
    pub coherence_time: Time,
}

impl Default for StateSection {
    fn default() -> Self {
        let s = TimeBinState::default();
        Self {
            visibility: s.coherence,
            bin_separation: Time(s.bin_separation),
            coherence_time: Time(s.coherence_time),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FransonSection {
    pub delay_signal: Time,
    pub delay_idler: Time,
    pub phase_signal: Angle,
    pub phase_idler: Angle,
    pub loss_short: f64,
    pub loss_long: f64,
    pub phase_noise: Angle,
    /// Two-photon coherence used by the delay check; defaults to the photon coherence time.
    pub pair_coherence: Option<Time>,
    /// Allowed delay-to-period mismatch; defaults to the pump pulse width.
    pub delay_tolerance: Option<Time>,
}

impl Default for FransonSection {
    fn default() -> Self {
        let f = FransonPair::default();
        Self {
            delay_signal: Time(f.delay_signal),
            delay_idler: Time(f.delay_idler),
            phase_signal: Angle(f.phase_signal),
            phase_idler: Angle(f.phase_idler),
            loss_short: f.loss_short,
            loss_long: f.loss_long,
            phase_noise: Angle(f.phase_noise_sigma),
            pair_coherence: None,
            delay_tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemorySection {
    pub storage_time: Time,
    pub peak_depth: f64,
    pub background: f64,
    pub finesse: f64,
    pub tooth_shape: ToothShape,
    /// Width of the prepared frequency window; unbounded when absent.
    pub envelope_fwhm: Option<Frequency>,
    /// Echo efficiency; the closed form for the tooth shape when absent.
    pub echo_efficiency: Option<f64>,
    pub magnet: Option<MagnetSection>,
}

impl Default for MemorySection {
    fn default() -> Self {
        Self {
            storage_time: Time(1936e-9),
            peak_depth: 2.1,
            background: 0.8,
            finesse: 2.0,
            tooth_shape: ToothShape::Lorentzian,
            envelope_fwhm: None,
            echo_efficiency: None,
            magnet: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MagnetSection {
    pub field: Field,
    pub angle: Angle,
    pub temperature: Temperature,
}

impl Default for MagnetSection {
    fn default() -> Self {
        let m = MagnetConfig::default();
        Self {
            field: Field(m.field),
            angle: Angle(m.angle_deg.to_radians()),
            temperature: Temperature(m.temperature),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorRole {
    Signal,
    Idler,
    All,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub role: DetectorRole,
    pub efficiency: Option<f64>,
    pub dark_rate: Option<Frequency>,
    pub jitter: Option<Time>,
    pub dead_time: Option<Time>,
}

impl DetectorSection {
    fn apply(&self, mut d: DetectorModel) -> DetectorModel {
        if let Some(v) = self.efficiency {
            d.efficiency = v;
        }
        if let Some(v) = self.dark_rate {
            d.dark_rate = v.si();
        }
        if let Some(v) = self.jitter {
            d.jitter_sigma = v.si();
        }
        if let Some(v) = self.dead_time {
            d.dead_time = v.si();
        }
        d
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub polarization_window: Time,
    pub afc_window: Time,
    pub delay: Time,
    pub memory_window: Time,
    pub trailing_delay: Time,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = ExperimentSchedule::default();
        Self {
            polarization_window: Time(s.polarization_window),
            afc_window: Time(s.afc_window),
            delay: Time(s.delay),
            memory_window: Time(s.memory_window),
            trailing_delay: Time(s.trailing_delay),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub start_channel: u8,
    pub stop_channel: u8,
    pub bin_width: Time,
    pub range_start: Time,
    pub range_end: Time,
    /// Delay of the correlated peak; the storage time when a memory is configured.
    pub center: Option<Time>,
    pub window: Time,
    /// Side windows for g2, relative to the centre; one pump period either side when empty.
    pub side_delays: Vec<Time>,
    /// Half-range of the coincidence-profile fit.
    pub profile_span: Time,
    /// Flat per-bin background to subtract before computing figures of merit.
    pub subtract_background: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            start_channel: echo_lab::montecarlo::IDLER_PORT1,
            stop_channel: echo_lab::montecarlo::SIGNAL_PORT1,
            bin_width: Time(1e-9),
            range_start: Time(-100e-9),
            range_end: Time(100e-9),
            center: None,
            window: Time(4e-9),
            side_delays: Vec::new(),
            profile_span: Time(3e-9),
            subtract_background: None,
        }
    }
}

/// A parsed configuration with the derived experiment and its load-time diagnostics.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub file: FileConfig,
    pub experiment: ExperimentConfig,
    pub comb: Option<AfcComb>,
    pub side_holes: Option<SideHoles>,
    pub delay_check: Option<DelayDiagnostics>,
    /// Hex SHA-256 of the configuration text.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Loaded, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
        field: String::new(),
        message: e.to_string(),
    })?;
    let file: FileConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    build(file, sha256_hex(text.as_bytes()))
}

/// Defaults only, used when no configuration file is given.
pub fn defaults() -> Result<Loaded, CliError> {
    build(FileConfig::default(), "none".to_string())
}

fn config_error(field: &str, e: echo_lab::Error) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: e.to_string(),
    }
}

fn build(file: FileConfig, sha256: String) -> Result<Loaded, CliError> {
    let src = &file.source;
    let pump = PumpTrain {
        period: src.period.si(),
        pulse_width: src.pulse_width.si(),
        mode: src.mode,
        mean_pairs_per_pulse: src.mean_pairs_per_pulse,
    };
    let line =
        |name: &str, width: Frequency, lifetime: Option<Time>| -> Result<SpectralLine, CliError> {
            let width = match lifetime {
                Some(t) => lifetime_linewidth_convert(t.si(), Conversion::LifetimeToLinewidth)
                    .map_err(|e| config_error(&format!("source.{name}_lifetime"), e))?,
                None => width.si(),
            };
            SpectralLine::lorentzian(0.0, width)
                .map_err(|e| config_error(&format!("source.{name}_linewidth"), e))
        };
    let mut source = PairSource::from_lines(
        pump,
        line("signal", src.signal_linewidth, src.signal_lifetime)?,
        line("idler", src.idler_linewidth, src.idler_lifetime)?,
    )
    .map_err(|e| config_error("source", e))?;
    source.noise_rate_per_channel = src.noise_rate.si();
    source.statistics = src.statistics;

    let mut state = TimeBinState::maximally_entangled(file.state.visibility);
    state.bin_separation = file.state.bin_separation.si();
    state.coherence_time = file.state.coherence_time.si();
    state.validate().map_err(|e| config_error("state", e))?;

    let franson = file.franson.as_ref().map(|f| FransonPair {
        delay_signal: f.delay_signal.si(),
        delay_idler: f.delay_idler.si(),
        phase_signal: f.phase_signal.si(),
        phase_idler: f.phase_idler.si(),
        loss_short: f.loss_short,
        loss_long: f.loss_long,
        phase_noise_sigma: f.phase_noise.si(),
    });
    let delay_check = match (&file.franson, &franson) {
        (Some(section), Some(pair)) => {
            pair.validate().map_err(|e| config_error("franson", e))?;
            Some(
                delay_matching_check(
                    pair.delay_signal,
                    pair.delay_idler,
                    state.coherence_time,
                    pump.period,
                    section
                        .pair_coherence
                        .map(Time::si)
                        .unwrap_or(state.coherence_time),
                    section
                        .delay_tolerance
                        .map(Time::si)
                        .unwrap_or(pump.pulse_width),
                )
                .map_err(|e| config_error("franson", e))?,
            )
        }
        _ => None,
    };

    let (comb, memory, side_holes) = match &file.memory {
        Some(m) => {
            let comb = build_comb(
                m.storage_time.si(),
                m.peak_depth,
                m.background,
                m.finesse,
                m.tooth_shape,
                m.envelope_fwhm.map(Frequency::si).unwrap_or(f64::INFINITY),
            )
            .map_err(|e| config_error("memory", e))?;
            let eta = match m.echo_efficiency {
                Some(eta) => eta,
                None => closed_form_efficiency(&comb).map_err(|e| config_error("memory", e))?,
            };
            let model = MemoryActionModel::from_comb(&comb, eta)
                .map_err(|e| config_error("memory.echo_efficiency", e))?;
            let holes = match &m.magnet {
                Some(mag) => Some(
                    side_hole_splitting(
                        &MagnetConfig {
                            field: mag.field.si(),
                            angle_deg: mag.angle.si().to_degrees(),
                            temperature: mag.temperature.si(),
                        },
                        SIDE_HOLE_SLOPE,
                    )
                    .map_err(|e| config_error("memory.magnet", e))?,
                ),
                None => None,
            };
            (Some(comb), Some(model), holes)
        }
        None => (None, None, None),
    };

    let mut signal_detector = DetectorModel::default();
    let mut idler_detector = DetectorModel::default();
    for d in &file.detectors {
        if matches!(d.role, DetectorRole::Signal | DetectorRole::All) {
            signal_detector = d.apply(signal_detector);
        }
        if matches!(d.role, DetectorRole::Idler | DetectorRole::All) {
            idler_detector = d.apply(idler_detector);
        }
    }

    let s = &file.schedule;
    let experiment = ExperimentConfig {
        source,
        state,
        franson,
        memory,
        signal_detector,
        idler_detector,
        idler_port2: true,
        schedule: ExperimentSchedule {
            polarization_window: s.polarization_window.si(),
            afc_window: s.afc_window.si(),
            delay: s.delay.si(),
            memory_window: s.memory_window.si(),
            trailing_delay: s.trailing_delay.si(),
        },
        chunk_duration: file.chunk_duration.map(Time::si).unwrap_or(0.1),
    };
    experiment.validate().map_err(|e| config_error("", e))?;

    Ok(Loaded {
        file,
        experiment,
        comb,
        side_holes,
        delay_check,
        sha256,
    })
}

/// Closed-form first-echo efficiency of a comb, background included.
pub fn closed_form_efficiency(comb: &AfcComb) -> echo_lab::Result<f64> {
    match comb.tooth_shape {
        ToothShape::Square => Ok(square_efficiency(
            comb.peak_depth,
            std::f64::consts::PI / comb.finesse,
        ) * (-comb.background).exp()),
        ToothShape::Lorentzian | ToothShape::Gaussian => {
            efficiency_lorentzian(comb.peak_depth, comb.finesse, comb.background)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_library_defaults() {
        let loaded = parse("").unwrap();
        assert_eq!(loaded.experiment.source.pump, PumpTrain::default());
        assert!(loaded.experiment.franson.is_none());
        assert!(loaded.delay_check.is_none());
        assert_eq!(loaded.sha256.len(), 64);
    }

    #[test]
    fn units_are_converted() {
        let loaded = parse(
            r#"
            [source]
            period = "32 ns"
            pulse_width = "4000 ps"
            mode = "pulsed"
            mean_pairs_per_pulse = 0.02
            signal_linewidth = "185 MHz"
            idler_linewidth = "0.183 GHz"
            noise_rate = "10 Hz"
            statistics = "poissonian"
            "#,
        )
        .unwrap();
        let src = loaded.experiment.source;
        assert_eq!(src.pump.pulse_width, 4e-9);
        assert_eq!(src.idler_line.fwhm, 183e6);
        assert_eq!(src.noise_rate_per_channel, 10.0);
        assert_eq!(src.statistics, PairStatistics::Poissonian);
    }

    #[test]
    fn errors_name_the_field() {
        let err = parse("[franson]\ndelay_signal = \"32\"\n").unwrap_err();
        match err {
            CliError::Config { field, message } => {
                assert_eq!(field, "franson.delay_signal");
                assert!(message.contains("no unit"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let err = parse("[memory]\nstorage_tme = \"1 us\"\n").unwrap_err();
        assert!(matches!(err, CliError::Config { .. }));
    }

    #[test]
    fn delay_mismatch_is_reported_not_fatal() {
        let loaded = parse("[franson]\ndelay_signal = \"40 ns\"\n").unwrap();
        let check = loaded.delay_check.unwrap();
        assert!(!check.pass);
        assert!(!check.reasons.is_empty());
    }

    #[test]
    fn memory_uses_closed_form_efficiency() {
        let loaded =
            parse("[memory]\nstorage_time = \"1936 ns\"\npeak_depth = 2.1\nbackground = 0.0\n")
                .unwrap();
        let m = loaded.experiment.memory.unwrap();
        assert!((m.echo_efficiency - efficiency_lorentzian(2.1, 2.0, 0.0).unwrap()).abs() < 1e-15);
        assert!((m.storage_time - 1936e-9).abs() < 1e-18);
    }

    #[test]
    fn magnet_gives_side_hole_period() {
        let loaded = parse("[memory]\n[memory.magnet]\nfield = \"1.5 T\"\n").unwrap();
        let holes = loaded.side_holes.unwrap();
        assert!((holes.splitting - 3.165e6).abs() < 1.0);
    }

    #[test]
    fn detector_roles() {
        let loaded = parse(
            "[[detectors]]\nrole = \"all\"\nefficiency = 0.5\n[[detectors]]\nrole = \"idler\"\ndark_rate = \"1 kHz\"\n",
        )
        .unwrap();
        assert_eq!(loaded.experiment.signal_detector.efficiency, 0.5);
        assert_eq!(loaded.experiment.idler_detector.efficiency, 0.5);
        assert_eq!(loaded.experiment.idler_detector.dark_rate, 1000.0);
        assert_eq!(loaded.experiment.signal_detector.dark_rate, 100.0);
    }
}
