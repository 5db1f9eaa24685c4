use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::outcome::{pair_outcome_table, OutcomeTable};
use super::{
    DetectorModel, ExperimentSchedule, MemoryActionModel, TimeTag, IDLER_PORT1, IDLER_PORT2,
    SIGNAL_PORT1, SIGNAL_PORT2,
};
use crate::error::{invalid, require_positive, Result};
use crate::franson::{FransonPair, TimeBinState};
use crate::source::{PairSource, PairStatistics, PumpMode, PumpTrain};
use crate::spectral::SpectralLine;

const PS: f64 = 1e12;
const PHASE_STREAM: u64 = 1 << 63;

/// Everything needed to generate a tag stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: PairSource,
    pub state: TimeBinState,
    /// Interferometers in front of the detectors; `None` sends each photon to one detector.
    pub franson: Option<FransonPair>,
    /// Memory on the signal arm.
    pub memory: Option<MemoryActionModel>,
    pub signal_detector: DetectorModel,
    pub idler_detector: DetectorModel,
    /// Whether the second idler interferometer output is monitored.
    pub idler_port2: bool,
    pub schedule: ExperimentSchedule,
    /// Length of the independently seeded blocks each memory window is cut into (s).
    pub chunk_duration: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let signal = SpectralLine::lorentzian(0.0, 185e6).expect("valid line");
        let idler = SpectralLine::lorentzian(0.0, 183e6).expect("valid line");
        Self {
            source: PairSource::from_lines(PumpTrain::default(), signal, idler)
                .expect("valid source"),
            state: TimeBinState::default(),
            franson: None,
            memory: None,
            signal_detector: DetectorModel::default(),
            idler_detector: DetectorModel::default(),
            idler_port2: true,
            schedule: ExperimentSchedule::default(),
            chunk_duration: 0.1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.state.validate()?;
        if let Some(f) = &self.franson {
            f.validate()?;
        }
        if let Some(m) = &self.memory {
            m.validate()?;
        }
        self.signal_detector.validate()?;
        self.idler_detector.validate()?;
        self.schedule.validate()?;
        require_positive("chunk_duration", self.chunk_duration)?;
        if (self.source.pump.period * PS).round() < 1.0 {
            return Err(invalid(
                "period",
                "pump period is below the 1 ps time resolution",
            ));
        }
        Ok(())
    }

    /// Channels that can produce tags.
    pub fn active_channels(&self) -> Vec<u8> {
        match (&self.franson, self.idler_port2) {
            (None, _) => vec![SIGNAL_PORT1, IDLER_PORT1],
            (Some(_), false) => vec![SIGNAL_PORT1, SIGNAL_PORT2, IDLER_PORT1],
            (Some(_), true) => vec![SIGNAL_PORT1, SIGNAL_PORT2, IDLER_PORT1, IDLER_PORT2],
        }
    }

    fn detector(&self, channel: u8) -> &DetectorModel {
        if channel == SIGNAL_PORT1 || channel == SIGNAL_PORT2 {
            &self.signal_detector
        } else {
            &self.idler_detector
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    /// Pairs created inside memory windows.
    pub pairs: u64,
    pub windows: usize,
    pub chunks: usize,
    /// Total memory-window time (s).
    pub live_time: f64,
}

/// A time-ordered tag stream over all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStreams {
    pub tags: Vec<TimeTag>,
    pub summary: RunSummary,
}

impl TagStreams {
    pub fn channel(&self, channel: u8) -> Vec<TimeTag> {
        self.tags
            .iter()
            .copied()
            .filter(|t| t.channel == channel)
            .collect()
    }

    pub fn signal(&self) -> Vec<TimeTag> {
        self.tags
            .iter()
            .copied()
            .filter(|t| t.channel == SIGNAL_PORT1 || t.channel == SIGNAL_PORT2)
            .collect()
    }

    pub fn idler(&self) -> Vec<TimeTag> {
        self.tags
            .iter()
            .copied()
            .filter(|t| t.channel == IDLER_PORT1 || t.channel == IDLER_PORT2)
            .collect()
    }
}

struct Sampler {
    table: OutcomeTable,
    index: Option<WeightedIndex<f64>>,
}

impl Sampler {
    fn new(table: OutcomeTable) -> Self {
        let index = WeightedIndex::new(table.outcomes.iter().map(|o| o.probability)).ok();
        Self { table, index }
    }
}

struct Chunk {
    window: usize,
    index: usize,
    start: u64,
    end: u64,
    window_start: u64,
    window_end: u64,
}

struct Timing {
    signal_decay: Exp<f64>,
    idler_decay: Exp<f64>,
    signal_jitter: Option<Normal<f64>>,
    idler_jitter: Option<Normal<f64>>,
}

/// Generates the tag stream for `duration` seconds of the measurement cycle.
///
/// Pairs are created on the pump grid only inside memory windows; each pair
/// is routed through [`pair_outcome_table`]. Each window is cut into chunks
/// of `chunk_duration`, and chunk `c` of window `w` draws from its own
/// ChaCha stream, so the output depends only on `(config, seed, duration)`.
/// Dead time is applied after all chunks are merged.
pub fn run_experiment(config: &ExperimentConfig, seed: u64, duration: f64) -> Result<TagStreams> {
    config.validate()?;
    let windows = config.schedule.memory_windows(duration)?;

    let phase_noise = config.franson.map(|f| f.phase_noise_sigma).unwrap_or(0.0);
    let table_for = |franson: Option<FransonPair>| {
        pair_outcome_table(
            &config.state,
            franson.as_ref(),
            config.memory.as_ref(),
            &config.signal_detector,
            &config.idler_detector,
            config.idler_port2,
        )
        .map(Sampler::new)
    };
    let samplers: Vec<Sampler> = if phase_noise > 0.0 {
        let base = config.franson.expect("phase noise implies interferometers");
        let noise = Normal::new(0.0, phase_noise)
            .map_err(|e| invalid("phase_noise_sigma", e.to_string()))?;
        (0..windows.len())
            .map(|w| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(PHASE_STREAM | w as u64);
                let phi = base.total_phase() + noise.sample(&mut rng);
                table_for(Some(base.with_total_phase(phi)))
            })
            .collect::<Result<_>>()?
    } else {
        vec![table_for(config.franson)?]
    };

    let chunk_ps = (config.chunk_duration * PS).round().max(1.0) as u64;
    let mut chunks = Vec::new();
    for (w, &(a, b)) in windows.iter().enumerate() {
        let (ws, we) = ((a * PS).round() as u64, (b * PS).round() as u64);
        let mut start = ws;
        let mut index = 0;
        while start < we {
            let end = (start + chunk_ps).min(we);
            chunks.push(Chunk {
                window: w,
                index,
                start,
                end,
                window_start: ws,
                window_end: we,
            });
            start = end;
            index += 1;
        }
    }

    let timing = Timing {
        signal_decay: Exp::new(1.0 / (config.source.signal_lifetime * PS))
            .map_err(|e| invalid("signal_lifetime", e.to_string()))?,
        idler_decay: Exp::new(1.0 / (config.source.idler_lifetime * PS))
            .map_err(|e| invalid("idler_lifetime", e.to_string()))?,
        signal_jitter: jitter(&config.signal_detector)?,
        idler_jitter: jitter(&config.idler_detector)?,
    };

    let results: Vec<(Vec<TimeTag>, u64)> = chunks
        .par_iter()
        .map(|chunk| {
            let sampler = &samplers[if samplers.len() == 1 { 0 } else { chunk.window }];
            simulate_chunk(config, sampler, &timing, seed, chunk)
        })
        .collect();

    let pairs = results.iter().map(|(_, n)| n).sum();
    let mut tags: Vec<TimeTag> = results.into_iter().flat_map(|(t, _)| t).collect();
    tags.sort_unstable_by_key(|t| (t.time_ps, t.channel));
    let tags = apply_dead_time(tags, |ch| {
        (config.detector(ch).dead_time * PS).round() as u64
    });

    Ok(TagStreams {
        tags,
        summary: RunSummary {
            pairs,
            windows: windows.len(),
            chunks: chunks.len(),
            live_time: windows.iter().map(|(a, b)| b - a).sum(),
        },
    })
}

fn jitter(det: &DetectorModel) -> Result<Option<Normal<f64>>> {
    if det.jitter_sigma > 0.0 {
        Normal::new(0.0, det.jitter_sigma * PS)
            .map(Some)
            .map_err(|e| invalid("jitter_sigma", e.to_string()))
    } else {
        Ok(None)
    }
}

/// Non-paralyzable dead time on a time-ordered stream.
pub(crate) fn apply_dead_time(tags: Vec<TimeTag>, dead_ps: impl Fn(u8) -> u64) -> Vec<TimeTag> {
    let mut last: [Option<u64>; 256] = [None; 256];
    tags.into_iter()
        .filter(|t| {
            let slot = &mut last[t.channel as usize];
            match *slot {
                Some(prev) if t.time_ps < prev + dead_ps(t.channel) => false,
                _ => {
                    *slot = Some(t.time_ps);
                    true
                }
            }
        })
        .collect()
}

fn simulate_chunk(
    config: &ExperimentConfig,
    sampler: &Sampler,
    timing: &Timing,
    seed: u64,
    chunk: &Chunk,
) -> (Vec<TimeTag>, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((chunk.window as u64) << 32) | chunk.index as u64);
    let mut tags = Vec::new();
    let mut pairs = 0u64;

    let pump = &config.source.pump;
    let mu = pump.mean_pairs_per_pulse;
    let stats = config.source.statistics;
    let (ws, we) = (chunk.window_start as f64, chunk.window_end as f64);

    let emit = |t0: f64, rng: &mut ChaCha8Rng, tags: &mut Vec<TimeTag>| {
        let Some(index) = &sampler.index else { return };
        let outcome = &sampler.table.outcomes[index.sample(rng)];
        if let Some(s) = outcome.signal {
            let mut t = t0 + s.offset * PS + timing.signal_decay.sample(rng);
            if let Some(j) = &timing.signal_jitter {
                t += j.sample(rng);
            }
            if t >= ws && t < we {
                tags.push(TimeTag::new(s.channel, t.round() as u64));
            }
        }
        if let Some(i) = outcome.idler {
            let mut t = t0 + i.offset * PS + timing.idler_decay.sample(rng);
            if let Some(j) = &timing.idler_jitter {
                t += j.sample(rng);
            }
            if t >= ws && t < we {
                tags.push(TimeTag::new(i.channel, t.round() as u64));
            }
        }
    };

    if mu > 0.0 {
        match pump.mode {
            PumpMode::Pulsed => {
                let period = (pump.period * PS).round() as u64;
                let width = pump.pulse_width * PS;
                let p_emit = stats.p_nonzero(mu);
                let skip = Geometric::new(p_emit.min(1.0)).expect("probability in (0, 1]");
                let mut k = chunk.start.div_ceil(period);
                loop {
                    k = k.saturating_add(skip.sample(&mut rng));
                    let Some(t) = k.checked_mul(period).filter(|&t| t < chunk.end) else {
                        break;
                    };
                    let n = pairs_in_pulse(stats, mu, &mut rng);
                    for _ in 0..n {
                        let t0 = t as f64 + rng.random::<f64>() * width;
                        emit(t0, &mut rng, &mut tags);
                    }
                    pairs += n;
                    k += 1;
                }
            }
            PumpMode::Cw => {
                let gap = Exp::new(mu / (pump.period * PS)).expect("positive rate");
                let mut t = chunk.start as f64;
                loop {
                    t += gap.sample(&mut rng);
                    if t >= chunk.end as f64 {
                        break;
                    }
                    emit(t, &mut rng, &mut tags);
                    pairs += 1;
                }
            }
        }
    }

    let span = (chunk.end - chunk.start) as f64;
    for ch in config.active_channels() {
        let rate = config.detector(ch).dark_rate + config.source.noise_rate_per_channel;
        let mean = rate * span / PS;
        if mean <= 0.0 {
            continue;
        }
        let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64;
        for _ in 0..n {
            let t = chunk.start as f64 + rng.random::<f64>() * span;
            tags.push(TimeTag::new(ch, (t.floor() as u64).min(chunk.end - 1)));
        }
    }
    (tags, pairs)
}

/// Number of pairs in a pulse known to hold at least one.
fn pairs_in_pulse(stats: PairStatistics, mu: f64, rng: &mut ChaCha8Rng) -> u64 {
    match stats {
        PairStatistics::Thermal => 1 + Geometric::new(1.0 / (1.0 + mu)).expect("valid").sample(rng),
        PairStatistics::Poissonian => {
            // inversion of the zero-truncated Poisson distribution
            let norm = -(-mu).exp_m1();
            let u: f64 = rng.random::<f64>() * norm;
            let mut n = 1u64;
            let mut p = mu * (-mu).exp();
            let mut cum = p;
            while cum < u && p > 0.0 {
                n += 1;
                p *= mu / n as f64;
                cum += p;
            }
            n
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(mut c: ExperimentConfig) -> ExperimentConfig {
        c.signal_detector = DetectorModel::ideal();
        c.idler_detector = DetectorModel::ideal();
        c
    }

    #[test]
    fn no_light_no_noise_is_empty() {
        let mut c = quiet(ExperimentConfig::default());
        c.source.pump.mean_pairs_per_pulse = 0.0;
        let out = run_experiment(&c, 1, 20.0).unwrap();
        assert!(out.tags.is_empty());
        assert_eq!(out.summary.pairs, 0);
        assert_eq!(out.summary.windows, 4);
    }

    #[test]
    fn dark_counts_follow_duty_cycle() {
        let mut c = ExperimentConfig::default();
        c.source.pump.mean_pairs_per_pulse = 0.0;
        c.signal_detector.dark_rate = 1e3;
        c.idler_detector.dark_rate = 1e3;
        let out = run_experiment(&c, 5, 100.0).unwrap();
        let expected = 2e4;
        for ch in c.active_channels() {
            let n = out.channel(ch).len() as f64;
            assert!(
                (n - expected).abs() < 3.0 * expected.sqrt(),
                "channel {ch}: {n}"
            );
        }
    }

    #[test]
    fn deterministic_and_ordered() {
        let mut c = ExperimentConfig::default();
        c.source.pump.mean_pairs_per_pulse = 0.01;
        c.franson = Some(FransonPair::default());
        c.chunk_duration = 0.05;
        let a = run_experiment(&c, 42, 5.0).unwrap();
        let b = run_experiment(&c, 42, 5.0).unwrap();
        assert_eq!(a.tags, b.tags);
        assert!(!a.tags.is_empty());
        assert!(a.tags.windows(2).all(|w| w[0].time_ps <= w[1].time_ps));
        let other = run_experiment(&c, 43, 5.0).unwrap();
        assert_ne!(a.tags, other.tags);
    }

    #[test]
    fn tags_stay_inside_memory_windows() {
        let mut c = ExperimentConfig::default();
        c.source.pump.mean_pairs_per_pulse = 0.05;
        c.memory = Some(MemoryActionModel {
            transmission_prob: 0.5,
            echo_efficiency: 0.2,
            storage_time: 1936e-9,
        });
        let out = run_experiment(&c, 3, 11.0).unwrap();
        let windows = c.schedule.memory_windows(11.0).unwrap();
        for t in &out.tags {
            let s = t.time_ps as f64 / PS;
            assert!(windows.iter().any(|(a, b)| s >= a - 1e-12 && s < *b), "{s}");
        }
    }

    #[test]
    fn dead_time_spacing_and_monotonicity() {
        let mut c = ExperimentConfig::default();
        c.source.pump.mean_pairs_per_pulse = 0.5;
        c.signal_detector.dark_rate = 1e5;
        let mut previous = usize::MAX;
        for dead in [0.0, 10e-9, 50e-9, 200e-9] {
            c.signal_detector.dead_time = dead;
            c.idler_detector.dead_time = dead;
            let out = run_experiment(&c, 9, 4.2).unwrap();
            let dead_ps = (dead * PS).round() as u64;
            for ch in c.active_channels() {
                let tags = out.channel(ch);
                assert!(tags
                    .windows(2)
                    .all(|w| w[1].time_ps - w[0].time_ps >= dead_ps));
            }
            assert!(out.tags.len() <= previous);
            previous = out.tags.len();
        }
    }

    #[test]
    fn dead_time_filter_is_non_paralyzable() {
        let tags: Vec<TimeTag> = [0u64, 5, 10, 15, 21]
            .iter()
            .map(|&t| TimeTag::new(0, t))
            .collect();
        let kept = apply_dead_time(tags, |_| 10);
        let times: Vec<u64> = kept.iter().map(|t| t.time_ps).collect();
        assert_eq!(times, vec![0, 10, 21]);
    }

    #[test]
    fn truncated_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu: f64 = 0.7;
        let n = 200_000;
        let mean = (0..n)
            .map(|_| pairs_in_pulse(PairStatistics::Poissonian, mu, &mut rng) as f64)
            .sum::<f64>()
            / n as f64;
        let expected = mu / (1.0 - (-mu).exp());
        assert!((mean - expected).abs() < 0.01, "{mean} vs {expected}");
        let thermal = (0..n)
            .map(|_| pairs_in_pulse(PairStatistics::Thermal, mu, &mut rng) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((thermal - (1.0 + mu)).abs() < 0.01, "{thermal}");
    }

    #[test]
    fn cw_mode_produces_pairs_at_the_mean_rate() {
        let mut c = quiet(ExperimentConfig::default());
        c.source.pump.mode = PumpMode::Cw;
        c.source.pump.mean_pairs_per_pulse = 0.001;
        let out = run_experiment(&c, 2, 4.5).unwrap();
        let expected = 0.001 / 32e-9 * 0.6;
        let n = out.summary.pairs as f64;
        assert!((n - expected).abs() < 4.0 * expected.sqrt(), "{n}");
    }

    #[test]
    fn rejects_bad_chunking() {
        let c = ExperimentConfig {
            chunk_duration: 0.0,
            ..ExperimentConfig::default()
        };
        assert!(run_experiment(&c, 0, 10.0).is_err());
    }
}
