//! Joint detection outcomes of one photon pair.
//!
//! Each photon is followed through every path it can take: emission bin,
//! memory (transmitted, echoed, absorbed), interferometer arm, output port,
//! and detector (click or miss). A path ends in an orthogonal final mode
//! labelled by what happened and when. Paths of the pair that end in the
//! same pair of final modes are summed coherently and weighted by the
//! time-bin density matrix, so the summed phase only matters where the
//! early-long and late-short alternatives are indistinguishable.
//!
//! Within a long pulse train a pair emitted in one pulse cannot be told
//! apart from the same pair emitted two bin separations later once both
//! photons are shifted together, so joint arrival times are compared
//! modulo a common shift of two bins.

use num_complex::Complex64;
use serde::Serialize;

use super::{
    DetectorModel, MemoryActionModel, IDLER_PORT1, IDLER_PORT2, SIGNAL_PORT1, SIGNAL_PORT2,
};
use crate::error::Result;
use crate::franson::{FransonPair, TimeBinState};

/// A detected photon: channel and time after pair creation (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Arrival {
    pub channel: u8,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Outcome {
    pub probability: f64,
    pub signal: Option<Arrival>,
    pub idler: Option<Arrival>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeTable {
    pub outcomes: Vec<Outcome>,
}

impl OutcomeTable {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    /// Probability of a coincidence between two channels at a given
    /// signal-minus-idler delay (within `tol` seconds).
    pub fn coincidence_probability(
        &self,
        signal_channel: u8,
        idler_channel: u8,
        delay: f64,
        tol: f64,
    ) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| match (o.signal, o.idler) {
                (Some(s), Some(i)) => {
                    s.channel == signal_channel
                        && i.channel == idler_channel
                        && (s.offset - i.offset - delay).abs() < tol
                }
                _ => false,
            })
            .map(|o| o.probability)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Detected(u8),
    Missed(u8),
    Unmonitored(u8),
    ArmLoss(u8),
    MemoryLoss,
}

#[derive(Debug, Clone, Copy)]
struct Path {
    bin: usize,
    amp: Complex64,
    mode: Mode,
    time: f64,
}

struct Interferometer {
    delay: f64,
    phase: f64,
    loss_short: f64,
    loss_long: f64,
}

fn photon_paths(
    bin_separation: f64,
    memory: Option<&MemoryActionModel>,
    interferometer: Option<&Interferometer>,
    detector: &DetectorModel,
    ports: [Option<u8>; 2],
) -> Vec<Path> {
    let mut out = Vec::new();
    let mut push = |path: Path| {
        if path.amp.norm_sqr() > 0.0 {
            out.push(path);
        }
    };
    let eff = detector.efficiency;
    let detect = |bin: usize,
                  amp: Complex64,
                  port: usize,
                  time: f64,
                  push: &mut dyn FnMut(Path)| match ports[port] {
        Some(ch) => {
            push(Path {
                bin,
                amp: amp * eff.sqrt(),
                mode: Mode::Detected(ch),
                time,
            });
            push(Path {
                bin,
                amp: amp * (1.0 - eff).sqrt(),
                mode: Mode::Missed(ch),
                time,
            });
        }
        None => push(Path {
            bin,
            amp,
            mode: Mode::Unmonitored(port as u8),
            time,
        }),
    };

    for bin in 0..2 {
        let t0 = bin as f64 * bin_separation;
        let mut after_memory = Vec::new();
        match memory {
            Some(m) => {
                after_memory.push((Complex64::new(m.transmission_prob.sqrt(), 0.0), t0));
                after_memory.push((
                    Complex64::new(m.echo_efficiency.sqrt(), 0.0),
                    t0 + m.storage_time,
                ));
                push(Path {
                    bin,
                    amp: Complex64::new(m.loss_prob().sqrt(), 0.0),
                    mode: Mode::MemoryLoss,
                    time: t0,
                });
            }
            None => after_memory.push((Complex64::new(1.0, 0.0), t0)),
        }
        for (amp, t) in after_memory {
            match interferometer {
                None => detect(bin, amp, 0, t, &mut push),
                Some(ifm) => {
                    let h = std::f64::consts::FRAC_1_SQRT_2;
                    let short = amp * h * (1.0 - ifm.loss_short).sqrt();
                    let long = amp
                        * h
                        * (1.0 - ifm.loss_long).sqrt()
                        * Complex64::from_polar(1.0, ifm.phase);
                    push(Path {
                        bin,
                        amp: amp * h * ifm.loss_short.sqrt(),
                        mode: Mode::ArmLoss(0),
                        time: t,
                    });
                    push(Path {
                        bin,
                        amp: amp * h * ifm.loss_long.sqrt(),
                        mode: Mode::ArmLoss(1),
                        time: t,
                    });
                    for port in 0..2 {
                        let sign = if port == 0 { 1.0 } else { -1.0 };
                        detect(bin, short * h, port, t, &mut push);
                        detect(bin, long * h * sign, port, t + ifm.delay, &mut push);
                    }
                }
            }
        }
    }
    out
}

struct Class {
    signal_mode: Mode,
    idler_mode: Mode,
    signal_time: f64,
    idler_time: f64,
    amps: [Complex64; 4],
    offsets: (f64, f64),
}

/// Joint outcome distribution of one pair.
///
/// `franson = None` sends each photon straight to its port-1 detector;
/// `memory = None` takes the memory out of the signal arm. With `idler_port2` false,
/// idler photons leaving the second interferometer output go undetected.
pub fn pair_outcome_table(
    state: &TimeBinState,
    franson: Option<&FransonPair>,
    memory: Option<&MemoryActionModel>,
    signal_det: &DetectorModel,
    idler_det: &DetectorModel,
    idler_port2: bool,
) -> Result<OutcomeTable> {
    state.validate()?;
    if let Some(f) = franson {
        f.validate()?;
    }
    if let Some(m) = memory {
        m.validate()?;
    }
    signal_det.validate()?;
    idler_det.validate()?;

    let bin = state.bin_separation;
    let ifm_s = franson.map(|f| Interferometer {
        delay: f.delay_signal,
        phase: f.phase_signal,
        loss_short: f.loss_short,
        loss_long: f.loss_long,
    });
    let ifm_i = franson.map(|f| Interferometer {
        delay: f.delay_idler,
        phase: f.phase_idler,
        loss_short: f.loss_short,
        loss_long: f.loss_long,
    });
    let signal_ports = if franson.is_some() {
        [Some(SIGNAL_PORT1), Some(SIGNAL_PORT2)]
    } else {
        [Some(SIGNAL_PORT1), None]
    };
    let idler_ports = if franson.is_some() && idler_port2 {
        [Some(IDLER_PORT1), Some(IDLER_PORT2)]
    } else {
        [Some(IDLER_PORT1), None]
    };
    let signal_paths = photon_paths(bin, memory, ifm_s.as_ref(), signal_det, signal_ports);
    let idler_paths = photon_paths(bin, None, ifm_i.as_ref(), idler_det, idler_ports);

    let tol = state.coherence_time;
    let fold = 2.0 * bin;
    let mut classes: Vec<Class> = Vec::new();
    for s in &signal_paths {
        for i in &idler_paths {
            let shift = ((i.time + tol) / fold).floor() * fold;
            let (ts, ti) = (s.time - shift, i.time - shift);
            let basis = s.bin * 2 + i.bin;
            let amp = s.amp * i.amp;
            let found = classes.iter_mut().find(|c| {
                c.signal_mode == s.mode
                    && c.idler_mode == i.mode
                    && (c.signal_time - ts).abs() < tol
                    && (c.idler_time - ti).abs() < tol
            });
            match found {
                Some(c) => c.amps[basis] += amp,
                None => {
                    let emitted = s.bin.min(i.bin) as f64 * bin;
                    let mut amps = [Complex64::new(0.0, 0.0); 4];
                    amps[basis] = amp;
                    classes.push(Class {
                        signal_mode: s.mode,
                        idler_mode: i.mode,
                        signal_time: ts,
                        idler_time: ti,
                        amps,
                        offsets: (s.time - emitted, i.time - emitted),
                    });
                }
            }
        }
    }

    let rho = state.density_matrix();
    let outcomes = classes
        .iter()
        .filter_map(|c| {
            let mut p = Complex64::new(0.0, 0.0);
            for j in 0..4 {
                for k in 0..4 {
                    p += rho[j][k] * c.amps[j] * c.amps[k].conj();
                }
            }
            let probability = p.re.max(0.0);
            (probability > 0.0).then(|| Outcome {
                probability,
                signal: arrival(c.signal_mode, c.offsets.0),
                idler: arrival(c.idler_mode, c.offsets.1),
            })
        })
        .collect();
    Ok(OutcomeTable { outcomes })
}

fn arrival(mode: Mode, offset: f64) -> Option<Arrival> {
    match mode {
        Mode::Detected(channel) => Some(Arrival { channel, offset }),
        _ => None,
    }
}
