use echo_lab::analysis::{build_histogram, car_from_histogram, g2_from_histogram, witness};
use echo_lab::franson::{visibility_extrema, FransonPair, TimeBinState};
use echo_lab::montecarlo::{
    run_experiment, DetectorModel, ExperimentConfig, MemoryActionModel, IDLER_PORT1, SIGNAL_PORT1,
};
use echo_lab::source::analytic_rates;
use echo_lab::Estimate;

const NS: f64 = 1e-9;

fn lossless() -> DetectorModel {
    DetectorModel {
        jitter_sigma: 0.0,
        ..DetectorModel::ideal()
    }
}

fn config(mu: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.source.pump.mean_pairs_per_pulse = mu;
    c.source.noise_rate_per_channel = 0.0;
    c
}

/// Duration covering `live` seconds of the first memory window.
fn first_window(c: &ExperimentConfig, live: f64) -> f64 {
    c.schedule.memory_offset() + live
}

#[test]
fn echo_peak_sits_at_storage_time() {
    let t_m = 1936.0 * NS;
    let mut c = config(0.01);
    c.memory = Some(MemoryActionModel {
        transmission_prob: 0.4,
        echo_efficiency: 0.2,
        storage_time: t_m,
    });
    c.signal_detector = lossless();
    c.idler_detector = lossless();
    let s = run_experiment(&c, 11, first_window(&c, 0.2)).unwrap();
    let bin = 0.5 * NS;
    let h = build_histogram(
        &s.tags,
        IDLER_PORT1,
        SIGNAL_PORT1,
        bin,
        (t_m - 20.0 * NS, t_m + 20.0 * NS),
    )
    .unwrap();
    let (k, _) = h
        .counts
        .iter()
        .enumerate()
        .max_by_key(|(_, n)| **n)
        .unwrap();
    assert!(
        (h.bin_center(k) - t_m).abs() <= bin,
        "peak at {}",
        h.bin_center(k)
    );
}

#[test]
fn lossless_thermal_g2() {
    for mu in [0.02, 0.1, 0.5] {
        let mut c = config(mu);
        c.signal_detector = lossless();
        c.idler_detector = lossless();
        let s = run_experiment(&c, 5, first_window(&c, 0.05)).unwrap();
        let h = build_histogram(
            &s.tags,
            IDLER_PORT1,
            SIGNAL_PORT1,
            1.0 * NS,
            (-48.0 * NS, 48.0 * NS),
        )
        .unwrap();
        let g2 = g2_from_histogram(&h, 0.0, &[-32.0 * NS, 32.0 * NS], 16.0 * NS).unwrap();
        let expected = 1.0 + 1.0 / mu;
        assert!(
            (g2.value - expected).abs() <= 3.0 * g2.sigma,
            "mu {mu}: g2 {g2} vs {expected}"
        );
    }
}

#[test]
fn monte_carlo_car_matches_analytic_rates() {
    let window = 16.0 * NS;
    for mu in [0.01, 0.05, 0.1] {
        let c = config(mu);
        let s = run_experiment(&c, 7, first_window(&c, 0.5)).unwrap();
        let h = build_histogram(
            &s.tags,
            IDLER_PORT1,
            SIGNAL_PORT1,
            1.0 * NS,
            (-168.0 * NS, 168.0 * NS),
        )
        .unwrap();
        let mc = car_from_histogram(&h, 0.0, window, 32.0 * NS).unwrap();
        let theory = analytic_rates(&c.source, &c.signal_detector, &c.idler_detector, window)
            .unwrap()
            .car;
        assert!(
            (mc.value - theory).abs() <= 3.0 * mc.sigma,
            "mu {mu}: Monte Carlo {mc} vs analytic {theory}"
        );
    }
}

#[test]
fn side_peaks_ignore_the_phase() {
    let t_m = 1936.0 * NS;
    let mut counts = Vec::new();
    for phase in [0.0, 1.0, 2.0, 3.0] {
        let mut c = config(2e-3);
        c.state = TimeBinState::maximally_entangled(0.8);
        c.franson = Some(FransonPair::default().with_total_phase(phase));
        c.memory = Some(MemoryActionModel {
            transmission_prob: 0.5,
            echo_efficiency: 0.3,
            storage_time: t_m,
        });
        c.signal_detector = lossless();
        c.idler_detector = lossless();
        let s = run_experiment(&c, 3, first_window(&c, 0.5)).unwrap();
        let h = build_histogram(
            &s.tags,
            IDLER_PORT1,
            SIGNAL_PORT1,
            1.0 * NS,
            (t_m - 48.0 * NS, t_m + 48.0 * NS),
        )
        .unwrap();
        counts.push([
            h.window_counts(t_m - 32.0 * NS, 4.0 * NS),
            h.window_counts(t_m + 32.0 * NS, 4.0 * NS),
        ]);
    }
    for side in 0..2 {
        let values: Vec<f64> = counts.iter().map(|c| c[side] as f64).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &values {
            assert!((v - mean).abs() < 4.0 * mean.sqrt(), "{values:?}");
        }
    }
}

#[test]
fn recovered_visibility_tracks_the_injected_coherence() {
    let window = 4.0 * NS;
    let range = (-48.0 * NS, 48.0 * NS);
    let mut z = config(1e-3);
    z.signal_detector = lossless();
    z.idler_detector = lossless();
    let h = build_histogram(
        &run_experiment(&z, 21, first_window(&z, 0.5)).unwrap().tags,
        IDLER_PORT1,
        SIGNAL_PORT1,
        1.0 * NS,
        range,
    )
    .unwrap();
    let g2 = g2_from_histogram(&h, 0.0, &[-32.0 * NS, 32.0 * NS], window).unwrap();

    for v_int in [0.3, 0.6, 0.9] {
        let mut extrema = Vec::new();
        for phase in [0.0, std::f64::consts::PI] {
            let mut c = z.clone();
            c.state = TimeBinState::maximally_entangled(v_int);
            c.franson = Some(FransonPair::default().with_total_phase(phase));
            let s = run_experiment(&c, 22, first_window(&c, 0.5)).unwrap();
            let h = build_histogram(&s.tags, IDLER_PORT1, SIGNAL_PORT1, 1.0 * NS, range).unwrap();
            extrema.push(h.window_counts(0.0, window) as f64);
        }
        let v = visibility_extrema(extrema[0], extrema[1]).unwrap();
        assert!((v.value - v_int).abs() <= 3.0 * v.sigma, "V {v} vs {v_int}");
        let w = witness(g2, v, 1, 3.0).unwrap();
        if v_int - 2.0 / (g2.value + 2.0) > 3.0 * v.sigma {
            assert!(w.w.value < 0.0);
        }
    }
}

#[test]
fn witness_is_never_negative_for_a_classical_mixture() {
    let w = witness(Estimate::new(2.0, 0.0), Estimate::new(0.5, 0.0), 1, 0.0).unwrap();
    assert!(w.w.value >= 0.0);
}
