use fsmc::distfit::{amplitudes, fit_nakagami, FamilyParams, SnrPdf};
use fsmc::markov::{stationary_distribution, TransitionMatrix};
use fsmc::model::{build_model, BuildConfig, FsmcInterval, FsmcModel, ModelMetadata};
use fsmc::quantizer::LevelSet;
use fsmc::simulate::{empirical_stats, simulate, Trajectory};
use fsmc::synth::{synth_from_model, synth_trace, ControlPoint, Fading, FadingMode, SynthSpec};
use fsmc::trace::{interval_length_from_wavelengths, partition, MeasurementTrace};

fn birth_death(n: usize) -> TransitionMatrix {
    // up 0.4, down 0.2, so that π_k ∝ 2^k
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            let up = if i + 1 < n { 0.4 } else { 0.0 };
            let down = if i > 0 { 0.2 } else { 0.0 };
            if i > 0 {
                row[i - 1] = down;
            }
            if i + 1 < n {
                row[i + 1] = up;
            }
            row[i] = 1.0 - up - down;
            row
        })
        .collect();
    TransitionMatrix::new(rows).unwrap()
}

fn power_iterate(p: &TransitionMatrix, steps: usize) -> Vec<f64> {
    let n = p.n_states();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for (i, vi) in v.iter().enumerate() {
            for (j, nj) in next.iter_mut().enumerate() {
                *nj += vi * p.rows()[i][j];
            }
        }
        v = next;
    }
    v
}

fn single_interval_model(p: TransitionMatrix) -> FsmcModel {
    let n = p.n_states();
    let thresholds: Vec<f64> = (0..=n).map(|i| 10.0 * i as f64 + 5.0).collect();
    let reps: Vec<f64> = (1..=n).map(|i| 10.0 * i as f64).collect();
    let pi = stationary_distribution(&p).distribution;
    FsmcModel {
        interval_length: 100.0,
        origin: 0.0,
        n_states: n,
        metadata: ModelMetadata::default(),
        intervals: vec![FsmcInterval {
            index: 1,
            sample_count: 0,
            snr_pdf: SnrPdf::new(2.0, 20.0).unwrap(),
            family: FamilyParams::Nakagami { m: 2.0, omega: 20.0 },
            levels: LevelSet::new(thresholds, reps, 1.0).unwrap(),
            matrix: p,
            state_probs: pi,
            pooled_from: None,
        }],
    }
}

#[test]
fn stationary_matches_closed_form_and_power_iteration() {
    let p = birth_death(5);
    let pi = stationary_distribution(&p);
    let total: f64 = (0..5).map(|k| 2f64.powi(k)).sum();
    for (k, v) in pi.distribution.iter().enumerate() {
        assert!((v - 2f64.powi(k as i32) / total).abs() < 1e-12);
    }
    let iterated = power_iterate(&p, 5000);
    for (a, b) in pi.distribution.iter().zip(&iterated) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(!pi.reducible && pi.residual < 1e-12);
}

#[test]
fn simulated_occupancy_converges_to_stationary() {
    let model = single_interval_model(birth_death(4));
    let traj = Trajectory::new(0.0, 100.0, 1e-4).unwrap();
    let sim = simulate(&model, &traj, 3).unwrap();
    assert_eq!(sim.samples.len(), 1_000_000);
    let stats = empirical_stats(&sim, &model);
    for (a, b) in stats[0].occupancy.iter().zip(&model.intervals[0].state_probs) {
        assert!((a - b).abs() < 0.01, "{a} vs {b}");
    }
    let p = stats[0].counts.to_matrix();
    for (ra, rb) in p.rows().iter().zip(model.intervals[0].matrix.rows()) {
        for (a, b) in ra.iter().zip(rb) {
            assert!((a - b).abs() < 0.01);
        }
    }
}

#[test]
fn round_trip_recovers_matrices() {
    // near-uniform occupancy keeps every representative in its own refitted cell
    let p = TransitionMatrix::new(vec![
        vec![0.6, 0.4, 0.0, 0.0],
        vec![0.3, 0.4, 0.3, 0.0],
        vec![0.0, 0.3, 0.4, 0.3],
        vec![0.0, 0.0, 0.4, 0.6],
    ])
    .unwrap();
    let truth = single_interval_model(p);
    let trace = synth_from_model(&truth, 10_000, 12).unwrap();
    assert_eq!(trace.len(), 10_000);
    let cfg = BuildConfig {
        family: fsmc::FamilyPolicy::Fixed(fsmc::Family::Nakagami),
        ..BuildConfig::new(100.0, 4)
    };
    let rebuilt = build_model(&trace, &cfg).unwrap();
    for (ra, rb) in rebuilt.intervals[0].matrix.rows().iter().zip(truth.intervals[0].matrix.rows()) {
        for (a, b) in ra.iter().zip(rb) {
            assert!((a - b).abs() < 0.02, "{a} vs {b}");
        }
    }
}

fn flat_spec(fading: Fading, count: usize, seed: u64) -> SynthSpec {
    SynthSpec {
        path_loss: vec![
            ControlPoint {
                distance_m: 0.0,
                mean_snr: 20.0,
            },
            ControlPoint {
                distance_m: 1.0,
                mean_snr: 20.0,
            },
        ],
        fading,
        mode: FadingMode::Multiplicative,
        segments: vec![],
        span_m: (count - 1) as f64 * 0.01,
        sample_spacing_m: 0.01,
        seed,
    }
}

#[test]
fn synthetic_nakagami_refits() {
    let trace = synth_trace(&flat_spec(Fading::Nakagami { m: 2.0 }, 100_000, 5)).unwrap();
    assert_eq!(trace.len(), 100_000);
    let fit = fit_nakagami(&amplitudes(&trace.snr_values()).unwrap()).unwrap();
    let FamilyParams::Nakagami { m, omega } = fit.params else { unreachable!() };
    assert!((m - 2.0).abs() / 2.0 < 0.03, "m = {m}");
    assert!((omega - 20.0).abs() / 20.0 < 0.03, "omega = {omega}");
}

#[test]
fn zero_variance_fading_follows_path_loss() {
    let mut spec = flat_spec(Fading::None, 101, 1);
    spec.path_loss[1].mean_snr = 30.0;
    let trace = synth_trace(&spec).unwrap();
    for s in trace.samples() {
        assert!((s.snr - spec.mean_snr(s.distance)).abs() < 1e-12);
    }
    let other = synth_trace(&SynthSpec { seed: 2, ..spec.clone() }).unwrap();
    assert_eq!(trace.samples(), other.samples());
}

#[test]
fn five_hundred_metres_in_five_metre_intervals() {
    let trace = MeasurementTrace::from_pairs((0..5000).map(|i| (i as f64 * 0.1, 10.0 + (i % 7) as f64))).unwrap();
    let (layout, slices) = partition(&trace, 5.0, 0.0).unwrap();
    assert_eq!(layout.count, 100);
    assert_eq!(slices.len(), 100);
    let delta = interval_length_from_wavelengths(40.0, 2.412e9).unwrap();
    assert!((delta - 4.9717).abs() < 1e-4);
}
