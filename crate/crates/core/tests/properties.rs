use fsmc::evaluate::binned_mse;
use fsmc::markov::{estimate_matrix, StateSequence, TransitionCounts};
use fsmc::quantizer::{quantize, LevelSet};
use fsmc::trace::{partition, MeasurementTrace};
use proptest::prelude::*;

fn sequence() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2usize..=8).prop_flat_map(|n| (Just(n), prop::collection::vec(1..=n, 2..200)))
}

proptest! {
    #[test]
    fn estimated_rows_are_stochastic_and_banded((n, states) in sequence()) {
        let seq = StateSequence::new(1, states, n).unwrap();
        let p = estimate_matrix(&seq, n).unwrap();
        for (i, row) in p.rows().iter().enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (j, &v) in row.iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(&v));
                if i.abs_diff(j) > 1 {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn counts_cover_every_step((n, states) in sequence()) {
        let mut counts = TransitionCounts::new(n);
        counts.add_run(&states);
        prop_assert_eq!(counts.total(), states.len() as u64 - 1);
        let long = states.windows(2).filter(|w| w[0].abs_diff(w[1]) > 1).count() as u64;
        prop_assert_eq!(counts.clamped, long);
    }

    #[test]
    fn quantize_lands_in_its_cell(
        mut cuts in prop::collection::btree_set(1i32..1000, 3..9),
        x in -50.0f64..1100.0,
    ) {
        let t: Vec<f64> = std::mem::take(&mut cuts).into_iter().map(f64::from).collect();
        let reps: Vec<f64> = t.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let levels = LevelSet::new(t.clone(), reps, 0.0).unwrap();
        let k = quantize(x, &levels);
        let n = levels.n_levels();
        prop_assert!((1..=n).contains(&k));
        if x >= t[0] && x < t[n] {
            prop_assert!(t[k - 1] <= x && x < t[k]);
        }
    }

    #[test]
    fn binned_mse_is_symmetric(
        a in prop::collection::vec((0.0f64..100.0, 0.0f64..50.0), 1..80),
        b in prop::collection::vec((0.0f64..100.0, 0.0f64..50.0), 1..80),
        w in 0.5f64..10.0,
    ) {
        match (binned_mse(&a, &b, w), binned_mse(&b, &a, w)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.mse - y.mse).abs() <= 1e-9 * x.mse.max(1.0));
                prop_assert_eq!(x.common_bins, y.common_bins);
                prop_assert!(x.coverage_fraction > 0.0 && x.coverage_fraction <= 1.0);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric failure"),
        }
        prop_assert!(binned_mse(&a, &a, w).unwrap().mse == 0.0);
    }

    #[test]
    fn partition_keeps_every_sample(
        mut d in prop::collection::vec(0.0f64..500.0, 1..300),
        delta in 0.5f64..60.0,
    ) {
        d.sort_by(f64::total_cmp);
        let trace = MeasurementTrace::from_pairs(d.iter().map(|&x| (x, 1.0))).unwrap();
        let (layout, slices) = partition(&trace, delta, 0.0).unwrap();
        prop_assert_eq!(slices.iter().map(|s| s.len()).sum::<usize>(), d.len());
        for s in &slices {
            let (lo, hi) = layout.bounds(s.index);
            for x in &s.samples {
                prop_assert!(x.distance >= lo && (x.distance < hi || s.index == layout.count));
            }
        }
    }
}
