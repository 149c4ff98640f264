//! Property-based suites for the metric, evaluation, and clustering
//! invariants, 1000 random cases per property.

use proptest::prelude::*;

use sci_core::cluster::ClusterMap;
use sci_core::metrics::{
    alarm_summary, hhi_flow, inverse_logit, logit, persistence_ratio, sci, two_sidedness,
    weighted_sci, LogitPath, TraderFlows, VolumePair, Weights, DEFAULT_BIN_MINUTES,
};

fn logit_path(values: Vec<f64>) -> LogitPath {
    LogitPath::new(values, DEFAULT_BIN_MINUTES).unwrap()
}

fn flows_from(values: &[f64]) -> TraderFlows {
    TraderFlows::from_entries(
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("w{i:03}"), v)),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn logit_round_trip(p in 1e-6f64..=1.0 - 1e-6) {
        let l = logit(p).unwrap();
        prop_assert!((inverse_logit(l) - p).abs() < 1e-12);
    }

    #[test]
    fn logit_is_antisymmetric(p in 1e-6f64..=1.0 - 1e-6) {
        let a = logit(p).unwrap();
        let b = logit(1.0 - p).unwrap();
        prop_assert!((a + b).abs() < 1e-9);
    }

    #[test]
    fn persistence_ratio_bounded(values in prop::collection::vec(-5.0f64..5.0, 3..40)) {
        let w = values.len() - 1;
        let path = logit_path(values);
        match persistence_ratio(&path, w, w) {
            Ok(pr) => prop_assert!((0.0..=1.0).contains(&pr), "pr = {pr}"),
            // Admissible only when the window truly never moved.
            Err(_) => {
                let vals = path.values();
                let gross: f64 = vals.windows(2).map(|p| (p[1] - p[0]).abs()).sum();
                prop_assert!(gross <= 1e-9);
            }
        }
    }

    #[test]
    fn persistence_ratio_monotone_path_is_one(
        steps in prop::collection::vec(1e-4f64..0.5, 2..30),
        start in -2.0f64..2.0,
        up in proptest::bool::ANY,
    ) {
        let sign = if up { 1.0 } else { -1.0 };
        let mut values = vec![start];
        for s in &steps {
            values.push(values.last().unwrap() + sign * s);
        }
        let w = values.len() - 1;
        let pr = persistence_ratio(&logit_path(values), w, w).unwrap();
        prop_assert!((pr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn persistence_ratio_round_trip_is_zero(
        steps in prop::collection::vec(1e-3f64..0.5, 1..15),
        start in -2.0f64..2.0,
    ) {
        // Walk up the given steps, then back down the reverse: net zero.
        let mut values = vec![start];
        for s in &steps {
            values.push(values.last().unwrap() + s);
        }
        for s in steps.iter().rev() {
            values.push(values.last().unwrap() - s);
        }
        let w = values.len() - 1;
        let pr = persistence_ratio(&logit_path(values), w, w).unwrap();
        prop_assert!(pr.abs() < 1e-9, "pr = {pr}");
    }

    #[test]
    fn two_sidedness_bounds_and_symmetry(buy in 1e-6f64..1e9, sell in 1e-6f64..1e9) {
        let ts = two_sidedness(&VolumePair { buy, sell }).unwrap();
        let swapped = two_sidedness(&VolumePair { buy: sell, sell: buy }).unwrap();
        prop_assert!((0.0..=1.0).contains(&ts));
        prop_assert!((ts - swapped).abs() < 1e-12);
    }

    #[test]
    fn two_sidedness_extremes(v in 1e-6f64..1e9) {
        let balanced = two_sidedness(&VolumePair { buy: v, sell: v }).unwrap();
        let one_sided = two_sidedness(&VolumePair { buy: v, sell: 0.0 }).unwrap();
        prop_assert!((balanced - 1.0).abs() < 1e-12);
        prop_assert!(one_sided.abs() < 1e-12);
    }

    #[test]
    fn hhi_bounds_and_scale_invariance(
        values in prop::collection::vec(-1e6f64..1e6, 1..50),
        scale in prop::sample::select(vec![-1000.0f64, -2.5, -1.0, 0.5, 3.0, 1e4]),
    ) {
        prop_assume!(values.iter().any(|v| v.abs() > 1e-9));
        let n = values.iter().filter(|v| v.abs() > 0.0).count() as f64;
        let h = hhi_flow(&flows_from(&values)).unwrap();
        prop_assert!(h >= 1.0 / n - 1e-12 && h <= 1.0 + 1e-12, "h = {h}, n = {n}");
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let hs = hhi_flow(&flows_from(&scaled)).unwrap();
        prop_assert!((h - hs).abs() < 1e-9);
    }

    #[test]
    fn hhi_equal_flows_is_one_over_n(n in 1usize..60, v in 1e-3f64..1e6) {
        let values = vec![v; n];
        let h = hhi_flow(&flows_from(&values)).unwrap();
        prop_assert!((h - 1.0 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn hhi_merging_is_monotone(
        values in prop::collection::vec(-1e6f64..1e6, 2..30),
        a in 0usize..30,
        b in 0usize..30,
    ) {
        // Merging any two wallets weakly concentrates the flow profile.
        prop_assume!(values.iter().any(|v| v.abs() > 1e-9));
        let (a, b) = (a % values.len(), b % values.len());
        prop_assume!(a != b);
        let flows = flows_from(&values);
        let raw = hhi_flow(&flows).unwrap();
        let map = ClusterMap::from_assignments(
            (0..values.len()).map(|i| {
                let group = if i == a || i == b { "pair".to_string() } else { format!("g{i}") };
                (format!("w{i:03}"), group)
            }),
        );
        let merged = hhi_flow(&map.apply_to_flows(&flows)).unwrap();
        prop_assert!(merged >= raw - 1e-12, "raw {raw} merged {merged}");
    }

    #[test]
    fn clustered_hhi_dominates_raw_for_any_partition(
        values in prop::collection::vec(-1e6f64..1e6, 2..30),
        groups in prop::collection::vec(0usize..6, 30),
    ) {
        prop_assume!(values.iter().any(|v| v.abs() > 1e-9));
        let flows = flows_from(&values);
        let raw = hhi_flow(&flows).unwrap();
        let map = ClusterMap::from_assignments(
            (0..values.len()).map(|i| (format!("w{i:03}"), format!("g{}", groups[i]))),
        );
        let clustered = hhi_flow(&map.apply_to_flows(&flows)).unwrap();
        prop_assert!(clustered >= raw - 1e-12, "raw {raw} clustered {clustered}");
    }

    #[test]
    fn identity_clustering_changes_nothing(
        values in prop::collection::vec(-1e6f64..1e6, 1..30),
    ) {
        let flows = flows_from(&values);
        let map = ClusterMap::identity((0..values.len()).map(|i| format!("w{i:03}")));
        let applied = map.apply_to_flows(&flows);
        for (k, v) in flows.entries() {
            prop_assert!((applied.entries()[k] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sci_bounds_and_component_monotonicity(
        pr in 0.0f64..=1.0,
        ts in 0.0f64..=1.0,
        hhi in 0.0f64..=1.0,
        bump in 1e-6f64..0.2,
    ) {
        let s = sci(pr, ts, hhi).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let pr_up = (pr + bump).min(1.0);
        prop_assert!(sci(pr_up, ts, hhi).unwrap() >= s - 1e-15);
        let ts_up = (ts + bump).min(1.0);
        prop_assert!(sci(pr, ts_up, hhi).unwrap() <= s + 1e-15);
        let hhi_up = (hhi + bump).min(1.0);
        prop_assert!(sci(pr, ts, hhi_up).unwrap() <= s + 1e-15);
    }

    #[test]
    fn balanced_weights_reduce_to_plain_sci(
        pr in 0.0f64..=1.0,
        ts in 0.0f64..=1.0,
        hhi in 0.0f64..=1.0,
    ) {
        let plain = sci(pr, ts, hhi).unwrap();
        let weighted = weighted_sci(pr, ts, hhi, &Weights::balanced()).unwrap();
        prop_assert!((plain - weighted).abs() < 1e-15);
    }

    #[test]
    fn normalized_weights_sum_to_three(
        a in 1e-3f64..10.0,
        b in 1e-3f64..10.0,
        c in 1e-3f64..10.0,
    ) {
        let w = Weights::normalized(a, b, c).unwrap();
        prop_assert!(w.is_normalized());
        prop_assert!((w.alpha1 + w.alpha2 + w.alpha3 - 3.0).abs() < 1e-9);
        // Rescaling preserves the exponent ratios.
        prop_assert!((w.alpha1 / w.alpha2 - a / b).abs() < 1e-9);
    }

    #[test]
    fn weighted_sci_elasticities_match_exponents(
        pr in 0.05f64..0.95,
        ts in 0.05f64..0.95,
        hhi in 0.05f64..0.95,
        a in 0.2f64..2.5,
        b in 0.2f64..2.5,
        c in 0.2f64..2.5,
    ) {
        let w = Weights::normalized(a, b, c).unwrap();
        let h: f64 = 1e-5;
        let f = |pr: f64, ts: f64, hhi: f64| weighted_sci(pr, ts, hhi, &w).unwrap().ln();
        let d_pr = (f(pr * h.exp(), ts, hhi) - f(pr * (-h).exp(), ts, hhi)) / (2.0 * h);
        prop_assert!((d_pr - w.alpha1).abs() < 1e-6, "{d_pr} vs {}", w.alpha1);
        // TS and HHI enter through their complements.
        let g = 1.0 - ts;
        let d_ts = (f(pr, 1.0 - g * h.exp(), hhi) - f(pr, 1.0 - g * (-h).exp(), hhi)) / (2.0 * h);
        prop_assert!((d_ts - w.alpha2).abs() < 1e-6, "{d_ts} vs {}", w.alpha2);
        let k = 1.0 - hhi;
        let d_hhi = (f(pr, ts, 1.0 - k * h.exp()) - f(pr, ts, 1.0 - k * (-h).exp())) / (2.0 * h);
        prop_assert!((d_hhi - w.alpha3).abs() < 1e-6, "{d_hhi} vs {}", w.alpha3);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(
        scores in prop::collection::vec(-10.0f64..10.0, 4..60),
        labels in prop::collection::vec(0u8..=1, 60),
    ) {
        use sci_core::eval::roc_auc;
        let labels = &labels[..scores.len()];
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let a = roc_auc(&scores, labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let transformed: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() + 7.0).collect();
        let b = roc_auc(&transformed, labels).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn auc_complement_under_label_flip(
        scores in prop::collection::vec(-10.0f64..10.0, 4..60),
        labels in prop::collection::vec(0u8..=1, 60),
    ) {
        use sci_core::eval::roc_auc;
        let labels = &labels[..scores.len()];
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let a = roc_auc(&scores, labels).unwrap();
        let b = roc_auc(&scores, &flipped).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn youden_point_is_achievable_and_maximal(
        scores in prop::collection::vec(-10.0f64..10.0, 4..40),
        labels in prop::collection::vec(0u8..=1, 40),
    ) {
        use sci_core::eval::youden_threshold;
        let labels = &labels[..scores.len()];
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let op = youden_threshold(&scores, labels).unwrap();
        let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        let tpr = scores.iter().zip(labels).filter(|(&s, &l)| l == 1 && s > op.tau).count() as f64 / n_pos;
        let fpr = scores.iter().zip(labels).filter(|(&s, &l)| l == 0 && s > op.tau).count() as f64 / n_neg;
        prop_assert!((tpr - op.tpr).abs() < 1e-12 && (fpr - op.fpr).abs() < 1e-12);
        // No score value beats the returned J.
        for &t in &scores {
            let tpr = scores.iter().zip(labels).filter(|(&s, &l)| l == 1 && s > t).count() as f64 / n_pos;
            let fpr = scores.iter().zip(labels).filter(|(&s, &l)| l == 0 && s > t).count() as f64 / n_neg;
            prop_assert!(tpr - fpr <= op.youden_j + 1e-12);
        }
    }

    #[test]
    fn alarm_summary_consistent(
        series in prop::collection::vec(0.0f64..1.0, 1..80),
        tau in 0.0f64..1.0,
    ) {
        let a = alarm_summary(&series, tau, 5);
        let above: Vec<bool> = series.iter().map(|&s| s > tau).collect();
        prop_assert_eq!(a.onset, above.iter().position(|&x| x));
        let count = above.iter().filter(|&&x| x).count() as u32;
        prop_assert_eq!(a.duration_minutes, count * 5);
        prop_assert_eq!(a.sustained, a.duration_minutes > 60);
        if a.onset.is_none() {
            prop_assert_eq!(a.decay_minutes, None);
        }
    }
}

mod simulation {
    use super::*;
    use sci_core::dgp::{builtin_specs, generate_dataset, N_BINS};
    use sci_core::eval::score_dataset;

    proptest! {
        // Each case simulates several paths; fewer cases keep the suite
        // inside the runtime budget while still covering all regimes.
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn simulated_paths_and_scores_within_bounds(
            seed in 0u64..1_000_000,
            spec_idx in 0usize..8,
        ) {
            let spec = builtin_specs().swap_remove(spec_idx);
            let ds = generate_dataset(&[spec], 4, seed).unwrap();
            for p in &ds.paths {
                prop_assert_eq!(p.prices.len(), N_BINS + 1);
                prop_assert!(p.prices.iter().all(|&x| (0.01..=0.99).contains(&x)));
                prop_assert!(p.bin_volumes.iter().all(|v| v.buy >= 0.0 && v.sell >= 0.0));
            }
            for s in score_dataset(&ds, N_BINS).unwrap() {
                prop_assert!((0.0..=1.0).contains(&s.components.sci));
                prop_assert!((0.0..=1.0).contains(&s.components.pr));
                prop_assert!((0.0..=1.0).contains(&s.components.ts));
                prop_assert!((0.0..=1.0).contains(&s.components.hhi_flow));
            }
        }

        #[test]
        fn generation_deterministic_in_seed(seed in 0u64..1_000_000) {
            let specs = builtin_specs();
            let a = generate_dataset(&specs[..2], 3, seed).unwrap();
            let b = generate_dataset(&specs[..2], 3, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
