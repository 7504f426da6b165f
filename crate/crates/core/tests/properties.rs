use std::collections::HashMap;

use airq_core::inequality::{decompose_ge, ge, gini, GeAlpha, GroupedDistribution};
use airq_core::ingest::apply_sample_filters;
use airq_core::poverty::poverty_threshold;
use airq_core::stats::{summarize, weighted_quantile};
use airq_core::{CellRecord, CountryId, ExposureTable, WeightedDistribution};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.01f64..100.0, 0.01f64..10.0), 1..80)
}

fn dist(pairs: &[(f64, f64)]) -> WeightedDistribution {
    let (v, w) = pairs.iter().copied().unzip();
    WeightedDistribution::new(v, w).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn indices_ignore_element_order(pairs in sample(), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        // deterministic permutation driven by the seed
        let n = shuffled.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
            shuffled.swap(i, j);
        }
        let (a, b) = (dist(&pairs), dist(&shuffled));
        prop_assert!(close(gini(&a).unwrap(), gini(&b).unwrap(), 1e-12));
        for alpha in GeAlpha::ALL {
            prop_assert!(close(ge(&a, alpha).unwrap(), ge(&b, alpha).unwrap(), 1e-12));
        }
        prop_assert_eq!(weighted_quantile(&a, 0.5).unwrap(), weighted_quantile(&b, 0.5).unwrap());
    }

    #[test]
    fn indices_are_non_negative_and_gini_below_one(pairs in sample()) {
        let d = dist(&pairs);
        let g = gini(&d).unwrap();
        prop_assert!((0.0..1.0).contains(&g));
        for alpha in GeAlpha::ALL {
            prop_assert!(ge(&d, alpha).unwrap() >= 0.0);
        }
    }

    #[test]
    fn quantiles_are_monotone(pairs in sample(), q1 in 0.01f64..0.99, q2 in 0.01f64..0.99) {
        let d = dist(&pairs);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(weighted_quantile(&d, lo).unwrap() <= weighted_quantile(&d, hi).unwrap());
        let s = summarize(&d, &[5.0, 10.0]);
        prop_assert!(s.p10 <= s.p90);
        prop_assert!(s.share_over(5.0).unwrap() >= s.share_over(10.0).unwrap());
    }

    #[test]
    fn threshold_falls_as_target_grows(pairs in sample(), f1 in 0.01f64..1.0, f2 in 0.01f64..1.0) {
        let d = dist(&pairs);
        let total = d.total_weight();
        let (small, large) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let t_small = poverty_threshold(&d, small * total).unwrap();
        let t_large = poverty_threshold(&d, large * total).unwrap();
        prop_assert!(t_large <= t_small);
    }

    #[test]
    fn ge_decomposition_is_exact(pairs in sample(), groups in prop::collection::vec(0usize..4, 80)) {
        let d = dist(&pairs);
        let group_of = groups[..d.len()].to_vec();
        let labels = (0..4).map(|g| g.to_string()).collect();
        let gd = GroupedDistribution::new(d, group_of, labels).unwrap();
        for alpha in GeAlpha::ALL {
            let r = decompose_ge(&gd, alpha).unwrap();
            prop_assert!((r.total - r.between - r.within).abs() <= 1e-10 * r.total.max(1.0));
        }
    }

    #[test]
    fn sample_filters_are_idempotent(
        rows in prop::collection::vec((0usize..4, 0.0f64..5000.0), 1..60),
        min_cell in 0.0f64..10.0,
        min_country in 0.0f64..20000.0,
    ) {
        let names: Vec<String> = (0..4).map(|i| format!("K{i}")).collect();
        let cells = rows
            .iter()
            .map(|&(k, population)| CellRecord { lon: 0.0, lat: 0.0, population, country: CountryId(k as u32), exposure: None })
            .collect();
        let table = ExposureTable::new("y", names, cells).unwrap();
        let (once, _) = apply_sample_filters(&table, min_cell, min_country);
        let (twice, report) = apply_sample_filters(&once, min_cell, min_country);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(report.cells_dropped_low_population, 0);
        prop_assert!(report.countries_dropped_small.is_empty());
        let totals: HashMap<String, f64> = once.country_totals_by_name(false);
        for c in once.cells() {
            prop_assert!(totals[once.country_name(c.country)] >= min_country);
        }
    }
}
