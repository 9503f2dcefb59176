use proptest::prelude::*;
use scalefit::numerics::{huber, lse, lse_weights, HuberParams};
use scalefit::records::SamplesPerClass;
use scalefit::report::check_spec_version;
use scalefit::uncertainty::percentile;
use scalefit::{Region, RunRecord, RunTable};
use std::collections::BTreeMap;

fn params() -> impl Strategy<Value = HuberParams> {
    (1e-6f64..1.0).prop_map(|d| HuberParams::new(d).unwrap())
}

proptest! {
    #[test]
    fn huber_is_even_and_below_quadratic(r in -10.0f64..10.0, p in params()) {
        prop_assert_eq!(huber(r, p), huber(-r, p));
        prop_assert!(huber(r, p) >= 0.0);
        prop_assert!(huber(r, p) <= 0.5 * r * r + 1e-15);
    }

    #[test]
    fn huber_grows_with_residual(a in 0.0f64..5.0, b in 0.0f64..5.0, p in params()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(huber(lo, p) <= huber(hi, p));
    }

    #[test]
    fn lse_bounds_and_shift(terms in prop::collection::vec(-500.0f64..500.0, 1..12), c in -300.0f64..300.0) {
        let v = lse(&terms).unwrap();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= max);
        prop_assert!(v <= max + (terms.len() as f64).ln() + 1e-12);
        let shifted: Vec<f64> = terms.iter().map(|t| t + c).collect();
        let w = lse(&shifted).unwrap();
        prop_assert!((w - (v + c)).abs() <= 1e-9 * (1.0 + v.abs() + c.abs()));
    }

    #[test]
    fn lse_weights_sum_to_one(terms in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let mut w = vec![0.0; terms.len()];
        let v = lse_weights(&terms, &mut w);
        prop_assert!((v - lse(&terms).unwrap()).abs() < 1e-12);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn percentile_is_monotone_and_bounded(
        mut xs in prop::collection::vec(-1e6f64..1e6, 1..50),
        q1 in 0.0f64..=1.0,
        q2 in 0.0f64..=1.0,
    ) {
        xs.sort_by(f64::total_cmp);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let (a, b) = (percentile(&xs, lo), percentile(&xs, hi));
        prop_assert!(a <= b);
        prop_assert!(a >= xs[0] && b <= xs[xs.len() - 1]);
        prop_assert_eq!(percentile(&xs, 0.0), xs[0]);
        prop_assert_eq!(percentile(&xs, 1.0), xs[xs.len() - 1]);
    }

    #[test]
    fn spec_version_major_decides(major in 0u32..20, minor in 0u32..50) {
        prop_assert_eq!(check_spec_version(&format!("{major}.{minor}")), major == 1);
    }

    #[test]
    fn csv_and_json_round_trip(rows in prop::collection::vec(record(), 1..8)) {
        let rows: Vec<RunRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| { r.run_id = format!("r{i}"); r })
            .collect();
        let table = RunTable::new(rows, "prop").unwrap();

        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let back = RunTable::from_csv_reader(csv.as_slice(), "prop").unwrap();
        prop_assert_eq!(&back.rows, &table.rows);

        let mut json = Vec::new();
        table.write_json(&mut json).unwrap();
        let back = RunTable::from_json_reader(json.as_slice(), "prop").unwrap();
        prop_assert_eq!(&back.rows, &table.rows);
    }
}

fn record() -> impl Strategy<Value = RunRecord> {
    (
        1u64..1_000_000_000,
        1u64..1_000_000_000,
        1e9f64..1e24,
        prop::option::of(1u64..5000),
        prop::collection::btree_map(prop::sample::select(Region::ALL.to_vec()), 0.0f64..=1.0, 0..5),
        prop::option::of(0.0f64..=1.0),
        -5i64..100,
    )
        .prop_map(|(n, d, c, spc, scores, acc, seed)| RunRecord {
            run_id: String::new(),
            family: "convnext".into(),
            arch: "tiny".into(),
            dataset: "imagenet".into(),
            samples_per_class: spc.map_or(SamplesPerClass::Full, SamplesPerClass::Count),
            seed,
            n_params: n,
            samples_seen: d,
            flops: c,
            scores: scores.into_iter().collect::<BTreeMap<_, _>>(),
            val_accuracy: acc,
        })
}
