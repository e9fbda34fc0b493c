use momp_track::harness::{cdf_points, match_paths, percentile};
use momp_track::locate::dead_reckon;
use momp_track::signal::{PathOrder, PathParams};
use nalgebra::Vector2;
use num_complex::Complex64;
use proptest::prelude::*;

fn path() -> impl Strategy<Value = PathParams> {
    (-3.0..3.0f64, -1.2..1.2f64, -3.0..3.0f64, -1.2..1.2f64, 0.0..60e-9f64, any::<bool>()).prop_map(
        |(dod_az, dod_el, doa_az, doa_el, tdoa, los)| PathParams {
            gain: Complex64::new(1.0, 0.0),
            toa: tdoa,
            tdoa,
            doa_az,
            doa_el,
            dod_az,
            dod_el,
            order: if los { PathOrder::Los } else { PathOrder::FirstOrder },
        },
    )
}

proptest! {
    #[test]
    fn matching_ignores_truth_order(
        est in prop::collection::vec(path(), 0..6),
        truth in prop::collection::vec(path(), 0..6).prop_shuffle(),
        rot in 0usize..6,
    ) {
        let mut shuffled = truth.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
        }
        prop_assert_eq!(match_paths(&est, &truth), match_paths(&est, &shuffled));
    }

    #[test]
    fn matching_is_one_to_one(est in prop::collection::vec(path(), 0..6), truth in prop::collection::vec(path(), 0..6)) {
        prop_assert_eq!(match_paths(&est, &truth).len(), est.len().min(truth.len()));
    }

    #[test]
    fn percentiles_are_sample_values_in_order(
        v in prop::collection::vec(-1e3..1e3f64, 1..50),
        p in 0.0..100.0f64,
        q in 0.0..100.0f64,
    ) {
        let (lo, hi) = (p.min(q), p.max(q));
        let a = percentile(&v, lo).unwrap();
        let b = percentile(&v, hi).unwrap();
        prop_assert!(a <= b);
        prop_assert!(v.contains(&a));
        let below = v.iter().filter(|x| **x <= a).count() as f64;
        prop_assert!(below >= lo / 100.0 * v.len() as f64);
    }

    #[test]
    fn cdf_reaches_one(v in prop::collection::vec(-1e3..1e3f64, 1..50)) {
        let c = cdf_points(&v);
        prop_assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        prop_assert_eq!(c.last().unwrap().1, 1.0);
    }

    #[test]
    fn dead_reckoning_composes(x in -100.0..100.0f64, y in -10.0..10.0f64, vx in -30.0..30.0f64, vy in -3.0..3.0f64) {
        let (p, v) = (Vector2::new(x, y), Vector2::new(vx, vy));
        let two = dead_reckon(dead_reckon(p, v, 0.5e-3), v, 0.5e-3);
        prop_assert!((two - dead_reckon(p, v, 1e-3)).norm() < 1e-9);
    }
}
