use proptest::prelude::*;

use sparse_cdma::channel::{psd_db, sigma0_sq_from_psd_db};
use sparse_cdma::ensembles::{sample_signature, EnsembleSpec, SignatureMatrix};
use sparse_cdma::experiment::wilson_interval;
use sparse_cdma::kernel::{chip_field, ChipSensitivity};
use sparse_cdma::popdyn::{ks_distance, Population, Side};

fn chip_inputs() -> impl Strategy<Value = (f64, f64, f64, Vec<(f64, f64)>)> {
    (
        -3.0..3.0f64,
        0.01..20.0f64,
        prop_oneof![Just(0.5f64), Just(-0.5f64)],
        prop::collection::vec((prop_oneof![Just(0.5f64), Just(-0.5f64)], -25.0..25.0f64), 0..6),
    )
}

proptest! {
    #[test]
    fn chip_field_is_odd_under_global_flip((y, k, g0, nb) in chip_inputs()) {
        let gains: Vec<f64> = nb.iter().map(|p| p.0).collect();
        let fields: Vec<f64> = nb.iter().map(|p| p.1).collect();
        let neg: Vec<f64> = fields.iter().map(|h| -h).collect();
        let a = chip_field(y, k, g0, &gains, &fields);
        let b = chip_field(-y, k, g0, &gains, &neg);
        prop_assert!((a + b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn chip_field_is_finite_and_bounded((y, k, g0, nb) in chip_inputs()) {
        let gains: Vec<f64> = nb.iter().map(|p| p.0).collect();
        let fields: Vec<f64> = nb.iter().map(|p| p.1).collect();
        let u = chip_field(y, k, g0, &gains, &fields);
        let bound = 2.0 * k * (y.abs() + gains.iter().map(|g| g.abs()).sum::<f64>()) * g0.abs();
        prop_assert!(u.is_finite());
        prop_assert!(u.abs() <= bound + 1e-9);
    }

    #[test]
    fn chip_field_derivatives_lie_in_unit_interval((y, k, g0, nb) in chip_inputs()) {
        let gains: Vec<f64> = nb.iter().map(|p| p.0).collect();
        let fields: Vec<f64> = nb.iter().map(|p| p.1).collect();
        let mut s = ChipSensitivity::default();
        s.compute(y, k, g0, &gains, &fields);
        for d in &s.field_derivatives {
            prop_assert!(d.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn psd_round_trip(db in -20.0..40.0f64) {
        let back = psd_db(sigma0_sq_from_psd_db(db)).unwrap();
        prop_assert!((back - db).abs() < 1e-10);
    }

    #[test]
    fn regular_signatures_have_exact_degrees(chips in 1usize..40, seed in any::<u64>()) {
        let spec = EnsembleSpec::regular(3, 3, chips.max(3)).unwrap();
        let s = sample_signature(&spec, seed).unwrap();
        prop_assert!(s.chip_degrees().iter().all(|&d| d == 3));
        prop_assert!(s.user_degrees().iter().all(|&d| d == 3));
        let back = SignatureMatrix::from_text(&s.to_text()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn population_text_round_trip(fields in prop::collection::vec(-30.0..30.0f64, 1..50), sweep in 0usize..10_000) {
        let p = Population::from_fields(fields, Side::Chip);
        let (q, s) = Population::from_text(&p.to_text(sweep)).unwrap();
        prop_assert_eq!(s, sweep);
        prop_assert_eq!(q.fields(), p.fields());
        prop_assert_eq!(q.side(), Side::Chip);
    }

    #[test]
    fn ks_distance_is_a_bounded_symmetric_metric(
        a in prop::collection::vec(-1.0..1.0f64, 1..60),
        b in prop::collection::vec(-1.0..1.0f64, 1..60),
    ) {
        let d = ks_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - ks_distance(&b, &a)).abs() < 1e-15);
        prop_assert_eq!(ks_distance(&a, &a), 0.0);
    }

    #[test]
    fn wilson_interval_brackets_the_rate(n in 1u32..10_000, frac in 0.0..=1.0f64) {
        let k = (frac * f64::from(n)).round();
        let (lo, hi) = wilson_interval(k, f64::from(n), 1.96);
        let p = k / f64::from(n);
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}
