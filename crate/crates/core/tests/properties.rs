//! Property tests for the engine's documented invariants.

use driftbench_core::baselines::{copy_last, EsModel};
use driftbench_core::numerics::{clip_l2, cosine, Tensor};
use driftbench_core::report::rank_periods;
use driftbench_core::timebase::{
    calendar_features, macro_average, make_windows, scaler_fit, Column, FeatureKind, FeatureSpec,
    HourStamp, TimeFrame,
};
use proptest::prelude::*;

fn finite_series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, len)
}

fn series_common_len(series: &[Vec<f64>]) -> usize {
    series.iter().map(|s| s.len()).min().unwrap_or(0)
}

proptest! {
    #[test]
    fn feature_widths_formula(n in 1usize..60) {
        let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        prop_assert_eq!(FeatureSpec::new(FeatureKind::E, vec![]).unwrap().width(), 3);
        prop_assert_eq!(FeatureSpec::new(FeatureKind::Et, vec![]).unwrap().width(), 4);
        prop_assert_eq!(FeatureSpec::new(FeatureKind::Em, names.clone()).unwrap().width(), n + 5);
        prop_assert_eq!(FeatureSpec::new(FeatureKind::Etm, names).unwrap().width(), n + 6);
    }

    #[test]
    fn macro_average_affine_invariant(
        base in prop::collection::vec(finite_series(3..20), 1..5),
        a in 0.1..50.0f64,
        b in -100.0..100.0f64,
        which in 0usize..5,
    ) {
        let len = series_common_len(&base);
        let series: Vec<Vec<f64>> = base.into_iter().map(|mut s| { s.truncate(len); s }).collect();
        // Near-constant series make min-max normalization numerically wild;
        // the affine-invariance claim is about non-degenerate inputs.
        for s in &series {
            let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 1e-3);
        }

        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let before = macro_average(&refs).unwrap();

        let mut rescaled = series.clone();
        let idx = which % rescaled.len();
        for v in &mut rescaled[idx] {
            *v = a * *v + b;
        }
        let refs: Vec<&[f64]> = rescaled.iter().map(|s| s.as_slice()).collect();
        let after = macro_average(&refs).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn window_count_formula(
        len in 2usize..200,
        window in 1usize..20,
        horizon in 1usize..8,
    ) {
        prop_assume!(len >= window + horizon);
        let values: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let frame = TimeFrame::new(
            HourStamp(0),
            vec![Column::new("E", "kWh", values)],
        ).unwrap();
        let batch = make_windows(&frame, "E", window, horizon).unwrap();
        prop_assert_eq!(batch.n, len - window - horizon + 1);
    }

    #[test]
    fn calendar_is_weekly_periodic(start in -200_000i64..200_000, len in 1usize..80) {
        let (h1, d1) = calendar_features(HourStamp(start), len);
        let (h2, d2) = calendar_features(HourStamp(start + 168), len);
        prop_assert_eq!(h1, h2);
        prop_assert_eq!(d1, d2);
    }

    #[test]
    fn clip_preserves_direction_and_caps_norm(
        values in prop::collection::vec(-50.0..50.0f64, 1..30),
        max_norm in 0.1..10.0f64,
    ) {
        let original = Tensor::row(values.clone());
        let mut grads = vec![original.clone()];
        clip_l2(&mut grads, max_norm);
        let norm = grads[0].l2_norm();
        prop_assert!(norm <= max_norm + 1e-12);
        if original.l2_norm() > 1e-12 {
            prop_assert!(cosine(original.data(), grads[0].data()) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn cosine_symmetric_and_scale_invariant(
        u in prop::collection::vec(-10.0..10.0f64, 2..10),
        mult in 0.01..100.0f64,
    ) {
        let v: Vec<f64> = u.iter().rev().cloned().collect();
        let uv = cosine(&u, &v);
        let vu = cosine(&v, &u);
        prop_assert!((uv - vu).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| x * mult).collect();
        prop_assert!((cosine(&scaled, &v) - uv).abs() < 1e-9);
    }

    #[test]
    fn scaler_round_trip_is_identity(values in finite_series(2..100)) {
        let scale = values.iter().cloned().fold(1.0f64, |a, v| a.max(v.abs()));
        let frame = TimeFrame::new(
            HourStamp(0),
            vec![Column::new("E", "kWh", values.clone())],
        ).unwrap();
        let scaler = scaler_fit(&frame, 0..values.len()).unwrap();
        let back = scaler.invert(&scaler.apply(&frame).unwrap()).unwrap();
        for (a, b) in values.iter().zip(&back.column("E").unwrap().values) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn es_alpha_one_tracks_copy_last_hour(series in finite_series(2..120)) {
        let mut model = EsModel::new(1.0).unwrap();
        model.update(series[0]);
        for t in 1..series.len() {
            let es = model.forecast(1).unwrap()[0];
            let naive = copy_last(&series[..t], 1, 1).unwrap()[0];
            prop_assert_eq!(es, naive);
            model.update(series[t]);
        }
    }

    #[test]
    fn ranks_argsort_invariance(row in prop::collection::vec(0.01..1e4f64, 2..8)) {
        // exp is strictly increasing; ranks must not move.
        let transformed: Vec<f64> = row.iter().map(|v| (v / 1e4).exp()).collect();
        prop_assert_eq!(rank_periods(&row), rank_periods(&transformed));
    }
}
