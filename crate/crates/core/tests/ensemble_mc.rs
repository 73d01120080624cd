use approx::{assert_abs_diff_eq, assert_relative_eq};
use chrono::NaiveDate;
use ndarray::Array3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use snowline::calendar::daily_axis;
use snowline::ensemble::{ensemble_mean, estimate_sigma, mad_filter, ml_weights, sigma_from_residuals, GaugeMatchupSet};
use snowline::gauge::{GaugeRecord, Observation};
use snowline::grid::{GeoGrid, GridField};
use snowline::stats::sample_std;

fn draws(sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sigma).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

#[test]
fn sigma_recovered_from_synthetic_residuals() {
    let est = sigma_from_residuals(&draws(1.5, 100_000, 1), None).unwrap();
    assert!((est.sigma - 1.5).abs() / 1.5 < 0.01, "{}", est.sigma);
    assert!(est.mean.abs() < 0.02);
    let pair = sigma_from_residuals(&[-1.0, 1.0], None).unwrap();
    assert_abs_diff_eq!(pair.sigma, 2f64.sqrt(), epsilon = 1e-15);
    let zero = sigma_from_residuals(&[0.0; 5], Some(3.0)).unwrap();
    assert!(zero.degenerate && zero.sigma == 0.0);
}

#[test]
fn mad_filter_on_gaussian_removes_about_point_27_percent() {
    let f = mad_filter(&draws(1.0, 100_000, 2), 3.0).unwrap();
    assert!((f.removed_fraction - 0.0027).abs() < 0.001, "{}", f.removed_fraction);
    let spike = mad_filter(&[0.0, 0.0, 0.0, 0.0, 100.0], 3.0).unwrap();
    assert_eq!(spike.kept, vec![0.0; 4]);
    assert_eq!(mad_filter(&[2.5; 7], 3.0).unwrap().removed_fraction, 0.0);
}

#[test]
fn closed_form_weights() {
    let m = ml_weights(&[1.47, 1.50, 2.69]).unwrap();
    let p: Vec<f64> = [1.47f64, 1.50, 2.69].iter().map(|s| s.powi(-2)).collect();
    let total: f64 = p.iter().sum();
    for (w, pi) in m.weights.iter().zip(&p) {
        assert_abs_diff_eq!(*w, pi / total, epsilon = 1e-12);
    }
    assert_abs_diff_eq!(m.theoretical_sigma, 0.978, epsilon = 5e-4);
    assert!((m.theoretical_sigma - 0.96).abs() <= 0.02);
    let eq = ml_weights(&[2.0; 3]).unwrap();
    assert!(eq.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
    assert!(ml_weights(&[1.0, 1e6]).unwrap().weights[1] < 1e-11);
    assert!(ml_weights(&[1.0, 0.0]).is_err());
}

fn field(values: Vec<f32>) -> GridField {
    let g = GeoGrid::new(0.0, 0.0, 1.0, (359.0 / values.len() as f64).min(1.0), 1, values.len()).unwrap();
    let times: Vec<NaiveDate> = daily_axis(2001, 2001).into_iter().take(1).collect();
    GridField::new(g, times, Array3::from_shape_vec((1, 1, values.len()), values).unwrap(), "K", "t").unwrap()
}

#[test]
fn fused_error_matches_theoretical_sigma() {
    let sigmas = [1.47, 1.50, 2.69];
    let n = 100_000;
    let truth = draws(10.0, n, 3);
    let products: Vec<GridField> = sigmas
        .iter()
        .enumerate()
        .map(|(m, &s)| {
            let e = draws(s, n, 10 + m as u64);
            field(truth.iter().zip(&e).map(|(t, e)| (t + e) as f32).collect())
        })
        .collect();
    let model = ml_weights(&sigmas).unwrap();
    let refs: Vec<&GridField> = products.iter().collect();
    let fused = ensemble_mean(&refs, &model).unwrap();
    let err: Vec<f64> = fused.values().iter().zip(&truth).map(|(f, t)| *f as f64 - t).collect();
    let s = sample_std(&err).unwrap();
    assert!((s - model.theoretical_sigma).abs() / model.theoretical_sigma < 0.05, "{s}");
}

#[test]
fn two_field_example_and_missing_products() {
    let model = ml_weights(&[1.0, 3.0]).unwrap();
    let out = ensemble_mean(&[&field(vec![0.0; 4]), &field(vec![10.0; 4])], &model).unwrap();
    assert!(out.values().iter().all(|v| (v - 1.0).abs() < 1e-6));
    let out = ensemble_mean(&[&field(vec![f32::NAN, 2.0]), &field(vec![7.0, f32::NAN])], &model).unwrap();
    assert_eq!(out.values().as_slice().unwrap(), &[7.0, 2.0]);
}

#[test]
fn matchups_estimate_product_sigma() {
    let g = GeoGrid::global(30.0, 30.0).unwrap();
    let times = daily_axis(2001, 2001);
    let truth = Array3::from_shape_fn((times.len(), g.nlat(), g.nlon()), |(t, i, j)| 260.0 + (t % 17 + i + j) as f32);
    let noise = draws(1.5, truth.len(), 4);
    let noisy = Array3::from_shape_vec(truth.dim(), truth.iter().zip(&noise).map(|(t, e)| t + *e as f32).collect()).unwrap();
    let product = GridField::new(g, times.clone(), noisy, "K", "t").unwrap();
    let mut gauges = Vec::new();
    for (s, (i, j)) in [(1, 2), (3, 4), (5, 6)].into_iter().enumerate() {
        for (t, &date) in times.iter().enumerate() {
            gauges.push(GaugeRecord {
                station_id: format!("S{s}"),
                lat: g.lat(i) + 1.0,
                lon: g.lon(j) - 1.0,
                date,
                observation: Observation::WetBulbK(truth[[t, i, j]] as f64),
            });
        }
    }
    let set = GaugeMatchupSet::build(&gauges, &[&product]).unwrap();
    assert_eq!(set.len(), 3 * 365);
    let est = estimate_sigma(&set, 0, None).unwrap();
    assert!((est.sigma - 1.5).abs() < 0.1, "{}", est.sigma);
}

proptest! {
    #[test]
    fn weights_normalized(sigmas in proptest::collection::vec(0.01..100.0f64, 1..8)) {
        let m = ml_weights(&sigmas).unwrap();
        prop_assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p: f64 = sigmas.iter().map(|s| s.powi(-2)).sum();
        prop_assert!((m.theoretical_sigma - p.powf(-0.5)).abs() <= 1e-12 * m.theoretical_sigma);
    }

    #[test]
    fn ensemble_is_affine_equivariant(
        vals in proptest::collection::vec(proptest::collection::vec(-50.0..50.0f32, 6), 3),
        sigmas in proptest::collection::vec(0.5..3.0f64, 3),
        a in 0.5..2.0f32,
        b in -10.0..10.0f32,
    ) {
        let model = ml_weights(&sigmas).unwrap();
        let plain: Vec<GridField> = vals.iter().map(|v| field(v.clone())).collect();
        let moved: Vec<GridField> = vals.iter().map(|v| field(v.iter().map(|x| a * x + b).collect())).collect();
        let e1 = ensemble_mean(&plain.iter().collect::<Vec<_>>(), &model).unwrap();
        let e2 = ensemble_mean(&moved.iter().collect::<Vec<_>>(), &model).unwrap();
        for (x, y) in e1.values().iter().zip(e2.values()) {
            prop_assert!(((a * x + b) - y).abs() < 1e-3);
        }
        let c = field(vec![4.25; 6]);
        let e3 = ensemble_mean(&[&c, &c, &c], &model).unwrap();
        for v in e3.values() {
            assert_relative_eq!(*v, 4.25, max_relative = 1e-6);
        }
    }
}
