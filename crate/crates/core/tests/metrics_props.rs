use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use snowline::metrics::{contingency, csi, far, pod, r2, rbias, ContingencyCounts, ValidationReport};
use snowline::Error;

/// Squared correlation from raw sums, independent of the library's
/// standardized-product form.
fn r2_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let num = n * sxy - sx * sy;
    num * num / ((n * sxx - sx * sx) * (n * syy - sy * sy))
}

fn events(c: (u64, u64, u64, u64)) -> (Vec<bool>, Vec<bool>) {
    let mut est = Vec::new();
    let mut obs = Vec::new();
    for (k, (e, o)) in [(true, true), (false, true), (true, false), (false, false)].into_iter().enumerate() {
        let n = [c.0, c.1, c.2, c.3][k];
        est.extend(std::iter::repeat_n(e, n as usize));
        obs.extend(std::iter::repeat_n(o, n as usize));
    }
    (est, obs)
}

#[test]
fn hand_contingency_table() {
    let (est, obs) = events((9, 1, 4, 6));
    let c = contingency(&est, &obs).unwrap();
    assert_eq!(c, ContingencyCounts::new(9, 1, 4, 6));
    assert_eq!(pod(&c).unwrap(), 0.9);
    assert_eq!(far(&c).unwrap(), 4.0 / 13.0);
    assert_eq!(csi(&c).unwrap(), 9.0 / 14.0);
    assert_abs_diff_eq!(far(&c).unwrap(), 0.308, epsilon = 5e-4);
    assert_abs_diff_eq!(csi(&c).unwrap(), 0.643, epsilon = 5e-4);
}

#[test]
fn perfect_and_degenerate_tables() {
    let c = contingency(&[true, false, true], &[true, false, true]).unwrap();
    assert_eq!((c.pod().unwrap(), c.far().unwrap(), c.csi().unwrap()), (1.0, 0.0, 1.0));
    let c = contingency(&[true, false, true], &[false; 3]).unwrap();
    assert!(matches!(c.pod(), Err(Error::UndefinedMetric { metric: "POD", .. })));
    assert_eq!(c.far().unwrap(), 1.0);
    assert!(contingency(&[true], &[true, false]).is_err());
}

#[test]
fn relative_bias_examples() {
    let obs = [2.0, 4.0, 1.5, 8.0];
    let est: Vec<f64> = obs.iter().map(|v| 1.1 * v).collect();
    assert_abs_diff_eq!(rbias(&est, &obs).unwrap(), 10.0, epsilon = 1e-12);
    assert_eq!(rbias(&obs, &obs).unwrap(), 0.0);
    assert_eq!(rbias(&[2.0, 0.0, 5.0], &[1.0, -1.0, 4.0]).unwrap(), 75.0);
    assert!(matches!(rbias(&[1.0, 2.0], &[1.0, -1.0]), Err(Error::UndefinedMetric { .. })));
}

#[test]
fn correlation_examples() {
    let x: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin() + k as f64 * 0.01).collect();
    assert_abs_diff_eq!(r2(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    assert_abs_diff_eq!(r2(&y, &x).unwrap(), 1.0, epsilon = 1e-12);
    assert!(r2(&[1.0; 4], &x[..4]).is_err());

    // Noise made exactly orthogonal to the reference after centering.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let mut a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    for v in [&mut a, &mut b] {
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
    }
    let k = a.iter().zip(&b).map(|(p, q)| p * q).sum::<f64>() / a.iter().map(|p| p * p).sum::<f64>();
    let b: Vec<f64> = b.iter().zip(&a).map(|(q, p)| q - k * p).collect();
    assert!(r2(&a, &b).unwrap() < 0.02);
}

#[test]
fn report_keeps_undefined_scores_as_null() {
    let r = ValidationReport::build(&[1.0, 2.0], &[1.0, 3.0], &[false, false], &[false, false]).unwrap();
    assert_eq!(r.pod, None);
    assert_eq!(r.csi, None);
    assert_abs_diff_eq!(r.r2.unwrap(), 1.0, epsilon = 1e-12);
    let json = serde_json::to_value(&r).unwrap();
    assert!(json["pod"].is_null());
}

proptest! {
    #[test]
    fn scores_are_bounded_and_ordered(h in 0u64..50, m in 0u64..50, f in 0u64..50, n in 0u64..50) {
        let c = ContingencyCounts::new(h, m, f, n);
        if let (Ok(p), Ok(fa), Ok(s)) = (c.pod(), c.far(), c.csi()) {
            for v in [p, fa, s] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(s <= p + 1e-15);
            prop_assert!(s <= 1.0 - fa + 1e-15);
        }
        let (est, obs) = events((h, m, f, n));
        prop_assert_eq!(contingency(&est, &obs).unwrap(), c);
    }

    #[test]
    fn r2_matches_oracle_and_is_affine_invariant(
        pairs in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..60),
        a in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64],
        b in -50.0..50.0f64,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = match r2(&x, &y) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((base - r2_oracle(&x, &y)).abs() < 1e-8);
        let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((r2(&xt, &y).unwrap() - base).abs() < 1e-9);
        prop_assert!((r2(&x, &xt).unwrap() - 1.0).abs() < 1e-9);
    }
}
