use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use snowline::synth::ar1_series;
use snowline::trend::{
    autocorr_length, mbb_mk_test, mbb_replicates, mk_statistic, mk_variance, mk_z, theil_sen, AnnualSeries,
    MbbConfig,
};

fn brute_s(x: &[f64]) -> i64 {
    let mut s = 0;
    for k in 0..x.len() {
        for j in k + 1..x.len() {
            s += (x[j] - x[k]).partial_cmp(&0.0).unwrap() as i64;
        }
    }
    s
}

fn brute_theil_sen(years: &[i32], y: &[f64]) -> f64 {
    let mut slopes = Vec::new();
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            slopes.push((y[j] - y[i]) / (years[j] - years[i]) as f64);
        }
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = slopes.len();
    if m % 2 == 1 {
        slopes[m / 2]
    } else {
        (slopes[m / 2 - 1] + slopes[m / 2]) / 2.0
    }
}

/// Tie-corrected variance from explicit group counting.
fn brute_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mut seen: Vec<f64> = Vec::new();
    let mut ties = 0.0;
    for &v in x {
        if seen.contains(&v) {
            continue;
        }
        seen.push(v);
        let t = x.iter().filter(|&&w| w == v).count() as f64;
        if t > 1.0 {
            ties += t * (t - 1.0) * (2.0 * t + 5.0);
        }
    }
    (n * (n - 1.0) * (2.0 * n + 5.0) - ties) / 18.0
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[test]
fn variance_and_z_examples() {
    let ramp: Vec<f64> = (0..10).map(f64::from).collect();
    assert_eq!(mk_statistic(&ramp), 45);
    assert_eq!(mk_variance(&ramp), 125.0);
    assert_abs_diff_eq!(mk_variance(&[1.0, 2.0, 2.0, 3.0]), 138.0 / 18.0, epsilon = 1e-12);
    assert_eq!(mk_variance(&[4.0; 6]), 0.0);
    assert_eq!(mk_statistic(&[4.0; 6]), 0);
    assert_abs_diff_eq!(mk_z(45, 125.0).unwrap(), 44.0 / 125f64.sqrt(), epsilon = 1e-12);
    assert_abs_diff_eq!(mk_z(-10, 125.0).unwrap(), -9.0 / 125f64.sqrt(), epsilon = 1e-12);
    assert_eq!(mk_z(0, 0.0).unwrap(), 0.0);
    assert!(mk_z(3, 0.0).is_err());
}

#[test]
fn theil_sen_examples() {
    let flat = AnnualSeries::consecutive(1980, vec![2.0; 12]).unwrap();
    assert_eq!(theil_sen(&flat).unwrap(), 0.0);
    let line = AnnualSeries::consecutive(1980, (0..12).map(|k| 0.25 * k as f64 - 3.0).collect()).unwrap();
    assert_eq!(theil_sen(&line).unwrap(), 0.25);
    let v = noise(30, 9);
    let s = AnnualSeries::consecutive(1990, v.clone()).unwrap();
    assert_eq!(theil_sen(&s).unwrap(), brute_theil_sen(s.years(), &v));
}

#[test]
fn white_noise_mostly_has_no_correlation_length() {
    let zeros = (0..500).filter(|&t| autocorr_length(&noise(200, 1000 + t), 0.05) == 0).count();
    // Expected about 95%; allow for Monte-Carlo spread.
    assert!(zeros as f64 / 500.0 > 0.92, "{zeros}");
}

#[test]
fn persistent_noise_has_long_correlation() {
    let hits = (0..200)
        .filter(|&t| {
            let mut rng = ChaCha8Rng::seed_from_u64(t);
            autocorr_length(&ar1_series(500, 0.8, 1.0, &mut rng), 0.05) >= 2
        })
        .count();
    assert!(hits as f64 / 200.0 >= 0.9, "{hits}");
}

#[test]
fn unit_blocks_are_an_iid_bootstrap() {
    // With l = 1 every replicate value is drawn from the sample itself.
    let v = [3.0, 1.0, 2.0, 5.0, 4.0];
    let stars = mbb_replicates(&v, 1, 500, 3).unwrap();
    assert!(stars.iter().any(|&s| s != stars[0]));
    assert!(stars.iter().all(|s| s.abs() <= 10));
}

#[test]
fn single_block_reproduces_s() {
    let v = noise(25, 4);
    let s = mk_statistic(&v);
    assert!(mbb_replicates(&v, 25, 200, 1).unwrap().iter().all(|&x| x == s));
    assert!(mbb_replicates(&v, 26, 200, 1).is_err());
}

#[test]
fn bootstrap_is_reproducible_across_thread_pools() {
    let s = AnnualSeries::consecutive(1979, noise(60, 5)).unwrap();
    let cfg = MbbConfig { seed: 77, ..Default::default() };
    let a = mbb_mk_test(&s, &cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| mbb_mk_test(&s, &cfg).unwrap());
    assert_eq!(a, b);
    // Neighbouring seeds must not share replicate streams.
    let c = mbb_replicates(s.values(), a.block_length, 3000, 78).unwrap();
    let d = mbb_replicates(s.values(), a.block_length, 3000, 77).unwrap();
    let mut c_sorted = c.clone();
    let mut d_sorted = d.clone();
    c_sorted.sort_unstable();
    d_sorted.sort_unstable();
    assert_ne!(c_sorted, d_sorted);
}

#[test]
fn strong_trend_on_persistent_noise_is_detected() {
    // Slope totalling three noise standard deviations over the record.
    let n = 60;
    let hits = (0..200)
        .filter(|&t| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + t);
            let e = ar1_series(n, 0.3, 1.0, &mut rng);
            let sd = 1.0 / (1.0f64 - 0.09).sqrt();
            let v: Vec<f64> = e.iter().enumerate().map(|(k, x)| x + 3.0 * sd * k as f64 / n as f64).collect();
            let s = AnnualSeries::consecutive(1960, v).unwrap();
            mbb_mk_test(&s, &MbbConfig { seed: t, replicates: 1000, ..Default::default() }).unwrap().significant
        })
        .count();
    assert!(hits >= 190, "{hits}");
}

fn tied_series() -> impl Strategy<Value = Vec<f64>> {
    (3usize..=50).prop_flat_map(|n| proptest::collection::vec((-6i32..6).prop_map(|v| v as f64 * 0.5), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn statistics_match_brute_force(v in tied_series(), gap in 1i32..3) {
        prop_assert_eq!(mk_statistic(&v), brute_s(&v));
        prop_assert_eq!(mk_variance(&v), brute_var(&v));
        let years: Vec<i32> = (0..v.len() as i32).map(|k| 1950 + gap * k).collect();
        let s = AnnualSeries::new(years.clone(), v.clone()).unwrap();
        prop_assert_eq!(theil_sen(&s).unwrap(), brute_theil_sen(&years, &v));
    }

    #[test]
    fn s_invariant_under_monotone_transform(v in tied_series()) {
        let w: Vec<f64> = v.iter().map(|x| (x * 0.7).exp() + 3.0 * x).collect();
        prop_assert_eq!(mk_statistic(&v), mk_statistic(&w));
    }

    #[test]
    fn theil_sen_equivariant(v in tied_series(), a in -4.0..4.0f64, b in -10.0..10.0f64, shift in -50i32..50) {
        let s = AnnualSeries::consecutive(1980, v.clone()).unwrap();
        let t = AnnualSeries::consecutive(1980 + shift, v.iter().map(|x| a * x + b).collect()).unwrap();
        let (bs, bt) = (theil_sen(&s).unwrap(), theil_sen(&t).unwrap());
        prop_assert!((bt - a * bs).abs() <= 1e-9 * (1.0 + bs.abs()));
    }
}
