//! Robust trend inference for annual series.
//!
//! Slopes come from the Theil-Sen estimator (median of pairwise slopes).
//! Significance uses the Mann-Kendall `S` statistic with its null
//! distribution approximated by a moving block bootstrap (MBB): the series is
//! cut into `N = n − l + 1` overlapping blocks of length `l = r + 1`, where
//! `r` is the serial-correlation length, and `k = ⌈n/l⌉` blocks drawn with
//! replacement are concatenated (truncated to `n`) into each replicate.
//! The trend is significant when the observed `S` lies outside the central
//! `1 − α` interval of the replicate `S*` values.

use chrono::Datelike;
use ndarray::{Array2, Array3, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::annual_axis;
use crate::error::{Error, Result};
use crate::grid::{regrid_nearest, GeoGrid, GridField};
use crate::snowmask::complete_years;
use crate::stats::{median_in_place, normal_quantile, quantile_sorted};

pub const DEFAULT_REPLICATES: usize = 3000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const MIN_REPLICATES: usize = 100;

/// Values indexed by strictly increasing years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    years: Vec<i32>,
    values: Vec<f64>,
    units: String,
}

impl AnnualSeries {
    pub fn new(years: Vec<i32>, values: Vec<f64>) -> Result<Self> {
        if years.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} years but {} values",
                years.len(),
                values.len()
            )));
        }
        if years.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("years must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("series values must be finite".into()));
        }
        Ok(Self {
            years,
            values,
            units: String::new(),
        })
    }

    /// Series over consecutive years starting at `first_year`.
    pub fn consecutive(first_year: i32, values: Vec<f64>) -> Result<Self> {
        let years = (first_year..first_year + values.len() as i32).collect();
        Self::new(years, values)
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn units(&self) -> &str {
        &self.units
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Theil-Sen slope in value units per year.
pub fn theil_sen(series: &AnnualSeries) -> Result<f64> {
    let n = series.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let (x, y) = (series.years(), series.values());
    let mut slopes = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            slopes.push((y[j] - y[i]) / (x[j] - x[i]) as f64);
        }
    }
    Ok(median_in_place(&mut slopes).expect("at least one pair"))
}

/// Theil-Sen intercept: median of `y − β·x`.
fn theil_sen_intercept(series: &AnnualSeries, slope: f64) -> f64 {
    let mut r: Vec<f64> = series
        .years()
        .iter()
        .zip(series.values())
        .map(|(&x, &y)| y - slope * x as f64)
        .collect();
    median_in_place(&mut r).expect("non-empty")
}

/// Counts strict inversions (`i < j`, `x[i] > x[j]`) while merge-sorting
/// `xs` in place. `buf` must have the same length.
fn count_inversions(xs: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = xs.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (l, r) = xs.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_inversions(l, bl) + count_inversions(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if xs[i] <= xs[j] {
            buf[k] = xs[i];
            i += 1;
        } else {
            buf[k] = xs[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&xs[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&xs[j..n]);
    xs.copy_from_slice(buf);
    inv
}

/// Sizes of groups of equal values in sorted data.
fn tie_groups(sorted: &[f64]) -> impl Iterator<Item = u64> + '_ {
    sorted
        .chunk_by(|a, b| a == b)
        .map(|g| g.len() as u64)
        .filter(|&t| t > 1)
}

/// Mann-Kendall `S` computed in O(n log n) from a scratch buffer pair.
fn mk_statistic_with(values: &[f64], work: &mut Vec<f64>, buf: &mut Vec<f64>) -> i64 {
    let n = values.len() as u64;
    work.clear();
    work.extend_from_slice(values);
    buf.resize(values.len(), 0.0);
    let discordant = count_inversions(work, buf);
    let tied: u64 = tie_groups(work).map(|t| t * (t - 1) / 2).sum();
    let total = n * n.saturating_sub(1) / 2;
    let concordant = total - discordant - tied;
    concordant as i64 - discordant as i64
}

/// Mann-Kendall statistic `S = Σ_{j>k} sgn(x_j − x_k)`.
pub fn mk_statistic(values: &[f64]) -> i64 {
    mk_statistic_with(values, &mut Vec::new(), &mut Vec::new())
}

/// Null variance of `S` with the tie correction.
pub fn mk_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ties: f64 = tie_groups(&sorted)
        .map(|t| {
            let t = t as f64;
            t * (t - 1.0) * (2.0 * t + 5.0)
        })
        .sum();
    (n * (n - 1.0) * (2.0 * n + 5.0) - ties) / 18.0
}

/// Continuity-corrected standard score of `S`.
pub fn mk_z(s: i64, var: f64) -> Result<f64> {
    if s == 0 {
        return Ok(0.0);
    }
    if !(var > 0.0) {
        return Err(Error::ContradictoryVariance { s });
    }
    let s = s as f64;
    Ok(if s > 0.0 { (s - 1.0) / var.sqrt() } else { (s + 1.0) / var.sqrt() })
}

/// Sample autocorrelation at `lag` (biased estimator, mean removed).
pub fn autocorrelation(values: &[f64], lag: usize) -> f64 {
    let n = values.len();
    if lag >= n {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let den: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - lag)
        .map(|t| (values[t] - m) * (values[t + lag] - m))
        .sum();
    num / den
}

/// Serial-correlation length: the largest lag `r` such that the
/// autocorrelations at every lag `1..=r` lie outside `±z_{1−α/2}/√n`.
/// Lags are examined up to `min(n/4, n/2 − 1)`, so the resulting block length
/// `r + 1` never exceeds `n/2`.
pub fn autocorr_length(values: &[f64], alpha: f64) -> usize {
    let n = values.len();
    let max_lag = (n / 4).min((n / 2).saturating_sub(1));
    let band = normal_quantile(1.0 - alpha / 2.0) / (n as f64).sqrt();
    (1..=max_lag)
        .take_while(|&k| autocorrelation(values, k).abs() > band)
        .last()
        .unwrap_or(0)
}

/// Settings of the bootstrap Mann-Kendall test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbbConfig {
    /// Number of bootstrap replicates `B`.
    pub replicates: usize,
    /// Two-sided significance level.
    pub alpha: f64,
    pub seed: u64,
    /// Fixed block length; estimated from the series when `None`.
    pub block_length: Option<usize>,
    /// Remove the Theil-Sen line before estimating the correlation length.
    pub detrend_acf: bool,
}

impl Default for MbbConfig {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            seed: 0,
            block_length: None,
            detrend_acf: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub n: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub units: String,
    pub slope_per_year: f64,
    pub slope_per_decade: f64,
    pub mk_s: i64,
    pub mk_var: f64,
    pub z: f64,
    /// Two-sided bootstrap p-value `min(1, 2·min(P(S* ≥ S), P(S* ≤ S)))`.
    pub p_bootstrap: f64,
    pub q_low: f64,
    pub q_high: f64,
    pub significant: bool,
    pub alpha: f64,
    pub correlation_length: usize,
    pub block_length: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// Bootstrap replicate statistics `S*` for block length `block`. Replicate
/// `b` draws from a ChaCha8 stream seeded with `mix(seed) ^ b`, so the output
/// is independent of thread scheduling. Scrambling the base seed first keeps
/// neighbouring seeds (7, 6, ...) from sharing replicate streams.
pub fn mbb_replicates(values: &[f64], block: usize, replicates: usize, seed: u64) -> Result<Vec<i64>> {
    let n = values.len();
    if block == 0 || block > n {
        return Err(Error::InvalidInput(format!(
            "block length {block} outside 1..={n}"
        )));
    }
    let n_blocks = n - block + 1;
    let k = n.div_ceil(block);
    let base = splitmix64(seed);
    Ok((0..replicates)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(k * block), Vec::new(), Vec::new()),
            |(series, work, buf), b| {
                let mut rng = ChaCha8Rng::seed_from_u64(base ^ b as u64);
                series.clear();
                for _ in 0..k {
                    let start = rng.random_range(0..n_blocks);
                    series.extend_from_slice(&values[start..start + block]);
                }
                series.truncate(n);
                mk_statistic_with(series, work, buf)
            },
        )
        .collect())
}

/// Theil-Sen slope with moving-block-bootstrap Mann-Kendall significance.
pub fn mbb_mk_test(series: &AnnualSeries, config: &MbbConfig) -> Result<TrendReport> {
    let n = series.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    if config.replicates < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_REPLICATES} bootstrap replicates required"
        )));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {} outside (0, 1)", config.alpha)));
    }
    let values = series.values();
    let slope = theil_sen(series)?;
    let r = if config.detrend_acf {
        let b0 = theil_sen_intercept(series, slope);
        let resid: Vec<f64> = series
            .years()
            .iter()
            .zip(values)
            .map(|(&x, &y)| y - b0 - slope * x as f64)
            .collect();
        autocorr_length(&resid, config.alpha)
    } else {
        autocorr_length(values, config.alpha)
    };
    let block = config.block_length.unwrap_or(r + 1);
    let s = mk_statistic(values);
    let var = mk_variance(values);
    let z = mk_z(s, var)?;

    let stars = mbb_replicates(values, block, config.replicates, config.seed)?;
    let mut sorted: Vec<f64> = stars.iter().map(|&x| x as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q_low = quantile_sorted(&sorted, config.alpha / 2.0);
    let q_high = quantile_sorted(&sorted, 1.0 - config.alpha / 2.0);
    let sf = s as f64;
    let above = stars.iter().filter(|&&x| x >= s).count();
    let below = stars.iter().filter(|&&x| x <= s).count();
    let p = (2.0 * above.min(below) as f64 / stars.len() as f64).min(1.0);

    Ok(TrendReport {
        n,
        first_year: series.years()[0],
        last_year: series.years()[n - 1],
        units: series.units().to_string(),
        slope_per_year: slope,
        slope_per_decade: 10.0 * slope,
        mk_s: s,
        mk_var: var,
        z,
        p_bootstrap: p,
        q_low,
        q_high,
        significant: sf > q_high || sf < q_low,
        alpha: config.alpha,
        correlation_length: r,
        block_length: block,
        replicates: config.replicates,
        seed: config.seed,
    })
}

/// Trend summary string `β_{α} (β_min–β_max)`: the ensemble's decadal slope,
/// subscripted with α only when significant, followed by the range of the
/// individual products' slopes.
pub fn format_trend(ensemble: &TrendReport, products: &[TrendReport], decimals: usize) -> String {
    let mut s = format!("{:.*}", decimals, ensemble.slope_per_decade);
    if ensemble.significant {
        s.push_str(&format!("_{{{}}}", ensemble.alpha));
    }
    let (lo, hi) = products.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.slope_per_decade), hi.max(r.slope_per_decade))
    });
    if !products.is_empty() {
        s.push_str(&format!(" ({lo:.decimals$}\u{2013}{hi:.decimals$})"));
    }
    s
}

/// Per-pixel annual means of a daily field over its complete calendar years.
/// Missing days are skipped; a pixel with no valid day in a year is NaN.
pub fn annual_means(daily: &GridField) -> Result<GridField> {
    let years = complete_years(daily.times());
    if years.is_empty() {
        return Err(Error::IncompleteCoverage("no complete calendar year".into()));
    }
    let grid = *daily.grid();
    let mut values = Array3::<f32>::zeros((years.len(), grid.nlat(), grid.nlon()));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(years.par_iter())
        .for_each(|(mut out, &year)| {
            let mut sum = Array2::<f64>::zeros(grid.shape());
            let mut count = Array2::<u32>::zeros(grid.shape());
            for (t, d) in daily.times().iter().enumerate() {
                if d.year() != year {
                    continue;
                }
                Zip::from(&mut sum)
                    .and(&mut count)
                    .and(daily.slice(t))
                    .for_each(|s, c, &v| {
                        if v.is_finite() {
                            *s += v as f64;
                            *c += 1;
                        }
                    });
            }
            Zip::from(&mut out).and(&sum).and(&count).for_each(|o, &s, &c| {
                *o = if c > 0 { (s / c as f64) as f32 } else { f32::NAN };
            });
        });
    let times = annual_axis(years[0], *years.last().expect("non-empty"));
    if times.len() != years.len() {
        return Err(Error::IncompleteCoverage("complete years are not consecutive".into()));
    }
    GridField::new(grid, times, values, daily.units(), daily.variable())
}

/// Per-pixel trend layers, each a single-step field on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendMap {
    pub slope_per_decade: GridField,
    pub p_bootstrap: GridField,
    /// +1 significant positive, −1 significant negative, 0 insignificant.
    pub significant_sign: GridField,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for pixel `index` of layer `layer` (SplitMix64 finalizer).
pub fn pixel_seed(seed: u64, layer: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(layer.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Minimum number of finite years for a pixel trend.
pub const MIN_PIXEL_YEARS: usize = 3;

/// Theil-Sen slope and MBB Mann-Kendall test at every pixel of an annual
/// stack. Years with missing values are dropped per pixel; pixels with fewer
/// than three finite years, or where `exclude` is set, are NaN.
pub fn trend_map(
    annual: &GridField,
    config: &MbbConfig,
    layer: u64,
    exclude: Option<&Array2<bool>>,
) -> Result<TrendMap> {
    let grid = *annual.grid();
    let years: Vec<i32> = annual.times().iter().map(|d| d.year()).collect();
    let nlon = grid.nlon();
    let cells: Vec<(f32, f32, f32)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nlon, k % nlon);
            let nan = (f32::NAN, f32::NAN, f32::NAN);
            if exclude.is_some_and(|m| m[[i, j]]) {
                return Ok(nan);
            }
            let (ys, vs): (Vec<i32>, Vec<f64>) = years
                .iter()
                .zip(annual.values().slice(ndarray::s![.., i, j]))
                .filter(|(_, v)| v.is_finite())
                .map(|(&y, &v)| (y, v as f64))
                .unzip();
            if vs.len() < MIN_PIXEL_YEARS {
                return Ok(nan);
            }
            let series = AnnualSeries::new(ys, vs)?;
            let cfg = MbbConfig {
                seed: pixel_seed(config.seed, layer, k as u64),
                ..*config
            };
            let r = mbb_mk_test(&series, &cfg)?;
            let sign = match (r.significant, r.mk_s.signum()) {
                (true, 1) => 1.0,
                (true, -1) => -1.0,
                _ => 0.0,
            };
            Ok((r.slope_per_decade as f32, r.p_bootstrap as f32, sign))
        })
        .collect::<Result<_>>()?;
    let date = *annual
        .times()
        .first()
        .ok_or_else(|| Error::InvalidTimeAxis("empty annual stack".into()))?;
    let layer_field = |f: fn(&(f32, f32, f32)) -> f32, units: &str, var: &str| {
        let values = Array3::from_shape_vec(
            (1, grid.nlat(), nlon),
            cells.iter().map(f).collect(),
        )
        .expect("shape matches grid");
        GridField::new(grid, vec![date], values, units, var)
    };
    Ok(TrendMap {
        slope_per_decade: layer_field(|c| c.0, &format!("{} per decade", annual.units()), "slope")?,
        p_bootstrap: layer_field(|c| c.1, "fraction", "p_bootstrap")?,
        significant_sign: layer_field(|c| c.2, "sign", "significant_sign")?,
    })
}

/// Trend maps of every product and of the ensemble, plus the agreement
/// layer: at each ensemble pixel, the number of products agreeing on a
/// significant trend of the same sign (product sign layers are brought to the
/// ensemble grid by nearest neighbour). The masked ensemble slope keeps only
/// pixels where at least `min_agreement` products agree.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendFieldResult {
    pub products: Vec<TrendMap>,
    pub ensemble: TrendMap,
    pub agreement: GridField,
    pub ensemble_masked_slope: GridField,
}

pub fn trend_field(
    products: &[&GridField],
    ensemble: &GridField,
    config: &MbbConfig,
    min_agreement: usize,
) -> Result<TrendFieldResult> {
    let maps = products
        .iter()
        .enumerate()
        .map(|(m, f)| trend_map(f, config, m as u64 + 1, None))
        .collect::<Result<Vec<_>>>()?;
    let ens = trend_map(ensemble, config, 0, None)?;
    let grid: GeoGrid = *ensemble.grid();
    let mut pos = Array2::<u32>::zeros(grid.shape());
    let mut neg = Array2::<u32>::zeros(grid.shape());
    for m in &maps {
        let sign = if m.significant_sign.grid() == &grid {
            m.significant_sign.clone()
        } else {
            regrid_nearest(&m.significant_sign, &grid)?
        };
        Zip::from(&mut pos).and(&mut neg).and(sign.slice(0)).for_each(|p, n, &s| {
            if s == 1.0 {
                *p += 1;
            } else if s == -1.0 {
                *n += 1;
            }
        });
    }
    let agree = Zip::from(&pos).and(&neg).map_collect(|&p, &n| p.max(n));
    let date = ens.slope_per_decade.times()[0];
    let agreement = GridField::new(
        grid,
        vec![date],
        agree.mapv(|a| a as f32).insert_axis(Axis(0)),
        "count",
        "agreement",
    )?;
    let masked = Zip::from(ens.slope_per_decade.slice(0))
        .and(&agree)
        .map_collect(|&s, &a| if a as usize >= min_agreement { s } else { f32::NAN });
    let ensemble_masked_slope = GridField::new(
        grid,
        vec![date],
        masked.insert_axis(Axis(0)),
        ens.slope_per_decade.units(),
        "slope_agreed",
    )?;
    Ok(TrendFieldResult {
        products: maps,
        ensemble: ens,
        agreement,
        ensemble_masked_slope,
    })
}

/// Series of a single-pixel location through an annual stack, dropping NaN
/// years.
pub fn pixel_series(annual: &GridField, i: usize, j: usize) -> Result<AnnualSeries> {
    let (ys, vs): (Vec<i32>, Vec<f64>) = annual
        .times()
        .iter()
        .zip(annual.values().slice(ndarray::s![.., i, j]))
        .filter(|(_, v)| v.is_finite())
        .map(|(d, &v)| (d.year(), v as f64))
        .unzip();
    AnnualSeries::new(ys, vs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series(v: &[f64]) -> AnnualSeries {
        AnnualSeries::consecutive(2000, v.to_vec()).unwrap()
    }

    #[test]
    fn series_validation() {
        assert!(AnnualSeries::new(vec![2000, 2000], vec![1.0, 2.0]).is_err());
        assert!(AnnualSeries::new(vec![2000], vec![1.0, 2.0]).is_err());
        assert!(AnnualSeries::new(vec![2000, 2001], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn theil_sen_simple_cases() {
        assert_eq!(theil_sen(&series(&[3.0; 8])).unwrap(), 0.0);
        let lin: Vec<f64> = (0..12).map(|k| 0.034 * k as f64 - 2.0).collect();
        assert_abs_diff_eq!(theil_sen(&series(&lin)).unwrap(), 0.034, epsilon = 1e-12);
        // Uneven year spacing.
        let s = AnnualSeries::new(vec![1990, 1992, 1999], vec![0.0, 2.0, 9.0]).unwrap();
        assert_abs_diff_eq!(theil_sen(&s).unwrap(), 1.0, epsilon = 1e-12);
        assert!(theil_sen(&series(&[1.0])).is_err());
    }

    #[test]
    fn mk_examples() {
        let inc: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(mk_statistic(&inc), 45);
        assert_eq!(mk_statistic(&[2.0; 7]), 0);
        assert_eq!(mk_variance(&inc), 125.0);
        assert_abs_diff_eq!(mk_variance(&[1.0, 2.0, 2.0, 3.0]), 138.0 / 18.0, epsilon = 1e-12);
        assert_eq!(mk_variance(&[4.0; 6]), 0.0);
    }

    #[test]
    fn mk_z_cases() {
        assert_abs_diff_eq!(mk_z(45, 125.0).unwrap(), 44.0 / 125f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(mk_z(45, 125.0).unwrap(), 3.9354, epsilon = 1e-4);
        assert_eq!(mk_z(0, 125.0).unwrap(), 0.0);
        assert_eq!(mk_z(0, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(mk_z(-10, 125.0).unwrap(), -9.0 / 125f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(mk_z(3, 0.0), Err(Error::ContradictoryVariance { s: 3 })));
    }

    #[test]
    fn single_block_reproduces_series() {
        let v = [0.3, 1.2, -0.4, 2.2, 0.9, 1.7, 3.1, 2.5];
        let stars = mbb_replicates(&v, v.len(), 200, 9).unwrap();
        let s = mk_statistic(&v);
        assert!(stars.iter().all(|&x| x == s));
        assert!(mbb_replicates(&v, 9, 10, 0).is_err());
        assert!(mbb_replicates(&v, 0, 10, 0).is_err());
    }

    #[test]
    fn unit_blocks_resample_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        // With l = 1 every replicate is an i.i.d. draw of the values, so some
        // replicates contain repeats.
        let n_blocks = v.len();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(0) ^ 5);
        let draw: Vec<usize> = (0..5).map(|_| rng.random_range(0..n_blocks)).collect();
        let expected: Vec<f64> = draw.iter().map(|&i| v[i]).collect();
        let stars = mbb_replicates(&v, 1, 6, 0).unwrap();
        assert_eq!(stars[5], mk_statistic(&expected));
    }

    #[test]
    fn test_config_validation() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        let few = MbbConfig { replicates: 10, ..Default::default() };
        assert!(mbb_mk_test(&s, &few).is_err());
        assert!(mbb_mk_test(&series(&[1.0, 2.0]), &MbbConfig::default()).is_err());
        let long = MbbConfig { block_length: Some(5), replicates: 100, ..Default::default() };
        assert!(mbb_mk_test(&s, &long).is_err());
    }

    #[test]
    fn degenerate_constant_series() {
        let r = mbb_mk_test(&series(&[1.0; 20]), &MbbConfig { replicates: 100, ..Default::default() }).unwrap();
        assert_eq!(r.mk_s, 0);
        assert_eq!(r.z, 0.0);
        assert!(!r.significant);
        assert_eq!(r.p_bootstrap, 1.0);
    }

    #[test]
    fn formatting() {
        let mut ens = mbb_mk_test(
            &series(&(0..20).map(|k| 0.034 * k as f64 + (k % 3) as f64 * 0.01).collect::<Vec<_>>()),
            &MbbConfig { replicates: 200, ..Default::default() },
        )
        .unwrap();
        ens.slope_per_decade = 0.3412;
        ens.significant = true;
        let mut a = ens.clone();
        a.slope_per_decade = 0.32;
        let mut b = ens.clone();
        b.slope_per_decade = 0.351;
        assert_eq!(format_trend(&ens, &[a.clone(), b.clone()], 2), "0.34_{0.05} (0.32\u{2013}0.35)");
        ens.significant = false;
        assert_eq!(format_trend(&ens, &[a, b], 2), "0.34 (0.32\u{2013}0.35)");
        assert_eq!(format_trend(&ens, &[], 1), "0.3");
    }

    #[test]
    fn autocorr_length_edge_cases() {
        assert_eq!(autocorr_length(&[1.0; 30], 0.05), 0);
        assert_eq!(autocorr_length(&[1.0, 2.0, 3.0], 0.05), 0);
        // For a ramp of 40, ρ_9 ≈ 0.348 and ρ_10 ≈ 0.281 against a band of 0.310.
        let ramp: Vec<f64> = (0..40).map(f64::from).collect();
        assert_eq!(autocorr_length(&ramp, 0.05), 9);
        // At n = 100 every lag up to the n/4 cap is significant.
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(autocorr_length(&ramp, 0.05), 25);
    }

    #[test]
    fn pixel_seeds_differ() {
        let a = pixel_seed(1, 0, 0);
        assert_ne!(a, pixel_seed(1, 0, 1));
        assert_ne!(a, pixel_seed(1, 1, 0));
        assert_ne!(a, pixel_seed(2, 0, 0));
    }
}
