//! Maximum-likelihood fusion of several gridded products.
//!
//! Each product is modelled as truth plus independent zero-mean Gaussian
//! error with standard deviation `σ_m`. The likelihood maximizer is the
//! inverse-variance weighted mean with `w_m = σ_m⁻² / Σ σ_j⁻²`, whose error
//! standard deviation is `(Σ σ_m⁻²)^(-1/2)`. Error deviations are estimated
//! from product-minus-gauge residuals, optionally after MAD outlier removal.

use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;
use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{GaugeRecord, Observation};
use crate::grid::{regrid_nearest, GeoGrid, GridField};
use crate::stats::{mean, median, median_in_place, sample_std};

/// Consistency factor turning a MAD into a Gaussian standard deviation.
pub const MAD_SCALE: f64 = 1.4826;
pub const DEFAULT_MAD_K: f64 = 3.0;

/// One station-day collocated with every product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matchup {
    pub station_id: String,
    pub date: NaiveDate,
    pub lat: f64,
    pub lon: f64,
    pub gauge: f64,
    /// Product values at the station's nearest cell; NaN where missing.
    pub products: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaugeMatchupSet {
    pub matchups: Vec<Matchup>,
    pub n_products: usize,
    /// Repeated station-days discarded after the first occurrence.
    pub duplicates_dropped: usize,
}

impl GaugeMatchupSet {
    /// Pair every wet-bulb gauge record with the nearest cell center of each
    /// product on the same date. Station-days without a finite gauge value or
    /// without any finite product value are skipped.
    pub fn build(gauges: &[GaugeRecord], products: &[&GridField]) -> Result<Self> {
        let mut cells: HashMap<(usize, u64, u64), (usize, usize)> = HashMap::new();
        let mut seen: BTreeSet<(String, NaiveDate)> = BTreeSet::new();
        let mut set = GaugeMatchupSet {
            n_products: products.len(),
            ..Default::default()
        };
        for rec in gauges {
            let Observation::WetBulbK(value) = rec.observation else {
                continue;
            };
            if !value.is_finite() {
                continue;
            }
            if !seen.insert((rec.station_id.clone(), rec.date)) {
                set.duplicates_dropped += 1;
                continue;
            }
            let vals: Vec<f64> = products
                .iter()
                .enumerate()
                .map(|(m, field)| {
                    let Some(t) = field.time_index(rec.date) else {
                        return f64::NAN;
                    };
                    let (i, j) = *cells
                        .entry((m, rec.lat.to_bits(), rec.lon.to_bits()))
                        .or_insert_with(|| field.grid().nearest_cell(rec.lat, rec.lon));
                    field.values()[[t, i, j]] as f64
                })
                .collect();
            if vals.iter().all(|v| !v.is_finite()) {
                continue;
            }
            set.matchups.push(Matchup {
                station_id: rec.station_id.clone(),
                date: rec.date,
                lat: rec.lat,
                lon: rec.lon,
                gauge: value,
                products: vals,
            });
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.matchups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matchups.is_empty()
    }

    /// Restrict to matchups satisfying `keep` (e.g. a region filter).
    pub fn filter(&self, keep: impl Fn(&Matchup) -> bool) -> GaugeMatchupSet {
        GaugeMatchupSet {
            matchups: self.matchups.iter().filter(|m| keep(m)).cloned().collect(),
            n_products: self.n_products,
            duplicates_dropped: self.duplicates_dropped,
        }
    }

    /// Finite residuals `product − gauge` for product `m`.
    pub fn residuals(&self, m: usize) -> Vec<f64> {
        self.matchups
            .iter()
            .map(|x| x.products[m] - x.gauge)
            .filter(|r| r.is_finite())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadFiltered {
    pub kept: Vec<f64>,
    pub removed_fraction: f64,
}

/// Keep values within `k · 1.4826 · MAD` of the median. When MAD is zero
/// only values equal to the median survive.
pub fn mad_filter(residuals: &[f64], k: f64) -> Result<MadFiltered> {
    let med = median(residuals).ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let mut dev: Vec<f64> = residuals.iter().map(|x| (x - med).abs()).collect();
    let mad = median_in_place(&mut dev).expect("non-empty");
    let limit = k * MAD_SCALE * mad;
    let kept: Vec<f64> = residuals
        .iter()
        .copied()
        .filter(|x| (x - med).abs() <= limit)
        .collect();
    let removed_fraction = 1.0 - kept.len() as f64 / residuals.len() as f64;
    Ok(MadFiltered {
        kept,
        removed_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    /// Mean residual (bias diagnostic).
    pub mean: f64,
    /// Residuals used after filtering.
    pub n: usize,
    pub removed_fraction: f64,
    /// All residuals identical; the error model would be singular.
    pub degenerate: bool,
}

/// Sample standard deviation of `product − gauge` residuals for product
/// `product`, optionally after MAD filtering with multiplier `mad_k`.
pub fn estimate_sigma(
    matchups: &GaugeMatchupSet,
    product: usize,
    mad_k: Option<f64>,
) -> Result<SigmaEstimate> {
    if product >= matchups.n_products {
        return Err(Error::InvalidInput(format!(
            "product index {product} out of range ({} products)",
            matchups.n_products
        )));
    }
    sigma_from_residuals(&matchups.residuals(product), mad_k)
}

pub fn sigma_from_residuals(residuals: &[f64], mad_k: Option<f64>) -> Result<SigmaEstimate> {
    if residuals.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: residuals.len(),
        });
    }
    let (kept, removed_fraction) = match mad_k {
        Some(k) => {
            let f = mad_filter(residuals, k)?;
            (f.kept, f.removed_fraction)
        }
        None => (residuals.to_vec(), 0.0),
    };
    let sigma = sample_std(&kept).ok_or(Error::TooFewSamples {
        needed: 2,
        got: kept.len(),
    })?;
    Ok(SigmaEstimate {
        sigma,
        mean: mean(&kept).expect("non-empty"),
        n: kept.len(),
        removed_fraction,
        degenerate: sigma == 0.0,
    })
}

/// Per-product error deviations and the derived fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub sigmas: Vec<f64>,
    pub weights: Vec<f64>,
    /// Error standard deviation of the fused estimate.
    pub theoretical_sigma: f64,
}

impl ErrorModel {
    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }
}

pub fn ml_weights(sigmas: &[f64]) -> Result<ErrorModel> {
    if sigmas.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some((index, &sigma)) = sigmas
        .iter()
        .enumerate()
        .find(|(_, s)| !(**s > 0.0 && s.is_finite()))
    {
        return Err(Error::NonPositiveSigma { index, sigma });
    }
    let precision: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let total: f64 = precision.iter().sum();
    Ok(ErrorModel {
        sigmas: sigmas.to_vec(),
        weights: precision.iter().map(|p| p / total).collect(),
        theoretical_sigma: total.powf(-0.5),
    })
}

/// Weighted mean of fields sharing grid and time axis. Where some products
/// are missing the weights are renormalized over the rest; all-missing stays
/// NaN.
pub fn ensemble_mean(fields: &[&GridField], model: &ErrorModel) -> Result<GridField> {
    let Some(first) = fields.first() else {
        return Err(Error::InvalidInput("no fields to fuse".into()));
    };
    if fields.len() != model.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} fields but {} weights",
            fields.len(),
            model.len()
        )));
    }
    if fields.iter().any(|f| !f.same_shape(first)) {
        return Err(Error::ShapeMismatch(
            "fields must share grid and time axis; regrid first".into(),
        ));
    }
    let mut num = Array3::<f64>::zeros(first.values().dim());
    let mut den = Array3::<f64>::zeros(first.values().dim());
    for (f, &w) in fields.iter().zip(&model.weights) {
        Zip::from(&mut num)
            .and(&mut den)
            .and(f.values())
            .par_for_each(|n, d, &v| {
                if v.is_finite() {
                    *n += w * v as f64;
                    *d += w;
                }
            });
    }
    let values = Zip::from(&num)
        .and(&den)
        .par_map_collect(|&n, &d| if d > 0.0 { (n / d) as f32 } else { f32::NAN });
    GridField::new(
        *first.grid(),
        first.times().to_vec(),
        values,
        first.units(),
        "t_wb_ensemble",
    )
}

/// The finest grid (smallest cell spacing) among `grids`; first wins ties.
pub fn finest_grid<'a>(grids: impl IntoIterator<Item = &'a GeoGrid>) -> Option<GeoGrid> {
    grids
        .into_iter()
        .fold(None, |best: Option<GeoGrid>, g| match best {
            Some(b) if b.dlat() * b.dlon() <= g.dlat() * g.dlon() => Some(b),
            _ => Some(*g),
        })
}

/// Regrid every product onto the finest grid by nearest neighbour, then fuse.
pub fn fuse_products(fields: &[&GridField], model: &ErrorModel) -> Result<GridField> {
    let target = finest_grid(fields.iter().map(|f| f.grid()))
        .ok_or_else(|| Error::InvalidInput("no fields to fuse".into()))?;
    let regridded: Vec<GridField> = fields
        .iter()
        .map(|f| {
            if f.grid() == &target {
                Ok((*f).clone())
            } else {
                regrid_nearest(f, &target)
            }
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&GridField> = regridded.iter().collect();
    ensemble_mean(&refs, model)
}
