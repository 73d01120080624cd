//! Synthetic test worlds with known truth.
//!
//! A daily wet-bulb "truth" is built from a zonal climatology, a seasonal
//! cycle, a linear trend per region, per-pixel AR(1) interannual anomalies and
//! white weather noise. Products are truth plus independent Gaussian errors of
//! known standard deviation. Pentad precipitation, a surface mask with
//! latitude-band regions, air-state inputs and station records complete the
//! set. Every random stream is keyed by (seed, stream, pixel), so output does
//! not depend on thread scheduling.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{daily_axis, days_in_year, pentad_of, pentad_start, year_start};
use crate::error::{Error, Result};
use crate::gauge::{GaugeRecord, Observation, Phase};
use crate::grid::{GeoGrid, GridField, Surface, SurfaceMask};
use crate::trend::pixel_seed;

const KELVIN: f64 = 273.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dlat: f64,
    pub dlon: f64,
    pub first_year: i32,
    pub last_year: i32,
    /// Annual-mean wet-bulb temperature (°C) at the equator and at the poles.
    pub equator_celsius: f64,
    pub pole_celsius: f64,
    /// Seasonal half-range (K) at the poles; scales with |sin φ|.
    pub seasonal_amplitude: f64,
    /// Extra seasonal amplitude factor over land.
    pub land_seasonality: f64,
    /// Trend (K/decade) applied where no region override exists.
    pub trend_per_decade: f64,
    /// Per-region trend overrides keyed by region label.
    pub region_trends: BTreeMap<String, f64>,
    /// AR(1) coefficient and innovation standard deviation (K) of the
    /// per-pixel annual anomalies.
    pub ar_phi: f64,
    pub ar_sigma: f64,
    /// Standard deviation (K) of white day-to-day weather noise.
    pub daily_sigma: f64,
    /// Error standard deviation (K) of each product.
    pub product_sigmas: Vec<f64>,
    pub product_names: Vec<String>,
    /// Precipitation grid coarsening factor relative to the truth grid.
    pub precip_coarsening: usize,
    /// Mean pentad precipitation (mm) at the equator and at the poles.
    pub precip_equator_mm: f64,
    pub precip_pole_mm: f64,
    /// Probability a pentad is wet.
    pub wet_fraction: f64,
    pub stations: usize,
    /// Stations report during this many trailing years.
    pub station_years: i32,
    /// Gauge wet-bulb measurement error (K).
    pub gauge_sigma: f64,
    /// Years of air-state inputs (trailing) emitted for the wet-bulb stage.
    pub atmos_years: i32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dlat: 10.0,
            dlon: 10.0,
            first_year: 2000,
            last_year: 2011,
            equator_celsius: 22.0,
            pole_celsius: -22.0,
            seasonal_amplitude: 12.0,
            land_seasonality: 1.5,
            trend_per_decade: 0.34,
            region_trends: BTreeMap::new(),
            ar_phi: 0.3,
            ar_sigma: 0.15,
            daily_sigma: 2.0,
            product_sigmas: vec![1.47, 1.50, 2.69],
            product_names: vec!["prod_a".into(), "prod_b".into(), "prod_c".into()],
            precip_coarsening: 2,
            precip_equator_mm: 25.0,
            precip_pole_mm: 5.0,
            wet_fraction: 0.7,
            stations: 40,
            station_years: 2,
            gauge_sigma: 0.0,
            atmos_years: 1,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.last_year < self.first_year {
            return bad("last_year before first_year");
        }
        if !(self.ar_phi.abs() < 1.0) {
            return bad("|ar_phi| must be < 1");
        }
        if [self.ar_sigma, self.daily_sigma, self.gauge_sigma]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return bad("noise standard deviations must be ≥ 0");
        }
        if self.product_sigmas.is_empty() || self.product_sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("product_sigmas must be non-empty and ≥ 0");
        }
        if self.product_names.len() != self.product_sigmas.len() {
            return bad("product_names and product_sigmas differ in length");
        }
        if self.precip_coarsening == 0 || !(0.0..=1.0).contains(&self.wet_fraction) {
            return bad("precip_coarsening must be ≥ 1 and wet_fraction in [0, 1]");
        }
        let years = self.last_year - self.first_year + 1;
        if self.station_years > years || self.atmos_years > years || self.atmos_years < 1 {
            return bad("station_years/atmos_years exceed the synthetic period");
        }
        if self.precip_pole_mm < 0.0 || self.precip_equator_mm < 0.0 {
            return bad("precipitation means must be ≥ 0");
        }
        self.grid()?;
        self.precip_grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GeoGrid> {
        GeoGrid::global(self.dlat, self.dlon)
    }

    pub fn precip_grid(&self) -> Result<GeoGrid> {
        let c = self.precip_coarsening as f64;
        GeoGrid::global(self.dlat * c, self.dlon * c)
    }

    /// Region label of a latitude band.
    pub fn region_of(lat: f64) -> (u8, &'static str) {
        match lat.abs() {
            a if a < 30.0 => (1, "tropics"),
            a if a < 60.0 => (2, "midlatitudes"),
            _ => (3, "polar"),
        }
    }

    fn trend_at(&self, lat: f64) -> f64 {
        let (_, label) = Self::region_of(lat);
        *self.region_trends.get(label).unwrap_or(&self.trend_per_decade)
    }
}

/// Inputs of the wet-bulb stage for one product.
#[derive(Debug, Clone, PartialEq)]
pub struct AtmosInputs {
    pub t_air: GridField,
    pub rh: GridField,
    pub pressure: GridField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub truth: GridField,
    /// Product wet-bulb fields in `spec.product_names` order.
    pub products: Vec<GridField>,
    pub mask: SurfaceMask,
    /// Pentad precipitation (mm) on the coarser precipitation grid.
    pub precip: GridField,
    pub gauges: Vec<GaugeRecord>,
    pub atmos: AtmosInputs,
}

fn synthetic_land(lat: f64, lon: f64) -> bool {
    let l = lon.to_radians();
    let p = lat.to_radians();
    (2.0 * l).sin() + 0.6 * (3.0 * l + p).cos() + 0.8 * p.sin() > 0.3
}

pub fn surface_mask(spec: &SyntheticSpec) -> Result<SurfaceMask> {
    let grid = spec.grid()?;
    let surface = Array2::from_shape_fn(grid.shape(), |(i, j)| {
        if synthetic_land(grid.lat(i), grid.lon(j)) {
            Surface::Land
        } else {
            Surface::Ocean
        }
    });
    let regions = Array2::from_shape_fn(grid.shape(), |(i, _)| SyntheticSpec::region_of(grid.lat(i)).0);
    let labels = [1u8, 2, 3]
        .into_iter()
        .map(|c| {
            let lat = [0.0, 45.0, 75.0][c as usize - 1];
            (c, SyntheticSpec::region_of(lat).1.to_string())
        })
        .collect();
    SurfaceMask::new(grid, surface)?.with_regions(regions, labels)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Stream ids for [`pixel_seed`].
mod stream {
    pub const ANOMALY: u64 = 1;
    pub const WEATHER: u64 = 2;
    pub const PRODUCT: u64 = 100;
    pub const PRECIP: u64 = 3;
    pub const STATIONS: u64 = 4;
    pub const GAUGE: u64 = 5;
    pub const ATMOS: u64 = 6;
}

/// AR(1) series of `n` values started from the stationary distribution.
pub fn ar1_series(n: usize, phi: f64, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = normal(rng) * sigma / (1.0 - phi * phi).sqrt();
    (0..n)
        .map(|k| {
            if k > 0 {
                x = phi * x + sigma * normal(rng);
            }
            x
        })
        .collect()
}

/// Assemble per-pixel time series (pixel-major) into a `[t][lat][lon]` array.
fn scatter(grid: &GeoGrid, nt: usize, per_pixel: Vec<Vec<f32>>) -> Array3<f32> {
    let mut out = Array3::<f32>::zeros((nt, grid.nlat(), grid.nlon()));
    for (k, series) in per_pixel.into_iter().enumerate() {
        let (i, j) = (k / grid.nlon(), k % grid.nlon());
        for (t, v) in series.into_iter().enumerate() {
            out[[t, i, j]] = v;
        }
    }
    out
}

fn truth_field(spec: &SyntheticSpec, mask: &SurfaceMask, times: &[NaiveDate]) -> Result<GridField> {
    let grid = *mask.grid();
    let years = (spec.last_year - spec.first_year + 1) as usize;
    let per_pixel: Vec<Vec<f32>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / grid.nlon(), k % grid.nlon());
            let lat = grid.lat(i);
            let phi = lat.to_radians();
            let clim = spec.pole_celsius + (spec.equator_celsius - spec.pole_celsius) * phi.cos().powi(2);
            let land = mask.surface()[[i, j]] == Surface::Land;
            let amp = spec.seasonal_amplitude * phi.sin() * if land { spec.land_seasonality } else { 1.0 };
            let beta = spec.trend_at(lat) / 10.0;
            let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(spec.seed, stream::ANOMALY, k as u64));
            let anomaly = ar1_series(years, spec.ar_phi, spec.ar_sigma, &mut rng);
            let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(spec.seed, stream::WEATHER, k as u64));
            times
                .iter()
                .map(|d| {
                    let y = d.year();
                    let doy = d.ordinal0() as f64;
                    let frac = doy / days_in_year(y) as f64;
                    let season = -amp * (2.0 * PI * (frac - 15.0 / 365.0)).cos();
                    let t = (y - spec.first_year) as f64 + frac;
                    let a = anomaly[(y - spec.first_year) as usize];
                    let v = clim + season + beta * t + a + spec.daily_sigma * normal(&mut rng);
                    (v + KELVIN) as f32
                })
                .collect()
        })
        .collect();
    GridField::new(grid, times.to_vec(), scatter(&grid, times.len(), per_pixel), "K", "t_wb")
}

fn product_field(spec: &SyntheticSpec, truth: &GridField, m: usize) -> Result<GridField> {
    let grid = *truth.grid();
    let sigma = spec.product_sigmas[m];
    let nt = truth.nt();
    let per_pixel: Vec<Vec<f32>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / grid.nlon(), k % grid.nlon());
            let seed = pixel_seed(spec.seed, stream::PRODUCT + m as u64, k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..nt)
                .map(|t| (truth.values()[[t, i, j]] as f64 + sigma * normal(&mut rng)) as f32)
                .collect()
        })
        .collect();
    GridField::new(grid, truth.times().to_vec(), scatter(&grid, nt, per_pixel), "K", "t_wb")
}

fn precip_field(spec: &SyntheticSpec) -> Result<GridField> {
    let grid = spec.precip_grid()?;
    let times: Vec<NaiveDate> = (spec.first_year..=spec.last_year)
        .flat_map(crate::calendar::pentad_axis)
        .collect();
    let nt = times.len();
    let per_pixel: Vec<Vec<f32>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let phi = grid.lat(k / grid.nlon()).to_radians();
            let mean = spec.precip_pole_mm + (spec.precip_equator_mm - spec.precip_pole_mm) * phi.cos().powi(2);
            let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(spec.seed, stream::PRECIP, k as u64));
            let amount = Exp::new(1.0 / (mean / spec.wet_fraction.max(1e-9)).max(1e-9)).expect("positive rate");
            (0..nt)
                .map(|_| {
                    let wet = rng.random::<f64>() < spec.wet_fraction;
                    let a: f64 = amount.sample(&mut rng);
                    if wet && mean > 0.0 {
                        a as f32
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    GridField::new(grid, times, scatter(&grid, nt, per_pixel), "mm", "precip")
}

fn atmos_inputs(spec: &SyntheticSpec, truth: &GridField) -> Result<AtmosInputs> {
    let grid = *truth.grid();
    let first = year_start(spec.last_year - spec.atmos_years + 1);
    let t0 = truth.time_index(first).expect("atmos period inside truth axis");
    let times = truth.times()[t0..].to_vec();
    let nt = times.len();
    let mut rh = Array3::<f32>::zeros((nt, grid.nlat(), grid.nlon()));
    let mut ta = Array3::<f32>::zeros((nt, grid.nlat(), grid.nlon()));
    let pressure = Array3::from_shape_fn((nt, grid.nlat(), grid.nlon()), |(_, i, _)| {
        (1000.0 - 30.0 * grid.lat(i).to_radians().sin().abs()) as f32
    });
    let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(spec.seed, stream::ATMOS, 0));
    for t in 0..nt {
        for i in 0..grid.nlat() {
            for j in 0..grid.nlon() {
                let h: f64 = rng.random_range(0.3..=1.0);
                rh[[t, i, j]] = h as f32;
                // Depression grows as the air dries; the exact wet-bulb value is
                // recomputed downstream.
                ta[[t, i, j]] = truth.values()[[t0 + t, i, j]] + (8.0 * (1.0 - h)) as f32;
            }
        }
    }
    Ok(AtmosInputs {
        t_air: GridField::new(grid, times.clone(), ta, "K", "t_air")?,
        rh: GridField::new(grid, times.clone(), rh, "fraction", "rh")?,
        pressure: GridField::new(grid, times, pressure, "hPa", "pressure")?,
    })
}

fn gauge_records(spec: &SyntheticSpec, truth: &GridField, mask: &SurfaceMask, precip: &GridField) -> Vec<GaugeRecord> {
    let grid = *truth.grid();
    let land: Vec<(usize, usize)> = (0..grid.nlat())
        .flat_map(|i| (0..grid.nlon()).map(move |j| (i, j)))
        .filter(|&(i, j)| mask.surface()[[i, j]] == Surface::Land)
        .collect();
    if land.is_empty() || spec.stations == 0 || spec.station_years == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(spec.seed, stream::STATIONS, 0));
    let stations: Vec<(String, f64, f64, usize, usize)> = (0..spec.stations)
        .map(|s| {
            let (i, j) = land[rng.random_range(0..land.len())];
            // Stay well inside the cell so the nearest centre is unambiguous.
            let lat = grid.lat(i) + rng.random_range(-0.25..0.25) * grid.dlat();
            let lon = (grid.lon(j) + rng.random_range(-0.25..0.25) * grid.dlon()).rem_euclid(360.0);
            (format!("S{s:04}"), round4(lat), round4(lon), i, j)
        })
        .collect();
    let first = year_start(spec.last_year - spec.station_years + 1);
    let t0 = truth.time_index(first).expect("station period inside truth axis");
    let pgrid = *precip.grid();
    stations
        .par_iter()
        .enumerate()
        .flat_map_iter(|(s, (id, lat, lon, i, j))| {
            let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(spec.seed, stream::GAUGE, s as u64));
            let (pi, pj) = pgrid.nearest_cell(*lat, *lon);
            let mut out = Vec::new();
            for (t, &date) in truth.times().iter().enumerate().skip(t0) {
                let tw = truth.values()[[t, *i, *j]] as f64;
                let obs_tw = tw + spec.gauge_sigma * normal(&mut rng);
                let pentad = pentad_start(date.year(), pentad_of(date)).expect("valid pentad");
                let pt = precip.time_index(pentad).expect("pentad on precip axis");
                let pentad_mm = precip.values()[[pt, pi, pj]] as f64;
                // Spread the pentad total over its days with random shares.
                let share: f64 = rng.random_range(0.0..0.4);
                let mm = round4(pentad_mm * share);
                let rec = |observation| GaugeRecord {
                    station_id: id.clone(),
                    lat: *lat,
                    lon: *lon,
                    date,
                    observation,
                };
                out.push(rec(Observation::WetBulbK(round4(obs_tw))));
                out.push(rec(Observation::PrecipMm(mm)));
                if mm > 0.0 {
                    let c = tw - KELVIN;
                    let phase = if c <= 0.5 {
                        Phase::Snow
                    } else if c <= 1.5 {
                        Phase::Mixed
                    } else {
                        Phase::Rain
                    };
                    out.push(rec(Observation::Phase(phase)));
                }
            }
            out
        })
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Generate the full synthetic world for `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mask = surface_mask(spec)?;
    let times = daily_axis(spec.first_year, spec.last_year);
    let truth = truth_field(spec, &mask, &times)?;
    let products = (0..spec.product_sigmas.len())
        .map(|m| {
            let mut p = product_field(spec, &truth, m)?;
            p.set_variable(format!("t_wb_{}", spec.product_names[m]));
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let precip = precip_field(spec)?;
    let gauges = gauge_records(spec, &truth, &mask, &precip);
    let atmos = atmos_inputs(spec, &truth)?;
    Ok(SyntheticWorld {
        truth,
        products,
        mask,
        precip,
        gauges,
        atmos,
    })
}
