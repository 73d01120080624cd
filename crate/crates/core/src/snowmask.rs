//! Potential-snowfall masks and the geometry built on them: snowfall areas,
//! exceedance-frequency maps and zonal transition latitudes.
//!
//! A pixel is in the potential-snowfall set on a day when its wet-bulb
//! temperature is at or below the phase threshold for its surface type.

use chrono::{Datelike, NaiveDate};
use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{year_days, Season};
use crate::error::{Error, Result};
use crate::grid::{GeoGrid, GridField, Selector, Surface, SurfaceMask, EARTH_RADIUS_KM};
use crate::trend::{theil_sen, AnnualSeries};

pub const DEFAULT_SLICE_WIDTH_DEG: f64 = 15.0;
pub const EXCEEDANCE_LEVELS: [f64; 3] = [0.25, 0.50, 0.75];

/// Wet-bulb phase thresholds in °C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnowThreshold {
    pub land: f64,
    pub ocean: f64,
}

impl Default for SnowThreshold {
    fn default() -> Self {
        Self {
            land: 1.0,
            ocean: 1.1,
        }
    }
}

impl SnowThreshold {
    pub fn celsius(&self, surface: Surface) -> f64 {
        match surface {
            Surface::Land => self.land,
            Surface::Ocean => self.ocean,
        }
    }
}

/// Offset to add to a °C threshold to express it in `units`.
fn celsius_offset(units: &str) -> Result<f64> {
    match units {
        "K" | "kelvin" => Ok(273.15),
        "C" | "degC" | "°C" | "celsius" => Ok(0.0),
        other => Err(Error::InvalidInput(format!(
            "wet-bulb field has unsupported units `{other}`"
        ))),
    }
}

/// Daily binary potential-snowfall field (1 = snow possible, 0 = not, NaN =
/// missing input) and its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SnowMaskSeries {
    pub field: GridField,
    pub threshold: SnowThreshold,
    pub source: String,
}

pub fn potential_snow_mask(
    t_wb: &GridField,
    mask: &SurfaceMask,
    threshold: &SnowThreshold,
) -> Result<SnowMaskSeries> {
    if t_wb.grid() != mask.grid() {
        return Err(Error::ShapeMismatch("wet-bulb field and surface mask grids differ".into()));
    }
    let offset = celsius_offset(t_wb.units())?;
    // Comparison happens in f32 so a value stored exactly at the threshold
    // counts as snow.
    let limits = mask
        .surface()
        .mapv(|s| (threshold.celsius(s) + offset) as f32);
    let mut values = t_wb.values().clone();
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .for_each(|mut day| {
            Zip::from(&mut day).and(&limits).for_each(|v, &lim| {
                if !v.is_nan() {
                    *v = if *v <= lim { 1.0 } else { 0.0 };
                }
            })
        });
    Ok(SnowMaskSeries {
        field: GridField::new(
            *t_wb.grid(),
            t_wb.times().to_vec(),
            values,
            "flag",
            "potential_snow",
        )?,
        threshold: *threshold,
        source: t_wb.variable().to_string(),
    })
}

/// Area (km²) of pixels flagged 1 within `selector`, one value per time step.
pub fn snow_area(masks: &GridField, mask: &SurfaceMask, selector: &Selector) -> Result<Vec<f64>> {
    if masks.grid() != mask.grid() {
        return Err(Error::ShapeMismatch("mask series and surface mask grids differ".into()));
    }
    let weights = mask.selection_weights(selector)?;
    Ok((0..masks.nt())
        .into_par_iter()
        .map(|t| {
            masks
                .slice(t)
                .iter()
                .zip(weights.iter())
                .filter(|(v, _)| **v == 1.0)
                .map(|(_, w)| w)
                .sum()
        })
        .collect())
}

/// Aggregation period for calendar means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Annual,
    Season(Season),
}

impl std::fmt::Display for Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Period::Annual => f.write_str("annual"),
            Period::Season(s) => write!(f, "{s}"),
        }
    }
}

impl Period {
    pub const ALL: [Period; 5] = [
        Period::Annual,
        Period::Season(Season::Djf),
        Period::Season(Season::Mam),
        Period::Season(Season::Jja),
        Period::Season(Season::Son),
    ];

    fn days(self, year: i32) -> Vec<NaiveDate> {
        match self {
            Period::Annual => year_days(year).collect(),
            Period::Season(s) => s.days(year),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodMean {
    pub year: i32,
    pub period: Period,
    pub mean: f64,
}

/// Means of a daily series over calendar periods. Only periods whose every
/// day is on the axis are reported, so a DJF lacking the previous December
/// is dropped.
pub fn calendar_means(times: &[NaiveDate], values: &[f64], period: Period) -> Vec<PeriodMean> {
    let (Some(first), Some(last)) = (times.first(), times.last()) else {
        return Vec::new();
    };
    (first.year()..=last.year() + 1)
        .filter_map(|year| {
            let days = period.days(year);
            let mut sum = 0.0;
            for d in &days {
                let i = times.binary_search(d).ok()?;
                sum += values[i];
            }
            Some(PeriodMean {
                year,
                period,
                mean: sum / days.len() as f64,
            })
        })
        .collect()
}

/// Per-pixel fraction of flagged days over the calendar years
/// `first_year..=last_year`. Every day of the range must be on the axis;
/// missing (NaN) days are left out of both counts. The result has a single
/// time step dated 1 January of `first_year`.
pub fn exceedance_frequency_range(
    masks: &GridField,
    first_year: i32,
    last_year: i32,
) -> Result<GridField> {
    let mut idx = Vec::new();
    for year in first_year..=last_year {
        for d in year_days(year) {
            idx.push(masks.time_index(d).ok_or_else(|| {
                Error::IncompleteCoverage(format!("day {d} missing from mask series"))
            })?);
        }
    }
    let grid = *masks.grid();
    let mut snow = Array2::<u32>::zeros(grid.shape());
    let mut valid = Array2::<u32>::zeros(grid.shape());
    for &t in &idx {
        Zip::from(&mut snow)
            .and(&mut valid)
            .and(masks.slice(t))
            .for_each(|s, n, &v| {
                if !v.is_nan() {
                    *n += 1;
                    if v == 1.0 {
                        *s += 1;
                    }
                }
            });
    }
    let freq = Zip::from(&snow).and(&valid).map_collect(|&s, &n| {
        if n == 0 {
            f32::NAN
        } else {
            (s as f64 / n as f64) as f32
        }
    });
    let date = NaiveDate::from_ymd_opt(first_year, 1, 1).expect("valid year");
    GridField::new(
        grid,
        vec![date],
        freq.insert_axis(Axis(0)),
        "fraction",
        "snow_frequency",
    )
}

/// Fraction of days in `year` flagged as potential snowfall (365- or
/// 366-day denominator).
pub fn exceedance_frequency(masks: &GridField, year: i32) -> Result<GridField> {
    exceedance_frequency_range(masks, year, year)
}

/// Frequencies over sliding windows of `window_years` years stepped by one
/// year, stacked on an annual axis labelled by each window's first year.
pub fn sliding_exceedance_frequency(masks: &GridField, window_years: u32) -> Result<GridField> {
    if window_years == 0 {
        return Err(Error::InvalidInput("window must span at least one year".into()));
    }
    let years = complete_years(masks.times());
    let Some((&y0, &y1)) = years.first().zip(years.last()) else {
        return Err(Error::IncompleteCoverage("no complete calendar year".into()));
    };
    let starts: Vec<i32> = (y0..=y1 - window_years as i32 + 1)
        .filter(|s| (*s..*s + window_years as i32).all(|y| years.contains(&y)))
        .collect();
    if starts.is_empty() {
        return Err(Error::IncompleteCoverage(format!(
            "fewer than {window_years} complete years"
        )));
    }
    let layers = starts
        .par_iter()
        .map(|&s| exceedance_frequency_range(masks, s, s + window_years as i32 - 1))
        .collect::<Result<Vec<_>>>()?;
    stack_single_steps(&layers, "fraction", "snow_frequency")
}

/// Stack single-time fields along the time axis.
pub fn stack_single_steps(layers: &[GridField], units: &str, variable: &str) -> Result<GridField> {
    let first = layers
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to stack".into()))?;
    let grid = *first.grid();
    let mut values = Array3::<f32>::zeros((layers.len(), grid.nlat(), grid.nlon()));
    let mut times = Vec::with_capacity(layers.len());
    for (k, l) in layers.iter().enumerate() {
        if l.grid() != &grid || l.nt() != 1 {
            return Err(Error::ShapeMismatch("layers must be single steps on one grid".into()));
        }
        values.index_axis_mut(Axis(0), k).assign(&l.slice(0));
        times.push(l.times()[0]);
    }
    GridField::new(grid, times, values, units, variable)
}

/// Years whose every day appears in `times`.
pub fn complete_years(times: &[NaiveDate]) -> Vec<i32> {
    let (Some(first), Some(last)) = (times.first(), times.last()) else {
        return Vec::new();
    };
    (first.year()..=last.year())
        .filter(|&y| year_days(y).all(|d| times.binary_search(&d).is_ok()))
        .collect()
}

/// Binary mask of pixels whose frequency is at least `level`. NaN propagates.
pub fn exceedance_mask(freq: &GridField, level: f64) -> Result<GridField> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidInput(format!("exceedance level {level} outside [0, 1]")));
    }
    let mut out = freq.map(move |v| {
        if v.is_nan() {
            f32::NAN
        } else if v as f64 >= level {
            1.0
        } else {
            0.0
        }
    });
    out.set_units("flag");
    out.set_variable(format!("exceedance_{:02.0}", level * 100.0));
    Ok(out)
}

/// Longitude slices `[anchor + k·width, anchor + (k+1)·width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceLayout {
    pub anchor_deg: f64,
    pub width_deg: f64,
}

impl Default for SliceLayout {
    fn default() -> Self {
        Self {
            anchor_deg: 0.0,
            width_deg: DEFAULT_SLICE_WIDTH_DEG,
        }
    }
}

impl SliceLayout {
    pub fn count(&self) -> usize {
        (360.0 / self.width_deg).round() as usize
    }

    pub fn west(&self, k: usize) -> f64 {
        (self.anchor_deg + k as f64 * self.width_deg).rem_euclid(360.0)
    }

    fn validate(&self) -> Result<()> {
        let n = 360.0 / self.width_deg;
        if !(self.width_deg > 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "slice width {} does not divide 360°",
                self.width_deg
            )));
        }
        Ok(())
    }

    /// Area of the polar sector of one slice from latitude `lat_deg` to the
    /// north pole.
    pub fn sector_area(&self, lat_deg: f64) -> f64 {
        EARTH_RADIUS_KM.powi(2) * self.width_deg.to_radians() * (1.0 - lat_deg.to_radians().sin())
    }
}

/// Northern-hemisphere flagged area (km²) in each longitude slice of one
/// binary layer. Cells straddling slice edges are split by longitude overlap.
pub fn slice_areas(layer: ArrayView2<'_, f32>, grid: &GeoGrid, layout: &SliceLayout) -> Result<Vec<f64>> {
    layout.validate()?;
    if layer.dim() != grid.shape() {
        return Err(Error::ShapeMismatch("layer does not match grid".into()));
    }
    let rows: Vec<f64> = (0..grid.nlat())
        .map(|i| grid.cell_area_in_band(i, 0.0, 90.0))
        .collect::<Result<_>>()?;
    Ok((0..layout.count())
        .map(|k| {
            let west = layout.west(k);
            let mut area = 0.0;
            for j in 0..grid.nlon() {
                let frac = grid.lon_overlap_fraction(j, west, layout.width_deg);
                if frac == 0.0 {
                    continue;
                }
                for (i, a) in rows.iter().enumerate() {
                    if *a > 0.0 && layer[[i, j]] == 1.0 {
                        area += a * frac;
                    }
                }
            }
            area
        })
        .collect())
}

/// Mean over the days of `year` of each slice's flagged area.
pub fn annual_mean_slice_areas(masks: &GridField, year: i32, layout: &SliceLayout) -> Result<Vec<f64>> {
    let idx: Vec<usize> = year_days(year)
        .map(|d| {
            masks
                .time_index(d)
                .ok_or_else(|| Error::IncompleteCoverage(format!("day {d} missing from mask series")))
        })
        .collect::<Result<_>>()?;
    let per_day = idx
        .par_iter()
        .map(|&t| slice_areas(masks.slice(t), masks.grid(), layout))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; layout.count()];
    for day in &per_day {
        for (m, a) in mean.iter_mut().zip(day) {
            *m += a;
        }
    }
    mean.iter_mut().for_each(|m| *m /= per_day.len() as f64);
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceLatitude {
    pub lon_west: f64,
    pub lon_east: f64,
    pub area_km2: f64,
    /// Transition latitude in degrees north.
    pub latitude: f64,
    /// The area exceeded the slice's pole-to-equator sector; latitude set to 0.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLatitudes {
    /// Exceedance level the areas were computed at; `None` for plain
    /// annual-mean areas.
    pub level: Option<f64>,
    pub slices: Vec<SliceLatitude>,
}

/// Latitude at which each slice's polar sector encloses the slice's snowfall
/// area: `φ = asin(1 − A / (R²·Δλ))`, clamped to [0°, 90°].
pub fn transition_latitudes(
    slice_areas: &[f64],
    layout: &SliceLayout,
    level: Option<f64>,
) -> Result<TransitionLatitudes> {
    layout.validate()?;
    if slice_areas.len() != layout.count() {
        return Err(Error::ShapeMismatch(format!(
            "{} slice areas for {} slices",
            slice_areas.len(),
            layout.count()
        )));
    }
    let full = EARTH_RADIUS_KM.powi(2) * layout.width_deg.to_radians();
    let slices = slice_areas
        .iter()
        .enumerate()
        .map(|(k, &area)| {
            if !(area >= 0.0) {
                return Err(Error::InvalidInput(format!("slice {k} has area {area}")));
            }
            let clamped = area > full;
            let s = (1.0 - area / full).clamp(0.0, 1.0);
            Ok(SliceLatitude {
                lon_west: layout.west(k),
                lon_east: layout.west(k) + layout.width_deg,
                area_km2: area,
                latitude: s.asin().to_degrees(),
                clamped,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TransitionLatitudes { level, slices })
}

/// Poleward retraction rate (degrees per decade) of each slice's annual
/// transition-latitude series, as ten times its Theil-Sen slope. Positive
/// values mean the boundary moved toward the pole.
pub fn retraction_rate(series: &[AnnualSeries]) -> Result<Vec<f64>> {
    series.iter().map(|s| theil_sen(s).map(|b| 10.0 * b)).collect()
}
