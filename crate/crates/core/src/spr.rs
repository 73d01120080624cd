//! Snowfall-to-precipitation ratio from pentad precipitation and daily
//! potential-snowfall masks.
//!
//! For each pentad the snow frequency `f_s` is the share of its days flagged
//! as potential snowfall. The annual ratio is `Σ f_s·P / Σ P` over the
//! year's 73 pentads.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array2, Array3, Axis, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{pentad_axis, pentad_days, pentad_of, pentad_start, year_start, PENTADS_PER_YEAR};
use crate::gauge::{GaugeRecord, Observation};
use crate::error::{Error, Result};
use crate::grid::{regrid_nearest, GridField};

/// Pixels below this annual precipitation (mm) are left out of SPR trend maps.
pub const DEFAULT_DRY_THRESHOLD_MM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PentadFrequency {
    /// Snow frequency per pixel; NaN where every day is missing.
    pub values: Array2<f32>,
    /// Pixels where at least one day of the pentad was missing.
    pub low_coverage: usize,
    pub days: usize,
}

/// Snow frequency for one pentad of `year` from a daily mask series. The last
/// pentad of a leap year spans six days.
pub fn snow_frequency_pentad(masks: &GridField, year: i32, pentad: u32) -> Result<PentadFrequency> {
    let days = pentad_days(year, pentad);
    if days.is_empty() {
        return Err(Error::InvalidInput(format!("pentad {pentad} outside 1..=73")));
    }
    let grid = masks.grid();
    let mut snow = Array2::<u32>::zeros(grid.shape());
    let mut valid = Array2::<u32>::zeros(grid.shape());
    for d in &days {
        let t = masks.time_index(*d).ok_or_else(|| {
            Error::IncompleteCoverage(format!("day {d} missing from mask series"))
        })?;
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
    let total = days.len() as u32;
    let low_coverage = valid.iter().filter(|&&n| n < total).count();
    let values = Zip::from(&snow).and(&valid).map_collect(|&s, &n| {
        if n == 0 {
            f32::NAN
        } else {
            (s as f64 / n as f64) as f32
        }
    });
    Ok(PentadFrequency {
        values,
        low_coverage,
        days: days.len(),
    })
}

/// Snow frequency for all 73 pentads of `year`, on a pentad time axis.
pub fn snow_frequency_year(masks: &GridField, year: i32) -> Result<(GridField, usize)> {
    let grid = *masks.grid();
    let per = (1..=PENTADS_PER_YEAR)
        .into_par_iter()
        .map(|p| snow_frequency_pentad(masks, year, p))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Array3::<f32>::zeros((per.len(), grid.nlat(), grid.nlon()));
    let mut low = 0;
    for (k, p) in per.iter().enumerate() {
        values.index_axis_mut(Axis(0), k).assign(&p.values);
        low += p.low_coverage;
    }
    let field = GridField::new(grid, pentad_axis(year), values, "fraction", "snow_frequency")?;
    Ok((field, low))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnualSpr {
    /// Single-step field dated 1 January of the year.
    pub spr: GridField,
    /// Annual precipitation total (mm) over the pentads used.
    pub total_precip: GridField,
    /// Pixels with zero annual precipitation (SPR undefined, NaN).
    pub dry_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprSummary {
    pub dry_pixels: usize,
    pub low_coverage_pixel_pentads: usize,
}

/// `Σ f_s·P / Σ P` per pixel over the 73 pentads of `year`. `snow_freq` and
/// `precip` must share a grid and both hold every pentad of the year.
/// Pentads where either input is missing are skipped at that pixel.
pub fn annual_spr(snow_freq: &GridField, precip: &GridField, year: i32) -> Result<AnnualSpr> {
    if snow_freq.grid() != precip.grid() {
        return Err(Error::ShapeMismatch(
            "snow frequency and precipitation grids differ; regrid precipitation first".into(),
        ));
    }
    let grid = *snow_freq.grid();
    let mut num = Array2::<f64>::zeros(grid.shape());
    let mut den = Array2::<f64>::zeros(grid.shape());
    for p in 1..=PENTADS_PER_YEAR {
        let date = pentad_start(year, p).expect("valid pentad");
        let missing = || Error::IncompleteCoverage(format!("pentad starting {date} missing"));
        let tf = snow_freq.time_index(date).ok_or_else(missing)?;
        let tp = precip.time_index(date).ok_or_else(missing)?;
        let pr = precip.slice(tp);
        if let Some(bad) = pr.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative precipitation {bad} in pentad starting {date}"
            )));
        }
        Zip::from(&mut num)
            .and(&mut den)
            .and(snow_freq.slice(tf))
            .and(pr)
            .for_each(|n, d, &f, &pv| {
                if f.is_finite() && pv.is_finite() {
                    *n += f as f64 * pv as f64;
                    *d += pv as f64;
                }
            });
    }
    let spr = Zip::from(&num).and(&den).map_collect(|&n, &d| {
        if d > 0.0 {
            (n / d).clamp(0.0, 1.0) as f32
        } else {
            f32::NAN
        }
    });
    let dry = den.iter().filter(|&&d| d <= 0.0).count();
    let date = year_start(year);
    Ok(AnnualSpr {
        spr: GridField::new(grid, vec![date], spr.insert_axis(Axis(0)), "fraction", "spr")?,
        total_precip: GridField::new(
            grid,
            vec![date],
            den.mapv(|d| d as f32).insert_axis(Axis(0)),
            "mm",
            "annual_precip",
        )?,
        dry_pixels: dry,
    })
}

/// Annual SPR straight from daily masks and pentad precipitation, regridding
/// the precipitation onto the mask grid by nearest neighbour when needed.
pub fn spr_for_year(masks: &GridField, precip: &GridField, year: i32) -> Result<(AnnualSpr, SprSummary)> {
    let regridded;
    let precip = if precip.grid() == masks.grid() {
        precip
    } else {
        regridded = regrid_nearest(precip, masks.grid())?;
        &regridded
    };
    let (freq, low) = snow_frequency_year(masks, year)?;
    let spr = annual_spr(&freq, precip, year)?;
    let summary = SprSummary {
        dry_pixels: spr.dry_pixels,
        low_coverage_pixel_pentads: low,
    };
    Ok((spr, summary))
}

/// Pixels whose annual precipitation falls below `threshold_mm` (or is NaN).
pub fn dry_pixel_mask(total_precip: &GridField, threshold_mm: f64) -> Array2<bool> {
    total_precip
        .slice(0)
        .mapv(|v| !(v as f64 >= threshold_mm))
}

/// Station-versus-grid pairs for validation. Continuous pairs are annual SPR
/// per station-year; occurrence pairs are "any snow within the pentad" per
/// station-pentad, on the gauge side from reported phase and on the grid side
/// from `f_s > occurrence_threshold`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SprValidationPairs {
    pub est_spr: Vec<f64>,
    pub obs_spr: Vec<f64>,
    pub est_occurrence: Vec<bool>,
    pub obs_occurrence: Vec<bool>,
}

#[derive(Default)]
struct StationYear {
    total: f64,
    snow: f64,
    /// pentad start -> any snow reported
    pentads: BTreeMap<NaiveDate, bool>,
}

/// Build validation pairs from gauge records, a pentad snow-frequency stack
/// and an annual SPR stack on the same grid. Stations are matched to their
/// nearest cell; station-years without precipitation or outside the grid
/// stacks are skipped.
pub fn spr_validation_pairs(
    gauges: &[GaugeRecord],
    snow_freq: &GridField,
    spr: &GridField,
    occurrence_threshold: f64,
) -> Result<SprValidationPairs> {
    if snow_freq.grid() != spr.grid() {
        return Err(Error::ShapeMismatch("snow frequency and SPR grids differ".into()));
    }
    let mut per: BTreeMap<(&str, i32), (f64, f64, StationYear)> = BTreeMap::new();
    let mut phases: BTreeMap<(&str, NaiveDate), bool> = BTreeMap::new();
    for g in gauges {
        if let Observation::Phase(p) = g.observation {
            *phases.entry((g.station_id.as_str(), g.date)).or_default() |= p.has_snow();
        }
    }
    for g in gauges {
        let Observation::PrecipMm(mm) = g.observation else {
            continue;
        };
        if !(mm >= 0.0) {
            continue;
        }
        let entry = per
            .entry((g.station_id.as_str(), g.date.year()))
            .or_insert_with(|| (g.lat, g.lon, StationYear::default()));
        let snowy = phases.get(&(g.station_id.as_str(), g.date)).copied().unwrap_or(false);
        entry.2.total += mm;
        if snowy {
            entry.2.snow += mm;
        }
        let start = pentad_start(g.date.year(), pentad_of(g.date)).expect("valid pentad");
        *entry.2.pentads.entry(start).or_default() |= snowy && mm > 0.0;
    }
    let grid = snow_freq.grid();
    let mut out = SprValidationPairs::default();
    for ((_, year), (lat, lon, sy)) in per {
        let (i, j) = grid.nearest_cell(lat, lon);
        if sy.total > 0.0 {
            if let Some(t) = spr.time_index(year_start(year)) {
                let est = spr.values()[[t, i, j]];
                if est.is_finite() {
                    out.est_spr.push(est as f64);
                    out.obs_spr.push(sy.snow / sy.total);
                }
            }
        }
        for (start, obs) in sy.pentads {
            if let Some(t) = snow_freq.time_index(start) {
                let f = snow_freq.values()[[t, i, j]];
                if f.is_finite() {
                    out.est_occurrence.push(f as f64 > occurrence_threshold);
                    out.obs_occurrence.push(obs);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::daily_axis;
    use crate::grid::GeoGrid;
    use approx::assert_abs_diff_eq;

    fn grid() -> GeoGrid {
        GeoGrid::global(90.0, 180.0).unwrap()
    }

    fn masks(year: i32, f: impl Fn(usize) -> f32) -> GridField {
        let times = daily_axis(year, year);
        let values = Array3::from_shape_fn((times.len(), 2, 2), |(t, _, _)| f(t));
        GridField::new(grid(), times, values, "flag", "m").unwrap()
    }

    fn precip(year: i32, f: impl Fn(usize) -> f32) -> GridField {
        let values = Array3::from_shape_fn((73, 2, 2), |(t, _, _)| f(t));
        GridField::new(grid(), pentad_axis(year), values, "mm", "p").unwrap()
    }

    #[test]
    fn pentad_frequency_counts() {
        let m = masks(2001, |t| if t % 5 < 2 { 1.0 } else { 0.0 });
        let f = snow_frequency_pentad(&m, 2001, 1).unwrap();
        assert_abs_diff_eq!(f.values[[0, 0]], 0.4);
        assert_eq!(f.low_coverage, 0);
        let all = masks(2001, |_| 1.0);
        assert_eq!(snow_frequency_pentad(&all, 2001, 7).unwrap().values[[1, 1]], 1.0);
        assert!(snow_frequency_pentad(&all, 2001, 74).is_err());
        assert!(snow_frequency_pentad(&all, 2002, 1).is_err());
    }

    #[test]
    fn nan_days_reduce_coverage() {
        let mut m = masks(2001, |_| 1.0);
        m.values_mut()[[0, 0, 0]] = f32::NAN;
        m.values_mut()[[1, 0, 0]] = 0.0;
        let f = snow_frequency_pentad(&m, 2001, 1).unwrap();
        assert_abs_diff_eq!(f.values[[0, 0]], 0.75);
        assert_eq!(f.low_coverage, 1);
        for t in 0..5 {
            m.values_mut()[[t, 1, 1]] = f32::NAN;
        }
        assert!(snow_frequency_pentad(&m, 2001, 1).unwrap().values[[1, 1]].is_nan());
    }

    #[test]
    fn leap_year_last_pentad_has_six_days() {
        // Only 31 December snowy.
        let m = masks(2004, |t| if t == 365 { 1.0 } else { 0.0 });
        let f = snow_frequency_pentad(&m, 2004, 73).unwrap();
        assert_eq!(f.days, 6);
        assert_abs_diff_eq!(f.values[[0, 0]], 1.0 / 6.0);
    }

    #[test]
    fn dry_pixels_are_nan() {
        let (f, _) = snow_frequency_year(&masks(2001, |_| 1.0), 2001).unwrap();
        let mut p = precip(2001, |_| 1.0);
        p.values_mut().slice_mut(ndarray::s![.., 0, 1]).fill(0.0);
        let r = annual_spr(&f, &p, 2001).unwrap();
        assert_eq!(r.dry_pixels, 1);
        assert!(r.spr.values()[[0, 0, 1]].is_nan());
        assert_eq!(r.spr.values()[[0, 0, 0]], 1.0);
        assert_eq!(r.total_precip.values()[[0, 0, 0]], 73.0);
        let dry = dry_pixel_mask(&r.total_precip, 50.0);
        assert!(dry[[0, 1]] && !dry[[0, 0]]);
    }

    #[test]
    fn negative_precip_rejected() {
        let (f, _) = snow_frequency_year(&masks(2001, |_| 1.0), 2001).unwrap();
        let p = precip(2001, |t| if t == 3 { -1.0 } else { 1.0 });
        assert!(annual_spr(&f, &p, 2001).is_err());
    }

    #[test]
    fn coarse_precip_is_regridded() {
        let m = masks(2001, |t| if t < 180 { 1.0 } else { 0.0 });
        let coarse = GeoGrid::global(180.0, 360.0).unwrap();
        let p = GridField::filled(coarse, pentad_axis(2001), 3.0, "mm", "p").unwrap();
        let (r, s) = spr_for_year(&m, &p, 2001).unwrap();
        assert_eq!(r.spr.grid(), m.grid());
        assert_abs_diff_eq!(r.spr.values()[[0, 1, 1]], 36.0 / 73.0, epsilon = 1e-6);
        assert_eq!(s.dry_pixels, 0);
    }

    #[test]
    fn validation_pairs_from_stations() {
        use crate::gauge::Phase;
        let year = 2001;
        let m = masks(year, |t| if t < 10 { 1.0 } else { 0.0 });
        let (freq, _) = snow_frequency_year(&m, year).unwrap();
        let r = annual_spr(&freq, &precip(year, |_| 1.0), year).unwrap();
        let day = |d: u32| NaiveDate::from_ymd_opt(year, 1, d).unwrap();
        let rec = |d, observation| GaugeRecord {
            station_id: "A".into(),
            lat: 40.0,
            lon: 100.0,
            date: day(d),
            observation,
        };
        let gauges = vec![
            rec(1, Observation::PrecipMm(3.0)),
            rec(1, Observation::Phase(Phase::Mixed)),
            rec(2, Observation::PrecipMm(1.0)),
            rec(2, Observation::Phase(Phase::Rain)),
            rec(20, Observation::PrecipMm(0.0)),
        ];
        let v = spr_validation_pairs(&gauges, &freq, &r.spr, 0.0).unwrap();
        assert_eq!(v.obs_spr, vec![0.75]);
        assert_abs_diff_eq!(v.est_spr[0], 10.0 / 365.0, epsilon = 1e-6);
        // Pentad 1 (snow both sides) and pentad 4 (dry, no snow either side).
        assert_eq!(v.obs_occurrence, vec![true, false]);
        assert_eq!(v.est_occurrence, vec![true, false]);
    }
}
