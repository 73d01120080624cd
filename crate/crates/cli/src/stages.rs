//! One function per subcommand. Each reads its inputs, calls into the
//! library, and writes a self-describing stage directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use ndarray::{concatenate, Axis};
use serde::Serialize;
use snowline::calendar::year_start;
use snowline::dataset::{read_dataset, read_mask, write_dataset, write_mask};
use snowline::ensemble::{estimate_sigma, fuse_products, ml_weights, GaugeMatchupSet, SigmaEstimate};
use snowline::gauge::{completeness_filter, read_gauges, write_gauges_to, GaugeRecord};
use snowline::grid::{area_weighted_mean, regrid_nearest, GridField, Selector, SurfaceMask};
use snowline::metrics::ValidationReport;
use snowline::snowmask::{
    annual_mean_slice_areas, calendar_means, complete_years, exceedance_frequency, exceedance_mask,
    potential_snow_mask, retraction_rate, slice_areas, sliding_exceedance_frequency, snow_area,
    stack_single_steps, transition_latitudes, Period, TransitionLatitudes,
};
use snowline::spr::{dry_pixel_mask, snow_frequency_year, spr_for_year, spr_validation_pairs};
use snowline::synth;
use snowline::thermo::{wet_bulb_field, HumidityField, SolverSettings, WetBulbStats};
use snowline::trend::{annual_means, format_trend, mbb_mk_test, trend_field, trend_map, AnnualSeries, TrendMap, TrendReport};
use snowline::Error;

use crate::config::HumidityKind;
use crate::error::CliResult;
use crate::pipeline::{write_json, Context, Stage, ENSEMBLE};

const KELVIN: f64 = 273.15;

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Bring `field` onto the surface-mask grid when it is not there already.
fn on_grid(field: GridField, mask: &SurfaceMask) -> CliResult<GridField> {
    if field.grid() == mask.grid() {
        Ok(field)
    } else {
        Ok(regrid_nearest(&field, mask.grid())?)
    }
}

fn concat_time(parts: &[GridField], units: &str, variable: &str) -> CliResult<GridField> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
    let views: Vec<_> = parts.iter().map(|p| p.values().view()).collect();
    let values = concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let times = parts.iter().flat_map(|p| p.times().iter().copied()).collect();
    Ok(GridField::new(*first.grid(), times, values, units, variable)?)
}

/// Series names in output order: the ensemble, then each product.
fn series_names(ctx: &Context) -> Vec<String> {
    std::iter::once(ENSEMBLE.to_string())
        .chain(ctx.products().into_iter().map(|(n, _)| n))
        .collect()
}

fn mask_path(ctx: &Context, series: &str) -> PathBuf {
    ctx.stage_dir(Stage::Snowmask).join(series)
}

fn ensemble_path(ctx: &Context) -> PathBuf {
    ctx.stage_dir(Stage::Fuse).join(ENSEMBLE)
}

// ---------------------------------------------------------------- synth

pub fn synth(ctx: &Context) -> CliResult<()> {
    let spec = ctx.cfg.synth_spec();
    let world = synth::generate(&spec)?;
    ctx.run_stage(Stage::Synth, &[], |dir| {
        write_json(&dir.join("spec.json"), &spec)?;
        write_dataset(&world.truth, dir.join("truth"))?;
        for (name, p) in spec.product_names.iter().zip(&world.products) {
            write_dataset(p, dir.join("products").join(name))?;
        }
        write_mask(&world.mask, dir.join("mask"))?;
        write_dataset(&world.precip, dir.join("precip"))?;
        write_gauges_to(&world.gauges, File::create(dir.join("gauges.csv"))?)?;
        write_dataset(&world.atmos.t_air, dir.join("atmos/t_air"))?;
        write_dataset(&world.atmos.rh, dir.join("atmos/rh"))?;
        write_dataset(&world.atmos.pressure, dir.join("atmos/pressure"))?;
        Ok(())
    })
}

// -------------------------------------------------------------- wetbulb

pub fn wetbulb(ctx: &Context) -> CliResult<()> {
    let atmos = ctx.atmos();
    let inputs: Vec<PathBuf> = atmos
        .iter()
        .flat_map(|a| [a.t_air.clone(), a.humidity.clone(), a.pressure.clone()])
        .collect();
    ctx.run_stage(Stage::Wetbulb, &inputs, |dir| {
        let mut stats: BTreeMap<String, WetBulbStats> = BTreeMap::new();
        for a in &atmos {
            let t_air = read_dataset(&a.t_air)?;
            let hum = read_dataset(&a.humidity)?;
            let p = read_dataset(&a.pressure)?;
            let humidity = match a.humidity_kind {
                HumidityKind::Relative => HumidityField::Relative(&hum),
                HumidityKind::Dewpoint => HumidityField::Dewpoint(&hum),
            };
            let (mut tw, s) = wet_bulb_field(&t_air, humidity, &p, &SolverSettings::default())?;
            tw.set_variable(format!("t_wb_{}", a.name));
            write_dataset(&tw, dir.join(&a.name))?;
            stats.insert(a.name.clone(), s);
        }
        write_json(&dir.join("stats.json"), &stats)
    })
}

// ----------------------------------------------------------------- fuse

#[derive(Serialize)]
struct ProductError {
    name: String,
    sigma: f64,
    mean_residual: f64,
    matchups: usize,
    removed_fraction: f64,
    degenerate: bool,
    weight: f64,
}

#[derive(Serialize)]
struct ErrorModelReport {
    products: Vec<ProductError>,
    theoretical_sigma: f64,
    matchups: usize,
    duplicates_dropped: usize,
    gauge_records_used: usize,
    mad_k: Option<f64>,
}

fn filtered_gauges(ctx: &Context) -> CliResult<Vec<GaugeRecord>> {
    let all = read_gauges(ctx.gauges())?;
    Ok(completeness_filter(&all, ctx.cfg.max_missing_days))
}

pub fn fuse(ctx: &Context) -> CliResult<()> {
    let products = ctx.products();
    let mut inputs: Vec<PathBuf> = products.iter().map(|(_, p)| p.clone()).collect();
    inputs.push(ctx.gauges());
    ctx.run_stage(Stage::Fuse, &inputs, |dir| {
        let fields = products
            .iter()
            .map(|(_, p)| read_dataset(p))
            .collect::<snowline::Result<Vec<_>>>()?;
        let refs: Vec<&GridField> = fields.iter().collect();
        let gauges = filtered_gauges(ctx)?;
        let set = GaugeMatchupSet::build(&gauges, &refs)?;
        let est: Vec<SigmaEstimate> = (0..refs.len())
            .map(|m| estimate_sigma(&set, m, ctx.cfg.mad_k))
            .collect::<snowline::Result<_>>()?;
        let model = ml_weights(&est.iter().map(|e| e.sigma).collect::<Vec<_>>())?;
        let ensemble = fuse_products(&refs, &model)?;
        write_dataset(&ensemble, dir.join(ENSEMBLE))?;
        let report = ErrorModelReport {
            products: products
                .iter()
                .zip(&est)
                .zip(&model.weights)
                .map(|(((name, _), e), w)| ProductError {
                    name: name.clone(),
                    sigma: e.sigma,
                    mean_residual: e.mean,
                    matchups: e.n,
                    removed_fraction: e.removed_fraction,
                    degenerate: e.degenerate,
                    weight: *w,
                })
                .collect(),
            theoretical_sigma: model.theoretical_sigma,
            matchups: set.len(),
            duplicates_dropped: set.duplicates_dropped,
            gauge_records_used: gauges.len(),
            mad_k: ctx.cfg.mad_k,
        };
        write_json(&dir.join("error_model.json"), &report)
    })
}

// ------------------------------------------------------------- snowmask

pub fn snowmask(ctx: &Context) -> CliResult<()> {
    let mut sources = vec![(ENSEMBLE.to_string(), ensemble_path(ctx))];
    sources.extend(ctx.products());
    let mut inputs: Vec<PathBuf> = sources.iter().map(|(_, p)| p.clone()).collect();
    inputs.push(ctx.mask());
    ctx.run_stage(Stage::Snowmask, &inputs, |dir| {
        let mask = read_mask(ctx.mask())?;
        let thr = ctx.cfg.threshold();
        let mut provenance = BTreeMap::new();
        for (name, path) in &sources {
            let t_wb = on_grid(read_dataset(path)?, &mask)?;
            let series = potential_snow_mask(&t_wb, &mask, &thr)?;
            write_dataset(&series.field, dir.join(name))?;
            provenance.insert(
                name.clone(),
                serde_json::json!({ "source": series.source, "threshold_celsius": series.threshold }),
            );
        }
        write_json(&dir.join("provenance.json"), &provenance)
    })
}

// ---------------------------------------------------------------- areas

#[derive(Serialize)]
struct DailyArea<'a> {
    series: &'a str,
    region: String,
    date: String,
    area_km2: f64,
}

#[derive(Serialize)]
struct PeriodArea<'a> {
    series: &'a str,
    region: String,
    period: String,
    year: i32,
    area_km2: f64,
}

pub fn areas(ctx: &Context) -> CliResult<()> {
    let names = series_names(ctx);
    let mut inputs: Vec<PathBuf> = names.iter().map(|n| mask_path(ctx, n)).collect();
    inputs.push(ctx.mask());
    let selectors = ctx.cfg.selectors()?;
    let periods = ctx.cfg.period_list()?;
    ctx.run_stage(Stage::Areas, &inputs, |dir| {
        let mask = read_mask(ctx.mask())?;
        let mut daily = Vec::new();
        let mut per = Vec::new();
        for name in &names {
            let masks = read_dataset(mask_path(ctx, name))?;
            for sel in &selectors {
                let a = snow_area(&masks, &mask, sel)?;
                for (d, v) in masks.times().iter().zip(&a) {
                    daily.push(DailyArea {
                        series: name,
                        region: sel.to_string(),
                        date: d.to_string(),
                        area_km2: *v,
                    });
                }
                for &p in &periods {
                    for m in calendar_means(masks.times(), &a, p) {
                        per.push(PeriodArea {
                            series: name,
                            region: sel.to_string(),
                            period: p.to_string(),
                            year: m.year,
                            area_km2: m.mean,
                        });
                    }
                }
            }
        }
        write_csv(&dir.join("daily.csv"), &daily)?;
        write_csv(&dir.join("periods.csv"), &per)
    })
}

// ----------------------------------------------------------- exceedance

fn level_tag(level: f64) -> String {
    format!("{:02.0}", level * 100.0)
}

pub fn exceedance(ctx: &Context) -> CliResult<()> {
    let src = mask_path(ctx, ENSEMBLE);
    ctx.run_stage(Stage::Exceedance, &[src.clone()], |dir| {
        let masks = read_dataset(&src)?;
        let years = complete_years(masks.times());
        if years.is_empty() {
            return Err(Error::IncompleteCoverage("no complete calendar year of masks".into()).into());
        }
        let annual = years
            .iter()
            .map(|&y| exceedance_frequency(&masks, y))
            .collect::<snowline::Result<Vec<_>>>()?;
        let freq = stack_single_steps(&annual, "fraction", "snow_frequency")?;
        write_dataset(&freq, dir.join("frequency"))?;
        // A record shorter than the window gets a single window over all of it.
        let window = ctx.cfg.window_years.min(years.len() as u32);
        let sliding = sliding_exceedance_frequency(&masks, window)?;
        write_dataset(&sliding, dir.join("sliding_frequency"))?;
        for &level in &ctx.cfg.exceedance_levels {
            write_dataset(&exceedance_mask(&freq, level)?, dir.join(format!("mask_{}", level_tag(level))))?;
            write_dataset(
                &exceedance_mask(&sliding, level)?,
                dir.join(format!("sliding_mask_{}", level_tag(level))),
            )?;
        }
        write_json(
            &dir.join("summary.json"),
            &serde_json::json!({
                "years": years,
                "window_years_requested": ctx.cfg.window_years,
                "window_years_used": window,
                "levels": ctx.cfg.exceedance_levels,
            }),
        )
    })
}

// ----------------------------------------------------------- transition

#[derive(Serialize)]
struct LatitudeRow {
    level: String,
    year: i32,
    slice: usize,
    lon_west: f64,
    lon_east: f64,
    area_km2: f64,
    latitude: f64,
    clamped: bool,
}

#[derive(Serialize)]
struct RetractionRow {
    level: String,
    slice: usize,
    lon_west: f64,
    years: usize,
    deg_per_decade: f64,
}

fn level_label(level: Option<f64>) -> String {
    level.map_or_else(|| "mean".to_string(), |l| l.to_string())
}

pub fn transition(ctx: &Context) -> CliResult<()> {
    let src = mask_path(ctx, ENSEMBLE);
    let sliding_path = ctx.stage_dir(Stage::Exceedance).join("sliding_frequency");
    let layout = ctx.cfg.slices;
    ctx.run_stage(Stage::Transition, &[src.clone(), sliding_path.clone()], |dir| {
        let masks = read_dataset(&src)?;
        let sliding = read_dataset(&sliding_path)?;
        // (level, year, result) in output order.
        let mut per: Vec<(Option<f64>, i32, TransitionLatitudes)> = Vec::new();
        for year in complete_years(masks.times()) {
            let a = annual_mean_slice_areas(&masks, year, &layout)?;
            per.push((None, year, transition_latitudes(&a, &layout, None)?));
        }
        for &level in &ctx.cfg.exceedance_levels {
            let m = exceedance_mask(&sliding, level)?;
            for (t, d) in m.times().iter().enumerate() {
                let a = slice_areas(m.slice(t), m.grid(), &layout)?;
                per.push((Some(level), d.year(), transition_latitudes(&a, &layout, Some(level))?));
            }
        }
        let mut rows = Vec::new();
        let mut by_level: BTreeMap<String, Vec<(i32, &TransitionLatitudes)>> = BTreeMap::new();
        for (level, year, tl) in &per {
            for (k, s) in tl.slices.iter().enumerate() {
                rows.push(LatitudeRow {
                    level: level_label(*level),
                    year: *year,
                    slice: k,
                    lon_west: s.lon_west,
                    lon_east: s.lon_east,
                    area_km2: s.area_km2,
                    latitude: s.latitude,
                    clamped: s.clamped,
                });
            }
            by_level.entry(level_label(*level)).or_default().push((*year, tl));
        }
        write_csv(&dir.join("latitudes.csv"), &rows)?;

        let mut rates = Vec::new();
        for (label, seq) in &by_level {
            if seq.len() < 2 {
                continue;
            }
            let years: Vec<i32> = seq.iter().map(|(y, _)| *y).collect();
            let series = (0..layout.count())
                .map(|k| AnnualSeries::new(years.clone(), seq.iter().map(|(_, tl)| tl.slices[k].latitude).collect()))
                .collect::<snowline::Result<Vec<_>>>()?;
            for (k, r) in retraction_rate(&series)?.into_iter().enumerate() {
                rates.push(RetractionRow {
                    level: label.clone(),
                    slice: k,
                    lon_west: layout.west(k),
                    years: years.len(),
                    deg_per_decade: r,
                });
            }
        }
        write_csv(&dir.join("retraction.csv"), &rates)
    })
}

// ------------------------------------------------------------------ spr

#[derive(Serialize)]
struct SprRow {
    year: i32,
    region: String,
    mean_spr: Option<f64>,
    dry_pixels: usize,
    low_coverage_pixel_pentads: usize,
}

/// Area-weighted regional mean that reports an all-missing selection as
/// `None` instead of failing.
fn regional_mean(field: &GridField, mask: &SurfaceMask, sel: &Selector) -> CliResult<Vec<Option<f64>>> {
    match area_weighted_mean(field, mask, sel) {
        Ok(v) => Ok(v.into_iter().map(Some).collect()),
        Err(Error::AllMissing { .. }) => (0..field.nt())
            .map(|t| {
                let one = GridField::new(
                    *field.grid(),
                    vec![field.times()[t]],
                    field.values().slice(ndarray::s![t..t + 1, .., ..]).to_owned(),
                    field.units(),
                    field.variable(),
                )?;
                match area_weighted_mean(&one, mask, sel) {
                    Ok(v) => Ok(Some(v[0])),
                    Err(Error::AllMissing { .. }) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            })
            .collect(),
        Err(e) => Err(e.into()),
    }
}

pub fn spr(ctx: &Context) -> CliResult<()> {
    let src = mask_path(ctx, ENSEMBLE);
    let inputs = [src.clone(), ctx.precip(), ctx.mask()];
    let selectors = ctx.cfg.selectors()?;
    ctx.run_stage(Stage::Spr, &inputs, |dir| {
        let masks = read_dataset(&src)?;
        let precip = read_dataset(ctx.precip())?;
        let mask = read_mask(ctx.mask())?;
        let years = complete_years(masks.times());
        if years.is_empty() {
            return Err(Error::IncompleteCoverage("no complete calendar year of masks".into()).into());
        }
        let mut sprs = Vec::new();
        let mut totals = Vec::new();
        let mut freqs = Vec::new();
        let mut summaries = Vec::new();
        for &y in &years {
            let (a, s) = spr_for_year(&masks, &precip, y)?;
            sprs.push(a.spr);
            totals.push(a.total_precip);
            freqs.push(snow_frequency_year(&masks, y)?.0);
            summaries.push(s);
        }
        let spr = stack_single_steps(&sprs, "fraction", "spr")?;
        let total = stack_single_steps(&totals, "mm", "annual_precip")?;
        let freq = concat_time(&freqs, "fraction", "snow_frequency")?;
        write_dataset(&spr, dir.join("spr"))?;
        write_dataset(&total, dir.join("annual_precip"))?;
        write_dataset(&freq, dir.join("snow_frequency"))?;
        let mut rows = Vec::new();
        for sel in &selectors {
            let means = regional_mean(&spr, &mask, sel)?;
            for ((y, m), s) in years.iter().zip(means).zip(&summaries) {
                rows.push(SprRow {
                    year: *y,
                    region: sel.to_string(),
                    mean_spr: m,
                    dry_pixels: s.dry_pixels,
                    low_coverage_pixel_pentads: s.low_coverage_pixel_pentads,
                });
            }
        }
        rows.sort_by(|a, b| (a.year, &a.region).cmp(&(b.year, &b.region)));
        write_csv(&dir.join("summary.csv"), &rows)
    })
}

// ---------------------------------------------------------------- trend

#[derive(Serialize)]
struct ReportEntry<'a> {
    quantity: &'a str,
    series: String,
    region: String,
    period: String,
    report: TrendReport,
}

#[derive(Serialize)]
struct TrendRow {
    quantity: String,
    region: String,
    period: String,
    units: String,
    n: usize,
    first_year: i32,
    last_year: i32,
    slope_per_decade: f64,
    p_bootstrap: f64,
    significant: bool,
    block_length: usize,
    product_min: Option<f64>,
    product_max: Option<f64>,
    summary: String,
}

/// Regional annual or seasonal series per named source, keyed by
/// (region, period).
type RegionalSeries = BTreeMap<(String, String), Vec<(String, AnnualSeries)>>;

fn period_series(times: &[chrono::NaiveDate], daily: &[f64], period: Period, units: &str) -> CliResult<Option<AnnualSeries>> {
    let means = calendar_means(times, daily, period);
    if means.len() < 3 {
        return Ok(None);
    }
    let s = AnnualSeries::new(means.iter().map(|m| m.year).collect(), means.iter().map(|m| m.mean).collect())?;
    Ok(Some(s.with_units(units)))
}

fn write_map(dir: &Path, prefix: &str, m: &TrendMap) -> CliResult<()> {
    write_dataset(&m.slope_per_decade, dir.join(format!("{prefix}_slope")))?;
    write_dataset(&m.p_bootstrap, dir.join(format!("{prefix}_p")))?;
    write_dataset(&m.significant_sign, dir.join(format!("{prefix}_sign")))?;
    Ok(())
}

pub fn trend(ctx: &Context) -> CliResult<()> {
    let names = series_names(ctx);
    let mut twb_sources = vec![(ENSEMBLE.to_string(), ensemble_path(ctx))];
    twb_sources.extend(ctx.products());
    let spr_dir = ctx.stage_dir(Stage::Spr);
    let mut inputs: Vec<PathBuf> = twb_sources.iter().map(|(_, p)| p.clone()).collect();
    inputs.extend(names.iter().map(|n| mask_path(ctx, n)));
    inputs.extend([spr_dir.join("spr"), spr_dir.join("annual_precip"), ctx.mask()]);
    let selectors = ctx.cfg.selectors()?;
    let periods = ctx.cfg.period_list()?;
    let mbb = ctx.cfg.mbb();
    ctx.run_stage(Stage::Trend, &inputs, |dir| {
        let mask = read_mask(ctx.mask())?;
        let mut tables: BTreeMap<&str, RegionalSeries> = BTreeMap::new();

        let twb: Vec<(String, GridField)> = twb_sources
            .iter()
            .map(|(n, p)| Ok((n.clone(), on_grid(read_dataset(p)?, &mask)?)))
            .collect::<CliResult<_>>()?;
        for (name, field) in &twb {
            for sel in &selectors {
                let daily = area_weighted_mean(field, &mask, sel)?;
                for &p in &periods {
                    if let Some(s) = period_series(field.times(), &daily, p, field.units())? {
                        tables
                            .entry("t_wb")
                            .or_default()
                            .entry((sel.to_string(), p.to_string()))
                            .or_default()
                            .push((name.clone(), s));
                    }
                }
            }
        }
        for name in &names {
            let masks = read_dataset(mask_path(ctx, name))?;
            for sel in &selectors {
                let a: Vec<f64> = snow_area(&masks, &mask, sel)?.iter().map(|v| v / 1e6).collect();
                for &p in &periods {
                    if let Some(s) = period_series(masks.times(), &a, p, "million km2")? {
                        tables
                            .entry("snow_area")
                            .or_default()
                            .entry((sel.to_string(), p.to_string()))
                            .or_default()
                            .push((name.clone(), s));
                    }
                }
            }
        }
        let spr = read_dataset(spr_dir.join("spr"))?;
        let spr_years: Vec<i32> = spr.times().iter().map(|d| d.year()).collect();
        for sel in &selectors {
            let (ys, vs): (Vec<i32>, Vec<f64>) = spr_years
                .iter()
                .zip(regional_mean(&spr, &mask, sel)?)
                .filter_map(|(y, m)| m.map(|m| (*y, m)))
                .unzip();
            if ys.len() >= 3 {
                tables
                    .entry("spr")
                    .or_default()
                    .entry((sel.to_string(), Period::Annual.to_string()))
                    .or_default()
                    .push((ENSEMBLE.to_string(), AnnualSeries::new(ys, vs)?.with_units("fraction")));
            }
        }

        let mut entries = Vec::new();
        let mut rows = Vec::new();
        for (quantity, by_key) in &tables {
            for ((region, period), list) in by_key {
                let reports = list
                    .iter()
                    .map(|(_, s)| mbb_mk_test(s, &mbb))
                    .collect::<snowline::Result<Vec<_>>>()?;
                let (ens, prods): (Vec<_>, Vec<_>) = list
                    .iter()
                    .zip(&reports)
                    .partition(|((n, _), _)| n == ENSEMBLE);
                let Some((_, e)) = ens.first() else { continue };
                let prod_reports: Vec<TrendReport> = prods.iter().map(|(_, r)| (*r).clone()).collect();
                let slopes = prod_reports.iter().map(|r| r.slope_per_decade);
                rows.push(TrendRow {
                    quantity: quantity.to_string(),
                    region: region.clone(),
                    period: period.clone(),
                    units: e.units.clone(),
                    n: e.n,
                    first_year: e.first_year,
                    last_year: e.last_year,
                    slope_per_decade: e.slope_per_decade,
                    p_bootstrap: e.p_bootstrap,
                    significant: e.significant,
                    block_length: e.block_length,
                    product_min: slopes.clone().reduce(f64::min),
                    product_max: slopes.reduce(f64::max),
                    summary: format_trend(e, &prod_reports, ctx.cfg.decimals),
                });
                for ((name, _), r) in list.iter().zip(reports) {
                    entries.push(ReportEntry {
                        quantity,
                        series: name.clone(),
                        region: region.clone(),
                        period: period.clone(),
                        report: r,
                    });
                }
            }
        }
        write_csv(&dir.join("table.csv"), &rows)?;
        write_json(&dir.join("reports.json"), &entries)?;

        // Pixel maps of annual-mean wet-bulb temperature.
        let annual = twb
            .iter()
            .map(|(_, f)| annual_means(f))
            .collect::<snowline::Result<Vec<_>>>()?;
        let (ens_annual, prod_annual) = annual.split_first().expect("ensemble first");
        let prod_refs: Vec<&GridField> = prod_annual.iter().collect();
        let tf = trend_field(&prod_refs, ens_annual, &mbb, ctx.cfg.min_agreement)?;
        let maps = dir.join("maps");
        write_map(&maps, "t_wb_ensemble", &tf.ensemble)?;
        for ((name, _), m) in twb.iter().skip(1).zip(&tf.products) {
            write_map(&maps, &format!("t_wb_{name}"), m)?;
        }
        write_dataset(&tf.agreement, maps.join("t_wb_agreement"))?;
        write_dataset(&tf.ensemble_masked_slope, maps.join("t_wb_ensemble_agreed_slope"))?;

        // SPR map, leaving out pixels drier than the threshold on average.
        let totals = read_dataset(spr_dir.join("annual_precip"))?;
        let mean_total = totals.values().mean_axis(Axis(0)).expect("non-empty stack");
        let mean_field = GridField::new(
            *totals.grid(),
            vec![year_start(totals.times()[0].year())],
            mean_total.insert_axis(Axis(0)),
            "mm",
            "mean_annual_precip",
        )?;
        let dry = dry_pixel_mask(&mean_field, ctx.cfg.thresholds.dry_precip_mm);
        let spr_map = trend_map(&spr, &mbb, tf.products.len() as u64 + 1, Some(&dry))?;
        write_map(&maps, "spr", &spr_map)?;
        Ok(())
    })
}

// ------------------------------------------------------------- validate

pub fn validate(ctx: &Context) -> CliResult<()> {
    let spr_dir = ctx.stage_dir(Stage::Spr);
    let inputs = [
        ensemble_path(ctx),
        spr_dir.join("spr"),
        spr_dir.join("snow_frequency"),
        ctx.gauges(),
        ctx.mask(),
    ];
    ctx.run_stage(Stage::Validate, &inputs, |dir| {
        let gauges = filtered_gauges(ctx)?;
        let mask = read_mask(ctx.mask())?;
        let ensemble = read_dataset(ensemble_path(ctx))?;

        // Wet-bulb temperature at the gauges; occurrence is "at or below the
        // snowfall threshold" on both sides.
        let set = GaugeMatchupSet::build(&gauges, &[&ensemble])?;
        let thr = ctx.cfg.threshold();
        let limit = |lat: f64, lon: f64| {
            let (i, j) = mask.grid().nearest_cell(lat, lon);
            thr.celsius(mask.surface()[[i, j]]) + KELVIN
        };
        let est: Vec<f64> = set.matchups.iter().map(|m| m.products[0]).collect();
        let obs: Vec<f64> = set.matchups.iter().map(|m| m.gauge).collect();
        let lim: Vec<f64> = set.matchups.iter().map(|m| limit(m.lat, m.lon)).collect();
        let est_occ: Vec<bool> = est.iter().zip(&lim).map(|(v, l)| v <= l).collect();
        let obs_occ: Vec<bool> = obs.iter().zip(&lim).map(|(v, l)| v <= l).collect();
        let wet_bulb = ValidationReport::build(&est, &obs, &est_occ, &obs_occ)?;

        let spr = read_dataset(spr_dir.join("spr"))?;
        let freq = read_dataset(spr_dir.join("snow_frequency"))?;
        let pairs = spr_validation_pairs(&gauges, &freq, &spr, ctx.cfg.thresholds.occurrence)?;
        let spr_report = ValidationReport::build(
            &pairs.est_spr,
            &pairs.obs_spr,
            &pairs.est_occurrence,
            &pairs.obs_occurrence,
        )?;
        write_json(
            &dir.join("report.json"),
            &serde_json::json!({ "wet_bulb": wet_bulb, "spr": spr_report }),
        )
    })
}

pub fn run_one(ctx: &Context, stage: Stage) -> CliResult<()> {
    match stage {
        Stage::Synth => synth(ctx),
        Stage::Wetbulb => wetbulb(ctx),
        Stage::Fuse => fuse(ctx),
        Stage::Snowmask => snowmask(ctx),
        Stage::Areas => areas(ctx),
        Stage::Exceedance => exceedance(ctx),
        Stage::Transition => transition(ctx),
        Stage::Spr => spr(ctx),
        Stage::Trend => trend(ctx),
        Stage::Validate => validate(ctx),
    }
}

/// Stages of a full run: `synth` only when no inputs are configured.
pub fn full_run(ctx: &Context) -> Vec<Stage> {
    Stage::ALL
        .into_iter()
        .filter(|s| *s != Stage::Synth || ctx.cfg.inputs.is_none())
        .collect()
}
