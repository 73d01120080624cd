//! Regular latitude-longitude grids, spherical cell geometry, nearest-neighbour
//! regridding and area-weighted reductions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::{infer_step, TimeStep};
use crate::error::{Error, Result};

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const POSITION_EPS: f64 = 1e-9;
/// Angular tolerance (radians) under which two distances count as a tie.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridSpec {
    lat_start: f64,
    lon_start: f64,
    dlat: f64,
    dlon: f64,
    nlat: usize,
    nlon: usize,
}

/// Regular lat-lon grid addressed by cell centers. Rows run south to north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct GeoGrid {
    lat_start: f64,
    lon_start: f64,
    dlat: f64,
    dlon: f64,
    nlat: usize,
    nlon: usize,
}

impl TryFrom<GridSpec> for GeoGrid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        GeoGrid::new(s.lat_start, s.lon_start, s.dlat, s.dlon, s.nlat, s.nlon)
    }
}

impl From<GeoGrid> for GridSpec {
    fn from(g: GeoGrid) -> Self {
        GridSpec {
            lat_start: g.lat_start,
            lon_start: g.lon_start,
            dlat: g.dlat,
            dlon: g.dlon,
            nlat: g.nlat,
            nlon: g.nlon,
        }
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let l = lon.rem_euclid(360.0);
    if l >= 360.0 {
        0.0
    } else {
        l
    }
}

impl GeoGrid {
    pub fn new(
        lat_start: f64,
        lon_start: f64,
        dlat: f64,
        dlon: f64,
        nlat: usize,
        nlon: usize,
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidGrid(m.to_string()));
        if !(lat_start.is_finite() && lon_start.is_finite() && dlat.is_finite() && dlon.is_finite())
        {
            return bad("non-finite grid parameter");
        }
        if dlat <= 0.0 || dlon <= 0.0 {
            return bad("grid spacing must be positive");
        }
        if nlat == 0 || nlon == 0 {
            return bad("grid must have at least one row and one column");
        }
        let lat_end = lat_start + (nlat - 1) as f64 * dlat;
        if lat_start < -90.0 - POSITION_EPS || lat_end > 90.0 + POSITION_EPS {
            return bad("cell-center latitudes must lie in [-90, 90]");
        }
        if dlat * nlat as f64 > 180.0 + dlat + POSITION_EPS {
            return bad("latitude extent overlaps itself");
        }
        if dlon * nlon as f64 > 360.0 + dlon + POSITION_EPS {
            return bad("longitude extent wraps onto itself");
        }
        Ok(Self {
            lat_start,
            lon_start: normalize_lon(lon_start),
            dlat,
            dlon,
            nlat,
            nlon,
        })
    }

    /// Global cell-centered grid whose cell edges fall on multiples of the
    /// spacing (first edges at 90°S and 0°E).
    pub fn global(dlat: f64, dlon: f64) -> Result<Self> {
        let nlat = (180.0 / dlat).round() as usize;
        let nlon = (360.0 / dlon).round() as usize;
        Self::new(-90.0 + dlat / 2.0, dlon / 2.0, dlat, dlon, nlat, nlon)
    }

    pub fn lat_start(&self) -> f64 {
        self.lat_start
    }
    pub fn lon_start(&self) -> f64 {
        self.lon_start
    }
    pub fn dlat(&self) -> f64 {
        self.dlat
    }
    pub fn dlon(&self) -> f64 {
        self.dlon
    }
    pub fn nlat(&self) -> usize {
        self.nlat
    }
    pub fn nlon(&self) -> usize {
        self.nlon
    }
    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.nlat, self.nlon)
    }

    pub fn lat(&self, i: usize) -> f64 {
        (self.lat_start + i as f64 * self.dlat).clamp(-90.0, 90.0)
    }

    pub fn lon(&self, j: usize) -> f64 {
        normalize_lon(self.lon_start + j as f64 * self.dlon)
    }

    pub fn is_global_lon(&self) -> bool {
        self.dlon * self.nlon as f64 >= 360.0 - POSITION_EPS
    }

    /// Southern and northern edge of row `i`, clipped to the poles.
    pub fn lat_edges(&self, i: usize) -> (f64, f64) {
        let c = self.lat_start + i as f64 * self.dlat;
        (
            (c - self.dlat / 2.0).max(-90.0),
            (c + self.dlat / 2.0).min(90.0),
        )
    }

    /// Area in km² of a cell in row `lat_index`.
    pub fn cell_area(&self, lat_index: usize) -> Result<f64> {
        self.cell_area_in_band(lat_index, -90.0, 90.0)
    }

    /// Area in km² of the part of a row-`lat_index` cell lying between
    /// latitudes `lo` and `hi`.
    pub fn cell_area_in_band(&self, lat_index: usize, lo: f64, hi: f64) -> Result<f64> {
        if lat_index >= self.nlat {
            return Err(Error::LatIndexOutOfRange {
                index: lat_index,
                nlat: self.nlat,
            });
        }
        let (s, n) = self.lat_edges(lat_index);
        let (s, n) = (s.max(lo), n.min(hi));
        if n <= s {
            return Ok(0.0);
        }
        Ok(EARTH_RADIUS_KM
            * EARTH_RADIUS_KM
            * self.dlon.to_radians()
            * (n.to_radians().sin() - s.to_radians().sin()))
    }

    /// Cell areas for every row.
    pub fn row_areas(&self) -> Vec<f64> {
        (0..self.nlat)
            .map(|i| self.cell_area(i).expect("row in range"))
            .collect()
    }

    /// Total area of the grid in km².
    pub fn total_area(&self) -> f64 {
        self.row_areas().iter().sum::<f64>() * self.nlon as f64
    }

    /// Fraction of column `j`'s longitude extent lying inside
    /// `[west, west + width)` (degrees, any normalization).
    pub fn lon_overlap_fraction(&self, j: usize, west: f64, width: f64) -> f64 {
        let cell_w = normalize_lon(self.lon(j) - self.dlon / 2.0);
        let slice_w = normalize_lon(west);
        let mut overlap = 0.0;
        // The shifted copies cover intervals straddling the 0/360 seam.
        for shift in [-360.0, 0.0, 360.0] {
            let a = cell_w.max(slice_w + shift);
            let b = (cell_w + self.dlon).min(slice_w + shift + width);
            if b > a {
                overlap += b - a;
            }
        }
        (overlap / self.dlon).min(1.0)
    }

    fn nearest_row_guess(&self, lat: f64) -> usize {
        let f = ((lat - self.lat_start) / self.dlat).round();
        f.clamp(0.0, (self.nlat - 1) as f64) as usize
    }

    /// Columns minimizing the wrapped longitude difference to `lon`, plus
    /// column 0 (all columns tie at a pole).
    fn candidate_columns(&self, lon: f64) -> Vec<usize> {
        let rel = normalize_lon(lon - self.lon_start) / self.dlon;
        let base = rel.floor() as i64;
        let n = self.nlon as i64;
        let mut cand = vec![0usize, self.nlon - 1];
        for c in [base, base + 1] {
            if self.is_global_lon() {
                cand.push(c.rem_euclid(n) as usize);
            } else if (0..n).contains(&c) {
                cand.push(c as usize);
            }
        }
        let dl = |j: usize| lon_diff(self.lon(j), lon);
        let best = cand.iter().map(|&j| dl(j)).fold(f64::INFINITY, f64::min);
        let mut out: Vec<usize> = cand
            .into_iter()
            .filter(|&j| j == 0 || dl(j) <= best + 1e-12)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Index `(row, col)` of the cell center geodesically nearest to
    /// `(lat, lon)`. Ties go to the lexicographically smallest index.
    pub fn nearest_cell(&self, lat: f64, lon: f64) -> (usize, usize) {
        let cols = self.candidate_columns(lon);
        let phi = lat.to_radians();
        let mut best = (f64::INFINITY, (usize::MAX, usize::MAX));
        let consider = |i: usize, best: &mut (f64, (usize, usize))| {
            for &j in &cols {
                let d = central_angle(phi, lat_rad(self, i), lon_diff(self.lon(j), lon).to_radians());
                let better = d < best.0 - TIE_EPS
                    || ((d - best.0).abs() <= TIE_EPS && (i, j) < best.1);
                if better {
                    *best = (d, (i, j));
                }
            }
        };
        let i0 = self.nearest_row_guess(lat);
        consider(i0, &mut best);
        let (mut up, mut down) = (true, true);
        for step in 1..self.nlat {
            if !up && !down {
                break;
            }
            if up {
                match i0.checked_add(step).filter(|&i| i < self.nlat) {
                    Some(i) if (lat_rad(self, i) - phi).abs() <= best.0 + TIE_EPS => {
                        consider(i, &mut best)
                    }
                    _ => up = false,
                }
            }
            if down {
                match i0.checked_sub(step) {
                    Some(i) if (lat_rad(self, i) - phi).abs() <= best.0 + TIE_EPS => {
                        consider(i, &mut best)
                    }
                    _ => down = false,
                }
            }
        }
        best.1
    }

    /// Whether the two grids share any latitude-longitude extent.
    pub fn overlaps(&self, other: &GeoGrid) -> bool {
        let (s1, n1) = (self.lat_edges(0).0, self.lat_edges(self.nlat - 1).1);
        let (s2, n2) = (other.lat_edges(0).0, other.lat_edges(other.nlat - 1).1);
        if n1 < s2 || n2 < s1 {
            return false;
        }
        if self.is_global_lon() || other.is_global_lon() {
            return true;
        }
        let w = self.dlon * self.nlon as f64;
        (0..other.nlon).any(|j| {
            let rel = normalize_lon(other.lon(j) - (self.lon_start - self.dlon / 2.0));
            rel <= w + other.dlon / 2.0 || rel >= 360.0 - other.dlon / 2.0
        })
    }
}

fn lat_rad(g: &GeoGrid, i: usize) -> f64 {
    g.lat(i).to_radians()
}

/// Absolute longitude difference wrapped to [0, 180] degrees.
pub fn lon_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Great-circle central angle (radians) via the haversine formula.
pub fn central_angle(phi1: f64, phi2: f64, dlambda: f64) -> f64 {
    let h = ((phi2 - phi1) / 2.0).sin().powi(2)
        + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Great-circle distance in km between two points given in degrees.
pub fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    EARTH_RADIUS_KM
        * central_angle(
            lat1.to_radians(),
            lat2.to_radians(),
            lon_diff(lon1, lon2).to_radians(),
        )
}

/// A time × lat × lon data cube on a [`GeoGrid`]. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: GeoGrid,
    times: Vec<NaiveDate>,
    values: Array3<f32>,
    units: String,
    variable: String,
}

impl GridField {
    pub fn new(
        grid: GeoGrid,
        times: Vec<NaiveDate>,
        values: Array3<f32>,
        units: impl Into<String>,
        variable: impl Into<String>,
    ) -> Result<Self> {
        let expected = (times.len(), grid.nlat(), grid.nlon());
        if values.dim() != expected {
            return Err(Error::ShapeMismatch(format!(
                "values have shape {:?}, grid and time axis require {:?}",
                values.dim(),
                expected
            )));
        }
        infer_step(&times)?;
        Ok(Self {
            grid,
            times,
            values,
            units: units.into(),
            variable: variable.into(),
        })
    }

    pub fn filled(
        grid: GeoGrid,
        times: Vec<NaiveDate>,
        value: f32,
        units: impl Into<String>,
        variable: impl Into<String>,
    ) -> Result<Self> {
        let values = Array3::from_elem((times.len(), grid.nlat(), grid.nlon()), value);
        Self::new(grid, times, values, units, variable)
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.grid
    }
    pub fn times(&self) -> &[NaiveDate] {
        &self.times
    }
    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut Array3<f32> {
        &mut self.values
    }
    pub fn into_values(self) -> Array3<f32> {
        self.values
    }
    pub fn units(&self) -> &str {
        &self.units
    }
    pub fn variable(&self) -> &str {
        &self.variable
    }
    pub fn set_variable(&mut self, v: impl Into<String>) {
        self.variable = v.into();
    }
    pub fn set_units(&mut self, u: impl Into<String>) {
        self.units = u.into();
    }
    pub fn nt(&self) -> usize {
        self.times.len()
    }
    pub fn step(&self) -> TimeStep {
        infer_step(&self.times).expect("validated at construction")
    }
    pub fn slice(&self, t: usize) -> ArrayView2<'_, f32> {
        self.values.index_axis(Axis(0), t)
    }

    pub fn time_index(&self, date: NaiveDate) -> Option<usize> {
        self.times.binary_search(&date).ok()
    }

    pub fn same_shape(&self, other: &GridField) -> bool {
        self.grid == other.grid && self.times == other.times
    }

    /// Pointwise map over all values.
    pub fn map(&self, f: impl Fn(f32) -> f32 + Sync + Send) -> GridField {
        let mut out = self.clone();
        out.values.par_mapv_inplace(f);
        out
    }
}

/// Regrid `src` onto `dst` by taking, for every destination cell, the value
/// of the geodesically nearest source cell center.
pub fn regrid_nearest(src: &GridField, dst: &GeoGrid) -> Result<GridField> {
    if !src.grid().overlaps(dst) {
        return Err(Error::InvalidInput(
            "source and destination grids do not overlap".into(),
        ));
    }
    let index = nearest_index_map(src.grid(), dst);
    let (nlat, nlon) = dst.shape();
    let src_lon = src.grid().nlon();
    let mut values = Array3::<f32>::zeros((src.nt(), nlat, nlon));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(src.values().axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, inp)| {
            for (k, o) in out.iter_mut().enumerate() {
                let s = index[k];
                *o = inp[[s / src_lon, s % src_lon]];
            }
        });
    GridField::new(
        *dst,
        src.times().to_vec(),
        values,
        src.units(),
        src.variable(),
    )
}

/// Flat source index for every flat destination index.
pub fn nearest_index_map(src: &GeoGrid, dst: &GeoGrid) -> Vec<usize> {
    (0..dst.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / dst.nlon(), k % dst.nlon());
            let (si, sj) = src.nearest_cell(dst.lat(i), dst.lon(j));
            si * src.nlon() + sj
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Surface {
    Ocean = 0,
    Land = 1,
}

impl Surface {
    pub fn from_code(c: u8) -> Option<Surface> {
        match c {
            0 => Some(Surface::Ocean),
            1 => Some(Surface::Land),
            _ => None,
        }
    }
}

/// Per-pixel land/ocean flag with optional region labels. Region code 0 is
/// "unlabelled".
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMask {
    grid: GeoGrid,
    surface: Array2<Surface>,
    regions: Array2<u8>,
    labels: BTreeMap<u8, String>,
}

impl SurfaceMask {
    pub fn new(grid: GeoGrid, surface: Array2<Surface>) -> Result<Self> {
        if surface.dim() != grid.shape() {
            return Err(Error::ShapeMismatch(format!(
                "surface layer {:?} does not match grid {:?}",
                surface.dim(),
                grid.shape()
            )));
        }
        Ok(Self {
            grid,
            regions: Array2::zeros(grid.shape()),
            surface,
            labels: BTreeMap::new(),
        })
    }

    pub fn uniform(grid: GeoGrid, surface: Surface) -> Self {
        Self::new(grid, Array2::from_elem(grid.shape(), surface)).expect("shape matches")
    }

    pub fn with_regions(mut self, regions: Array2<u8>, labels: BTreeMap<u8, String>) -> Result<Self> {
        if regions.dim() != self.grid.shape() {
            return Err(Error::ShapeMismatch("region layer does not match grid".into()));
        }
        if let Some(code) = regions
            .iter()
            .find(|&&c| c != 0 && !labels.contains_key(&c))
        {
            return Err(Error::InvalidInput(format!("region code {code} has no label")));
        }
        self.regions = regions;
        self.labels = labels;
        Ok(self)
    }

    pub fn grid(&self) -> &GeoGrid {
        &self.grid
    }
    pub fn surface(&self) -> &Array2<Surface> {
        &self.surface
    }
    pub fn regions(&self) -> &Array2<u8> {
        &self.regions
    }
    pub fn labels(&self) -> &BTreeMap<u8, String> {
        &self.labels
    }

    fn region_code(&self, label: &str) -> Option<u8> {
        self.labels
            .iter()
            .find(|(_, l)| l.as_str() == label)
            .map(|(c, _)| *c)
    }

    /// Per-pixel area weights (km²) for `selector`: the portion of each
    /// selected cell lying inside the selector's latitude band, zero for
    /// unselected cells.
    pub fn selection_weights(&self, selector: &Selector) -> Result<Array2<f64>> {
        let code = match &selector.region {
            Some(label) => Some(
                self.region_code(label)
                    .ok_or_else(|| Error::EmptySelection(selector.to_string()))?,
            ),
            None => None,
        };
        let (lo, hi) = selector.hemisphere.band();
        let mut w = Array2::<f64>::zeros(self.grid.shape());
        for i in 0..self.grid.nlat() {
            let a = self.grid.cell_area_in_band(i, lo, hi)?;
            if a <= 0.0 {
                continue;
            }
            for j in 0..self.grid.nlon() {
                let surface_ok = selector.surface.is_none_or(|s| self.surface[[i, j]] == s);
                let region_ok = code.is_none_or(|c| self.regions[[i, j]] == c);
                if surface_ok && region_ok {
                    w[[i, j]] = a;
                }
            }
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::EmptySelection(selector.to_string()));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    Global,
    North,
    South,
}

impl Hemisphere {
    pub fn band(self) -> (f64, f64) {
        match self {
            Hemisphere::Global => (-90.0, 90.0),
            Hemisphere::North => (0.0, 90.0),
            Hemisphere::South => (-90.0, 0.0),
        }
    }
}

/// Pixel filter for spatial reductions: hemisphere band, optional surface
/// type and optional region label.
///
/// Text form: `global`, `nh`, `sh`, optionally suffixed `-land`/`-ocean`
/// (`land` and `ocean` alone mean global), or `region:<label>`, optionally
/// prefixed by a hemisphere (`nh:region:Alps`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Selector {
    pub hemisphere: Hemisphere,
    pub surface: Option<Surface>,
    pub region: Option<String>,
}

impl Selector {
    pub const GLOBAL: Selector = Selector {
        hemisphere: Hemisphere::Global,
        surface: None,
        region: None,
    };

    pub fn new(hemisphere: Hemisphere, surface: Option<Surface>) -> Self {
        Self {
            hemisphere,
            surface,
            region: None,
        }
    }

    pub fn region(label: impl Into<String>) -> Self {
        Self {
            hemisphere: Hemisphere::Global,
            surface: None,
            region: Some(label.into()),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = match self.hemisphere {
            Hemisphere::Global => "global",
            Hemisphere::North => "nh",
            Hemisphere::South => "sh",
        };
        if let Some(r) = &self.region {
            return if self.hemisphere == Hemisphere::Global {
                write!(f, "region:{r}")
            } else {
                write!(f, "{h}:region:{r}")
            };
        }
        match self.surface {
            None => f.write_str(h),
            Some(Surface::Land) => write!(f, "{h}-land"),
            Some(Surface::Ocean) => write!(f, "{h}-ocean"),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::UnknownSelector(s.to_string());
        let hemi = |h: &str| match h {
            "global" => Some(Hemisphere::Global),
            "nh" => Some(Hemisphere::North),
            "sh" => Some(Hemisphere::South),
            _ => None,
        };
        let (hemisphere, rest) = match s.split_once(":region:") {
            Some((h, label)) => (hemi(h).ok_or_else(unknown)?, Some(label)),
            None => (Hemisphere::Global, s.strip_prefix("region:")),
        };
        if let Some(label) = rest {
            if label.is_empty() {
                return Err(unknown());
            }
            return Ok(Selector {
                hemisphere,
                surface: None,
                region: Some(label.to_string()),
            });
        }
        let (h, surf) = match s.split_once('-') {
            Some((h, surf)) => (h, Some(surf)),
            None => match s {
                "land" | "ocean" => ("global", Some(s)),
                _ => (s, None),
            },
        };
        let surface = match surf {
            None => None,
            Some("land") => Some(Surface::Land),
            Some("ocean") => Some(Surface::Ocean),
            Some(_) => return Err(unknown()),
        };
        Ok(Selector::new(hemi(h).ok_or_else(unknown)?, surface))
    }
}

/// Area-weighted mean of `field` over the pixels chosen by `selector`, one
/// value per time step. NaN pixels are excluded.
pub fn area_weighted_mean(
    field: &GridField,
    mask: &SurfaceMask,
    selector: &Selector,
) -> Result<Vec<f64>> {
    if field.grid() != mask.grid() {
        return Err(Error::ShapeMismatch("field and mask grids differ".into()));
    }
    let weights = mask.selection_weights(selector)?;
    (0..field.nt())
        .into_par_iter()
        .map(|t| {
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for (v, w) in field.slice(t).iter().zip(weights.iter()) {
                if *w > 0.0 && v.is_finite() {
                    num += *v as f64 * w;
                    den += w;
                }
            }
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::AllMissing {
                    selector: selector.to_string(),
                    time_index: t,
                })
            }
        })
        .collect()
}
