//! Portable on-disk dataset format.
//!
//! A dataset is a directory holding `header.json` (grid, ISO-8601 `times`,
//! `units`, `variable`) and `data.f32`, little-endian IEEE-754 singles in
//! row-major `[time][lat][lon]` order with NaN for missing values. Surface
//! masks use `data.u8` (0 = ocean, 1 = land) and may add `regions.u8` plus a
//! `regions.json` code-to-label map.
//!
//! Writers stage the directory next to its destination and rename it into
//! place, so a reader never observes a half-written dataset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GeoGrid, GridField, Surface, SurfaceMask};

pub const HEADER_FILE: &str = "header.json";
pub const DATA_F32: &str = "data.f32";
pub const DATA_U8: &str = "data.u8";
pub const REGIONS_U8: &str = "regions.u8";
pub const REGIONS_JSON: &str = "regions.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub grid: GeoGrid,
    pub times: Vec<NaiveDate>,
    pub units: String,
    pub variable: String,
}

fn malformed(path: &Path, reason: impl ToString) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

pub fn read_header(dir: &Path) -> Result<DatasetHeader> {
    let path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| malformed(&path, e))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<GridField> {
    let dir = dir.as_ref();
    let header = read_header(dir)?;
    let data_path = dir.join(DATA_F32);
    let bytes = fs::read(&data_path)?;
    let n = header.times.len() * header.grid.len();
    if bytes.len() != n * 4 {
        return Err(Error::ExtentMismatch {
            path: data_path,
            expected: n * 4,
            found: bytes.len(),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let shape = (header.times.len(), header.grid.nlat(), header.grid.nlon());
    let values = Array3::from_shape_vec(shape, values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    GridField::new(header.grid, header.times, values, header.units, header.variable).map_err(
        |e| match e {
            Error::InvalidTimeAxis(r) => malformed(&dir.join(HEADER_FILE), r),
            other => other,
        },
    )
}

pub fn write_dataset(field: &GridField, dir: impl AsRef<Path>) -> Result<()> {
    let header = DatasetHeader {
        grid: *field.grid(),
        times: field.times().to_vec(),
        units: field.units().to_string(),
        variable: field.variable().to_string(),
    };
    let mut data = Vec::with_capacity(field.values().len() * 4);
    for v in field.values().iter() {
        data.extend_from_slice(&v.to_le_bytes());
    }
    write_dir_atomic(dir.as_ref(), |stage| {
        fs::write(stage.join(HEADER_FILE), serde_json::to_vec_pretty(&header)?)?;
        fs::write(stage.join(DATA_F32), &data)?;
        Ok(())
    })
}

pub fn read_mask(dir: impl AsRef<Path>) -> Result<SurfaceMask> {
    let dir = dir.as_ref();
    let header = read_header(dir)?;
    let grid = header.grid;
    let read_layer = |name: &str| -> Result<Array2<u8>> {
        let path = dir.join(name);
        let bytes = fs::read(&path)?;
        if bytes.len() != grid.len() {
            return Err(Error::ExtentMismatch {
                path,
                expected: grid.len(),
                found: bytes.len(),
            });
        }
        Ok(Array2::from_shape_vec(grid.shape(), bytes).expect("length checked"))
    };
    let codes = read_layer(DATA_U8)?;
    let mut surface = Array2::from_elem(grid.shape(), Surface::Ocean);
    for (s, &c) in surface.iter_mut().zip(codes.iter()) {
        *s = Surface::from_code(c).ok_or_else(|| {
            Error::InvalidInput(format!("surface code {c} in {}", dir.display()))
        })?;
    }
    let mask = SurfaceMask::new(grid, surface)?;
    let labels_path = dir.join(REGIONS_JSON);
    if !labels_path.exists() {
        return Ok(mask);
    }
    let labels: BTreeMap<u8, String> = serde_json::from_str(&fs::read_to_string(&labels_path)?)
        .map_err(|e| malformed(&labels_path, e))?;
    let regions = read_layer(REGIONS_U8)?;
    mask.with_regions(regions, labels)
}

pub fn write_mask(mask: &SurfaceMask, dir: impl AsRef<Path>) -> Result<()> {
    let header = DatasetHeader {
        grid: *mask.grid(),
        times: Vec::new(),
        units: "code".into(),
        variable: "surface".into(),
    };
    let codes: Vec<u8> = mask.surface().iter().map(|s| *s as u8).collect();
    write_dir_atomic(dir.as_ref(), |stage| {
        fs::write(stage.join(HEADER_FILE), serde_json::to_vec_pretty(&header)?)?;
        fs::write(stage.join(DATA_U8), &codes)?;
        if !mask.labels().is_empty() {
            fs::write(
                stage.join(REGIONS_JSON),
                serde_json::to_vec_pretty(mask.labels())?,
            )?;
            let regions: Vec<u8> = mask.regions().iter().copied().collect();
            fs::write(stage.join(REGIONS_U8), regions)?;
        }
        Ok(())
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

/// Populate a staging directory with `fill`, then swap it in for `dir`.
pub fn write_dir_atomic<E: From<std::io::Error>>(
    dir: &Path,
    fill: impl FnOnce(&Path) -> std::result::Result<(), E>,
) -> std::result::Result<(), E> {
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let stage = sibling(dir, ".partial");
    let old = sibling(dir, ".old");
    if stage.exists() {
        fs::remove_dir_all(&stage)?;
    }
    fs::create_dir_all(&stage)?;
    if let Err(e) = fill(&stage) {
        let _ = fs::remove_dir_all(&stage);
        return Err(e);
    }
    if dir.exists() {
        if old.exists() {
            fs::remove_dir_all(&old)?;
        }
        fs::rename(dir, &old)?;
    }
    fs::rename(&stage, dir)?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

/// Write a file through a temporary sibling and rename.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = sibling(path, ".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::daily_axis;

    fn sample() -> GridField {
        let grid = GeoGrid::global(60.0, 90.0).unwrap();
        let times = daily_axis(2000, 2000)[..3].to_vec();
        let values = Array3::from_shape_fn((3, 3, 4), |(t, i, j)| {
            if (t + i + j) % 5 == 0 {
                f32::NAN
            } else {
                (t as f32 * 1.1 - i as f32 * 3.7 + j as f32 / 7.0) * 1e-3
            }
        });
        GridField::new(grid, times, values, "K", "t_wb").unwrap()
    }

    #[test]
    fn header_is_plain_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        write_dataset(&sample(), &path).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(path.join(HEADER_FILE)).unwrap()).unwrap();
        assert_eq!(v["times"][0], "2000-01-01");
        assert_eq!(v["grid"]["nlat"], 3);
        assert_eq!(v["variable"], "t_wb");
        assert_eq!(fs::metadata(path.join(DATA_F32)).unwrap().len(), 3 * 12 * 4);
    }

    #[test]
    fn overwrite_replaces_previous() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        let f = sample();
        write_dataset(&f, &path).unwrap();
        let g = f.map(|v| v + 1.0);
        write_dataset(&g, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.values()[[0, 0, 1]].to_bits(), g.values()[[0, 0, 1]].to_bits());
        assert!(!sibling(&path, ".partial").exists());
        assert!(!sibling(&path, ".old").exists());
    }

    #[test]
    fn extent_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        write_dataset(&sample(), &path).unwrap();
        fs::write(path.join(DATA_F32), [0u8; 12]).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::ExtentMismatch { .. })));
    }

    #[test]
    fn malformed_and_non_monotonic_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        write_dataset(&sample(), &path).unwrap();
        fs::write(path.join(HEADER_FILE), "{\"grid\": 3}").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::MalformedHeader { .. })));

        let mut h: serde_json::Value = serde_json::to_value(DatasetHeader {
            grid: *sample().grid(),
            times: sample().times().to_vec(),
            units: "K".into(),
            variable: "x".into(),
        })
        .unwrap();
        h["times"] = serde_json::json!(["2000-01-02", "2000-01-01", "2000-01-03"]);
        fs::write(path.join(HEADER_FILE), h.to_string()).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::MalformedHeader { .. })));

        h["times"] = serde_json::json!(["2000-01-01", "2000-01-02", "2000-01-03"]);
        h["grid"]["dlat"] = serde_json::json!(-1.0);
        fs::write(path.join(HEADER_FILE), h.to_string()).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn mask_round_trip_with_regions() {
        let grid = GeoGrid::global(30.0, 60.0).unwrap();
        let surface = Array2::from_shape_fn(grid.shape(), |(i, j)| {
            if (i + j) % 2 == 0 { Surface::Land } else { Surface::Ocean }
        });
        let regions = Array2::from_shape_fn(grid.shape(), |(i, _)| if i == 5 { 1 } else { 0 });
        let labels = BTreeMap::from([(1u8, "polar".to_string())]);
        let mask = SurfaceMask::new(grid, surface).unwrap().with_regions(regions, labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_mask(&mask, dir.path().join("m")).unwrap();
        assert_eq!(read_mask(dir.path().join("m")).unwrap(), mask);

        let plain = SurfaceMask::uniform(grid, Surface::Land);
        write_mask(&plain, dir.path().join("p")).unwrap();
        assert!(!dir.path().join("p").join(REGIONS_JSON).exists());
        assert_eq!(read_mask(dir.path().join("p")).unwrap(), plain);
    }
}
