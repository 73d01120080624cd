//! Pipeline configuration: one JSON document, patched by `--set` overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use snowline::calendar::Season;
use snowline::grid::Selector;
use snowline::snowmask::{Period, SliceLayout, SnowThreshold};
use snowline::synth::SyntheticSpec;
use snowline::trend::{MbbConfig, MIN_REPLICATES};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumidityKind {
    #[default]
    Relative,
    Dewpoint,
}

/// Air-state datasets of one product, converted by the `wetbulb` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtmosInput {
    pub name: String,
    pub t_air: PathBuf,
    pub humidity: PathBuf,
    #[serde(default)]
    pub humidity_kind: HumidityKind,
    pub pressure: PathBuf,
}

/// A wet-bulb product entering the fusion. Without `wet_bulb` the product is
/// read from the `wetbulb` stage output of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductInput {
    pub name: String,
    #[serde(default)]
    pub wet_bulb: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default)]
    pub atmos: Vec<AtmosInput>,
    pub products: Vec<ProductInput>,
    pub precip: PathBuf,
    pub mask: PathBuf,
    pub gauges: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Wet-bulb snowfall thresholds (°C).
    pub land_celsius: f64,
    pub ocean_celsius: f64,
    /// Grid-side snow occurrence: pentad frequency strictly above this.
    pub occurrence: f64,
    /// Pixels with less mean annual precipitation (mm) are left out of SPR
    /// trend maps.
    pub dry_precip_mm: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let t = SnowThreshold::default();
        Self {
            land_celsius: t.land,
            ocean_celsius: t.ocean,
            occurrence: 0.0,
            dry_precip_mm: snowline::spr::DEFAULT_DRY_THRESHOLD_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Output root; every stage writes `<out>/<stage>/`.
    pub out: PathBuf,
    /// Drives the synthetic generator and every bootstrap.
    pub seed: u64,
    /// Generator settings, used when `inputs` is absent.
    pub synth: SyntheticSpec,
    pub inputs: Option<Inputs>,
    pub thresholds: Thresholds,
    pub alpha: f64,
    pub replicates: usize,
    pub block_length: Option<usize>,
    pub detrend_acf: bool,
    /// MAD multiplier for residual screening in `fuse`; `null` disables it.
    pub mad_k: Option<f64>,
    /// Station-years missing more precipitation days are dropped.
    pub max_missing_days: u32,
    pub periods: Vec<String>,
    pub regions: Vec<String>,
    pub exceedance_levels: Vec<f64>,
    pub window_years: u32,
    pub slices: SliceLayout,
    /// Products that must agree on a significant trend for the masked map.
    pub min_agreement: usize,
    pub decimals: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            seed: 42,
            synth: SyntheticSpec::default(),
            inputs: None,
            thresholds: Thresholds::default(),
            alpha: snowline::trend::DEFAULT_ALPHA,
            replicates: snowline::trend::DEFAULT_REPLICATES,
            block_length: None,
            detrend_acf: false,
            mad_k: Some(snowline::ensemble::DEFAULT_MAD_K),
            max_missing_days: 10,
            periods: ["annual", "djf", "mam", "jja", "son"].map(String::from).to_vec(),
            regions: ["global", "nh", "sh", "nh-land", "nh-ocean"].map(String::from).to_vec(),
            exceedance_levels: snowline::snowmask::EXCEEDANCE_LEVELS.to_vec(),
            window_years: 10,
            slices: SliceLayout::default(),
            min_agreement: 2,
            decimals: 2,
        }
    }
}

/// Set `key` (dotted; numeric segments index arrays) to `value` inside `doc`,
/// creating intermediate objects as needed.
pub fn apply_override(doc: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let fail = |reason: String| ConfigError::OverridePath {
        key: key.to_string(),
        reason,
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(fail("empty path segment".into()));
    }
    let mut node = doc;
    for (k, part) in parts.iter().enumerate() {
        let last = k + 1 == parts.len();
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let i: usize = part
                    .parse()
                    .map_err(|_| fail(format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(i)
                    .ok_or_else(|| fail(format!("index {i} out of range for array of {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(fail(format!("`{part}` is below a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Parse `k=v`; `v` is taken as JSON when it parses, otherwise as a string.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(s.to_string()))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::BadOverride(s.to_string()));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

impl PipelineConfig {
    /// Load `path` (or the defaults), apply overrides in order, and check the
    /// result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(ConfigError::Syntax)?
            }
            None => serde_json::to_value(Self::default()).expect("config serializes"),
        };
        for o in overrides {
            let (k, v) = parse_override(o)?;
            apply_override(&mut doc, &k, v)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(ConfigError::Schema)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, reason: &str| ConfigError::Invalid {
            field,
            reason: reason.to_string(),
        };
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(ConfigError::AlphaOutOfRange(self.alpha));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(ConfigError::TooFewReplicates {
                min: MIN_REPLICATES,
                got: self.replicates,
            });
        }
        if self.block_length == Some(0) {
            return Err(invalid("block_length", "must be at least 1"));
        }
        if self.mad_k.is_some_and(|k| !(k > 0.0)) {
            return Err(invalid("mad_k", "must be positive"));
        }
        self.selectors()?;
        self.period_list()?;
        if self.exceedance_levels.is_empty()
            || self.exceedance_levels.iter().any(|l| !(*l > 0.0 && *l <= 1.0))
        {
            return Err(invalid("exceedance_levels", "need levels in (0, 1]"));
        }
        if self.window_years == 0 {
            return Err(invalid("window_years", "must be at least 1"));
        }
        let n = 360.0 / self.slices.width_deg;
        if !(self.slices.width_deg > 0.0) || (n - n.round()).abs() > 1e-9 || !self.slices.anchor_deg.is_finite() {
            return Err(invalid("slices", "width must divide 360° and anchor be finite"));
        }
        let t = &self.thresholds;
        if ![t.land_celsius, t.ocean_celsius, t.occurrence, t.dry_precip_mm]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(invalid("thresholds", "must be finite"));
        }
        if !(0.0..1.0).contains(&t.occurrence) {
            return Err(invalid("thresholds.occurrence", "must lie in [0, 1)"));
        }
        let names: Vec<&str> = match &self.inputs {
            Some(i) => i.products.iter().map(|p| p.name.as_str()).collect(),
            None => self.synth.product_names.iter().map(String::as_str).collect(),
        };
        if names.contains(&"ensemble") {
            return Err(invalid("product names", "`ensemble` is reserved for the fused field"));
        }
        match &self.inputs {
            None => self
                .synth
                .validate()
                .map_err(|e| ConfigError::Invalid {
                    field: "synth",
                    reason: e.to_string(),
                })?,
            Some(inputs) => validate_inputs(inputs)?,
        }
        Ok(())
    }

    pub fn selectors(&self) -> Result<Vec<Selector>, ConfigError> {
        if self.regions.is_empty() {
            return Err(ConfigError::NoRegions);
        }
        self.regions
            .iter()
            .enumerate()
            .map(|(k, r)| {
                if r.trim().is_empty() {
                    return Err(ConfigError::EmptySelector(k));
                }
                r.parse().map_err(|_| ConfigError::UnknownSelector(r.clone()))
            })
            .collect()
    }

    pub fn period_list(&self) -> Result<Vec<Period>, ConfigError> {
        self.periods
            .iter()
            .map(|p| match p.to_ascii_lowercase().as_str() {
                "annual" => Ok(Period::Annual),
                "djf" => Ok(Period::Season(Season::Djf)),
                "mam" => Ok(Period::Season(Season::Mam)),
                "jja" => Ok(Period::Season(Season::Jja)),
                "son" => Ok(Period::Season(Season::Son)),
                _ => Err(ConfigError::UnknownPeriod(p.clone())),
            })
            .collect()
    }

    pub fn threshold(&self) -> SnowThreshold {
        SnowThreshold {
            land: self.thresholds.land_celsius,
            ocean: self.thresholds.ocean_celsius,
        }
    }

    pub fn mbb(&self) -> MbbConfig {
        MbbConfig {
            replicates: self.replicates,
            alpha: self.alpha,
            seed: self.seed,
            block_length: self.block_length,
            detrend_acf: self.detrend_acf,
        }
    }

    /// Generator settings with the pipeline seed.
    pub fn synth_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// SHA-256 of the canonical JSON of everything that affects results. The
    /// output location is left out so relocated runs hash the same.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("out");
        }
        let bytes = serde_json::to_vec(&v).expect("value serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

fn validate_inputs(inputs: &Inputs) -> Result<(), ConfigError> {
    let exists = |field: String, path: &Path| {
        if path.exists() {
            Ok(())
        } else {
            Err(ConfigError::MissingPath {
                field,
                path: path.to_path_buf(),
            })
        }
    };
    if inputs.products.is_empty() {
        return Err(ConfigError::Invalid {
            field: "inputs.products",
            reason: "at least one product is required".into(),
        });
    }
    let mut names = BTreeSet::new();
    for (k, a) in inputs.atmos.iter().enumerate() {
        exists(format!("inputs.atmos.{k}.t_air"), &a.t_air)?;
        exists(format!("inputs.atmos.{k}.humidity"), &a.humidity)?;
        exists(format!("inputs.atmos.{k}.pressure"), &a.pressure)?;
        if !names.insert(a.name.as_str()) {
            return Err(ConfigError::Invalid {
                field: "inputs.atmos",
                reason: format!("duplicate name `{}`", a.name),
            });
        }
    }
    let atmos: BTreeSet<&str> = names;
    let mut names = BTreeSet::new();
    for (k, p) in inputs.products.iter().enumerate() {
        if !names.insert(p.name.as_str()) || p.name.is_empty() || p.name.contains(['/', '\\']) {
            return Err(ConfigError::Invalid {
                field: "inputs.products",
                reason: format!("product name `{}` is empty, repeated or contains a path separator", p.name),
            });
        }
        match &p.wet_bulb {
            Some(path) => exists(format!("inputs.products.{k}.wet_bulb"), path)?,
            None if atmos.contains(p.name.as_str()) => {}
            None => {
                return Err(ConfigError::Invalid {
                    field: "inputs.products",
                    reason: format!("product `{}` has neither wet_bulb nor matching atmos inputs", p.name),
                })
            }
        }
    }
    exists("inputs.precip".into(), &inputs.precip)?;
    exists("inputs.mask".into(), &inputs.mask)?;
    exists("inputs.gauges".into(), &inputs.gauges)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_patch_nested_values() {
        let mut doc = serde_json::to_value(PipelineConfig::default()).unwrap();
        apply_override(&mut doc, "synth.dlat", json!(5.0)).unwrap();
        apply_override(&mut doc, "synth.product_sigmas.2", json!(3.0)).unwrap();
        apply_override(&mut doc, "synth.region_trends.polar", json!(0.6)).unwrap();
        let cfg: PipelineConfig = serde_json::from_value(doc.clone()).unwrap();
        assert_eq!(cfg.synth.dlat, 5.0);
        assert_eq!(cfg.synth.product_sigmas[2], 3.0);
        assert_eq!(cfg.synth.region_trends["polar"], 0.6);
        assert!(apply_override(&mut doc, "seed.x", json!(1)).is_err());
        assert!(apply_override(&mut doc, "regions.9", json!("nh")).is_err());
    }

    #[test]
    fn override_values_fall_back_to_strings() {
        assert_eq!(parse_override("alpha=0.1").unwrap().1, json!(0.1));
        assert_eq!(parse_override("out=runs/a").unwrap().1, json!("runs/a"));
        assert_eq!(parse_override("regions=[\"nh\"]").unwrap().1, json!(["nh"]));
        assert!(parse_override("alpha").is_err());
    }

    #[test]
    fn validation_names_the_problem() {
        let cfg = PipelineConfig::load(None, &["alpha=0.5".into()]).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::AlphaOutOfRange(_))));
        let cfg = PipelineConfig::load(None, &["replicates=99".into()]).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::TooFewReplicates { .. })));
        let cfg = PipelineConfig::load(None, &["regions=[]".into()]).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::NoRegions)));
        let cfg = PipelineConfig::load(None, &["regions=[\"nh\", \" \"]".into()]).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::EmptySelector(1))));
        assert!(matches!(
            PipelineConfig::load(None, &["aplha=0.1".into()]),
            Err(ConfigError::Schema(_))
        ));
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            out: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = PipelineConfig { seed: 7, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn missing_input_paths_are_reported() {
        let cfg = PipelineConfig {
            inputs: Some(Inputs {
                atmos: vec![],
                products: vec![ProductInput {
                    name: "a".into(),
                    wet_bulb: Some("/nonexistent/a".into()),
                }],
                precip: "/nonexistent/p".into(),
                mask: "/nonexistent/m".into(),
                gauges: "/nonexistent/g.csv".into(),
            }),
            ..Default::default()
        };
        match cfg.validate() {
            Err(ConfigError::MissingPath { field, .. }) => assert_eq!(field, "inputs.products.0.wet_bulb"),
            other => panic!("{other:?}"),
        }
    }
}
