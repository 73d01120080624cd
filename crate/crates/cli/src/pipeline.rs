//! Stage bookkeeping: input resolution, atomic stage directories, manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snowline::dataset::{write_dir_atomic, write_file_atomic};

use crate::config::{AtmosInput, HumidityKind, PipelineConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const ENSEMBLE: &str = "ensemble";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Wetbulb,
    Fuse,
    Snowmask,
    Areas,
    Exceedance,
    Transition,
    Spr,
    Trend,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Wetbulb,
        Stage::Fuse,
        Stage::Snowmask,
        Stage::Areas,
        Stage::Exceedance,
        Stage::Transition,
        Stage::Spr,
        Stage::Trend,
        Stage::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Wetbulb => "wetbulb",
            Stage::Fuse => "fuse",
            Stage::Snowmask => "snowmask",
            Stage::Areas => "areas",
            Stage::Exceedance => "exceedance",
            Stage::Transition => "transition",
            Stage::Spr => "spr",
            Stage::Trend => "trend",
            Stage::Validate => "validate",
        }
    }

    fn from_name(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
}

/// Record written into every stage directory. It carries no timestamps so
/// that identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub status: Status,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("snowline".to_string(), snowline::VERSION.to_string()),
        ("snowline-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

pub struct Context {
    pub cfg: PipelineConfig,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: PipelineConfig) -> Self {
        let hash = cfg.hash();
        Self { cfg, hash }
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.cfg.out.join(stage.name())
    }

    fn synth_path(&self, rel: &str) -> PathBuf {
        self.stage_dir(Stage::Synth).join(rel)
    }

    /// Air-state inputs of the `wetbulb` stage.
    pub fn atmos(&self) -> Vec<AtmosInput> {
        match &self.cfg.inputs {
            Some(i) => i.atmos.clone(),
            None => vec![AtmosInput {
                name: "synthetic".into(),
                t_air: self.synth_path("atmos/t_air"),
                humidity: self.synth_path("atmos/rh"),
                humidity_kind: HumidityKind::Relative,
                pressure: self.synth_path("atmos/pressure"),
            }],
        }
    }

    /// Names and wet-bulb dataset paths of the fused products.
    pub fn products(&self) -> Vec<(String, PathBuf)> {
        match &self.cfg.inputs {
            Some(i) => i
                .products
                .iter()
                .map(|p| {
                    let path = p
                        .wet_bulb
                        .clone()
                        .unwrap_or_else(|| self.stage_dir(Stage::Wetbulb).join(&p.name));
                    (p.name.clone(), path)
                })
                .collect(),
            None => self
                .cfg
                .synth
                .product_names
                .iter()
                .map(|n| (n.clone(), self.synth_path(&format!("products/{n}"))))
                .collect(),
        }
    }

    pub fn precip(&self) -> PathBuf {
        match &self.cfg.inputs {
            Some(i) => i.precip.clone(),
            None => self.synth_path("precip"),
        }
    }

    pub fn mask(&self) -> PathBuf {
        match &self.cfg.inputs {
            Some(i) => i.mask.clone(),
            None => self.synth_path("mask"),
        }
    }

    pub fn gauges(&self) -> PathBuf {
        match &self.cfg.inputs {
            Some(i) => i.gauges.clone(),
            None => self.synth_path("gauges.csv"),
        }
    }

    /// Path as recorded in manifests: relative to the output root when inside
    /// it, so relocated runs record the same text.
    fn display(&self, p: &Path) -> String {
        p.strip_prefix(self.out())
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn manifest(&self, stage: Stage, status: Status, inputs: &[PathBuf], outputs: Vec<String>) -> Manifest {
        Manifest {
            stage: stage.name().into(),
            status,
            config_sha256: self.hash.clone(),
            seed: self.cfg.seed,
            versions: versions(),
            inputs: inputs.iter().map(|p| self.display(p)).collect(),
            outputs,
        }
    }

    /// Run one stage: check that `inputs` exist, build the stage directory in
    /// a staging sibling (marked `running` from the start), mark it
    /// `complete` and swap it in. A failed stage leaves the previous output
    /// untouched.
    pub fn run_stage(
        &self,
        stage: Stage,
        inputs: &[PathBuf],
        fill: impl FnOnce(&Path) -> CliResult<()>,
    ) -> CliResult<()> {
        for p in inputs {
            if !p.exists() {
                let producer = p
                    .strip_prefix(self.out())
                    .ok()
                    .and_then(|r| r.components().next())
                    .and_then(|c| Stage::from_name(&c.as_os_str().to_string_lossy()))
                    .map_or("a stage that provides it (check `inputs`)", Stage::name);
                return Err(CliError::MissingInput {
                    stage: stage.name(),
                    path: p.clone(),
                    producer,
                });
            }
        }
        write_dir_atomic(&self.stage_dir(stage), |dir| -> CliResult<()> {
            write_json(&dir.join(MANIFEST), &self.manifest(stage, Status::Running, inputs, vec![]))?;
            fill(dir)?;
            let mut outputs = Vec::new();
            list_files(dir, dir, &mut outputs)?;
            outputs.retain(|f| f != MANIFEST);
            outputs.sort();
            write_json(&dir.join(MANIFEST), &self.manifest(stage, Status::Complete, inputs, outputs))
        })
    }

    /// Top-level record of a `run`.
    pub fn write_run_manifest(&self, status: Status, stages: &[Stage]) -> CliResult<()> {
        let m = serde_json::json!({
            "status": status,
            "config_sha256": self.hash,
            "seed": self.cfg.seed,
            "versions": versions(),
            "stages": stages.iter().map(|s| s.name()).collect::<Vec<_>>(),
        });
        fs::create_dir_all(self.out())?;
        let mut cfg = serde_json::to_value(&self.cfg)?;
        if let serde_json::Value::Object(map) = &mut cfg {
            map.remove("out");
        }
        write_file_atomic(&self.out().join("config.json"), &pretty(&cfg)?)?;
        write_file_atomic(&self.out().join(MANIFEST), &pretty(&m)?)?;
        Ok(())
    }
}

fn pretty<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, pretty(v)?)?;
    Ok(())
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> CliResult<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("below root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}
