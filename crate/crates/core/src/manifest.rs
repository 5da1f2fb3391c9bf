//! `key = value` run manifests.
//!
//! Paths are relative to the manifest's directory. Every key is known in
//! advance; anything else is rejected so typos never silently fall back to
//! defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{load_measurements, load_registry, DataError, MeasurementRecord};
use crate::empirical::{EmpiricalModelId, EnvironmentClass};
use crate::evaluation::EvalConfig;
use crate::geodesy::GeoPoint;
use crate::pipeline::Environment;
use crate::raster::{read_ascii_grid, RasterError, Terrain, Units};
use crate::reference::ReferenceConfig;

/// Overrides the manifest seed when set.
pub const SEED_ENV_VAR: &str = "PATHLOSS_SEED";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("{key} = {value:?}: {message}")]
    InvalidValue { key: String, value: String, message: String },
    #[error("missing required key {0}")]
    MissingKey(String),
    #[error("{key}: file {path} does not exist")]
    MissingFile { key: String, path: PathBuf },
    #[error("manifest declares no environments")]
    NoEnvironments,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub dsm: PathBuf,
    pub dhm: PathBuf,
    pub units: Units,
    pub origin: GeoPoint,
    pub class: EnvironmentClass,
    /// Stations deployed here; by default those named in its measurements.
    pub bs_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub measurements: PathBuf,
    pub registry: PathBuf,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub envs: Vec<EnvSpec>,
    pub reference: ReferenceConfig,
    pub sim_spacing: f64,
    pub sim_margin: f64,
    pub sim_model: EmpiricalModelId,
    pub eval: EvalConfig,
    /// SHA-256 of the manifest text.
    pub config_hash: String,
}

const GLOBAL_KEYS: &[&str] = &[
    "measurements",
    "registry",
    "seed",
    "output",
    "rsrp_ref_dbm",
    "n_min",
    "vbw_deg",
    "sim.spacing",
    "sim.margin",
    "sim.model",
    "train.n_trees",
    "train.max_depth",
    "train.learning_rate",
    "train.min_samples_leaf",
    "train.subsample",
    "ensemble.metric",
    "ensemble.step",
    "ensemble.val_fraction",
    "eval.fraction",
    "smote.k",
    "smote.multiplier",
    "model.spm.k1",
    "model.spm.k2",
    "model.spm.k3",
    "model.spm.k4",
    "model.spm.k5",
    "model.spm.k6",
    "model.spm.k_clutter",
    "model.sui_terrain",
    "model.uma_street_width",
    "model.uma_building_height",
];

const ENV_FIELDS: &[&str] = &["dsm", "dhm", "units", "origin_lat", "origin_lon", "class", "bs_ids"];

struct Values {
    map: BTreeMap<String, String>,
}

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ManifestError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ManifestError::InvalidValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    fn set<T: std::str::FromStr>(&self, key: &str, target: &mut T) -> Result<(), ManifestError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse(key)? {
            *target = v;
        }
        Ok(())
    }

    fn require(&self, key: &str) -> Result<&str, ManifestError> {
        self.raw(key).ok_or_else(|| ManifestError::MissingKey(key.to_string()))
    }
}

fn existing(base: &Path, key: &str, value: &str) -> Result<PathBuf, ManifestError> {
    let path = base.join(value);
    if !path.is_file() {
        return Err(ManifestError::MissingFile {
            key: key.to_string(),
            path,
        });
    }
    Ok(path)
}

fn is_known(key: &str) -> bool {
    if GLOBAL_KEYS.contains(&key) {
        return true;
    }
    match key.strip_prefix("env.").and_then(|r| r.rsplit_once('.')) {
        Some((name, field)) => !name.is_empty() && !name.contains('.') && ENV_FIELDS.contains(&field),
        None => false,
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ManifestError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !is_known(&k) {
                return Err(ManifestError::UnknownKey { line: i + 1, key: k });
            }
            if map.insert(k.clone(), v).is_some() {
                return Err(ManifestError::DuplicateKey { line: i + 1, key: k });
            }
        }
        let values = Values { map };

        let mut reference = ReferenceConfig::default();
        values.set("rsrp_ref_dbm", &mut reference.threshold_dbm)?;
        values.set("n_min", &mut reference.n_min)?;
        reference.vbw_deg = values.parse("vbw_deg")?;
        let p = &mut reference.params;
        values.set("model.spm.k1", &mut p.spm.k1)?;
        values.set("model.spm.k2", &mut p.spm.k2)?;
        values.set("model.spm.k3", &mut p.spm.k3)?;
        values.set("model.spm.k4", &mut p.spm.k4)?;
        values.set("model.spm.k5", &mut p.spm.k5)?;
        values.set("model.spm.k6", &mut p.spm.k6)?;
        values.set("model.spm.k_clutter", &mut p.spm.k_clutter)?;
        p.sui_terrain = values.parse("model.sui_terrain")?;
        values.set("model.uma_street_width", &mut p.uma_street_width)?;
        values.set("model.uma_building_height", &mut p.uma_building_height)?;

        let mut eval = EvalConfig::default();
        let t = &mut eval.ensemble.train;
        values.set("train.n_trees", &mut t.n_trees)?;
        values.set("train.max_depth", &mut t.max_depth)?;
        values.set("train.learning_rate", &mut t.learning_rate)?;
        values.set("train.min_samples_leaf", &mut t.min_samples_leaf)?;
        values.set("train.subsample", &mut t.subsample)?;
        t.validate().map_err(|e| ManifestError::InvalidValue {
            key: "train.*".into(),
            value: String::new(),
            message: e.to_string(),
        })?;
        values.set("ensemble.metric", &mut eval.ensemble.metric)?;
        values.set("ensemble.step", &mut eval.ensemble.step)?;
        values.set("ensemble.val_fraction", &mut eval.ensemble.val_fraction)?;
        values.set("eval.fraction", &mut eval.fraction)?;
        values.set("smote.k", &mut eval.smote_k)?;
        values.set("smote.multiplier", &mut eval.smote_multiplier)?;

        let mut sim_spacing = 25.0;
        let mut sim_margin = 20.0;
        let mut sim_model = EmpiricalModelId::Fspl;
        values.set("sim.spacing", &mut sim_spacing)?;
        values.set("sim.margin", &mut sim_margin)?;
        values.set("sim.model", &mut sim_model)?;
        if !(sim_spacing > 0.0) {
            return Err(ManifestError::InvalidValue {
                key: "sim.spacing".into(),
                value: sim_spacing.to_string(),
                message: "must be positive".into(),
            });
        }

        let names: BTreeSet<String> = values
            .map
            .keys()
            .filter_map(|k| k.strip_prefix("env.").and_then(|r| r.rsplit_once('.')).map(|(n, _)| n.to_string()))
            .collect();
        if names.is_empty() {
            return Err(ManifestError::NoEnvironments);
        }
        let mut envs = Vec::new();
        for name in names {
            let key = |f: &str| format!("env.{name}.{f}");
            let lat: f64 = values.parse(&key("origin_lat"))?.ok_or_else(|| ManifestError::MissingKey(key("origin_lat")))?;
            let lon: f64 = values.parse(&key("origin_lon"))?.ok_or_else(|| ManifestError::MissingKey(key("origin_lon")))?;
            let origin = GeoPoint::new(lat, lon).map_err(|e| ManifestError::InvalidValue {
                key: key("origin_lat"),
                value: format!("{lat}, {lon}"),
                message: e.to_string(),
            })?;
            envs.push(EnvSpec {
                dsm: existing(base, &key("dsm"), values.require(&key("dsm"))?)?,
                dhm: existing(base, &key("dhm"), values.require(&key("dhm"))?)?,
                units: values.parse(&key("units"))?.unwrap_or_default(),
                origin,
                class: values.parse(&key("class"))?.unwrap_or_default(),
                bs_ids: values
                    .raw(&key("bs_ids"))
                    .map(|v| v.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
                name,
            });
        }

        Ok(Self {
            measurements: existing(base, "measurements", values.require("measurements")?)?,
            registry: existing(base, "registry", values.require("registry")?)?,
            seed: values.parse("seed")?.unwrap_or(0),
            output: values.raw("output").map(|o| base.join(o)),
            envs,
            reference,
            sim_spacing,
            sim_margin,
            sim_model,
            eval,
            config_hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    /// Applies [`SEED_ENV_VAR`] when it is set.
    pub fn with_env_seed(mut self) -> Result<Self, ManifestError> {
        if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            self.seed = v.trim().parse().map_err(|_| ManifestError::InvalidValue {
                key: SEED_ENV_VAR.into(),
                value: v.clone(),
                message: "expected an unsigned integer".into(),
            })?;
        }
        Ok(self)
    }

    pub fn env(&self, name: &str) -> Option<&EnvSpec> {
        self.envs.iter().find(|e| e.name == name)
    }

    /// Reads rasters, the station registry and all measurements.
    pub fn load_inputs(&self) -> Result<(Vec<Environment>, Vec<MeasurementRecord>), ManifestError> {
        let records = load_measurements(&self.measurements)?;
        let stations = load_registry(&self.registry)?;
        let mut envs = Vec::new();
        for entry in &self.envs {
            let dsm = read_ascii_grid(&entry.dsm, entry.units)?;
            let dhm = read_ascii_grid(&entry.dhm, entry.units)?;
            let ids: BTreeSet<String> = match &entry.bs_ids {
                Some(ids) => ids.iter().cloned().collect(),
                None => records.iter().filter(|r| r.env == entry.name).map(|r| r.bs_id.clone()).collect(),
            };
            envs.push(Environment {
                name: entry.name.clone(),
                class: entry.class,
                terrain: Terrain::new(dsm, dhm, entry.origin),
                stations: stations.iter().filter(|s| ids.contains(&s.id)).cloned().collect(),
            });
        }
        Ok((envs, records))
    }
}
