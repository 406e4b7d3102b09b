use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, Domain, ShiftSpec};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::trainer::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Where the source/target pair comes from. Exactly one variant is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(ShiftSpec),
    Files(FilePair),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilePair {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Number of classes; inferred from the source labels when absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

/// Network layout without the data-dependent input and class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelArch {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub feature_relu: bool,
}

impl Default for ModelArch {
    fn default() -> Self {
        Self {
            hidden: ModelSpec::DEFAULT_HIDDEN.to_vec(),
            feature_dim: ModelSpec::DEFAULT_FEATURE_DIM,
            feature_relu: false,
        }
    }
}

/// A complete experiment description, read from JSON.
///
/// ```json
/// {
///   "schema_version": 1,
///   "data": { "synthetic": { "generator": "blobs", "classes": 3, "samples_per_class": 200,
///                            "rotation_deg": 30, "translation": [1, 0] } },
///   "model": { "hidden": [64, 32], "feature_dim": 16 },
///   "train": { "epochs": 30, "batch_size": 64 },
///   "seeds": [0, 1, 2]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub data: DataSource,
    #[serde(default)]
    pub model: ModelArch,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Start φ from this checkpoint; the classifier and centers then train at
    /// the raised rate.
    #[serde(default)]
    pub init_checkpoint: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl ExperimentConfig {
    pub fn synthetic(spec: ShiftSpec, train: TrainConfig, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            data: DataSource::Synthetic(spec),
            model: ModelArch::default(),
            train,
            seeds,
            output_dir: None,
            init_checkpoint: None,
        }
    }

    /// Parses and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Files(f) = &mut cfg.data {
            resolve(&mut f.source);
            resolve(&mut f.target);
        }
        if let Some(p) = &mut cfg.output_dir {
            resolve(p);
        }
        if let Some(p) = &mut cfg.init_checkpoint {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate()?;
        }
        self.train.validate()?;
        if self.model.feature_dim == 0 || self.model.hidden.contains(&0) {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// Source and target for one trial. Synthetic data is regenerated with
    /// generator seed `spec.seed + trial_seed`; files are the same every trial.
    pub fn datasets(&self, trial_seed: u64) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSource::Synthetic(spec) => ShiftSpec {
                seed: spec.seed.wrapping_add(trial_seed),
                ..spec.clone()
            }
            .generate(),
            DataSource::Files(f) => {
                let source = data::load_csv(&f.source, Domain::Source, f.classes)?;
                let target = data::load_csv(&f.target, Domain::Target, f.classes)?;
                if source.dim() != target.dim() {
                    return Err(Error::Config(format!(
                        "source has {} features but target has {}",
                        source.dim(),
                        target.dim()
                    )));
                }
                Ok((source, target))
            }
        }
    }

    pub fn classes(&self, source: &Dataset) -> Result<usize> {
        let k = match &self.data {
            DataSource::Synthetic(s) => Some(s.classes),
            DataSource::Files(f) => f.classes.or_else(|| source.num_classes()),
        };
        k.ok_or_else(|| Error::MissingLabels("source labels are needed to infer the class count".into()))
    }

    pub fn model_spec(&self, source: &Dataset) -> Result<ModelSpec> {
        let spec = ModelSpec {
            input_dim: source.dim(),
            hidden: self.model.hidden.clone(),
            feature_dim: self.model.feature_dim,
            classes: self.classes(source)?,
            feature_relu: self.model.feature_relu,
        };
        spec.validate()?;
        Ok(spec)
    }
}
