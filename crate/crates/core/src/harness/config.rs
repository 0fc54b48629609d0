//! TOML configuration files.
//!
//! ```toml
//! [experiment]
//! engines = ["BinarySDM", "ContinuousSDM"]
//! n = 64
//! m = 1024
//! d = [5, 11]
//! magnitudes = [0, 4, 8]
//!
//! [dataset]
//! source = "random-uniform"
//!
//! [projection]
//! epochs = 10
//!
//! [evaluation]
//! magnitudes = [0, 100, 200]
//! ```
//!
//! Every key is optional; command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::projection::{EvaluationConfig, ProjectionConfig};
use super::{DatasetSource, ExperimentSpec};
use crate::engines::{EngineKind, DEFAULT_MAX_ITERS};
use crate::error::{Result, SdmError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentSection,
    pub dataset: DatasetSection,
    pub projection: ProjectionConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub engines: Vec<EngineKind>,
    pub n: usize,
    pub r: Option<f64>,
    pub m: usize,
    pub d: Vec<usize>,
    pub magnitudes: Vec<usize>,
    pub dataset_replicates: usize,
    pub perturbation_replicates: usize,
    pub queries: Option<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub closest_guard: Option<bool>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            engines: EngineKind::ALL.to_vec(),
            n: 64,
            r: None,
            m: 1024,
            d: vec![5, 9, 11, 15, 19, 27],
            magnitudes: (0..=12).collect(),
            dataset_replicates: 3,
            perturbation_replicates: 5,
            queries: None,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            closest_guard: None,
            output: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// `random-uniform`, `idx`, `raw-grayscale` or `csv`.
    pub source: String,
    pub path: Option<PathBuf>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Use only the first `limit` rows of a loaded dataset.
    pub limit: Option<usize>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            source: "random-uniform".into(),
            path: None,
            height: 32,
            width: 32,
            channels: 3,
            limit: None,
        }
    }
}

impl DatasetSection {
    pub fn to_source(&self) -> Result<DatasetSource> {
        let path = || {
            self.path
                .clone()
                .ok_or_else(|| SdmError::Config(format!("dataset source '{}' needs a path", self.source)))
        };
        Ok(match self.source.as_str() {
            "random-uniform" => DatasetSource::RandomUniform,
            "idx" => DatasetSource::Idx { path: path()? },
            "raw-grayscale" => DatasetSource::RawGrayscale {
                path: path()?,
                height: self.height,
                width: self.width,
                channels: self.channels,
            },
            "csv" => DatasetSource::Csv { path: path()? },
            other => return Err(SdmError::Config(format!("unknown dataset source '{other}'"))),
        })
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SdmError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::parse(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SdmError::Config(e.to_string()))
    }

    pub fn experiment_spec(&self) -> Result<ExperimentSpec> {
        let e = &self.experiment;
        let spec = ExperimentSpec {
            engines: e.engines.clone(),
            n: e.n,
            r: e.r,
            m: e.m,
            ds: e.d.clone(),
            magnitudes: e.magnitudes.clone(),
            dataset: self.dataset.to_source()?,
            dataset_replicates: e.dataset_replicates,
            perturbation_replicates: e.perturbation_replicates,
            queries: e.queries,
            base_seed: e.seed,
            max_iters: e.max_iters,
            closest_guard: e.closest_guard,
            output: e.output.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}
