//! Experiment configuration: one JSON document per benchmark.

use std::path::{Path, PathBuf};

use rambo_core::baselines::Strategy;
use rambo_core::config::{RamboConfig, Toggles};
use rambo_core::datasets::{self, Dataset, FeatureMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{BenchError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the data comes from. Synthetic generators take their own seed so the
/// dataset stays fixed while run seeds vary the split and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
    },
    ImbalancedBlobs {
        counts: Vec<usize>,
        dim: usize,
        spread: f64,
        seed: u64,
    },
    Moons {
        points: usize,
        noise: f64,
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        feature_map: Option<FeatureMap>,
    },
}

impl DatasetSpec {
    /// Imbalanced 10-class blobs with one rare class.
    pub fn imbalanced_default() -> Self {
        let mut counts = vec![300; 9];
        counts.push(30);
        DatasetSpec::ImbalancedBlobs {
            counts,
            dim: 10,
            spread: 2.5,
            seed: 7,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        let ds = match self {
            DatasetSpec::Blobs {
                classes,
                per_class,
                dim,
                spread,
                seed,
            } => datasets::gen_gaussian_blobs(*classes, *per_class, *dim, *spread, *seed)?,
            DatasetSpec::ImbalancedBlobs {
                counts,
                dim,
                spread,
                seed,
            } => datasets::gen_imbalanced_blobs(counts, *dim, *spread, *seed)?,
            DatasetSpec::Moons {
                points,
                noise,
                seed,
            } => datasets::gen_two_moons(*points, *noise, *seed)?,
            DatasetSpec::Idx {
                images,
                labels,
                feature_map,
            } => {
                let ds = datasets::load_idx(images, labels)?;
                match feature_map {
                    Some(kind) => datasets::feature_map(&ds, *kind)?,
                    None => ds,
                }
            }
        };
        Ok(ds)
    }
}

/// One selection method of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rambo,
    Random,
    Margin,
    Coreset,
    BadgeLite,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Rambo,
        Method::Random,
        Method::Margin,
        Method::Coreset,
        Method::BadgeLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rambo => "rambo",
            other => other.strategy().expect("baseline").name(),
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            Method::Rambo => None,
            Method::Random => Some(Strategy::Random),
            Method::Margin => Some(Strategy::Margin),
            Method::Coreset => Some(Strategy::Coreset),
            Method::BadgeLite => Some(Strategy::BadgeLite),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown method {s:?}")))
    }
}

/// Whether stage timings go into the CSV. `Off` writes zeros so that reruns
/// are byte-identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Wall,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetSpec,
    pub val_size: usize,
    pub test_size: usize,
    /// Method settings. Its `budget` field is replaced by each entry of
    /// `budgets`.
    pub rambo: RamboConfig,
    pub budgets: Vec<usize>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Values of `sweep-lambda-ot`.
    pub lambda_ot_grid: Vec<f64>,
    /// Values of `sweep-k`.
    pub k_grid: Vec<usize>,
    pub output_dir: PathBuf,
    pub timing: Timing,
    /// Worker threads; `0` means one per available core.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSpec::imbalanced_default(),
            val_size: 300,
            test_size: 500,
            rambo: RamboConfig::default(),
            budgets: vec![500],
            methods: Method::ALL.to_vec(),
            seeds: (0..10).collect(),
            lambda_ot_grid: vec![0.0, 0.1, 1.0, 10.0],
            k_grid: vec![100, 200, 300],
            output_dir: PathBuf::from("results"),
            timing: Timing::Wall,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(BenchError::Schema {
                    found: v,
                    expected: SCHEMA_VERSION,
                })
            }
            None => return Err(BenchError::Config("missing schema_version".into())),
        }
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The method settings for one budget.
    pub fn rambo_for(&self, budget: usize) -> RamboConfig {
        RamboConfig {
            budget,
            ..self.rambo.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(BenchError::Schema {
                found: self.schema_version as u64,
                expected: SCHEMA_VERSION,
            });
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("seeds must not be empty".into()));
        }
        if self.budgets.is_empty() {
            return Err(BenchError::Config("budgets must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(BenchError::Config("methods must not be empty".into()));
        }
        if self.val_size == 0 || self.test_size == 0 {
            return Err(BenchError::Config(
                "val_size and test_size must be positive".into(),
            ));
        }
        for &budget in &self.budgets {
            self.rambo_for(budget).validate()?;
            if budget % self.rambo.b != 0 {
                log::warn!(
                    "budget {budget} is not a multiple of b = {}; the last batch has {} points",
                    self.rambo.b,
                    budget % self.rambo.b
                );
            }
        }
        Ok(())
    }

    /// Short hex digest of the canonical JSON form, used to tag result files.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The eight toggle combinations, full method first.
    pub fn ablation_toggles(&self) -> Vec<Toggles> {
        Toggles::grid()
    }
}
