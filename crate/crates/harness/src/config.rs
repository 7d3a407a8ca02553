use std::collections::HashSet;
use std::path::{Path, PathBuf};

use caserank::baselines::{LogisticParams, RankNetParams};
use caserank::metrics::MetricConfig;
use caserank::{PairConfig, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// How queries are divided between training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Protocol {
    /// Each fold is held out once; the others train.
    Kfold { k: usize, seed: u64 },
    /// One seeded split with `round(train_frac * n)` training queries.
    Holdout { train_frac: f64, seed: u64 },
    /// Explicit query lists.
    Split { train: Vec<String>, test: Vec<String> },
}

impl Protocol {
    pub fn seed(&self) -> u64 {
        match self {
            Self::Kfold { seed, .. } | Self::Holdout { seed, .. } => *seed,
            Self::Split { .. } => 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self.clone() {
            Self::Kfold { k, .. } => Self::Kfold { k, seed },
            Self::Holdout { train_frac, .. } => Self::Holdout { train_frac, seed },
            split @ Self::Split { .. } => split,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Kfold { k, .. } if *k < 2 => {
                Err(HarnessError::Config(format!("kfold needs k >= 2, got {k}")))
            }
            Self::Holdout { train_frac, .. } if !(*train_frac > 0.0 && *train_frac < 1.0) => Err(
                HarnessError::Config(format!("train_frac {train_frac} outside (0, 1)")),
            ),
            Self::Split { train, test } => {
                if train.is_empty() || test.is_empty() {
                    return Err(HarnessError::Config("explicit split needs both sides".into()));
                }
                let train: HashSet<&String> = train.iter().collect();
                if let Some(q) = test.iter().find(|q| train.contains(q)) {
                    return Err(HarnessError::Config(format!("query {q} on both sides of split")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Trainer and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Ranksvm(SolverConfig),
    Ranknet(RankNetParams),
    Logistic(LogisticParams),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Ranksvm(_) => "ranksvm",
            Self::Ranknet(_) => "ranknet",
            Self::Logistic(_) => "logistic",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::Ranksvm(_) => 0,
            Self::Ranknet(p) => p.seed,
            Self::Logistic(p) => p.seed,
        }
    }

    pub fn c(&self) -> Option<f64> {
        match self {
            Self::Ranksvm(cfg) => Some(cfg.c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    /// Run label; defaults to the trainer kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

impl ModelEntry {
    pub fn new(spec: ModelSpec) -> Self {
        Self { name: None, spec }
    }

    pub fn named(name: impl Into<String>, spec: ModelSpec) -> Self {
        Self {
            name: Some(name.into()),
            spec,
        }
    }

    pub fn id(&self) -> &str {
        self.name.as_deref().unwrap_or_else(|| self.spec.kind())
    }
}

/// Extends every query's labeled pool with corpus negatives before splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpoolSpec {
    pub corpus: PathBuf,
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub protocol: Protocol,
    pub models: Vec<ModelEntry>,
    /// Grid for `sweep`; the default grid when empty.
    #[serde(default)]
    pub c_grid: Vec<f64>,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub pairs: PairConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subpool: Option<SubpoolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<PathBuf>, protocol: Protocol, models: Vec<ModelEntry>) -> Self {
        Self {
            dataset: dataset.into(),
            protocol,
            models,
            c_grid: Vec::new(),
            metrics: MetricConfig::default(),
            pairs: PairConfig::default(),
            subpool: None,
            output_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let mut config: Self = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if config.dataset.is_relative() {
            config.dataset = base.join(&config.dataset);
        }
        if let Some(sp) = &mut config.subpool {
            if sp.corpus.is_relative() {
                sp.corpus = base.join(&sp.corpus);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(HarnessError::Config("model list is empty".into()));
        }
        let mut ids = HashSet::new();
        for m in &self.models {
            if !ids.insert(m.id()) {
                return Err(HarnessError::Config(format!(
                    "duplicate model id {:?}; give entries distinct names",
                    m.id()
                )));
            }
            if let ModelSpec::Ranksvm(cfg) = &m.spec {
                cfg.validate()?;
            }
        }
        if self.c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(HarnessError::Config("C grid values must be positive".into()));
        }
        self.protocol.validate()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

/// The grid to sweep: explicit values sorted and de-duplicated, else the default grid.
pub fn effective_grid(grid: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = if grid.is_empty() {
        caserank::ranksvm::DEFAULT_C_GRID.to_vec()
    } else {
        grid.to_vec()
    };
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}
