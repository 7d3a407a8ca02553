use std::path::PathBuf;

use caserank::baselines::LogisticParams;
use caserank::metrics::MetricConfig;
use caserank::synth::{generate, SynthConfig};
use caserank::{load_dataset, Dataset, PairConfig, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, effective_grid, ExperimentConfig, ModelEntry, ModelSpec, Protocol};
use crate::error::{HarnessError, Result};
use crate::run::{execute_specs, fold_splits, select_best, with_pool, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Fixed dataset; only the split and model seeds vary.
    Manifest(PathBuf),
    /// Regenerated for every seed, which replaces the config's own seed.
    Synth(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub data: DataSource,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ranksvm: SolverConfig,
    #[serde(default)]
    pub logistic: LogisticParams,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub pairs: PairConfig,
    /// Choose RankSVM's C per outer fold instead of using `ranksvm.C`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select_c: Option<NestedSelection>,
}

/// Inner k-fold sweep over `grid` (default grid when empty), run on each
/// outer fold's training queries only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedSelection {
    pub k: usize,
    #[serde(default)]
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    /// RankSVM's C on each outer fold.
    #[serde(rename = "ranksvm_C")]
    pub ranksvm_c: Vec<f64>,
    pub pairwise_auc: f64,
    pub pointwise_auc: f64,
    /// Pairwise minus pointwise.
    pub auc_delta: f64,
    pub pairwise_ndcg: f64,
    pub pointwise_ndcg: f64,
    pub ndcg_delta: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignCounts {
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
}

impl SignCounts {
    fn from_deltas(deltas: impl Iterator<Item = f64>) -> Self {
        deltas.fold(Self::default(), |mut s, d| {
            if d > 0.0 {
                s.wins += 1;
            } else if d < 0.0 {
                s.losses += 1;
            } else {
                s.ties += 1;
            }
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config_hash: String,
    /// NDCG cutoff used for the NDCG columns.
    pub ndcg_k: usize,
    pub per_seed: Vec<SeedComparison>,
    pub mean_pairwise_auc: f64,
    pub mean_pointwise_auc: f64,
    pub mean_auc_delta: f64,
    pub mean_ndcg_delta: f64,
    /// Signs of the pairwise-minus-pointwise deltas.
    pub auc_signs: SignCounts,
    pub ndcg_signs: SignCounts,
}

const PAIRWISE: &str = "ranksvm";
const POINTWISE: &str = "logistic";

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Trains the pointwise logistic baseline and RankSVM on identical splits
/// for each seed and reports paired deltas (pairwise minus pointwise).
/// AUC is the per-query mean over held-out queries, averaged over folds.
pub fn compare_pointwise_pairwise(config: &CompareConfig) -> Result<CompareSummary> {
    if config.seeds.len() < 2 {
        return Err(HarnessError::Config("comparison needs at least two seeds".into()));
    }
    config.ranksvm.validate()?;
    let ndcg_k = *config
        .metrics
        .ndcg_ks
        .first()
        .ok_or_else(|| HarnessError::Config("no NDCG cutoff configured".into()))?;
    let fixed = match &config.data {
        DataSource::Manifest(path) => Some(load_dataset(path)?),
        DataSource::Synth(_) => None,
    };

    let per_seed = with_pool(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| compare_seed(config, fixed.as_ref(), seed, ndcg_k))
            .collect::<Result<Vec<_>>>()
    })??;

    Ok(CompareSummary {
        config_hash: config_hash(config),
        ndcg_k,
        mean_pairwise_auc: mean(per_seed.iter().map(|s| s.pairwise_auc)),
        mean_pointwise_auc: mean(per_seed.iter().map(|s| s.pointwise_auc)),
        mean_auc_delta: mean(per_seed.iter().map(|s| s.auc_delta)),
        mean_ndcg_delta: mean(per_seed.iter().map(|s| s.ndcg_delta)),
        auc_signs: SignCounts::from_deltas(per_seed.iter().map(|s| s.auc_delta)),
        ndcg_signs: SignCounts::from_deltas(per_seed.iter().map(|s| s.ndcg_delta)),
        per_seed,
    })
}

/// RankSVM's C for one outer fold: fixed, or chosen on the training queries
/// alone by an inner k-fold sweep with the sweep's NDCG@10 rule.
fn choose_c(config: &CompareConfig, dataset: &Dataset, train: &[String], seed: u64) -> Result<f64> {
    let Some(sel) = &config.select_c else {
        return Ok(config.ranksvm.c);
    };
    let groups = train
        .iter()
        .filter_map(|q| dataset.group(q).cloned())
        .collect();
    let inner = Dataset::new(groups, dataset.dim(), dataset.grade_max(), dataset.provenance())?;
    let experiment = ExperimentConfig {
        metrics: config.metrics.clone(),
        pairs: config.pairs,
        ..ExperimentConfig::new(
            "",
            Protocol::Kfold { k: sel.k, seed },
            vec![ModelEntry::named(PAIRWISE, ModelSpec::Ranksvm(config.ranksvm.clone()))],
        )
    };
    let specs: Vec<_> = effective_grid(&sel.grid)
        .into_iter()
        .map(|c| {
            let spec = ModelSpec::Ranksvm(SolverConfig {
                c,
                ..config.ranksvm.clone()
            });
            (&experiment.models[0], spec)
        })
        .collect();
    let sweep = select_best(execute_specs(&inner, &experiment, &specs)?, &experiment);
    sweep
        .best
        .get(PAIRWISE)
        .copied()
        .ok_or_else(|| HarnessError::Config("C selection failed on every grid value".into()))
}

fn compare_seed(config: &CompareConfig, fixed: Option<&Dataset>, seed: u64, ndcg_k: usize) -> Result<SeedComparison> {
    let generated;
    let dataset = match (&config.data, fixed) {
        (_, Some(ds)) => ds,
        (DataSource::Synth(synth), None) => {
            generated = generate(&SynthConfig {
                seed,
                ..synth.clone()
            })?;
            &generated
        }
        (DataSource::Manifest(_), None) => unreachable!("manifest datasets are loaded up front"),
    };

    let mut records = Vec::new();
    let mut chosen = Vec::new();
    for split in fold_splits(dataset, &config.protocol.with_seed(seed))? {
        let c = choose_c(config, dataset, &split.train, seed)?;
        chosen.push(c);
        let experiment = ExperimentConfig {
            metrics: config.metrics.clone(),
            pairs: config.pairs,
            ..ExperimentConfig::new(
                "",
                Protocol::Split {
                    train: split.train,
                    test: split.test,
                },
                vec![
                    ModelEntry::named(
                        PAIRWISE,
                        ModelSpec::Ranksvm(SolverConfig {
                            c,
                            ..config.ranksvm.clone()
                        }),
                    ),
                    ModelEntry::named(
                        POINTWISE,
                        ModelSpec::Logistic(LogisticParams {
                            seed,
                            ..config.logistic.clone()
                        }),
                    ),
                ],
            )
        };
        experiment.validate()?;
        let specs: Vec<_> = experiment.models.iter().map(|m| (m, m.spec.clone())).collect();
        for mut r in execute_specs(dataset, &experiment, &specs)?.records {
            r.fold = split.fold;
            records.push(r);
        }
    }

    let mean_of = |model: &str, value: &dyn Fn(&RunRecord) -> Option<f64>| -> Result<f64> {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.model == model).collect();
        if let Some(r) = runs.iter().find(|r| !r.is_ok()) {
            return Err(HarnessError::Config(format!(
                "seed {seed}: {model} fold {} failed: {:?}",
                r.fold, r.status
            )));
        }
        let vals: Vec<f64> = runs.iter().filter_map(|r| value(r)).collect();
        if vals.is_empty() {
            return Err(HarnessError::Config(format!(
                "seed {seed}: {model} metric undefined on every fold"
            )));
        }
        Ok(mean(vals.into_iter()))
    };
    let auc = |r: &RunRecord| r.auc();
    let ndcg = |r: &RunRecord| r.ndcg(ndcg_k);
    let (pairwise_auc, pointwise_auc) = (mean_of(PAIRWISE, &auc)?, mean_of(POINTWISE, &auc)?);
    let (pairwise_ndcg, pointwise_ndcg) = (mean_of(PAIRWISE, &ndcg)?, mean_of(POINTWISE, &ndcg)?);
    Ok(SeedComparison {
        seed,
        ranksvm_c: chosen,
        pairwise_auc,
        pointwise_auc,
        auc_delta: pairwise_auc - pointwise_auc,
        pairwise_ndcg,
        pointwise_ndcg,
        ndcg_delta: pairwise_ndcg - pointwise_ndcg,
    })
}
