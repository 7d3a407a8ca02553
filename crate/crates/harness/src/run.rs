use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use caserank::baselines::{pointwise_examples, train_logistic, train_ranknet};
use caserank::metrics::{evaluate_query, roc_auc, MetricConfig, MetricReport, RocCurve};
use caserank::pairgen::generate_pairs_for;
use caserank::{
    binarize_labels, build_subpool, holdout_split, kfold_split, load_dataset, ranksvm, Dataset,
    PairConfig, QueryGroup, Scorer,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{effective_grid, ExperimentConfig, ModelEntry, ModelSpec, Protocol};
use crate::error::{HarnessError, Result};

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "CASERANK_WORKERS";

/// Sweeps select by held-out NDCG at this cutoff.
pub const SELECTION_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Train/test query lists per fold, each side sorted by query id.
pub fn fold_splits(dataset: &Dataset, protocol: &Protocol) -> Result<Vec<FoldSplit>> {
    protocol.validate()?;
    let ids = dataset.query_ids();
    let sorted = |mut v: Vec<String>| {
        v.sort();
        v
    };
    match protocol {
        Protocol::Kfold { k, seed } => {
            let folds = kfold_split(&ids, *k, *seed)?.folds();
            Ok((0..*k)
                .map(|f| FoldSplit {
                    fold: f,
                    train: sorted(
                        folds
                            .iter()
                            .enumerate()
                            .filter(|&(g, _)| g != f)
                            .flat_map(|(_, q)| q.iter().cloned())
                            .collect(),
                    ),
                    test: folds[f].clone(),
                })
                .collect())
        }
        Protocol::Holdout { train_frac, seed } => {
            let (train, test) = holdout_split(&ids, *train_frac, *seed)?;
            Ok(vec![FoldSplit {
                fold: 0,
                train: sorted(train),
                test: sorted(test),
            }])
        }
        Protocol::Split { train, test } => {
            for q in train.iter().chain(test) {
                if dataset.group(q).is_none() {
                    return Err(HarnessError::Config(format!("split names unknown query {q}")));
                }
            }
            Ok(vec![FoldSplit {
                fold: 0,
                train: sorted(train.clone()),
                test: sorted(test.clone()),
            }])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub query_id: String,
    pub cand_id: String,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub kind: String,
    pub fold: usize,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub seed: u64,
    pub train_queries: Vec<String>,
    pub test_queries: Vec<String>,
    /// SHA-256 over the training groups; depends on nothing else.
    pub train_hash: String,
    #[serde(flatten)]
    pub status: RunStatus,
    /// RankSVM only: whether the cutting plane met its tolerance.
    pub converged: Option<bool>,
    pub report: Option<MetricReport>,
    /// AUC of the ROC curve pooled over all test candidates.
    pub pooled_auc: Option<f64>,
    pub wall_time_secs: f64,
    #[serde(skip)]
    pub roc: Option<RocCurve>,
    #[serde(skip)]
    pub scores: Vec<ScoreRow>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// File-name stem unique within one experiment.
    pub fn stem(&self) -> String {
        match self.c {
            Some(c) => format!("{}_fold{}_C{c}", self.model, self.fold),
            None => format!("{}_fold{}", self.model, self.fold),
        }
    }

    pub fn auc(&self) -> Option<f64> {
        self.report.as_ref()?.aggregate.auc
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.report.as_ref()?.ndcg(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub metrics: MetricConfig,
    /// Canonical order: model, fold, C.
    pub records: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn failures(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(|r| !r.is_ok())
    }

    /// Mean of a per-run value over the successful folds of `(model, C)`.
    pub fn mean_over_folds(
        &self,
        model: &str,
        c: Option<f64>,
        value: impl Fn(&RunRecord) -> Option<f64>,
    ) -> Option<f64> {
        let vals: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.model == model && r.c == c)
            .filter_map(value)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Whether any RankSVM run stopped before reaching its tolerance.
    pub fn any_nonconverged(&self) -> bool {
        self.records.iter().any(|r| r.converged == Some(false))
    }
}

/// Digest of the training inputs. Test queries never enter it, so changing
/// their content cannot change the hash.
pub fn training_hash(groups: &[&QueryGroup]) -> String {
    let mut h = Sha256::new();
    for g in groups {
        h.update(g.query_id().as_bytes());
        h.update([0]);
        for c in g.candidates() {
            h.update(c.cand_id.as_bytes());
            h.update([0]);
            h.update(c.relevance.to_le_bytes());
            for v in &c.features {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

struct Job<'a> {
    entry: &'a ModelEntry,
    spec: ModelSpec,
    split: &'a FoldSplit,
}

fn train_scorer(
    spec: &ModelSpec,
    train: &[&QueryGroup],
    pairs: &PairConfig,
) -> caserank::Result<(Box<dyn Scorer + Send + Sync>, Option<bool>)> {
    Ok(match spec {
        ModelSpec::Ranksvm(cfg) => {
            let set = generate_pairs_for(train.iter().copied(), pairs)?;
            let model = ranksvm::train(&set, cfg)?;
            let converged = model.meta.converged;
            (Box::new(model), Some(converged))
        }
        ModelSpec::Ranknet(params) => {
            let set = generate_pairs_for(train.iter().copied(), pairs)?;
            (Box::new(train_ranknet(&set, params)?), None)
        }
        ModelSpec::Logistic(params) => {
            let (xs, ys) = pointwise_examples(train.iter().copied(), pairs.threshold);
            (Box::new(train_logistic(&xs, &ys, params)?), None)
        }
    })
}

type Evaluation = (MetricReport, Option<RocCurve>, Vec<ScoreRow>);

fn evaluate(model: &dyn Scorer, test: &[&QueryGroup], metrics: &MetricConfig) -> caserank::Result<Evaluation> {
    let mut per_query = BTreeMap::new();
    let mut rows = Vec::new();
    for g in test {
        let scores = model.score_group(g)?;
        per_query.insert(g.query_id().to_string(), evaluate_query(g, &scores, metrics)?);
        let labels = binarize_labels(g, metrics.threshold);
        for ((c, label), score) in g.candidates().iter().zip(labels).zip(scores) {
            rows.push(ScoreRow {
                query_id: g.query_id().to_string(),
                cand_id: c.cand_id.clone(),
                label,
                score,
            });
        }
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = rows.iter().map(|r| r.label).collect();
    let roc = match roc_auc(&scores, &labels) {
        Ok(curve) => Some(curve),
        Err(caserank::Error::UndefinedAuc) => None,
        Err(e) => return Err(e),
    };
    Ok((MetricReport::from_queries(metrics.clone(), per_query), roc, rows))
}

fn run_job(dataset: &Dataset, config: &ExperimentConfig, job: &Job) -> Result<RunRecord> {
    let split = job.split;
    let test_ids: HashSet<&str> = split.test.iter().map(String::as_str).collect();
    if let Some(q) = split.train.iter().find(|q| test_ids.contains(q.as_str())) {
        return Err(HarnessError::Leakage {
            model: job.entry.id().to_string(),
            fold: split.fold,
            query_id: q.clone(),
        });
    }
    let pick = |ids: &[String]| -> Vec<&QueryGroup> {
        ids.iter().filter_map(|q| dataset.group(q)).collect()
    };
    let train = pick(&split.train);
    let test = pick(&split.test);

    let start = Instant::now();
    let outcome = train_scorer(&job.spec, &train, &config.pairs).and_then(|(model, converged)| {
        evaluate(model.as_ref(), &test, &config.metrics).map(|ev| (ev, converged))
    });
    let wall_time_secs = start.elapsed().as_secs_f64();

    let mut record = RunRecord {
        model: job.entry.id().to_string(),
        kind: job.spec.kind().to_string(),
        fold: split.fold,
        c: job.spec.c(),
        seed: job.spec.seed(),
        train_queries: split.train.clone(),
        test_queries: split.test.clone(),
        train_hash: training_hash(&train),
        status: RunStatus::Ok,
        converged: None,
        report: None,
        pooled_auc: None,
        wall_time_secs,
        roc: None,
        scores: Vec::new(),
    };
    match outcome {
        Ok(((report, roc, scores), converged)) => {
            record.converged = converged;
            record.report = Some(report);
            record.pooled_auc = roc.as_ref().map(|r| r.auc);
            record.roc = roc;
            record.scores = scores;
        }
        Err(e) => {
            record.status = RunStatus::Failed {
                error: e.to_string(),
            }
        }
    }
    Ok(record)
}

fn canonical_order(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        a.model
            .cmp(&b.model)
            .then(a.fold.cmp(&b.fold))
            .then(a.c.unwrap_or(0.0).total_cmp(&b.c.unwrap_or(0.0)))
    });
}

/// Runs the given model specs on every fold. Training failures become
/// failed records; structural errors abort.
pub(crate) fn execute_specs(
    dataset: &Dataset,
    config: &ExperimentConfig,
    specs: &[(&ModelEntry, ModelSpec)],
) -> Result<ExperimentResult> {
    let splits = fold_splits(dataset, &config.protocol)?;
    let jobs: Vec<Job> = specs
        .iter()
        .flat_map(|(entry, spec)| {
            splits.iter().map(move |split| Job {
                entry,
                spec: spec.clone(),
                split,
            })
        })
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|job| run_job(dataset, config, job))
        .collect::<Result<Vec<_>>>()?;
    canonical_order(&mut records);
    Ok(ExperimentResult {
        config_hash: config.hash(),
        metrics: config.metrics.clone(),
        records,
    })
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}

/// Runs `f` inside a worker pool sized by [`WORKERS_ENV`].
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Loads the configured dataset, extending pools with corpus negatives when
/// a subpool is configured. Query `i` (in file order) samples with seed + i.
pub fn prepare_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let dataset = load_dataset(&config.dataset)?;
    let Some(sp) = &config.subpool else {
        return Ok(dataset);
    };
    let corpus = load_dataset(&sp.corpus)?;
    let groups = dataset
        .groups()
        .iter()
        .enumerate()
        .map(|(i, g)| build_subpool(g.query_id(), g, &corpus, sp.size, sp.seed.wrapping_add(i as u64)))
        .collect::<caserank::Result<Vec<_>>>()?;
    Ok(Dataset::new(
        groups,
        dataset.dim(),
        dataset.grade_max(),
        dataset.provenance(),
    )?)
}

/// Every configured model on every fold of `dataset`.
pub fn run_on_dataset(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let specs: Vec<_> = config.models.iter().map(|m| (m, m.spec.clone())).collect();
    with_pool(|| execute_specs(dataset, config, &specs))?
}

/// Loads the configured dataset and runs every model on every fold.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_on_dataset(&prepare_dataset(config)?, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    /// Mean held-out NDCG@10 over folds.
    pub selection_score: Option<f64>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: ExperimentResult,
    pub table: Vec<SweepRow>,
    /// Selected C per RankSVM model.
    pub best: BTreeMap<String, f64>,
}

/// One run per C on every RankSVM model (baselines run once), then the
/// best C per model by mean held-out NDCG@10; ties go to the smaller C.
pub fn sweep_on_dataset(dataset: &Dataset, config: &ExperimentConfig, grid: &[f64]) -> Result<SweepResult> {
    config.validate()?;
    if !config.metrics.ndcg_ks.contains(&SELECTION_K) {
        return Err(HarnessError::Config(format!(
            "sweep selects on NDCG@{SELECTION_K}; add it to the metric cutoffs"
        )));
    }
    let grid = effective_grid(if grid.is_empty() { &config.c_grid } else { grid });
    let mut specs = Vec::new();
    for m in &config.models {
        match &m.spec {
            ModelSpec::Ranksvm(cfg) => {
                for &c in &grid {
                    specs.push((m, ModelSpec::Ranksvm(caserank::SolverConfig { c, ..cfg.clone() })));
                }
            }
            other => specs.push((m, other.clone())),
        }
    }
    let experiment = with_pool(|| execute_specs(dataset, config, &specs))??;
    Ok(select_best(experiment, config))
}

pub fn sweep_c(config: &ExperimentConfig, grid: &[f64]) -> Result<SweepResult> {
    sweep_on_dataset(&prepare_dataset(config)?, config, grid)
}

pub(crate) fn select_best(experiment: ExperimentResult, config: &ExperimentConfig) -> SweepResult {
    let mut table = Vec::new();
    let mut best = BTreeMap::new();
    let mut models: Vec<&str> = config.models.iter().map(ModelEntry::id).collect();
    models.sort_unstable();
    for model in models {
        let mut cs: Vec<Option<f64>> = experiment
            .records
            .iter()
            .filter(|r| r.model == model)
            .map(|r| r.c)
            .collect();
        cs.sort_by(|a, b| a.unwrap_or(0.0).total_cmp(&b.unwrap_or(0.0)));
        cs.dedup();
        let mut winner: Option<(usize, f64)> = None;
        for c in cs {
            let score = experiment.mean_over_folds(model, c, |r| r.ndcg(SELECTION_K));
            if let Some(s) = score {
                // Ascending C: only a strict improvement displaces the incumbent.
                if winner.map_or(true, |(_, w)| s > w) {
                    winner = Some((table.len(), s));
                }
            }
            table.push(SweepRow {
                model: model.to_string(),
                c,
                selection_score: score,
                best: false,
            });
        }
        if let Some((i, _)) = winner {
            table[i].best = true;
            if let Some(c) = table[i].c {
                best.insert(model.to_string(), c);
            }
        }
    }
    SweepResult {
        experiment,
        table,
        best,
    }
}
