//! Ranking evaluation: Kendall's tau, NDCG@k, P@k, ROC/AUC and report
//! aggregation.
//!
//! Conventions:
//!
//! * NDCG gain is `2^rel - 1` with discount `log2(i + 1)` for 1-based rank
//!   `i`. A query whose ideal DCG is zero gets NDCG 0.
//! * P@k always divides by `k`, even when fewer than `k` candidates exist.
//! * AUC gives half credit to tied positive/negative scores.
//! * Per-query tau compares the system ranking against the target ranking
//!   (relevance descending, ties by ascending candidate id).

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::data::{binarize_labels, ranked_order, QueryGroup, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};

/// Concordant/discordant pair counts between two strict rankings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TauCounts {
    pub concordant: u64,
    pub discordant: u64,
}

impl TauCounts {
    pub fn tau(&self) -> f64 {
        let p = self.concordant as f64;
        let q = self.discordant as f64;
        (p - q) / (p + q)
    }
}

/// Pair counts for two permutations of the same items.
///
/// Discordant pairs are counted as inversions via merge sort, so this runs in
/// `O(m log m)`.
pub fn kendall_counts<T: Eq + Hash>(ranking_a: &[T], ranking_b: &[T]) -> Result<TauCounts> {
    let m = ranking_a.len();
    if m < 2 {
        return Err(Error::TooFewItems(m));
    }
    if ranking_b.len() != m {
        return Err(Error::MismatchedItems);
    }
    let pos_b: HashMap<&T, usize> = ranking_b.iter().enumerate().map(|(i, x)| (x, i)).collect();
    if pos_b.len() != m {
        return Err(Error::MismatchedItems);
    }
    let mut seq = ranking_a
        .iter()
        .map(|x| pos_b.get(x).copied().ok_or(Error::MismatchedItems))
        .collect::<Result<Vec<usize>>>()?;
    // A repeated item in `a` would leave some item of `b` unmatched.
    let mut hit = vec![false; m];
    for &p in &seq {
        if std::mem::replace(&mut hit[p], true) {
            return Err(Error::MismatchedItems);
        }
    }

    let discordant = count_inversions(&mut seq);
    let total = (m as u64) * (m as u64 - 1) / 2;
    Ok(TauCounts {
        concordant: total - discordant,
        discordant,
    })
}

fn count_inversions(seq: &mut [usize]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut seq[..mid]) + count_inversions(&mut seq[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            merged.push(seq[i]);
            i += 1;
        } else {
            merged.push(seq[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&seq[i..mid]);
    merged.extend_from_slice(&seq[j..n]);
    seq.copy_from_slice(&merged);
    inv
}

/// Kendall's tau `(P - Q) / (P + Q)` between two strict rankings.
pub fn kendall_tau<T: Eq + Hash>(ranking_a: &[T], ranking_b: &[T]) -> Result<f64> {
    kendall_counts(ranking_a, ranking_b).map(|c| c.tau())
}

/// Mean of per-query tau values over `(system, target)` ranking pairs.
pub fn empirical_tau<T: Eq + Hash>(rankings: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for (system, target) in rankings {
        sum += kendall_tau(system, target)?;
    }
    Ok(sum / rankings.len() as f64)
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

/// DCG over the first `min(k, m)` relevances.
pub fn dcg_at_k(ranked: &[u32], k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &rel)| gain(rel) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of graded relevances listed in system-ranked order.
pub fn ndcg_at_k(ranked: &[u32], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidCutoff);
    }
    let mut ideal = ranked.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg_at_k(ranked, k) / idcg)
}

/// Fraction of positives among the first `k` ranked labels, divided by `k`.
pub fn precision_at_k(ranked: &[u8], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidCutoff);
    }
    let hits = ranked.iter().take(k).filter(|&&l| l != 0).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores `>= threshold` are predicted positive. The first point uses
    /// `+inf` (nothing predicted positive).
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Mann–Whitney statistic.
    pub auc: f64,
}

/// ROC curve from a sweep over the distinct scores, plus the Mann–Whitney
/// AUC.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Twice the number of (pos, neg) pairs won, so ties stay integral.
    let mut won2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (mut gp, mut gn) = (0usize, 0usize);
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] != 0 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // Positives in this tie block beat every negative scored lower.
        won2 += 2 * (gp as u64) * (n_neg - fp - gn) as u64 + (gp as u64) * (gn as u64);
        tp += gp;
        fp += gn;
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }

    let auc = won2 as f64 / (2.0 * n_pos as f64 * n_neg as f64);
    Ok(RocCurve { points, auc })
}

/// Trapezoidal area under `(fpr, tpr)` points listed in sweep order.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

impl RocCurve {
    pub fn trapezoid_auc(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        trapezoid_auc(&pts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub ndcg_ks: Vec<usize>,
    pub precision_ks: Vec<usize>,
    /// Golden-label threshold for P@k and AUC.
    pub threshold: u32,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            ndcg_ks: vec![10, 20, 30],
            precision_ks: vec![5],
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ndcg: BTreeMap<usize, f64>,
    pub precision: BTreeMap<usize, f64>,
    /// `None` for single-candidate queries.
    pub tau: Option<f64>,
    /// `None` when the query lacks positives or negatives.
    pub auc: Option<f64>,
}

/// Metrics of one query given scores parallel to the group's candidates.
pub fn evaluate_query(group: &QueryGroup, scores: &[f64], config: &MetricConfig) -> Result<QueryMetrics> {
    if scores.len() != group.len() {
        return Err(Error::DimensionMismatch {
            expected: group.len(),
            actual: scores.len(),
        });
    }
    for &k in config.ndcg_ks.iter().chain(&config.precision_ks) {
        if k == 0 {
            return Err(Error::InvalidCutoff);
        }
    }
    let order = ranked_order(group, scores);
    let rels = group.relevances();
    let labels = binarize_labels(group, config.threshold);
    let ranked_rels: Vec<u32> = order.iter().map(|&i| rels[i]).collect();
    let ranked_labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();

    let mut ndcg = BTreeMap::new();
    for &k in &config.ndcg_ks {
        ndcg.insert(k, ndcg_at_k(&ranked_rels, k)?);
    }
    let mut precision = BTreeMap::new();
    for &k in &config.precision_ks {
        precision.insert(k, precision_at_k(&ranked_labels, k)?);
    }

    let tau = if group.len() >= 2 {
        let target_scores: Vec<f64> = rels.iter().map(|&r| f64::from(r)).collect();
        let target = ranked_order(group, &target_scores);
        Some(kendall_tau(&order, &target)?)
    } else {
        None
    };
    let auc = match roc_auc(scores, &labels) {
        Ok(curve) => Some(curve.auc),
        Err(Error::UndefinedAuc) => None,
        Err(e) => return Err(e),
    };
    Ok(QueryMetrics {
        ndcg,
        precision,
        tau,
        auc,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub ndcg: BTreeMap<usize, f64>,
    pub precision: BTreeMap<usize, f64>,
    pub tau: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: MetricConfig,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub aggregate: AggregateMetrics,
    pub evaluated: usize,
    /// Queries with an undefined AUC (no positive/negative contrast).
    pub skipped: usize,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricReport {
    /// Report whose aggregate is the unweighted mean over queries.
    pub fn from_queries(config: MetricConfig, per_query: BTreeMap<String, QueryMetrics>) -> Self {
        let q = || per_query.values();
        let aggregate = AggregateMetrics {
            ndcg: config
                .ndcg_ks
                .iter()
                .filter_map(|&k| Some((k, mean_of(q().filter_map(|m| m.ndcg.get(&k).copied()))?)))
                .collect(),
            precision: config
                .precision_ks
                .iter()
                .filter_map(|&k| {
                    Some((k, mean_of(q().filter_map(|m| m.precision.get(&k).copied()))?))
                })
                .collect(),
            tau: mean_of(q().filter_map(|m| m.tau)),
            auc: mean_of(q().filter_map(|m| m.auc)),
        };
        let skipped = q().filter(|m| m.auc.is_none()).count();
        Self {
            evaluated: per_query.len(),
            skipped,
            config,
            per_query,
            aggregate,
        }
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.aggregate.ndcg.get(&k).copied()
    }

    pub fn precision(&self, k: usize) -> Option<f64> {
        self.aggregate.precision.get(&k).copied()
    }
}

/// Combines fold reports: aggregate values are the (optionally weighted) mean
/// of the reports' aggregates; per-query maps are concatenated.
pub fn aggregate(reports: &[MetricReport], weights: Option<&[f64]>) -> Result<MetricReport> {
    let first = reports.first().ok_or(Error::EmptyInput)?;
    if reports.iter().any(|r| r.config != first.config) {
        return Err(Error::InconsistentReports);
    }
    let uniform = vec![1.0; reports.len()];
    let weights = weights.unwrap_or(&uniform);
    if weights.len() != reports.len() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidConfig("one non-negative weight per report required".into()));
    }

    let weighted = |get: &dyn Fn(&MetricReport) -> Option<f64>| -> Option<f64> {
        let (mut sum, mut total) = (0.0, 0.0);
        for (r, &w) in reports.iter().zip(weights) {
            if let Some(v) = get(r) {
                sum += w * v;
                total += w;
            }
        }
        (total > 0.0).then(|| sum / total)
    };

    let mut per_query = BTreeMap::new();
    for r in reports {
        for (qid, m) in &r.per_query {
            if per_query.insert(qid.clone(), m.clone()).is_some() {
                return Err(Error::DuplicateQuery(qid.clone()));
            }
        }
    }
    let config = first.config.clone();
    let aggregate = AggregateMetrics {
        ndcg: config
            .ndcg_ks
            .iter()
            .filter_map(|&k| Some((k, weighted(&|r| r.ndcg(k))?)))
            .collect(),
        precision: config
            .precision_ks
            .iter()
            .filter_map(|&k| Some((k, weighted(&|r| r.precision(k))?)))
            .collect(),
        tau: weighted(&|r| r.aggregate.tau),
        auc: weighted(&|r| r.aggregate.auc),
    };
    Ok(MetricReport {
        evaluated: reports.iter().map(|r| r.evaluated).sum(),
        skipped: reports.iter().map(|r| r.skipped).sum(),
        config,
        per_query,
        aggregate,
    })
}
