//! Per-query preference pairs, the training substrate for pairwise rankers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{binarize_labels, QueryGroup, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Golden-label threshold used to binarize relevance.
    pub threshold: u32,
    /// Also emit pairs between different positive grades (e.g. 3 over 2).
    /// Off by default: training uses binary golden labels only.
    pub graded: bool,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            graded: false,
        }
    }
}

/// Candidate `preferred` should score above candidate `other`. Both are
/// indices into the owning [`QueryPairs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreferencePair {
    pub preferred: usize,
    pub other: usize,
}

/// Pairs of a single query together with the candidate features they index.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPairs {
    pub query_id: String,
    pub cand_ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub positives: usize,
    pub pairs: Vec<PreferencePair>,
}

impl QueryPairs {
    /// No positive/negative contrast: the query contributes no training signal.
    pub fn is_degenerate(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positive_ratio(&self) -> f64 {
        self.positives as f64 / self.cand_ids.len() as f64
    }
}

/// Preference pairs grouped by query. Pairs never cross query boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    dim: usize,
    queries: Vec<QueryPairs>,
}

impl PairSet {
    /// Builds a pair set from per-query blocks, checking index validity and
    /// feature dimensions.
    pub fn new(dim: usize, queries: Vec<QueryPairs>) -> Result<Self> {
        for q in &queries {
            if q.features.len() != q.cand_ids.len() {
                return Err(Error::InvalidDataset(format!(
                    "query {}: {} feature rows for {} candidates",
                    q.query_id,
                    q.features.len(),
                    q.cand_ids.len()
                )));
            }
            if let Some(x) = q.features.iter().find(|x| x.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: x.len(),
                });
            }
            let n = q.cand_ids.len();
            if q
                .pairs
                .iter()
                .any(|p| p.preferred >= n || p.other >= n || p.preferred == p.other)
            {
                return Err(Error::InvalidDataset(format!(
                    "query {}: invalid pair index",
                    q.query_id
                )));
            }
        }
        Ok(Self { dim, queries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn queries(&self) -> &[QueryPairs] {
        &self.queries
    }

    pub fn pair_count(&self) -> usize {
        self.queries.iter().map(|q| q.pairs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_count() == 0
    }

    /// `(x_preferred, x_other)` for every pair, query by query.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.queries.iter().flat_map(|q| {
            q.pairs
                .iter()
                .map(move |p| (q.features[p.preferred].as_slice(), q.features[p.other].as_slice()))
        })
    }

    /// Concatenates pair sets; all must share a dimension.
    pub fn merge(sets: impl IntoIterator<Item = PairSet>) -> Result<PairSet> {
        let mut dim = None;
        let mut queries = Vec::new();
        for set in sets {
            match dim {
                None => dim = Some(set.dim),
                Some(d) if d != set.dim => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: set.dim,
                    })
                }
                _ => {}
            }
            queries.extend(set.queries);
        }
        Ok(PairSet {
            dim: dim.ok_or(Error::EmptyPairSet)?,
            queries,
        })
    }
}

/// One pair per (positive, negative) combination within the group.
///
/// Order is deterministic: positives by ascending candidate id, and for each
/// positive the negatives by ascending candidate id. A group with no
/// positives or no negatives yields a degenerate (pair-free) block.
pub fn generate_pairs(group: &QueryGroup, config: &PairConfig) -> PairSet {
    let candidates = group.candidates();
    let labels = binarize_labels(group, config.threshold);

    let mut by_id: Vec<usize> = (0..candidates.len()).collect();
    by_id.sort_by(|&a, &b| candidates[a].cand_id.cmp(&candidates[b].cand_id));

    let positives: Vec<usize> = by_id.iter().copied().filter(|&i| labels[i] == 1).collect();
    let negatives: Vec<usize> = by_id.iter().copied().filter(|&i| labels[i] == 0).collect();

    let mut pairs = Vec::with_capacity(positives.len() * negatives.len());
    for &u in &positives {
        for &v in &negatives {
            pairs.push(PreferencePair {
                preferred: u,
                other: v,
            });
        }
    }
    if config.graded {
        for &u in &by_id {
            for &v in &by_id {
                let (ru, rv) = (candidates[u].relevance, candidates[v].relevance);
                // Binary-discordant pairs are already present.
                if ru > rv && labels[u] == labels[v] {
                    pairs.push(PreferencePair {
                        preferred: u,
                        other: v,
                    });
                }
            }
        }
    }

    let dim = candidates[0].features.len();
    PairSet {
        dim,
        queries: vec![QueryPairs {
            query_id: group.query_id().to_string(),
            cand_ids: candidates.iter().map(|c| c.cand_id.clone()).collect(),
            features: candidates.iter().map(|c| c.features.clone()).collect(),
            positives: positives.len(),
            pairs,
        }],
    }
}

/// Pairs for several groups, merged in the given order.
pub fn generate_pairs_for<'a>(
    groups: impl IntoIterator<Item = &'a QueryGroup>,
    config: &PairConfig,
) -> Result<PairSet> {
    PairSet::merge(groups.into_iter().map(|g| generate_pairs(g, config)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPairStats {
    pub query_id: String,
    pub candidates: usize,
    pub positives: usize,
    pub pairs: usize,
    pub positive_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PairStats {
    pub total_pairs: usize,
    pub queries: usize,
    pub degenerate_queries: usize,
    pub mean_positive_ratio: f64,
    pub per_query: Vec<QueryPairStats>,
}

pub fn pair_stats(pairsets: &[PairSet]) -> PairStats {
    let per_query: Vec<QueryPairStats> = pairsets
        .iter()
        .flat_map(|s| &s.queries)
        .map(|q| QueryPairStats {
            query_id: q.query_id.clone(),
            candidates: q.cand_ids.len(),
            positives: q.positives,
            pairs: q.pairs.len(),
            positive_ratio: q.positive_ratio(),
        })
        .collect();
    if per_query.is_empty() {
        return PairStats::default();
    }
    PairStats {
        total_pairs: per_query.iter().map(|q| q.pairs).sum(),
        queries: per_query.len(),
        degenerate_queries: per_query.iter().filter(|q| q.pairs == 0).count(),
        mean_positive_ratio: per_query.iter().map(|q| q.positive_ratio).sum::<f64>()
            / per_query.len() as f64,
        per_query,
    }
}

/// Audit dump: CSV `query_id,preferred_cand,other_cand`.
pub fn write_pair_dump<W: Write>(pairs: &PairSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_id", "preferred_cand", "other_cand"])?;
    for q in &pairs.queries {
        for p in &q.pairs {
            w.write_record([
                q.query_id.as_str(),
                q.cand_ids[p.preferred].as_str(),
                q.cand_ids[p.other].as_str(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
