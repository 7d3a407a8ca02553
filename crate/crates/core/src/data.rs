//! Dataset types, JSONL ingestion, label binarization, fold splitting and
//! candidate subpool construction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};
use crate::seeded_rng;

/// Default highest relevance grade (grades 0..=3).
pub const DEFAULT_GRADE_MAX: u32 = 3;

/// Default golden-label threshold: grades strictly above 2 are positive.
pub const DEFAULT_THRESHOLD: u32 = 3;

/// One query–candidate pair with its graded relevance and feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub query_id: String,
    pub cand_id: String,
    pub relevance: u32,
    pub features: Vec<f64>,
}

/// A query together with its candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGroup {
    query_id: String,
    candidates: Vec<FeatureRecord>,
}

impl QueryGroup {
    pub fn new(query_id: impl Into<String>, candidates: Vec<FeatureRecord>) -> Result<Self> {
        let query_id = query_id.into();
        if candidates.is_empty() {
            return Err(Error::InvalidDataset(format!("query {query_id} has no candidates")));
        }
        let mut seen = HashSet::with_capacity(candidates.len());
        for c in &candidates {
            if c.query_id != query_id {
                return Err(Error::InvalidDataset(format!(
                    "candidate {} belongs to query {}, not {query_id}",
                    c.cand_id, c.query_id
                )));
            }
            if !seen.insert(c.cand_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate candidate {} in query {query_id}",
                    c.cand_id
                )));
            }
        }
        Ok(Self {
            query_id,
            candidates,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn candidates(&self) -> &[FeatureRecord] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn relevances(&self) -> Vec<u32> {
        self.candidates.iter().map(|c| c.relevance).collect()
    }

    pub fn into_candidates(self) -> Vec<FeatureRecord> {
        self.candidates
    }
}

/// Binary golden labels: `1` iff `relevance >= threshold`.
pub fn binarize_labels(group: &QueryGroup, threshold: u32) -> Vec<u8> {
    group
        .candidates
        .iter()
        .map(|c| u8::from(c.relevance >= threshold))
        .collect()
}

/// A validated collection of query groups with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    groups: Vec<QueryGroup>,
    dim: usize,
    grade_max: u32,
    provenance: String,
}

impl Dataset {
    pub fn new(
        groups: Vec<QueryGroup>,
        dim: usize,
        grade_max: u32,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dimension must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(groups.len());
        for g in &groups {
            if !ids.insert(g.query_id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate query {}", g.query_id)));
            }
            for c in &g.candidates {
                if c.features.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: c.features.len(),
                    });
                }
                if c.relevance > grade_max {
                    return Err(Error::InvalidDataset(format!(
                        "query {} candidate {}: relevance {} above grade_max {grade_max}",
                        g.query_id, c.cand_id, c.relevance
                    )));
                }
                if c.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDataset(format!(
                        "query {} candidate {}: non-finite feature",
                        g.query_id, c.cand_id
                    )));
                }
            }
        }
        Ok(Self {
            groups,
            dim,
            grade_max,
            provenance: provenance.into(),
        })
    }

    pub fn groups(&self) -> &[QueryGroup] {
        &self.groups
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grade_max(&self) -> u32 {
        self.grade_max
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn query_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.query_id.clone()).collect()
    }

    pub fn group(&self, query_id: &str) -> Option<&QueryGroup> {
        self.groups.iter().find(|g| g.query_id == query_id)
    }

    pub fn record_count(&self) -> usize {
        self.groups.iter().map(QueryGroup::len).sum()
    }

    /// Groups whose query id is in `ids`, in dataset order.
    pub fn select<'a>(&'a self, ids: &HashSet<&str>) -> Vec<&'a QueryGroup> {
        self.groups
            .iter()
            .filter(|g| ids.contains(g.query_id.as_str()))
            .collect()
    }

    /// Writes `features.jsonl` and `manifest.json` into `dir` and returns the
    /// manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let features_path = dir.join("features.jsonl");
        let io_err = |source| Error::Io {
            path: features_path.clone(),
            source,
        };
        let mut out = BufWriter::new(File::create(&features_path).map_err(io_err)?);
        for record in self.groups.iter().flat_map(|g| &g.candidates) {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;

        let manifest = Manifest {
            dim: self.dim,
            grade_max: self.grade_max,
            files: vec![PathBuf::from("features.jsonl")],
            provenance: self.provenance.clone(),
        };
        let manifest_path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&manifest_path, text).map_err(|source| Error::Io {
            path: manifest_path.clone(),
            source,
        })?;
        Ok(manifest_path)
    }
}

/// On-disk dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dim: usize,
    #[serde(default = "default_grade_max")]
    pub grade_max: u32,
    pub files: Vec<PathBuf>,
    #[serde(default)]
    pub provenance: String,
}

fn default_grade_max() -> u32 {
    DEFAULT_GRADE_MAX
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    query_id: String,
    cand_id: String,
    relevance: i64,
    features: Vec<f64>,
}

/// Loads a dataset from a JSON manifest. Relative feature-file paths resolve
/// against the manifest's directory. Records are grouped by query id in
/// first-appearance order; candidate order follows the files.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| Error::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.files.is_empty() {
        return Err(Error::NoFeatureFiles);
    }
    if manifest.dim == 0 {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            message: "dim must be positive".into(),
        });
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, Vec<FeatureRecord>> = HashMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for file in &manifest.files {
        let path = if file.is_absolute() {
            file.clone()
        } else {
            base.join(file)
        };
        let reader = BufReader::new(File::open(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?);
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record_err = |kind| Error::Record {
                path: path.clone(),
                line: line_no,
                kind,
            };
            let raw: RawRecord = serde_json::from_str(&line)
                .map_err(|e| record_err(RecordError::Malformed(e.to_string())))?;
            if raw.features.len() != manifest.dim {
                return Err(record_err(RecordError::DimensionMismatch {
                    expected: manifest.dim,
                    actual: raw.features.len(),
                }));
            }
            if raw.features.iter().any(|v| !v.is_finite()) {
                return Err(record_err(RecordError::NonFinite));
            }
            if raw.relevance < 0 || raw.relevance > i64::from(manifest.grade_max) {
                return Err(record_err(RecordError::RelevanceOutOfRange {
                    relevance: raw.relevance,
                    grade_max: manifest.grade_max,
                }));
            }
            if !seen.insert((raw.query_id.clone(), raw.cand_id.clone())) {
                return Err(record_err(RecordError::Duplicate {
                    query_id: raw.query_id,
                    cand_id: raw.cand_id,
                }));
            }
            let record = FeatureRecord {
                query_id: raw.query_id,
                cand_id: raw.cand_id,
                relevance: raw.relevance as u32,
                features: raw.features,
            };
            grouped
                .entry(record.query_id.clone())
                .or_insert_with(|| {
                    order.push(record.query_id.clone());
                    Vec::new()
                })
                .push(record);
        }
    }

    let groups = order
        .into_iter()
        .map(|qid| {
            let candidates = grouped.remove(&qid).unwrap_or_default();
            QueryGroup::new(qid, candidates)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(groups, manifest.dim, manifest.grade_max, manifest.provenance)
}

/// Assignment of queries to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    #[serde(rename = "k")]
    pub fold_count: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, query_id: &str) -> Option<usize> {
        self.assignment.get(query_id).copied()
    }

    /// Query ids per fold, each fold sorted by id.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.fold_count];
        for (qid, &f) in &self.assignment {
            folds[f].push(qid.clone());
        }
        folds
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        self.folds().iter().map(Vec::len).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let folds: Self = serde_json::from_str(&text)?;
        if folds.fold_count == 0 || folds.assignment.values().any(|&f| f >= folds.fold_count) {
            return Err(Error::InvalidConfig(format!(
                "{}: fold index out of range",
                path.display()
            )));
        }
        Ok(folds)
    }
}

/// Shuffles `query_ids` with `seed` and deals them into `k` folds whose sizes
/// differ by at most one (the first `n mod k` folds get the extra query).
pub fn kfold_split(query_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || k > query_ids.len() {
        return Err(Error::TooManyFolds {
            k,
            queries: query_ids.len(),
        });
    }
    let mut shuffled = query_ids.to_vec();
    shuffled.shuffle(&mut seeded_rng(seed));

    let n = shuffled.len();
    let (base, extra) = (n / k, n % k);
    let mut assignment = BTreeMap::new();
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for qid in &shuffled[start..start + size] {
            assignment.insert(qid.clone(), fold);
        }
        start += size;
    }
    Ok(FoldAssignment {
        fold_count: k,
        seed,
        assignment,
    })
}

/// Seeded train/test split; the training side gets `round(train_frac * n)`
/// queries. Both sides are returned in shuffled order.
pub fn holdout_split(
    query_ids: &[String],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_frac} outside (0, 1)"
        )));
    }
    let mut shuffled = query_ids.to_vec();
    shuffled.shuffle(&mut seeded_rng(seed));
    let n_train = (train_frac * shuffled.len() as f64).round() as usize;
    let test = shuffled.split_off(n_train);
    Ok((shuffled, test))
}

/// Extends a labeled pool to `n_total` candidates with negatives sampled
/// uniformly without replacement from `corpus`.
///
/// If the corpus holds a group for `query_id`, negatives are drawn from it
/// (its features are specific to this query). Otherwise every corpus record
/// is eligible, deduplicated by candidate id. Candidates already labeled for
/// this query are never sampled. Sampled negatives get relevance 0 and are
/// appended after the labeled candidates in corpus order.
pub fn build_subpool(
    query_id: &str,
    labeled: &QueryGroup,
    corpus: &Dataset,
    n_total: usize,
    seed: u64,
) -> Result<QueryGroup> {
    let labeled_count = labeled.len();
    if labeled_count > n_total {
        return Err(Error::InvalidConfig(format!(
            "query {query_id}: {labeled_count} labeled candidates exceed pool size {n_total}"
        )));
    }
    if labeled_count == n_total {
        return Ok(labeled.clone());
    }
    if corpus.dim() != labeled.candidates[0].features.len() {
        return Err(Error::DimensionMismatch {
            expected: labeled.candidates[0].features.len(),
            actual: corpus.dim(),
        });
    }

    let excluded: HashSet<&str> = labeled.candidates.iter().map(|c| c.cand_id.as_str()).collect();
    let sources: Vec<&FeatureRecord> = match corpus.group(query_id) {
        Some(g) => g.candidates.iter().collect(),
        None => corpus.groups.iter().flat_map(|g| &g.candidates).collect(),
    };
    let mut seen = HashSet::new();
    let eligible: Vec<&FeatureRecord> = sources
        .into_iter()
        .filter(|c| !excluded.contains(c.cand_id.as_str()) && seen.insert(c.cand_id.as_str()))
        .collect();

    let needed = n_total - labeled_count;
    if eligible.len() < needed {
        return Err(Error::InsufficientCorpus {
            query_id: query_id.to_string(),
            needed,
            available: eligible.len(),
        });
    }

    let mut picked = index::sample(&mut seeded_rng(seed), eligible.len(), needed).into_vec();
    picked.sort_unstable();

    let mut candidates = labeled.candidates.clone();
    candidates.extend(picked.into_iter().map(|i| FeatureRecord {
        query_id: query_id.to_string(),
        cand_id: eligible[i].cand_id.clone(),
        relevance: 0,
        features: eligible[i].features.clone(),
    }));
    QueryGroup::new(query_id, candidates)
}

/// Candidates of one query ordered by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub query_id: String,
    pub cand_ids: Vec<String>,
    pub scores: Vec<f64>,
}

impl Ranking {
    /// Sorts the group by descending score, breaking ties by ascending
    /// candidate id. `scores` is parallel to the group's candidates.
    pub fn from_scores(group: &QueryGroup, scores: &[f64]) -> Result<Self> {
        if group.is_empty() {
            return Err(Error::InvalidDataset("cannot rank an empty group".into()));
        }
        if scores.len() != group.len() {
            return Err(Error::DimensionMismatch {
                expected: group.len(),
                actual: scores.len(),
            });
        }
        let order = ranked_order(group, scores);
        Ok(Self {
            query_id: group.query_id.clone(),
            cand_ids: order
                .iter()
                .map(|&i| group.candidates[i].cand_id.clone())
                .collect(),
            scores: order.iter().map(|&i| scores[i]).collect(),
        })
    }

    pub fn top(&self) -> Option<&str> {
        self.cand_ids.first().map(String::as_str)
    }
}

/// Candidate indices in ranked order (descending score, ascending id on ties).
pub fn ranked_order(group: &QueryGroup, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| group.candidates[a].cand_id.cmp(&group.candidates[b].cand_id))
    });
    order
}
