//! Pairwise learning-to-rank over precomputed query–candidate features.
//!
//! The crate provides a linear RankSVM trained with the 1-slack cutting-plane
//! algorithm on its dual, pointwise and pairwise baselines, a planted-model
//! synthetic data generator, and the retrieval metrics used to compare them
//! (Kendall's tau, NDCG@k, P@k, ROC/AUC).

pub mod baselines;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pairgen;
pub mod ranksvm;
pub mod synth;

pub use data::{
    binarize_labels, build_subpool, holdout_split, kfold_split, load_dataset, Dataset,
    FeatureRecord, FoldAssignment, QueryGroup, Ranking,
};
pub use error::{Error, Result};
pub use pairgen::{generate_pairs, PairConfig, PairSet};
pub use ranksvm::{LinearModel, SolverConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Anything that maps a feature vector to a ranking score.
pub trait Scorer {
    fn dim(&self) -> usize;

    /// Score of a single feature vector. Callers guarantee `x.len() == self.dim()`.
    fn score_unchecked(&self, x: &[f64]) -> f64;

    fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    /// Scores every candidate of a group, in group order.
    fn score_group(&self, group: &QueryGroup) -> Result<Vec<f64>> {
        group.candidates().iter().map(|c| self.score(&c.features)).collect()
    }

    /// Ranks a group by descending score (ties by ascending candidate id).
    fn rank(&self, group: &QueryGroup) -> Result<Ranking> {
        Ranking::from_scores(group, &self.score_group(group)?)
    }
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
