#![allow(dead_code)]

use caserank::data::{FeatureRecord, QueryGroup};
use caserank::pairgen::{generate_pairs_for, PairConfig, PairSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random small ranking instance: up to `max_queries` queries with
/// 2..=`max_cands` candidates each, Gaussian-ish features, random grades.
/// Every query is guaranteed at least one positive and one negative.
pub fn random_groups(seed: u64, max_queries: usize, max_cands: usize, dim: usize) -> Vec<QueryGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_queries = rng.random_range(1..=max_queries);
    (0..n_queries)
        .map(|qi| {
            let m = rng.random_range(2..=max_cands);
            let positive_at = rng.random_range(0..m);
            let negative_at = (positive_at + rng.random_range(1..m)) % m;
            let cands = (0..m)
                .map(|ci| {
                    let relevance = if ci == positive_at {
                        3
                    } else if ci == negative_at {
                        0
                    } else {
                        rng.random_range(0..=3)
                    };
                    FeatureRecord {
                        query_id: format!("q{qi}"),
                        cand_id: format!("q{qi}c{ci:02}"),
                        relevance,
                        features: (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect(),
                    }
                })
                .collect();
            QueryGroup::new(format!("q{qi}"), cands).unwrap()
        })
        .collect()
}

pub fn random_pairs(seed: u64, max_queries: usize, max_cands: usize, dim: usize) -> PairSet {
    let groups = random_groups(seed, max_queries, max_cands, dim);
    generate_pairs_for(&groups, &PairConfig::default()).unwrap()
}
