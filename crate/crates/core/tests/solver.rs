mod common;

use caserank::data::{FeatureRecord, QueryGroup};
use caserank::linalg::{dot, norm_sq, sub};
use caserank::pairgen::{generate_pairs_for, PairConfig};
use caserank::ranksvm::reference::reference_train;
use caserank::ranksvm::{most_violated_constraint, primal_objective, train, LinearModel, SolverConfig};
use caserank::Scorer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-3;

#[test]
fn cutting_plane_matches_subgradient_oracle() {
    for seed in 100..110 {
        let dim = 1 + (seed as usize % 5);
        let pairs = common::random_pairs(seed, 8, 12, dim);
        for c in [0.01, 1.0, 100.0] {
            let model = train(&pairs, &SolverConfig::with_c(c)).unwrap();
            let oracle = reference_train(&pairs, c, 300_000, seed).unwrap();
            let oracle_obj = primal_objective(&oracle, &pairs, c).unwrap().objective;
            let diff = (model.meta.objective - oracle_obj).abs();
            assert!(
                diff <= 5.0 * EPS * c,
                "seed {seed} C {c}: cutting plane {} vs oracle {oracle_obj}",
                model.meta.objective
            );
        }
    }
}

#[test]
fn dual_monotone_and_alphas_feasible() {
    for seed in 0..20 {
        let pairs = common::random_pairs(seed, 8, 12, 4);
        for c in [0.05, 1.0, 50.0] {
            let model = train(&pairs, &SolverConfig::with_c(c)).unwrap();
            let trace = &model.meta.trace;
            for w in trace.windows(2) {
                assert!(w[1].dual_objective >= w[0].dual_objective - 1e-12);
            }
            for t in trace {
                assert!(t.alpha_min >= 0.0);
                assert!(t.alpha_sum <= c + 1e-9);
            }
        }
    }
}

#[test]
fn epsilon_certificate_at_termination() {
    for seed in 0..20 {
        let pairs = common::random_pairs(seed, 8, 12, 3);
        for c in [0.01, 1.0, 100.0] {
            let model = train(&pairs, &SolverConfig::with_c(c)).unwrap();
            assert!(model.meta.converged);
            let sep = most_violated_constraint(&model.w, &pairs).unwrap();
            assert!(sep.violation <= model.meta.xi + EPS);
            assert!(model.meta.duality_gap >= -1e-9);
            assert!(model.meta.duality_gap <= c * EPS + 1e-9);
        }
    }
}

#[test]
fn one_slack_objective_equals_pair_slack_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..20 {
        let pairs = common::random_pairs(seed, 6, 10, 3);
        let n = pairs.pair_count() as f64;
        let c = 2.5;
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pair_slack: f64 = pairs
            .iter_pairs()
            .map(|(u, v)| (1.0 - dot(&w, &sub(u, v))).max(0.0))
            .sum();
        let per_pair = 0.5 * norm_sq(&w) + (c / n) * pair_slack;
        let one_slack = primal_objective(&LinearModel::new(w, 0.0), &pairs, c).unwrap().objective;
        assert!((per_pair - one_slack).abs() <= 1e-12 * per_pair.max(1.0));
    }
}

fn planted_groups(seed: u64, queries: usize, cands: usize) -> Vec<QueryGroup> {
    // Scores under w* = [1, -1]; positives sit at score >= 1, negatives <= 0.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..queries)
        .map(|q| {
            let rows = (0..cands)
                .map(|i| {
                    let positive = i % 3 == 0;
                    let target = if positive {
                        rng.random_range(1.0..2.0)
                    } else {
                        rng.random_range(-2.0..0.0)
                    };
                    let t: f64 = rng.random_range(-1.0..1.0);
                    FeatureRecord {
                        query_id: format!("q{q}"),
                        cand_id: format!("c{i:02}"),
                        relevance: if positive { 3 } else { 0 },
                        features: vec![t + target / 2.0, t - target / 2.0],
                    }
                })
                .collect();
            QueryGroup::new(format!("q{q}"), rows).unwrap()
        })
        .collect()
}

#[test]
fn planted_two_dimensional_model_ranks_all_pairs() {
    let groups = planted_groups(11, 5, 9);
    let pairs = generate_pairs_for(&groups, &PairConfig::default()).unwrap();
    let model = train(&pairs, &SolverConfig::with_c(1.0)).unwrap();
    let oracle = reference_train(&pairs, 1.0, 200_000, 0).unwrap();
    assert_eq!(primal_objective(&model, &pairs, 1.0).unwrap().swapped_fraction, 0.0);
    assert_eq!(primal_objective(&oracle, &pairs, 1.0).unwrap().swapped_fraction, 0.0);
    assert!(model.w[0] > 0.0 && model.w[1] < 0.0);
}

#[test]
fn ranking_invariant_to_positive_scaling() {
    let groups = common::random_groups(5, 4, 12, 3);
    let pairs = generate_pairs_for(&groups, &PairConfig::default()).unwrap();
    let model = train(&pairs, &SolverConfig::with_c(1.0)).unwrap();
    for scale in [1e-3, 0.5, 7.0, 1e4] {
        let scaled = LinearModel::new(model.w.iter().map(|w| w * scale).collect(), 0.0);
        for g in &groups {
            assert_eq!(model.rank(g).unwrap().cand_ids, scaled.rank(g).unwrap().cand_ids);
        }
    }
}

#[test]
fn iterations_do_not_grow_with_replicated_pairs() {
    // Replicating queries multiplies the pair count but leaves the normalized
    // objective unchanged, so the outer iteration count should not grow.
    for seed in 0..5 {
        let base = common::random_groups(seed, 6, 12, 4);
        let replicate = |copies: usize| -> Vec<QueryGroup> {
            (0..copies)
                .flat_map(|k| {
                    base.iter().map(move |g| {
                        let qid = format!("{}-r{k}", g.query_id());
                        let cands = g
                            .candidates()
                            .iter()
                            .map(|c| FeatureRecord {
                                query_id: qid.clone(),
                                ..c.clone()
                            })
                            .collect();
                        QueryGroup::new(qid.clone(), cands).unwrap()
                    })
                })
                .collect()
        };
        let cfg = SolverConfig::with_c(10.0);
        let one = train(&generate_pairs_for(&replicate(1), &PairConfig::default()).unwrap(), &cfg).unwrap();
        let eight = train(&generate_pairs_for(&replicate(8), &PairConfig::default()).unwrap(), &cfg).unwrap();
        assert_eq!(eight.meta.n_pairs, 8 * one.meta.n_pairs);
        assert!(eight.meta.iters <= one.meta.iters + 2, "{} vs {}", eight.meta.iters, one.meta.iters);
        assert!((eight.meta.objective - one.meta.objective).abs() <= 10.0 * EPS);
    }
}

#[test]
fn outer_iteration_budget_respected() {
    let pairs = common::random_pairs(1, 8, 12, 5);
    let cfg = SolverConfig {
        max_outer_iters: 2,
        epsilon: 1e-9,
        ..SolverConfig::with_c(100.0)
    };
    let model = train(&pairs, &cfg).unwrap();
    assert!(model.meta.iters <= 2);
    assert!(!model.meta.converged);
}
