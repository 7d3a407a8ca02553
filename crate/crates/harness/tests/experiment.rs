use std::collections::HashSet;

use caserank::baselines::LogisticParams;
use caserank::metrics::{trapezoid_auc, MetricConfig};
use caserank::synth::{generate, SynthConfig};
use caserank::{Dataset, FeatureRecord, QueryGroup, SolverConfig};
use caserank_harness::compare::{compare_pointwise_pairwise, CompareConfig, DataSource};
use caserank_harness::output::{emit_outputs, summary_csv, MEAN_FOLD, SUMMARY_FILE};
use caserank_harness::{
    fold_splits, run_on_dataset, sweep_on_dataset, ExperimentConfig, ExperimentResult, ModelEntry,
    ModelSpec, Protocol, RunStatus,
};

fn synth(n_queries: usize, noise: f64, seed: u64) -> Dataset {
    generate(&SynthConfig {
        n_queries,
        n_cands_per_query: 40,
        dim: 5,
        positive_fraction: 0.1,
        noise_sigma: noise,
        seed,
        planted_w: None,
    })
    .unwrap()
}

fn ranksvm(c: f64) -> ModelEntry {
    ModelEntry::new(ModelSpec::Ranksvm(SolverConfig::with_c(c)))
}

fn config(protocol: Protocol, models: Vec<ModelEntry>) -> ExperimentConfig {
    ExperimentConfig::new("unused", protocol, models)
}

fn kfold5() -> Protocol {
    Protocol::Kfold { k: 5, seed: 7 }
}

fn parse_csv(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn kfold_yields_one_record_per_fold_and_a_mean_row() {
    let ds = synth(20, 0.3, 1);
    let result = run_on_dataset(&ds, &config(kfold5(), vec![ranksvm(1.0)])).unwrap();
    assert_eq!(result.records.len(), 5);
    let (header, rows) = parse_csv(&summary_csv(&result).unwrap());
    assert_eq!(header, ["model", "C", "fold", "ndcg@10", "ndcg@20", "ndcg@30", "p@5", "auc"]);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5][2], MEAN_FOLD);

    // The mean row is recomputable from the fold rows alone.
    for col in 3..header.len() {
        let folds: Vec<f64> = rows[..5].iter().map(|r| r[col].parse().unwrap()).collect();
        let mean: f64 = rows[5][col].parse().unwrap();
        assert!((mean - folds.iter().sum::<f64>() / 5.0).abs() <= 1e-12);
    }
}

#[test]
fn train_and_test_queries_are_disjoint_and_cover() {
    let ds = synth(23, 0.3, 2);
    let models = vec![ranksvm(1.0), ModelEntry::new(ModelSpec::Logistic(LogisticParams::default()))];
    let result = run_on_dataset(&ds, &config(kfold5(), models)).unwrap();
    let all: HashSet<String> = ds.query_ids().into_iter().collect();
    for r in &result.records {
        let train: HashSet<&String> = r.train_queries.iter().collect();
        assert!(r.test_queries.iter().all(|q| !train.contains(q)));
        assert_eq!(train.len() + r.test_queries.len(), all.len());
    }
}

#[test]
fn holdout_of_800_is_640_160() {
    let ds = generate(&SynthConfig {
        n_queries: 800,
        n_cands_per_query: 4,
        dim: 2,
        positive_fraction: 0.25,
        noise_sigma: 0.0,
        seed: 0,
        planted_w: None,
    })
    .unwrap();
    let splits = fold_splits(&ds, &Protocol::Holdout { train_frac: 0.8, seed: 3 }).unwrap();
    assert_eq!(splits.len(), 1);
    assert_eq!((splits[0].train.len(), splits[0].test.len()), (640, 160));
}

fn with_test_features_perturbed(ds: &Dataset, test: &[String]) -> Dataset {
    let test: HashSet<&str> = test.iter().map(String::as_str).collect();
    let groups = ds
        .groups()
        .iter()
        .map(|g| {
            if !test.contains(g.query_id()) {
                return g.clone();
            }
            let cands = g
                .candidates()
                .iter()
                .map(|c| FeatureRecord {
                    features: c.features.iter().map(|v| -3.0 * v + 1.0).collect(),
                    ..c.clone()
                })
                .collect();
            QueryGroup::new(g.query_id(), cands).unwrap()
        })
        .collect();
    Dataset::new(groups, ds.dim(), ds.grade_max(), ds.provenance()).unwrap()
}

#[test]
fn training_hash_ignores_test_content() {
    let ds = synth(15, 0.3, 4);
    let cfg = config(Protocol::Holdout { train_frac: 0.6, seed: 5 }, vec![ranksvm(1.0)]);
    let before = run_on_dataset(&ds, &cfg).unwrap();
    let test = &before.records[0].test_queries;
    let after = run_on_dataset(&with_test_features_perturbed(&ds, test), &cfg).unwrap();
    assert_eq!(before.records[0].train_hash, after.records[0].train_hash);

    // Perturbing a training query must change it.
    let train = &before.records[0].train_queries[..1];
    let leaked = run_on_dataset(&with_test_features_perturbed(&ds, train), &cfg).unwrap();
    assert_ne!(before.records[0].train_hash, leaked.records[0].train_hash);
}

#[test]
fn reruns_are_byte_identical() {
    let ds = synth(20, 0.5, 6);
    let models = vec![
        ranksvm(1.0),
        ModelEntry::new(ModelSpec::Logistic(LogisticParams::default())),
        ModelEntry::new(ModelSpec::Ranknet(Default::default())),
    ];
    let cfg = config(kfold5(), models);
    let a = summary_csv(&run_on_dataset(&ds, &cfg).unwrap()).unwrap();
    let b = summary_csv(&run_on_dataset(&ds, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn records_come_out_in_canonical_order() {
    let ds = synth(20, 0.5, 8);
    let models = vec![
        ModelEntry::new(ModelSpec::Logistic(LogisticParams::default())),
        ranksvm(1.0),
    ];
    let sweep = sweep_on_dataset(&ds, &config(kfold5(), models), &[10.0, 0.1, 1.0]).unwrap();
    let keys: Vec<(String, usize, f64)> = sweep
        .experiment
        .records
        .iter()
        .map(|r| (r.model.clone(), r.fold, r.c.unwrap_or(0.0)))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    assert_eq!(keys, sorted);
}

#[test]
fn sweep_default_grid_runs_nine_values_per_fold() {
    let ds = synth(10, 0.5, 9);
    let sweep = sweep_on_dataset(&ds, &config(kfold5(), vec![ranksvm(1.0)]), &[]).unwrap();
    assert_eq!(sweep.experiment.records.len(), 9 * 5);
    assert_eq!(sweep.table.len(), 9);
    assert_eq!(sweep.table.iter().filter(|r| r.best).count(), 1);
}

#[test]
fn single_value_grid_is_its_own_best() {
    let ds = synth(10, 0.5, 10);
    let sweep = sweep_on_dataset(&ds, &config(kfold5(), vec![ranksvm(1.0)]), &[0.5]).unwrap();
    assert_eq!(sweep.best["ranksvm"], 0.5);
}

#[test]
fn sweep_ties_go_to_the_smaller_c() {
    // One noiseless feature: every positive weight yields the same ranking,
    // so all C values score identically.
    let ds = generate(&SynthConfig {
        n_queries: 10,
        n_cands_per_query: 40,
        dim: 1,
        positive_fraction: 0.1,
        noise_sigma: 0.0,
        seed: 11,
        planted_w: Some(vec![1.0]),
    })
    .unwrap();
    let sweep = sweep_on_dataset(&ds, &config(kfold5(), vec![ranksvm(1.0)]), &[100.0, 10.0, 50.0]).unwrap();
    let scores: Vec<f64> = sweep.table.iter().map(|r| r.selection_score.unwrap()).collect();
    assert!(scores.iter().all(|&s| s == scores[0]), "{scores:?}");
    assert_eq!(sweep.best["ranksvm"], 10.0);
}

#[test]
fn training_failures_become_marked_records() {
    // Every candidate below the golden threshold: the logistic baseline has
    // a single class and fails; the experiment still completes.
    let groups = (0..4)
        .map(|q| {
            let cands = (0..3)
                .map(|c| FeatureRecord {
                    query_id: format!("q{q}"),
                    cand_id: format!("c{c}"),
                    relevance: 1,
                    features: vec![c as f64, q as f64],
                })
                .collect();
            QueryGroup::new(format!("q{q}"), cands).unwrap()
        })
        .collect();
    let ds = Dataset::new(groups, 2, 3, "flat").unwrap();
    let cfg = config(
        Protocol::Kfold { k: 2, seed: 0 },
        vec![ModelEntry::new(ModelSpec::Logistic(LogisticParams::default()))],
    );
    let result = run_on_dataset(&ds, &cfg).unwrap();
    assert_eq!(result.records.len(), 2);
    assert!(result
        .records
        .iter()
        .all(|r| matches!(&r.status, RunStatus::Failed { error } if error.contains("single class"))));
    let (_, rows) = parse_csv(&summary_csv(&result).unwrap());
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[3..].iter().all(String::is_empty)));
}

#[test]
fn emitted_roc_reintegrates_to_the_recorded_auc() {
    let ds = synth(12, 0.5, 12);
    let result = run_on_dataset(&ds, &config(kfold5(), vec![ranksvm(1.0)])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&result, dir.path()).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    for r in &result.records {
        let text = std::fs::read(dir.path().join(format!("roc/{}.csv", r.stem()))).unwrap();
        let (header, rows) = parse_csv(&text);
        assert_eq!(header, ["threshold", "fpr", "tpr"]);
        assert_eq!(rows[0][0], "inf");
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|row| (row[1].parse().unwrap(), row[2].parse().unwrap()))
            .collect();
        assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        assert!((trapezoid_auc(&pts) - r.pooled_auc.unwrap()).abs() <= 1e-9);

        let dump = std::fs::read(dir.path().join(format!("scores/{}.csv", r.stem()))).unwrap();
        let (header, rows) = parse_csv(&dump);
        assert_eq!(header, ["query_id", "cand_id", "label", "score"]);
        assert_eq!(rows.len(), r.test_queries.len() * 40);
    }
    let runs: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("runs.json")).unwrap()).unwrap();
    assert_eq!(runs["config_hash"], result.config_hash.as_str());
    assert_eq!(runs["records"].as_array().unwrap().len(), 5);
}

#[test]
fn empty_results_give_header_only_files() {
    let result = ExperimentResult {
        config_hash: "0".into(),
        metrics: MetricConfig::default(),
        records: Vec::new(),
    };
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&result, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(text, "model,C,fold,ndcg@10,ndcg@20,ndcg@30,p@5,auc\n");
}

#[test]
fn config_round_trips_through_json() {
    let mut cfg = config(
        Protocol::Holdout { train_frac: 0.8, seed: 1 },
        vec![
            ranksvm(0.5),
            ModelEntry::named("mlp", ModelSpec::Ranknet(Default::default())),
        ],
    );
    cfg.c_grid = vec![0.1, 1.0];
    let text = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    cfg.c_grid.push(2.0);
    assert_ne!(back.hash(), cfg.hash());
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(config(kfold5(), vec![]).validate().is_err());
    assert!(config(Protocol::Kfold { k: 1, seed: 0 }, vec![ranksvm(1.0)]).validate().is_err());
    assert!(config(kfold5(), vec![ranksvm(-1.0)]).validate().is_err());
    assert!(config(kfold5(), vec![ranksvm(1.0), ranksvm(2.0)]).validate().is_err());
    let overlap = Protocol::Split {
        train: vec!["a".into(), "b".into()],
        test: vec!["b".into()],
    };
    assert!(config(overlap, vec![ranksvm(1.0)]).validate().is_err());
}

fn compare_config(noise: f64, seeds: Vec<u64>) -> CompareConfig {
    CompareConfig {
        data: DataSource::Synth(SynthConfig {
            n_queries: 10,
            n_cands_per_query: 40,
            dim: 1,
            positive_fraction: 0.1,
            noise_sigma: noise,
            seed: 0,
            planted_w: None,
        }),
        protocol: Protocol::Holdout { train_frac: 0.8, seed: 0 },
        seeds,
        ranksvm: SolverConfig::with_c(10.0),
        logistic: LogisticParams::default(),
        metrics: MetricConfig::default(),
        pairs: Default::default(),
        select_c: None,
    }
}

#[test]
fn noiseless_comparison_hits_the_ceiling() {
    let summary = compare_pointwise_pairwise(&compare_config(0.0, vec![1, 2])).unwrap();
    for s in &summary.per_seed {
        assert_eq!((s.pairwise_auc, s.pointwise_auc, s.auc_delta), (1.0, 1.0, 0.0));
    }
    assert_eq!(summary.auc_signs.ties, 2);
}

#[test]
fn comparison_is_deterministic_and_needs_two_seeds() {
    let cfg = compare_config(0.5, vec![3, 4, 5]);
    assert_eq!(
        compare_pointwise_pairwise(&cfg).unwrap(),
        compare_pointwise_pairwise(&cfg).unwrap()
    );
    assert!(compare_pointwise_pairwise(&compare_config(0.5, vec![3])).is_err());
}
