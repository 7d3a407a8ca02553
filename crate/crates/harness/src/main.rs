use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caserank::baselines::{pointwise_examples, train_logistic, train_ranknet, LogisticParams, RankNetParams};
use caserank::metrics::{evaluate_query, MetricConfig, MetricReport};
use caserank::pairgen::generate_pairs_for;
use caserank::synth::{generate, SynthConfig};
use caserank::{
    binarize_labels, holdout_split, kfold_split, load_dataset, ranksvm, Dataset, FoldAssignment,
    PairConfig, QueryGroup, SolverConfig,
};
use caserank_harness::compare::{compare_pointwise_pairwise, CompareConfig};
use caserank_harness::models::load_model;
use caserank_harness::output::{emit_compare, emit_outputs, emit_sweep, write_atomic};
use caserank_harness::{run_experiment, sweep_c, ExperimentConfig, HarnessError, Protocol};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "caserank", version, about = "Pairwise ranking experiments: RankSVM, baselines, metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a planted linear model.
    Synth(SynthArgs),
    /// Assign queries to folds or a holdout split.
    Split(SplitArgs),
    /// Train one model and write its model file.
    Train(TrainArgs),
    /// Score every candidate with a trained model.
    Rank(RankArgs),
    /// Evaluate a trained model on a dataset.
    Eval(EvalArgs),
    /// Run an experiment over a grid of C values.
    Sweep(SweepArgs),
    /// Paired pointwise vs pairwise comparison over seeds.
    Compare(CompareArgs),
    /// Run an experiment and write its reports.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON synthetic config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    cands: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    positive_fraction: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for features.jsonl and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Number of folds.
    #[arg(long, conflicts_with = "train_frac", required_unless_present = "train_frac")]
    k: Option<usize>,
    /// Training share of a holdout split.
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Ranksvm,
    Ranknet,
    Logistic,
}

#[derive(Args)]
struct FoldArgs {
    /// Fold assignment written by `split --k`.
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    #[arg(long, requires = "folds")]
    fold: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "ranksvm")]
    model: ModelKind,
    /// Regularization trade-off (RankSVM).
    #[arg(short = 'C', long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    /// Cutting-plane iteration budget.
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// RankNet hidden width (0 for a linear scorer).
    #[arg(long, default_value_t = 0)]
    hidden: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Golden-label threshold.
    #[arg(long, default_value_t = caserank::data::DEFAULT_THRESHOLD)]
    threshold: u32,
    /// With --folds, train on every fold except this one.
    #[command(flatten)]
    folds: FoldArgs,
    #[arg(long)]
    out: PathBuf,
    /// Exit with status 3 if RankSVM does not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = caserank::data::DEFAULT_THRESHOLD)]
    threshold: u32,
    /// Score dump path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = caserank::data::DEFAULT_THRESHOLD)]
    threshold: u32,
    /// With --folds, evaluate only this fold's queries.
    #[command(flatten)]
    folds: FoldArgs,
    /// Per-query JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the protocol seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit with status 3 if any RankSVM run does not converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated C values; the config's grid (or the default) otherwise.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds; overrides the config's.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

enum Failure {
    Usage(String),
    Data(String),
    NonConverged(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_usage() {
            Self::Usage(e.to_string())
        } else {
            Self::Data(e.to_string())
        }
    }
}

impl From<caserank::Error> for Failure {
    fn from(e: caserank::Error) -> Self {
        HarnessError::from(e).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Rank(a) => rank(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::NonConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NONCONVERGED)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

fn synth(a: SynthArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => read_json::<SynthConfig>(path)?,
        None => SynthConfig {
            n_queries: 20,
            n_cands_per_query: 100,
            dim: 16,
            positive_fraction: 0.1,
            noise_sigma: 0.0,
            seed: 0,
            planted_w: None,
        },
    };
    cfg.n_queries = a.queries.unwrap_or(cfg.n_queries);
    cfg.n_cands_per_query = a.cands.unwrap_or(cfg.n_cands_per_query);
    cfg.dim = a.dim.unwrap_or(cfg.dim);
    cfg.positive_fraction = a.positive_fraction.unwrap_or(cfg.positive_fraction);
    cfg.noise_sigma = a.noise.unwrap_or(cfg.noise_sigma);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if let Err(e) = cfg.validate() {
        return Err(Failure::Usage(e.to_string()));
    }
    let manifest = generate(&cfg)?.save(&a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct HoldoutFile {
    train_frac: f64,
    seed: u64,
    train: Vec<String>,
    test: Vec<String>,
}

fn split(a: SplitArgs) -> CliResult {
    let ds = load_dataset(&a.manifest)?;
    let ids = ds.query_ids();
    if let Some(k) = a.k {
        let folds = kfold_split(&ids, k, a.seed)?;
        let sizes = folds.fold_sizes();
        write_json(&a.out, &folds)?;
        println!("fold sizes {sizes:?}");
    } else {
        let train_frac = a.train_frac.expect("clap requires --k or --train-frac");
        let (mut train, mut test) = holdout_split(&ids, train_frac, a.seed)?;
        train.sort();
        test.sort();
        println!("train {} test {}", train.len(), test.len());
        write_json(
            &a.out,
            &HoldoutFile {
                train_frac,
                seed: a.seed,
                train,
                test,
            },
        )?;
    }
    Ok(())
}

/// Groups selected by a fold file: `in_fold` picks that fold's queries,
/// otherwise the complement. Everything when no fold file is given.
fn fold_groups<'a>(ds: &'a Dataset, folds: &FoldArgs, in_fold: bool) -> CliResult<Vec<&'a QueryGroup>> {
    let (Some(path), Some(fold)) = (&folds.folds, folds.fold) else {
        return Ok(ds.groups().iter().collect());
    };
    let assignment = FoldAssignment::load(path)?;
    if fold >= assignment.fold_count {
        return Err(Failure::Usage(format!(
            "fold {fold} out of range for {} folds",
            assignment.fold_count
        )));
    }
    Ok(ds
        .groups()
        .iter()
        .filter(|g| (assignment.fold_of(g.query_id()) == Some(fold)) == in_fold)
        .collect())
}

fn train(a: TrainArgs) -> CliResult {
    let ds = load_dataset(&a.manifest)?;
    let groups = fold_groups(&ds, &a.folds, false)?;
    let pair_cfg = PairConfig {
        threshold: a.threshold,
        ..PairConfig::default()
    };
    let json = match a.model {
        ModelKind::Ranksvm => {
            let cfg = SolverConfig {
                epsilon: a.epsilon,
                max_outer_iters: a.max_iters,
                ..SolverConfig::with_c(a.c)
            };
            cfg.validate()?;
            let pairs = generate_pairs_for(groups.iter().copied(), &pair_cfg)?;
            let model = ranksvm::train(&pairs, &cfg)?;
            let m = &model.meta;
            println!(
                "pairs {} iters {} objective {} converged {}",
                m.n_pairs, m.iters, m.objective, m.converged
            );
            let json = model.to_json()?;
            if a.strict && !m.converged {
                write_atomic(&a.out, json.as_bytes())?;
                return Err(Failure::NonConverged(format!(
                    "cutting plane stopped after {} iterations without reaching epsilon",
                    m.iters
                )));
            }
            json
        }
        ModelKind::Ranknet => {
            let d = RankNetParams::default();
            let params = RankNetParams {
                lr: a.lr.unwrap_or(d.lr),
                epochs: a.epochs.unwrap_or(d.epochs),
                seed: a.seed,
                hidden_width: a.hidden,
            };
            let pairs = generate_pairs_for(groups.iter().copied(), &pair_cfg)?;
            train_ranknet(&pairs, &params)?.to_json()?
        }
        ModelKind::Logistic => {
            let d = LogisticParams::default();
            let params = LogisticParams {
                lr: a.lr.unwrap_or(d.lr),
                epochs: a.epochs.unwrap_or(d.epochs),
                seed: a.seed,
                ..d
            };
            let (xs, ys) = pointwise_examples(groups.iter().copied(), a.threshold);
            train_logistic(&xs, &ys, &params)?.to_json()?
        }
    };
    Ok(write_atomic(&a.out, json.as_bytes())?)
}

fn rank(a: RankArgs) -> CliResult {
    let model = load_model(&a.model_file)?;
    let ds = load_dataset(&a.manifest)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["query_id", "cand_id", "label", "score"])
        .map_err(HarnessError::from)?;
    for g in ds.groups() {
        let scores = model.score_group(g)?;
        let labels = binarize_labels(g, a.threshold);
        let order = caserank::data::ranked_order(g, &scores);
        for i in order {
            let c = &g.candidates()[i];
            w.write_record([
                g.query_id(),
                &c.cand_id,
                &labels[i].to_string(),
                &scores[i].to_string(),
            ])
            .map_err(HarnessError::from)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Data(e.to_string()))?;
    match &a.out {
        Some(path) => write_atomic(path, &bytes)?,
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Failure::Data(e.to_string()))?,
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let model = load_model(&a.model_file)?;
    let ds = load_dataset(&a.manifest)?;
    let config = MetricConfig {
        threshold: a.threshold,
        ..MetricConfig::default()
    };
    let mut per_query = std::collections::BTreeMap::new();
    for g in fold_groups(&ds, &a.folds, true)? {
        let scores = model.score_group(g)?;
        per_query.insert(g.query_id().to_string(), evaluate_query(g, &scores, &config)?);
    }
    let report = MetricReport::from_queries(config, per_query);
    let agg = &report.aggregate;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let ndcg: Vec<String> = agg.ndcg.iter().map(|(k, v)| format!("ndcg@{k} {v:.4}")).collect();
    let prec: Vec<String> = agg.precision.iter().map(|(k, v)| format!("p@{k} {v:.4}")).collect();
    println!(
        "queries {} {} {} tau {} auc {} (auc undefined on {})",
        report.evaluated,
        ndcg.join(" "),
        prec.join(" "),
        fmt(agg.tau),
        fmt(agg.auc),
        report.skipped
    );
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn load_experiment(a: &ExperimentArgs) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        config.protocol = config.protocol.with_seed(seed);
    }
    if matches!(config.protocol, Protocol::Split { .. }) && a.seed.is_some() {
        return Err(Failure::Usage("--seed has no effect on an explicit split".into()));
    }
    let out = a
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Failure::Usage("no output directory: pass --out or set output_dir".into()))?;
    Ok((config, out))
}

fn check_runs(result: &caserank_harness::ExperimentResult, strict: bool) -> CliResult {
    for r in result.failures() {
        eprintln!("warning: {} fold {} failed: {:?}", r.model, r.fold, r.status);
    }
    if strict && result.any_nonconverged() {
        return Err(Failure::NonConverged("a RankSVM run did not converge".into()));
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CliResult {
    let (config, out) = load_experiment(&a.experiment)?;
    let result = sweep_c(&config, &a.grid)?;
    emit_sweep(&result, &out)?;
    for (model, c) in &result.best {
        println!("{model}: best C {c}");
    }
    println!("wrote {}", out.display());
    check_runs(&result.experiment, a.experiment.strict)
}

fn compare(a: CompareArgs) -> CliResult {
    let mut config: CompareConfig = read_json(&a.config)?;
    if !a.seeds.is_empty() {
        config.seeds = a.seeds;
    }
    let summary = compare_pointwise_pairwise(&config)?;
    emit_compare(&summary, &a.out)?;
    let s = &summary.auc_signs;
    println!(
        "mean AUC ranksvm {:.4} logistic {:.4} delta {:+.4}; ranksvm wins {} ties {} losses {}",
        summary.mean_pairwise_auc,
        summary.mean_pointwise_auc,
        summary.mean_auc_delta,
        s.wins,
        s.ties,
        s.losses
    );
    Ok(())
}

fn report(a: ReportArgs) -> CliResult {
    let (config, out) = load_experiment(&a.experiment)?;
    let result = run_experiment(&config)?;
    emit_outputs(&result, &out)?;
    println!("{} runs, wrote {}", result.records.len(), out.display());
    check_runs(&result, a.experiment.strict)
}
