use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use caserank::metrics::MetricConfig;
use serde::Serialize;

use crate::compare::CompareSummary;
use crate::error::{HarnessError, Result};
use crate::run::{ExperimentResult, RunRecord, SweepResult};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.json";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const COMPARE_JSON: &str = "compare.json";
pub const COMPARE_CSV: &str = "compare.csv";
pub const ROC_DIR: &str = "roc";
pub const SCORES_DIR: &str = "scores";
/// Fold label of aggregate rows in the summary.
pub const MEAN_FOLD: &str = "mean";

/// Writes `bytes` to `path` via a temporary file in the same directory and
/// a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(HarnessError::io(dir))?;
    tmp.write_all(bytes).map_err(HarnessError::io(path))?;
    tmp.persist(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_header(metrics: &MetricConfig) -> Vec<String> {
    let mut h = vec!["model".to_string(), "C".to_string(), "fold".to_string()];
    h.extend(metrics.ndcg_ks.iter().map(|k| format!("ndcg@{k}")));
    h.extend(metrics.precision_ks.iter().map(|k| format!("p@{k}")));
    h.push("auc".into());
    h
}

fn metric_values(r: &RunRecord, metrics: &MetricConfig) -> Vec<Option<f64>> {
    let mut v: Vec<Option<f64>> = metrics.ndcg_ks.iter().map(|&k| r.ndcg(k)).collect();
    v.extend(metrics.precision_ks.iter().map(|&k| r.report.as_ref().and_then(|m| m.precision(k))));
    v.push(r.auc());
    v
}

/// Summary rows: per model, its fold rows in canonical order followed by one
/// `mean` row per C. Failed runs keep their row with empty metric cells and
/// are left out of the mean.
pub fn summary_rows(result: &ExperimentResult) -> Vec<Vec<String>> {
    let metrics = &result.metrics;
    let models: BTreeSet<&str> = result.records.iter().map(|r| r.model.as_str()).collect();
    let mut rows = Vec::new();
    for model in models {
        let runs: Vec<&RunRecord> = result.records.iter().filter(|r| r.model == model).collect();
        for r in &runs {
            let mut row = vec![r.model.clone(), fmt(r.c), r.fold.to_string()];
            row.extend(metric_values(r, metrics).into_iter().map(fmt));
            rows.push(row);
        }
        let mut cs: Vec<Option<f64>> = runs.iter().map(|r| r.c).collect();
        cs.sort_by(|a, b| a.unwrap_or(0.0).total_cmp(&b.unwrap_or(0.0)));
        cs.dedup();
        for c in cs {
            let vals: Vec<Vec<Option<f64>>> = runs
                .iter()
                .filter(|r| r.c == c && r.is_ok())
                .map(|r| metric_values(r, metrics))
                .collect();
            let width = vals.first().map_or(0, Vec::len);
            let means = (0..width).map(|i| {
                let col: Vec<f64> = vals.iter().filter_map(|v| v[i]).collect();
                (!col.is_empty()).then(|| col.iter().sum::<f64>() / col.len() as f64)
            });
            let mut row = vec![model.to_string(), fmt(c), MEAN_FOLD.to_string()];
            if width == 0 {
                row.extend(std::iter::repeat_n(String::new(), summary_header(metrics).len() - 3));
            } else {
                row.extend(means.map(fmt));
            }
            rows.push(row);
        }
    }
    rows
}

pub fn summary_csv(result: &ExperimentResult) -> Result<Vec<u8>> {
    csv_bytes(&summary_header(&result.metrics), summary_rows(result))
}

fn roc_csv(r: &RunRecord) -> Result<Vec<u8>> {
    let header = ["threshold", "fpr", "tpr"].map(String::from);
    let points = r.roc.iter().flat_map(|c| &c.points);
    csv_bytes(
        &header,
        points.map(|p| vec![p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()]),
    )
}

fn scores_csv(r: &RunRecord) -> Result<Vec<u8>> {
    let header = ["query_id", "cand_id", "label", "score"].map(String::from);
    csv_bytes(
        &header,
        r.scores.iter().map(|s| {
            vec![s.query_id.clone(), s.cand_id.clone(), s.label.to_string(), s.score.to_string()]
        }),
    )
}

#[derive(Serialize)]
struct RunsFile<'a> {
    config_hash: &'a str,
    records: &'a [RunRecord],
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_hash: &'a str,
    runs: usize,
    failed: usize,
    files: Vec<String>,
}

/// Summary CSV, per-query JSON, one ROC CSV and one score dump per
/// successful run, and a run manifest listing them. Returns the paths
/// written, manifest last.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |rel: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(&rel);
        write_atomic(&path, &bytes)?;
        written.push(rel);
        Ok(())
    };
    put(SUMMARY_FILE.into(), summary_csv(result)?)?;
    let runs = serde_json::to_vec_pretty(&RunsFile {
        config_hash: &result.config_hash,
        records: &result.records,
    })
    .map_err(|source| HarnessError::Json {
        path: dir.join(RUNS_FILE),
        source,
    })?;
    put(RUNS_FILE.into(), runs)?;
    for r in result.records.iter().filter(|r| r.is_ok()) {
        put(format!("{ROC_DIR}/{}.csv", r.stem()), roc_csv(r)?)?;
        put(format!("{SCORES_DIR}/{}.csv", r.stem()), scores_csv(r)?)?;
    }
    finish(dir, result, written)
}

fn finish(dir: &Path, result: &ExperimentResult, files: Vec<String>) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: &result.config_hash,
        runs: result.records.len(),
        failed: result.failures().count(),
        files: files.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let mut paths: Vec<PathBuf> = files.iter().map(|f| dir.join(f)).collect();
    paths.push(dir.join(MANIFEST_FILE));
    Ok(paths)
}

pub fn sweep_csv(sweep: &SweepResult) -> Result<Vec<u8>> {
    let header = ["model", "C", "ndcg@10", "best"].map(String::from);
    csv_bytes(
        &header,
        sweep.table.iter().map(|row| {
            vec![
                row.model.clone(),
                fmt(row.c),
                fmt(row.selection_score),
                u8::from(row.best).to_string(),
            ]
        }),
    )
}

/// Everything [`emit_outputs`] writes, plus the grid table.
pub fn emit_sweep(sweep: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = emit_outputs(&sweep.experiment, dir)?;
    let path = dir.join(SWEEP_FILE);
    write_atomic(&path, &sweep_csv(sweep)?)?;
    paths.insert(paths.len() - 1, path);
    Ok(paths)
}

pub fn compare_csv(summary: &CompareSummary) -> Result<Vec<u8>> {
    let k = summary.ndcg_k;
    let header = [
        "seed".to_string(),
        "ranksvm_auc".into(),
        "logistic_auc".into(),
        "auc_delta".into(),
        format!("ranksvm_ndcg@{k}"),
        format!("logistic_ndcg@{k}"),
        "ndcg_delta".into(),
    ];
    csv_bytes(
        &header,
        summary.per_seed.iter().map(|s| {
            vec![
                s.seed.to_string(),
                s.pairwise_auc.to_string(),
                s.pointwise_auc.to_string(),
                s.auc_delta.to_string(),
                s.pairwise_ndcg.to_string(),
                s.pointwise_ndcg.to_string(),
                s.ndcg_delta.to_string(),
            ]
        }),
    )
}

pub fn emit_compare(summary: &CompareSummary, dir: &Path) -> Result<Vec<PathBuf>> {
    let json = dir.join(COMPARE_JSON);
    write_json(&json, summary)?;
    let csv = dir.join(COMPARE_CSV);
    write_atomic(&csv, &compare_csv(summary)?)?;
    Ok(vec![json, csv])
}
