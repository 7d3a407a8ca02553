use std::path::Path;
use std::process::{Command, Output};

fn caserank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caserank"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path) {
    let out = caserank(
        dir,
        &["synth", "--queries", "12", "--cands", "30", "--dim", "3", "--seed", "4", "--out", "data"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    assert_eq!(code(&caserank(d, &["--help"])), 0);
    assert_eq!(code(&caserank(d, &["train", "--bogus"])), 1);
    assert_eq!(code(&caserank(d, &["frobnicate"])), 1);
    assert_eq!(
        code(&caserank(d, &["train", "--manifest", "missing.json", "--out", "m.json"])),
        2
    );
    assert_eq!(
        code(&caserank(d, &["train", "--manifest", "data/manifest.json", "--C", "-1", "--out", "m.json"])),
        1
    );
    let strict = [
        "train", "--manifest", "data/manifest.json", "--C", "100", "--max-iters", "1", "--strict", "--out",
        "m.json",
    ];
    assert_eq!(code(&caserank(d, &strict)), 3);
    let lenient: Vec<&str> = strict.iter().copied().filter(|a| *a != "--strict").collect();
    assert_eq!(code(&caserank(d, &lenient)), 0);
}

#[test]
fn train_rank_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let out = caserank(d, &["split", "--manifest", "data/manifest.json", "--k", "3", "--out", "folds.json"]);
    assert_eq!(code(&out), 0);
    for model in ["ranksvm", "ranknet", "logistic"] {
        let file = format!("{model}.json");
        let train = [
            "train", "--manifest", "data/manifest.json", "--model", model, "--folds", "folds.json",
            "--fold", "0", "--out", &file,
        ];
        assert_eq!(code(&caserank(d, &train)), 0, "{model}");
        let rank = caserank(d, &["rank", "--manifest", "data/manifest.json", "--model-file", &file]);
        assert_eq!(code(&rank), 0);
        let dump = String::from_utf8(rank.stdout).unwrap();
        assert!(dump.starts_with("query_id,cand_id,label,score\n"));
        assert_eq!(dump.lines().count(), 1 + 12 * 30);
        let eval = [
            "eval", "--manifest", "data/manifest.json", "--model-file", &file, "--folds", "folds.json",
            "--fold", "0", "--out", "report.json",
        ];
        assert_eq!(code(&caserank(d, &eval)), 0);
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["evaluated"], 4);
    }
}

#[test]
fn sweep_and_report_write_identical_summaries_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    std::fs::write(
        d.join("exp.json"),
        r#"{"dataset": "data/manifest.json",
            "protocol": {"kind": "kfold", "k": 3, "seed": 2},
            "models": [{"model": "ranksvm"}, {"model": "logistic"}],
            "c_grid": [0.1, 1, 10]}"#,
    )
    .unwrap();
    for cmd in ["sweep", "report"] {
        for out in ["a", "b"] {
            let run = caserank(d, &[cmd, "--config", "exp.json", "--out", &format!("{cmd}-{out}")]);
            assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        }
        let a = std::fs::read(d.join(format!("{cmd}-a/summary.csv"))).unwrap();
        let b = std::fs::read(d.join(format!("{cmd}-b/summary.csv"))).unwrap();
        assert_eq!(a, b);
    }
    let sweep = std::fs::read_to_string(d.join("sweep-a/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 + 1);
}
