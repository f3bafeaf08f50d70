use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use ngfa::experiment::{RunSummary, RUN_FILE};
use ngfa::io::{self, Checkpoint};
use ngfa::metrics::{stability, EvalProtocol};
use serde_json::Value;

fn ngfa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngfa"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = ngfa(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json summary")
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    ngfa(dir, args).status.code().expect("exit code")
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_writes_dataset_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "sim1", "--n", "20", "--d", "15", "--seed", "1", "--out", "a"]);
    ok(d, &["simulate", "sim1", "--n", "20", "--d", "15", "--seed", "1", "--out", "b"]);
    assert_eq!(read_dir_bytes(&d.join("a")), read_dir_bytes(&d.join("b")));

    let (data, manifest) = io::load_dataset(&d.join("a")).unwrap();
    assert_eq!(manifest.version, io::MANIFEST_VERSION);
    assert_eq!((data.n_samples(), data.dims()), (20, vec![15; 4]));
    for g in ["g1", "g2", "g3", "g4"] {
        assert!(d.join("a").join(format!("truth_{g}.csv")).is_file());
    }

    ok(d, &["simulate", "sim2", "--n", "12", "--d", "10,11,12,13", "--out", "c"]);
    let manifest = io::read_manifest(&d.join("c")).unwrap();
    let truth = io::load_truth(&d.join("c"), &manifest).unwrap();
    assert_eq!(truth.pattern.n_factors(), 8);
    let dense = (0..4)
        .map(|m| truth.pattern.factors_in(m, ngfa::simdata::Cell::Dense).len())
        .sum::<usize>();
    assert_eq!(dense, 4);
    assert_eq!(manifest.generator.unwrap().loading_variance, 4.0);
}

#[test]
fn custom_pattern_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("p.json"), r#"{"cells": [["s", "d"], ["-", "s"]]}"#).unwrap();
    ok(d, &["simulate", "p.json", "--n", "8", "--d", "6", "--out", "ds"]);
    assert_eq!(io::read_manifest(&d.join("ds")).unwrap().generator.unwrap().kind, "custom");
    fs::write(d.join("bad.json"), r#"{"cells": [["s", "-"], ["-", "-"]]}"#).unwrap();
    assert_eq!(code(d, &["simulate", "bad.json", "--out", "x"]), 2);
}

#[test]
fn fit_records_seeds_defaults_and_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "sim1", "--n", "12", "--d", "9", "--out", "ds"]);
    let summary = ok(
        d,
        &["fit", "ds", "--restarts", "3", "--seed", "5", "--max-sweeps", "1", "--out", "run"],
    );
    // min(N, max D) with N = 12 and D = 9.
    assert_eq!(summary["truncation"], 9);
    assert_eq!(summary["truncation_source"], "default");

    let run: RunSummary = serde_json::from_str(&fs::read_to_string(d.join("run").join(RUN_FILE)).unwrap()).unwrap();
    assert_eq!(run.seeds, vec![5, 6, 7]);
    let h = run.hyperparameters;
    assert_eq!(h.kappa0, 1.0);
    assert!([h.c0, h.d0, h.e0, h.f0, h.g0, h.h0].iter().all(|&v| v == 0.1));

    let trace = fs::read_to_string(d.join("run/restart_00/trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "sweep,objective,train_mse,k_active");
    assert!(d.join("run/best.json").is_file());
}

#[test]
fn fit_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "sim2", "--n", "15", "--d", "8", "--out", "ds"]);
    fs::write(
        d.join("cfg.json"),
        r#"{"dataset": "ds", "restarts": 2, "seed": 9, "max_sweeps": 20, "hyperparameters": {"K": 6}}"#,
    )
    .unwrap();
    ok(d, &["fit", "--config", "cfg.json", "--out", "r1", "--threads", "2"]);
    ok(d, &["fit", "--config", "cfg.json", "--out", "r2", "--threads", "1"]);
    for r in ["restart_00", "restart_01"] {
        assert_eq!(
            fs::read(d.join("r1").join(r).join("trace.csv")).unwrap(),
            fs::read(d.join("r2").join(r).join("trace.csv")).unwrap()
        );
        assert_eq!(
            fs::read(d.join("r1").join(r).join("checkpoint.json")).unwrap(),
            fs::read(d.join("r2").join(r).join("checkpoint.json")).unwrap()
        );
    }
    let cp = Checkpoint::load(&d.join("r1/restart_01/checkpoint.json")).unwrap();
    assert_eq!((cp.state.truncation(), cp.fit_options.seed), (6, 10));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(code(d, &["frobnicate"]), 2);
    assert_eq!(code(d, &["fit", "missing", "--out", "x"]), 3);
    ok(d, &["simulate", "sim1", "--n", "10", "--d", "5", "--out", "ds"]);
    assert_eq!(code(d, &["fit", "ds", "--restarts", "0", "--out", "x"]), 2);
    assert_eq!(code(d, &["fit", "ds", "--tol", "-1", "--out", "x"]), 2);
    fs::write(d.join("c.json"), r#"{"restarts": 1, "unknown": true}"#).unwrap();
    assert_eq!(code(d, &["fit", "ds", "--config", "c.json", "--out", "x"]), 2);

    fs::write(d.join("ds/group_g2.csv"), "1,2\n").unwrap();
    assert_eq!(code(d, &["fit", "ds", "--out", "x"]), 3);

    // Finite but overflowing values make every restart fail numerically.
    ok(d, &["simulate", "sim1", "--n", "10", "--d", "5", "--out", "big"]);
    let row = ["1e200"; 5].join(",");
    fs::write(d.join("big/group_g1.csv"), vec![row; 10].join("\n")).unwrap();
    assert_eq!(code(d, &["fit", "big", "--restarts", "2", "--k", "3", "--out", "r"]), 4);
    let run: RunSummary = serde_json::from_str(&fs::read_to_string(d.join("r").join(RUN_FILE)).unwrap()).unwrap();
    assert!(run.restarts.iter().all(|r| r.message.is_some()));
}

/// Fits a small sim1 dataset with K equal to the true number of factors.
fn fitted(d: &Path) {
    ok(d, &["simulate", "sim1", "--n", "30", "--d", "12", "--seed", "2", "--out", "ds"]);
    ok(d, &["fit", "ds", "--restarts", "1", "--k", "6", "--max-sweeps", "30", "--out", "run"]);
}

#[test]
fn eval_of_the_truth_matches_a_perfect_match() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fitted(d);
    let path = d.join("run/restart_00/checkpoint.json");
    let mut cp = Checkpoint::load(&path).unwrap();
    let manifest = io::read_manifest(&d.join("ds")).unwrap();
    let truth = io::load_truth(&d.join("ds"), &manifest).unwrap();
    for m in 0..4 {
        cp.state.rho[m].fill(1.0);
        cp.state.w_mean[m] = truth.loadings[m].clone();
    }
    cp.save(&path).unwrap();

    let report = ok(d, &["eval", "run", "--truth", "ds", "--mode", "sim1", "--out", "metrics.json"]);
    let expected = stability(&truth.loadings, &truth.pattern, &truth.loadings, EvalProtocol::SPARSE_ONLY).unwrap();
    assert!((report["stability"]["ssi"].as_f64().unwrap() - expected.ssi).abs() < 1e-12);
    assert!(d.join("metrics.json").is_file());

    let sim2 = ok(d, &["eval", "run/restart_00", "--truth", "ds", "--mode", "sim2"]);
    assert_eq!(sim2["stability"]["n_dense_selected"], 4);
    assert_eq!(code(d, &["eval", "run", "--truth", "nowhere"]), 3);
}

#[test]
fn rank_outputs_and_auc() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fitted(d);
    let summary = ok(d, &["rank", "run", "--group-a", "g2", "--group-b", "g3", "--out", "s.csv"]);
    assert!(summary.get("auc").is_none());
    let text = fs::read_to_string(d.join("s.csv")).unwrap();
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 12);
    let scores: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    fs::write(d.join("labels.csv"), "1\n0\n1\n0\n0\n0\n0\n0\n0\n0\n0\n1\n").unwrap();
    let with = ok(d, &["rank", "run", "--group-a", "g2", "--group-b", "g3", "--labels", "labels.csv", "--out", "s.csv"]);
    let auc = with["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(code(d, &["rank", "run", "--group-a", "g2", "--group-b", "zz", "--out", "s.csv"]), 2);

    let path = d.join("run/restart_00/checkpoint.json");
    let mut cp = Checkpoint::load(&path).unwrap();
    cp.state.w_mean.iter_mut().for_each(|w| w.fill(0.0));
    cp.save(&path).unwrap();
    ok(d, &["rank", "run", "--group-a", "g1", "--group-b", "g4", "--out", "z.csv"]);
    let zeros = fs::read_to_string(d.join("z.csv")).unwrap();
    assert!(zeros.lines().skip(1).all(|l| l.ends_with(",0.0")));
}

#[test]
fn reconstruct_scales_linearly_and_checks_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fitted(d);
    let out = ok(
        d,
        &[
            "reconstruct", "run", "--observed", "g1=ds/group_g1.csv", "--observed", "g2=ds/group_g2.csv",
            "--target", "g3", "--target-truth", "ds/group_g3.csv", "--out", "r1.csv",
        ],
    );
    assert!(out["mse"].as_f64().unwrap().is_finite());

    let g1 = io::read_matrix_csv(&d.join("ds/group_g1.csv")).unwrap();
    let g2 = io::read_matrix_csv(&d.join("ds/group_g2.csv")).unwrap();
    io::write_matrix_csv(&d.join("g1x.csv"), &(&g1 * 2.5)).unwrap();
    io::write_matrix_csv(&d.join("g2x.csv"), &(&g2 * 2.5)).unwrap();
    ok(d, &["reconstruct", "run", "--observed", "g2=g2x.csv", "--observed", "g1=g1x.csv", "--target", "g3", "--out", "r2.csv"]);
    let r1: Array2<f64> = io::read_matrix_csv(&d.join("r1.csv")).unwrap();
    let r2 = io::read_matrix_csv(&d.join("r2.csv")).unwrap();
    let diff = (&r2 - &(&r1 * 2.5)).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
    assert!(diff < 1e-9, "max deviation {diff}");

    assert_eq!(code(d, &["reconstruct", "run", "--target", "g3", "--out", "x.csv"]), 2);
    assert_eq!(code(d, &["reconstruct", "run", "--observed", "g1", "--target", "g3", "--out", "x.csv"]), 2);
    assert_eq!(code(d, &["reconstruct", "run", "--observed", "g1=ds/group_g2.csv", "--target", "g3", "--out", "x.csv"]), 0);
    fs::write(d.join("narrow.csv"), "1,2\n").unwrap();
    assert_eq!(code(d, &["reconstruct", "run", "--observed", "g1=narrow.csv", "--target", "g3", "--out", "x.csv"]), 3);
}
