use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use ngfa::engine::{predict_factor_means, reconstruct_group};
use ngfa::experiment::{evaluate, run_restarts, write_run, BestPointer, RestartStatus, BEST_FILE};
use ngfa::io::{self, Checkpoint, GeneratorInfo};
use ngfa::metrics::{auc, ranking_score};
use ngfa::simdata::{generate, simulation1_pattern, simulation2_pattern, SparsityPattern};
use serde_json::{json, Value};

use crate::args::{EvalArgs, FitArgs, RankArgs, ReconstructArgs, SimulateArgs};
use crate::config;
use crate::error::{CliError, CliResult};

/// Runs `f` on a pool with `threads` workers, or on the global pool.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

pub fn simulate(args: &SimulateArgs, seed: Option<u64>) -> CliResult<Value> {
    let seed = seed.unwrap_or(0);
    let (kind, pattern) = match args.spec.as_str() {
        "sim1" => ("sim1", simulation1_pattern()),
        "sim2" => ("sim2", simulation2_pattern()),
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read pattern file {path}: {e}")))?;
            let p: SparsityPattern =
                serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid pattern file {path}: {e}")))?;
            ("custom", p)
        }
    };
    let dims = match args.d.as_slice() {
        [d] => vec![*d; pattern.n_groups()],
        ds => ds.to_vec(),
    };
    let (data, truth) = generate(&pattern, args.n, &dims, seed)?;
    let info = GeneratorInfo::new(kind, seed, pattern.n_factors());
    let manifest = io::write_dataset(&args.out, &data, Some((&truth, info)))?;
    Ok(json!({ "out": args.out, "manifest": manifest }))
}

pub fn fit(args: &FitArgs, seed: Option<u64>, threads: Option<usize>) -> CliResult<Value> {
    let partial = config::partial(args, seed, threads)?;
    let (data, _) = io::load_dataset(&partial.dataset)?;
    let run = config::resolve(partial, args, &data)?;
    let outcomes = with_threads(run.threads, || run_restarts(&data, &run.hyper, &run.fit, run.n_restarts))??;
    let summary = write_run(&run.out, &data, &run.hyper, &run.fit, run.truncation_source, &outcomes)?;
    if summary.restarts.iter().all(|r| r.status == RestartStatus::Failed) {
        for r in &summary.restarts {
            eprintln!("restart {} (seed {}): {}", r.restart, r.seed, r.message.as_deref().unwrap_or(""));
        }
        return Err(CliError::AllRestartsFailed(summary.n_restarts));
    }
    Ok(json!({
        "out": run.out,
        "truncation": run.hyper.truncation,
        "truncation_source": run.truncation_source,
        "best_restart": summary.best_restart,
        "final_train_mse": summary.final_train_mse,
        "k_active": summary.k_active,
        "failed_restarts": summary.restarts.iter().filter(|r| r.status == RestartStatus::Failed).count(),
    }))
}

/// Accepts a checkpoint file, a restart directory, or a run directory.
fn checkpoint_path(path: &Path) -> CliResult<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let best = path.join(BEST_FILE);
    if best.is_file() {
        let text = fs::read_to_string(&best)?;
        let pointer: BestPointer = serde_json::from_str(&text)
            .map_err(|e| ngfa::NgfaError::Data(format!("{}: {e}", best.display())))?;
        return Ok(io::resolve(path, &pointer.checkpoint));
    }
    Ok(path.join(io::CHECKPOINT_FILE))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Ok(Checkpoint::load(&checkpoint_path(path)?)?)
}

fn emit(value: Value, out: Option<&Path>) -> CliResult<Value> {
    if let Some(path) = out {
        fs::write(path, serde_json::to_string_pretty(&value)? + "\n")?;
    }
    Ok(value)
}

pub fn eval(args: &EvalArgs) -> CliResult<Value> {
    let cp = load_checkpoint(&args.checkpoint)?;
    let manifest = io::read_manifest(&args.truth)?;
    let truth = io::load_truth(&args.truth, &manifest)?;
    let report = evaluate(&cp, &truth, args.mode.into())?;
    emit(serde_json::to_value(report)?, args.out.as_deref())
}

fn read_labels(path: &Path, expected: usize) -> CliResult<Vec<bool>> {
    let m = io::read_matrix_csv(path)?;
    if m.len() != expected || (m.nrows() != 1 && m.ncols() != 1) {
        return Err(ngfa::NgfaError::Data(format!(
            "{}: expected {expected} labels in one row or column, found a {}x{} table",
            path.display(),
            m.nrows(),
            m.ncols()
        ))
        .into());
    }
    m.iter()
        .map(|&v| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(ngfa::NgfaError::Data(format!("{}: labels must be 0 or 1, found {v}", path.display())).into()),
        })
        .collect()
}

pub fn rank(args: &RankArgs) -> CliResult<Value> {
    let cp = load_checkpoint(&args.checkpoint)?;
    let a = cp.group_index(&args.group_a)?;
    let b = cp.group_index(&args.group_b)?;
    let scores = ranking_score(&cp.state, a, b)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));

    let mut w = csv::Writer::from_path(&args.out).map_err(ngfa::NgfaError::from)?;
    w.write_record(["rank", "column", "score"]).map_err(ngfa::NgfaError::from)?;
    for (r, &i) in order.iter().enumerate() {
        w.write_record([(r + 1).to_string(), i.to_string(), format!("{:?}", scores[i])])
            .map_err(ngfa::NgfaError::from)?;
    }
    w.flush()?;

    let mut summary = json!({ "out": args.out, "columns": scores.len() });
    if let Some(path) = &args.labels {
        let labels = read_labels(path, scores.len())?;
        summary["auc"] = json!(auc(scores.as_slice().expect("contiguous"), &labels)?);
    }
    Ok(summary)
}

fn parse_observed(spec: &str) -> CliResult<(&str, &str)> {
    spec.split_once('=')
        .filter(|(name, file)| !name.is_empty() && !file.is_empty())
        .ok_or_else(|| CliError::usage(format!("--observed expects NAME=FILE, got {spec:?}")))
}

pub fn reconstruct(args: &ReconstructArgs) -> CliResult<Value> {
    if args.observed.is_empty() {
        return Err(CliError::usage("at least one --observed group is required"));
    }
    let cp = load_checkpoint(&args.checkpoint)?;
    let target = cp.group_index(&args.target)?;
    let mut observed: Vec<(usize, Array2<f64>)> = Vec::with_capacity(args.observed.len());
    for spec in &args.observed {
        let (name, file) = parse_observed(spec)?;
        observed.push((cp.group_index(name)?, io::read_matrix_csv(Path::new(file))?));
    }
    let views: Vec<(usize, ArrayView2<f64>)> = observed.iter().map(|(m, x)| (*m, x.view())).collect();
    let factors = predict_factor_means(&cp.state, &views)?;
    let recon = reconstruct_group(&cp.state, &factors, target);
    io::write_matrix_csv(&args.out, &recon)?;

    let mut summary = json!({ "out": args.out, "rows": recon.nrows(), "cols": recon.ncols() });
    if let Some(path) = &args.target_truth {
        let truth = io::read_matrix_csv(path)?;
        if truth.dim() != recon.dim() {
            return Err(ngfa::NgfaError::Data(format!(
                "target truth is {}x{}, reconstruction {}x{}",
                truth.nrows(),
                truth.ncols(),
                recon.nrows(),
                recon.ncols()
            ))
            .into());
        }
        let mse = (&truth - &recon).mapv(|v| v * v).mean().unwrap_or(0.0);
        summary["mse"] = json!(mse);
    }
    Ok(summary)
}
