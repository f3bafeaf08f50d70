//! Multi-restart fitting and evaluation against a stored truth.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{expected_loadings, fit, FitReport};
use crate::error::{NgfaError, Result};
use crate::io::{self, Checkpoint, StoredTruth};
use crate::metrics::{stability, EvalProtocol, StabilityReport};
use crate::model::{active_factors, FitOptions, GroupedDataset, Hyperparameters};

pub const RUN_VERSION: u32 = 1;
pub const RUN_FILE: &str = "run.json";
pub const BEST_FILE: &str = "best.json";
pub const DEFAULT_RESTARTS: usize = 20;

/// Truncation used when none is configured: `min(N, max_m D_m)`.
pub fn default_truncation(data: &GroupedDataset) -> usize {
    let widest = data.dims().into_iter().max().unwrap_or(1);
    data.n_samples().min(widest).max(1)
}

/// Directory name of restart `r` inside a run directory.
pub fn restart_dir(r: usize) -> String {
    format!("restart_{r:02}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestartStatus {
    Ok,
    Failed,
}

/// Per-restart summary; failures keep their message instead of aborting the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub seed: u64,
    pub status: RestartStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub converged: bool,
    pub sweeps_run: usize,
    pub final_objective: Option<f64>,
    pub final_train_mse: Option<f64>,
    pub k_active: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub record: RestartRecord,
    pub report: Option<FitReport>,
}

/// Fits `n_restarts` independent restarts with seeds `opts.seed + r`, in
/// parallel on the current rayon pool. Results come back in restart order.
pub fn run_restarts(
    data: &GroupedDataset,
    hyper: &Hyperparameters,
    opts: &FitOptions,
    n_restarts: usize,
) -> Result<Vec<RestartOutcome>> {
    if n_restarts == 0 {
        return Err(NgfaError::config("at least one restart is required"));
    }
    hyper.validate()?;
    opts.validate()?;
    Ok((0..n_restarts)
        .into_par_iter()
        .map(|r| {
            let seed = opts.seed.wrapping_add(r as u64);
            let ropts = FitOptions { seed, ..*opts };
            match fit(data, hyper, &ropts) {
                Ok(report) => {
                    let last = report.trace.last();
                    RestartOutcome {
                        record: RestartRecord {
                            restart: r,
                            seed,
                            status: RestartStatus::Ok,
                            message: None,
                            converged: report.converged,
                            sweeps_run: report.sweeps_run,
                            final_objective: last.map(|t| t.objective),
                            final_train_mse: last.map(|t| t.train_mse),
                            k_active: last.map(|t| t.k_active),
                        },
                        report: Some(report),
                    }
                }
                Err(e) => RestartOutcome {
                    record: RestartRecord {
                        restart: r,
                        seed,
                        status: RestartStatus::Failed,
                        message: Some(e.to_string()),
                        converged: false,
                        sweeps_run: 0,
                        final_objective: None,
                        final_train_mse: None,
                        k_active: None,
                    },
                    report: None,
                },
            }
        })
        .collect())
}

/// Index of the successful restart with the lowest final training MSE; ties
/// go to the earlier restart.
pub fn best_restart(records: &[RestartRecord]) -> Option<usize> {
    records
        .iter()
        .filter(|r| r.status == RestartStatus::Ok)
        .filter_map(|r| r.final_train_mse.map(|m| (r.restart, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(r, _)| r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    /// Sample mean and standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanSd { mean, sd, n })
    }
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub hyperparameters: Hyperparameters,
    pub fit_options: FitOptions,
    pub n_restarts: usize,
    /// `default` when K was set to `min(N, max_m D_m)`, else `configured`.
    pub truncation_source: String,
    pub seeds: Vec<u64>,
    pub restarts: Vec<RestartRecord>,
    pub final_train_mse: Option<MeanSd>,
    pub k_active: Option<MeanSd>,
    pub best_restart: Option<usize>,
}

/// Contents of `best.json`: a pointer to the selected restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPointer {
    pub version: u32,
    pub restart: usize,
    pub seed: u64,
    pub final_train_mse: f64,
    /// Relative to the run directory.
    pub checkpoint: String,
    pub trace: String,
}

/// Writes each successful restart's checkpoint and trace under
/// `restart_<r>/`, then `run.json` and, when any restart succeeded,
/// `best.json`.
pub fn write_run(
    out: &Path,
    data: &GroupedDataset,
    hyper: &Hyperparameters,
    opts: &FitOptions,
    truncation_source: &str,
    outcomes: &[RestartOutcome],
) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    for o in outcomes {
        if let Some(report) = &o.report {
            let dir = out.join(restart_dir(o.record.restart));
            fs::create_dir_all(&dir)?;
            let ropts = FitOptions { seed: o.record.seed, ..*opts };
            Checkpoint::from_report(data.names(), hyper, &ropts, report).save(&dir.join(io::CHECKPOINT_FILE))?;
            io::write_trace(&dir.join(io::TRACE_FILE), &report.trace)?;
        }
    }
    let records: Vec<RestartRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let ok: Vec<&RestartRecord> = records.iter().filter(|r| r.status == RestartStatus::Ok).collect();
    let mses: Vec<f64> = ok.iter().filter_map(|r| r.final_train_mse).collect();
    let ks: Vec<f64> = ok.iter().filter_map(|r| r.k_active.map(|k| k as f64)).collect();
    let best = best_restart(&records);
    let summary = RunSummary {
        version: RUN_VERSION,
        hyperparameters: *hyper,
        fit_options: *opts,
        n_restarts: records.len(),
        truncation_source: truncation_source.to_string(),
        seeds: records.iter().map(|r| r.seed).collect(),
        restarts: records.clone(),
        final_train_mse: MeanSd::of(&mses),
        k_active: MeanSd::of(&ks),
        best_restart: best,
    };
    write_pretty(&out.join(RUN_FILE), &summary)?;
    if let Some(b) = best {
        let rec = &records[b];
        let dir = restart_dir(b);
        let pointer = BestPointer {
            version: RUN_VERSION,
            restart: b,
            seed: rec.seed,
            final_train_mse: rec.final_train_mse.unwrap_or(f64::NAN),
            checkpoint: format!("{dir}/{}", io::CHECKPOINT_FILE),
            trace: format!("{dir}/{}", io::TRACE_FILE),
        };
        write_pretty(&out.join(BEST_FILE), &pointer)?;
    }
    Ok(summary)
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Evaluation mode for simulated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Sparse loadings only.
    Sim1,
    /// Sparse plus four dense factors per group.
    Sim2,
}

impl EvalMode {
    pub fn protocol(self) -> EvalProtocol {
        match self {
            EvalMode::Sim1 => EvalProtocol::SPARSE_ONLY,
            EvalMode::Sim2 => EvalProtocol::SPARSE_DENSE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub protocol: EvalProtocol,
    pub k_active: usize,
    pub final_train_mse: Option<f64>,
    pub stability: StabilityReport,
}

/// Scores a checkpoint's posterior mean loadings against a stored truth.
pub fn evaluate(checkpoint: &Checkpoint, truth: &StoredTruth, mode: EvalMode) -> Result<EvalReport> {
    let state = &checkpoint.state;
    if truth.loadings.len() != state.n_groups() {
        return Err(NgfaError::data(format!(
            "truth has {} groups, checkpoint {}",
            truth.loadings.len(),
            state.n_groups()
        )));
    }
    for (m, (t, d)) in truth.loadings.iter().zip(state.dims()).enumerate() {
        if t.ncols() != d {
            return Err(NgfaError::data(format!(
                "group {m}: truth has {} columns, checkpoint {d}",
                t.ncols()
            )));
        }
    }
    let recovered: Vec<_> = (0..state.n_groups()).map(|m| expected_loadings(state, m)).collect();
    let protocol = mode.protocol();
    let stability = stability(&truth.loadings, &truth.pattern, &recovered, protocol)?;
    Ok(EvalReport {
        mode,
        protocol,
        k_active: active_factors(state, checkpoint.fit_options.active_factor_threshold).len(),
        final_train_mse: checkpoint.final_train_mse,
        stability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{generate, simulation1_pattern};
    use ndarray::Array2;

    fn record(restart: usize, mse: Option<f64>, status: RestartStatus) -> RestartRecord {
        RestartRecord {
            restart,
            seed: restart as u64,
            status,
            message: None,
            converged: true,
            sweeps_run: 1,
            final_objective: None,
            final_train_mse: mse,
            k_active: None,
        }
    }

    #[test]
    fn default_truncation_uses_widest_group() {
        let data = GroupedDataset::unnamed(vec![Array2::zeros((40, 10)), Array2::zeros((40, 100))]).unwrap();
        assert_eq!(default_truncation(&data), 40);
        let data = GroupedDataset::unnamed(vec![Array2::zeros((100, 10)), Array2::zeros((100, 30))]).unwrap();
        assert_eq!(default_truncation(&data), 30);
    }

    #[test]
    fn best_skips_failures_and_breaks_ties_early() {
        let recs = vec![
            record(0, Some(0.5), RestartStatus::Ok),
            record(1, None, RestartStatus::Failed),
            record(2, Some(0.2), RestartStatus::Ok),
            record(3, Some(0.2), RestartStatus::Ok),
        ];
        assert_eq!(best_restart(&recs), Some(2));
        assert_eq!(best_restart(&recs[1..2]), None);
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(MeanSd::of(&[]), None);
        assert_eq!(MeanSd::of(&[3.0]).unwrap().sd, 0.0);
        let m = MeanSd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.n), (2.0, 2));
        assert!((m.sd - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn restarts_use_consecutive_seeds_and_write_outputs() {
        let (data, _) = generate(&simulation1_pattern(), 10, &[6; 4], 0).unwrap();
        let hyper = Hyperparameters::with_truncation(4);
        let opts = FitOptions {
            max_sweeps: 3,
            seed: 5,
            ..FitOptions::default()
        };
        let outcomes = run_restarts(&data, &hyper, &opts, 3).unwrap();
        let seeds: Vec<u64> = outcomes.iter().map(|o| o.record.seed).collect();
        assert_eq!(seeds, vec![5, 6, 7]);

        let dir = tempfile::tempdir().unwrap();
        let summary = write_run(dir.path(), &data, &hyper, &opts, "configured", &outcomes).unwrap();
        assert_eq!(summary.seeds, vec![5, 6, 7]);
        let best: BestPointer = serde_json::from_str(&fs::read_to_string(dir.path().join(BEST_FILE)).unwrap()).unwrap();
        assert_eq!(Some(best.restart), summary.best_restart);
        let cp = Checkpoint::load(&dir.path().join(&best.checkpoint)).unwrap();
        assert_eq!(cp.fit_options.seed, best.seed);
        assert_eq!(io::read_trace(&dir.path().join(&best.trace)).unwrap().len(), cp.sweeps_run);
    }

    #[test]
    fn zero_restarts_is_a_config_error() {
        let data = GroupedDataset::unnamed(vec![Array2::zeros((3, 2))]).unwrap();
        let hyper = Hyperparameters::with_truncation(2);
        assert!(matches!(
            run_restarts(&data, &hyper, &FitOptions::default(), 0),
            Err(NgfaError::Config(_))
        ));
    }
}
