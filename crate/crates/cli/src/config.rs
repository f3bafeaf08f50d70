use std::fs;
use std::path::{Path, PathBuf};

use ngfa::experiment::{default_truncation, DEFAULT_RESTARTS};
use ngfa::model::{FitOptions, GroupedDataset, Hyperparameters};
use serde::Deserialize;

use crate::args::FitArgs;
use crate::error::{CliError, CliResult};

/// Prior constants; unset fields keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    pub kappa0: Option<f64>,
    #[serde(alias = "K")]
    pub k: Option<usize>,
    pub c0: Option<f64>,
    pub d0: Option<f64>,
    pub e0: Option<f64>,
    pub f0: Option<f64>,
    pub g0: Option<f64>,
    pub h0: Option<f64>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub max_sweeps: Option<usize>,
    pub tol: Option<f64>,
    pub active_threshold: Option<f64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub hyperparameters: HyperConfig,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Fully resolved settings for `fit`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub hyper: Hyperparameters,
    pub fit: FitOptions,
    pub n_restarts: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub truncation_source: &'static str,
}

/// Everything except the truncation, which needs the data.
pub struct PartialRun {
    pub file: ConfigFile,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

pub fn partial(args: &FitArgs, seed: Option<u64>, threads: Option<usize>) -> CliResult<PartialRun> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let dataset = args
        .dataset
        .clone()
        .or_else(|| file.dataset.clone())
        .ok_or_else(|| CliError::usage("no dataset given (positional argument or \"dataset\" in the config)"))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.out.clone())
        .ok_or_else(|| CliError::usage("no output directory given (--out or \"out\" in the config)"))?;
    Ok(PartialRun {
        seed: seed.or(file.seed).unwrap_or(0),
        threads: threads.or(file.threads),
        file,
        dataset,
        out,
    })
}

pub fn resolve(p: PartialRun, args: &FitArgs, data: &GroupedDataset) -> CliResult<RunConfig> {
    let h = &p.file.hyperparameters;
    let explicit_k = args.k.or(h.k);
    let truncation = explicit_k.unwrap_or_else(|| default_truncation(data));
    let defaults = Hyperparameters::with_truncation(truncation);
    let hyper = Hyperparameters {
        kappa0: h.kappa0.unwrap_or(defaults.kappa0),
        truncation,
        c0: h.c0.unwrap_or(defaults.c0),
        d0: h.d0.unwrap_or(defaults.d0),
        e0: h.e0.unwrap_or(defaults.e0),
        f0: h.f0.unwrap_or(defaults.f0),
        g0: h.g0.unwrap_or(defaults.g0),
        h0: h.h0.unwrap_or(defaults.h0),
    };
    hyper.validate()?;
    let base = FitOptions::default();
    let fit = FitOptions {
        max_sweeps: args.max_sweeps.or(p.file.max_sweeps).unwrap_or(base.max_sweeps),
        rel_tolerance: args.tol.or(p.file.tol).unwrap_or(base.rel_tolerance),
        seed: p.seed,
        active_factor_threshold: p.file.active_threshold.unwrap_or(base.active_factor_threshold),
    };
    fit.validate()?;
    let n_restarts = args.restarts.or(p.file.restarts).unwrap_or(DEFAULT_RESTARTS);
    if n_restarts == 0 {
        return Err(CliError::usage("--restarts must be at least 1"));
    }
    Ok(RunConfig {
        hyper,
        fit,
        n_restarts,
        out: p.out,
        threads: p.threads,
        truncation_source: if explicit_k.is_some() { "configured" } else { "default" },
    })
}
