//! On-disk formats: dataset directories, checkpoints and traces.
//!
//! Matrices are headerless CSV with one sample (or factor) per line, written
//! with shortest round-trip float formatting so that reading a file back
//! reproduces every value bit for bit. Metadata and checkpoints are JSON.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::engine::{FitReport, TraceRow};
use crate::error::{NgfaError, Result};
use crate::model::{FitOptions, GroupedDataset, Hyperparameters, VariationalState};
use crate::simdata::{SimulationTruth, SparsityPattern, LOADING_VARIANCE, NOISE_VARIANCE, SPARSE_ZERO_FRACTION};

pub const MANIFEST_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PATTERN_FILE: &str = "pattern.json";
pub const FACTORS_FILE: &str = "factors.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_HEADER: [&str; 4] = ["sweep", "objective", "train_mse", "k_active"];

pub fn group_file(name: &str) -> String {
    format!("group_{name}.csv")
}

pub fn truth_file(name: &str) -> String {
    format!("truth_{name}.csv")
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let mut record = Vec::with_capacity(a.ncols());
    for row in a.rows() {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV. Every line must have the same width.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| NgfaError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let mut values = Vec::new();
    let mut n_rows = 0;
    let mut width = None;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| NgfaError::data(format!("{}: {e}", path.display())))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(NgfaError::data(format!("{}: line {} has {} fields", path.display(), i + 1, record.len())));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| NgfaError::data(format!("{}: line {}: not a number: {field:?}", path.display(), i + 1)))?;
            values.push(v);
        }
        n_rows += 1;
    }
    let width = width.ok_or_else(|| NgfaError::data(format!("{} is empty", path.display())))?;
    Array2::from_shape_vec((n_rows, width), values).map_err(|e| NgfaError::data(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| NgfaError::data(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| NgfaError::data(format!("{}: {e}", path.display())))
}

fn check_group_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(NgfaError::config(format!(
            "group name {name:?} must be non-empty and use only letters, digits, '_' or '-'"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub dim: usize,
}

/// How a simulated dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    /// `sim1`, `sim2` or `custom`.
    pub kind: String,
    pub seed: u64,
    pub n_factors: usize,
    pub sparse_zero_fraction: f64,
    /// Variance (not standard deviation) of non-zero loadings.
    pub loading_variance: f64,
    pub noise_variance: f64,
}

impl GeneratorInfo {
    pub fn new(kind: impl Into<String>, seed: u64, n_factors: usize) -> Self {
        GeneratorInfo {
            kind: kind.into(),
            seed,
            n_factors,
            sparse_zero_fraction: SPARSE_ZERO_FRACTION,
            loading_variance: LOADING_VARIANCE,
            noise_variance: NOISE_VARIANCE,
        }
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_samples: usize,
    pub groups: Vec<GroupEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(NgfaError::data(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        if self.groups.is_empty() || self.n_samples == 0 {
            return Err(NgfaError::data("manifest lists no groups or no samples"));
        }
        for (i, g) in self.groups.iter().enumerate() {
            check_group_name(&g.name).map_err(|e| NgfaError::data(e.to_string()))?;
            if self.groups[..i].iter().any(|h| h.name == g.name) {
                return Err(NgfaError::data(format!("group name {:?} repeated", g.name)));
            }
        }
        Ok(())
    }
}

/// Writes `manifest.json` and one `group_<name>.csv` per group. With a truth,
/// also writes `truth_<name>.csv` loadings, `factors.csv` and `pattern.json`.
pub fn write_dataset(
    dir: &Path,
    data: &GroupedDataset,
    truth: Option<(&SimulationTruth, GeneratorInfo)>,
) -> Result<Manifest> {
    for name in data.names() {
        check_group_name(name)?;
    }
    fs::create_dir_all(dir)?;
    for (name, x) in data.names().iter().zip(data.groups()) {
        write_matrix_csv(&dir.join(group_file(name)), x)?;
    }
    let generator = match truth {
        Some((t, info)) => {
            for (name, g) in data.names().iter().zip(&t.loadings) {
                write_matrix_csv(&dir.join(truth_file(name)), g)?;
            }
            write_matrix_csv(&dir.join(FACTORS_FILE), &t.factors)?;
            write_json(&dir.join(PATTERN_FILE), &t.pattern)?;
            Some(info)
        }
        None => None,
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        n_samples: data.n_samples(),
        groups: data
            .names()
            .iter()
            .zip(data.dims())
            .map(|(name, dim)| GroupEntry { name: name.clone(), dim })
            .collect(),
        generator,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads a dataset directory and checks every file against the manifest.
pub fn load_dataset(dir: &Path) -> Result<(GroupedDataset, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut groups = Vec::with_capacity(manifest.groups.len());
    for g in &manifest.groups {
        let path = dir.join(group_file(&g.name));
        let x = read_matrix_csv(&path)?;
        if x.dim() != (manifest.n_samples, g.dim) {
            return Err(NgfaError::data(format!(
                "{} is {}x{}, manifest says {}x{}",
                path.display(),
                x.nrows(),
                x.ncols(),
                manifest.n_samples,
                g.dim
            )));
        }
        groups.push(x);
    }
    let names = manifest.groups.iter().map(|g| g.name.clone()).collect();
    let data = GroupedDataset::new(groups, names).map_err(|e| match e {
        NgfaError::Config(msg) => NgfaError::Data(msg),
        other => other,
    })?;
    Ok((data, manifest))
}

/// True loadings and pattern stored next to a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTruth {
    pub loadings: Vec<Array2<f64>>,
    pub pattern: SparsityPattern,
}

pub fn load_truth(dir: &Path, manifest: &Manifest) -> Result<StoredTruth> {
    let pattern: SparsityPattern = read_json(&dir.join(PATTERN_FILE))?;
    if pattern.n_groups() != manifest.groups.len() {
        return Err(NgfaError::data(format!(
            "pattern has {} groups, manifest {}",
            pattern.n_groups(),
            manifest.groups.len()
        )));
    }
    let mut loadings = Vec::with_capacity(manifest.groups.len());
    for g in &manifest.groups {
        let path = dir.join(truth_file(&g.name));
        let l = read_matrix_csv(&path)?;
        if l.dim() != (pattern.n_factors(), g.dim) {
            return Err(NgfaError::data(format!(
                "{} is {}x{}, expected {}x{}",
                path.display(),
                l.nrows(),
                l.ncols(),
                pattern.n_factors(),
                g.dim
            )));
        }
        loadings.push(l);
    }
    Ok(StoredTruth { loadings, pattern })
}

/// Everything needed to resume, evaluate or reuse a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub group_names: Vec<String>,
    pub hyperparameters: Hyperparameters,
    pub fit_options: FitOptions,
    pub converged: bool,
    pub sweeps_run: usize,
    pub final_objective: Option<f64>,
    pub final_train_mse: Option<f64>,
    pub k_active: Option<usize>,
    pub objective_method: String,
    pub state: VariationalState,
}

impl Checkpoint {
    pub fn from_report(names: &[String], hyper: &Hyperparameters, opts: &FitOptions, report: &FitReport) -> Self {
        let last = report.trace.last();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            group_names: names.to_vec(),
            hyperparameters: *hyper,
            fit_options: *opts,
            converged: report.converged,
            sweeps_run: report.sweeps_run,
            final_objective: last.map(|t| t.objective),
            final_train_mse: last.map(|t| t.train_mse),
            k_active: last.map(|t| t.k_active),
            objective_method: report.objective_method.to_string(),
            state: report.final_state.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Reads and validates a checkpoint file.
    pub fn load(path: &Path) -> Result<Self> {
        let cp: Checkpoint = read_json(path)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(NgfaError::data(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        if cp.group_names.len() != cp.state.n_groups() {
            return Err(NgfaError::data("checkpoint group names do not match its state"));
        }
        cp.state
            .check_invariants()
            .map_err(|e| NgfaError::data(format!("{}: {e}", path.display())))?;
        Ok(cp)
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.group_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| NgfaError::usage(format!("checkpoint has no group named {name:?}")))
    }
}

/// Writes `trace.csv`; sweeps are numbered from 1.
pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for (i, row) in trace.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            format!("{:?}", row.objective),
            format!("{:?}", row.train_mse),
            row.k_active.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| NgfaError::data(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| NgfaError::data(e.to_string()))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(NgfaError::data(format!("{}: unexpected header", path.display())));
    }
    let bad = |line: usize| NgfaError::data(format!("{}: malformed line {line}", path.display()));
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| NgfaError::data(e.to_string()))?;
        let field = |j: usize| record.get(j).ok_or_else(|| bad(i + 2));
        rows.push(TraceRow {
            objective: field(1)?.parse().map_err(|_| bad(i + 2))?,
            train_mse: field(2)?.parse().map_err(|_| bad(i + 2))?,
            k_active: field(3)?.parse().map_err(|_| bad(i + 2))?,
        });
    }
    Ok(rows)
}

/// Joins `dir` and `file` unless `file` is already absolute.
pub fn resolve(dir: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}
