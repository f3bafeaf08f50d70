//! Model types: the grouped data, hyperparameters, and the variational state.
//!
//! Loadings and inclusion probabilities are stored factor-major, `K × D_m`
//! per group; the factor scores are `N × K`.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::approx::digamma_unchecked;
use crate::error::{NgfaError, Result};
use crate::serde_matrix;

/// M data matrices sharing their N rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    groups: Vec<Array2<f64>>,
    names: Vec<String>,
}

impl GroupedDataset {
    pub fn new(groups: Vec<Array2<f64>>, names: Vec<String>) -> Result<Self> {
        if groups.is_empty() {
            return Err(NgfaError::config("dataset has no groups"));
        }
        if names.len() != groups.len() {
            return Err(NgfaError::config(format!(
                "{} group names for {} groups",
                names.len(),
                groups.len()
            )));
        }
        let n = groups[0].nrows();
        if n == 0 {
            return Err(NgfaError::config("dataset has no samples"));
        }
        for (name, g) in names.iter().zip(&groups) {
            if g.nrows() != n {
                return Err(NgfaError::config(format!(
                    "group {name} has {} rows, expected {n}",
                    g.nrows()
                )));
            }
            if g.ncols() == 0 {
                return Err(NgfaError::config(format!("group {name} has no columns")));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NgfaError::data(format!("group {name} contains non-finite entries")));
            }
        }
        Ok(GroupedDataset { groups, names })
    }

    /// Names the groups `g1`, `g2`, ...
    pub fn unnamed(groups: Vec<Array2<f64>>) -> Result<Self> {
        let names = (1..=groups.len()).map(|i| format!("g{i}")).collect();
        Self::new(groups, names)
    }

    pub fn n_samples(&self) -> usize {
        self.groups[0].nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.ncols()).collect()
    }

    pub fn group(&self, m: usize) -> &Array2<f64> {
        &self.groups[m]
    }

    pub fn groups(&self) -> &[Array2<f64>] {
        &self.groups
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Prior constants and the truncation level.
///
/// `e0, f0` parameterize the gamma prior on the loading precisions λ, and
/// `g0, h0` the prior on the noise precisions τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub kappa0: f64,
    #[serde(rename = "K")]
    pub truncation: usize,
    pub c0: f64,
    pub d0: f64,
    pub e0: f64,
    pub f0: f64,
    pub g0: f64,
    pub h0: f64,
}

impl Hyperparameters {
    /// κ0 = 1 and all six gamma constants 0.1.
    pub fn with_truncation(truncation: usize) -> Self {
        Hyperparameters {
            kappa0: 1.0,
            truncation,
            c0: 0.1,
            d0: 0.1,
            e0: 0.1,
            f0: 0.1,
            g0: 0.1,
            h0: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 1 {
            return Err(NgfaError::config("truncation level K must be at least 1"));
        }
        let named = [
            ("kappa0", self.kappa0),
            ("c0", self.c0),
            ("d0", self.d0),
            ("e0", self.e0),
            ("f0", self.f0),
            ("g0", self.g0),
            ("h0", self.h0),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NgfaError::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Prior (a, b) of the global factor weights β_k.
    pub fn beta_prior(&self) -> (f64, f64) {
        let k = self.truncation as f64;
        (self.kappa0 / k, (self.kappa0 * (1.0 - 1.0 / k)).max(crate::engine::BETA_B_FLOOR))
    }
}

/// Stopping rule and seeding for a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_sweeps: usize,
    pub rel_tolerance: f64,
    pub seed: u64,
    pub active_factor_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_sweeps: 1000,
            rel_tolerance: 1e-6,
            seed: 0,
            active_factor_threshold: 1e-2,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps < 1 {
            return Err(NgfaError::config("max_sweeps must be at least 1"));
        }
        if self.rel_tolerance.is_nan() || self.rel_tolerance <= 0.0 {
            return Err(NgfaError::config("rel_tolerance must be positive"));
        }
        if self.active_factor_threshold.is_nan() || self.active_factor_threshold <= 0.0 {
            return Err(NgfaError::config("active_factor_threshold must be positive"));
        }
        Ok(())
    }
}

/// Every variational parameter, plus the cached auxiliary expectations.
///
/// Gaussian variances are stored as variances (not standard deviations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// q(z_kd = 1), one `K × D_m` matrix per group.
    #[serde(with = "serde_matrix::list")]
    pub rho: Vec<Array2<f64>>,
    #[serde(with = "serde_matrix::list")]
    pub w_mean: Vec<Array2<f64>>,
    #[serde(with = "serde_matrix::list")]
    pub w_var: Vec<Array2<f64>>,
    /// `N × K`.
    #[serde(with = "serde_matrix::single")]
    pub f_mean: Array2<f64>,
    #[serde(with = "serde_matrix::single")]
    pub f_var: Array2<f64>,
    pub beta_a: Vec<f64>,
    pub beta_b: Vec<f64>,
    #[serde(with = "serde_matrix::list")]
    pub lambda_shape: Vec<Array2<f64>>,
    #[serde(with = "serde_matrix::list")]
    pub lambda_rate: Vec<Array2<f64>>,
    pub tau_shape: Vec<Vec<f64>>,
    pub tau_rate: Vec<Vec<f64>>,
    pub alpha_shape: Vec<f64>,
    pub alpha_rate: Vec<f64>,
    /// E[s_mk], `M × K`.
    #[serde(with = "serde_matrix::single")]
    pub aux_s_mean: Array2<f64>,
    /// E[t_mk], `M × K`.
    #[serde(with = "serde_matrix::single")]
    pub aux_t_mean: Array2<f64>,
    pub eta_log_mean: Vec<f64>,
}

impl VariationalState {
    pub fn n_groups(&self) -> usize {
        self.rho.len()
    }

    pub fn truncation(&self) -> usize {
        self.f_mean.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.f_mean.nrows()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.rho.iter().map(|r| r.ncols()).collect()
    }

    /// E[τ_n^{(m)}].
    pub fn tau_mean(&self, m: usize, n: usize) -> f64 {
        self.tau_shape[m][n] / self.tau_rate[m][n]
    }

    pub fn alpha_mean(&self, m: usize) -> f64 {
        self.alpha_shape[m] / self.alpha_rate[m]
    }

    /// E[w²] = μ² + σ².
    pub fn w_second_moment(&self, m: usize, k: usize, d: usize) -> f64 {
        let mu = self.w_mean[m][[k, d]];
        mu * mu + self.w_var[m][[k, d]]
    }

    pub fn f_second_moment(&self, n: usize, k: usize) -> f64 {
        let mu = self.f_mean[[n, k]];
        mu * mu + self.f_var[[n, k]]
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |what: &str| Err(NgfaError::numerical("state invariant", what.to_string()));
        if !self.rho.iter().all(|r| r.iter().all(|&p| (0.0..=1.0).contains(&p))) {
            return bad("rho outside [0, 1]");
        }
        if !self.w_var.iter().all(|v| positive(v.iter()))
            || !positive(self.f_var.iter())
        {
            return bad("non-positive Gaussian variance");
        }
        if !self.w_mean.iter().all(|v| finite(v.iter())) || !finite(self.f_mean.iter()) {
            return bad("non-finite Gaussian mean");
        }
        let shapes_ok = positive(self.beta_a.iter())
            && positive(self.beta_b.iter())
            && self.lambda_shape.iter().all(|x| positive(x.iter()))
            && self.lambda_rate.iter().all(|x| positive(x.iter()))
            && self.tau_shape.iter().all(|x| positive(x.iter()))
            && self.tau_rate.iter().all(|x| positive(x.iter()))
            && positive(self.alpha_shape.iter())
            && positive(self.alpha_rate.iter());
        if !shapes_ok {
            return bad("non-positive shape or rate");
        }
        for (m, d) in self.dims().into_iter().enumerate() {
            let d = d as f64;
            let row_ok = |a: &Array2<f64>| a.row(m).iter().all(|&x| (0.0..=d).contains(&x));
            if !row_ok(&self.aux_s_mean) || !row_ok(&self.aux_t_mean) {
                return bad("auxiliary table count outside [0, D_m]");
            }
        }
        if !self.eta_log_mean.iter().all(|&x| x <= 0.0 && x.is_finite()) {
            return bad("E[log eta] must be non-positive");
        }
        Ok(())
    }
}

fn positive<'a>(mut xs: impl Iterator<Item = &'a f64>) -> bool {
    xs.all(|&x| x > 0.0 && x.is_finite())
}

fn finite<'a>(mut xs: impl Iterator<Item = &'a f64>) -> bool {
    xs.all(|x| x.is_finite())
}

/// Standard deviation of the initial loading means.
pub const INIT_W_SD: f64 = 0.01;
/// Initial loading variance. The first inclusion update charges
/// `E[w²] Σ_n E[τ] E[f²]` against every loading, so a unit variance would
/// switch all of them off before the data are seen.
pub const INIT_W_VAR: f64 = 1e-3;

/// Random starting point for coordinate ascent.
///
/// Inclusion probabilities start uniform in [0.45, 0.55], loading means
/// N(0, [`INIT_W_SD`]²) with variance [`INIT_W_VAR`], factor means standard
/// normal with unit variance; every other block starts at its prior.
/// Deterministic in `seed`.
pub fn init_state(data: &GroupedDataset, hyper: &Hyperparameters, seed: u64) -> Result<VariationalState> {
    hyper.validate()?;
    let k = hyper.truncation;
    let n = data.n_samples();
    let dims = data.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let rho_dist = Uniform::new_inclusive(0.45, 0.55).expect("valid bounds");
    let w_dist = Normal::new(0.0, INIT_W_SD).expect("valid sd");
    let f_dist = Normal::new(0.0, 1.0).expect("valid sd");

    let rho: Vec<Array2<f64>> = dims
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((k, d), || rho_dist.sample(&mut rng)))
        .collect();
    let w_mean: Vec<Array2<f64>> = dims
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((k, d), || w_dist.sample(&mut rng)))
        .collect();
    let f_mean = Array2::from_shape_simple_fn((n, k), || f_dist.sample(&mut rng));

    let (a0, b0) = hyper.beta_prior();
    let alpha_mean = hyper.c0 / hyper.d0;
    Ok(VariationalState {
        rho,
        w_mean,
        w_var: dims.iter().map(|&d| Array2::from_elem((k, d), INIT_W_VAR)).collect(),
        f_mean,
        f_var: Array2::ones((n, k)),
        beta_a: vec![a0; k],
        beta_b: vec![b0; k],
        lambda_shape: dims.iter().map(|&d| Array2::from_elem((k, d), hyper.e0)).collect(),
        lambda_rate: dims.iter().map(|&d| Array2::from_elem((k, d), hyper.f0)).collect(),
        tau_shape: dims.iter().map(|_| vec![hyper.g0; n]).collect(),
        tau_rate: dims.iter().map(|_| vec![hyper.h0; n]).collect(),
        alpha_shape: vec![hyper.c0; dims.len()],
        alpha_rate: vec![hyper.d0; dims.len()],
        aux_s_mean: Array2::zeros((dims.len(), k)),
        aux_t_mean: Array2::zeros((dims.len(), k)),
        eta_log_mean: dims
            .iter()
            .map(|&d| digamma_unchecked(alpha_mean) - digamma_unchecked(alpha_mean + d as f64))
            .collect(),
    })
}

/// Factors whose expected number of included loadings reaches `threshold`
/// in at least one group, in ascending order.
pub fn active_factors(state: &VariationalState, threshold: f64) -> Vec<usize> {
    (0..state.truncation())
        .filter(|&k| {
            state
                .rho
                .iter()
                .map(|r| r.row(k).sum())
                .fold(f64::NEG_INFINITY, f64::max)
                >= threshold
        })
        .collect()
}
