//! Collapsed variational inference.
//!
//! One [`sweep`] visits every active factor `k` and, in order, refreshes the
//! global weight posterior `(a_k, b_k)`, then for each group the count
//! moments, the auxiliary table expectations, and per column the inclusion
//! probability, the loading posterior and its precision, and finally the
//! factor scores of `k`. After all factors it refreshes the group
//! concentrations, the auxiliary η expectations and the noise precisions.
//!
//! The residual `x − E[F G]` is kept in [`SweepCaches`]. While factor `k` is
//! being updated its own contribution is added back, so every update sees
//! the residual that excludes `k`.

mod objective;
mod predict;
mod updates;

pub use objective::{surrogate_elbo, ElboTerms, COLLAPSED_PRIOR_METHOD};
pub use predict::{expected_loadings, predict_factor_means, predict_factors, reconstruct_group};
pub use updates::{
    inclusion_probability, update_alpha, update_aux_s_t, update_beta_params, update_eta, update_f,
    update_lambda, update_sufficient_stats, update_tau, update_w, update_z, RowCounts,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NgfaError, Result};
use crate::metrics::pooled_mean_square;
use crate::model::{active_factors, init_state, FitOptions, GroupedDataset, Hyperparameters, VariationalState};

/// Lower bound on the second Beta parameter of q(β_k); only binds for K = 1.
pub const BETA_B_FLOOR: f64 = 1e-6;

/// Lower bound on geometric expectations that enter a logarithm or Ψ.
pub(crate) const GEO_FLOOR: f64 = 1e-300;

/// Number of consecutive small relative MSE changes that count as converged.
pub const CONVERGENCE_WINDOW: usize = 3;

/// Count moments and residuals shared by the coordinate updates of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCaches {
    /// E[n̂_mk], `M × K`.
    pub nhat_mean: Array2<f64>,
    pub nhat_var: Array2<f64>,
    /// E[ñ_mk], `M × K`.
    pub ntilde_mean: Array2<f64>,
    pub ntilde_var: Array2<f64>,
    /// `x − E[F] E[G]` per group, `N × D_m`.
    pub residual: Vec<Array2<f64>>,
    /// Factor whose contribution is currently added back into `residual`.
    excluded: Option<usize>,
}

impl SweepCaches {
    pub fn new(state: &VariationalState, data: &GroupedDataset) -> Self {
        let m_count = state.n_groups();
        let k_count = state.truncation();
        let mut caches = SweepCaches {
            nhat_mean: Array2::zeros((m_count, k_count)),
            nhat_var: Array2::zeros((m_count, k_count)),
            ntilde_mean: Array2::zeros((m_count, k_count)),
            ntilde_var: Array2::zeros((m_count, k_count)),
            residual: (0..m_count)
                .map(|m| data.group(m) - &reconstruct_group(state, &state.f_mean, m))
                .collect(),
            excluded: None,
        };
        for m in 0..m_count {
            for k in 0..k_count {
                caches.store_counts(m, k, &update_sufficient_stats(state, m, k, None));
            }
        }
        caches
    }

    pub fn excluded_factor(&self) -> Option<usize> {
        self.excluded
    }

    pub(crate) fn store_counts(&mut self, m: usize, k: usize, counts: &RowCounts) {
        self.nhat_mean[[m, k]] = counts.active.mean;
        self.nhat_var[[m, k]] = counts.active.variance;
        self.ntilde_mean[[m, k]] = counts.inactive.mean;
        self.ntilde_var[[m, k]] = counts.inactive.variance;
    }

    /// Swaps the contribution of column `d` from `old` to `new` in the
    /// running count sums of row `(m, k)`.
    pub(crate) fn replace_inclusion(&mut self, m: usize, k: usize, old: f64, new: f64) {
        self.nhat_mean[[m, k]] += new - old;
        self.ntilde_mean[[m, k]] += old - new;
        let dv = new * (1.0 - new) - old * (1.0 - old);
        self.nhat_var[[m, k]] += dv;
        self.ntilde_var[[m, k]] += dv;
    }

    /// Adds factor `k`'s expected contribution back into the residuals.
    pub fn exclude_factor(&mut self, state: &VariationalState, k: usize) {
        assert!(self.excluded.is_none(), "a factor is already excluded");
        self.shift_factor(state, k, 1.0);
        self.excluded = Some(k);
    }

    /// Removes factor `k`'s (possibly updated) contribution from the residuals.
    pub fn include_factor(&mut self, state: &VariationalState, k: usize) {
        assert_eq!(self.excluded, Some(k), "factor {k} is not the excluded one");
        self.shift_factor(state, k, -1.0);
        self.excluded = None;
    }

    fn shift_factor(&mut self, state: &VariationalState, k: usize, sign: f64) {
        let f = state.f_mean.column(k);
        for (m, res) in self.residual.iter_mut().enumerate() {
            let rho = state.rho[m].row(k);
            let mu = state.w_mean[m].row(k);
            let g: Vec<f64> = rho.iter().zip(mu.iter()).map(|(r, w)| sign * r * w).collect();
            for (mut row, &fv) in res.rows_mut().into_iter().zip(f.iter()) {
                for (x, gv) in row.iter_mut().zip(&g) {
                    *x += gv * fv;
                }
            }
        }
    }
}

/// One row of a fit trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub objective: f64,
    pub train_mse: f64,
    pub k_active: usize,
}

/// Result of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub final_state: VariationalState,
    pub sweeps_run: usize,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// How the collapsed prior term of the objective was evaluated.
    pub objective_method: &'static str,
}

fn check_finite(value: f64, what: &str, context: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(NgfaError::numerical(context(), format!("{what} = {value}")))
    }
}

/// One coordinate-ascent pass over all variational parameters.
///
/// Factors outside `active_factors(state, active_threshold)` are skipped but
/// keep their parameters.
pub fn sweep(
    state: &mut VariationalState,
    data: &GroupedDataset,
    hyper: &Hyperparameters,
    active_threshold: f64,
) -> Result<()> {
    let mut caches = SweepCaches::new(state, data);
    sweep_with_caches(state, hyper, active_threshold, &mut caches)
}

pub(crate) fn sweep_with_caches(
    state: &mut VariationalState,
    hyper: &Hyperparameters,
    active_threshold: f64,
    caches: &mut SweepCaches,
) -> Result<()> {
    let m_count = state.n_groups();
    let n_count = state.n_samples();
    let dims = state.dims();

    for k in active_factors(state, active_threshold) {
        let (a, b) = update_beta_params(state, hyper, k);
        state.beta_a[k] = a;
        state.beta_b[k] = b;

        caches.exclude_factor(state, k);
        for (m, &width) in dims.iter().enumerate() {
            let counts = update_sufficient_stats(state, m, k, None);
            caches.store_counts(m, k, &counts);
            let (es, et) = update_aux_s_t(state, &counts, m, k);
            state.aux_s_mean[[m, k]] = es;
            state.aux_t_mean[[m, k]] = et;

            let sums = updates::FactorSums::new(state, m, k);
            for d in 0..width {
                let ctx = || format!("group {m}, factor {k}, column {d}");
                let tau_f_x = updates::tau_f_residual(state, caches, m, k, d);

                let old = state.rho[m][[k, d]];
                let rho = updates::z_from_sums(state, caches, &sums, tau_f_x, m, k, d);
                let rho = check_finite(rho, "rho", ctx)?;
                state.rho[m][[k, d]] = rho;
                caches.replace_inclusion(m, k, old, rho);

                let (mu, var) = updates::w_from_sums(state, &sums, tau_f_x, m, k, d);
                state.w_mean[m][[k, d]] = check_finite(mu, "w mean", ctx)?;
                state.w_var[m][[k, d]] = check_finite(var, "w variance", ctx)?;

                let (shape, rate) = update_lambda(state, hyper, m, k, d);
                state.lambda_shape[m][[k, d]] = shape;
                state.lambda_rate[m][[k, d]] = rate;
            }
        }
        for n in 0..n_count {
            let (mu, var) = update_f(state, caches, n, k);
            let ctx = || format!("sample {n}, factor {k}");
            state.f_mean[[n, k]] = check_finite(mu, "f mean", ctx)?;
            state.f_var[[n, k]] = check_finite(var, "f variance", ctx)?;
        }
        caches.include_factor(state, k);
    }

    for m in 0..m_count {
        let (shape, rate) = update_alpha(state, hyper, m);
        state.alpha_shape[m] = shape;
        state.alpha_rate[m] = rate;
        state.eta_log_mean[m] = update_eta(state, m);
        for n in 0..n_count {
            let (shape, rate) = update_tau(state, hyper, caches, m, n);
            state.tau_shape[m][n] = shape;
            state.tau_rate[m][n] = check_finite(rate, "tau rate", || format!("group {m}, sample {n}"))?;
        }
    }
    Ok(())
}

/// Initializes from `opts.seed` and sweeps until the relative change of the
/// training MSE stays below `opts.rel_tolerance` for
/// [`CONVERGENCE_WINDOW`] consecutive sweeps, or `opts.max_sweeps` is hit.
pub fn fit(data: &GroupedDataset, hyper: &Hyperparameters, opts: &FitOptions) -> Result<FitReport> {
    opts.validate()?;
    let state = init_state(data, hyper, opts.seed)?;
    fit_from(state, data, hyper, opts)
}

/// Like [`fit`] but starting from a given state.
pub fn fit_from(
    mut state: VariationalState,
    data: &GroupedDataset,
    hyper: &Hyperparameters,
    opts: &FitOptions,
) -> Result<FitReport> {
    opts.validate()?;
    hyper.validate()?;
    if state.dims() != data.dims() || state.n_samples() != data.n_samples() {
        return Err(NgfaError::config("state shape does not match the dataset"));
    }
    let mut trace = Vec::with_capacity(opts.max_sweeps.min(4096));
    let mut calm = 0;
    let mut converged = false;
    let mut prev_mse: Option<f64> = None;

    for s in 0..opts.max_sweeps {
        let mut caches = SweepCaches::new(&state, data);
        sweep_with_caches(&mut state, hyper, opts.active_factor_threshold, &mut caches).map_err(
            |e| match e {
                NgfaError::Numerical { context, message } => NgfaError::Numerical {
                    context: format!("sweep {}, {context}", s + 1),
                    message,
                },
                other => other,
            },
        )?;
        let train_mse = residual_mse(&caches.residual);
        let objective = surrogate_elbo(&state, data, hyper).total();
        check_finite(objective, "objective", || format!("sweep {}", s + 1))?;
        check_finite(train_mse, "train mse", || format!("sweep {}", s + 1))?;
        trace.push(TraceRow {
            objective,
            train_mse,
            k_active: active_factors(&state, opts.active_factor_threshold).len(),
        });

        if let Some(prev) = prev_mse {
            let rel = (train_mse - prev).abs() / train_mse.max(1e-12);
            if rel < opts.rel_tolerance {
                calm += 1;
            } else {
                calm = 0;
            }
        }
        prev_mse = Some(train_mse);
        if calm >= CONVERGENCE_WINDOW {
            converged = true;
            break;
        }
    }

    Ok(FitReport {
        sweeps_run: trace.len(),
        final_state: state,
        trace,
        converged,
        objective_method: COLLAPSED_PRIOR_METHOD,
    })
}

fn residual_mse(residual: &[Array2<f64>]) -> f64 {
    pooled_mean_square(residual.iter())
}
