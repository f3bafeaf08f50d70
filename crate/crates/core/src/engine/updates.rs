//! Closed-form coordinate updates. Each function reads the current state and
//! returns new parameter values without writing them back.

use ndarray::ArrayView1;

use crate::approx::{
    bernoulli_sum_moments_unchecked, crt_mean_approx_unchecked, digamma_unchecked,
    expect_log_shifted_count_unchecked, BernoulliSumMoments,
};
use crate::error::{NgfaError, Result};
use crate::model::{Hyperparameters, VariationalState};

use super::{SweepCaches, BETA_B_FLOOR, GEO_FLOOR};

/// Moments of the active count n̂_mk and the inactive count ñ_mk of one row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowCounts {
    pub active: BernoulliSumMoments,
    pub inactive: BernoulliSumMoments,
}

/// Count moments of row `(m, k)` of the inclusion probabilities, optionally
/// leaving column `exclude_d` out.
pub fn update_sufficient_stats(
    state: &VariationalState,
    m: usize,
    k: usize,
    exclude_d: Option<usize>,
) -> RowCounts {
    let row = state.rho[m].row(k);
    let kept = || {
        row.iter()
            .enumerate()
            .filter(move |(d, _)| Some(*d) != exclude_d)
            .map(|(_, &p)| p)
    };
    RowCounts {
        active: bernoulli_sum_moments_unchecked(kept()),
        inactive: bernoulli_sum_moments_unchecked(kept().map(|p| 1.0 - p)),
    }
}

/// ln G[α^{(m)}] = Ψ(c) − ln d.
fn log_geo_alpha(state: &VariationalState, m: usize) -> f64 {
    digamma_unchecked(state.alpha_shape[m]) - state.alpha_rate[m].ln()
}

/// (ln G[β_k], ln G[1 − β_k]).
fn log_geo_beta(state: &VariationalState, k: usize) -> (f64, f64) {
    let (a, b) = (state.beta_a[k], state.beta_b[k]);
    let total = digamma_unchecked(a + b);
    (digamma_unchecked(a) - total, digamma_unchecked(b) - total)
}

/// (G[α^{(m)} β_k], G[α^{(m)} (1 − β_k)]), floored away from zero.
pub(crate) fn geo_concentrations(state: &VariationalState, m: usize, k: usize) -> (f64, f64) {
    let la = log_geo_alpha(state, m);
    let (lb, lbbar) = log_geo_beta(state, k);
    ((la + lb).exp().max(GEO_FLOOR), (la + lbbar).exp().max(GEO_FLOOR))
}

/// Per-(m, k) quantities shared by every column of the row.
pub(crate) struct FactorSums {
    /// Σ_n E[τ_n] E[f_nk²].
    pub tau_f2: f64,
    pub geo_on: f64,
    pub geo_off: f64,
}

impl FactorSums {
    pub fn new(state: &VariationalState, m: usize, k: usize) -> Self {
        let tau_f2 = (0..state.n_samples())
            .map(|n| state.tau_mean(m, n) * state.f_second_moment(n, k))
            .sum();
        let (geo_on, geo_off) = geo_concentrations(state, m, k);
        FactorSums {
            tau_f2,
            geo_on,
            geo_off,
        }
    }
}

/// Σ_n E[τ_n] E[f_nk] x̃_nd with x̃ the residual excluding factor k.
pub(crate) fn tau_f_residual(state: &VariationalState, caches: &SweepCaches, m: usize, k: usize, d: usize) -> f64 {
    let res = &caches.residual[m];
    (0..state.n_samples())
        .map(|n| state.tau_mean(m, n) * state.f_mean[[n, k]] * res[[n, d]])
        .sum()
}

/// Normalizes q(z = 1) ∝ exp(log_prior_on + log_lik_on) against
/// q(z = 0) ∝ exp(log_prior_off) in log space.
pub fn inclusion_probability(log_prior_on: f64, log_prior_off: f64, log_lik_on: f64) -> f64 {
    let logit = log_prior_on + log_lik_on - log_prior_off;
    if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn z_from_sums(
    state: &VariationalState,
    caches: &SweepCaches,
    sums: &FactorSums,
    tau_f_x: f64,
    m: usize,
    k: usize,
    d: usize,
) -> f64 {
    let rho = state.rho[m][[k, d]];
    let var_loo = (caches.nhat_var[[m, k]] - rho * (1.0 - rho)).max(0.0);
    let on_loo = (caches.nhat_mean[[m, k]] - rho).max(0.0);
    let off_loo = (caches.ntilde_mean[[m, k]] - (1.0 - rho)).max(0.0);

    let prior_on = expect_log_shifted_count_unchecked(sums.geo_on, on_loo, var_loo);
    let prior_off = expect_log_shifted_count_unchecked(sums.geo_off, off_loo, var_loo);
    let w_mean = state.w_mean[m][[k, d]];
    let w2 = state.w_second_moment(m, k, d);
    let lik = -0.5 * (w2 * sums.tau_f2 - 2.0 * w_mean * tau_f_x);
    inclusion_probability(prior_on, prior_off, lik)
}

pub(crate) fn w_from_sums(
    state: &VariationalState,
    sums: &FactorSums,
    tau_f_x: f64,
    m: usize,
    k: usize,
    d: usize,
) -> (f64, f64) {
    let rho = state.rho[m][[k, d]];
    let lambda = state.lambda_shape[m][[k, d]] / state.lambda_rate[m][[k, d]];
    let var = 1.0 / (lambda + rho * sums.tau_f2);
    (var * rho * tau_f_x, var)
}

fn require_excluded(caches: &SweepCaches, k: usize) -> Result<()> {
    if caches.excluded_factor() == Some(k) {
        Ok(())
    } else {
        Err(NgfaError::usage(format!(
            "residual cache must exclude factor {k} (currently {:?})",
            caches.excluded_factor()
        )))
    }
}

/// New q(z_kd^{(m)} = 1).
///
/// The caches must exclude factor `k` from the residual and hold the count
/// sums of row `(m, k)` including column `d`; the column is left out here.
pub fn update_z(state: &VariationalState, caches: &SweepCaches, m: usize, k: usize, d: usize) -> Result<f64> {
    require_excluded(caches, k)?;
    let sums = FactorSums::new(state, m, k);
    let tau_f_x = tau_f_residual(state, caches, m, k, d);
    let rho = z_from_sums(state, caches, &sums, tau_f_x, m, k, d);
    if rho.is_finite() {
        Ok(rho)
    } else {
        Err(NgfaError::numerical(
            format!("group {m}, factor {k}, column {d}"),
            format!("inclusion probability = {rho}"),
        ))
    }
}

/// New (mean, variance) of q(w_kd^{(m)}).
pub fn update_w(state: &VariationalState, caches: &SweepCaches, m: usize, k: usize, d: usize) -> Result<(f64, f64)> {
    require_excluded(caches, k)?;
    let sums = FactorSums::new(state, m, k);
    let tau_f_x = tau_f_residual(state, caches, m, k, d);
    Ok(w_from_sums(state, &sums, tau_f_x, m, k, d))
}

/// New (mean, variance) of q(f_nk); needs the residual excluding factor `k`.
pub fn update_f(state: &VariationalState, caches: &SweepCaches, n: usize, k: usize) -> (f64, f64) {
    debug_assert_eq!(caches.excluded_factor(), Some(k));
    let mut precision = 1.0;
    let mut linear = 0.0;
    for m in 0..state.n_groups() {
        let tau = state.tau_mean(m, n);
        let rho = state.rho[m].row(k);
        let mu = state.w_mean[m].row(k);
        let var = state.w_var[m].row(k);
        let res = caches.residual[m].row(n);
        let mut p = 0.0;
        let mut l = 0.0;
        for d in 0..rho.len() {
            p += rho[d] * (mu[d] * mu[d] + var[d]);
            l += rho[d] * mu[d] * res[d];
        }
        precision += tau * p;
        linear += tau * l;
    }
    let var = 1.0 / precision;
    (var * linear, var)
}

/// New (a_k, b_k) of q(β_k) from the current auxiliary expectations.
pub fn update_beta_params(state: &VariationalState, hyper: &Hyperparameters, k: usize) -> (f64, f64) {
    let kk = hyper.truncation as f64;
    let s: f64 = state.aux_s_mean.column(k).sum();
    let t: f64 = state.aux_t_mean.column(k).sum();
    (
        hyper.kappa0 / kk + s,
        (hyper.kappa0 * (1.0 - 1.0 / kk) + t).max(BETA_B_FLOOR),
    )
}

/// New (E[s_mk], E[t_mk]) given the full-row count moments, clamped to
/// `[0, D_m]`.
pub fn update_aux_s_t(state: &VariationalState, counts: &RowCounts, m: usize, k: usize) -> (f64, f64) {
    let d = state.rho[m].ncols() as f64;
    let (geo_on, geo_off) = geo_concentrations(state, m, k);
    let s = crt_mean_approx_unchecked(geo_on, &counts.active);
    let t = crt_mean_approx_unchecked(geo_off, &counts.inactive);
    (s.clamp(0.0, d), t.clamp(0.0, d))
}

/// New (shape, rate) of q(λ_kd^{(m)}).
pub fn update_lambda(state: &VariationalState, hyper: &Hyperparameters, m: usize, k: usize, d: usize) -> (f64, f64) {
    (hyper.e0 + 0.5, hyper.f0 + 0.5 * state.w_second_moment(m, k, d))
}

/// New (shape, rate) of q(τ_n^{(m)}); needs the full residual.
pub fn update_tau(
    state: &VariationalState,
    hyper: &Hyperparameters,
    caches: &SweepCaches,
    m: usize,
    n: usize,
) -> (f64, f64) {
    debug_assert!(caches.excluded_factor().is_none());
    let dims = state.rho[m].ncols();
    let expected = expected_sq_residual(state, caches.residual[m].row(n), m, n);
    (hyper.g0 + 0.5 * dims as f64, hyper.h0 + 0.5 * expected)
}

/// E‖x_n − G f_n‖² for group `m`, given the row `x_n − E[G] E[f_n]`.
///
/// With a_k = ρ μ_w μ_f and independent factors of q,
/// E[(x − Σ_k z_k w_k f_k)²] = (x − Σ_k a_k)² + Σ_k (ρ E[w²] E[f²] − a_k²).
pub(crate) fn expected_sq_residual(
    state: &VariationalState,
    residual_row: ArrayView1<f64>,
    m: usize,
    n: usize,
) -> f64 {
    let squared: f64 = residual_row.iter().map(|r| r * r).sum();
    let mut spread = 0.0;
    for k in 0..state.truncation() {
        let f_mean = state.f_mean[[n, k]];
        let f2 = state.f_second_moment(n, k);
        let rho = state.rho[m].row(k);
        let mu = state.w_mean[m].row(k);
        let var = state.w_var[m].row(k);
        for d in 0..rho.len() {
            let a = rho[d] * mu[d] * f_mean;
            spread += rho[d] * (mu[d] * mu[d] + var[d]) * f2 - a * a;
        }
    }
    squared + spread
}

/// New (shape, rate) of q(α^{(m)}).
///
/// Every factor contributes its own Γ(α)/Γ(α + D_m) ratio to the collapsed
/// prior, so each one carries an η draw with the same posterior; the rate
/// collects all K of them, matching the shape, which sums tables over all K.
pub fn update_alpha(state: &VariationalState, hyper: &Hyperparameters, m: usize) -> (f64, f64) {
    let s: f64 = state.aux_s_mean.row(m).sum();
    let t: f64 = state.aux_t_mean.row(m).sum();
    let k = state.truncation() as f64;
    (hyper.c0 + s + t, hyper.d0 - k * state.eta_log_mean[m])
}

/// New E[ln η_m] = Ψ(E[α]) − Ψ(E[α] + D_m).
pub fn update_eta(state: &VariationalState, m: usize) -> f64 {
    let alpha = state.alpha_mean(m);
    let d = state.rho[m].ncols() as f64;
    (digamma_unchecked(alpha) - digamma_unchecked(alpha + d)).min(0.0)
}
