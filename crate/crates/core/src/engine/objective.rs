//! Surrogate evidence lower bound used for monitoring.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::approx::{digamma_unchecked, ln_gamma_unchecked};
use crate::model::{GroupedDataset, Hyperparameters, VariationalState};

use super::predict::reconstruct_group;
use super::updates::{expected_sq_residual, geo_concentrations};

/// How the collapsed prior term E[ln p(Z)] enters the objective.
pub const COLLAPSED_PRIOR_METHOD: &str =
    "plug-in: log-gamma ratios of the marginal evaluated at geometric-mean concentrations and expected counts";

/// Additive pieces of the surrogate objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    /// E[ln p(X | W, Z, F, τ)].
    pub likelihood: f64,
    /// E[ln p(W | λ)] + H[q(W)].
    pub loadings: f64,
    /// E[ln p(F)] + H[q(F)].
    pub factors: f64,
    pub kl_lambda: f64,
    pub kl_tau: f64,
    pub kl_alpha: f64,
    pub kl_beta: f64,
    /// H[q(Z)].
    pub z_entropy: f64,
    /// Plug-in approximation of E[ln p(Z | α, β)].
    pub collapsed_prior: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.likelihood + self.loadings + self.factors - self.kl_lambda - self.kl_tau - self.kl_alpha
            - self.kl_beta
            + self.z_entropy
            + self.collapsed_prior
    }
}

/// KL(Gam(a, b) ‖ Gam(a0, b0)) in the shape/rate parameterization.
pub(crate) fn kl_gamma(a: f64, b: f64, a0: f64, b0: f64) -> f64 {
    (a - a0) * digamma_unchecked(a) - ln_gamma_unchecked(a) + ln_gamma_unchecked(a0) + a0 * (b.ln() - b0.ln())
        + a * (b0 - b) / b
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

/// KL(Beta(a, b) ‖ Beta(a0, b0)).
pub(crate) fn kl_beta(a: f64, b: f64, a0: f64, b0: f64) -> f64 {
    ln_beta(a0, b0) - ln_beta(a, b)
        + (a - a0) * digamma_unchecked(a)
        + (b - b0) * digamma_unchecked(b)
        + (a0 - a + b0 - b) * digamma_unchecked(a + b)
}

fn bernoulli_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Evaluates every term of the surrogate objective at `state`; the scalar
/// objective is [`ElboTerms::total`].
pub fn surrogate_elbo(state: &VariationalState, data: &GroupedDataset, hyper: &Hyperparameters) -> ElboTerms {
    let mut t = ElboTerms::default();
    let k_count = state.truncation();
    let ln_2pi = (2.0 * PI).ln();

    for m in 0..state.n_groups() {
        let dims = state.rho[m].ncols();
        let residual = data.group(m) - &reconstruct_group(state, &state.f_mean, m);
        for n in 0..state.n_samples() {
            let (g, h) = (state.tau_shape[m][n], state.tau_rate[m][n]);
            let e_log_tau = digamma_unchecked(g) - h.ln();
            let sq = expected_sq_residual(state, residual.row(n), m, n);
            t.likelihood += 0.5 * dims as f64 * (e_log_tau - ln_2pi) - 0.5 * (g / h) * sq;
            t.kl_tau += kl_gamma(g, h, hyper.g0, hyper.h0);
        }

        for k in 0..k_count {
            for d in 0..dims {
                let (e, f) = (state.lambda_shape[m][[k, d]], state.lambda_rate[m][[k, d]]);
                let e_log_lambda = digamma_unchecked(e) - f.ln();
                let var = state.w_var[m][[k, d]];
                t.loadings += 0.5 * (e_log_lambda - (e / f) * state.w_second_moment(m, k, d) + var.ln() + 1.0);
                t.kl_lambda += kl_gamma(e, f, hyper.e0, hyper.f0);
                t.z_entropy += bernoulli_entropy(state.rho[m][[k, d]]);
            }
        }

        let alpha = state.alpha_mean(m);
        t.kl_alpha += kl_gamma(state.alpha_shape[m], state.alpha_rate[m], hyper.c0, hyper.d0);
        let base = ln_gamma_unchecked(alpha) - ln_gamma_unchecked(alpha + dims as f64);
        for k in 0..k_count {
            let (geo_on, geo_off) = geo_concentrations(state, m, k);
            let on: f64 = state.rho[m].row(k).sum();
            let off = dims as f64 - on;
            t.collapsed_prior += base + ln_gamma_unchecked(geo_on + on) - ln_gamma_unchecked(geo_on)
                + ln_gamma_unchecked(geo_off + off)
                - ln_gamma_unchecked(geo_off);
        }
    }

    for n in 0..state.n_samples() {
        for k in 0..k_count {
            t.factors += 0.5 * (-state.f_second_moment(n, k) + state.f_var[[n, k]].ln() + 1.0);
        }
    }

    let (a0, b0) = hyper.beta_prior();
    for k in 0..k_count {
        t.kl_beta += kl_beta(state.beta_a[k], state.beta_b[k], a0, b0);
    }
    t
}
