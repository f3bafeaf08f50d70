//! Posterior means of the loadings and factor prediction for new samples.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{NgfaError, Result};
use crate::model::VariationalState;

/// E[G^{(m)}] = ρ ∘ μ_w, `K × D_m`.
pub fn expected_loadings(state: &VariationalState, m: usize) -> Array2<f64> {
    &state.rho[m] * &state.w_mean[m]
}

/// F̂ E[G^{(m)}] for factor means `F̂` of shape `N' × K`.
pub fn reconstruct_group(state: &VariationalState, factor_means: &Array2<f64>, m: usize) -> Array2<f64> {
    factor_means.dot(&expected_loadings(state, m))
}

/// Average over training samples of E[τ_n^{(m)}].
fn mean_tau(state: &VariationalState, m: usize) -> f64 {
    let n = state.n_samples();
    if n == 0 {
        return 1.0;
    }
    (0..n).map(|i| state.tau_mean(m, i)).sum::<f64>() / n as f64
}

/// Shared pieces of the conditional Gaussian over the factors of a new sample
/// observed in the groups `observed`.
struct Conditional {
    groups: Vec<usize>,
    loadings: Vec<Array2<f64>>,
    taus: Vec<f64>,
    cholesky: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Conditional {
    fn new(state: &VariationalState, observed: &[usize]) -> Result<Self> {
        if observed.is_empty() {
            return Err(NgfaError::usage("at least one observed group is required"));
        }
        let mut seen = vec![false; state.n_groups()];
        for &m in observed {
            if m >= state.n_groups() {
                return Err(NgfaError::usage(format!("group index {m} out of range")));
            }
            if std::mem::replace(&mut seen[m], true) {
                return Err(NgfaError::usage(format!("group {m} listed twice")));
            }
        }
        // Sorting fixes the summation order, so the result does not depend on
        // the order in which groups are listed.
        let mut groups = observed.to_vec();
        groups.sort_unstable();

        let k = state.truncation();
        let mut precision = DMatrix::<f64>::identity(k, k);
        let mut loadings = Vec::with_capacity(groups.len());
        let mut taus = Vec::with_capacity(groups.len());
        for &m in &groups {
            let tau = mean_tau(state, m);
            let g = expected_loadings(state, m);
            let gram = g.dot(&g.t());
            let second = &state.rho[m] * &(&state.w_mean[m] * &state.w_mean[m] + &state.w_var[m]);
            let extra = (&second - &(&g * &g)).sum_axis(Axis(1));
            for i in 0..k {
                for j in 0..k {
                    precision[(i, j)] += tau * gram[[i, j]];
                }
                precision[(i, i)] += tau * extra[i];
            }
            loadings.push(g);
            taus.push(tau);
        }
        let cholesky = precision
            .cholesky()
            .ok_or_else(|| NgfaError::numerical("factor prediction", "precision matrix is not positive definite"))?;
        Ok(Conditional {
            groups,
            loadings,
            taus,
            cholesky,
        })
    }

    fn covariance(&self) -> Array2<f64> {
        let inv = self.cholesky.inverse();
        Array2::from_shape_fn((inv.nrows(), inv.ncols()), |(i, j)| inv[(i, j)])
    }

    /// Posterior mean given one row per observed group (in `self.groups` order).
    fn mean(&self, rows: &[ArrayView1<f64>]) -> Array1<f64> {
        let k = self.cholesky.l_dirty().nrows();
        let mut rhs = DVector::<f64>::zeros(k);
        for ((g, &tau), x) in self.loadings.iter().zip(&self.taus).zip(rows) {
            let proj = g.dot(x);
            for i in 0..k {
                rhs[i] += tau * proj[i];
            }
        }
        let sol = self.cholesky.solve(&rhs);
        Array1::from_iter(sol.iter().copied())
    }
}

fn check_width(state: &VariationalState, m: usize, width: usize) -> Result<()> {
    let expected = state.rho[m].ncols();
    if width == expected {
        Ok(())
    } else {
        Err(NgfaError::data(format!(
            "group {m} has {width} columns, the fitted model expects {expected}"
        )))
    }
}

/// Gaussian posterior (mean, covariance) over the factors of one new sample,
/// given its values in a subset of groups, with loadings fixed at their
/// posterior means and the noise precision at its training average.
pub fn predict_factors(state: &VariationalState, observed: &[(usize, ArrayView1<f64>)]) -> Result<(Array1<f64>, Array2<f64>)> {
    for (m, x) in observed {
        if *m < state.n_groups() {
            check_width(state, *m, x.len())?;
        }
    }
    let ids: Vec<usize> = observed.iter().map(|(m, _)| *m).collect();
    let cond = Conditional::new(state, &ids)?;
    let rows: Vec<ArrayView1<f64>> = cond
        .groups
        .iter()
        .map(|m| observed.iter().find(|(g, _)| g == m).map(|(_, x)| x.view()).unwrap())
        .collect();
    Ok((cond.mean(&rows), cond.covariance()))
}

/// Posterior factor means for many new samples, one per row of each observed
/// group matrix; returns an `N' × K` matrix.
pub fn predict_factor_means(state: &VariationalState, observed: &[(usize, ArrayView2<f64>)]) -> Result<Array2<f64>> {
    let n_rows = observed.first().map_or(0, |(_, x)| x.nrows());
    for (m, x) in observed {
        if *m < state.n_groups() {
            check_width(state, *m, x.ncols())?;
        }
        if x.nrows() != n_rows {
            return Err(NgfaError::data("observed groups have different numbers of samples"));
        }
    }
    let ids: Vec<usize> = observed.iter().map(|(m, _)| *m).collect();
    let cond = Conditional::new(state, &ids)?;
    let mats: Vec<&ArrayView2<f64>> = cond
        .groups
        .iter()
        .map(|m| observed.iter().find(|(g, _)| g == m).map(|(_, x)| x).unwrap())
        .collect();
    let mut out = Array2::zeros((n_rows, state.truncation()));
    for n in 0..n_rows {
        let rows: Vec<ArrayView1<f64>> = mats.iter().map(|x| x.row(n)).collect();
        out.row_mut(n).assign(&cond.mean(&rows));
    }
    Ok(out)
}
