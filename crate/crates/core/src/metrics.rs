//! Recovery and prediction metrics: stability indices, loading
//! categorization, reconstruction error, cross-group ranking and AUC.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::engine::{expected_loadings, reconstruct_group};
use crate::error::{NgfaError, Result};
use crate::model::{GroupedDataset, VariationalState};
use crate::simdata::{Cell, SparsityPattern};

/// Mean of squared entries pooled over several matrices; 0 when empty.
pub fn pooled_mean_square<'a>(mats: impl IntoIterator<Item = &'a Array2<f64>>) -> f64 {
    let (sum, count) = mats.into_iter().fold((0.0, 0usize), |(s, c), m| {
        (s + m.iter().map(|x| x * x).sum::<f64>(), c + m.len())
    });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean over all groups and cells of `(x − E[F] E[G])²`.
pub fn train_mse(data: &GroupedDataset, state: &VariationalState) -> f64 {
    let residuals: Vec<Array2<f64>> = (0..data.n_groups())
        .map(|m| data.group(m) - &reconstruct_group(state, &state.f_mean, m))
        .collect();
    pooled_mean_square(&residuals)
}

/// Centers each row and scales it to unit norm; constant rows become zero.
fn standardize_rows(a: ArrayView2<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut row in out.rows_mut() {
        let mean = row.mean().unwrap_or(0.0);
        row.mapv_inplace(|x| x - mean);
        let norm = row.dot(&row).sqrt();
        // Rows that are constant up to rounding carry no correlation signal.
        if norm > 1e-12 * (1.0 + mean.abs()) * (row.len() as f64).sqrt() {
            row.mapv_inplace(|x| x / norm);
        } else {
            row.fill(0.0);
        }
    }
    out
}

/// `|corr(A_r, B_l)|` for every pair of rows; both matrices are `· × D`.
pub fn abs_correlation(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(NgfaError::usage(format!(
            "row lengths differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.ncols() < 2 {
        return Err(NgfaError::usage("correlation needs at least two columns"));
    }
    let (sa, sb) = (standardize_rows(a), standardize_rows(b));
    Ok(sa.dot(&sb.t()).mapv(|c| c.abs().min(1.0)))
}

/// Half the average over rows of `max − penalty`, where the penalty is the sum
/// of the above-mean entries divided by `len − 1` (0 when `len = 1`).
fn ssi_half<'a>(lines: impl Iterator<Item = ndarray::ArrayView1<'a, f64>>, count: usize) -> f64 {
    let mut total = 0.0;
    for line in lines {
        let len = line.len();
        let max = line.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let penalty = if len > 1 {
            let mean = line.mean().unwrap_or(0.0);
            line.iter().filter(|&&c| c > mean).sum::<f64>() / (len - 1) as f64
        } else {
            0.0
        };
        total += max - penalty;
    }
    total / (2.0 * count as f64)
}

/// Sparse stability index of an absolute correlation matrix.
pub fn ssi(c: ArrayView2<f64>) -> Result<f64> {
    let (k1, k2) = c.dim();
    if k1 == 0 || k2 == 0 {
        return Err(NgfaError::usage("stability index needs a non-empty correlation matrix"));
    }
    Ok(ssi_half(c.rows().into_iter(), k1) + ssi_half(c.columns().into_iter(), k2))
}

fn unit_rows(a: ArrayView2<f64>) -> Array2<f64> {
    let mut out = a.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|x| x / norm);
        }
    }
    out
}

fn gram_trace(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `|tr(M1 M1ᵀ) − tr(M2 M2ᵀ)| / D²` without row normalization.
pub fn dsi_raw(m1: ArrayView2<f64>, m2: ArrayView2<f64>) -> Result<f64> {
    if m1.ncols() != m2.ncols() {
        return Err(NgfaError::usage("dense stability needs equal row lengths"));
    }
    let d = m1.ncols().max(1) as f64;
    Ok((gram_trace(&m1.to_owned()) - gram_trace(&m2.to_owned())).abs() / (d * d))
}

/// Dense stability index: [`dsi_raw`] after scaling every non-zero row to
/// unit norm.
pub fn dsi(m1: ArrayView2<f64>, m2: ArrayView2<f64>) -> Result<f64> {
    dsi_raw(unit_rows(m1).view(), unit_rows(m2).view())
}

/// Thresholded loadings with their rows split into dense and sparse sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSplit {
    /// Input with entries below the threshold in magnitude set to zero.
    pub thresholded: Array2<f64>,
    /// Indices of dense rows, most non-zeros first.
    pub dense: Vec<usize>,
    /// Remaining row indices in ascending order.
    pub sparse: Vec<usize>,
}

/// Zeroes entries with `|g| < threshold` and picks the `n_dense` rows with the
/// most surviving non-zeros (ties: larger norm, then lower index).
pub fn split_sparse_dense(g_hat: ArrayView2<f64>, threshold: f64, n_dense: usize) -> Result<LoadingSplit> {
    if n_dense > g_hat.nrows() {
        return Err(NgfaError::usage(format!(
            "cannot select {n_dense} dense rows out of {}",
            g_hat.nrows()
        )));
    }
    let thresholded = g_hat.mapv(|x| if x.abs() < threshold { 0.0 } else { x });
    let mut order: Vec<(usize, usize, f64)> = thresholded
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i, r.iter().filter(|x| **x != 0.0).count(), r.dot(&r)))
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    let dense: Vec<usize> = order[..n_dense].iter().map(|o| o.0).collect();
    let mut sparse: Vec<usize> = order[n_dense..].iter().map(|o| o.0).collect();
    sparse.sort_unstable();
    Ok(LoadingSplit {
        thresholded,
        dense,
        sparse,
    })
}

/// `s_d = Σ_k |E[g^{(a)}_kd] E[g^{(b)}_kd]|` for two groups with aligned columns.
pub fn ranking_score(state: &VariationalState, group_a: usize, group_b: usize) -> Result<Array1<f64>> {
    for m in [group_a, group_b] {
        if m >= state.n_groups() {
            return Err(NgfaError::usage(format!("group index {m} out of range")));
        }
    }
    let (ga, gb) = (expected_loadings(state, group_a), expected_loadings(state, group_b));
    if ga.ncols() != gb.ncols() {
        return Err(NgfaError::usage(format!(
            "groups {group_a} and {group_b} have {} and {} columns",
            ga.ncols(),
            gb.ncols()
        )));
    }
    Ok((&ga * &gb).mapv(f64::abs).sum_axis(Axis(0)))
}

/// Area under the ROC curve via the Mann–Whitney statistic; ties count 1/2.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(NgfaError::usage("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(NgfaError::usage("scores contain NaN"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(NgfaError::usage("AUC needs at least one positive and one negative label"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Thresholding and dense-row selection used when scoring recovered loadings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub sparsity_threshold: f64,
    /// Rows per group classified as dense; 0 scores every row as sparse.
    pub n_dense: usize,
}

impl EvalProtocol {
    /// All-sparse truth: every surviving row is scored with the SSI.
    pub const SPARSE_ONLY: EvalProtocol = EvalProtocol {
        sparsity_threshold: 0.15,
        n_dense: 0,
    };
    /// Mixed truth: four dense rows per group, the rest sparse.
    pub const SPARSE_DENSE: EvalProtocol = EvalProtocol {
        sparsity_threshold: 0.15,
        n_dense: 4,
    };
}

/// Scores of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStability {
    pub ssi: f64,
    pub dsi: f64,
    /// Mean over true dense factors of the best |correlation| with a selected
    /// dense row; `None` when the group has no true dense factor.
    pub dense_correlation: Option<f64>,
}

/// Group-averaged stability of recovered loadings against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub ssi: f64,
    pub dsi: f64,
    /// Average of the per-group dense correlations that are defined.
    pub dense_correlation: Option<f64>,
    pub per_group: Vec<GroupStability>,
    pub n_dense_selected: usize,
}

fn select_rows(a: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    a.select(Axis(0), rows)
}

fn nonzero_rows(a: &Array2<f64>, rows: &[usize]) -> Vec<usize> {
    rows.iter()
        .copied()
        .filter(|&r| a.row(r).iter().any(|x| *x != 0.0))
        .collect()
}

/// Scores recovered `K × D_m` loadings per group against true loadings whose
/// rows are classified by `pattern`.
///
/// Recovered loadings are thresholded first. With `n_dense > 0` the densest
/// rows are scored against the true dense rows with the DSI and the remaining
/// rows against the true sparse rows with the SSI. Recovered rows that are
/// entirely zero after thresholding are inactive in that group and excluded;
/// a group without any surviving sparse row scores SSI 0.
pub fn stability(
    truth: &[Array2<f64>],
    pattern: &SparsityPattern,
    recovered: &[Array2<f64>],
    protocol: EvalProtocol,
) -> Result<StabilityReport> {
    if truth.len() != recovered.len() || truth.len() != pattern.n_groups() {
        return Err(NgfaError::usage("truth, pattern and recovered loadings differ in group count"));
    }
    let mut per_group = Vec::with_capacity(truth.len());
    let mut n_dense_selected = 0;
    for (m, (t, r)) in truth.iter().zip(recovered).enumerate() {
        if t.ncols() != r.ncols() {
            return Err(NgfaError::data(format!(
                "group {m}: truth has {} columns, recovered loadings {}",
                t.ncols(),
                r.ncols()
            )));
        }
        let split = split_sparse_dense(r.view(), protocol.sparsity_threshold, protocol.n_dense.min(r.nrows()))?;
        n_dense_selected = split.dense.len();
        let true_sparse = pattern.factors_in(m, Cell::Sparse);
        let true_dense = pattern.factors_in(m, Cell::Dense);

        let rec_sparse = nonzero_rows(&split.thresholded, &split.sparse);
        let ssi_value = if rec_sparse.is_empty() || true_sparse.is_empty() {
            0.0
        } else {
            let c = abs_correlation(
                select_rows(&split.thresholded, &rec_sparse).view(),
                select_rows(t, &true_sparse).view(),
            )?;
            ssi(c.view())?
        };

        let rec_dense = select_rows(&split.thresholded, &split.dense);
        let true_dense_rows = select_rows(t, &true_dense);
        let dsi_value = dsi(rec_dense.view(), true_dense_rows.view())?;
        let dense_correlation = if true_dense.is_empty() || split.dense.is_empty() {
            None
        } else {
            let c = abs_correlation(true_dense_rows.view(), rec_dense.view())?;
            let best = c.rows().into_iter().map(|row| row.iter().copied().fold(0.0, f64::max));
            Some(best.sum::<f64>() / true_dense.len() as f64)
        };
        per_group.push(GroupStability {
            ssi: ssi_value,
            dsi: dsi_value,
            dense_correlation,
        });
    }
    let groups = per_group.len().max(1) as f64;
    let defined: Vec<f64> = per_group.iter().filter_map(|g| g.dense_correlation).collect();
    Ok(StabilityReport {
        ssi: per_group.iter().map(|g| g.ssi).sum::<f64>() / groups,
        dsi: per_group.iter().map(|g| g.dsi).sum::<f64>() / groups,
        dense_correlation: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        per_group,
        n_dense_selected,
    })
}
