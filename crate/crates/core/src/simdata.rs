//! Synthetic grouped data with known sparse/dense loading structure.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NgfaError, Result};
use crate::model::GroupedDataset;

/// Fraction of entries zeroed in a sparse loading row.
pub const SPARSE_ZERO_FRACTION: f64 = 0.9;
/// Variance of non-zero loadings.
pub const LOADING_VARIANCE: f64 = 4.0;
/// Variance of the additive noise.
pub const NOISE_VARIANCE: f64 = 1.0;

/// Role of a factor in a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    #[serde(rename = "s")]
    Sparse,
    #[serde(rename = "d")]
    Dense,
    #[serde(rename = "-")]
    Absent,
}

/// `M × K` grid saying how each factor loads on each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PatternRepr", into = "PatternRepr")]
pub struct SparsityPattern {
    cells: Vec<Vec<Cell>>,
}

#[derive(Serialize, Deserialize)]
struct PatternRepr {
    cells: Vec<Vec<Cell>>,
}

impl TryFrom<PatternRepr> for SparsityPattern {
    type Error = NgfaError;
    fn try_from(r: PatternRepr) -> Result<Self> {
        SparsityPattern::new(r.cells)
    }
}

impl From<SparsityPattern> for PatternRepr {
    fn from(p: SparsityPattern) -> Self {
        PatternRepr { cells: p.cells }
    }
}

impl SparsityPattern {
    /// Rows are groups, columns factors. Every factor must be present in some
    /// group.
    pub fn new(cells: Vec<Vec<Cell>>) -> Result<Self> {
        let k = cells.first().map_or(0, Vec::len);
        if cells.is_empty() || k == 0 {
            return Err(NgfaError::config("sparsity pattern must have at least one group and one factor"));
        }
        if cells.iter().any(|row| row.len() != k) {
            return Err(NgfaError::config("sparsity pattern rows differ in length"));
        }
        if let Some(f) = (0..k).find(|&f| cells.iter().all(|row| row[f] == Cell::Absent)) {
            return Err(NgfaError::config(format!("factor {} is absent from every group", f + 1)));
        }
        Ok(SparsityPattern { cells })
    }

    /// Parses rows such as `"s--s-"` (`s` sparse, `d` dense, `-` absent).
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let cells = rows
            .iter()
            .map(|row| {
                row.chars()
                    .map(|c| match c {
                        's' => Ok(Cell::Sparse),
                        'd' => Ok(Cell::Dense),
                        '-' => Ok(Cell::Absent),
                        other => Err(NgfaError::config(format!("unknown pattern symbol {other:?}"))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        SparsityPattern::new(cells)
    }

    pub fn n_groups(&self) -> usize {
        self.cells.len()
    }

    pub fn n_factors(&self) -> usize {
        self.cells[0].len()
    }

    pub fn cell(&self, m: usize, k: usize) -> Cell {
        self.cells[m][k]
    }

    /// Factors of group `m` with the given role, ascending.
    pub fn factors_in(&self, m: usize, kind: Cell) -> Vec<usize> {
        (0..self.n_factors()).filter(|&k| self.cells[m][k] == kind).collect()
    }
}

/// Four groups, six factors, sparse loadings only: three group-specific
/// factors and three shared by two, three and four groups.
pub fn simulation1_pattern() -> SparsityPattern {
    SparsityPattern::from_rows(&["s--s--", "-s-sss", "--s-ss", "-----s"]).expect("valid pattern")
}

/// Four groups, eight factors: four sparse factors (two of them shared) and
/// one dense factor per group.
pub fn simulation2_pattern() -> SparsityPattern {
    SparsityPattern::from_rows(&["s---d---", "-s-s-d--", "--ss--d-", "--s----d"]).expect("valid pattern")
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    /// `K × D_m` per group.
    pub loadings: Vec<Array2<f64>>,
    /// `N × K`.
    pub factors: Array2<f64>,
    pub pattern: SparsityPattern,
    /// `true` where a sparse row was zeroed, per group `K × D_m`.
    pub sparse_mask: Vec<Array2<bool>>,
    /// `N × D_m` noise per group, so that `X = F G + E` exactly.
    pub noise: Vec<Array2<f64>>,
}

/// Number of zeroed entries in a sparse row of length `d`.
pub fn sparse_zero_count(d: usize) -> usize {
    (SPARSE_ZERO_FRACTION * d as f64 - 1e-9).ceil() as usize
}

/// Draws `X^{(m)} = F G^{(m)} + E^{(m)}` following `pattern`.
///
/// Factors and noise are standard normal, non-zero loadings have variance 4.
/// Sparse rows have exactly [`sparse_zero_count`] zeros at positions chosen
/// by a seeded shuffle. Draw order: factors, then loadings group by group,
/// then noise group by group.
pub fn generate(
    pattern: &SparsityPattern,
    n: usize,
    d_per_group: &[usize],
    seed: u64,
) -> Result<(GroupedDataset, SimulationTruth)> {
    if d_per_group.len() != pattern.n_groups() {
        return Err(NgfaError::config(format!(
            "pattern has {} groups but {} dimensions were given",
            pattern.n_groups(),
            d_per_group.len()
        )));
    }
    if n == 0 || d_per_group.contains(&0) {
        return Err(NgfaError::config("sample count and group dimensions must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = pattern.n_factors();
    let loading_dist = Normal::new(0.0, LOADING_VARIANCE.sqrt()).expect("finite");
    let noise_dist = Normal::new(0.0, NOISE_VARIANCE.sqrt()).expect("finite");

    let factors = Array2::from_shape_simple_fn((n, k), || StandardNormal.sample(&mut rng));

    let mut loadings = Vec::with_capacity(d_per_group.len());
    let mut sparse_mask = Vec::with_capacity(d_per_group.len());
    for (m, &d) in d_per_group.iter().enumerate() {
        let mut g = Array2::zeros((k, d));
        let mut mask = Array2::from_elem((k, d), false);
        for f in 0..k {
            match pattern.cell(m, f) {
                Cell::Absent => {}
                Cell::Dense => g.row_mut(f).iter_mut().for_each(|x| *x = loading_dist.sample(&mut rng)),
                Cell::Sparse => {
                    let mut cols: Vec<usize> = (0..d).collect();
                    cols.shuffle(&mut rng);
                    let zeros = sparse_zero_count(d);
                    cols[..zeros].iter().for_each(|&c| mask[[f, c]] = true);
                    for c in 0..d {
                        if !mask[[f, c]] {
                            g[[f, c]] = loading_dist.sample(&mut rng);
                        }
                    }
                }
            }
        }
        loadings.push(g);
        sparse_mask.push(mask);
    }

    let noise: Vec<Array2<f64>> = d_per_group
        .iter()
        .map(|&d| Array2::from_shape_simple_fn((n, d), || noise_dist.sample(&mut rng)))
        .collect();
    let groups = loadings
        .iter()
        .zip(&noise)
        .map(|(g, e)| factors.dot(g) + e)
        .collect();
    let data = GroupedDataset::unnamed(groups)?;
    Ok((
        data,
        SimulationTruth {
            loadings,
            factors,
            pattern: pattern.clone(),
            sparse_mask,
            noise,
        },
    ))
}

/// Two groups with `d` aligned columns. `n_signal` randomly chosen columns
/// load on `n_shared` factors common to both groups (variance-4 weights); all
/// other columns are pure unit noise. Returns the data and the planted labels.
pub fn planted_pair(
    n: usize,
    d: usize,
    n_signal: usize,
    n_shared: usize,
    seed: u64,
) -> Result<(GroupedDataset, Vec<bool>)> {
    if n_signal > d || n == 0 || d == 0 || n_shared == 0 {
        return Err(NgfaError::config("planted pair needs n, d, n_shared > 0 and n_signal <= d"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loading_dist = Normal::new(0.0, LOADING_VARIANCE.sqrt()).expect("finite");
    let mut cols: Vec<usize> = (0..d).collect();
    cols.shuffle(&mut rng);
    let mut labels = vec![false; d];
    cols[..n_signal].iter().for_each(|&c| labels[c] = true);

    let factors = Array2::from_shape_simple_fn((n, n_shared), || StandardNormal.sample(&mut rng));
    let mut groups = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut g = Array2::zeros((n_shared, d));
        for f in 0..n_shared {
            for c in 0..d {
                if labels[c] {
                    g[[f, c]] = loading_dist.sample(&mut rng);
                }
            }
        }
        let e: Array2<f64> = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
        groups.push(factors.dot(&g) + e);
    }
    Ok((GroupedDataset::unnamed(groups)?, labels))
}

/// Observed statistics of one (group, factor) cell of a generated truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub group: usize,
    pub factor: usize,
    pub kind: Cell,
    pub zero_fraction: f64,
    /// Sample variance of the non-zero entries; `None` with fewer than two.
    pub nonzero_variance: Option<f64>,
}

/// Self-check of a generated truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub cells: Vec<CellSummary>,
    /// Sample variance of all factor entries.
    pub factor_variance: f64,
}

fn sample_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64)
}

pub fn empirical_check(truth: &SimulationTruth) -> EmpiricalSummary {
    let mut cells = Vec::new();
    for (m, g) in truth.loadings.iter().enumerate() {
        for (k, row) in g.axis_iter(Axis(0)).enumerate() {
            let nonzero: Vec<f64> = row.iter().copied().filter(|x| *x != 0.0).collect();
            cells.push(CellSummary {
                group: m,
                factor: k,
                kind: truth.pattern.cell(m, k),
                zero_fraction: 1.0 - nonzero.len() as f64 / row.len() as f64,
                nonzero_variance: sample_variance(&nonzero),
            });
        }
    }
    let all: Vec<f64> = truth.factors.iter().copied().collect();
    EmpiricalSummary {
        cells,
        factor_variance: sample_variance(&all).unwrap_or(0.0),
    }
}
