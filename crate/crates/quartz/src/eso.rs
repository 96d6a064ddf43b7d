//! Expected-separable-overapproximation parameters and stepsizes.
//!
//! For a matrix/sampling pair this module produces the vector `v` certifying
//! `E||A h_[S]||^2 <= sum_i p_i v_i h_i^2` via closed forms, the stepsize
//! `theta = min_i p_i L / (v_i + L)` with `L = lambda * gamma * n`, optimal
//! serial probabilities, and two independent evaluators of the left-hand
//! expectation used to certify the inequality on small instances.
//!
//! All `v` computations stream over the nonzeros once after a single pass
//! that counts per-row statistics.

use crate::matrix::DataMatrix;
use crate::sampling::{Kind, SamplingError, SamplingScheme};
use crate::util::kahan_sum;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsoError {
    #[error("tau = {tau} out of range for n = {n}")]
    TauOutOfRange { tau: usize, n: usize },
    #[error("node count {c} must divide n = {n}")]
    NotDivisible { c: usize, n: usize },
    #[error("partition is not feature-disjoint: row {row} is active in groups {a} and {b}")]
    NotSeparable { row: usize, a: usize, b: usize },
    #[error("invalid partition: {0}")]
    BadPartition(String),
}

/// ESO certificate for one matrix/sampling pair.
#[derive(Debug, Clone)]
pub struct EsoParams {
    /// Per-block overapproximation weights.
    pub v: Vec<f64>,
    /// Contraction stepsize `min_i p_i L / (v_i + L)`.
    pub theta: f64,
    /// Inclusion probabilities of the certified sampling.
    pub probs: Vec<f64>,
    /// The product `lambda * gamma * n` entering the stepsize.
    pub lambda_gamma_n: f64,
    /// The sampling the weights certify.
    pub scheme: SamplingScheme,
}

impl EsoParams {
    pub fn compute(
        matrix: &DataMatrix,
        scheme: &SamplingScheme,
        lambda: f64,
        gamma: f64,
    ) -> Result<Self, EsoError> {
        let v = v_for_scheme(matrix, scheme)?;
        let probs = scheme.inclusion_probs();
        let theta = theta(&probs, &v, lambda, gamma, matrix.n());
        Ok(EsoParams {
            v,
            theta,
            probs,
            lambda_gamma_n: lambda * gamma * matrix.n() as f64,
            scheme: scheme.clone(),
        })
    }
}

/// Weights for any serial sampling: the squared column norms, independent of
/// the serial distribution.
pub fn v_serial(matrix: &DataMatrix) -> Vec<f64> {
    (0..matrix.n()).map(|i| matrix.column_sq_norm(i)).collect()
}

fn weighted_column_sums(matrix: &DataMatrix, row_factor: &[f64]) -> Vec<f64> {
    (0..matrix.n())
        .map(|i| {
            matrix
                .column(i)
                .iter()
                .map(|&(row, a)| row_factor[row as usize] * a * a)
                .sum()
        })
        .collect()
}

/// Weights for the tau-nice sampling:
/// `v_i = sum_j (1 + (omega_j - 1)(tau - 1) / (n - 1)) A_ji^2`.
pub fn v_tau_nice(matrix: &DataMatrix, tau: usize) -> Result<Vec<f64>, EsoError> {
    let n = matrix.n();
    if tau == 0 || tau > n {
        return Err(EsoError::TauOutOfRange { tau, n });
    }
    let denom = n.saturating_sub(1).max(1) as f64;
    let row_factor: Vec<f64> = matrix
        .row_nnz_counts()
        .iter()
        .map(|&omega| 1.0 + (omega.saturating_sub(1) as f64 * (tau - 1) as f64) / denom)
        .collect();
    Ok(weighted_column_sums(matrix, &row_factor))
}

/// Weights for a product sampling over a feature-disjoint partition; equal to
/// the serial weights once separability is verified.
pub fn v_product(matrix: &DataMatrix, groups: &[Vec<usize>]) -> Result<Vec<f64>, EsoError> {
    let group_of = group_lookup(matrix.n(), groups)?;
    // separability: no feature row may touch two groups; rows are scanned in
    // order so the smallest offending row is the one reported
    for (row, entries) in matrix.to_rows().iter().enumerate() {
        let mut seen: Option<u32> = None;
        for &(col, _) in entries {
            let g = group_of[col as usize];
            match seen {
                None => seen = Some(g),
                Some(first) if first != g => {
                    return Err(EsoError::NotSeparable {
                        row,
                        a: first as usize,
                        b: g as usize,
                    })
                }
                _ => {}
            }
        }
    }
    Ok(v_serial(matrix))
}

/// Weights for the (c, tau)-distributed sampling over equal-size cells.
/// With `c = 1` this reduces exactly to [`v_tau_nice`].
pub fn v_distributed(
    matrix: &DataMatrix,
    c: usize,
    tau: usize,
    cells: &[Vec<usize>],
) -> Result<Vec<f64>, EsoError> {
    let n = matrix.n();
    if c == 0 || !n.is_multiple_of(c) {
        return Err(EsoError::NotDivisible { c, n });
    }
    let cell_size = n / c;
    if tau == 0 || tau > cell_size {
        return Err(EsoError::TauOutOfRange { tau, n: cell_size });
    }
    if cells.len() != c || cells.iter().any(|cell| cell.len() != cell_size) {
        return Err(EsoError::BadPartition(format!(
            "expected {c} cells of size {cell_size}"
        )));
    }
    group_lookup(n, cells)?;

    // omega'_j: number of cells with at least one nonzero in row j. Each cell
    // is scanned contiguously, so one marker per row suffices.
    let mut active_cells = vec![0u32; matrix.d()];
    let mut last_cell = vec![u32::MAX; matrix.d()];
    for (l, cell) in cells.iter().enumerate() {
        for &i in cell {
            for &(row, _) in matrix.column(i) {
                if last_cell[row as usize] != l as u32 {
                    last_cell[row as usize] = l as u32;
                    active_cells[row as usize] += 1;
                }
            }
        }
    }

    let denom = cell_size.saturating_sub(1).max(1) as f64;
    let coupling_base = (tau * c) as f64 / n as f64 - (tau - 1) as f64 / denom;
    let row_factor: Vec<f64> = matrix
        .row_nnz_counts()
        .iter()
        .zip(&active_cells)
        .map(|(&omega, &active)| {
            if omega == 0 {
                return 0.0;
            }
            let spread = ((omega - 1) as f64 * (tau - 1) as f64) / denom;
            let cross =
                coupling_base * ((active - 1) as f64 / active as f64) * omega as f64;
            1.0 + spread + cross
        })
        .collect();
    Ok(weighted_column_sums(matrix, &row_factor))
}

/// Dispatches to the closed-form weights matching the scheme variant.
pub fn v_for_scheme(matrix: &DataMatrix, scheme: &SamplingScheme) -> Result<Vec<f64>, EsoError> {
    match &scheme.kind {
        Kind::Serial { .. } => Ok(v_serial(matrix)),
        Kind::TauNice { tau, .. } => v_tau_nice(matrix, *tau),
        Kind::Product { groups, .. } => v_product(matrix, groups),
        Kind::Distributed { cells, tau, .. } => {
            v_distributed(matrix, cells.len(), *tau, cells)
        }
    }
}

/// Stepsize `theta = min_i p_i L / (v_i + L)` with `L = lambda * gamma * n`;
/// always in `(0, min_i p_i]`.
pub fn theta(probs: &[f64], v: &[f64], lambda: f64, gamma: f64, n: usize) -> f64 {
    let lgn = lambda * gamma * n as f64;
    probs
        .iter()
        .zip(v)
        .map(|(&p, &vi)| p * lgn / (vi + lgn))
        .fold(f64::INFINITY, f64::min)
}

/// Serial probabilities maximizing the stepsize for given weights:
/// `p*_i = (v_i + L) / sum_k (v_k + L)`. The resulting stepsize is
/// `L / sum_k (v_k + L)`, never worse than the uniform one.
pub fn importance_probs(v: &[f64], lambda: f64, gamma: f64, n: usize) -> Vec<f64> {
    let lgn = lambda * gamma * n as f64;
    let total = kahan_sum(v.iter().map(|&vi| vi + lgn));
    v.iter().map(|&vi| (vi + lgn) / total).collect()
}

/// Exact `E||A h_[S]||^2` through the Hadamard identity
/// `h' (P o A'A) h` with closed-form pairwise inclusion probabilities.
/// Costs `sum_j omega_j^2`, so it is meant for oracle use on small data.
pub fn exact_eso_lhs(matrix: &DataMatrix, scheme: &SamplingScheme, h: &[f64]) -> f64 {
    assert_eq!(h.len(), matrix.n(), "h has wrong dimension");
    let rows = matrix.to_rows();
    let mut total = 0.0;
    for row in &rows {
        for &(i, a) in row {
            let hi_a = a * h[i as usize];
            for &(k, b) in row {
                total += hi_a * b * h[k as usize] * scheme.pair_prob(i as usize, k as usize);
            }
        }
    }
    total
}

/// Exact `E||A h_[S]||^2` by full support enumeration; the independent
/// cross-check for [`exact_eso_lhs`] where the support is small enough.
pub fn eso_lhs_by_enumeration(
    matrix: &DataMatrix,
    scheme: &SamplingScheme,
    h: &[f64],
) -> Result<f64, SamplingError> {
    assert_eq!(h.len(), matrix.n(), "h has wrong dimension");
    let dist = scheme.enumerate_distribution()?;
    let mut total = 0.0;
    let mut acc = vec![0.0; matrix.d()];
    for (set, p) in dist {
        acc.iter_mut().for_each(|x| *x = 0.0);
        for &i in &set {
            matrix.add_scaled_column(i, h[i], &mut acc);
        }
        total += p * acc.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total)
}

/// Separable right-hand side `sum_i p_i v_i h_i^2` of the ESO inequality.
pub fn eso_rhs(probs: &[f64], v: &[f64], h: &[f64]) -> f64 {
    probs
        .iter()
        .zip(v)
        .zip(h)
        .map(|((&p, &vi), &hi)| p * vi * hi * hi)
        .sum()
}

fn group_lookup(n: usize, groups: &[Vec<usize>]) -> Result<Vec<u32>, EsoError> {
    let mut owner = vec![u32::MAX; n];
    for (l, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(EsoError::BadPartition(format!("group {l} is empty")));
        }
        for &i in group {
            if i >= n {
                return Err(EsoError::BadPartition(format!(
                    "index {i} out of range (n = {n})"
                )));
            }
            if owner[i] != u32::MAX {
                return Err(EsoError::BadPartition(format!("index {i} repeated")));
            }
            owner[i] = l as u32;
        }
    }
    if let Some(i) = owner.iter().position(|&o| o == u32::MAX) {
        return Err(EsoError::BadPartition(format!("index {i} not covered")));
    }
    Ok(owner)
}
