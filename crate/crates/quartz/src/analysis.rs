//! Iteration-complexity bounds, theoretical speedup factors, and measured
//! speedups from solver traces.

use crate::eso::{v_distributed, v_serial};
use crate::matrix::DataMatrix;
use crate::solver::TraceRecord;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("epsilon = {epsilon} exceeds the initial gap {gap0}")]
    EpsilonTooLarge { epsilon: f64, gap0: f64 },
    #[error("average-sparsity inversion needs tau >= 2, got {tau}")]
    TauTooSmall { tau: usize },
    #[error("trace never reaches gap <= {epsilon} (last gap {last})")]
    NotConverged { epsilon: f64, last: f64 },
    #[error(transparent)]
    Eso(#[from] crate::eso::EsoError),
}

/// Iteration-complexity report for one sampling/weights pair.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexityReport {
    /// Leading factor `max_i (1/p_i + v_i / (p_i lambda gamma n))`.
    pub t_iterations: f64,
    /// `log(gap0 / epsilon)`.
    pub log_factor: f64,
    /// Product of the two.
    pub t_total: f64,
    /// Condition number `max_i v_i / (lambda gamma)` of the supplied weights.
    pub kappa: f64,
    /// Average sparsity implied by a tau-nice weight vector, when the caller
    /// has one (see [`omega_tilde_from_v`]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_tilde: Option<f64>,
}

/// Evaluates the iteration bound
/// `max_i (1/p_i + v_i/(p_i lambda gamma n)) * log(gap0/epsilon)`.
pub fn complexity_bound(
    probs: &[f64],
    v: &[f64],
    lambda: f64,
    gamma: f64,
    n: usize,
    gap0: f64,
    epsilon: f64,
) -> Result<ComplexityReport, AnalysisError> {
    if epsilon > gap0 {
        return Err(AnalysisError::EpsilonTooLarge { epsilon, gap0 });
    }
    let lgn = lambda * gamma * n as f64;
    let t_iterations = probs
        .iter()
        .zip(v)
        .map(|(&p, &vi)| (1.0 + vi / lgn) / p)
        .fold(0.0_f64, f64::max);
    let log_factor = (gap0 / epsilon).ln();
    let kappa = v.iter().fold(0.0_f64, |a, &b| a.max(b)) / (lambda * gamma);
    Ok(ComplexityReport {
        t_iterations,
        log_factor,
        t_total: t_iterations * log_factor,
        kappa,
        omega_tilde: None,
    })
}

/// Theoretical speedup of tau-nice sampling over serial uniform:
/// `tau / (1 + (tau-1)(omega_tilde-1) / ((n-1)(1 + lambda gamma n)))`.
/// Assumes unit maximum squared column norm.
pub fn speedup_tau_nice(
    n: usize,
    lambda: f64,
    gamma: f64,
    omega_tilde: f64,
    tau: usize,
) -> Result<f64, AnalysisError> {
    if tau == 0 || tau > n {
        return Err(AnalysisError::TauTooSmall { tau });
    }
    if !(1.0..=n as f64).contains(&omega_tilde) {
        return Err(AnalysisError::TauTooSmall { tau });
    }
    let lgn = lambda * gamma * n as f64;
    let denom_n = (n as f64 - 1.0).max(1.0);
    Ok(tau as f64
        / (1.0 + (tau as f64 - 1.0) * (omega_tilde - 1.0) / (denom_n * (1.0 + lgn))))
}

/// Average sparsity implied by a pair of serial / tau-nice weight vectors:
/// inverts `max v_tau = (1 + (omega_tilde - 1)(tau - 1)/(n - 1)) max v_serial`.
/// Always lands in `[1, n]`.
pub fn omega_tilde_from_v(
    v_serial: &[f64],
    v_tau: &[f64],
    n: usize,
    tau: usize,
) -> Result<f64, AnalysisError> {
    if tau < 2 {
        return Err(AnalysisError::TauTooSmall { tau });
    }
    let max = |v: &[f64]| v.iter().fold(0.0_f64, |a, &b| a.max(b));
    let ratio = max(v_tau) / max(v_serial);
    Ok(1.0 + (n as f64 - 1.0) * (ratio - 1.0) / (tau as f64 - 1.0))
}

/// Leading iteration factor of the (c, tau)-distributed sampling,
/// `T(c, tau) = n/(c tau) + max_i v_i / (lambda gamma c tau)`.
pub fn t_distributed(n: usize, c: usize, tau: usize, v_max: f64, lambda: f64, gamma: f64) -> f64 {
    let ct = (c * tau) as f64;
    n as f64 / ct + v_max / (lambda * gamma * ct)
}

/// Speedup report for a concrete matrix under distributed sampling.
#[derive(Debug, Clone, Serialize)]
pub struct DistributedSpeedup {
    pub t_serial: f64,
    pub t_ctau: f64,
    /// `T(1,1) / T(c,tau)`.
    pub speedup: f64,
    /// Partition-independent upper bound on `T(c,tau)` available when
    /// `n/c >= 2` and `tau >= 2`; the gap to `t_ctau` shows how little the
    /// partition choice matters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition_effect_bound: Option<f64>,
}

/// Evaluates `T(1,1) / T(c,tau)` with exact weights for the given partition,
/// plus the partition-effect bound where defined.
pub fn speedup_distributed(
    matrix: &DataMatrix,
    c: usize,
    tau: usize,
    cells: &[Vec<usize>],
    lambda: f64,
    gamma: f64,
) -> Result<DistributedSpeedup, AnalysisError> {
    let n = matrix.n();
    let max = |v: &[f64]| v.iter().fold(0.0_f64, |a, &b| a.max(b));
    let vs_max = max(&v_serial(matrix));
    let vd_max = max(&v_distributed(matrix, c, tau, cells)?);
    let t_serial = t_distributed(n, 1, 1, vs_max, lambda, gamma);
    let t_ctau = t_distributed(n, c, tau, vd_max, lambda, gamma);
    let partition_effect_bound = if n / c >= 2 && tau >= 2 {
        // replace the partition-coupling term of each row factor by its
        // worst-case bound (1 + 1/(tau-1)) * tau-nice-within-cell factor
        let denom = (n / c - 1) as f64;
        let row_factor: Vec<f64> = matrix
            .row_nnz_counts()
            .iter()
            .map(|&omega| {
                if omega == 0 {
                    0.0
                } else {
                    1.0 + (tau as f64 - 1.0) * (omega as f64 - 1.0) / denom
                }
            })
            .collect();
        let vb_max = (0..n)
            .map(|i| {
                matrix
                    .column(i)
                    .iter()
                    .map(|&(row, a)| row_factor[row as usize] * a * a)
                    .sum::<f64>()
            })
            .fold(0.0_f64, f64::max);
        let scale = 1.0 + 1.0 / (tau as f64 - 1.0);
        Some(n as f64 / (c * tau) as f64 + scale * vb_max / (lambda * gamma * (c * tau) as f64))
    } else {
        None
    };
    Ok(DistributedSpeedup {
        t_serial,
        t_ctau,
        speedup: t_serial / t_ctau,
        partition_effect_bound,
    })
}

/// Leading iteration factor modeled from summary statistics alone (uniform
/// row sparsity `omega`, unit column norms, worst-case cell spread
/// `omega' = min(omega, c)`), for grid studies at scales where no matrix is
/// materialized.
pub fn t_distributed_from_stats(
    n: usize,
    c: usize,
    tau: usize,
    omega: f64,
    lambda: f64,
    gamma: f64,
) -> f64 {
    let cell = (n / c) as f64;
    let denom = (cell - 1.0).max(1.0);
    let omega_prime = omega.min(c as f64);
    let cross = if omega_prime > 1.0 {
        ((tau * c) as f64 / n as f64 - (tau as f64 - 1.0) / denom)
            * ((omega_prime - 1.0) / omega_prime)
            * omega
    } else {
        0.0
    };
    let v = 1.0 + (tau as f64 - 1.0) * (omega - 1.0) / denom + cross;
    t_distributed(n, c, tau, v, lambda, gamma)
}

/// Checks the chain
/// `(w-1)(t-1)/(n-1) <= w t / n <= 1 + (w-1)(t-1)/(n-1) <= 1 + w t / n`
/// for an average-sparsity/batch pair in `[1, n]^2`.
pub fn sandwich_check(omega_tilde: f64, tau: f64, n: f64) -> (bool, bool, bool) {
    let lhs = (omega_tilde - 1.0) * (tau - 1.0) / (n - 1.0).max(1.0);
    let mid = omega_tilde * tau / n;
    (lhs <= mid, mid <= 1.0 + lhs, 1.0 + lhs <= 1.0 + mid)
}

/// First iteration count in a trace with gap at or below `epsilon`.
pub fn iterations_to_gap(trace: &[TraceRecord], epsilon: f64) -> Result<usize, AnalysisError> {
    trace
        .iter()
        .find(|r| r.gap <= epsilon)
        .map(|r| r.iteration)
        .ok_or_else(|| AnalysisError::NotConverged {
            epsilon,
            last: trace.last().map(|r| r.gap).unwrap_or(f64::NAN),
        })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Measured speedup: iterations-to-epsilon of the serial-uniform runs over
/// those of the richer-sampling runs, medians across seeds. Iteration counts
/// are read at gap checkpoints, with no interpolation.
pub fn practical_speedup(
    serial_traces: &[&[TraceRecord]],
    scheme_traces: &[&[TraceRecord]],
    epsilon: f64,
) -> Result<f64, AnalysisError> {
    assert!(!serial_traces.is_empty() && !scheme_traces.is_empty());
    let mut serial: Vec<f64> = serial_traces
        .iter()
        .map(|t| iterations_to_gap(t, epsilon).map(|i| i as f64))
        .collect::<Result<_, _>>()?;
    let mut scheme: Vec<f64> = scheme_traces
        .iter()
        .map(|t| iterations_to_gap(t, epsilon).map(|i| i as f64))
        .collect::<Result<_, _>>()?;
    Ok(median(&mut serial) / median(&mut scheme))
}
