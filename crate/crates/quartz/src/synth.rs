//! Reproducible synthetic instance generation for benchmarks and tests.

use crate::matrix::DataMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{0}")]
    BadParams(String),
    #[error("fully sparse profile needs n * nnz_per_column <= d, got {need} > {d}")]
    InfeasibleSparseProfile { need: usize, d: usize },
}

/// Row-sparsity regime of the generated matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaProfile {
    /// Nonzero positions drawn uniformly per column.
    Uniform,
    /// Every feature appears in at most one example (each row count 0 or 1).
    FullySparse,
    /// Every feature appears in every example.
    FullyDense,
}

/// Generates a d-by-n matrix with standard normal nonzero values; the same
/// seed always yields the identical matrix.
pub fn synth_instance(
    n: usize,
    d: usize,
    density: f64,
    profile: OmegaProfile,
    seed: u64,
) -> Result<DataMatrix, SynthError> {
    if n == 0 || d == 0 {
        return Err(SynthError::BadParams("n and d must be positive".into()));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(SynthError::BadParams(format!(
            "density {density} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        let v: f64 = rng.sample(StandardNormal);
        if v == 0.0 {
            1.0
        } else {
            v
        }
    };
    let per_column = ((density * d as f64).round() as usize).clamp(1, d);
    let columns: Vec<Vec<(usize, f64)>> = match profile {
        OmegaProfile::Uniform => {
            let mut rows: Vec<usize> = (0..d).collect();
            (0..n)
                .map(|_| {
                    for pos in 0..per_column {
                        let j = rng.random_range(pos..d);
                        rows.swap(pos, j);
                    }
                    let picked = rows[..per_column].to_vec();
                    picked.into_iter().map(|r| (r, draw(&mut rng))).collect()
                })
                .collect()
        }
        OmegaProfile::FullySparse => {
            let need = n
                .checked_mul(per_column)
                .ok_or_else(|| SynthError::BadParams("n * nnz overflow".into()))?;
            if need > d {
                return Err(SynthError::InfeasibleSparseProfile { need, d });
            }
            let mut rows: Vec<usize> = (0..d).collect();
            for pos in 0..need {
                let j = rng.random_range(pos..d);
                rows.swap(pos, j);
            }
            (0..n)
                .map(|i| {
                    rows[i * per_column..(i + 1) * per_column]
                        .iter()
                        .map(|&r| (r, draw(&mut rng)))
                        .collect()
                })
                .collect()
        }
        OmegaProfile::FullyDense => (0..n)
            .map(|_| (0..d).map(|r| (r, draw(&mut rng))).collect())
            .collect(),
    };
    Ok(DataMatrix::from_columns(d, columns).expect("generated entries are valid"))
}
