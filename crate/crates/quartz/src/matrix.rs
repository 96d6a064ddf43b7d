//! Sparse column-major data matrix.
//!
//! Each column holds one example; rows are features. Storage keeps only
//! finite nonzero entries, sorted by row, so per-feature nonzero counts
//! can be maintained exactly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix must contain at least one example")]
    Empty,
    #[error("feature count must be positive")]
    NoFeatures,
    #[error("non-finite entry {value} at column {col}, row {row}")]
    NonFinite { col: usize, row: usize, value: f64 },
    #[error("row index {row} out of range in column {col} (d = {d})")]
    RowOutOfRange { col: usize, row: usize, d: usize },
    #[error("duplicate row index {row} in column {col}")]
    DuplicateRow { col: usize, row: usize },
}

/// Sparse d-by-n matrix of examples, stored by column.
///
/// Invariants: every stored value is finite and nonzero, column entries are
/// sorted by row with no duplicates, and `row_nnz[j]` is the exact number of
/// columns with a nonzero in row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    d: usize,
    n: usize,
    columns: Vec<Vec<(u32, f64)>>,
    row_nnz: Vec<u32>,
}

impl DataMatrix {
    /// Builds a matrix from per-example `(row, value)` lists.
    ///
    /// Explicit zeros are dropped; non-finite values, out-of-range rows and
    /// duplicate rows within a column are rejected.
    pub fn from_columns(
        d: usize,
        columns: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self, MatrixError> {
        if columns.is_empty() {
            return Err(MatrixError::Empty);
        }
        if d == 0 {
            return Err(MatrixError::NoFeatures);
        }
        let n = columns.len();
        let mut stored: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
        for (ci, entries) in columns.into_iter().enumerate() {
            let mut col: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
            for (row, value) in entries {
                if row >= d {
                    return Err(MatrixError::RowOutOfRange { col: ci, row, d });
                }
                if !value.is_finite() {
                    return Err(MatrixError::NonFinite { col: ci, row, value });
                }
                if value != 0.0 {
                    col.push((row as u32, value));
                }
            }
            col.sort_unstable_by_key(|&(row, _)| row);
            for pair in col.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(MatrixError::DuplicateRow {
                        col: ci,
                        row: pair[0].0 as usize,
                    });
                }
            }
            stored.push(col);
        }
        let mut row_nnz = vec![0u32; d];
        for col in &stored {
            for &(row, _) in col {
                row_nnz[row as usize] += 1;
            }
        }
        Ok(DataMatrix {
            d,
            n,
            columns: stored,
            row_nnz,
        })
    }

    /// Builds a matrix from dense row-major data (`rows[j][i]` is row j, column i).
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, MatrixError> {
        let d = rows.len();
        if d == 0 {
            return Err(MatrixError::NoFeatures);
        }
        let n = rows[0].len();
        let mut columns = vec![Vec::new(); n];
        for (j, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "ragged row {j}");
            for (i, &value) in row.iter().enumerate() {
                columns[i].push((j, value));
            }
        }
        Self::from_columns(d, columns)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of stored nonzeros.
    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.d as f64 * self.n as f64)
    }

    /// Sparse entries of column `i`, sorted by row.
    pub fn column(&self, i: usize) -> &[(u32, f64)] {
        &self.columns[i]
    }

    /// Per-feature nonzero counts (one per row).
    pub fn row_nnz_counts(&self) -> &[u32] {
        &self.row_nnz
    }

    /// Squared Euclidean norm of column `i`.
    pub fn column_sq_norm(&self, i: usize) -> f64 {
        self.columns[i].iter().map(|&(_, v)| v * v).sum()
    }

    pub fn max_column_sq_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.column_sq_norm(i))
            .fold(0.0, f64::max)
    }

    /// Inner product of column `i` with a dense vector of length `d`.
    pub fn column_dot(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        self.columns[i]
            .iter()
            .map(|&(row, v)| v * x[row as usize])
            .sum()
    }

    /// Adds `scale * column(i)` into a dense vector of length `d`.
    pub fn add_scaled_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.d);
        for &(row, v) in &self.columns[i] {
            out[row as usize] += scale * v;
        }
    }

    /// Rescales each column to unit Euclidean norm. Zero columns are left
    /// unchanged, and columns already within one part in 1e12 of unit norm
    /// are skipped so the operation is idempotent.
    pub fn normalize_columns(&mut self) {
        for col in &mut self.columns {
            let norm = col.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || (norm - 1.0).abs() <= 1e-12 {
                continue;
            }
            for entry in col.iter_mut() {
                entry.1 /= norm;
            }
        }
    }

    /// Row-major view of the nonzeros: for each row, the `(column, value)`
    /// pairs in column order. Costs one pass over the data.
    pub fn to_rows(&self) -> Vec<Vec<(u32, f64)>> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.d];
        for (i, col) in self.columns.iter().enumerate() {
            for &(row, v) in col {
                rows[row as usize].push((i as u32, v));
            }
        }
        rows
    }
}
