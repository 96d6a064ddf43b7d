//! Dataset, partition and trace file handling.
//!
//! Datasets use the LIBSVM text format: one example per line,
//! `label index:value ...` with 1-based feature indices and labels in
//! {+1, -1}. Labels are folded into the stored columns (`A_i <- y_i A_i`).
//! Partition files carry one group per line as whitespace-separated 0-based
//! indices. Traces are written as CSV, run summaries as JSON.

use crate::matrix::DataMatrix;
use crate::solver::TraceRecord;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: label {label} is not +1 or -1")]
    BadLabel { line: usize, label: String },
    #[error("line {line}: feature index {index} out of range (must be 1..={d})")]
    BadIndex { line: usize, index: usize, d: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Matrix(#[from] crate::matrix::MatrixError),
}

/// A parsed dataset: label-folded columns plus the original labels.
#[derive(Debug)]
pub struct LoadedDataset {
    pub matrix: DataMatrix,
    pub labels: Vec<i8>,
    pub warnings: Vec<String>,
}

/// Parses a LIBSVM file. The feature count is inferred as the maximum index
/// unless `declared_d` pins it; `normalize` rescales every column to unit
/// norm after label folding.
pub fn load_libsvm(
    path: &Path,
    normalize: bool,
    declared_d: Option<usize>,
) -> Result<LoadedDataset, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut raw_columns: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<i8> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank line
        };
        let parsed = label_tok.parse::<f64>().ok();
        let label = if parsed == Some(1.0) {
            1i8
        } else if parsed == Some(-1.0) {
            -1i8
        } else {
            return Err(IoError::BadLabel {
                line: lineno,
                label: label_tok.to_string(),
            });
        };
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in tokens {
            let Some((idx_str, val_str)) = tok.split_once(':') else {
                return Err(IoError::Parse {
                    line: lineno,
                    msg: format!("expected index:value, got `{tok}`"),
                });
            };
            let index: usize = idx_str.parse().map_err(|_| IoError::Parse {
                line: lineno,
                msg: format!("bad feature index `{idx_str}`"),
            })?;
            let value: f64 = val_str.parse().map_err(|_| IoError::Parse {
                line: lineno,
                msg: format!("bad feature value `{val_str}`"),
            })?;
            if index == 0 {
                return Err(IoError::BadIndex {
                    line: lineno,
                    index: 0,
                    d: declared_d.unwrap_or(usize::MAX),
                });
            }
            if let Some(d) = declared_d {
                if index > d {
                    return Err(IoError::BadIndex {
                        line: lineno,
                        index,
                        d,
                    });
                }
            }
            if !value.is_finite() {
                return Err(IoError::Parse {
                    line: lineno,
                    msg: format!("non-finite value {value}"),
                });
            }
            if let Some(slot) = entries.iter_mut().find(|(i, _)| *i == index - 1) {
                warnings.push(format!(
                    "line {lineno}: duplicate feature index {index}, last value wins"
                ));
                slot.1 = value;
            } else {
                entries.push((index - 1, value));
            }
            max_index = max_index.max(index);
        }
        // fold the label into the column
        for entry in entries.iter_mut() {
            entry.1 *= label as f64;
        }
        raw_columns.push(entries);
        labels.push(label);
    }
    if raw_columns.is_empty() {
        return Err(IoError::EmptyDataset);
    }
    let d = declared_d.unwrap_or(max_index).max(1);
    let mut matrix = DataMatrix::from_columns(d, raw_columns)?;
    if normalize {
        matrix.normalize_columns();
    }
    Ok(LoadedDataset {
        matrix,
        labels,
        warnings,
    })
}

/// Writes a matrix back to LIBSVM text, un-folding the labels. Values print
/// in shortest round-trip form, so a reload reproduces the matrix exactly.
pub fn write_libsvm(matrix: &DataMatrix, labels: &[i8], path: &Path) -> Result<(), IoError> {
    assert_eq!(labels.len(), matrix.n(), "one label per example");
    let mut out = BufWriter::new(File::create(path)?);
    for (i, &label) in labels.iter().enumerate() {
        let y = label as f64;
        write!(out, "{:+}", label)?;
        for &(row, value) in matrix.column(i) {
            write!(out, " {}:{}", row + 1, value * y)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a partition file: one group per line, whitespace-separated 0-based
/// indices. Structural validity against a particular n is checked by the
/// sampling constructors.
pub fn read_partition(path: &Path) -> Result<Vec<Vec<usize>>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut groups = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let group: Vec<usize> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| IoError::Parse {
                    line: lineno + 1,
                    msg: format!("bad index `{tok}`"),
                })
            })
            .collect::<Result<_, _>>()?;
        groups.push(group);
    }
    Ok(groups)
}

pub fn write_partition(groups: &[Vec<usize>], path: &Path) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    for group in groups {
        let mut first = true;
        for &i in group {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{i}")?;
            first = false;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a gap trace as CSV with columns
/// `iteration,epoch,primal,dual,gap,wall_ns`.
pub fn write_trace_csv(trace: &[TraceRecord], path: &Path) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "iteration,epoch,primal,dual,gap,wall_ns")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.epoch, r.primal, r.dual, r.gap, r.wall_ns
        )?;
    }
    out.flush()?;
    Ok(())
}
