use std::io::{BufRead, Write};

use ndarray::Array2;

use super::Coupling;
use crate::error::{Error, Result};

/// Dense CSV: header `n_s,n_t`, then one row-major line per source point.
pub fn write_dense_csv<W: Write>(coupling: &Coupling, mut out: W) -> Result<()> {
    let (n_s, n_t) = coupling.shape();
    writeln!(out, "{n_s},{n_t}")?;
    for row in coupling.plan().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Sparse triplets `i j value` for the nonzero entries, zero-based.
pub fn write_triplets<W: Write>(coupling: &Coupling, mut out: W) -> Result<()> {
    for ((i, j), v) in coupling.plan().indexed_iter() {
        if *v != 0.0 {
            writeln!(out, "{i} {j} {v:.16e}")?;
        }
    }
    Ok(())
}

/// Reads a plan written by [`write_dense_csv`].
pub fn read_dense_csv<R: BufRead>(input: R) -> Result<Array2<f64>> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header = header?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
    let [n_s, n_t] = dims[..] else {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected 'n_s,n_t', got '{header}'"),
        });
    };
    let mut plan = Array2::zeros((n_s, n_t));
    for i in 0..n_s {
        let (k, line) = lines.next().ok_or_else(|| Error::Parse {
            line: i + 2,
            msg: "missing row".into(),
        })?;
        let line = line?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: k + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != n_t {
            return Err(Error::Parse {
                line: k + 1,
                msg: format!("expected {n_t} values, got {}", vals.len()),
            });
        }
        for (j, v) in vals.into_iter().enumerate() {
            plan[[i, j]] = v;
        }
    }
    Ok(plan)
}
