//! Text ingestion for data and parameter matrices.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, symmetrize};

/// Inputs whose asymmetry exceeds this are still symmetrized, but flagged.
pub const ASYMMETRY_WARN: f64 = 1e-12;

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c == ';' || c.is_whitespace()).filter(|f| !f.is_empty())
}

/// Parses rows of comma- or whitespace-separated numbers. Blank lines and lines
/// starting with `#` are ignored; `skip_header` drops the first remaining line.
pub fn parse_matrix(text: &str, skip_header: bool) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    if skip_header {
        lines.next();
    }
    for (k, line) in lines.enumerate() {
        let row = split_fields(line)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("row {}: cannot parse {f:?} as a number", k + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} fields, expected {}",
                    k + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no numeric rows found".into()));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

pub fn read_matrix(path: &Path, skip_header: bool) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text, skip_header)
}

/// `"1,2,3"` or `"1 2 3"`.
pub fn parse_vector(text: &str) -> Result<DVector<f64>> {
    let vals = split_fields(text)
        .map(|f| f.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("cannot parse {f:?} as a number"))))
        .collect::<Result<Vec<f64>>>()?;
    if vals.is_empty() {
        return Err(Error::InvalidArgument("empty vector".into()));
    }
    Ok(DVector::from_vec(vals))
}

/// `(M + Mᵀ)/2` together with the original asymmetry when it exceeds
/// [`ASYMMETRY_WARN`].
pub fn symmetrize_input(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Option<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    let a = asymmetry(m);
    Ok((symmetrize(m), (a > ASYMMETRY_WARN).then_some(a)))
}
