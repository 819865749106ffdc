//! CSV ingestion. One schema per command:
//!
//! * two-sample `test`: columns prefixed `x_`, `y_`, `z_` (or explicit
//!   `--x-cols/--y-cols/--z-cols` lists);
//! * `gof`: columns `y_*`, `z_*`;
//! * `calibrate classify`: probability columns `p_*` plus a `label`
//!   column of 0-based class indices;
//! * `calibrate regress`: `y`, `mean`, and `var` columns (var optional
//!   when a constant variance is given on the command line);
//! * resample files: columns `r<slot>_<dim>`, slots numbered from 0.
//!
//! Rows are numbered from 1 (excluding the header) in error messages.

use crate::errors::{CliError, CliResult};
use ecmmd::data::{CovariateSet, ResponseMatrix};
use std::path::Path;

pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(CliError::RaggedRow {
                row: i + 1,
                got: record.len(),
                expected: headers.len(),
            });
        }
        rows.push(record.iter().map(|c| c.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(CliError::Csv {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    Ok(Table { headers, rows })
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn column_index(&self, name: &str, path: &Path) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingColumn {
                path: path.to_path_buf(),
                name: name.to_string(),
            })
    }

    /// Columns carrying the given prefix, in file order.
    fn prefixed(&self, prefix: &str) -> Vec<usize> {
        self.headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    }

    fn parse_cell(&self, row: usize, col: usize) -> CliResult<f64> {
        let raw = &self.rows[row][col];
        let value: f64 = raw.parse().map_err(|_| CliError::BadCell {
            row: row + 1,
            column: self.headers[col].clone(),
            value: raw.clone(),
        })?;
        if !value.is_finite() {
            return Err(CliError::NonFiniteCell {
                row: row + 1,
                column: self.headers[col].clone(),
            });
        }
        Ok(value)
    }

    /// Extract the named columns as a dense row-major block.
    pub fn numeric_block(&self, cols: &[usize]) -> CliResult<Vec<f64>> {
        let mut out = Vec::with_capacity(self.rows.len() * cols.len());
        for row in 0..self.rows.len() {
            for &col in cols {
                out.push(self.parse_cell(row, col)?);
            }
        }
        Ok(out)
    }

    /// Resolve a column group: an explicit comma-separated mapping wins,
    /// otherwise all columns with the prefix, in file order.
    pub fn group(
        &self,
        mapping: &Option<String>,
        prefix: &str,
        path: &Path,
    ) -> CliResult<Vec<usize>> {
        match mapping {
            Some(list) => list
                .split(',')
                .map(|name| self.column_index(name.trim(), path))
                .collect(),
            None => {
                let cols = self.prefixed(prefix);
                if cols.is_empty() {
                    return Err(CliError::MissingColumn {
                        path: path.to_path_buf(),
                        name: format!("{prefix}*"),
                    });
                }
                Ok(cols)
            }
        }
    }
}

/// Column selections for the two-sample and goodness-of-fit schemas.
#[derive(Default)]
pub struct Mapping {
    pub x_cols: Option<String>,
    pub y_cols: Option<String>,
    pub z_cols: Option<String>,
}

pub fn load_two_sample(path: &Path, mapping: &Mapping) -> CliResult<ecmmd::PairedDataset> {
    let table = read_table(path)?;
    let x_cols = table.group(&mapping.x_cols, "x_", path)?;
    let y_cols = table.group(&mapping.y_cols, "y_", path)?;
    let z_cols = table.group(&mapping.z_cols, "z_", path)?;
    let n = table.n_rows();
    let x = ResponseMatrix::from_flat(table.numeric_block(&x_cols)?, n, x_cols.len())
        .map_err(CliError::Lib)?;
    let y = ResponseMatrix::from_flat(table.numeric_block(&y_cols)?, n, y_cols.len())
        .map_err(CliError::Lib)?;
    let z = CovariateSet::from_flat(table.numeric_block(&z_cols)?, n, z_cols.len())
        .map_err(CliError::Lib)?;
    Ok(ecmmd::PairedDataset::new(x, y, z)?)
}

pub fn load_yz(path: &Path, mapping: &Mapping) -> CliResult<(ResponseMatrix, CovariateSet)> {
    let table = read_table(path)?;
    let y_cols = table.group(&mapping.y_cols, "y_", path)?;
    let z_cols = table.group(&mapping.z_cols, "z_", path)?;
    let n = table.n_rows();
    let y = ResponseMatrix::from_flat(table.numeric_block(&y_cols)?, n, y_cols.len())
        .map_err(CliError::Lib)?;
    let z = CovariateSet::from_flat(table.numeric_block(&z_cols)?, n, z_cols.len())
        .map_err(CliError::Lib)?;
    Ok((y, z))
}

pub fn load_classifier(
    path: &Path,
    prob_cols: &Option<String>,
    label_col: &str,
) -> CliResult<ecmmd::calibration::ClassifierPredictions> {
    let table = read_table(path)?;
    let p_cols = table.group(prob_cols, "p_", path)?;
    let label_idx = table.column_index(label_col, path)?;
    let n = table.n_rows();
    let flat = table.numeric_block(&p_cols)?;
    let probs: Vec<Vec<f64>> = flat.chunks(p_cols.len()).map(|c| c.to_vec()).collect();
    let mut labels = Vec::with_capacity(n);
    for row in 0..n {
        let value = table.parse_cell(row, label_idx)?;
        if value.fract() != 0.0 || value < 0.0 {
            return Err(CliError::BadCell {
                row: row + 1,
                column: label_col.to_string(),
                value: table.rows[row][label_idx].clone(),
            });
        }
        labels.push(value as usize);
    }
    Ok(ecmmd::calibration::ClassifierPredictions::new(&probs, &labels)?)
}

pub struct RegressionInput {
    pub y: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Option<Vec<f64>>,
}

pub fn load_regression(
    path: &Path,
    y_col: &str,
    mean_col: &str,
    var_col: Option<&str>,
) -> CliResult<RegressionInput> {
    let table = read_table(path)?;
    let y_idx = table.column_index(y_col, path)?;
    let mean_idx = table.column_index(mean_col, path)?;
    let var_idx = var_col.map(|c| table.column_index(c, path)).transpose()?;
    let y = table.numeric_block(&[y_idx])?;
    let means = table.numeric_block(&[mean_idx])?;
    let variances = var_idx.map(|i| table.numeric_block(&[i])).transpose()?;
    Ok(RegressionInput { y, means, variances })
}

/// Pre-drawn resamples: columns `r<slot>_<dim>`, returned slot-major per
/// unit in ascending slot order.
pub fn load_resamples(path: &Path, n_expected: usize) -> CliResult<ecmmd::resampling::DrawMatrix> {
    let table = read_table(path)?;
    if table.n_rows() != n_expected {
        return Err(CliError::BadArgument(format!(
            "resample file has {} rows, dataset has {n_expected}",
            table.n_rows()
        )));
    }
    // Group headers by slot id; dims stay in file order within a slot.
    let mut slots: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, header) in table.headers.iter().enumerate() {
        let Some(rest) = header.strip_prefix('r') else {
            continue;
        };
        let Some((slot_str, _)) = rest.split_once('_') else {
            continue;
        };
        let Ok(slot) = slot_str.parse::<usize>() else {
            continue;
        };
        match slots.iter_mut().find(|(s, _)| *s == slot) {
            Some((_, cols)) => cols.push(i),
            None => slots.push((slot, vec![i])),
        }
    }
    if slots.is_empty() {
        return Err(CliError::MissingColumn {
            path: path.to_path_buf(),
            name: "r<slot>_<dim>".into(),
        });
    }
    slots.sort_by_key(|(s, _)| *s);
    let p = slots[0].1.len();
    for (slot, cols) in &slots {
        if cols.len() != p {
            return Err(CliError::BadArgument(format!(
                "resample slot {slot} has {} columns, expected {p}",
                cols.len()
            )));
        }
    }
    let mut rows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_expected);
    for row in 0..n_expected {
        let mut unit = Vec::with_capacity(slots.len());
        for (_, cols) in &slots {
            let mut point = Vec::with_capacity(p);
            for &c in cols {
                point.push(table.parse_cell(row, c)?);
            }
            unit.push(point);
        }
        rows.push(unit);
    }
    Ok(ecmmd::resampling::DrawMatrix::from_rows(&rows)?)
}
