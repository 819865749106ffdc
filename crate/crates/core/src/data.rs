//! Sample containers: response matrices, covariate sets, paired datasets.

use crate::error::{Error, Result};

/// Dense row-major matrix of response points (n rows of dimension p).
///
/// Categorical responses are stored as one-hot rows, so a single container
/// covers both the continuous and the classification case.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl ResponseMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("response matrix needs at least one row"));
        }
        let p = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    left: p,
                    right: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("response row {i}")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            n: rows.len(),
            p,
        })
    }

    pub fn from_flat(data: Vec<f64>, n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 || data.len() != n * p {
            return Err(Error::invalid(format!(
                "flat response buffer of length {} does not match {n} x {p}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response matrix".into()));
        }
        Ok(Self { data, n, p })
    }

    /// Single-column matrix from a scalar response vector.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), values.len(), 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.p)
    }
}

/// Covariate points Z_1, …, Z_n in R^d over which the K-NN graph is built.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateSet {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl CovariateSet {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid("covariate set needs at least two points"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::invalid("covariate dimension must be at least 1"));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("covariate row {i}")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            n: rows.len(),
            d,
        })
    }

    pub fn from_flat(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n < 2 || d == 0 || data.len() != n * d {
            return Err(Error::invalid(format!(
                "flat covariate buffer of length {} does not match {n} x {d} (n >= 2, d >= 1)",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate set".into()));
        }
        Ok(Self { data, n, d })
    }

    /// One-dimensional covariates from a scalar vector.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(values.to_vec(), values.len(), 1)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }
}

/// Index-aligned triples (X_i, Y_i, Z_i): two response samples sharing
/// covariates, the input of the conditional two-sample test.
#[derive(Clone, Debug)]
pub struct PairedDataset {
    pub x: ResponseMatrix,
    pub y: ResponseMatrix,
    pub z: CovariateSet,
}

impl PairedDataset {
    pub fn new(x: ResponseMatrix, y: ResponseMatrix, z: CovariateSet) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::SizeMismatch {
                what: "x vs y rows",
                left: x.len(),
                right: y.len(),
            });
        }
        if x.len() != z.len() {
            return Err(Error::SizeMismatch {
                what: "responses vs covariates",
                left: x.len(),
                right: z.len(),
            });
        }
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: y.dim(),
            });
        }
        Ok(Self { x, y, z })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Response dimension p.
    pub fn response_dim(&self) -> usize {
        self.x.dim()
    }

    /// Covariate dimension d.
    pub fn covariate_dim(&self) -> usize {
        self.z.dim()
    }
}
