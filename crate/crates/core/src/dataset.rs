//! Row-major point sets.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `n x d` matrix of points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    /// Wraps a flat row-major buffer. `data.len()` must be a multiple of `dim`.
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dataset dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::param(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("dataset contains non-finite values"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::param("cannot infer dimension of an empty row list"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// A one-dimensional dataset.
    pub fn from_values(values: &[T]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Values of coordinate `j` across all points.
    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Applies `f` to every row, producing a dataset of dimension `out_dim`.
    pub fn map_rows<F>(&self, out_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T]) -> Vec<T>,
    {
        let mut data = Vec::with_capacity(self.len() * out_dim);
        for r in self.rows() {
            let mapped = f(r);
            if mapped.len() != out_dim {
                return Err(Error::DimensionMismatch { expected: out_dim, got: mapped.len() });
            }
            data.extend(mapped);
        }
        Self::new(out_dim, data)
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&v| v * factor).collect() }
    }

    /// Rows `idx` of this dataset, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }
}
