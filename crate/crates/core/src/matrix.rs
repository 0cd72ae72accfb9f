//! Column-major matrix with named columns, the carrier for the X, Y and Z blocks.

use std::collections::HashSet;

use crate::error::{Result, RfccaError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T> {
    nrows: usize,
    ncols: usize,
    data: Vec<T>,
    names: Vec<String>,
}

impl<T: Scalar> DataMatrix<T> {
    /// Builds a matrix from column-major storage.
    ///
    /// Requires at least one row and one column, finite entries and unique
    /// column names.
    pub fn new(nrows: usize, ncols: usize, data: Vec<T>, names: Vec<String>) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(RfccaError::InvalidData(format!(
                "matrix must be at least 1x1, got {nrows}x{ncols}"
            )));
        }
        if data.len() != nrows * ncols {
            return Err(RfccaError::Dimension(format!(
                "{} values cannot fill a {nrows}x{ncols} matrix",
                data.len()
            )));
        }
        if names.len() != ncols {
            return Err(RfccaError::Dimension(format!(
                "{} column names for {ncols} columns",
                names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ncols);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(RfccaError::InvalidData(format!("duplicate column name '{name}'")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(RfccaError::InvalidData(format!(
                "non-finite value at row {}, column '{}'",
                pos % nrows,
                names[pos / nrows]
            )));
        }
        Ok(Self { nrows, ncols, data, names })
    }

    pub fn from_columns(columns: Vec<Vec<T>>, names: Vec<String>) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != nrows) {
            return Err(RfccaError::Dimension("columns have unequal lengths".into()));
        }
        Self::new(nrows, ncols, columns.concat(), names)
    }

    /// Columns named `{prefix}1 .. {prefix}m`.
    pub fn from_columns_prefixed(columns: Vec<Vec<T>>, prefix: &str) -> Result<Self> {
        let names = default_names(prefix, columns.len());
        Self::from_columns(columns, names)
    }

    pub fn from_rows(rows: &[Vec<T>], names: Vec<String>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = names.len();
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(RfccaError::Dimension(format!("every row must have {ncols} values")));
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for j in 0..ncols {
            data.extend(rows.iter().map(|r| r[j]));
        }
        Self::new(nrows, ncols, data, names)
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.nrows + i]
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&[T]> {
        self.column_index(name).map(|j| self.col(j))
    }

    /// New matrix made of the given rows (repeats allowed), in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for j in 0..self.ncols {
            let c = self.col(j);
            data.extend(rows.iter().map(|&i| c[i]));
        }
        Self { nrows: rows.len(), ncols: self.ncols, data, names: self.names.clone() }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(cols.len() * self.nrows);
        for &j in cols {
            data.extend_from_slice(self.col(j));
        }
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        Self { nrows: self.nrows, ncols: cols.len(), data, names }
    }

    /// Horizontal concatenation; names must stay unique.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.nrows != other.nrows {
            return Err(RfccaError::Dimension(format!(
                "cannot stack {} rows with {} rows",
                self.nrows, other.nrows
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Self::new(self.nrows, self.ncols + other.ncols, data, names)
    }

    pub fn map_columns<F>(&self, mut f: F) -> Self
    where
        F: FnMut(usize, &[T]) -> Vec<T>,
    {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.ncols {
            let out = f(j, self.col(j));
            assert_eq!(out.len(), self.nrows, "column map must preserve length");
            data.extend(out);
        }
        Self { nrows: self.nrows, ncols: self.ncols, data, names: self.names.clone() }
    }

    /// Converts every entry to another scalar type.
    pub fn cast<U: Scalar>(&self) -> DataMatrix<U> {
        DataMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            names: self.names.clone(),
        }
    }
}

pub fn default_names(prefix: &str, m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("{prefix}{j}")).collect()
}
