//! Per-column min-max scaling to `[0, 1]`.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    /// Constant columns map to 0.
    pub fn scale(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span == 0.0 {
            0.0
        } else {
            (x - self.min) / span
        }
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * (self.max - self.min) + self.min
    }
}

/// Min-max scaler. Unseen data may fall outside `[0, 1]` and is never clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    names: Vec<String>,
    ranges: Option<Vec<ColumnRange>>,
}

impl MinMaxScaler {
    pub fn unfitted(names: Vec<String>) -> Self {
        Self { names, ranges: None }
    }

    /// Fit on `matrix`. `names` labels the columns for persistence.
    pub fn fit(matrix: &Matrix, names: &[String]) -> Result<Self> {
        let mut s = Self::unfitted(names.to_vec());
        s.refit(matrix)?;
        Ok(s)
    }

    /// Fit a one-column scaler on a vector.
    pub fn fit_vector(values: &[f64], name: &str) -> Result<Self> {
        Self::fit(&Matrix::column_vector(values), &[name.to_string()])
    }

    pub fn refit(&mut self, matrix: &Matrix) -> Result<()> {
        if matrix.is_empty() || matrix.cols() == 0 {
            return Err(Error::Shape("cannot fit a scaler on an empty matrix".into()));
        }
        if matrix.cols() != self.names.len() {
            return Err(Error::Shape(format!(
                "{} column names for a {}-column matrix",
                self.names.len(),
                matrix.cols()
            )));
        }
        let mut ranges = vec![
            ColumnRange {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            };
            matrix.cols()
        ];
        for row in matrix.iter_rows() {
            for (r, &x) in ranges.iter_mut().zip(row) {
                r.min = r.min.min(x);
                r.max = r.max.max(x);
            }
        }
        self.ranges = Some(ranges);
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.ranges.is_some()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ranges(&self) -> Result<&[ColumnRange]> {
        self.ranges.as_deref().ok_or(Error::Unfitted)
    }

    fn checked(&self, matrix: &Matrix) -> Result<&[ColumnRange]> {
        let ranges = self.ranges()?;
        if matrix.cols() != ranges.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} columns, got {}",
                ranges.len(),
                matrix.cols()
            )));
        }
        Ok(ranges)
    }

    fn map(&self, matrix: &Matrix, f: impl Fn(&ColumnRange, f64) -> f64) -> Result<Matrix> {
        let ranges = self.checked(matrix)?;
        let mut out = matrix.clone();
        for i in 0..out.rows() {
            for (x, r) in out.row_mut(i).iter_mut().zip(ranges) {
                *x = f(r, *x);
            }
        }
        Ok(out)
    }

    pub fn transform(&self, matrix: &Matrix) -> Result<Matrix> {
        self.map(matrix, ColumnRange::scale)
    }

    pub fn inverse_transform(&self, matrix: &Matrix) -> Result<Matrix> {
        self.map(matrix, ColumnRange::unscale)
    }

    pub fn transform_vector(&self, values: &[f64]) -> Result<Vec<f64>> {
        Ok(self.transform(&Matrix::column_vector(values))?.as_slice().to_vec())
    }

    pub fn inverse_vector(&self, values: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .inverse_transform(&Matrix::column_vector(values))?
            .as_slice()
            .to_vec())
    }

    /// JSON object mapping column name to `{min, max}`.
    pub fn to_json(&self) -> Result<String> {
        let ranges = self.ranges()?;
        let doc: IndexMap<&str, ColumnRange> = self
            .names
            .iter()
            .map(String::as_str)
            .zip(ranges.iter().copied())
            .collect();
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: IndexMap<String, ColumnRange> = serde_json::from_str(text)?;
        let (names, ranges): (Vec<_>, Vec<_>) = doc.into_iter().unzip();
        for (n, r) in names.iter().zip(&ranges) {
            if !(r.min <= r.max) {
                return Err(Error::Config(format!("column {n}: min exceeds max")));
            }
        }
        Ok(Self {
            names,
            ranges: Some(ranges),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
