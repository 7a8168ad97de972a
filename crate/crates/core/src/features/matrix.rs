use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum View {
    Observation,
    Knowledge,
    Fused,
}

/// Dense row-major per-cell feature matrix. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    dim: usize,
    values: Vec<f64>,
    view: View,
    column_labels: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, dim: usize, values: Vec<f64>, view: View, column_labels: Vec<String>) -> Result<Self> {
        if values.len() != n_rows * dim {
            return Err(Error::Internal(format!(
                "feature buffer has {} values, expected {n_rows}x{dim}",
                values.len()
            )));
        }
        if column_labels.len() != dim {
            return Err(Error::Internal("column label count differs from dim".into()));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature at row {}, column {}", p / dim.max(1), p % dim.max(1))));
        }
        Ok(FeatureMatrix {
            n_rows,
            dim,
            values,
            view,
            column_labels,
        })
    }

    /// A view with zero columns, used when the knowledge view is disabled.
    pub fn empty(n_rows: usize, view: View) -> Self {
        FeatureMatrix {
            n_rows,
            dim: 0,
            values: Vec::new(),
            view,
            column_labels: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Columns `[start, end)` as a new matrix with the given view tag.
    pub fn slice_columns(&self, start: usize, end: usize, view: View) -> FeatureMatrix {
        assert!(start <= end && end <= self.dim);
        let mut values = Vec::with_capacity(self.n_rows * (end - start));
        for i in 0..self.n_rows {
            values.extend_from_slice(&self.row(i)[start..end]);
        }
        FeatureMatrix {
            n_rows: self.n_rows,
            dim: end - start,
            values,
            view,
            column_labels: self.column_labels[start..end].to_vec(),
        }
    }

    /// Keeps the listed rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            n_rows: rows.len(),
            dim: self.dim,
            values,
            view: self.view,
            column_labels: self.column_labels.clone(),
        }
    }
}

/// `H_i = [x_i ‖ z_i]`: observation columns first, then knowledge columns.
pub fn fuse(obs: &FeatureMatrix, know: &FeatureMatrix) -> Result<FeatureMatrix> {
    if obs.n_rows != know.n_rows {
        return Err(Error::Data(format!(
            "cannot fuse views with {} and {} rows",
            obs.n_rows, know.n_rows
        )));
    }
    let dim = obs.dim + know.dim;
    let mut values = Vec::with_capacity(obs.n_rows * dim);
    for i in 0..obs.n_rows {
        values.extend_from_slice(obs.row(i));
        values.extend_from_slice(know.row(i));
    }
    let mut labels = obs.column_labels.clone();
    labels.extend(know.column_labels.iter().cloned());
    FeatureMatrix::new(obs.n_rows, dim, values, View::Fused, labels)
}

/// `e_ij = [H_i ‖ H_j]` for each stored `(i, j)`, flattened row-major with
/// `2 * h.dim()` values per edge.
pub fn edge_features(h: &FeatureMatrix, edges: &[(usize, usize)]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(edges.len() * 2 * h.dim);
    for &(i, j) in edges {
        if i >= h.n_rows || j >= h.n_rows {
            return Err(Error::Data(format!("edge ({i}, {j}) references a missing node")));
        }
        out.extend_from_slice(h.row(i));
        out.extend_from_slice(h.row(j));
    }
    Ok(out)
}
