use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature transform that has been applied to a dataset column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnScaling {
    None,
    ZScore { mean: f64, std: f64 },
    StdDivide { std: f64 },
}

impl ColumnScaling {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            ColumnScaling::None => v,
            ColumnScaling::ZScore { mean, std } => (v - mean) / std,
            ColumnScaling::StdDivide { std } => v / std,
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        match *self {
            ColumnScaling::None => v,
            ColumnScaling::ZScore { mean, std } => v * std + mean,
            ColumnScaling::StdDivide { std } => v * std,
        }
    }
}

/// Per-sample confidence interval on the target.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Labelled samples `(x_i, y_i)`. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    targets: Vec<f64>,
    bounds: Option<Bounds>,
    feature_names: Vec<String>,
    scaling: Vec<ColumnScaling>,
}

impl Dataset {
    /// Builds a dataset from row-major features. Feature names default to
    /// `x0..x{n-1}` when `names` is `None`.
    pub fn new(
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        bounds: Option<Bounds>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::InvalidDataset("dataset is empty".into()));
        }
        let n_features = rows[0].len();
        if n_features == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if targets.len() != n_rows {
            return Err(Error::DimensionMismatch {
                expected: n_rows,
                got: targets.len(),
            });
        }
        let mut features = Vec::with_capacity(n_rows * n_features);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            features.extend(row);
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature in row {}",
                i / n_features
            )));
        }
        if let Some(i) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite target in row {i}")));
        }
        if let Some(b) = &bounds {
            if b.lower.len() != n_rows || b.upper.len() != n_rows {
                return Err(Error::InvalidDataset("bounds length differs from rows".into()));
            }
            for i in 0..n_rows {
                let (lo, y, hi) = (b.lower[i], targets[i], b.upper[i]);
                if !(lo.is_finite() && hi.is_finite()) || lo > y || y > hi {
                    return Err(Error::InvalidDataset(format!(
                        "row {i}: bounds [{lo}, {hi}] do not enclose target {y}"
                    )));
                }
            }
        }
        let feature_names =
            names.unwrap_or_else(|| (0..n_features).map(|j| format!("x{j}")).collect());
        if feature_names.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: feature_names.len(),
            });
        }
        Ok(Self {
            features,
            n_features,
            targets,
            bounds,
            feature_names,
            scaling: vec![ColumnScaling::None; n_features],
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Scaling currently applied to each feature column.
    pub fn scaling(&self) -> &[ColumnScaling] {
        &self.scaling
    }

    /// Applies `state` to raw feature columns. Fails if the dataset is
    /// already scaled.
    pub fn scaled(&self, state: &[ColumnScaling]) -> Result<Self> {
        if state.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: state.len(),
            });
        }
        if self.scaling.iter().any(|s| *s != ColumnScaling::None) {
            return Err(Error::InvalidDataset("dataset is already scaled".into()));
        }
        let mut out = self.clone();
        for row in out.features.chunks_exact_mut(self.n_features) {
            for (v, s) in row.iter_mut().zip(state) {
                *v = s.apply(*v);
            }
        }
        out.scaling = state.to_vec();
        Ok(out)
    }

    /// Reverts the applied scaling.
    pub fn unscaled(&self) -> Self {
        let mut out = self.clone();
        for row in out.features.chunks_exact_mut(self.n_features) {
            for (v, s) in row.iter_mut().zip(&self.scaling) {
                *v = s.invert(*v);
            }
        }
        out.scaling = vec![ColumnScaling::None; self.n_features];
        out
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            features,
            n_features: self.n_features,
            targets: pick(&self.targets),
            bounds: self.bounds.as_ref().map(|b| Bounds {
                lower: pick(&b.lower),
                upper: pick(&b.upper),
            }),
            feature_names: self.feature_names.clone(),
            scaling: self.scaling.clone(),
        }
    }
}
