//! Ordinary least-squares linear reference model.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (c, v)| acc + c * v)
    }

    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        data.rows().map(|x| self.predict_row(x)).collect()
    }
}

/// Least squares on `[features | 1]` through the normal equations. Columns
/// are equilibrated before the solve.
pub fn fit_linear(train: &Dataset) -> Result<LinearModel> {
    let n = train.n_features();
    let p = n + 1;
    if train.len() <= p {
        return Err(Error::InvalidDataset(format!(
            "need more than {p} rows to fit {n} coefficients and an intercept"
        )));
    }
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (x, &y) in train.rows().zip(train.targets()) {
        for j in 0..p {
            let aj = if j < n { x[j] } else { 1.0 };
            aty[j] += aj * y;
            for k in 0..=j {
                let ak = if k < n { x[k] } else { 1.0 };
                ata[j][k] += aj * ak;
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            ata[k][j] = ata[j][k];
        }
    }
    if ata.iter().enumerate().any(|(j, r)| r[j] == 0.0) {
        return Err(Error::RankDeficient);
    }
    let d: Vec<f64> = (0..p).map(|j| 1.0 / ata[j][j].sqrt()).collect();
    let scaled: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..p).map(|k| d[j] * ata[j][k] * d[k]).collect())
        .collect();
    let rhs: Vec<f64> = (0..p).map(|j| d[j] * aty[j]).collect();
    let z = linalg::solve(&scaled, &rhs).ok_or(Error::RankDeficient)?;
    let beta: Vec<f64> = z.iter().zip(&d).map(|(z, d)| z * d).collect();
    Ok(LinearModel {
        coefficients: beta[..n].to_vec(),
        intercept: beta[n],
    })
}

/// Four significant digits in `±m.mmm·10ᵉ` form, e.g. `-7.666·10¹`.
pub fn format_coefficient(v: f64) -> String {
    if v == 0.0 {
        return "+0.000·10⁰".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.3e}", v.abs());
    let (mantissa, exp) = s.split_once('e').expect("scientific format");
    let sign = if v < 0.0 { '-' } else { '+' };
    format!("{sign}{mantissa}·10{}", superscript(exp))
}

fn superscript(digits: &str) -> String {
    digits
        .chars()
        .map(|c| match c {
            '-' => '⁻',
            '0' => '⁰',
            '1' => '¹',
            '2' => '²',
            '3' => '³',
            '4' => '⁴',
            '5' => '⁵',
            '6' => '⁶',
            '7' => '⁷',
            '8' => '⁸',
            '9' => '⁹',
            other => other,
        })
        .collect()
}
