use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Mean of `pred − y` over rows where the prediction is above the target.
    pub avg_overestimate: f64,
    /// Mean of `y − pred` over rows where the prediction is below the target.
    pub avg_underestimate: f64,
    /// Fraction of predictions inside the per-row bounds, if the data has
    /// bounds.
    pub precision: Option<f64>,
}

/// A metric selectable on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Mse,
    Rmse,
    Mae,
    Over,
    Under,
    Precision,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Mse,
        Metric::Rmse,
        Metric::Mae,
        Metric::Over,
        Metric::Under,
        Metric::Precision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::Over => "over",
            Metric::Under => "under",
            Metric::Precision => "precision",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name.trim())
    }

    /// `None` when the metric is undefined for this report (precision
    /// without bounds).
    pub fn value(self, report: &MetricReport) -> Option<f64> {
        match self {
            Metric::Mse => Some(report.mse),
            Metric::Rmse => Some(report.rmse),
            Metric::Mae => Some(report.mae),
            Metric::Over => Some(report.avg_overestimate),
            Metric::Under => Some(report.avg_underestimate),
            Metric::Precision => report.precision,
        }
    }
}

pub fn metrics(predictions: &[f64], data: &Dataset) -> Result<MetricReport> {
    if predictions.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            got: predictions.len(),
        });
    }
    let n = data.len() as f64;
    let (mut sq, mut abs) = (0.0, 0.0);
    let (mut over, mut n_over, mut under, mut n_under) = (0.0, 0usize, 0.0, 0usize);
    for (&p, &y) in predictions.iter().zip(data.targets()) {
        let r = p - y;
        sq += r * r;
        abs += r.abs();
        if p > y {
            over += r;
            n_over += 1;
        } else if p < y {
            under -= r;
            n_under += 1;
        }
    }
    let mean_or_zero = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    let precision = data.bounds().map(|b| {
        let inside = predictions
            .iter()
            .zip(b.lower.iter().zip(&b.upper))
            .filter(|&(&p, (&lo, &hi))| lo <= p && p <= hi)
            .count();
        inside as f64 / n
    });
    let mse = sq / n;
    Ok(MetricReport {
        mse,
        rmse: mse.sqrt(),
        mae: abs / n,
        avg_overestimate: mean_or_zero(over, n_over),
        avg_underestimate: mean_or_zero(under, n_under),
        precision,
    })
}
