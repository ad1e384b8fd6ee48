//! Mean-squared loss, its exact derivatives with respect to the ephemeral
//! constants, and the one-step Newton update on the active constants.

use crate::cgp::{CgpParams, Genotype};
use crate::dataset::Dataset;
use crate::dual::{tri, D2Scalar};
use crate::error::{Error, Result};
use crate::linalg;

/// Loss together with its gradient and Hessian over the constants.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
    /// Constants with an exactly nonzero gradient entry.
    pub active: Vec<usize>,
    pub active_grad: Vec<f64>,
    pub active_hess: Vec<Vec<f64>>,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
    }
}

fn check_dims(params: &CgpParams, data: &Dataset) -> Result<()> {
    if data.n_features() != params.n_features {
        return Err(Error::DimensionMismatch {
            expected: params.n_features,
            got: data.n_features(),
        });
    }
    Ok(())
}

/// Predictions of `g` on every row of `data`.
pub fn predict(g: &Genotype, params: &CgpParams, data: &Dataset) -> Result<Vec<f64>> {
    check_dims(params, data)?;
    let program = g.program(params);
    let mut buf = Vec::new();
    Ok(data
        .rows()
        .map(|x| program.eval::<f64>(x, &g.constants, &mut buf))
        .collect())
}

/// `(1/N) Σ (y_i − ŷ_i)²`; non-finite if any prediction is.
pub fn mse_loss(g: &Genotype, params: &CgpParams, data: &Dataset) -> Result<f64> {
    let pred = predict(g, params, data)?;
    let sum = pred
        .iter()
        .zip(data.targets())
        .fold(0.0, |acc, (p, y)| acc + (y - p) * (y - p));
    Ok(sum / data.len() as f64)
}

pub fn loss_with_derivatives(
    g: &Genotype,
    params: &CgpParams,
    data: &Dataset,
) -> Result<LossReport> {
    check_dims(params, data)?;
    let m = params.n_constants;
    let program = g.program(params);
    let mut buf: Vec<D2Scalar> = Vec::new();

    let mut loss = 0.0;
    let mut grad = vec![0.0; m];
    let mut hess_packed = vec![0.0; m * (m + 1) / 2];
    for (x, &y) in data.rows().zip(data.targets()) {
        let yhat = program.eval::<D2Scalar>(x, &g.constants, &mut buf);
        let r = y - yhat.value();
        loss += r * r;
        let gy = yhat.grad();
        let hy = yhat.hess_packed();
        for j in 0..m {
            grad[j] += -2.0 * r * gy[j];
            for k in 0..=j {
                let t = tri(j, k);
                hess_packed[t] += 2.0 * (gy[j] * gy[k] - r * hy[t]);
            }
        }
    }

    let n = data.len() as f64;
    let loss = loss / n;
    grad.iter_mut().for_each(|v| *v /= n);
    let hess: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|k| hess_packed[tri(j, k)] / n).collect())
        .collect();

    let active: Vec<usize> = if loss.is_finite() {
        (0..m).filter(|&j| grad[j] != 0.0).collect()
    } else {
        Vec::new()
    };
    let active_grad = active.iter().map(|&j| grad[j]).collect();
    let active_hess = active
        .iter()
        .map(|&j| active.iter().map(|&k| hess[j][k]).collect())
        .collect();
    Ok(LossReport {
        loss,
        grad,
        hess,
        active,
        active_grad,
        active_hess,
    })
}

/// One Newton step on the active constants: solves `H̃ δ = G̃` and returns
/// `c − δ` on the active entries. Returns `c` unchanged when the report is
/// non-finite, nothing is active, `H̃` is singular or the result is not
/// finite.
pub fn newton_step(c: &[f64], report: &LossReport) -> Vec<f64> {
    if !report.is_finite() || report.active.is_empty() {
        return c.to_vec();
    }
    let Some(delta) = linalg::solve(&report.active_hess, &report.active_grad) else {
        return c.to_vec();
    };
    let mut next = c.to_vec();
    for (&j, d) in report.active.iter().zip(&delta) {
        next[j] -= d;
    }
    if next.iter().all(|v| v.is_finite()) {
        next
    } else {
        c.to_vec()
    }
}

/// Replaces `g`'s constants by one Newton step from their current values.
pub fn learn_constants(g: &Genotype, params: &CgpParams, data: &Dataset) -> Result<Genotype> {
    let report = loss_with_derivatives(g, params, data)?;
    Ok(Genotype {
        genes: g.genes.clone(),
        constants: newton_step(&g.constants, &report),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::KernelSet;

    fn params(n_features: usize, m: usize, cols: usize) -> CgpParams {
        let ks = KernelSet::from_names(&["add", "sub", "mul", "div", "log", "sin"]).unwrap();
        CgpParams::new(n_features, m, 1, cols, cols, ks).unwrap()
    }

    #[test]
    fn constant_zero_prediction() {
        // output wired to constant c0 = 0
        let p = params(1, 1, 1);
        let g = Genotype::new(vec![0, 0, 0, 1], vec![0.0], &p).unwrap();
        let d = Dataset::new(vec![vec![3.0], vec![-1.0]], vec![1.0, 1.0], None, None).unwrap();
        assert_eq!(mse_loss(&g, &p, &d).unwrap(), 1.0);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        let p = params(1, 1, 1);
        // mul(x0, c0)
        let g = Genotype::new(vec![2, 0, 1, 2], vec![1.5], &p).unwrap();
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = rows.iter().map(|r| 1.5 * r[0]).collect();
        let d = Dataset::new(rows, y, None, None).unwrap();
        assert_eq!(mse_loss(&g, &p, &d).unwrap(), 0.0);
    }

    #[test]
    fn hand_calculus_single_sample() {
        let p = params(1, 1, 1);
        let g = Genotype::new(vec![2, 1, 0, 2], vec![0.0], &p).unwrap(); // c0 * x0
        let d = Dataset::new(vec![vec![1.0]], vec![2.0], None, None).unwrap();
        let r = loss_with_derivatives(&g, &p, &d).unwrap();
        assert_eq!(r.loss, 4.0);
        assert_eq!(r.grad, vec![-4.0]);
        assert_eq!(r.hess, vec![vec![2.0]]);
        assert_eq!(r.active, vec![0]);
        assert_eq!(newton_step(&g.constants, &r), vec![2.0]);
    }

    #[test]
    fn unused_constants_are_inactive() {
        let p = params(1, 2, 1);
        let g = Genotype::new(vec![0, 0, 0, 3], vec![0.3, -0.2], &p).unwrap(); // x0 + x0
        let d = Dataset::new(vec![vec![1.0], vec![2.0]], vec![0.0, 1.0], None, None).unwrap();
        let r = loss_with_derivatives(&g, &p, &d).unwrap();
        assert_eq!(r.grad, vec![0.0, 0.0]);
        assert!(r.active.is_empty());
        assert_eq!(newton_step(&g.constants, &r), g.constants);
    }

    #[test]
    fn non_finite_loss_is_flagged() {
        let p = params(1, 0, 1);
        let g = Genotype::new(vec![4, 0, 0, 1], vec![], &p).unwrap(); // log(x0)
        let d = Dataset::new(vec![vec![-1.0]], vec![0.0], None, None).unwrap();
        let r = loss_with_derivatives(&g, &p, &d).unwrap();
        assert!(!r.is_finite());
        assert!(r.active.is_empty());
    }

    #[test]
    fn rank_deficient_hessian_skips_step() {
        // (c0 + c1) * x0: both constants enter only through their sum
        let p = params(1, 2, 2);
        let g = Genotype::new(vec![0, 1, 2, 2, 3, 0, 4], vec![0.25, -0.5], &p).unwrap();
        assert_eq!(g.decode_infix(&p, None), "((0.250000 + -0.500000) * x0)");
        let d = Dataset::new(
            vec![vec![1.0], vec![2.0], vec![-0.5]],
            vec![1.0, 3.0, 0.2],
            None,
            None,
        )
        .unwrap();
        let r = loss_with_derivatives(&g, &p, &d).unwrap();
        assert_eq!(r.active, vec![0, 1]);
        assert_eq!(newton_step(&g.constants, &r), g.constants);
    }

    #[test]
    fn dimension_mismatch() {
        let p = params(2, 0, 1);
        let g = Genotype::new(vec![0, 0, 1, 2], vec![], &p).unwrap();
        let d = Dataset::new(vec![vec![1.0]], vec![0.0], None, None).unwrap();
        assert!(mse_loss(&g, &p, &d).is_err());
        assert!(loss_with_derivatives(&g, &p, &d).is_err());
    }
}
