//! Ridge regression with an unpenalised intercept, solved through the
//! normal equations of the centred design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }
}

/// In-place Cholesky factorisation of a row-major `n x n` SPD matrix.
/// Only the lower triangle is used and overwritten with `L`.
fn cholesky(a: &mut [f64], n: usize, strict: bool) -> Result<()> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    let floor = if strict {
        f64::EPSILON * n as f64 * max_diag
    } else {
        0.0
    };
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return Err(Error::SingularSystem);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Minimises `|y - b0 - X w|^2 + lambda |w|^2`.
///
/// With `lambda == 0` a (numerically) rank-deficient design is reported as
/// `SingularSystem`.
pub fn train_linear(x: &[Vec<f64>], y: &[f64], ridge_lambda: f64) -> Result<LinearModel> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(Error::TooFewPoints { needed: 1, got: n.min(y.len()) });
    }
    if ridge_lambda < 0.0 {
        return Err(Error::InvalidConfig("ridge lambda must be >= 0".into()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidConfig("ragged design matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("design contains non-finite values".into()));
    }

    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let mut x_mean = vec![0.0; p];
    for row in x {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= nf);

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centered = vec![0.0; p];
    for (row, &target) in x.iter().zip(y) {
        for (c, (v, m)) in centered.iter_mut().zip(row.iter().zip(&x_mean)) {
            *c = v - m;
        }
        let yc = target - y_mean;
        for i in 0..p {
            rhs[i] += centered[i] * yc;
            for j in 0..=i {
                gram[i * p + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..p {
        gram[i * p + i] += ridge_lambda;
    }

    let weights = if p == 0 {
        Vec::new()
    } else {
        cholesky(&mut gram, p, ridge_lambda == 0.0)?;
        cholesky_solve(&gram, p, &mut rhs);
        rhs
    };
    let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel { intercept, weights })
}
