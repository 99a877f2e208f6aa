//! Multinomial logistic regression trained by full-batch gradient descent.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// L2 penalty on the weights (not the biases).
    pub l2: f64,
    pub learning_rate: f64,
    /// Step size at epoch t is `learning_rate / (1 + decay * t)`.
    pub decay: f64,
    pub max_epochs: usize,
    /// Stop when the gradient's max-abs entry falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-4,
            learning_rate: 0.5,
            decay: 1e-3,
            max_epochs: 500,
            tol: 1e-6,
            seed: 0,
        }
    }
}

/// Column means and scales from the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let p = x.first().map_or(0, |r| r.len());
        let n = x.len() as f64;
        let mut mean = vec![0.0; p];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Class labels, ascending; row `k` of `weights` scores `classes[k]`.
    pub classes: Vec<usize>,
    pub standardizer: Standardizer,
    /// `classes.len()` rows of `[bias, w_1, ..., w_p]`.
    pub weights: Vec<Vec<f64>>,
    pub epochs: usize,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl LogisticModel {
    fn scores(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w[0] + w[1..].iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut s = self.scores(&self.standardizer.apply(row));
        softmax_in_place(&mut s);
        s
    }

    /// Most probable class; ties go to the smaller label.
    pub fn predict(&self, row: &[f64]) -> usize {
        let s = self.scores(&self.standardizer.apply(row));
        let mut best = 0;
        for k in 1..s.len() {
            if s[k] > s[best] {
                best = k;
            }
        }
        self.classes[best]
    }
}

pub fn train_logistic(x: &[Vec<f64>], labels: &[usize], params: &LogisticParams) -> Result<LogisticModel> {
    if x.len() != labels.len() || x.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} rows but {} labels",
            x.len(),
            labels.len()
        )));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let standardizer = Standardizer::fit(x);
    let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();

    let n = z.len() as f64;
    let p = z[0].len();
    let k = classes.len();
    let mut rng = rng_from(params.seed);
    let init = Normal::new(0.0, 0.01).unwrap();
    let mut weights: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..=p).map(|_| init.sample(&mut rng)).collect())
        .collect();

    let mut grad = vec![vec![0.0; p + 1]; k];
    let mut probs = vec![0.0; k];
    let mut epochs = 0;
    for epoch in 0..params.max_epochs {
        epochs = epoch + 1;
        grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
        for (row, &label) in z.iter().zip(&y) {
            for (c, w) in weights.iter().enumerate() {
                probs[c] = w[0] + w[1..].iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            softmax_in_place(&mut probs);
            for c in 0..k {
                let err = probs[c] - if c == label { 1.0 } else { 0.0 };
                grad[c][0] += err;
                for (g, v) in grad[c][1..].iter_mut().zip(row) {
                    *g += err * v;
                }
            }
        }
        let mut max_abs: f64 = 0.0;
        for c in 0..k {
            for j in 0..=p {
                let mut g = grad[c][j] / n;
                if j > 0 {
                    g += params.l2 * weights[c][j];
                }
                grad[c][j] = g;
                max_abs = max_abs.max(g.abs());
            }
        }
        if max_abs < params.tol {
            break;
        }
        let lr = params.learning_rate / (1.0 + params.decay * epoch as f64);
        for c in 0..k {
            for j in 0..=p {
                weights[c][j] -= lr * grad[c][j];
            }
        }
    }

    Ok(LogisticModel {
        classes,
        standardizer,
        weights,
        epochs,
    })
}
