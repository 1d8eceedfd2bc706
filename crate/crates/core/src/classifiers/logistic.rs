//! Logistic regression on standardized features, trained with full-batch
//! gradient descent on the mean log loss plus an L2 penalty.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Predictor};
use crate::ingest::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams { lr: 0.1, epochs: 200, l2: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Standardization captured at fit time; zero-variance features get std 1.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Mean regularized log loss before training and after each epoch.
    pub loss_history: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Trains by gradient descent. The bias starts at the log-odds of class 1, so
/// an untrained model already predicts the majority prior.
pub fn train_logistic(
    data: &Dataset,
    params: &LogisticParams,
) -> Result<LogisticModel, ClassifierError> {
    if data.rows.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let d = data.n_features();
    if d == 0 {
        return Err(ClassifierError::NoFeatures);
    }
    for class in [0usize, 1] {
        if data.class_counts[class] == 0 {
            return Err(ClassifierError::SingleClass(1 - class as u8));
        }
    }

    let n = data.rows.len();
    let nf = n as f64;

    let mut means = vec![0.0f64; d];
    let mut stds = vec![0.0f64; d];
    for row in &data.rows {
        for (m, &x) in means.iter_mut().zip(&row.features) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= nf;
    }
    for row in &data.rows {
        for j in 0..d {
            stds[j] += (row.features[j] - means[j]).powi(2);
        }
    }
    for s in &mut stds {
        *s = (*s / nf).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let x: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| (0..d).map(|j| (r.features[j] - means[j]) / stds[j]).collect())
        .collect();
    let y: Vec<f64> = data.rows.iter().map(|r| r.label as f64).collect();

    let mut weights = vec![0.0f64; d];
    let mut bias =
        (data.class_counts[1] as f64 / data.class_counts[0] as f64).ln();

    let loss = |weights: &[f64], bias: f64| -> f64 {
        let mut total = 0.0;
        for (xi, &yi) in x.iter().zip(&y) {
            let z = bias + xi.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>();
            total += softplus(z) - yi * z;
        }
        total / nf + 0.5 * params.l2 * weights.iter().map(|w| w * w).sum::<f64>()
    };

    let mut loss_history = vec![loss(&weights, bias)];
    let mut grad = vec![0.0f64; d];
    for _ in 0..params.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (xi, &yi) in x.iter().zip(&y) {
            let z = bias + xi.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
            let err = sigmoid(z) - yi;
            for (g, &xij) in grad.iter_mut().zip(xi) {
                *g += err * xij;
            }
            grad_b += err;
        }
        for j in 0..d {
            weights[j] -= params.lr * (grad[j] / nf + params.l2 * weights[j]);
        }
        bias -= params.lr * grad_b / nf;
        loss_history.push(loss(&weights, bias));
    }

    Ok(LogisticModel { weights, bias, means, stds, loss_history })
}

impl Predictor for LogisticModel {
    fn proba_one(&self, features: &[f64]) -> f64 {
        let z = self.bias
            + features
                .iter()
                .zip(self.weights.iter().zip(self.means.iter().zip(&self.stds)))
                .map(|(&x, (&w, (&m, &s)))| w * (x - m) / s)
                .sum::<f64>();
        sigmoid(z)
    }
}
