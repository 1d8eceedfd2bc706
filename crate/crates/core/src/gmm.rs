//! Per-column Gaussian mixture fitting and the mode-specific normalization
//! used to feed numeric flow features into the generator.
//!
//! A fitted column model turns a raw value `c` into a pair: `v`, the residual
//! against the most responsible component scaled by `2σ` and clamped to
//! `[-1, 1]`, and `u`, the full posterior responsibility vector. The decode
//! direction is `c = 2σ_k·v + μ_k` with `k = argmax u`, so the round trip is
//! exact whenever the residual was inside the clamp.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Component count used when the caller does not specify one.
pub const DEFAULT_COMPONENTS: usize = 5;

/// Relative floor applied to every component std: `1e-6 × column std`.
pub const STD_FLOOR_RATIO: f64 = 1e-6;

const LOG_2PI: f64 = 1.837877066409345483560659472811; // ln(2π)

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("component count must be at least 1")]
    ZeroComponents,
    #[error("cannot fit a mixture to an empty column")]
    EmptyColumn,
    #[error("column contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Gaussian mixture fitted to one numeric column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmColumnModel {
    pub column: String,
    pub m: usize,
    /// Mixture weights, sum 1.
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    /// Component stds, each at least the column floor.
    pub stds: Vec<f64>,
    /// Log-likelihood after each EM iteration; non-decreasing.
    pub log_likelihood: Vec<f64>,
    /// Degradations applied during fitting (component reduction, constant column).
    pub flags: Vec<String>,
}

/// Encoded form of one numeric cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedValue {
    /// Scaled residual in `[-1, 1]`.
    pub v: f64,
    /// Posterior responsibilities, sum 1, length `m`.
    pub u: Vec<f64>,
}

fn log_normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * LOG_2PI - std.ln() - 0.5 * z * z
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// k-means++ seeding: first center uniform, then each next center drawn with
/// probability proportional to the squared distance to the nearest chosen one.
fn kmeans_pp_centers(values: &[f64], m: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let mut centers = Vec::with_capacity(m);
    centers.push(values[rng.gen_range(0..values.len())]);
    let mut d2: Vec<f64> = values.iter().map(|&x| (x - centers[0]).powi(2)).collect();
    while centers.len() < m {
        let dist = WeightedIndex::new(&d2)
            .expect("at least one point is distinct from every chosen center");
        let next = values[dist.sample(rng)];
        centers.push(next);
        for (slot, &x) in d2.iter_mut().zip(values) {
            *slot = slot.min((x - next).powi(2));
        }
    }
    centers
}

/// Fits an `m`-component mixture with EM, seeded k-means++ style.
///
/// Runs until the log-likelihood improves by less than `tol` or `max_iters`
/// is reached. A column with fewer distinct values than `m` gets `m` reduced
/// to the distinct count (flagged); a constant column becomes a single
/// component with `σ = 1` so the transform stays invertible.
pub fn fit_em(
    values: &[f64],
    m: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<GmmColumnModel, GmmError> {
    if m == 0 {
        return Err(GmmError::ZeroComponents);
    }
    if values.is_empty() {
        return Err(GmmError::EmptyColumn);
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(GmmError::NonFinite(bad));
    }

    let mut flags = Vec::new();
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();

    if distinct.len() == 1 {
        let ll = values.iter().map(|&x| log_normal_pdf(x, distinct[0], 1.0)).sum();
        return Ok(GmmColumnModel {
            column: String::new(),
            m: 1,
            weights: vec![1.0],
            means: vec![distinct[0]],
            stds: vec![1.0],
            log_likelihood: vec![ll],
            flags: vec!["constant column, forced m=1 with unit std".to_string()],
        });
    }

    let mut m = m;
    if distinct.len() < m {
        flags.push(format!("only {} distinct values, reduced m from {}", distinct.len(), m));
        m = distinct.len();
    }

    let (_, column_std) = mean_and_std(values);
    let std_floor = STD_FLOOR_RATIO * column_std;
    let n = values.len();
    let nf = n as f64;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centers = kmeans_pp_centers(values, m, &mut rng);

    // Hard-assign to the nearest seed center for initial moments.
    let mut means = centers.clone();
    let mut stds = vec![std_floor.max(column_std); m];
    let mut weights = vec![1.0 / m as f64; m];
    {
        let mut sums = vec![0.0; m];
        let mut sqsums = vec![0.0; m];
        let mut counts = vec![0usize; m];
        for &x in values {
            let mut best = 0;
            let mut best_d = (x - centers[0]).abs();
            for (k, &c) in centers.iter().enumerate().skip(1) {
                let d = (x - c).abs();
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            sums[best] += x;
            sqsums[best] += x * x;
            counts[best] += 1;
        }
        for k in 0..m {
            if counts[k] > 0 {
                let c = counts[k] as f64;
                means[k] = sums[k] / c;
                let var = (sqsums[k] / c - means[k] * means[k]).max(0.0);
                stds[k] = var.sqrt().max(std_floor);
                weights[k] = c / nf;
            }
        }
    }

    let mut log_likelihood = Vec::new();
    let mut resp = vec![0.0f64; n * m]; // row-major responsibilities
    let mut log_terms = vec![0.0f64; m];

    for _ in 0..max_iters {
        // E-step in log space; also yields the current log-likelihood.
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            for k in 0..m {
                let log_w = if weights[k] > 0.0 { weights[k].ln() } else { f64::NEG_INFINITY };
                log_terms[k] = log_w + log_normal_pdf(x, means[k], stds[k]);
            }
            let norm = log_sum_exp(&log_terms);
            ll += norm;
            for k in 0..m {
                resp[i * m + k] = (log_terms[k] - norm).exp();
            }
        }

        let converged = log_likelihood
            .last()
            .map(|&prev: &f64| (ll - prev).abs() < tol)
            .unwrap_or(false);
        log_likelihood.push(ll);
        if converged {
            break;
        }

        // M-step: weighted moments per component, stds floored.
        for k in 0..m {
            let nk: f64 = (0..n).map(|i| resp[i * m + k]).sum();
            weights[k] = nk / nf;
            if nk < 1e-12 {
                continue; // dead component keeps its old location
            }
            let mu = (0..n).map(|i| resp[i * m + k] * values[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * m + k] * (values[i] - mu).powi(2)).sum::<f64>() / nk;
            means[k] = mu;
            stds[k] = var.sqrt().max(std_floor);
        }
    }

    Ok(GmmColumnModel { column: String::new(), m, weights, means, stds, log_likelihood, flags })
}

/// [`fit_em`] with the column name recorded on the model.
pub fn fit_named(
    name: &str,
    values: &[f64],
    m: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<GmmColumnModel, GmmError> {
    let mut model = fit_em(values, m, seed, max_iters, tol)?;
    model.column = name.to_string();
    Ok(model)
}

impl GmmColumnModel {
    /// Posterior responsibilities of `c` under the mixture.
    pub fn responsibilities(&self, c: f64) -> Vec<f64> {
        let log_terms: Vec<f64> = (0..self.m)
            .map(|k| {
                let log_w =
                    if self.weights[k] > 0.0 { self.weights[k].ln() } else { f64::NEG_INFINITY };
                log_w + log_normal_pdf(c, self.means[k], self.stds[k])
            })
            .collect();
        let norm = log_sum_exp(&log_terms);
        log_terms.iter().map(|&t| (t - norm).exp()).collect()
    }

    /// Index of the largest responsibility; ties go to the lowest index.
    fn argmax(u: &[f64]) -> usize {
        let mut best = 0;
        for (k, &val) in u.iter().enumerate().skip(1) {
            if val > u[best] {
                best = k;
            }
        }
        best
    }

    /// Encodes a raw value as `(v, u)`.
    pub fn transform(&self, c: f64) -> NormalizedValue {
        let u = self.responsibilities(c);
        let k = Self::argmax(&u);
        let v = ((c - self.means[k]) / (2.0 * self.stds[k])).clamp(-1.0, 1.0);
        NormalizedValue { v, u }
    }

    /// Decodes `(v, u)` back to a raw value via the most responsible component.
    pub fn inverse_transform(&self, nv: &NormalizedValue) -> f64 {
        let k = Self::argmax(&nv.u);
        2.0 * self.stds[k] * nv.v + self.means[k]
    }
}
