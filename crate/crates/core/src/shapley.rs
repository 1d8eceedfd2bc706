//! Shapley attributions for per-feature model explanations, their aggregation
//! into a global importance ranking, and top-k feature selection.
//!
//! The exact variant enumerates the subset lattice with permutation-count
//! weights `|S|!(d−1−|S|)!/d!`, which equals the average over all `d!` feature
//! orderings; feasible for d ≤ 10. The Monte-Carlo variant samples orderings
//! (one background row per ordering) and converges to the exact values.
//! "Absent" features are filled from background rows and averaged.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FlowRecord;

/// Exact enumeration is limited to this many features.
pub const MAX_EXACT_FEATURES: usize = 10;
/// Background rows drawn for the "absent feature" distribution.
pub const DEFAULT_BACKGROUND_ROWS: usize = 100;
/// Evaluation rows attributed when building a global ranking.
pub const DEFAULT_EVAL_ROWS: usize = 200;
/// Features kept by the selection step.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("{d} features exceeds the exact-enumeration limit of {max}; use mc_shapley")]
    TooManyFeatures { d: usize, max: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("background row has {got} features, sample has {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("n_permutations must be at least 1")]
    ZeroPermutations,
    #[error("phi matrix is empty")]
    EmptyPhi,
    #[error("k = {k} is out of range 1..={n}")]
    BadK { k: usize, n: usize },
}

/// Per-sample, per-feature attributions plus the background expectation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiMatrix {
    /// `phi[i][j]` is the attribution of feature `j` on sample `i`.
    pub phi: Vec<Vec<f64>>,
    /// Expected model output over the background set.
    pub baseline: f64,
}

/// Mean absolute attribution per feature and the induced ranking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// `importance[j] = (1/n) Σ_i |phi[i][j]|`.
    pub importance: Vec<f64>,
    /// Feature indices sorted by descending importance, ties by ascending index.
    pub ranking: Vec<usize>,
    /// Samples aggregated.
    pub n: usize,
}

fn check_background(background: &[FlowRecord], d: usize) -> Result<(), ShapleyError> {
    if background.is_empty() {
        return Err(ShapleyError::EmptyBackground);
    }
    for row in background {
        if row.features.len() != d {
            return Err(ShapleyError::DimensionMismatch { got: row.features.len(), expected: d });
        }
    }
    Ok(())
}

/// Mean model output over the background rows; the `v(∅)` term.
pub fn baseline<F>(model: &F, background: &[FlowRecord]) -> Result<f64, ShapleyError>
where
    F: Fn(&[f64]) -> f64,
{
    if background.is_empty() {
        return Err(ShapleyError::EmptyBackground);
    }
    let total: f64 = background.iter().map(|b| model(&b.features)).sum();
    Ok(total / background.len() as f64)
}

/// Exact Shapley values of `x` under `model`, marginalizing absent features
/// over `background`. Satisfies efficiency, symmetry, and the dummy axiom.
pub fn exact_shapley<F>(
    model: &F,
    x: &[f64],
    background: &[FlowRecord],
) -> Result<Vec<f64>, ShapleyError>
where
    F: Fn(&[f64]) -> f64,
{
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(ShapleyError::TooManyFeatures { d, max: MAX_EXACT_FEATURES });
    }
    check_background(background, d)?;

    // v(S): mean over background of the model on x with features outside S
    // taken from the background row.
    let n_masks = 1usize << d;
    let mut v = vec![0.0f64; n_masks];
    let mut composite = vec![0.0f64; d];
    for (mask, slot) in v.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background {
            for j in 0..d {
                composite[j] =
                    if mask & (1 << j) != 0 { x[j] } else { b.features[j] };
            }
            total += model(&composite);
        }
        *slot = total / background.len() as f64;
    }

    // w[s] = s!(d−1−s)!/d!; exact in f64 for d ≤ 10.
    let factorial = |n: usize| -> f64 { (1..=n).map(|i| i as f64).product() };
    let weights: Vec<f64> =
        (0..d).map(|s| factorial(s) * factorial(d - 1 - s) / factorial(d)).collect();

    let mut phi = vec![0.0f64; d];
    for mask in 0..n_masks {
        let s = mask.count_ones() as usize;
        for (j, slot) in phi.iter_mut().enumerate() {
            if mask & (1 << j) == 0 {
                *slot += weights[s] * (v[mask | (1 << j)] - v[mask]);
            }
        }
    }
    Ok(phi)
}

/// Permutation-sampling Shapley estimate: each draw picks a feature ordering
/// and one background row, then walks the ordering flipping features from the
/// background value to `x`'s. Deterministic per seed; unbiased for the same
/// quantity [`exact_shapley`] computes.
pub fn mc_shapley<F>(
    model: &F,
    x: &[f64],
    background: &[FlowRecord],
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<f64>, ShapleyError>
where
    F: Fn(&[f64]) -> f64,
{
    if n_permutations == 0 {
        return Err(ShapleyError::ZeroPermutations);
    }
    let d = x.len();
    check_background(background, d)?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    let mut phi = vec![0.0f64; d];
    let mut composite = vec![0.0f64; d];

    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        let b = &background[rng.gen_range(0..background.len())];
        composite.copy_from_slice(&b.features);
        let mut prev = model(&composite);
        for &j in &order {
            composite[j] = x[j];
            let next = model(&composite);
            phi[j] += next - prev;
            prev = next;
        }
    }
    for slot in &mut phi {
        *slot /= n_permutations as f64;
    }
    Ok(phi)
}

/// Exact attributions for a batch of samples, computed in parallel and merged
/// in sample order.
pub fn phi_matrix_exact<F>(
    model: &F,
    samples: &[FlowRecord],
    background: &[FlowRecord],
) -> Result<PhiMatrix, ShapleyError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let rows: Result<Vec<Vec<f64>>, ShapleyError> = samples
        .par_iter()
        .map(|s| exact_shapley(model, &s.features, background))
        .collect();
    Ok(PhiMatrix { phi: rows?, baseline: baseline(model, background)? })
}

/// Sampled attributions for a batch; sample `i` uses seed `seed + i` so the
/// result does not depend on thread scheduling.
pub fn phi_matrix_mc<F>(
    model: &F,
    samples: &[FlowRecord],
    background: &[FlowRecord],
    n_permutations: usize,
    seed: u64,
) -> Result<PhiMatrix, ShapleyError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let rows: Result<Vec<Vec<f64>>, ShapleyError> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            mc_shapley(model, &s.features, background, n_permutations, seed.wrapping_add(i as u64))
        })
        .collect();
    Ok(PhiMatrix { phi: rows?, baseline: baseline(model, background)? })
}

/// Deterministic subsample of rows used as a background or evaluation set.
pub fn subsample_rows(rows: &[FlowRecord], n: usize, seed: u64) -> Vec<FlowRecord> {
    if rows.len() <= n {
        return rows.to_vec();
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

/// Mean absolute attribution per feature, ranked descending (ties by index).
pub fn global_importance(phis: &PhiMatrix) -> Result<ImportanceReport, ShapleyError> {
    if phis.phi.is_empty() || phis.phi[0].is_empty() {
        return Err(ShapleyError::EmptyPhi);
    }
    let n = phis.phi.len();
    let d = phis.phi[0].len();
    let mut importance = vec![0.0f64; d];
    for row in &phis.phi {
        for (slot, &p) in importance.iter_mut().zip(row) {
            *slot += p.abs();
        }
    }
    for slot in &mut importance {
        *slot /= n as f64;
    }
    let mut ranking: Vec<usize> = (0..d).collect();
    ranking.sort_by(|&a, &b| {
        importance[b].partial_cmp(&importance[a]).unwrap().then(a.cmp(&b))
    });
    Ok(ImportanceReport { importance, ranking, n })
}

/// First `k` entries of the ranking.
pub fn top_k(report: &ImportanceReport, k: usize) -> Result<Vec<usize>, ShapleyError> {
    let n = report.ranking.len();
    if k == 0 || k > n {
        return Err(ShapleyError::BadK { k, n });
    }
    Ok(report.ranking[..k].to_vec())
}
