//! Gaussian naive Bayes: per-class feature Gaussians with a shared variance
//! floor, decided by the larger posterior.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Predictor};
use crate::ingest::Dataset;

const LOG_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNBModel {
    /// Class frequencies, sum 1.
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    /// Per-class feature variances, each at least `var_floor`.
    pub variances: [Vec<f64>; 2],
    pub var_floor: f64,
}

/// Fits per-class moments. The variance floor is `1e-9` times the largest
/// overall feature variance, falling back to `1e-9` when every feature is
/// constant.
pub fn train_gnb(data: &Dataset) -> Result<GaussianNBModel, ClassifierError> {
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

    let n = data.rows.len() as f64;
    let mut overall_mean = vec![0.0f64; d];
    for row in &data.rows {
        for (m, &x) in overall_mean.iter_mut().zip(&row.features) {
            *m += x;
        }
    }
    for m in &mut overall_mean {
        *m /= n;
    }
    let mut max_var = 0.0f64;
    for j in 0..d {
        let var =
            data.rows.iter().map(|r| (r.features[j] - overall_mean[j]).powi(2)).sum::<f64>() / n;
        max_var = max_var.max(var);
    }
    let var_floor = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };

    let mut means = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut variances = [vec![0.0f64; d], vec![0.0f64; d]];
    for class in [0usize, 1] {
        let rows: Vec<_> = data.rows.iter().filter(|r| r.label as usize == class).collect();
        let nc = rows.len() as f64;
        for j in 0..d {
            means[class][j] = rows.iter().map(|r| r.features[j]).sum::<f64>() / nc;
        }
        for j in 0..d {
            let var =
                rows.iter().map(|r| (r.features[j] - means[class][j]).powi(2)).sum::<f64>() / nc;
            variances[class][j] = var.max(var_floor);
        }
    }

    let priors = [data.class_counts[0] as f64 / n, data.class_counts[1] as f64 / n];
    Ok(GaussianNBModel { priors, means, variances, var_floor })
}

impl GaussianNBModel {
    /// Log prior plus summed per-feature log densities for one class.
    fn log_joint(&self, class: usize, features: &[f64]) -> f64 {
        let mut total = self.priors[class].ln();
        for ((&x, &mean), &var) in
            features.iter().zip(&self.means[class]).zip(&self.variances[class])
        {
            total += -0.5 * (LOG_2PI + var.ln()) - (x - mean).powi(2) / (2.0 * var);
        }
        total
    }
}

impl Predictor for GaussianNBModel {
    fn proba_one(&self, features: &[f64]) -> f64 {
        let l0 = self.log_joint(0, features);
        let l1 = self.log_joint(1, features);
        // Posterior of class 1 via the stable two-class softmax.
        1.0 / (1.0 + (l0 - l1).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Column, FlowRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal};

    fn schema(d: usize) -> Vec<Column> {
        let mut cols: Vec<Column> = (0..d).map(|i| Column::numeric(format!("f{i}"))).collect();
        cols.push(Column::label("Label"));
        cols
    }

    #[test]
    fn separated_blobs_classify_cleanly() {
        // Two 2-D Gaussian blobs 10 sigmas apart, 1,000 points each.
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        for _ in 0..1000 {
            rows.push(FlowRecord::new(
                vec![noise.sample(&mut rng), noise.sample(&mut rng)],
                0,
            ));
            rows.push(FlowRecord::new(
                vec![10.0 + noise.sample(&mut rng), 10.0 + noise.sample(&mut rng)],
                1,
            ));
        }
        let data = Dataset::from_rows(schema(2), rows);
        let model = train_gnb(&data).unwrap();
        let correct =
            data.rows.iter().filter(|r| model.predict(&r.features) == r.label).count();
        assert!(correct as f64 / data.rows.len() as f64 > 0.99);
    }

    #[test]
    fn identical_distributions_follow_the_prior() {
        // Same feature values in both classes, 3:1 prior for class 1.
        let values = [0.0, 1.0, 2.0, 3.0];
        let mut rows = Vec::new();
        for &v in &values {
            rows.push(FlowRecord::new(vec![v], 0));
            for _ in 0..3 {
                rows.push(FlowRecord::new(vec![v], 1));
            }
        }
        let data = Dataset::from_rows(schema(1), rows);
        let model = train_gnb(&data).unwrap();
        for &v in &values {
            assert_eq!(model.predict(&[v]), 1);
            assert!((model.proba_one(&[v]) - 0.75).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_variance_equal_prior_is_nearest_centroid() {
        // Mirror-image clouds: same spread, equal counts, centroids at ±2.
        let offsets = [-0.5, 0.0, 0.5];
        let mut rows = Vec::new();
        for &o in &offsets {
            rows.push(FlowRecord::new(vec![-2.0 + o], 0));
            rows.push(FlowRecord::new(vec![2.0 + o], 1));
        }
        let data = Dataset::from_rows(schema(1), rows);
        let model = train_gnb(&data).unwrap();
        for &(x, want) in
            &[(-3.0, 0u8), (-1.0, 0), (-0.1, 0), (0.1, 1), (1.0, 1), (3.0, 1)]
        {
            assert_eq!(model.predict(&[x]), want, "x = {x}");
        }
    }

    #[test]
    fn variances_respect_floor() {
        let rows = vec![
            FlowRecord::new(vec![1.0, 100.0], 0),
            FlowRecord::new(vec![1.0, 200.0], 0),
            FlowRecord::new(vec![1.0, 300.0], 1),
            FlowRecord::new(vec![1.0, 400.0], 1),
        ];
        let data = Dataset::from_rows(schema(2), rows);
        let model = train_gnb(&data).unwrap();
        // Feature 0 is constant within (and across) classes, so it sits at
        // the floor derived from feature 1's variance.
        assert!(model.var_floor > 0.0);
        assert_eq!(model.variances[0][0], model.var_floor);
        assert!(model.proba_one(&[1.0, 250.0]).is_finite());
    }

    #[test]
    fn all_constant_features_use_absolute_floor() {
        let rows = vec![
            FlowRecord::new(vec![5.0], 0),
            FlowRecord::new(vec![5.0], 1),
        ];
        let data = Dataset::from_rows(schema(1), rows);
        let model = train_gnb(&data).unwrap();
        assert_eq!(model.var_floor, 1e-9);
        assert!(model.proba_one(&[5.0]).is_finite());
    }

    #[test]
    fn priors_sum_to_one() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let rows: Vec<FlowRecord> = (0..57)
            .map(|i| FlowRecord::new(vec![rng.gen::<f64>()], u8::from(i % 3 == 0)))
            .collect();
        let data = Dataset::from_rows(schema(1), rows);
        let model = train_gnb(&data).unwrap();
        assert!((model.priors[0] + model.priors[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_rejected() {
        let rows = vec![FlowRecord::new(vec![0.0], 0), FlowRecord::new(vec![1.0], 0)];
        let data = Dataset::from_rows(schema(1), rows);
        assert!(matches!(train_gnb(&data), Err(ClassifierError::SingleClass(0))));
    }
}
