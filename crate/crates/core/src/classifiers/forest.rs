//! Random forest: bagged CART trees with per-split feature subsampling.
//!
//! Tree `t` derives its generator from `seed + t`, so the ensemble is
//! reproducible regardless of how the parallel training is scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, DecisionTreeModel, TreeParams};
use super::{ClassifierError, Predictor};
use crate::ingest::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Split candidates per node; `None` means `⌈√d⌉`.
    pub features_per_split: Option<usize>,
    pub tree: TreeParams,
    /// Bootstrap resampling (with replacement, same size). Off means every
    /// tree sees the full training set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            features_per_split: None,
            tree: TreeParams::default(),
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTreeModel>,
    /// Generator seed of each tree, `seed + index`.
    pub seeds: Vec<u64>,
    pub features_per_split: usize,
}

/// Trains `n_trees` bagged trees in parallel, merged in index order.
pub fn train_forest(
    data: &Dataset,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ClassifierError> {
    if params.n_trees == 0 {
        return Err(ClassifierError::ZeroTrees);
    }
    if data.rows.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let d = data.n_features();
    if d == 0 {
        return Err(ClassifierError::NoFeatures);
    }
    let features_per_split =
        params.features_per_split.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).min(d);

    let seeds: Vec<u64> = (0..params.n_trees).map(|t| seed.wrapping_add(t as u64)).collect();
    let trees: Result<Vec<DecisionTreeModel>, ClassifierError> = seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(tree_seed);
            let n = data.rows.len();
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(data, rows, &params.tree, Some(features_per_split), &mut Some(&mut rng))
        })
        .collect();

    Ok(ForestModel { trees: trees?, seeds, features_per_split })
}

impl ForestModel {
    fn votes_for_one(&self, features: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.predict(features) == 1).count()
    }
}

impl Predictor for ForestModel {
    /// Mean leaf probability across trees.
    fn proba_one(&self, features: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.proba_one(features)).sum();
        total / self.trees.len() as f64
    }

    /// Majority vote; an exact tie goes to the malicious class, matching the
    /// p ≥ 0.5 convention.
    fn predict(&self, features: &[f64]) -> u8 {
        if 2 * self.votes_for_one(features) >= self.trees.len() {
            1
        } else {
            0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::tree::train_tree;
    use crate::ingest::{Column, FlowRecord};

    fn blob_dataset(seed: u64, n_per_class: usize) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let schema = vec![
            Column::numeric("a"),
            Column::numeric("b"),
            Column::numeric("c"),
            Column::label("Label"),
        ];
        let mut rows = Vec::new();
        for _ in 0..n_per_class {
            rows.push(FlowRecord::new(
                (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                0,
            ));
            rows.push(FlowRecord::new(
                (0..3).map(|_| rng.gen_range(4.0..6.0)).collect(),
                1,
            ));
        }
        Dataset::from_rows(schema, rows)
    }

    #[test]
    fn degenerate_forest_equals_single_tree() {
        let data = blob_dataset(1, 40);
        let params = ForestParams {
            n_trees: 1,
            features_per_split: Some(data.n_features()),
            tree: TreeParams::default(),
            bootstrap: false,
        };
        let forest = train_forest(&data, &params, 0).unwrap();
        let tree = train_tree(&data, &TreeParams::default()).unwrap();
        assert_eq!(forest.trees[0], tree);
        for row in &data.rows {
            assert_eq!(forest.predict(&row.features), tree.predict(&row.features));
            assert_eq!(forest.proba_one(&row.features), tree.proba_one(&row.features));
        }
    }

    #[test]
    fn same_seed_gives_identical_model() {
        let data = blob_dataset(2, 30);
        let params = ForestParams { n_trees: 7, ..Default::default() };
        let a = train_forest(&data, &params, 42).unwrap();
        let b = train_forest(&data, &params, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_changes_bootstrap() {
        let data = blob_dataset(3, 30);
        let params = ForestParams { n_trees: 3, ..Default::default() };
        let a = train_forest(&data, &params, 1).unwrap();
        let b = train_forest(&data, &params, 2).unwrap();
        assert_ne!(a.seeds, b.seeds);
    }

    #[test]
    fn forest_separates_blobs() {
        let data = blob_dataset(4, 60);
        let params = ForestParams { n_trees: 15, ..Default::default() };
        let forest = train_forest(&data, &params, 9).unwrap();
        let correct = data
            .rows
            .iter()
            .filter(|r| forest.predict(&r.features) == r.label)
            .count();
        assert_eq!(correct, data.rows.len());
    }

    #[test]
    fn default_candidate_count_is_sqrt_d() {
        let data = blob_dataset(5, 10);
        let forest =
            train_forest(&data, &ForestParams { n_trees: 1, ..Default::default() }, 0).unwrap();
        // d = 3 -> ceil(sqrt(3)) = 2
        assert_eq!(forest.features_per_split, 2);
    }

    #[test]
    fn zero_trees_is_rejected() {
        let data = blob_dataset(6, 5);
        let params = ForestParams { n_trees: 0, ..Default::default() };
        assert!(matches!(train_forest(&data, &params, 0), Err(ClassifierError::ZeroTrees)));
    }
}
