//! CART-style decision tree: greedy binary splits on Gini impurity decrease
//! with thresholds at midpoints of sorted distinct values.

use rand::seq::index;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Predictor};
use crate::ingest::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// Depth cap; `None` grows until nodes are pure or too small.
    pub max_depth: Option<usize>,
    /// Nodes with fewer rows become leaves.
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_samples_split: 2 }
    }
}

/// Arena node; the root sits at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Class-probability vector, sums to 1.
        proba: [f64; 2],
        n: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTreeModel {
    pub nodes: Vec<Node>,
    pub params: TreeParams,
    pub n_features: usize,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

/// Scans candidate features in ascending order and thresholds in ascending
/// value order, keeping the first maximum, so ties resolve deterministically.
fn best_split(
    data: &Dataset,
    rows: &[usize],
    features: &[usize],
    parent_counts: [usize; 2],
) -> Option<BestSplit> {
    let n = rows.len() as f64;
    let parent_gini = gini(parent_counts);
    let mut best: Option<BestSplit> = None;

    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| data.rows[a].features[f].total_cmp(&data.rows[b].features[f]));
        let mut left = [0usize; 2];
        for w in 0..order.len() - 1 {
            left[data.rows[order[w]].label as usize] += 1;
            let a = data.rows[order[w]].features[f];
            let b = data.rows[order[w + 1]].features[f];
            if a == b {
                continue;
            }
            let nl = (w + 1) as f64;
            let nr = n - nl;
            let right = [
                parent_counts[0] - left[0],
                parent_counts[1] - left[1],
            ];
            let decrease =
                parent_gini - (nl / n) * gini(left) - (nr / n) * gini(right);
            if best.as_ref().map(|b| decrease > b.decrease).unwrap_or(true) {
                best = Some(BestSplit { feature: f, threshold: (a + b) / 2.0, decrease });
            }
        }
    }
    best
}

struct Job {
    slot: usize,
    rows: Vec<usize>,
    depth: usize,
}

/// Grows a tree over the given row indices. When `candidates` is set, each
/// split considers that many features drawn without replacement from `rng`;
/// otherwise every feature is a candidate.
pub(super) fn grow_tree(
    data: &Dataset,
    rows: Vec<usize>,
    params: &TreeParams,
    candidates: Option<usize>,
    rng: &mut Option<&mut ChaCha20Rng>,
) -> Result<DecisionTreeModel, ClassifierError> {
    let d = data.n_features();
    if rows.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if d == 0 {
        return Err(ClassifierError::NoFeatures);
    }

    let mut nodes = vec![Node::Leaf { proba: [1.0, 0.0], n: 0 }];
    let mut stack = vec![Job { slot: 0, rows, depth: 0 }];

    while let Some(job) = stack.pop() {
        let mut counts = [0usize; 2];
        for &i in &job.rows {
            counts[data.rows[i].label as usize] += 1;
        }
        let n = job.rows.len();
        let make_leaf = |counts: [usize; 2]| Node::Leaf {
            proba: [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64],
            n,
        };

        let depth_capped = params.max_depth.map(|cap| job.depth >= cap).unwrap_or(false);
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth_capped || n < params.min_samples_split {
            nodes[job.slot] = make_leaf(counts);
            continue;
        }

        let feature_pool: Vec<usize> = match (candidates, rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < d => {
                let mut picked = index::sample(rng, d, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..d).collect(),
        };

        match best_split(data, &job.rows, &feature_pool, counts) {
            None => nodes[job.slot] = make_leaf(counts),
            Some(split) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = job
                    .rows
                    .iter()
                    .partition(|&&i| data.rows[i].features[split.feature] <= split.threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { proba: [1.0, 0.0], n: 0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { proba: [1.0, 0.0], n: 0 });
                nodes[job.slot] =
                    Node::Split { feature: split.feature, threshold: split.threshold, left, right };
                stack.push(Job { slot: right, rows: right_rows, depth: job.depth + 1 });
                stack.push(Job { slot: left, rows: left_rows, depth: job.depth + 1 });
            }
        }
    }

    Ok(DecisionTreeModel { nodes, params: params.clone(), n_features: d })
}

/// Fits a tree on the full dataset with every feature as a split candidate.
pub fn train_tree(data: &Dataset, params: &TreeParams) -> Result<DecisionTreeModel, ClassifierError> {
    if data.rows.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    grow_tree(data, (0..data.rows.len()).collect(), params, None, &mut None)
}

impl DecisionTreeModel {
    /// Leaf reached by `features`.
    fn leaf(&self, features: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                leaf @ Node::Leaf { .. } => return leaf,
                Node::Split { feature, threshold, left, right } => {
                    i = if features[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Predictor for DecisionTreeModel {
    fn proba_one(&self, features: &[f64]) -> f64 {
        match self.leaf(features) {
            Node::Leaf { proba, .. } => proba[1],
            Node::Split { .. } => unreachable!("leaf() only returns leaves"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Column, FlowRecord};

    fn dataset(points: &[(Vec<f64>, u8)]) -> Dataset {
        let d = points[0].0.len();
        let mut schema: Vec<Column> =
            (0..d).map(|i| Column::numeric(format!("f{i}"))).collect();
        schema.push(Column::label("Label"));
        let rows = points.iter().map(|(f, l)| FlowRecord::new(f.clone(), *l)).collect();
        Dataset::from_rows(schema, rows)
    }

    fn training_accuracy(model: &DecisionTreeModel, data: &Dataset) -> f64 {
        let correct = data
            .rows
            .iter()
            .filter(|r| model.predict(&r.features) == r.label)
            .count();
        correct as f64 / data.rows.len() as f64
    }

    #[test]
    fn one_dimensional_step_is_one_split() {
        let data = dataset(&[(vec![0.0], 0), (vec![1.0], 1)]);
        let model = train_tree(&data, &TreeParams::default()).unwrap();
        assert_eq!(training_accuracy(&model, &data), 1.0);
        let splits = model
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count();
        assert_eq!(splits, 1);
        match &model.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            other => panic!("expected split at root, got {other:?}"),
        }
    }

    #[test]
    fn pure_input_is_a_single_leaf() {
        let data = dataset(&[(vec![0.0], 1), (vec![5.0], 1), (vec![2.0], 1)]);
        let model = train_tree(&data, &TreeParams::default()).unwrap();
        assert_eq!(model.nodes.len(), 1);
        assert!(matches!(model.nodes[0], Node::Leaf { proba: [0.0, 1.0], n: 3 }));
    }

    #[test]
    fn xor_is_learned_at_depth_two() {
        let data = dataset(&[
            (vec![0.0, 0.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
            (vec![1.0, 1.0], 0),
        ]);
        let model = train_tree(&data, &TreeParams::default()).unwrap();
        assert_eq!(training_accuracy(&model, &data), 1.0);
        assert_eq!(model.depth(), 2);
    }

    #[test]
    fn depth_cap_stops_growth() {
        let data = dataset(&[
            (vec![0.0, 0.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
            (vec![1.0, 1.0], 0),
        ]);
        let params = TreeParams { max_depth: Some(1), min_samples_split: 2 };
        let model = train_tree(&data, &params).unwrap();
        assert!(model.depth() <= 1);
    }

    #[test]
    fn min_samples_split_stops_growth() {
        let data = dataset(&[(vec![0.0], 0), (vec![1.0], 1), (vec![2.0], 0)]);
        let params = TreeParams { max_depth: None, min_samples_split: 4 };
        let model = train_tree(&data, &params).unwrap();
        assert_eq!(model.nodes.len(), 1);
    }

    #[test]
    fn leaf_probabilities_sum_to_one() {
        let data = dataset(&[
            (vec![0.0, 3.0], 0),
            (vec![0.5, 2.0], 1),
            (vec![1.5, 2.5], 0),
            (vec![2.0, 1.0], 1),
            (vec![2.5, 0.0], 1),
            (vec![3.0, 0.5], 0),
        ]);
        let model = train_tree(&data, &TreeParams::default()).unwrap();
        for node in &model.nodes {
            if let Node::Leaf { proba, .. } = node {
                assert!((proba[0] + proba[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn internal_nodes_have_two_children() {
        let data = dataset(&[
            (vec![0.0], 0),
            (vec![1.0], 1),
            (vec![2.0], 0),
            (vec![3.0], 1),
        ]);
        let model = train_tree(&data, &TreeParams::default()).unwrap();
        for node in &model.nodes {
            if let Node::Split { left, right, .. } = node {
                assert!(*left < model.nodes.len());
                assert!(*right < model.nodes.len());
                assert_ne!(left, right);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = dataset(&[
            (vec![0.3, 1.0], 0),
            (vec![0.7, 0.2], 1),
            (vec![0.9, 0.9], 1),
            (vec![0.1, 0.4], 0),
            (vec![0.5, 0.6], 1),
        ]);
        let a = train_tree(&data, &TreeParams::default()).unwrap();
        let b = train_tree(&data, &TreeParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let schema = vec![Column::numeric("x"), Column::label("Label")];
        let data = Dataset::from_rows(schema, vec![]);
        assert!(matches!(
            train_tree(&data, &TreeParams::default()),
            Err(ClassifierError::EmptyDataset)
        ));
    }
}
