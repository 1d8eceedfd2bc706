//! The four intrusion-detection classifiers behind one predictor interface,
//! plus confusion-matrix evaluation and the tabular metric report.

mod forest;
mod gnb;
mod logistic;
mod metrics;
mod tree;

pub use forest::{train_forest, ForestModel, ForestParams};
pub use gnb::{train_gnb, GaussianNBModel};
pub use logistic::{train_logistic, LogisticModel, LogisticParams};
pub use metrics::{
    evaluate, rank_by_false_negatives, ClassMetrics, ConfusionMatrix, Evaluation, MetricsReport,
};
pub use tree::{train_tree, DecisionTreeModel, Node, TreeParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Format tag for persisted model documents.
pub const MODEL_FORMAT: &str = "ganids.model.v1";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("training data contains only class {0}")]
    SingleClass(u8),
    #[error("forest needs at least one tree")]
    ZeroTrees,
    #[error("cannot evaluate on an empty dataset")]
    EmptyTest,
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model document error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model document has format {0:?}, expected {MODEL_FORMAT:?}")]
    WrongFormat(String),
}

/// Binary scorer over feature vectors; class 1 is the malicious class.
pub trait Predictor: Send + Sync {
    /// Probability assigned to class 1.
    fn proba_one(&self, features: &[f64]) -> f64;

    /// Hard decision at the 0.5 threshold (p ≥ 0.5 maps to class 1).
    fn predict(&self, features: &[f64]) -> u8 {
        if self.proba_one(features) >= 0.5 {
            1
        } else {
            0
        }
    }
}

/// Any of the four trained models, tagged for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedClassifier {
    RandomForest(ForestModel),
    DecisionTree(DecisionTreeModel),
    LogisticRegression(LogisticModel),
    GaussianNb(GaussianNBModel),
}

impl TrainedClassifier {
    pub fn name(&self) -> &'static str {
        match self {
            TrainedClassifier::RandomForest(_) => "random_forest",
            TrainedClassifier::DecisionTree(_) => "decision_tree",
            TrainedClassifier::LogisticRegression(_) => "logistic_regression",
            TrainedClassifier::GaussianNb(_) => "gaussian_nb",
        }
    }

    /// Width of the feature slice the model was trained on.
    pub fn n_features(&self) -> usize {
        match self {
            TrainedClassifier::RandomForest(m) => m.trees[0].n_features,
            TrainedClassifier::DecisionTree(m) => m.n_features,
            TrainedClassifier::LogisticRegression(m) => m.weights.len(),
            TrainedClassifier::GaussianNb(m) => m.means[0].len(),
        }
    }
}

impl Predictor for TrainedClassifier {
    fn proba_one(&self, features: &[f64]) -> f64 {
        match self {
            TrainedClassifier::RandomForest(m) => m.proba_one(features),
            TrainedClassifier::DecisionTree(m) => m.proba_one(features),
            TrainedClassifier::LogisticRegression(m) => m.proba_one(features),
            TrainedClassifier::GaussianNb(m) => m.proba_one(features),
        }
    }

    fn predict(&self, features: &[f64]) -> u8 {
        match self {
            TrainedClassifier::RandomForest(m) => m.predict(features),
            TrainedClassifier::DecisionTree(m) => m.predict(features),
            TrainedClassifier::LogisticRegression(m) => m.predict(features),
            TrainedClassifier::GaussianNb(m) => m.predict(features),
        }
    }
}

/// Versioned on-disk wrapper around a trained model.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub model: TrainedClassifier,
}

pub fn save_model(model: &TrainedClassifier, path: &std::path::Path) -> Result<(), ClassifierError> {
    let doc = ModelDocument { format: MODEL_FORMAT.to_string(), model: model.clone() };
    let json = serde_json::to_string(&doc)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &std::path::Path) -> Result<TrainedClassifier, ClassifierError> {
    let json = std::fs::read_to_string(path)?;
    let doc: ModelDocument = serde_json::from_str(&json)?;
    if doc.format != MODEL_FORMAT {
        return Err(ClassifierError::WrongFormat(doc.format));
    }
    Ok(doc.model)
}
