//! Core library for an adversarial-traffic study pipeline over DoS flow
//! records: data ingest and cleaning, Shapley-based feature ranking, four
//! intrusion-detection classifiers, a tabular GAN that synthesizes malicious
//! flows, evasion measurement, and a topic-based streaming path draining into
//! a bulk-indexable log sink.
//!
//! Every stage is deterministic for a fixed seed; randomness flows through
//! seeded ChaCha generators only.

pub mod classifiers;
pub mod evasion;
pub mod fixture;
pub mod gmm;
pub mod ingest;
pub mod shapley;
pub mod sink;
pub mod stream;
pub mod tabgan;

pub use classifiers::{ConfusionMatrix, MetricsReport, Predictor, TrainedClassifier};
pub use ingest::{Column, ColumnKind, Dataset, FlowRecord, LabelMap, SplitConfig};
