//! Tabular GAN over flow records: numeric columns travel as (v, u) pairs
//! from the per-column mixture models, categorical columns as noisy one-hot
//! blocks. A stepwise recurrent generator emits the encoded blocks in schema
//! order; an MLP critic scores the concatenated row.

mod discriminator;
mod generator;
pub mod optim;
mod train;

pub use discriminator::{DenseLayer, DiscriminatorParams};
pub use generator::{ForwardCache, GeneratorParams};
pub use optim::{clip_weights, FlatParams};
pub use train::{train, train_with_observer, LossRecord};

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gmm::{fit_named, GmmColumnModel, GmmError, NormalizedValue};
use crate::ingest::{Column, ColumnKind, Dataset, FlowRecord};

/// Format tag for persisted GAN documents.
pub const GAN_FORMAT: &str = "ganids.gan.v1";

#[derive(Debug, Error)]
pub enum GanError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("batch size {batch} exceeds the {rows} training rows")]
    BatchTooLarge { batch: usize, rows: usize },
    #[error("{count} training rows are not labeled malicious")]
    NonMaliciousRows { count: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("training diverged at update {step}: non-finite weight")]
    Diverged { step: usize },
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model document error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gan document has format {0:?}, expected {GAN_FORMAT:?}")]
    WrongFormat(String),
}

/// One generator output step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum GanStep {
    /// Scalar residual of a numeric column, tanh head.
    NumericV { column: usize },
    /// Mixture responsibilities of a numeric column, softmax head.
    NumericU { column: usize, m: usize },
    /// Label distribution of a categorical column, softmax head.
    Categorical { column: usize, n_labels: usize },
}

impl GanStep {
    pub fn width(&self) -> usize {
        match self {
            GanStep::NumericV { .. } => 1,
            GanStep::NumericU { m, .. } => *m,
            GanStep::Categorical { n_labels, .. } => *n_labels,
        }
    }
}

/// Ordered output plan shared by encoding, generation, and decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanSchema {
    /// Feature columns in dataset order (no label column).
    pub columns: Vec<Column>,
    pub steps: Vec<GanStep>,
}

impl GanSchema {
    pub fn encoded_width(&self) -> usize {
        self.steps.iter().map(GanStep::width).sum()
    }
}

/// Derives the step plan from the feature columns: each numeric column gets a
/// v step then a u step (width = its fitted component count), each
/// categorical column one softmax step over its labels.
pub fn build_schema(
    columns: &[Column],
    gmms: &[Option<GmmColumnModel>],
) -> Result<GanSchema, GanError> {
    if columns.len() != gmms.len() {
        return Err(GanError::SchemaMismatch(format!(
            "{} columns but {} mixture slots",
            columns.len(),
            gmms.len()
        )));
    }
    let mut steps = Vec::new();
    for (idx, (col, gmm)) in columns.iter().zip(gmms).enumerate() {
        match (&col.kind, gmm) {
            (ColumnKind::Numeric, Some(model)) => {
                steps.push(GanStep::NumericV { column: idx });
                steps.push(GanStep::NumericU { column: idx, m: model.m });
            }
            (ColumnKind::Categorical { labels }, None) => {
                steps.push(GanStep::Categorical { column: idx, n_labels: labels.len() });
            }
            (ColumnKind::Numeric, None) => {
                return Err(GanError::SchemaMismatch(format!(
                    "numeric column {:?} has no fitted mixture",
                    col.name
                )));
            }
            (ColumnKind::Categorical { .. }, Some(_)) => {
                return Err(GanError::SchemaMismatch(format!(
                    "categorical column {:?} has a mixture model",
                    col.name
                )));
            }
            (ColumnKind::Label, _) => {
                return Err(GanError::SchemaMismatch(
                    "label column cannot be generated".to_string(),
                ));
            }
        }
    }
    Ok(GanSchema { columns: columns.to_vec(), steps })
}

/// Fits one mixture per numeric feature column, in parallel; categorical
/// columns get `None`. Column `i` uses seed `seed + i`.
pub fn fit_column_models(
    data: &Dataset,
    m: usize,
    seed: u64,
) -> Result<Vec<Option<GmmColumnModel>>, GmmError> {
    let columns = data.feature_columns();
    let specs: Vec<(usize, String, bool)> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.name.clone(), c.kind == ColumnKind::Numeric))
        .collect();
    specs
        .par_iter()
        .map(|(i, name, numeric)| {
            if !numeric {
                return Ok(None);
            }
            let values = data.column_values(*i);
            fit_named(name, &values, m, seed.wrapping_add(*i as u64), 200, 1e-8).map(Some)
        })
        .collect()
}

/// Encodes one record: numeric columns through their mixture transform,
/// categorical columns as one-hot plus uniform noise in `[0, γ]` with
/// `γ = cat_noise / label count`, renormalized to sum 1.
pub fn encode_row(
    record: &FlowRecord,
    schema: &GanSchema,
    gmms: &[Option<GmmColumnModel>],
    cat_noise: f64,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<f64>, GanError> {
    if record.features.len() != schema.columns.len() {
        return Err(GanError::SchemaMismatch(format!(
            "record has {} features, schema has {} columns",
            record.features.len(),
            schema.columns.len()
        )));
    }
    let mut out = Vec::with_capacity(schema.encoded_width());
    for (idx, col) in schema.columns.iter().enumerate() {
        match &col.kind {
            ColumnKind::Numeric => {
                let model = gmms[idx].as_ref().expect("schema guarantees a fitted mixture");
                let nv = model.transform(record.features[idx]);
                out.push(nv.v);
                out.extend_from_slice(&nv.u);
            }
            ColumnKind::Categorical { labels } => {
                let hot = record.features[idx] as usize;
                if hot >= labels.len() {
                    return Err(GanError::SchemaMismatch(format!(
                        "column {:?} index {} out of {} labels",
                        col.name,
                        hot,
                        labels.len()
                    )));
                }
                let gamma = cat_noise / labels.len() as f64;
                let mut block = vec![0.0f64; labels.len()];
                block[hot] = 1.0;
                if gamma > 0.0 {
                    for slot in &mut block {
                        *slot += rng.gen_range(0.0..gamma);
                    }
                }
                let sum: f64 = block.iter().sum();
                for slot in &mut block {
                    *slot /= sum;
                }
                out.extend_from_slice(&block);
            }
            ColumnKind::Label => unreachable!("build_schema rejects label columns"),
        }
    }
    Ok(out)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Decodes one encoded row back to feature space; the label is always
/// malicious because the generator is trained on attack rows only.
pub fn decode_row(
    encoded: &[f64],
    schema: &GanSchema,
    gmms: &[Option<GmmColumnModel>],
) -> FlowRecord {
    let mut features = vec![0.0f64; schema.columns.len()];
    let mut offset = 0usize;
    let mut pending_v = 0.0f64;
    for step in &schema.steps {
        let width = step.width();
        let block = &encoded[offset..offset + width];
        offset += width;
        match step {
            GanStep::NumericV { .. } => pending_v = block[0],
            GanStep::NumericU { column, .. } => {
                let model = gmms[*column].as_ref().expect("numeric column has a mixture");
                let nv = NormalizedValue { v: pending_v, u: block.to_vec() };
                features[*column] = model.inverse_transform(&nv);
            }
            GanStep::Categorical { column, .. } => {
                features[*column] = argmax(block) as f64;
            }
        }
    }
    FlowRecord::new(features, 1)
}

/// Single-row generation; pure function of `(z, params)`.
pub fn generate(
    z: &[f64],
    params: &GeneratorParams,
    schema: &GanSchema,
) -> Result<Vec<f64>, GanError> {
    if z.len() != params.z_dim {
        return Err(GanError::SchemaMismatch(format!(
            "noise has {} dims, generator expects {}",
            z.len(),
            params.z_dim
        )));
    }
    let zmat = Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("row shape");
    let (encoded, _) = params.forward(&zmat, schema);
    Ok(encoded.row(0).to_vec())
}

/// Encoded and decoded synthetic rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticBatch {
    pub encoded: Vec<Vec<f64>>,
    pub rows: Vec<FlowRecord>,
}

impl SyntheticBatch {
    /// Wraps the decoded rows as a dataset with the generating schema plus a
    /// label column.
    pub fn to_dataset(&self, schema: &GanSchema) -> Dataset {
        let mut columns = schema.columns.clone();
        columns.push(Column::label("Label"));
        Dataset::from_rows(columns, self.rows.clone())
    }
}

/// Draws `n` rows from the generator, decoding each one. Noise is standard
/// normal from a ChaCha stream, so a fixed seed reproduces the batch.
pub fn sample_rows(
    n: usize,
    params: &GeneratorParams,
    gmms: &[Option<GmmColumnModel>],
    schema: &GanSchema,
    seed: u64,
) -> SyntheticBatch {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut encoded = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut remaining = n;
    while remaining > 0 {
        let chunk = remaining.min(512);
        let z = Array2::from_shape_fn((chunk, params.z_dim), |_| rng.sample(StandardNormal));
        let (batch, _) = params.forward(&z, schema);
        for row in batch.rows() {
            let enc = row.to_vec();
            rows.push(decode_row(&enc, schema, gmms));
            encoded.push(enc);
        }
        remaining -= chunk;
    }
    SyntheticBatch { encoded, rows }
}

/// Loss flavor used by training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Critic with weight clipping, adaptive per-parameter steps.
    Wgan,
    /// Real/fake cross-entropy with momentum descent.
    Standard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    /// Critic weights clamp to `[-clip_c, clip_c]` after every update.
    pub clip_c: f64,
    pub critic_steps: usize,
    pub d_lr: f64,
    pub g_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub z_dim: usize,
    pub hidden: usize,
    /// Critic hidden layer widths.
    pub d_hidden: Vec<usize>,
    /// Numerator of the categorical noise amplitude γ = cat_noise / |labels|.
    pub cat_noise: f64,
    pub use_attention: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_mode: LossMode::Wgan,
            clip_c: 0.01,
            critic_steps: 5,
            d_lr: 5e-5,
            g_lr: 5e-5,
            batch_size: 256,
            epochs: 300,
            z_dim: 100,
            hidden: 100,
            d_hidden: vec![100],
            cat_noise: 0.2,
            use_attention: true,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if self.clip_c <= 0.0 {
            return Err(GanError::BadConfig(format!("clip_c must be > 0, got {}", self.clip_c)));
        }
        if self.critic_steps == 0 {
            return Err(GanError::BadConfig("critic_steps must be at least 1".to_string()));
        }
        if self.batch_size < 2 {
            return Err(GanError::BadConfig(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.z_dim == 0 || self.hidden == 0 {
            return Err(GanError::BadConfig("z_dim and hidden must be positive".to_string()));
        }
        Ok(())
    }
}

/// Versioned document bundling everything needed to regenerate samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanModel {
    pub format: String,
    pub schema: GanSchema,
    pub gmms: Vec<Option<GmmColumnModel>>,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    pub config: TrainConfig,
    pub loss_history: Vec<LossRecord>,
}

pub fn save_gan(model: &GanModel, path: &Path) -> Result<(), GanError> {
    let json = serde_json::to_string(model)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_gan(path: &Path) -> Result<GanModel, GanError> {
    let json = std::fs::read_to_string(path)?;
    let model: GanModel = serde_json::from_str(&json)?;
    if model.format != GAN_FORMAT {
        return Err(GanError::WrongFormat(model.format));
    }
    Ok(model)
}

/// Compares hand-derived gradients against five-point finite differences on
/// `n_probes` randomly chosen weights. Returns the largest relative error.
/// The stencil keeps truncation at O(step^4); the error denominator is
/// floored at 1e-5 because below that scale the difference quotient is
/// roundoff-limited and a ratio would amplify noise, not signal.
pub fn gradient_check<P, L>(
    params: &mut P,
    analytic: &P,
    mut loss: L,
    n_probes: usize,
    seed: u64,
) -> f64
where
    P: FlatParams,
    L: FnMut(&P) -> f64,
{
    const STEP: f64 = 1e-5;
    let lens: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
    let total: usize = lens.iter().sum();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, total, n_probes.min(total));

    let locate = |flat: usize| -> (usize, usize) {
        let mut remaining = flat;
        for (tensor, &len) in lens.iter().enumerate() {
            if remaining < len {
                return (tensor, remaining);
            }
            remaining -= len;
        }
        unreachable!("flat index within total");
    };

    let mut max_rel = 0.0f64;
    for flat in picks {
        let (tensor, offset) = locate(flat);
        let original = params.slices()[tensor][offset];

        let mut probe = |delta: f64| {
            params.slices_mut()[tensor][offset] = original + delta;
            loss(params)
        };
        let up1 = probe(STEP);
        let down1 = probe(-STEP);
        let up2 = probe(2.0 * STEP);
        let down2 = probe(-2.0 * STEP);
        params.slices_mut()[tensor][offset] = original;

        let numeric = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * STEP);
        let a = analytic.slices()[tensor][offset];
        let scale = a.abs().max(numeric.abs()).max(1e-5);
        max_rel = max_rel.max((a - numeric).abs() / scale);
    }
    max_rel
}
