//! Measures how synthetic attack rows fare against the trained detectors:
//! per-model evasion rates with full confusion counts, plus per-column KS
//! distances between the synthetic rows and a real malicious reference.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{evaluate, ConfusionMatrix, Predictor, TrainedClassifier};
use crate::ingest::{Dataset, FlowRecord};

/// Format tag for persisted evasion reports.
pub const EVASION_FORMAT: &str = "ganids.evasion.v1";

#[derive(Debug, Error)]
pub enum EvasionError {
    #[error("synthetic batch is empty")]
    EmptyBatch,
    #[error("KS needs two non-empty samples")]
    EmptySample,
    #[error("feature slice mismatch: {0}")]
    SliceMismatch(String),
    #[error("report file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("report document error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("evasion document has format {0:?}, expected {EVASION_FORMAT:?}")]
    WrongFormat(String),
}

/// One detector's outcome on the synthetic batch. All rows are malicious, so
/// the confusion matrix has empty benign-truth cells and
/// `evaded + detected = n_synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvasion {
    pub model: String,
    /// Fraction of synthetic rows predicted benign.
    pub evasion_rate: f64,
    /// Complement of the evasion rate; the two sum to 1 exactly.
    pub detection_rate: f64,
    pub evaded: usize,
    pub detected: usize,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnKs {
    pub column: String,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvasionReport {
    pub format: String,
    pub n_synthetic: usize,
    pub models: Vec<ModelEvasion>,
    /// Distance to the real malicious reference, one entry per feature
    /// column in schema order; categorical columns compare label indices.
    pub column_ks: Vec<ColumnKs>,
}

/// Fraction of rows the detector calls benign; exact count arithmetic.
pub fn evasion_rate<P>(model: &P, rows: &[FlowRecord]) -> Result<f64, EvasionError>
where
    P: Predictor + ?Sized,
{
    if rows.is_empty() {
        return Err(EvasionError::EmptyBatch);
    }
    let evaded = rows.iter().filter(|r| model.predict(&r.features) == 0).count();
    Ok(evaded as f64 / rows.len() as f64)
}

/// Two-sample Kolmogorov–Smirnov statistic: the largest gap between the two
/// empirical CDFs. Sorted-merge sweep; ties advance both sides before the gap
/// is measured.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, EvasionError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvasionError::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

fn check_slice(models: &[&TrainedClassifier], synthetic: &Dataset, reference: &Dataset) -> Result<(), EvasionError> {
    let d = synthetic.n_features();
    for model in models {
        if model.n_features() != d {
            return Err(EvasionError::SliceMismatch(format!(
                "{} expects {} features, synthetic rows have {}",
                model.name(),
                model.n_features(),
                d
            )));
        }
    }
    let syn_names = synthetic.feature_names();
    let ref_names = reference.feature_names();
    if syn_names != ref_names {
        return Err(EvasionError::SliceMismatch(format!(
            "synthetic columns {syn_names:?} differ from reference columns {ref_names:?}"
        )));
    }
    Ok(())
}

/// Scores the synthetic batch against every detector and measures per-column
/// KS against the real malicious reference (the generator's own training
/// slice, so the distances read as generator fidelity).
pub fn cross_model_report(
    models: &[&TrainedClassifier],
    synthetic: &Dataset,
    reference: &Dataset,
) -> Result<EvasionReport, EvasionError> {
    if synthetic.rows.is_empty() {
        return Err(EvasionError::EmptyBatch);
    }
    check_slice(models, synthetic, reference)?;

    let mut entries = Vec::with_capacity(models.len());
    for model in models {
        let eval = evaluate(*model, synthetic).expect("batch is non-empty");
        let confusion = eval.confusion;
        let rate = confusion.fn_ as f64 / synthetic.rows.len() as f64;
        entries.push(ModelEvasion {
            model: model.name().to_string(),
            evasion_rate: rate,
            detection_rate: 1.0 - rate,
            evaded: confusion.fn_,
            detected: confusion.tp,
            confusion,
        });
    }

    let mut column_ks = Vec::new();
    for (idx, name) in synthetic.feature_names().iter().enumerate() {
        let ks = ks_statistic(&synthetic.column_values(idx), &reference.column_values(idx))?;
        column_ks.push(ColumnKs { column: name.to_string(), ks });
    }

    Ok(EvasionReport {
        format: EVASION_FORMAT.to_string(),
        n_synthetic: synthetic.rows.len(),
        models: entries,
        column_ks,
    })
}

impl EvasionReport {
    /// Plain-text table: one line per model, then the per-column distances.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "evasion over {} synthetic rows", self.n_synthetic);
        let width = self.models.iter().map(|m| m.model.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<width$}  evasion  detected  evaded", "model");
        for m in &self.models {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.4}  {:>8}  {:>6}",
                m.model, m.evasion_rate, m.detected, m.evaded
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "column KS vs real malicious reference");
        for c in &self.column_ks {
            let _ = writeln!(out, "  {:<24} {:.4}", c.column, c.ks);
        }
        out
    }
}

pub fn save_report(report: &EvasionReport, path: &Path) -> Result<(), EvasionError> {
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvasionReport, EvasionError> {
    let json = std::fs::read_to_string(path)?;
    let report: EvasionReport = serde_json::from_str(&json)?;
    if report.format != EVASION_FORMAT {
        return Err(EvasionError::WrongFormat(report.format));
    }
    Ok(report)
}
