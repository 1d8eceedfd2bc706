//! Confusion-matrix evaluation and the per-class metric table.
//!
//! Class 1 (malicious) is the positive class. Zero-denominator rates are
//! reported as 0 and flagged rather than NaN.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Predictor};
use crate::ingest::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

/// Precision/recall/F1 for one class (or an average row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Index 0 = benign metrics, index 1 = malicious metrics.
    pub per_class: [ClassMetrics; 2],
    pub macro_avg: ClassMetrics,
    /// Averages weighted by test support.
    pub weighted_avg: ClassMetrics,
    /// Zero-denominator conventions applied, if any.
    pub flags: Vec<String>,
}

/// Both evaluation artifacts for one model on one test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
}

fn ratio(num: usize, den: usize, what: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(format!("{what} has a zero denominator, reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64, what: &str, flags: &mut Vec<String>) -> f64 {
    if precision + recall == 0.0 {
        flags.push(format!("{what} F1 has a zero denominator, reported as 0"));
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Scores `model` on every row of `test`.
pub fn evaluate<P>(model: &P, test: &Dataset) -> Result<Evaluation, ClassifierError>
where
    P: Predictor + ?Sized,
{
    if test.rows.is_empty() {
        return Err(ClassifierError::EmptyTest);
    }
    let mut cm = ConfusionMatrix::default();
    for row in &test.rows {
        match (model.predict(&row.features), row.label) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (0, 1) => cm.fn_ += 1,
            (p, l) => unreachable!("binary labels only, got prediction {p} label {l}"),
        }
    }
    Ok(Evaluation { report: report_from_confusion(&cm), confusion: cm })
}

/// Builds the metric table from counts alone.
pub fn report_from_confusion(cm: &ConfusionMatrix) -> MetricsReport {
    let mut flags = Vec::new();
    let support = [cm.tn + cm.fp, cm.tp + cm.fn_];
    let total = cm.total();

    // Class 1 is positive; class 0 metrics treat benign as the positive side.
    let precision1 = ratio(cm.tp, cm.tp + cm.fp, "class 1 precision", &mut flags);
    let recall1 = ratio(cm.tp, cm.tp + cm.fn_, "class 1 recall", &mut flags);
    let precision0 = ratio(cm.tn, cm.tn + cm.fn_, "class 0 precision", &mut flags);
    let recall0 = ratio(cm.tn, cm.tn + cm.fp, "class 0 recall", &mut flags);
    let f1_1 = f1(precision1, recall1, "class 1", &mut flags);
    let f1_0 = f1(precision0, recall0, "class 0", &mut flags);

    let per_class = [
        ClassMetrics { precision: precision0, recall: recall0, f1: f1_0, support: support[0] },
        ClassMetrics { precision: precision1, recall: recall1, f1: f1_1, support: support[1] },
    ];

    let macro_avg = ClassMetrics {
        precision: (precision0 + precision1) / 2.0,
        recall: (recall0 + recall1) / 2.0,
        f1: (f1_0 + f1_1) / 2.0,
        support: total,
    };
    let w = [support[0] as f64 / total as f64, support[1] as f64 / total as f64];
    let weighted_avg = ClassMetrics {
        precision: w[0] * precision0 + w[1] * precision1,
        recall: w[0] * recall0 + w[1] * recall1,
        f1: w[0] * f1_0 + w[1] * f1_1,
        support: total,
    };

    MetricsReport { accuracy: cm.accuracy(), per_class, macro_avg, weighted_avg, flags }
}

impl MetricsReport {
    /// Text table with per-class rows, accuracy, macro and weighted averages.
    pub fn render(&self) -> String {
        let total = self.macro_avg.support;
        let row = |label: &str, m: &ClassMetrics| {
            format!(
                "{label:>12} {:>10.4} {:>9.4} {:>9.4} {:>9}\n",
                m.precision, m.recall, m.f1, m.support
            )
        };
        let mut out = String::new();
        out.push_str(&format!(
            "{:>12} {:>10} {:>9} {:>9} {:>9}\n\n",
            "", "precision", "recall", "f1-score", "support"
        ));
        out.push_str(&row("0", &self.per_class[0]));
        out.push_str(&row("1", &self.per_class[1]));
        out.push('\n');
        out.push_str(&format!(
            "{:>12} {:>10} {:>9} {:>9.4} {:>9}\n",
            "accuracy", "", "", self.accuracy, total
        ));
        out.push_str(&row("macro avg", &self.macro_avg));
        out.push_str(&row("weighted avg", &self.weighted_avg));
        out
    }
}

/// Orders model indices by ascending false negatives, breaking ties with
/// higher accuracy, then lower index.
pub fn rank_by_false_negatives(entries: &[(ConfusionMatrix, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&a, &b| {
        entries[a]
            .0
            .fn_
            .cmp(&entries[b].0.fn_)
            .then(entries[b].1.partial_cmp(&entries[a].1).unwrap())
            .then(a.cmp(&b))
    });
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Column, Dataset, FlowRecord};
    use proptest::prelude::*;

    /// Scores the first feature directly; lets tests pin predictions per row.
    struct PassThrough;

    impl Predictor for PassThrough {
        fn proba_one(&self, features: &[f64]) -> f64 {
            features[0]
        }
    }

    fn labeled(pred_and_label: &[(f64, u8)]) -> Dataset {
        let schema = vec![Column::numeric("p"), Column::label("Label")];
        let rows =
            pred_and_label.iter().map(|&(p, l)| FlowRecord::new(vec![p], l)).collect();
        Dataset::from_rows(schema, rows)
    }

    #[test]
    fn hand_worked_example() {
        // predictions [1,0,1,1] vs labels [1,0,0,1]
        let data = labeled(&[(1.0, 1), (0.0, 0), (1.0, 0), (1.0, 1)]);
        let eval = evaluate(&PassThrough, &data).unwrap();
        assert_eq!(eval.confusion, ConfusionMatrix { tp: 2, fp: 1, tn: 1, fn_: 0 });
        assert_eq!(eval.report.accuracy, 0.75);
        assert!((eval.report.per_class[1].precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(eval.report.per_class[1].recall, 1.0);
    }

    #[test]
    fn perfect_predictions() {
        let data = labeled(&[(1.0, 1), (0.0, 0), (0.0, 0), (1.0, 1)]);
        let eval = evaluate(&PassThrough, &data).unwrap();
        assert_eq!(eval.report.accuracy, 1.0);
        assert_eq!(eval.confusion.fp, 0);
        assert_eq!(eval.confusion.fn_, 0);
        assert!(eval.report.flags.is_empty());
    }

    #[test]
    fn all_negative_predictions_flag_precision() {
        let data = labeled(&[(0.0, 1), (0.0, 0), (0.0, 1)]);
        let eval = evaluate(&PassThrough, &data).unwrap();
        assert_eq!(eval.report.per_class[1].precision, 0.0);
        assert!(!eval.report.flags.is_empty());
        assert!(eval.report.flags.iter().any(|f| f.contains("class 1 precision")));
    }

    #[test]
    fn supports_sum_to_total() {
        let data = labeled(&[(1.0, 1), (0.0, 0), (1.0, 0), (0.0, 1), (1.0, 1)]);
        let eval = evaluate(&PassThrough, &data).unwrap();
        let total: usize = eval.report.per_class.iter().map(|c| c.support).sum();
        assert_eq!(total, data.rows.len());
        assert_eq!(eval.confusion.total(), data.rows.len());
    }

    #[test]
    fn weighted_average_uses_support_weights() {
        let data = labeled(&[(1.0, 1), (1.0, 1), (1.0, 1), (0.0, 0), (1.0, 0), (0.0, 1)]);
        let eval = evaluate(&PassThrough, &data).unwrap();
        let r = &eval.report;
        let total = r.macro_avg.support as f64;
        let expect = (r.per_class[0].support as f64 * r.per_class[0].precision
            + r.per_class[1].support as f64 * r.per_class[1].precision)
            / total;
        assert!((r.weighted_avg.precision - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_test_is_rejected() {
        let schema = vec![Column::numeric("p"), Column::label("Label")];
        let data = Dataset::from_rows(schema, vec![]);
        assert!(matches!(evaluate(&PassThrough, &data), Err(ClassifierError::EmptyTest)));
    }

    #[test]
    fn render_contains_all_rows() {
        let cm = ConfusionMatrix { tp: 50, fp: 5, tn: 40, fn_: 5 };
        let table = report_from_confusion(&cm).render();
        for needle in ["precision", "recall", "f1-score", "support", "accuracy", "macro avg", "weighted avg"] {
            assert!(table.contains(needle), "missing {needle:?} in:\n{table}");
        }
    }

    #[test]
    fn ranking_prefers_fewer_false_negatives() {
        let entries = vec![
            (ConfusionMatrix { tp: 8, fp: 0, tn: 10, fn_: 2 }, 0.90),
            (ConfusionMatrix { tp: 9, fp: 3, tn: 7, fn_: 1 }, 0.80),
            (ConfusionMatrix { tp: 9, fp: 1, tn: 9, fn_: 1 }, 0.90),
        ];
        assert_eq!(rank_by_false_negatives(&entries), vec![2, 1, 0]);
    }

    proptest! {
        /// accuracy is exactly (tp+tn)/total and every rate sits in [0,1].
        #[test]
        fn rates_are_bounded(tp in 0usize..40, fp in 0usize..40, tn in 0usize..40, fn_ in 0usize..40) {
            prop_assume!(tp + fp + tn + fn_ > 0);
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            let report = report_from_confusion(&cm);
            prop_assert_eq!(report.accuracy, (tp + tn) as f64 / cm.total() as f64);
            for c in report.per_class.iter().chain([&report.macro_avg, &report.weighted_avg]) {
                for rate in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&rate));
                }
            }
        }
    }
}
