//! Deterministic synthetic corpora: a CICIDS-flavoured flow CSV (with the
//! usual header whitespace and a tail of broken rows) and a two-mode numeric
//! table for generator fidelity checks. Everything is a pure function of the
//! seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use std::fmt::Write as _;
use std::path::Path;

use crate::ingest::{Column, Dataset, FlowRecord};

pub const BENIGN_IPS: [&str; 3] = ["10.0.0.1", "10.0.0.2", "10.0.0.3"];
pub const ATTACKER_IPS: [&str; 2] = ["172.16.0.66", "172.16.0.99"];

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    /// Rows that survive cleaning.
    pub n_rows: usize,
    /// Append eight rows with non-finite or blank numeric cells.
    pub dirty_rows: bool,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec { n_rows: 2000, dirty_rows: true, seed: 42 }
    }
}

fn gauss(rng: &mut ChaCha20Rng, mean: f64, std: f64, floor: f64) -> f64 {
    let draw: f64 = rng.sample(StandardNormal);
    (mean + std * draw).max(floor)
}

/// 3 benign rows out of every 5; attacks are Hulk-heavy with a GoldenEye
/// sprinkle, mirroring the label skew of the Wednesday capture.
fn label_of(i: usize) -> &'static str {
    if i % 5 < 3 {
        "BENIGN"
    } else if i % 20 == 4 {
        "DoS GoldenEye"
    } else {
        "DoS Hulk"
    }
}

/// Flow CSV with CICIDS-style headers (leading spaces survive until the
/// loader trims them). Benign and attack traffic separate strongly on
/// packet size; attack durations are bimodal so a per-column mixture has
/// real modes to find.
pub fn flows_csv(spec: &FixtureSpec) -> String {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut out = String::new();
    out.push_str(
        "Flow Duration, Total Fwd Packets, Average Packet Size, Flow Packets/s, Source IP, Label\n",
    );

    for i in 0..spec.n_rows {
        let label = label_of(i);
        let (duration, fwd, size, rate, ip) = if label == "BENIGN" {
            (
                gauss(&mut rng, 5.0e4, 1.0e4, 1.0),
                gauss(&mut rng, 10.0, 3.0, 1.0).round(),
                gauss(&mut rng, 120.0, 20.0, 20.0),
                gauss(&mut rng, 50.0, 15.0, 0.1),
                BENIGN_IPS[rng.gen_range(0..BENIGN_IPS.len())],
            )
        } else {
            let duration = if rng.gen_bool(0.5) {
                gauss(&mut rng, 2.0e5, 3.0e4, 1.0)
            } else {
                gauss(&mut rng, 8.0e5, 5.0e4, 1.0)
            };
            (
                duration,
                gauss(&mut rng, 150.0, 30.0, 1.0).round(),
                gauss(&mut rng, 900.0, 60.0, 100.0),
                gauss(&mut rng, 400.0, 120.0, 0.1),
                ATTACKER_IPS[rng.gen_range(0..ATTACKER_IPS.len())],
            )
        };
        let _ = writeln!(
            out,
            "{duration:.0},{fwd:.0},{size:.2},{rate:.4},{ip},{label}"
        );
    }

    if spec.dirty_rows {
        // Every one of these dies on a numeric cell, so the loader's drop
        // counter lands on exactly 8.
        out.push_str("NaN,10,120.00,50.0000,10.0.0.1,BENIGN\n");
        out.push_str("200000,150,900.00,Infinity,172.16.0.66,DoS Hulk\n");
        out.push_str("50000,10,,50.0000,10.0.0.2,BENIGN\n");
        out.push_str("inf,150,900.00,400.0000,172.16.0.99,DoS Hulk\n");
        out.push_str("50000,10,120.00,-Infinity,10.0.0.3,BENIGN\n");
        out.push_str(",150,900.00,400.0000,172.16.0.66,DoS GoldenEye\n");
        out.push_str("50000,10,nan,50.0000,10.0.0.1,BENIGN\n");
        out.push_str("50000, ,120.00,50.0000,10.0.0.2,BENIGN\n");
    }
    out
}

pub fn write_flows_csv(spec: &FixtureSpec, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, flows_csv(spec))
}

/// All-malicious table with two correlated mode pairs: x at 0 or 10, y at −5
/// or 5, σ 0.5 each, alternating rows.
pub fn two_mode_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let columns =
        vec![Column::numeric("x"), Column::numeric("y"), Column::label("Label")];
    let rows = (0..n)
        .map(|i| {
            let hi = i % 2 == 1;
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            let x = if hi { 10.0 } else { 0.0 } + 0.5 * dx;
            let y = if hi { 5.0 } else { -5.0 } + 0.5 * dy;
            FlowRecord::new(vec![x, y], 1)
        })
        .collect();
    Dataset::from_rows(columns, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{clean, load_csv, ColumnKind, LabelMap};

    #[test]
    fn same_seed_reproduces_the_csv() {
        let spec = FixtureSpec::default();
        assert_eq!(flows_csv(&spec), flows_csv(&spec));
        let other = FixtureSpec { seed: 43, ..FixtureSpec::default() };
        assert_ne!(flows_csv(&spec), flows_csv(&other));
    }

    #[test]
    fn fixture_cleans_to_exact_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        write_flows_csv(&FixtureSpec::default(), &path).unwrap();
        let raw = load_csv(&path, None).unwrap();
        let data = clean(raw, &LabelMap::cicids_dos()).unwrap();

        assert_eq!(data.rows.len(), 2000);
        assert_eq!(data.dropped_rows, 8);
        assert_eq!(data.class_counts, [1200, 800]);
        assert_eq!(data.raw_label_counts["BENIGN"], 1200);
        assert_eq!(data.raw_label_counts["DoS Hulk"], 700);
        assert_eq!(data.raw_label_counts["DoS GoldenEye"], 100);
    }

    #[test]
    fn headers_trim_to_the_expected_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        write_flows_csv(&FixtureSpec::default(), &path).unwrap();
        let raw = load_csv(&path, None).unwrap();
        let data = clean(raw, &LabelMap::cicids_dos()).unwrap();

        assert_eq!(
            data.feature_names(),
            vec![
                "Flow Duration",
                "Total Fwd Packets",
                "Average Packet Size",
                "Flow Packets/s",
                "Source IP"
            ]
        );
        let ip = &data.schema[4];
        match &ip.kind {
            ColumnKind::Categorical { labels } => {
                let mut expected: Vec<String> = BENIGN_IPS
                    .iter()
                    .chain(ATTACKER_IPS.iter())
                    .map(|s| s.to_string())
                    .collect();
                expected.sort();
                assert_eq!(labels, &expected);
            }
            other => panic!("Source IP should be categorical, got {other:?}"),
        }
    }

    #[test]
    fn packet_size_separates_the_classes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        write_flows_csv(&FixtureSpec::default(), &path).unwrap();
        let raw = load_csv(&path, None).unwrap();
        let data = clean(raw, &LabelMap::cicids_dos()).unwrap();

        let size_idx = 2;
        let max_benign = data
            .rows
            .iter()
            .filter(|r| r.label == 0)
            .map(|r| r.features[size_idx])
            .fold(f64::NEG_INFINITY, f64::max);
        let min_attack = data
            .rows
            .iter()
            .filter(|r| r.label == 1)
            .map(|r| r.features[size_idx])
            .fold(f64::INFINITY, f64::min);
        assert!(
            max_benign < min_attack,
            "benign max {max_benign} should sit below attack min {min_attack}"
        );
    }

    #[test]
    fn two_mode_table_hits_its_modes() {
        let data = two_mode_dataset(2000, 7);
        assert_eq!(data.rows.len(), 2000);
        assert!(data.rows.iter().all(|r| r.label == 1));

        let lo: Vec<f64> =
            data.rows.iter().step_by(2).map(|r| r.features[0]).collect();
        let hi: Vec<f64> =
            data.rows.iter().skip(1).step_by(2).map(|r| r.features[0]).collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean(&lo) - 0.0).abs() < 0.1);
        assert!((mean(&hi) - 10.0).abs() < 0.1);

        let y_lo: Vec<f64> =
            data.rows.iter().step_by(2).map(|r| r.features[1]).collect();
        assert!((mean(&y_lo) + 5.0).abs() < 0.1);
    }
}
