//! Drains scored traffic into a bulk-indexable NDJSON file and produces the
//! dashboard-style summary: record totals, top source addresses, average
//! packet size, and a predictions-over-time series.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::stream::{Envelope, Payload};

/// Default target index for bulk actions.
pub const DEFAULT_INDEX: &str = "attack_index";
/// Default dashboard time-bucket width.
pub const DEFAULT_BUCKET_MS: u64 = 10_000;
/// Default number of source addresses listed.
pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("bulk file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bulk document error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize)]
struct IndexRef<'a> {
    #[serde(rename = "_index")]
    index: &'a str,
}

#[derive(Serialize)]
struct ActionLine<'a> {
    index: IndexRef<'a>,
}

/// One bulk entry: the action line naming the index, then the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkAction {
    pub index: String,
    pub document: Payload,
}

impl BulkAction {
    /// Document = payload plus the envelope timestamp (payload keys win on
    /// collision, so parsing the document recovers the payload exactly).
    pub fn from_envelope(envelope: &Envelope, index: &str) -> Self {
        let mut document = envelope.payload.clone();
        document.entry("timestamp".to_string()).or_insert_with(|| envelope.timestamp.into());
        BulkAction { index: index.to_string(), document }
    }

    /// Exactly two newline-terminated NDJSON lines.
    pub fn to_ndjson(&self) -> Result<String, SinkError> {
        let action = serde_json::to_string(&ActionLine { index: IndexRef { index: &self.index } })?;
        let document = serde_json::to_string(&self.document)?;
        Ok(format!("{action}\n{document}\n"))
    }
}

/// Writes every message as an action/document line pair, atomically: the
/// file appears complete or not at all. Returns the message count.
pub fn write_bulk(messages: &[Envelope], index: &str, out: &Path) -> Result<usize, SinkError> {
    let tmp = out.with_extension("ndjson.tmp");
    let result = (|| -> Result<(), SinkError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        for envelope in messages {
            let pair = BulkAction::from_envelope(envelope, index).to_ndjson()?;
            file.write_all(pair.as_bytes())?;
        }
        file.flush()?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    std::fs::rename(&tmp, out)?;
    Ok(messages.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpShare {
    pub source_ip: String,
    pub count: u64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBucket {
    pub start_ms: u64,
    pub count: u64,
}

/// Aggregates the dashboard reads on: totals, who attacks, how big the
/// packets are, and when the predictions arrive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DashboardSummary {
    pub total: u64,
    /// Top addresses by count; ties break by address. Shares sum to ≤ 1.
    pub top_sources: Vec<IpShare>,
    /// Mean of "Average Packet Size" over the messages that carry it.
    pub avg_packet_size: Option<f64>,
    pub packet_size_count: u64,
    pub bucket_ms: u64,
    /// Non-empty buckets in time order; counts sum to `total`.
    pub buckets: Vec<TimeBucket>,
}

fn source_of(payload: &Payload) -> String {
    match payload.get("Source IP") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => "unknown".to_string(),
        Some(other) => other.to_string(),
    }
}

/// Folds the drained messages into a summary. `bucket_ms` of 0 is treated
/// as 1 ms so bucketing always terminates.
pub fn summarize(messages: &[Envelope], bucket_ms: u64, top_n: usize) -> DashboardSummary {
    let bucket_ms = bucket_ms.max(1);
    let total = messages.len() as u64;

    let mut by_source: std::collections::BTreeMap<String, u64> = std::collections::BTreeMap::new();
    let mut by_bucket: std::collections::BTreeMap<u64, u64> = std::collections::BTreeMap::new();
    let mut size_sum = 0.0f64;
    let mut size_count = 0u64;
    for envelope in messages {
        *by_source.entry(source_of(&envelope.payload)).or_insert(0) += 1;
        let start = (envelope.timestamp / bucket_ms) * bucket_ms;
        *by_bucket.entry(start).or_insert(0) += 1;
        if let Some(size) = envelope.payload.get("Average Packet Size").and_then(Value::as_f64) {
            size_sum += size;
            size_count += 1;
        }
    }

    let mut ranked: Vec<(String, u64)> = by_source.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top_sources = ranked
        .into_iter()
        .take(top_n)
        .map(|(source_ip, count)| IpShare {
            source_ip,
            count,
            share: count as f64 / total as f64,
        })
        .collect();

    DashboardSummary {
        total,
        top_sources,
        avg_packet_size: (size_count > 0).then(|| size_sum / size_count as f64),
        packet_size_count: size_count,
        bucket_ms,
        buckets: by_bucket.into_iter().map(|(start_ms, count)| TimeBucket { start_ms, count }).collect(),
    }
}

/// Deterministic plain-text layout of the summary.
pub fn render_report(summary: &DashboardSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "attack traffic summary");
    let _ = writeln!(out, "======================");
    let _ = writeln!(out, "total records: {}", summary.total);
    match summary.avg_packet_size {
        Some(avg) => {
            let _ = writeln!(
                out,
                "average packet size: {:.3} (over {} records)",
                avg, summary.packet_size_count
            );
        }
        None => {
            let _ = writeln!(out, "average packet size: n/a (no records carry the field)");
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "top source addresses");
    if summary.top_sources.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for ip in &summary.top_sources {
        let _ = writeln!(out, "  {:<18} {:>8}  {:.4}", ip.source_ip, ip.count, ip.share);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "predictions per {} ms bucket", summary.bucket_ms);
    if summary.buckets.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for bucket in &summary.buckets {
        let _ = writeln!(out, "  {:>14}  {:>8}", bucket.start_ms, bucket.count);
    }
    out
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 360.0;
const MARGIN: f64 = 40.0;

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{m}\" y=\"24\" font-family=\"monospace\" font-size=\"14\">{t}</text>\n"
        ),
        w = PLOT_W,
        h = PLOT_H,
        m = MARGIN,
        t = title
    )
}

fn bar_chart(labels_counts: &[(String, u64)], title: &str) -> String {
    let mut svg = svg_header(title);
    let max = labels_counts.iter().map(|(_, c)| *c).max().unwrap_or(0).max(1) as f64;
    let span_w = PLOT_W - 2.0 * MARGIN;
    let span_h = PLOT_H - 2.0 * MARGIN - 20.0;
    let n = labels_counts.len().max(1) as f64;
    let slot = span_w / n;
    let bar = (slot * 0.8).max(1.0);
    for (i, (label, count)) in labels_counts.iter().enumerate() {
        let h = span_h * (*count as f64 / max);
        let x = MARGIN + slot * i as f64 + (slot - bar) / 2.0;
        let y = PLOT_H - MARGIN - 20.0 - h;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar:.1}\" height=\"{h:.1}\" fill=\"#4472c4\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            x + bar / 2.0,
            PLOT_H - MARGIN - 4.0,
            label
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            x + bar / 2.0,
            y - 4.0,
            count
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Bar chart of the predictions-per-bucket series.
pub fn plot_series_svg(summary: &DashboardSummary) -> String {
    let bars: Vec<(String, u64)> = summary
        .buckets
        .iter()
        .map(|b| ((b.start_ms / summary.bucket_ms).to_string(), b.count))
        .collect();
    bar_chart(&bars, &format!("predictions per {} ms bucket", summary.bucket_ms))
}

/// Bar chart of the top source-address counts.
pub fn plot_shares_svg(summary: &DashboardSummary) -> String {
    let bars: Vec<(String, u64)> =
        summary.top_sources.iter().map(|s| (s.source_ip.clone(), s.count)).collect();
    bar_chart(&bars, "top source addresses")
}

/// Writes both plots next to each other; returns the created paths.
pub fn write_plots(summary: &DashboardSummary, dir: &Path) -> Result<Vec<std::path::PathBuf>, SinkError> {
    let series = dir.join("predictions_over_time.svg");
    let shares = dir.join("top_sources.svg");
    std::fs::write(&series, plot_series_svg(summary))?;
    std::fs::write(&shares, plot_shares_svg(summary))?;
    Ok(vec![series, shares])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn envelope(offset: u64, timestamp: u64, fields: &[(&str, Value)]) -> Envelope {
        let mut payload = Payload::new();
        for (key, value) in fields {
            payload.insert(key.to_string(), value.clone());
        }
        Envelope { topic: "GANs_raw_predictions".to_string(), offset, timestamp, payload }
    }

    fn flow(offset: u64, timestamp: u64, ip: &str, size: f64) -> Envelope {
        envelope(
            offset,
            timestamp,
            &[
                ("Source IP", json!(ip)),
                ("Average Packet Size", json!(size)),
                ("Label", json!(1)),
                ("prediction", json!(1)),
            ],
        )
    }

    #[test]
    fn zero_messages_write_an_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bulk.ndjson");
        let written = write_bulk(&[], DEFAULT_INDEX, &path).unwrap();
        assert_eq!(written, 0);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 0);
    }

    #[test]
    fn action_line_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bulk.ndjson");
        write_bulk(&[flow(0, 1_000, "10.0.0.1", 120.0)], DEFAULT_INDEX, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], r#"{"index":{"_index":"attack_index"}}"#);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn every_message_becomes_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        for n in [1usize, 17, 100] {
            let messages: Vec<Envelope> =
                (0..n).map(|i| flow(i as u64, 1_000 + i as u64, "10.0.0.1", 80.0)).collect();
            let path = dir.path().join(format!("bulk_{n}.ndjson"));
            let written = write_bulk(&messages, "attack_index", &path).unwrap();
            assert_eq!(written, n);
            let text = std::fs::read_to_string(&path).unwrap();
            assert_eq!(text.lines().count(), 2 * n);
        }
    }

    #[test]
    fn document_lines_recover_the_payloads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bulk.ndjson");
        let messages = vec![
            flow(0, 1_000, "10.0.0.1", 120.5),
            flow(1, 1_100, "172.16.0.66", 1337.25),
            envelope(2, 1_200, &[("Label", json!(1))]),
        ];
        write_bulk(&messages, DEFAULT_INDEX, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let docs: Vec<Payload> = text
            .lines()
            .skip(1)
            .step_by(2)
            .map(|line| serde_json::from_str(line).unwrap())
            .collect();
        assert_eq!(docs.len(), messages.len());
        for (doc, message) in docs.iter().zip(&messages) {
            assert_eq!(doc["timestamp"], json!(message.timestamp));
            let mut stripped = doc.clone();
            stripped.remove("timestamp");
            assert_eq!(&stripped, &message.payload);
        }
    }

    #[test]
    fn failed_writes_leave_no_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("bulk.ndjson");
        assert!(write_bulk(&[flow(0, 0, "a", 1.0)], DEFAULT_INDEX, &path).is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn empty_input_summarizes_to_zero() {
        let summary = summarize(&[], DEFAULT_BUCKET_MS, DEFAULT_TOP_N);
        assert_eq!(summary.total, 0);
        assert!(summary.top_sources.is_empty());
        assert!(summary.buckets.is_empty());
        assert_eq!(summary.avg_packet_size, None);
        let report = render_report(&summary);
        assert!(report.contains("total records: 0"));
    }

    #[test]
    fn shares_follow_hand_counts() {
        let messages = vec![
            flow(0, 0, "10.0.0.9", 10.0),
            flow(1, 1, "10.0.0.9", 20.0),
            flow(2, 2, "10.0.0.9", 30.0),
            flow(3, 3, "172.16.0.66", 40.0),
        ];
        let summary = summarize(&messages, DEFAULT_BUCKET_MS, DEFAULT_TOP_N);
        assert_eq!(summary.total, 4);
        assert_eq!(summary.top_sources.len(), 2);
        assert_eq!(summary.top_sources[0].source_ip, "10.0.0.9");
        assert_eq!(summary.top_sources[0].count, 3);
        assert_eq!(summary.top_sources[0].share, 0.75);
        assert_eq!(summary.top_sources[1].share, 0.25);
        assert_eq!(summary.avg_packet_size, Some(25.0));
        assert_eq!(summary.packet_size_count, 4);
    }

    #[test]
    fn missing_source_addresses_bucket_as_unknown() {
        let messages = vec![
            envelope(0, 0, &[("Label", json!(1))]),
            envelope(1, 1, &[("Source IP", json!(null)), ("Label", json!(1))]),
            flow(2, 2, "10.0.0.1", 5.0),
        ];
        let summary = summarize(&messages, DEFAULT_BUCKET_MS, 5);
        assert_eq!(summary.top_sources[0].source_ip, "unknown");
        assert_eq!(summary.top_sources[0].count, 2);
        // Only one message carries a packet size.
        assert_eq!(summary.packet_size_count, 1);
        assert_eq!(summary.avg_packet_size, Some(5.0));
    }

    #[test]
    fn top_n_truncates_with_deterministic_ties() {
        let messages: Vec<Envelope> = ["c", "a", "b", "d"]
            .iter()
            .enumerate()
            .map(|(i, ip)| flow(i as u64, i as u64, ip, 1.0))
            .collect();
        let summary = summarize(&messages, DEFAULT_BUCKET_MS, 2);
        let names: Vec<&str> =
            summary.top_sources.iter().map(|s| s.source_ip.as_str()).collect();
        // All counts tie at 1; the listing is alphabetical and truncated.
        assert_eq!(names, vec!["a", "b"]);
        let share_sum: f64 = summary.top_sources.iter().map(|s| s.share).sum();
        assert!(share_sum <= 1.0);
    }

    #[test]
    fn single_bucket_holds_every_record() {
        let messages: Vec<Envelope> =
            (0..9).map(|i| flow(i, 1_000 + i, "10.0.0.1", 1.0)).collect();
        let summary = summarize(&messages, 10_000, 5);
        assert_eq!(summary.buckets.len(), 1);
        assert_eq!(summary.buckets[0], TimeBucket { start_ms: 0, count: 9 });
    }

    #[test]
    fn bucket_starts_align_to_the_width() {
        let messages = vec![
            flow(0, 10_500, "a", 1.0),
            flow(1, 19_999, "a", 1.0),
            flow(2, 20_000, "a", 1.0),
        ];
        let summary = summarize(&messages, 10_000, 5);
        assert_eq!(
            summary.buckets,
            vec![
                TimeBucket { start_ms: 10_000, count: 2 },
                TimeBucket { start_ms: 20_000, count: 1 },
            ]
        );
    }

    proptest! {
        #[test]
        fn bucket_counts_always_sum_to_total(
            stamps in proptest::collection::vec(0u64..100_000, 0..60),
            bucket_ms in 1u64..5_000,
        ) {
            let messages: Vec<Envelope> = stamps
                .iter()
                .enumerate()
                .map(|(i, &ts)| flow(i as u64, ts, "10.0.0.1", 1.0))
                .collect();
            let summary = summarize(&messages, bucket_ms, 3);
            let bucket_sum: u64 = summary.buckets.iter().map(|b| b.count).sum();
            prop_assert_eq!(bucket_sum, summary.total);
            let share_sum: f64 = summary.top_sources.iter().map(|s| s.share).sum();
            prop_assert!(share_sum <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn reports_are_deterministic_and_complete() {
        let messages: Vec<Envelope> =
            (0..12).map(|i| flow(i, i * 3_000, if i % 3 == 0 { "a" } else { "b" }, 64.0)).collect();
        let summary = summarize(&messages, DEFAULT_BUCKET_MS, DEFAULT_TOP_N);
        let once = render_report(&summary);
        let twice = render_report(&summary);
        assert_eq!(once, twice);
        assert!(once.contains("total records: 12"));
        assert!(once.contains("average packet size: 64.000"));
        assert!(once.contains('b'));
    }

    #[test]
    fn report_total_matches_the_bulk_written_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bulk.ndjson");
        let messages: Vec<Envelope> =
            (0..23).map(|i| flow(i, i, "10.0.0.1", 9.0)).collect();
        let written = write_bulk(&messages, DEFAULT_INDEX, &path).unwrap();
        let summary = summarize(&messages, DEFAULT_BUCKET_MS, DEFAULT_TOP_N);
        assert_eq!(summary.total, written as u64);
    }

    #[test]
    fn plots_are_valid_deterministic_svg() {
        let messages: Vec<Envelope> =
            (0..30).map(|i| flow(i, i * 2_000, if i % 2 == 0 { "a" } else { "b" }, 10.0)).collect();
        let summary = summarize(&messages, 10_000, 5);

        let series = plot_series_svg(&summary);
        assert!(series.starts_with("<svg"));
        assert!(series.ends_with("</svg>\n"));
        assert_eq!(series.matches("<rect").count(), summary.buckets.len() + 1);
        assert_eq!(series, plot_series_svg(&summary));

        let shares = plot_shares_svg(&summary);
        assert_eq!(shares.matches("<rect").count(), summary.top_sources.len() + 1);

        let dir = tempfile::tempdir().unwrap();
        let paths = write_plots(&summary, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        for path in paths {
            assert!(std::fs::metadata(path).unwrap().len() > 0);
        }
    }
}
