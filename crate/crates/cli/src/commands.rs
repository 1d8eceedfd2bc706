//! One function per subcommand. Each command loads its upstream artifacts,
//! does its stage's work through the core crate, and persists checksummed
//! outputs into the work directory.

use std::path::Path;

use ganids_core::classifiers::{
    evaluate, rank_by_false_negatives, train_forest, train_gnb, train_logistic, train_tree,
    Evaluation,
};
use ganids_core::evasion::{cross_model_report, save_report};
use ganids_core::fixture::{write_flows_csv, FixtureSpec};
use ganids_core::ingest::{clean, load_csv, load_dataset, save_dataset, split};
use ganids_core::shapley::{global_importance, phi_matrix_mc, subsample_rows, top_k};
use ganids_core::sink::{summarize, write_bulk, DashboardSummary};
use ganids_core::stream::{
    payload_features, record_payload, scoring_consumer, Broker, ConsumerState, StepClock,
    PREDICTIONS_TOPIC, RAW_TOPIC,
};
use ganids_core::tabgan::{fit_column_models, load_gan, sample_rows, save_gan, train};
use ganids_core::{Dataset, LabelMap, Predictor, TrainedClassifier};
use serde::{Deserialize, Serialize};

use crate::artifacts::{commit, commit_json, write_checksum, Workspace};
use crate::config::{salts, RunConfig};
use crate::error::CliError;

pub const IMPORTANCE_FORMAT: &str = "ganids.importance.v1";
pub const METRICS_FORMAT: &str = "ganids.metrics.v1";

/// The four detectors, in training and report order.
pub const MODEL_NAMES: [&str; 4] =
    ["random_forest", "decision_tree", "logistic_regression", "gaussian_nb"];

/// Persisted output of the ranking stage; downstream commands slice every
/// dataset with `keep`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceDoc {
    pub format: String,
    /// All feature names, dataset order.
    pub feature_names: Vec<String>,
    /// Mean |phi| per feature, aligned with `feature_names`.
    pub importance: Vec<f64>,
    /// Feature indices by descending importance.
    pub ranking: Vec<usize>,
    /// The top-k indices, rank order.
    pub keep: Vec<usize>,
    pub n_samples: usize,
    pub permutations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsEntry {
    pub model: String,
    pub evaluation: Evaluation,
}

/// Persisted output of train-ids: per-model tables plus the comparison order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub format: String,
    pub entries: Vec<MetricsEntry>,
    /// Model names by ascending false negatives, ties broken by accuracy.
    pub ranking: Vec<String>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn load_dataset_artifact(path: &Path) -> Result<Dataset, CliError> {
    load_dataset(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn load_importance(ws: &Workspace) -> Result<ImportanceDoc, CliError> {
    let doc: ImportanceDoc = read_json(&ws.require(ws.importance(), "features")?)?;
    if doc.format != IMPORTANCE_FORMAT {
        return Err(CliError::runtime(format!(
            "importance artifact has format {}, expected {IMPORTANCE_FORMAT}",
            doc.format
        )));
    }
    Ok(doc)
}

/// Train and test splits cut down to the selected feature slice.
fn load_slices(ws: &Workspace) -> Result<(Dataset, Dataset, ImportanceDoc), CliError> {
    let doc = load_importance(ws)?;
    let train = load_dataset_artifact(&ws.require(ws.train_split(), "prepare")?)?;
    let test = load_dataset_artifact(&ws.require(ws.test_split(), "prepare")?)?;
    Ok((train.select_features(&doc.keep), test.select_features(&doc.keep), doc))
}

fn load_models(ws: &Workspace) -> Result<Vec<TrainedClassifier>, CliError> {
    MODEL_NAMES
        .iter()
        .map(|name| {
            let path = ws.require(ws.model(name), "train-ids")?;
            ganids_core::classifiers::load_model(&path)
                .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

pub fn cmd_prepare(cfg: &RunConfig, ws: &Workspace, input: Option<&Path>) -> Result<(), CliError> {
    let input = input.unwrap_or(&cfg.input_csv);
    if !input.is_file() {
        return Err(CliError::validation(format!("input CSV not found: {}", input.display())));
    }
    ws.ensure()?;

    let raw = load_csv(input, None).map_err(|e| CliError::validation(e.to_string()))?;
    let data = clean(raw, &LabelMap::cicids_dos()).map_err(|e| CliError::validation(e.to_string()))?;
    let (train_set, test_set) =
        split(&data, &cfg.split_config()).map_err(|e| CliError::validation(e.to_string()))?;

    commit(&ws.cleaned(), |tmp| {
        save_dataset(&data, tmp).map_err(|e| CliError::runtime(e.to_string()))
    })?;
    commit(&ws.train_split(), |tmp| {
        save_dataset(&train_set, tmp).map_err(|e| CliError::runtime(e.to_string()))
    })?;
    commit(&ws.test_split(), |tmp| {
        save_dataset(&test_set, tmp).map_err(|e| CliError::runtime(e.to_string()))
    })?;

    println!("cleaned: {data}");
    for (label, count) in &data.raw_label_counts {
        println!("  {label}: {count}");
    }
    println!("train:   {train_set}");
    println!("test:    {test_set}");
    Ok(())
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

pub fn cmd_features(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let train_set = load_dataset_artifact(&ws.require(ws.train_split(), "prepare")?)?;
    let d = train_set.n_features();
    if cfg.top_k > d {
        return Err(CliError::validation(format!(
            "top_k {} exceeds the {d} available features",
            cfg.top_k
        )));
    }

    let ranker = train_forest(
        &train_set,
        &ganids_core::classifiers::ForestParams {
            n_trees: cfg.shapley.ranking_trees,
            tree: ganids_core::classifiers::TreeParams {
                max_depth: cfg.shapley.ranking_depth,
                ..Default::default()
            },
            ..Default::default()
        },
        cfg.stage_seed(salts::RANKER),
    )
    .map_err(|e| CliError::validation(e.to_string()))?;

    let background = subsample_rows(
        &train_set.rows,
        cfg.shapley.background_rows,
        cfg.stage_seed(salts::SHAPLEY_BACKGROUND),
    );
    let eval_rows = subsample_rows(
        &train_set.rows,
        cfg.shapley.eval_rows,
        cfg.stage_seed(salts::SHAPLEY_EVAL),
    );
    let score = |x: &[f64]| ranker.proba_one(x);
    let phis = phi_matrix_mc(
        &score,
        &eval_rows,
        &background,
        cfg.shapley.permutations,
        cfg.stage_seed(salts::SHAPLEY_PERMS),
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;
    let report = global_importance(&phis).map_err(|e| CliError::runtime(e.to_string()))?;
    let keep = top_k(&report, cfg.top_k).map_err(|e| CliError::validation(e.to_string()))?;

    let names = train_set.feature_names();
    let doc = ImportanceDoc {
        format: IMPORTANCE_FORMAT.to_string(),
        feature_names: names.clone(),
        importance: report.importance.clone(),
        ranking: report.ranking.clone(),
        keep: keep.clone(),
        n_samples: report.n,
        permutations: cfg.shapley.permutations,
    };
    commit_json(&ws.importance(), &doc)?;

    let widest = names.iter().map(String::len).max().unwrap_or(0);
    let max_i = report.importance.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    println!("feature importance (mean |phi| over {} rows):", report.n);
    for (rank, &j) in report.ranking.iter().enumerate() {
        let bar = "#".repeat(((report.importance[j] / max_i) * 24.0).round() as usize);
        let mark = if rank < cfg.top_k { '*' } else { ' ' };
        println!("{mark} {:>2}. {:<widest$}  {:>10.6}  {bar}", rank + 1, names[j], report.importance[j]);
    }
    println!("kept top {} features", cfg.top_k);
    Ok(())
}

// ---------------------------------------------------------------------------
// train-ids
// ---------------------------------------------------------------------------

pub fn cmd_train_ids(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let (train_slice, test_slice, _) = load_slices(ws)?;
    if train_slice.class_counts.iter().any(|&c| c == 0) {
        return Err(CliError::validation(format!(
            "training split needs both classes, got {} benign / {} malicious",
            train_slice.class_counts[0], train_slice.class_counts[1]
        )));
    }

    let models = vec![
        TrainedClassifier::RandomForest(
            train_forest(&train_slice, &cfg.forest, cfg.stage_seed(salts::FOREST))
                .map_err(|e| CliError::runtime(e.to_string()))?,
        ),
        TrainedClassifier::DecisionTree(
            train_tree(&train_slice, &cfg.tree).map_err(|e| CliError::runtime(e.to_string()))?,
        ),
        TrainedClassifier::LogisticRegression(
            train_logistic(&train_slice, &cfg.logistic)
                .map_err(|e| CliError::runtime(e.to_string()))?,
        ),
        TrainedClassifier::GaussianNb(
            train_gnb(&train_slice).map_err(|e| CliError::runtime(e.to_string()))?,
        ),
    ];

    let mut entries = Vec::new();
    for model in &models {
        let evaluation =
            evaluate(model, &test_slice).map_err(|e| CliError::runtime(e.to_string()))?;
        println!("{}", model.name());
        println!("{}", evaluation.report.render());
        entries.push(MetricsEntry { model: model.name().to_string(), evaluation });
    }

    let ranked = rank_by_false_negatives(
        &entries
            .iter()
            .map(|e| (e.evaluation.confusion, e.evaluation.report.accuracy))
            .collect::<Vec<_>>(),
    );
    let ranking: Vec<String> = ranked.iter().map(|&i| entries[i].model.clone()).collect();
    println!("comparison (fewest missed attacks first):");
    for (place, &i) in ranked.iter().enumerate() {
        let e = &entries[i];
        println!(
            "  {}. {:<20} false negatives {:>6}  accuracy {:.4}",
            place + 1,
            e.model,
            e.evaluation.confusion.fn_,
            e.evaluation.report.accuracy
        );
    }

    for model in &models {
        commit(&ws.model(model.name()), |tmp| {
            ganids_core::classifiers::save_model(model, tmp)
                .map_err(|e| CliError::runtime(e.to_string()))
        })?;
    }
    let doc = MetricsDoc { format: METRICS_FORMAT.to_string(), entries, ranking };
    commit_json(&ws.metrics(), &doc)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train-gan
// ---------------------------------------------------------------------------

pub fn cmd_train_gan(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let (train_slice, _, _) = load_slices(ws)?;
    let malicious = train_slice.filter_label(1);
    if malicious.rows.is_empty() {
        return Err(CliError::validation("no malicious rows in the training split"));
    }

    let gmms = fit_column_models(&malicious, cfg.gmm_components, cfg.stage_seed(salts::GMM))
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let gan_cfg = cfg.gan_config();
    gan_cfg.validate().map_err(|e| CliError::validation(e.to_string()))?;
    let model = train(&malicious, &gmms, &gan_cfg).map_err(|e| CliError::runtime(e.to_string()))?;

    let first = model.loss_history.first();
    let last = model.loss_history.last();
    commit(&ws.gan(), |tmp| {
        save_gan(&model, tmp).map_err(|e| CliError::runtime(e.to_string()))
    })?;

    println!(
        "trained generator on {} malicious rows for {} updates",
        malicious.rows.len(),
        model.loss_history.len()
    );
    if let (Some(first), Some(last)) = (first, last) {
        println!(
            "loss d {:+.4} -> {:+.4}, g {:+.4} -> {:+.4}",
            first.d_loss, last.d_loss, first.g_loss, last.g_loss
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(cfg: &RunConfig, ws: &Workspace, n: Option<usize>) -> Result<(), CliError> {
    let gan = load_gan(&ws.require(ws.gan(), "train-gan")?)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let n = n.unwrap_or(cfg.synth.n);

    let batch = sample_rows(n, &gan.generator, &gan.gmms, &gan.schema, cfg.stage_seed(salts::SYNTH));
    let data = batch.to_dataset(&gan.schema);
    commit(&ws.synthetic(), |tmp| {
        save_dataset(&data, tmp).map_err(|e| CliError::runtime(e.to_string()))
    })?;
    println!("sampled {n} synthetic rows into {}", ws.synthetic().display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evade
// ---------------------------------------------------------------------------

pub fn cmd_evade(_cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let (_, test_slice, _) = load_slices(ws)?;
    let models = load_models(ws)?;
    let synthetic = load_dataset_artifact(&ws.require(ws.synthetic(), "synth")?)?;

    let refs: Vec<&TrainedClassifier> = models.iter().collect();
    let report = cross_model_report(&refs, &synthetic, &test_slice)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    commit(&ws.evasion(), |tmp| {
        save_report(&report, tmp).map_err(|e| CliError::runtime(e.to_string()))
    })?;
    print!("{}", report.render());
    Ok(())
}

// ---------------------------------------------------------------------------
// stream
// ---------------------------------------------------------------------------

pub fn cmd_stream(cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let (_, test_slice, _) = load_slices(ws)?;
    let models = load_models(ws)?;
    let metrics: MetricsDoc = read_json(&ws.require(ws.metrics(), "train-ids")?)?;
    let best = metrics
        .ranking
        .first()
        .ok_or_else(|| CliError::runtime("metrics artifact has an empty ranking"))?;
    let model = models
        .iter()
        .find(|m| m.name() == best)
        .ok_or_else(|| CliError::runtime(format!("ranked model {best} not among saved models")))?;

    let clock = StepClock::new(cfg.stream.clock_start_ms, cfg.stream.clock_step_ms);
    let broker = Broker::default_topology(Box::new(clock));
    let names = test_slice.feature_names();
    for row in &test_slice.rows {
        broker
            .produce(RAW_TOPIC, record_payload(&names, row))
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }

    let stats = scoring_consumer(&broker, model, &names, RAW_TOPIC, PREDICTIONS_TOPIC)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    if stats.processed != stats.forwarded + stats.benign + stats.malformed {
        return Err(CliError::runtime(format!(
            "conservation identity broken: {} processed vs {} + {} + {}",
            stats.processed, stats.forwarded, stats.benign, stats.malformed
        )));
    }

    // Streaming/offline parity: the forwarded rows must be exactly the rows an
    // offline pass would flag, in order.
    let offline: Vec<Vec<f64>> = test_slice
        .rows
        .iter()
        .filter(|r| model.predict(&r.features) == 1)
        .map(|r| r.features.clone())
        .collect();
    let n_out = broker
        .topic_len(PREDICTIONS_TOPIC)
        .map_err(|e| CliError::runtime(e.to_string()))? as usize;
    let mut state = ConsumerState::new(PREDICTIONS_TOPIC);
    let forwarded = broker
        .consume(&mut state, n_out)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    if forwarded.len() != offline.len() {
        return Err(CliError::runtime(format!(
            "parity failure: {} forwarded vs {} offline",
            forwarded.len(),
            offline.len()
        )));
    }
    for (envelope, expect) in forwarded.iter().zip(&offline) {
        let got = payload_features(&envelope.payload, &names)
            .ok_or_else(|| CliError::runtime("forwarded payload lost its features"))?;
        if &got != expect {
            return Err(CliError::runtime("parity failure: forwarded row differs from offline"));
        }
    }

    let written = write_bulk(&forwarded, &cfg.stream.index, &ws.bulk())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    write_checksum(&ws.bulk())?;
    let summary = summarize(&forwarded, cfg.stream.bucket_ms, cfg.stream.top_n);
    commit_json(&ws.summary(), &summary)?;

    println!("scoring model: {best}");
    println!(
        "produced {}, forwarded {}, benign {}, malformed {}",
        stats.processed, stats.forwarded, stats.benign, stats.malformed
    );
    println!("bulk records written: {written} (equals forwarded count: {})", written == forwarded.len());
    println!("streaming/offline parity: ok");
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn cmd_report(_cfg: &RunConfig, ws: &Workspace) -> Result<(), CliError> {
    let summary: DashboardSummary = read_json(&ws.require(ws.summary(), "stream")?)?;
    let text = ganids_core::sink::render_report(&summary);
    commit(&ws.report(), |tmp| Ok(std::fs::write(tmp, &text)?))?;
    let plots = ganids_core::sink::write_plots(&summary, ws.root())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    for plot in &plots {
        write_checksum(plot)?;
    }
    print!("{text}");
    for plot in &plots {
        println!("plot: {}", plot.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// fixture
// ---------------------------------------------------------------------------

pub fn cmd_fixture(cfg: &RunConfig, rows: usize, out: &Path, skip_dirty: bool) -> Result<(), CliError> {
    let spec = FixtureSpec { n_rows: rows, dirty_rows: !skip_dirty, seed: cfg.seed };
    write_flows_csv(&spec, out)?;
    write_checksum(out)?;
    println!(
        "wrote {} fixture rows{} to {}",
        rows,
        if spec.dirty_rows { " (plus 8 unparseable ones)" } else { "" },
        out.display()
    );
    Ok(())
}
