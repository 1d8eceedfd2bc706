//! Run configuration: one TOML document drives every command, and one global
//! seed fans out to per-stage seeds through fixed salts.

use std::path::{Path, PathBuf};

use ganids_core::classifiers::{ForestParams, LogisticParams, TreeParams};
use ganids_core::tabgan::TrainConfig;
use ganids_core::SplitConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Per-stage salts mixed into the global seed. Distinct constants keep stage
/// streams decorrelated while a single `--seed` reproduces the whole run.
pub mod salts {
    pub const SPLIT: u64 = 0x01;
    pub const RANKER: u64 = 0x02;
    pub const SHAPLEY_BACKGROUND: u64 = 0x03;
    pub const SHAPLEY_EVAL: u64 = 0x04;
    pub const SHAPLEY_PERMS: u64 = 0x05;
    pub const FOREST: u64 = 0x06;
    pub const GMM: u64 = 0x07;
    pub const GAN: u64 = 0x08;
    pub const SYNTH: u64 = 0x09;
}

/// Feature-ranking knobs: the ranking forest and the sampled attribution
/// sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapleySection {
    pub background_rows: usize,
    pub eval_rows: usize,
    pub permutations: usize,
    pub ranking_trees: usize,
    pub ranking_depth: Option<usize>,
}

impl Default for ShapleySection {
    fn default() -> Self {
        ShapleySection {
            background_rows: 100,
            eval_rows: 200,
            permutations: 64,
            ranking_trees: 32,
            ranking_depth: Some(24),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub n: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { n: 10_000 }
    }
}

/// Broker, sink, and dashboard settings. The injected clock starts at a fixed
/// epoch so time buckets reproduce across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSection {
    pub index: String,
    pub bucket_ms: u64,
    pub top_n: usize,
    pub clock_start_ms: u64,
    pub clock_step_ms: u64,
}

impl Default for StreamSection {
    fn default() -> Self {
        StreamSection {
            index: ganids_core::sink::DEFAULT_INDEX.to_string(),
            bucket_ms: ganids_core::sink::DEFAULT_BUCKET_MS,
            top_n: ganids_core::sink::DEFAULT_TOP_N,
            clock_start_ms: 1_700_000_000_000,
            clock_step_ms: 100,
        }
    }
}

/// Everything a run needs. Nested `seed` fields inside `split` and `gan` are
/// ignored; the global `seed` plus a stage salt decides every stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub input_csv: PathBuf,
    pub workdir: PathBuf,
    /// Features kept after ranking.
    pub top_k: usize,
    /// Mixture components per numeric column.
    pub gmm_components: usize,
    pub split: SplitConfig,
    pub shapley: ShapleySection,
    pub forest: ForestParams,
    pub tree: TreeParams,
    pub logistic: LogisticParams,
    pub gan: TrainConfig,
    pub synth: SynthSection,
    pub stream: StreamSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            input_csv: PathBuf::from("flows.csv"),
            workdir: PathBuf::from("run"),
            top_k: ganids_core::shapley::DEFAULT_TOP_K,
            gmm_components: ganids_core::gmm::DEFAULT_COMPONENTS,
            split: SplitConfig::default(),
            shapley: ShapleySection::default(),
            forest: ForestParams::default(),
            tree: TreeParams::default(),
            logistic: LogisticParams::default(),
            gan: TrainConfig::default(),
            synth: SynthSection::default(),
            stream: StreamSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads the TOML document, or starts from defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::validation(format!("bad config {}: {e}", path.display())))
    }

    /// Stage seed derived from the global seed; splitmix-style mixing so
    /// adjacent global seeds do not produce adjacent stage streams.
    pub fn stage_seed(&self, salt: u64) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt)
    }

    /// The split settings with the derived seed substituted in.
    pub fn split_config(&self) -> SplitConfig {
        SplitConfig { seed: self.stage_seed(salts::SPLIT), ..self.split.clone() }
    }

    /// The GAN settings with the derived seed substituted in.
    pub fn gan_config(&self) -> TrainConfig {
        TrainConfig { seed: self.stage_seed(salts::GAN), ..self.gan.clone() }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(CliError::validation(format!(
                "split.test_fraction must be in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if self.top_k == 0 {
            return Err(CliError::validation("top_k must be at least 1"));
        }
        if self.gmm_components == 0 {
            return Err(CliError::validation("gmm_components must be at least 1"));
        }
        if self.shapley.permutations == 0
            || self.shapley.background_rows == 0
            || self.shapley.eval_rows == 0
            || self.shapley.ranking_trees == 0
        {
            return Err(CliError::validation("shapley sizes must all be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_back_from_empty_toml() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.top_k, 10);
        assert_eq!(cfg.split.test_fraction, 0.2);
        cfg.validate().unwrap();
    }

    #[test]
    fn nested_overrides_apply() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            top_k = 4

            [gan]
            epochs = 12
            batch_size = 64

            [forest]
            n_trees = 15
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.gan.epochs, 12);
        assert_eq!(cfg.gan.batch_size, 64);
        assert_eq!(cfg.forest.n_trees, 15);
        // Untouched fields keep their defaults.
        assert_eq!(cfg.gan.critic_steps, TrainConfig::default().critic_steps);
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("bogus = 1").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn stage_seeds_differ_per_salt_and_follow_the_global_seed() {
        let a = RunConfig { seed: 1, ..RunConfig::default() };
        let b = RunConfig { seed: 2, ..RunConfig::default() };
        assert_ne!(a.stage_seed(salts::SPLIT), a.stage_seed(salts::GAN));
        assert_ne!(a.stage_seed(salts::SPLIT), b.stage_seed(salts::SPLIT));
        assert_eq!(a.split_config().seed, a.stage_seed(salts::SPLIT));
        assert_eq!(a.gan_config().seed, a.stage_seed(salts::GAN));
    }

    #[test]
    fn bad_fraction_fails_validation() {
        let mut cfg = RunConfig::default();
        cfg.split.test_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }
}
