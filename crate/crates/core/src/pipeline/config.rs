use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusFormat, FieldMap, Split};
use crate::faithfulness::{DEFAULT_ALPHA, DEFAULT_MAX_ATTEMPTS};
use crate::embed_gateway::ENV_EMBED_API_KEY;
use crate::llm_gateway::{GatewayConfig, PromptTemplate};
use crate::sampler::{DrawPolicy, DEFAULT_BETA};
use crate::testkit::MockProfile;

use super::PipelineError;

/// Everything a run needs. Loadable from TOML; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub corpus_format: CorpusFormat,
    pub field_map: FieldMap,
    pub cache_path: PathBuf,
    /// Where `sample` writes `epoch_NNN.jsonl` manifests.
    pub output_dir: PathBuf,
    pub alpha: f64,
    pub beta: f64,
    pub max_attempts: u32,
    pub seed: u64,
    pub epochs: u32,
    pub worker_count: usize,
    pub splits_to_augment: BTreeSet<Split>,
    pub draw_policy: DrawPolicy,
    pub llm: GatewayConfig,
    pub embedder: GatewayConfig,
    pub template: PromptTemplate,
    /// Route both gateways to the in-process testkit.
    pub mock: bool,
    pub mock_profile: MockProfile,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_path: PathBuf::from("annotations.json"),
            corpus_format: CorpusFormat::CuhkPedesJson,
            field_map: FieldMap::default(),
            cache_path: PathBuf::from("llmda-cache.jsonl"),
            output_dir: PathBuf::from("manifests"),
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            seed: 0,
            epochs: 1,
            worker_count: 4,
            splits_to_augment: BTreeSet::from([Split::Train]),
            draw_policy: DrawPolicy::PerEpoch,
            llm: GatewayConfig::default(),
            embedder: GatewayConfig {
                model_id: "all-MiniLM-L6-v2".to_string(),
                api_key_env: Some(ENV_EMBED_API_KEY.to_string()),
                ..GatewayConfig::default()
            },
            template: PromptTemplate::default(),
            mock: false,
            mock_profile: MockProfile::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            for p in [&mut config.corpus_path, &mut config.cache_path, &mut config.output_dir] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return err(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return err(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if self.worker_count < 1 {
            return err("worker_count must be at least 1".into());
        }
        if self.max_attempts < 1 {
            return err("max_attempts must be at least 1".into());
        }
        self.llm.validate().map_err(|e| PipelineError::Config(format!("llm: {e}")))?;
        self.embedder
            .validate()
            .map_err(|e| PipelineError::Config(format!("embedder: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.alpha, 0.6);
        assert_eq!(c.beta, 0.2);
        assert_eq!(c.max_attempts, 5);
        assert_eq!(c.splits_to_augment, BTreeSet::from([Split::Train]));
        assert_eq!(c.llm.sampling_temperature, 0.7);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = PipelineConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), c);

        let partial = PipelineConfig::from_toml_str(
            "alpha = 0.7\nsplits_to_augment = [\"train\", \"val\"]\n[llm]\nmodel_id = \"m\"\n[template]\nconcat_order = \"instruction_then_caption\"\n",
        )
        .unwrap();
        assert_eq!(partial.alpha, 0.7);
        assert_eq!(partial.llm.model_id, "m");
        assert_eq!(partial.llm.transport_retry_limit, 3);
        assert_eq!(partial.splits_to_augment.len(), 2);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["alpha = 1.5", "beta = -0.1", "worker_count = 0", "max_attempts = 0", "bogus = 1", "[llm]\nrequests_per_second_cap = 0.0", "[template]\ninstruction = \"\""] {
            assert!(
                matches!(PipelineConfig::from_toml_str(text), Err(PipelineError::Config(_))),
                "{text}"
            );
        }
    }
}
