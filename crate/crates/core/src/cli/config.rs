//! The run configuration file: TOML, flat keys, strict.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::GeneratorSpec;
use crate::error::{Error, Result};
use crate::infer::InferConfig;
use crate::model::ModelConfig;
use crate::train::BootstrapConfig;
use crate::train::TrainConfig;

pub const CONFIG_VERSION: &str = "ddi-config/1";

/// Every tunable of every subcommand. Defaults are the component defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub version: String,
    pub seed: u64,
    /// NCI code vocabulary JSON; the built-in placeholder when absent.
    pub codes: Option<PathBuf>,
    /// Pre-trained word vectors; random initialization when absent.
    pub embeddings: Option<PathBuf>,

    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_window: usize,
    pub hidden: usize,
    pub rel_windows: Vec<usize>,
    pub rel_filters: usize,
    pub dropout: f64,
    pub residual_words: bool,
    pub max_len: usize,
    pub max_word_len: usize,

    pub epochs: usize,
    pub target_iterations: usize,
    pub non_o_weight: f64,
    pub primary_weight: f64,
    pub outcome_grad_scale: f64,
    pub dev_labels: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ensemble_size: usize,

    pub coordination: bool,
    pub proxies: Vec<String>,
    pub modifiers: Vec<String>,
    pub stopwords: Vec<String>,
    pub generic_terms: Vec<String>,
    pub pd_threshold: f64,

    pub bootstrap_threshold: f64,
    pub bootstrap_max_iterations: usize,
    pub bootstrap_epochs: usize,

    pub min_votes: usize,

    pub generator_labels: usize,
    pub generator_sentences_per_label: usize,
    pub generator_annotated_proportion: f64,
    pub generator_overlap_rate: f64,
    pub generator_coordination_rate: f64,
}

impl Default for Config {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let i = InferConfig::default();
        let b = BootstrapConfig::default();
        let g = GeneratorSpec::default();
        Config {
            version: CONFIG_VERSION.into(),
            seed: 0,
            codes: None,
            embeddings: None,
            word_dim: m.word_dim,
            char_dim: m.char_dim,
            char_filters: m.char_filters,
            char_window: m.char_window,
            hidden: m.hidden,
            rel_windows: m.rel_windows,
            rel_filters: m.rel_filters,
            dropout: m.dropout,
            residual_words: m.residual_words,
            max_len: m.max_len,
            max_word_len: m.max_word_len,
            epochs: t.epochs,
            target_iterations: t.target_iterations,
            non_o_weight: t.non_o_weight,
            primary_weight: t.primary_weight,
            outcome_grad_scale: t.outcome_grad_scale,
            dev_labels: t.dev_labels,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            ensemble_size: 10,
            coordination: i.coordination,
            proxies: i.proxies,
            modifiers: i.modifiers,
            stopwords: i.stopwords,
            generic_terms: i.generic_terms,
            pd_threshold: i.pd_threshold,
            bootstrap_threshold: b.threshold,
            bootstrap_max_iterations: b.max_iterations,
            bootstrap_epochs: b.epochs,
            min_votes: 1,
            generator_labels: g.labels,
            generator_sentences_per_label: g.sentences_per_label,
            generator_annotated_proportion: g.annotated_proportion,
            generator_overlap_rate: g.overlap_rate,
            generator_coordination_rate: g.coordination_rate,
        }
    }
}

/// `value` as a TOML literal, or as a bare string when it does not parse.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.check_version()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    fn check_version(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("version {:?}, expected {CONFIG_VERSION:?}", self.version)));
        }
        Ok(())
    }

    /// Applies `key=value` overrides; unknown keys are rejected.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).expect("config serializes to TOML");
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        let config: Config = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.check_version()?;
        Ok(config)
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            word_dim: self.word_dim,
            char_dim: self.char_dim,
            char_filters: self.char_filters,
            char_window: self.char_window,
            hidden: self.hidden,
            rel_windows: self.rel_windows.clone(),
            rel_filters: self.rel_filters,
            dropout: self.dropout,
            residual_words: self.residual_words,
            max_len: self.max_len,
            max_word_len: self.max_word_len,
            ..ModelConfig::default()
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            target_iterations: self.target_iterations,
            non_o_weight: self.non_o_weight,
            primary_weight: self.primary_weight,
            outcome_grad_scale: self.outcome_grad_scale,
            dev_labels: self.dev_labels,
            seed: self.seed,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            coordination: self.coordination,
            proxies: self.proxies.clone(),
        }
    }

    pub fn infer(&self) -> InferConfig {
        InferConfig {
            modifiers: self.modifiers.clone(),
            stopwords: self.stopwords.clone(),
            generic_terms: self.generic_terms.clone(),
            proxies: self.proxies.clone(),
            coordination: self.coordination,
            pd_threshold: self.pd_threshold,
        }
        .normalized()
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            threshold: self.bootstrap_threshold,
            max_iterations: self.bootstrap_max_iterations,
            epochs: self.bootstrap_epochs,
        }
    }

    pub fn generator(&self) -> GeneratorSpec {
        GeneratorSpec {
            seed: self.seed,
            labels: self.generator_labels,
            sentences_per_label: self.generator_sentences_per_label,
            annotated_proportion: self.generator_annotated_proportion,
            overlap_rate: self.generator_overlap_rate,
            coordination_rate: self.generator_coordination_rate,
            ..GeneratorSpec::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.model(), ModelConfig::default());
        assert_eq!(c.train(), TrainConfig::default());
        assert_eq!(c.bootstrap(), BootstrapConfig::default());
        assert_eq!(c.infer(), InferConfig::default().normalized());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("version = \"{CONFIG_VERSION}\"\nepochz = 3\n");
        assert!(matches!(Config::from_toml(&text), Err(Error::Config(_))));
        assert!(Config::default().with_overrides(&["epochz=3".into()]).is_err());
    }

    #[test]
    fn wrong_version_is_rejected() {
        assert!(matches!(Config::from_toml("version = \"ddi-config/0\"\n"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_parse_toml_literals() {
        let c = Config::default()
            .with_overrides(&["epochs=7".into(), "proxies=[\"statins\"]".into(), "codes=codes.json".into()])
            .unwrap();
        assert_eq!(c.epochs, 7);
        assert_eq!(c.proxies, vec!["statins".to_string()]);
        assert_eq!(c.codes, Some(PathBuf::from("codes.json")));
        assert!(Config::default().with_overrides(&["epochs=many".into()]).is_err());
    }
}
