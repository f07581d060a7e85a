//! Bootstrapped resolution of coarse PK outcomes: a PK head trained on the
//! accepted set labels pending examples, and only direction-consistent,
//! confident predictions are accepted.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{fit, mix, Objectives, OutcomeExample, TrainConfig};
use crate::annot::{CodeVocabulary, Direction, Outcome};
use crate::corpus::CorpusFile;
use crate::error::{Error, Result};
use crate::model::{Head, ModelConfig, ModelInstance, Vocab};
use crate::tagging::{entity_bind, prepare_tokens, BindingContext, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    /// Minimum predicted probability for acceptance.
    pub threshold: f64,
    pub max_iterations: usize,
    /// PK-head training epochs per iteration.
    pub epochs: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { threshold: 0.7, max_iterations: 10, epochs: 30 }
    }
}

/// One PK interaction with its tokens before and after entity binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkCandidate {
    /// `label/sentence/interaction`.
    pub id: String,
    pub tokens: Vec<Token>,
    pub bound: Vec<Token>,
    /// Resolved NCI code, if any.
    pub code: Option<String>,
    /// Coarse direction, if the outcome is a coarse marker.
    pub coarse: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: String,
    pub predicted: String,
    pub confidence: f64,
    pub coarse: Direction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BootstrapState {
    pub accepted: Vec<PkCandidate>,
    pub pending: Vec<PkCandidate>,
    /// Direction-inconsistent predictions awaiting manual annotation.
    pub review: Vec<ReviewItem>,
    pub iterations: usize,
    /// Acceptances per iteration.
    pub history: Vec<usize>,
}

/// Every PK interaction of `corpus` whose precipitant aligns with tokens.
pub fn pk_candidates(corpus: &CorpusFile, codes: &CodeVocabulary, proxies: &[String]) -> Vec<PkCandidate> {
    let mut out = Vec::new();
    for label in &corpus.labels {
        let ctx = BindingContext::for_label(label, proxies);
        for (_, s) in label.sentences() {
            let tokens = prepare_tokens(&s.text, &ctx);
            for inter in &s.interactions {
                let Outcome::PK { code } = &inter.outcome else { continue };
                let Some(p) = s.mention(&inter.precipitant) else { continue };
                let Ok(bound) = entity_bind(&tokens, &p.spans, None) else { continue };
                out.push(PkCandidate {
                    id: format!("{}/{}/{}", label.id, s.id, inter.id),
                    tokens: tokens.clone(),
                    bound,
                    code: codes.contains(code).then(|| code.clone()),
                    coarse: Direction::from_coarse_marker(code),
                });
            }
        }
    }
    out
}

fn candidate_vocab(all: &[&PkCandidate]) -> (Vocab, usize, usize) {
    let words = all.iter().flat_map(|c| c.tokens.iter().map(|t| t.text.clone()));
    let chars = all.iter().flat_map(|c| c.tokens.iter().flat_map(|t| t.text.chars()));
    let max_len = all.iter().map(|c| c.tokens.len()).max().unwrap_or(1);
    let max_word = all.iter().flat_map(|c| c.tokens.iter().map(|t| t.text.chars().count())).max().unwrap_or(1);
    (Vocab::new(words, chars), max_len, max_word)
}

/// Iterates until an iteration accepts nothing, nothing is pending, or the
/// iteration limit is reached. Each iteration trains a fresh PK head on the
/// accepted set.
pub fn bootstrap_pk(
    seeds: Vec<PkCandidate>,
    coarse: Vec<PkCandidate>,
    codes: &CodeVocabulary,
    model_config: &ModelConfig,
    train: &TrainConfig,
    config: &BootstrapConfig,
) -> Result<BootstrapState> {
    if seeds.is_empty() {
        return Err(Error::Training("bootstrapping needs at least one seed example".into()));
    }
    if let Some(s) = seeds.iter().find(|s| s.code.as_deref().is_none_or(|c| !codes.contains(c))) {
        return Err(Error::Training(format!("seed {} has no resolved code", s.id)));
    }
    if let Some(c) = coarse.iter().find(|c| c.coarse.is_none()) {
        return Err(Error::Training(format!("pending example {} has no coarse direction", c.id)));
    }
    let all: Vec<&PkCandidate> = seeds.iter().chain(&coarse).collect();
    let (vocab, max_len, max_word) = candidate_vocab(&all);
    let mut model_config = model_config.clone();
    model_config.max_len = max_len;
    model_config.max_word_len = max_word;
    let mut state = BootstrapState { accepted: seeds, pending: coarse, ..BootstrapState::default() };
    while !state.pending.is_empty() && state.iterations < config.max_iterations {
        let seed = mix(&[train.seed, state.iterations as u64]);
        let mut model = ModelInstance::new(model_config.clone(), vocab.clone(), codes.clone(), None, seed)?;
        let examples = Objectives {
            pk: state
                .accepted
                .iter()
                .map(|c| OutcomeExample {
                    id: c.id.clone(),
                    input: model.encode(&c.tokens),
                    bound: model.vocab.word_ids(&c.bound),
                    head: Head::Pk,
                    target: codes
                        .index_of(c.code.as_deref().expect("accepted examples carry codes"))
                        .expect("known code"),
                    source_weight: 1.0,
                })
                .collect(),
            ..Objectives::default()
        };
        let run = TrainConfig { epochs: config.epochs, seed, ..train.clone() };
        fit(&mut model, &examples, &run, |_| Ok(None))?;
        state.iterations += 1;
        let mut still = Vec::new();
        let mut accepted = 0;
        for mut c in std::mem::take(&mut state.pending) {
            let probs =
                model.analyze(&model.encode(&c.tokens))?.head_probs(&model.vocab.word_ids(&c.bound), Head::Pk)?;
            let (best, &conf) = probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty head");
            let code = &codes.codes[best];
            let coarse = c.coarse.expect("pending examples carry a direction");
            if code.direction != coarse {
                state.review.push(ReviewItem {
                    id: c.id.clone(),
                    predicted: code.code.clone(),
                    confidence: conf,
                    coarse,
                });
            } else if conf >= config.threshold {
                c.code = Some(code.code.clone());
                state.accepted.push(c);
                accepted += 1;
            } else {
                still.push(c);
            }
        }
        state.pending = still;
        state.history.push(accepted);
        log::info!("bootstrap iteration {}: accepted {accepted}, pending {}", state.iterations, state.pending.len());
        if accepted == 0 {
            break;
        }
    }
    Ok(state)
}

/// Writes accepted codes back over the coarse markers they resolve.
pub fn apply_bootstrap(corpus: &mut CorpusFile, state: &BootstrapState) -> usize {
    let resolved: HashMap<&str, &str> = state
        .accepted
        .iter()
        .filter(|c| c.coarse.is_some())
        .filter_map(|c| c.code.as_deref().map(|code| (c.id.as_str(), code)))
        .collect();
    let mut n = 0;
    for label in &mut corpus.labels {
        let lid = label.id.clone();
        for s in label.sentences_mut() {
            for inter in &mut s.interactions {
                if let Outcome::PK { code } = &mut inter.outcome {
                    if let Some(new) = resolved.get(format!("{lid}/{}/{}", s.id, inter.id).as_str()) {
                        *code = new.to_string();
                        n += 1;
                    }
                }
            }
        }
    }
    n
}

/// One line per review item: id, predicted code, coarse marker.
pub fn review_queue_lines(state: &BootstrapState) -> String {
    state.review.iter().map(|r| format!("{}\t{}\t{}\n", r.id, r.predicted, r.coarse.coarse_marker())).collect()
}
