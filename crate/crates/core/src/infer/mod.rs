//! End-to-end prediction: tag, decode, classify outcomes, then apply the
//! mention post-rules.

mod rules;

pub use rules::{is_purgeable, split_coordination, strip_modifiers};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annot::{canonicalize_sentence, Interaction, Mention, MentionKind, Outcome, Sentence, Span};
use crate::corpus::{CorpusFile, Provenance};
use crate::error::Result;
use crate::model::{Head, ModelInstance};
use crate::tagging::{
    decode, entity_bind, prepare_tokens, tokenize, BindingContext, DecodedMention, Tag, TagLabel, Token,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub modifiers: Vec<String>,
    pub stopwords: Vec<String>,
    pub generic_terms: Vec<String>,
    /// Class terms bound as the label drug when it is not named.
    pub proxies: Vec<String>,
    pub coordination: bool,
    pub pd_threshold: f64,
}

fn strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            modifiers: strings(&["moderate", "strong", "potent"]),
            stopwords: strings(&[
                "a",
                "all",
                "an",
                "and",
                "any",
                "certain",
                "concomitant",
                "of",
                "or",
                "other",
                "some",
                "such",
                "the",
                "these",
                "this",
                "those",
                "with",
            ]),
            generic_terms: strings(&["agents", "drugs"]),
            proxies: Vec::new(),
            coordination: false,
            pd_threshold: 0.5,
        }
    }
}

impl InferConfig {
    /// Lowercases and deduplicates every word list.
    pub fn normalized(mut self) -> Self {
        for list in [&mut self.modifiers, &mut self.stopwords, &mut self.generic_terms] {
            let mut words: Vec<String> = list.iter().map(|w| w.to_lowercase()).collect();
            words.sort();
            words.dedup();
            *list = words;
        }
        self
    }
}

/// Per-token distributions. Sentences longer than the trained length run in
/// windows of that length with stride half of it; each token keeps the
/// distribution from the window where it is most confident.
pub fn tag_probabilities(model: &ModelInstance, tokens: &[Token]) -> Result<Vec<Vec<f64>>> {
    let n = model.config.max_len;
    if n == 0 || tokens.len() <= n {
        return Ok(model.analyze(&model.encode(tokens))?.tag_probs());
    }
    let stride = (n / 2).max(1);
    let mut best: Vec<Option<Vec<f64>>> = vec![None; tokens.len()];
    let mut start = 0;
    loop {
        let end = (start + n).min(tokens.len());
        let probs = model.analyze(&model.encode(&tokens[start..end]))?.tag_probs();
        for (k, p) in probs.into_iter().enumerate() {
            let conf = p.iter().cloned().fold(f64::MIN, f64::max);
            let slot = &mut best[start + k];
            if slot.as_ref().is_none_or(|q| q.iter().cloned().fold(f64::MIN, f64::max) < conf) {
                *slot = Some(p);
            }
        }
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(best.into_iter().map(|p| p.expect("windows cover every token")).collect())
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Predicts mentions and interactions for one sentence, then applies the
/// post-rules.
pub fn predict_sentence(
    model: &ModelInstance,
    sentence: &Sentence,
    ctx: &BindingContext,
    config: &InferConfig,
) -> Result<Sentence> {
    let mut out = sentence.skeleton();
    let tokens = prepare_tokens(&sentence.text, ctx);
    if tokens.is_empty() {
        return Ok(out);
    }
    let probs = tag_probabilities(model, &tokens)?;
    let tags: Vec<Tag> = probs.iter().map(|p| Tag::from_index(argmax(p)).expect("tag index")).collect();
    let decoded = decode(&tokens, &tags);
    let mut analysis = model.analyze(&model.encode(&tokens))?;
    let mention = |out: &mut Sentence, kind: MentionKind, span: Span| -> Result<String> {
        let id = format!("M{}", out.mentions.len() + 1);
        out.mentions.push(Mention::from_spans(id.clone(), kind, vec![span], &sentence.text)?);
        Ok(id)
    };
    let mut effects: Vec<(String, Span)> = Vec::new();
    for d in decoded.iter().filter(|d| d.label == TagLabel::E) {
        effects.push((mention(&mut out, MentionKind::SpecificInteraction, d.span)?, d.span));
    }
    for d in decoded.iter().filter(|d| d.label == TagLabel::T) {
        mention(&mut out, MentionKind::Trigger, d.span)?;
    }
    let precipitants: Vec<&DecodedMention> = decoded.iter().filter(|d| d.label.interaction_kind().is_some()).collect();
    for d in precipitants {
        let id = mention(&mut out, MentionKind::Precipitant, d.span)?;
        let mut outcomes = Vec::new();
        match d.label {
            TagLabel::K => {
                let bound = entity_bind(&tokens, &[d.span], None)?;
                let p = analysis.head_probs(&model.vocab.word_ids(&bound), Head::Pk)?;
                outcomes.push(Outcome::PK { code: model.codes.codes[argmax(&p)].code.clone() });
            }
            TagLabel::D => {
                let mut scored = Vec::new();
                for (eid, espan) in &effects {
                    let bound = entity_bind(&tokens, &[d.span], Some(&[*espan]))?;
                    let p = analysis.head_probs(&model.vocab.word_ids(&bound), Head::Pd)?;
                    scored.push((p[1], eid.clone()));
                }
                for (score, eid) in &scored {
                    if *score >= config.pd_threshold {
                        outcomes.push(Outcome::PD { effect: eid.clone() });
                    }
                }
                if outcomes.is_empty() {
                    let best = scored.iter().max_by(|a, b| a.0.total_cmp(&b.0));
                    match best {
                        Some((score, eid)) if *score >= 0.5 * config.pd_threshold => {
                            outcomes.push(Outcome::PD { effect: eid.clone() })
                        }
                        _ => outcomes.push(Outcome::UN),
                    }
                }
            }
            _ => outcomes.push(Outcome::UN),
        }
        for outcome in outcomes {
            let iid = format!("I{}", out.interactions.len() + 1);
            out.interactions.push(Interaction { id: iid, precipitant: id.clone(), outcome });
        }
    }
    Ok(post_process(&out, config))
}

/// Modifier stripping, purging and (when enabled) coordination splitting
/// over precipitant mentions. Interactions follow their precipitant; a
/// precipitant reduced to nothing is dropped with its interactions.
pub fn post_process(sentence: &Sentence, config: &InferConfig) -> Sentence {
    let tokens = tokenize(&sentence.text);
    let mut out = sentence.clone();
    out.mentions.clear();
    out.interactions.clear();
    for m in &sentence.mentions {
        if m.kind != MentionKind::Precipitant {
            out.mentions.push(m.clone());
            continue;
        }
        let pieces = if m.is_contiguous() {
            let span = m.spans[0];
            let inside: Vec<Token> =
                tokens.iter().filter(|t| span.start <= t.span.start && t.span.end <= span.end).cloned().collect();
            let kept = strip_modifiers(&inside, &config.modifiers);
            if kept.is_empty() || is_purgeable(kept, &config.stopwords, &config.generic_terms) {
                Vec::new()
            } else if config.coordination {
                split_coordination(kept)
            } else {
                vec![vec![Span::new(kept[0].span.start, kept[kept.len() - 1].span.end)]]
            }
        } else {
            vec![m.spans.clone()]
        };
        for (k, spans) in pieces.into_iter().enumerate() {
            let id = if k == 0 { m.id.clone() } else { format!("{}.{k}", m.id) };
            let Ok(mention) = Mention::from_spans(id.clone(), MentionKind::Precipitant, spans, &sentence.text) else {
                continue;
            };
            out.mentions.push(mention);
            for inter in sentence.interactions.iter().filter(|i| i.precipitant == m.id) {
                out.interactions.push(Interaction {
                    id: format!("{}.{k}", inter.id),
                    precipitant: id.clone(),
                    outcome: inter.outcome.clone(),
                });
            }
        }
    }
    canonicalize_sentence(&mut out);
    out
}

/// Predictions for every sentence of `corpus`, annotations ignored.
pub fn predict_corpus(model: &ModelInstance, corpus: &CorpusFile, config: &InferConfig) -> Result<CorpusFile> {
    let mut out = corpus.skeleton();
    out.provenance = Provenance::Predicted;
    for label in &mut out.labels {
        let ctx = BindingContext::for_label(label, &config.proxies);
        let predicted: Vec<Result<Sentence>> = label
            .sentences()
            .map(|(_, s)| s)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|s| predict_sentence(model, s, &ctx, config))
            .collect();
        let mut predicted = predicted.into_iter();
        for s in label.sentences_mut() {
            *s = predicted.next().expect("one prediction per sentence")?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{CodeVocabulary, DrugLabel, InteractionKind};
    use crate::model::{ModelConfig, Vocab};

    fn sentence(text: &str, mentions: &[(&str, MentionKind)], interactions: &[(usize, Outcome)]) -> Sentence {
        let mut s = Sentence::new("S1", text);
        for (i, (needle, kind)) in mentions.iter().enumerate() {
            let b = text.find(needle).unwrap();
            let span = Span::new(text[..b].chars().count(), text[..b].chars().count() + needle.chars().count());
            s.mentions.push(Mention::from_spans(format!("M{}", i + 1), *kind, vec![span], text).unwrap());
        }
        for (i, (m, o)) in interactions.iter().enumerate() {
            s.interactions.push(Interaction {
                id: format!("I{}", i + 1),
                precipitant: format!("M{m}"),
                outcome: o.clone(),
            });
        }
        s
    }

    #[test]
    fn strips_modifiers_and_purges_generic_mentions() {
        let s = sentence(
            "Avoid strong inhibitors of CYP3A4 and other agents .",
            &[("strong inhibitors of CYP3A4", MentionKind::Precipitant), ("other agents", MentionKind::Precipitant)],
            &[(1, Outcome::UN), (2, Outcome::UN)],
        );
        let out = post_process(&s, &InferConfig::default());
        assert_eq!(out.mentions.len(), 1);
        assert_eq!(out.mentions[0].text, "inhibitors of CYP3A4");
        assert_eq!(out.interactions.len(), 1);
        assert_eq!(post_process(&out, &InferConfig::default()), out);
    }

    #[test]
    fn coordination_split_duplicates_interactions() {
        let s = sentence(
            "Avoid X and Y inducers .",
            &[("X and Y inducers", MentionKind::Precipitant)],
            &[(1, Outcome::PK { code: "C54600".into() })],
        );
        let config = InferConfig { coordination: true, ..InferConfig::default() };
        let out = post_process(&s, &config);
        let texts: Vec<&str> = out.mentions.iter().map(|m| m.text.as_str()).collect();
        assert_eq!(texts, ["X inducers", "Y inducers"]);
        assert_eq!(out.interactions.len(), 2);
        assert!(out.interactions.iter().all(|i| i.kind() == InteractionKind::PK));
        assert_eq!(post_process(&out, &config), out);
    }

    #[test]
    fn untrained_model_output_validates_and_is_deterministic() {
        let text = "Coadministration of warfarin with Drugex may increase bleeding . ".repeat(3);
        let toks = tokenize(&text);
        let vocab = Vocab::new(toks.iter().map(|t| t.text.clone()), text.chars());
        let mut config = ModelConfig::micro();
        config.max_len = 7;
        let model = ModelInstance::new(config, vocab, CodeVocabulary::placeholder(), None, 5).unwrap();
        let s = Sentence::new("S1", text.trim());
        let ctx = BindingContext { drug: "Drugex".into(), ..Default::default() };
        let a = predict_sentence(&model, &s, &ctx, &InferConfig::default()).unwrap();
        let b = predict_sentence(&model, &s, &ctx, &InferConfig::default()).unwrap();
        assert_eq!(a, b);
        let probs = tag_probabilities(&model, &prepare_tokens(&s.text, &ctx)).unwrap();
        assert_eq!(probs.len(), prepare_tokens(&s.text, &ctx).len());
        let label = DrugLabel {
            id: "L1".into(),
            drug: "Drugex".into(),
            aliases: vec![],
            sections: vec![crate::annot::Section { name: "DRUG INTERACTIONS".into(), sentences: vec![a] }],
        };
        let codes = CodeVocabulary::placeholder();
        let ctx = crate::annot::ValidationContext { codes: &codes, allow_provisional: false };
        assert!(crate::annot::validate(&label, ctx).is_empty());
    }
}
