//! Training examples for the three objectives.

use crate::annot::{CodeVocabulary, MentionKind, Outcome};
use crate::corpus::{CorpusFile, EmbeddingTable};
use crate::error::Result;
use crate::model::{Head, ModelConfig, ModelInstance, SentenceInput, Vocab};
use crate::tagging::{encode, entity_bind, prepare_tokens, BindingContext, EncodeOptions, SourceWeight};

use super::TrainConfig;

/// A corpus and the weight class of its examples.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub corpus: &'a CorpusFile,
    pub source: SourceWeight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerExample {
    pub id: String,
    pub input: SentenceInput,
    /// Gold tag indices.
    pub tags: Vec<usize>,
    pub source_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeExample {
    pub id: String,
    pub input: SentenceInput,
    /// Word ids of the entity-bound sentence.
    pub bound: Vec<usize>,
    pub head: Head,
    pub target: usize,
    pub source_weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objectives {
    pub ner: Vec<NerExample>,
    pub pk: Vec<OutcomeExample>,
    pub pd: Vec<OutcomeExample>,
}

/// Words and characters of every training sentence, then of `embeddings`,
/// with the longest sentence and word lengths.
pub fn build_vocab(
    sets: &[TrainSet],
    proxies: &[String],
    embeddings: Option<&EmbeddingTable>,
) -> (Vocab, usize, usize) {
    let mut words = Vec::new();
    let mut chars = Vec::new();
    let (mut max_len, mut max_word) = (0, 0);
    for set in sets {
        for label in &set.corpus.labels {
            let ctx = BindingContext::for_label(label, proxies);
            for (_, s) in label.sentences() {
                let tokens = prepare_tokens(&s.text, &ctx);
                max_len = max_len.max(tokens.len());
                for t in tokens {
                    max_word = max_word.max(t.text.chars().count());
                    chars.extend(t.text.chars());
                    words.push(t.text);
                }
            }
        }
    }
    if let Some(table) = embeddings {
        words.extend(table.words().iter().cloned());
    }
    (Vocab::new(words, chars), max_len, max_word)
}

/// Builds a model whose vocabulary and length limits come from `sets`.
pub fn prepare_model(
    sets: &[TrainSet],
    config: &ModelConfig,
    codes: &CodeVocabulary,
    embeddings: Option<&EmbeddingTable>,
    proxies: &[String],
    seed: u64,
) -> Result<ModelInstance> {
    let (vocab, max_len, max_word) = build_vocab(sets, proxies, embeddings);
    let mut config = config.clone();
    if config.max_len == 0 {
        config.max_len = max_len.max(1);
    }
    if config.max_word_len == 0 {
        config.max_word_len = max_word.max(1);
    }
    ModelInstance::new(config, vocab, codes.clone(), embeddings, seed)
}

/// NER sequences for every sentence; PK examples for every interaction with
/// a known code; PD pairs for every (PD precipitant, effect) combination in a
/// sentence, positive when linked. Mentions off token boundaries are skipped.
pub fn build_objectives(model: &ModelInstance, sets: &[TrainSet], config: &TrainConfig) -> Result<Objectives> {
    let options = EncodeOptions { coordination: config.coordination };
    let mut out = Objectives::default();
    for set in sets {
        let weight = config.source_weight(set.source);
        for label in &set.corpus.labels {
            let ctx = BindingContext::for_label(label, &config.proxies);
            for (_, s) in label.sentences() {
                let (seq, _) = encode(s, &ctx, set.source, options);
                if seq.tokens.is_empty() {
                    continue;
                }
                let id = format!("{}/{}", label.id, s.id);
                let input = model.encode(&seq.tokens);
                out.ner.push(NerExample {
                    id: id.clone(),
                    input: input.clone(),
                    tags: seq.tags.iter().map(|t| t.index()).collect(),
                    source_weight: weight,
                });
                for inter in &s.interactions {
                    let (Outcome::PK { code }, Some(p)) = (&inter.outcome, s.mention(&inter.precipitant)) else {
                        continue;
                    };
                    let (Some(target), Ok(bound)) =
                        (model.codes.index_of(code), entity_bind(&seq.tokens, &p.spans, None))
                    else {
                        continue;
                    };
                    out.pk.push(OutcomeExample {
                        id: format!("{id}/{}", inter.id),
                        input: input.clone(),
                        bound: model.vocab.word_ids(&bound),
                        head: Head::Pk,
                        target,
                        source_weight: weight,
                    });
                }
                let effects: Vec<_> =
                    s.mentions.iter().filter(|m| m.kind == MentionKind::SpecificInteraction).collect();
                for p in s.mentions.iter().filter(|m| m.kind == MentionKind::Precipitant) {
                    let linked: Vec<&str> = s
                        .interactions
                        .iter()
                        .filter(|i| i.precipitant == p.id)
                        .filter_map(|i| match &i.outcome {
                            Outcome::PD { effect } => Some(effect.as_str()),
                            _ => None,
                        })
                        .collect();
                    if linked.is_empty() {
                        continue;
                    }
                    for e in &effects {
                        let Ok(bound) = entity_bind(&seq.tokens, &p.spans, Some(&e.spans)) else { continue };
                        out.pd.push(OutcomeExample {
                            id: format!("{id}/{}/{}", p.id, e.id),
                            input: input.clone(),
                            bound: model.vocab.word_ids(&bound),
                            head: Head::Pd,
                            target: usize::from(linked.contains(&e.id.as_str())),
                            source_weight: weight,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorSpec};

    #[test]
    fn objectives_cover_every_interaction_kind() {
        let codes = CodeVocabulary::placeholder();
        let spec = GeneratorSpec { seed: 3, labels: 2, sentences_per_label: 12, ..GeneratorSpec::default() };
        let corpus = generate_corpus(&spec, &codes).unwrap();
        let sets = [TrainSet { corpus: &corpus, source: SourceWeight::Primary }];
        let model = prepare_model(&sets, &ModelConfig::micro(), &codes, None, &[], 0).unwrap();
        let obj = build_objectives(&model, &sets, &TrainConfig::default()).unwrap();
        assert_eq!(obj.ner.len(), corpus.sentence_count());
        let pk = corpus
            .sentences()
            .flat_map(|(_, _, s)| &s.interactions)
            .filter(|i| matches!(i.outcome, Outcome::PK { .. }));
        assert_eq!(obj.pk.len(), pk.count());
        assert!(obj.pd.iter().any(|e| e.target == 1));
        assert!(obj.ner.iter().all(|e| e.source_weight == 3.0 && e.tags.len() == e.input.len()));
        assert!(model.config.max_len >= obj.ner.iter().map(|e| e.input.len()).max().unwrap());
    }
}
