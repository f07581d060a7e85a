use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{decode, encode, BindingContext, DropReason, EncodeOptions, EncodeReport, SourceWeight};
use crate::annot::{Interaction, Mention, MentionKind, Outcome, Sentence, Span};
use crate::corpus::{CorpusFile, Provenance};
use crate::error::Result;
use crate::infer::split_coordination;
use crate::score::{score, ScoreReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    /// Gold versus encode→decode reconstruction.
    pub score: ScoreReport,
    /// Gold versus the gold annotations the encode reports say were kept.
    pub predicted: ScoreReport,
    pub mention_drops: BTreeMap<DropReason, usize>,
    pub interaction_drops: BTreeMap<DropReason, usize>,
    pub reports: Vec<EncodeReport>,
}

fn sorted(spans: &[Span]) -> Vec<Span> {
    let mut s = spans.to_vec();
    s.sort();
    s
}

/// Rebuilds a sentence from its tag sequence. Interactions come from gold,
/// restricted to those whose mentions were reconstructed exactly.
fn reconstruct(gold: &Sentence, ctx: &BindingContext, options: EncodeOptions) -> (Sentence, EncodeReport) {
    let (seq, report) = encode(gold, ctx, SourceWeight::Primary, options);
    let mut out = Sentence::new(gold.id.clone(), gold.text.clone());
    let mut by_key: HashMap<(MentionKind, Vec<Span>), String> = HashMap::new();
    let mut push = |kind: MentionKind, spans: Vec<Span>, out: &mut Sentence| {
        let id = format!("M{}", out.mentions.len() + 1);
        let m =
            Mention::from_spans(id.clone(), kind, spans.clone(), &gold.text).expect("decoded spans lie in the text");
        out.mentions.push(m);
        by_key.insert((kind, sorted(&spans)), id);
    };
    for d in decode(&seq.tokens, &seq.tags) {
        if options.coordination && d.kind() == MentionKind::Precipitant {
            for spans in split_coordination(&seq.tokens[d.tokens.0..d.tokens.1]) {
                push(d.kind(), spans, &mut out);
            }
        } else {
            push(d.kind(), vec![d.span], &mut out);
        }
    }
    let lost: HashSet<&str> = report.dropped_interactions.iter().map(|d| d.interaction.as_str()).collect();
    let lookup = |id: &str| gold.mention(id).and_then(|m| by_key.get(&(m.kind, sorted(&m.spans)))).cloned();
    for i in gold.interactions.iter().filter(|i| !lost.contains(i.id.as_str())) {
        let Some(p) = lookup(&i.precipitant) else { continue };
        let outcome = match &i.outcome {
            Outcome::PD { effect } => match lookup(effect) {
                Some(e) => Outcome::PD { effect: e },
                None => continue,
            },
            o => o.clone(),
        };
        out.interactions.push(Interaction { id: format!("I{}", out.interactions.len() + 1), precipitant: p, outcome });
    }
    (out, report)
}

/// Gold restricted to what an encode report keeps.
fn kept_only(gold: &Sentence, report: &EncodeReport) -> Sentence {
    let kept: HashSet<&str> = report.kept.iter().map(String::as_str).collect();
    let lost: HashSet<&str> = report.dropped_interactions.iter().map(|d| d.interaction.as_str()).collect();
    let mut s = gold.clone();
    s.mentions.retain(|m| kept.contains(m.id.as_str()));
    s.interactions.retain(|i| !lost.contains(i.id.as_str()));
    s
}

/// Encodes and decodes every sentence and scores the result against gold:
/// the ceiling the tagging reduction puts on any model.
pub fn roundtrip_upperbound(gold: &CorpusFile, proxies: &[String], options: EncodeOptions) -> Result<RoundtripReport> {
    let mut rebuilt = gold.clone();
    rebuilt.provenance = Provenance::Predicted;
    rebuilt.metadata = None;
    let mut kept = rebuilt.clone();
    let mut reports = Vec::new();
    for ((g, r), k) in gold.labels.iter().zip(&mut rebuilt.labels).zip(&mut kept.labels) {
        let ctx = BindingContext::for_label(g, proxies);
        for ((gs, rs), ks) in g.sections.iter().flat_map(|s| &s.sentences).zip(r.sentences_mut()).zip(k.sentences_mut())
        {
            let (sentence, report) = reconstruct(gs, &ctx, options);
            *rs = sentence;
            *ks = kept_only(gs, &report);
            reports.push(report);
        }
    }
    let mut mention_drops = BTreeMap::new();
    let mut interaction_drops = BTreeMap::new();
    for r in &reports {
        for d in &r.dropped {
            *mention_drops.entry(d.reason).or_insert(0) += 1;
        }
        for d in &r.dropped_interactions {
            *interaction_drops.entry(d.reason).or_insert(0) += 1;
        }
    }
    Ok(RoundtripReport {
        score: score(gold, &rebuilt)?,
        predicted: score(gold, &kept)?,
        mention_drops,
        interaction_drops,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::CodeVocabulary;
    use crate::corpus::{generate_corpus, GeneratorSpec};

    #[test]
    fn clean_generator_corpus_round_trips_perfectly() {
        let spec = GeneratorSpec { seed: 5, labels: 5, sentences_per_label: 20, ..GeneratorSpec::default() };
        let c = generate_corpus(&spec, &CodeVocabulary::placeholder()).unwrap();
        let r = roundtrip_upperbound(&c, &[], EncodeOptions::default()).unwrap();
        for s in &r.score.scores {
            assert_eq!(s.f1, 1.0, "{}", s.criterion);
        }
        assert!(r.mention_drops.is_empty());
    }

    #[test]
    fn injected_drops_are_predicted_and_coordination_mode_recovers_them() {
        let spec = GeneratorSpec {
            seed: 9,
            labels: 5,
            sentences_per_label: 20,
            overlap_rate: 0.1,
            coordination_rate: 0.2,
            ..GeneratorSpec::default()
        };
        let c = generate_corpus(&spec, &CodeVocabulary::placeholder()).unwrap();
        let r = roundtrip_upperbound(&c, &[], EncodeOptions::default()).unwrap();
        assert!(r.score.entity_primary().recall < 1.0);
        assert_eq!(r.score.entity_primary().precision, 1.0);
        for (a, b) in r.score.scores.iter().zip(&r.predicted.scores) {
            assert_eq!(a.counts, b.counts, "{}", a.criterion);
        }
        let injected = c.metadata.as_ref().unwrap().injections.len();
        assert_eq!(r.mention_drops.values().sum::<usize>(), injected);

        let r = roundtrip_upperbound(&c, &[], EncodeOptions { coordination: true }).unwrap();
        assert_eq!(r.mention_drops.get(&DropReason::Discontiguous), None);
        for (a, b) in r.score.scores.iter().zip(&r.predicted.scores) {
            assert_eq!(a.counts, b.counts, "{}", a.criterion);
        }
    }
}
