//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use ddi_core::annot::{
    canonicalize_sentence, spans_overlap, CodeVocabulary, DrugLabel, Interaction, Mention, MentionKind, Outcome,
    Section, Sentence, Span,
};
use ddi_core::corpus::{generate_corpus, CorpusFile, GeneratorSpec, Provenance};
use ddi_core::score::{Criterion, Mode, Task};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [MentionKind; 3] = [MentionKind::Precipitant, MentionKind::Trigger, MentionKind::SpecificInteraction];

fn random_spans(rng: &mut ChaCha8Rng, len: usize) -> Vec<Span> {
    let a = rng.random_range(0..len - 1);
    let b = rng.random_range(a + 1..len.min(a + 6) + 1);
    let mut spans = vec![Span::new(a, b)];
    if rng.random_bool(0.15) && b + 2 < len {
        let c = rng.random_range(b + 1..len - 1);
        spans.push(Span::new(c, c + 1));
        if rng.random_bool(0.5) {
            spans.reverse();
        }
    }
    spans
}

fn random_outcome(rng: &mut ChaCha8Rng, mentions: &[Mention], codes: &CodeVocabulary) -> Outcome {
    match rng.random_range(0..3) {
        0 => Outcome::PD { effect: mentions[rng.random_range(0..mentions.len())].id.clone() },
        1 => Outcome::PK { code: codes.codes[rng.random_range(0..3)].code.clone() },
        _ => Outcome::UN,
    }
}

fn random_sentence(rng: &mut ChaCha8Rng, id: &str, text: &str, codes: &CodeVocabulary) -> Sentence {
    let len = text.chars().count();
    let mut s = Sentence::new(id, text);
    for i in 0..rng.random_range(0..5) {
        let kind = KINDS[rng.random_range(0..3)];
        s.mentions.push(Mention::from_spans(format!("M{}", i + 1), kind, random_spans(rng, len), text).unwrap());
    }
    if !s.mentions.is_empty() {
        for i in 0..rng.random_range(0..4) {
            let p = s.mentions[rng.random_range(0..s.mentions.len())].id.clone();
            let outcome = random_outcome(rng, &s.mentions, codes);
            s.interactions.push(Interaction { id: format!("I{}", i + 1), precipitant: p, outcome });
        }
    }
    s
}

/// Prediction derived from gold by dropping, retyping, shifting and adding.
fn perturb(rng: &mut ChaCha8Rng, gold: &Sentence, codes: &CodeVocabulary) -> Sentence {
    let len = gold.text.chars().count();
    let mut s = gold.clone();
    s.mentions.retain(|_| rng.random_bool(0.75));
    for m in &mut s.mentions {
        if rng.random_bool(0.15) {
            m.kind = KINDS[rng.random_range(0..3)];
        }
        if rng.random_bool(0.1) && m.spans[0].end < len {
            m.spans[0].end += 1;
        }
    }
    let extra = random_sentence(rng, &gold.id, &gold.text, codes);
    for m in extra.mentions.into_iter().take(rng.random_range(0..3)) {
        let id = format!("X{}", m.id);
        s.mentions.push(Mention { id, ..m });
    }
    s.interactions.retain(|_| rng.random_bool(0.8));
    for i in &mut s.interactions {
        if rng.random_bool(0.15) {
            i.outcome = random_outcome(rng, &gold.mentions, codes);
        }
    }
    if !s.mentions.is_empty() && rng.random_bool(0.5) {
        let p = s.mentions[rng.random_range(0..s.mentions.len())].id.clone();
        let outcome = random_outcome(rng, &s.mentions, codes);
        s.interactions.push(Interaction { id: "IX".into(), precipitant: p, outcome });
    }
    if rng.random_bool(0.2) {
        s.mentions.extend(s.mentions.clone());
    }
    s
}

/// A random small gold corpus and a perturbed prediction over the same
/// skeleton. Annotations need not be valid; dangling references occur.
pub fn random_pair(seed: u64) -> (CorpusFile, CorpusFile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = CodeVocabulary::placeholder();
    let texts = ["Avoid aspirin with warfarin due to bleeding.", "Ketoconazole raises levels of X.", "No effect seen."];
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for l in 0..rng.random_range(1..4) {
        let mut gs = Vec::new();
        let mut ps = Vec::new();
        for i in 0..rng.random_range(1..5) {
            let text = texts[rng.random_range(0..texts.len())];
            let g = random_sentence(&mut rng, &format!("S{i}"), text, &codes);
            ps.push(perturb(&mut rng, &g, &codes));
            gs.push(g);
        }
        let label = |sentences| DrugLabel {
            id: format!("L{l}"),
            drug: "X".into(),
            aliases: vec![],
            sections: vec![Section { name: ["DRUG INTERACTIONS", "WARNINGS"][l % 2].into(), sentences }],
        };
        gold.push(label(gs));
        pred.push(label(ps));
    }
    (CorpusFile::new(Provenance::Gold, gold), CorpusFile::new(Provenance::Predicted, pred))
}

pub type Key = (String, String, Option<MentionKind>, Vec<Span>, Option<String>);

fn normalized(spans: &[Span]) -> Vec<Span> {
    let mut v = spans.to_vec();
    v.sort_by_key(|s| (s.start, s.end));
    v
}

pub fn keys(corpus: &CorpusFile, c: Criterion) -> Vec<Key> {
    let mut out: Vec<Key> = Vec::new();
    for label in &corpus.labels {
        for section in &label.sections {
            for s in &section.sentences {
                let primary = c.mode == Mode::Primary;
                match c.task {
                    Task::Entity => {
                        for m in &s.mentions {
                            out.push((
                                label.id.clone(),
                                s.id.clone(),
                                primary.then_some(m.kind),
                                normalized(&m.spans),
                                None,
                            ));
                        }
                    }
                    Task::Relation => {
                        for i in &s.interactions {
                            let Some(p) = s.mentions.iter().find(|m| m.id == i.precipitant) else { continue };
                            if p.kind != MentionKind::Precipitant {
                                continue;
                            }
                            let outcome = match &i.outcome {
                                Outcome::PD { effect } => match s.mentions.iter().find(|m| &m.id == effect) {
                                    Some(e) => format!("PD {:?}", normalized(&e.spans)),
                                    None => continue,
                                },
                                Outcome::PK { code } => format!("PK {code}"),
                                Outcome::UN => "UN".to_string(),
                            };
                            out.push((
                                label.id.clone(),
                                s.id.clone(),
                                None,
                                normalized(&p.spans),
                                primary.then_some(outcome),
                            ));
                        }
                    }
                }
            }
        }
    }
    let mut unique: Vec<Key> = Vec::new();
    for k in out {
        if !unique.contains(&k) {
            unique.push(k);
        }
    }
    unique
}

/// The relaxed key a primary key reduces to.
pub fn relax(k: &Key) -> Key {
    (k.0.clone(), k.1.clone(), None, k.3.clone(), None)
}

/// Brute-force (TP, FP, FN) per criterion by linear search over key lists.
pub fn oracle_counts(gold: &CorpusFile, pred: &CorpusFile, c: Criterion) -> (usize, usize, usize) {
    let g = keys(gold, c);
    let p = keys(pred, c);
    let tp = g.iter().filter(|k| p.contains(k)).count();
    (tp, p.len() - tp, g.len() - tp)
}

/// `k` predictions derived from one generated gold corpus, each missing
/// some annotations and carrying some spurious ones. Like tagger output, no
/// set has overlapping mentions within a sentence.
pub fn prediction_sets(seed: u64, k: usize) -> Vec<CorpusFile> {
    let codes = CodeVocabulary::placeholder();
    let spec = GeneratorSpec { seed, labels: 2, sentences_per_label: 5, ..GeneratorSpec::default() };
    let gold = generate_corpus(&spec, &codes).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    (0..k)
        .map(|_| {
            let mut c = gold.clone();
            c.provenance = Provenance::Predicted;
            c.metadata = None;
            for label in &mut c.labels {
                for s in label.sentences_mut() {
                    s.mentions.retain(|_| rng.random_bool(0.8));
                    let ids: Vec<String> = s.mentions.iter().map(|m| m.id.clone()).collect();
                    s.interactions.retain(|i| {
                        let effect_ok = match &i.outcome {
                            Outcome::PD { effect } => ids.contains(effect),
                            _ => true,
                        };
                        ids.contains(&i.precipitant) && effect_ok
                    });
                    let len = s.text.chars().count();
                    if rng.random_bool(0.4) && len > 8 {
                        let a = rng.random_range(0..len - 6);
                        let spans = vec![Span::new(a, a + rng.random_range(2..6))];
                        let m = Mention::from_spans("MX", MentionKind::Precipitant, spans, &s.text).unwrap();
                        if s.mentions.iter().any(|o| spans_overlap(&o.spans, &m.spans)) {
                            canonicalize_sentence(s);
                            continue;
                        }
                        if rng.random_bool(0.5) {
                            s.interactions.push(Interaction {
                                id: "IX".into(),
                                precipitant: "MX".into(),
                                outcome: Outcome::UN,
                            });
                        }
                        s.mentions.push(m);
                    }
                    canonicalize_sentence(s);
                }
            }
            c
        })
        .collect()
}

pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}
