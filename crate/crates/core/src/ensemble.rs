//! Voting over k prediction sets: annotations are accepted greedily by
//! descending vote count, and later annotations overlapping an accepted one
//! are discarded. Entities and relations are voted in separate pools.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::annot::{
    canonicalize_sentence, spans_overlap, Interaction, InteractionKind, Mention, MentionKind, Outcome, Span,
};
use crate::corpus::{CorpusFile, Provenance};
use crate::error::{Error, Result};
use crate::score::{check_skeletons, relation_parts, OutcomeKey, SentenceRef};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityVote {
    pub sentence: SentenceRef,
    pub kind: MentionKind,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationVote {
    pub sentence: SentenceRef,
    pub precipitant: Vec<Span>,
    pub kind: InteractionKind,
    pub outcome: OutcomeKey,
}

/// Number of prediction sets holding each annotation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoteTally {
    pub k: usize,
    pub entities: BTreeMap<EntityVote, usize>,
    pub relations: BTreeMap<RelationVote, usize>,
}

fn sorted(spans: &[Span]) -> Vec<Span> {
    let mut s = spans.to_vec();
    s.sort();
    s
}

/// Counts each distinct annotation once per prediction set.
pub fn tally(sets: &[CorpusFile]) -> VoteTally {
    let mut t = VoteTally { k: sets.len(), ..VoteTally::default() };
    for set in sets {
        let mut entities = BTreeSet::new();
        let mut relations = BTreeSet::new();
        for (label, _, s) in set.sentences() {
            let sref: SentenceRef = (label.id.clone(), s.id.clone());
            for m in &s.mentions {
                entities.insert(EntityVote { sentence: sref.clone(), kind: m.kind, spans: sorted(&m.spans) });
            }
            for (precipitant, kind, outcome) in relation_parts(s) {
                relations.insert(RelationVote { sentence: sref.clone(), precipitant, kind, outcome });
            }
        }
        for e in entities {
            *t.entities.entry(e).or_default() += 1;
        }
        for r in relations {
            *t.relations.entry(r).or_default() += 1;
        }
    }
    t
}

impl VoteTally {
    /// Tab-separated lines: pool, sentence, annotation, votes.
    pub fn report(&self) -> String {
        let spans = |s: &[Span]| s.iter().map(|x| format!("{}-{}", x.start, x.end)).collect::<Vec<_>>().join(",");
        let mut out = format!("k\t{}\n", self.k);
        for (e, v) in &self.entities {
            out += &format!("entity\t{}/{}\t{} {}\t{v}\n", e.sentence.0, e.sentence.1, e.kind, spans(&e.spans));
        }
        for (r, v) in &self.relations {
            let outcome = match &r.outcome {
                OutcomeKey::Effect(s) => spans(s),
                OutcomeKey::Code(c) => c.clone(),
                OutcomeKey::None => "-".into(),
            };
            out += &format!(
                "relation\t{}/{}\t{} {} {outcome}\t{v}\n",
                r.sentence.0,
                r.sentence.1,
                spans(&r.precipitant),
                r.kind
            );
        }
        out
    }
}

fn start(spans: &[Span]) -> usize {
    spans.first().map_or(0, |s| s.start)
}

/// Same-precipitant PD relations to different effects can coexist.
fn relations_conflict(a: &RelationVote, b: &RelationVote) -> bool {
    if a.sentence != b.sentence || !spans_overlap(&a.precipitant, &b.precipitant) {
        return false;
    }
    !(a.kind == InteractionKind::PD
        && b.kind == InteractionKind::PD
        && a.precipitant == b.precipitant
        && a.outcome != b.outcome)
}

fn entity_conflicts(accepted: &[EntityVote], e: &EntityVote) -> bool {
    accepted.iter().any(|a| a.sentence == e.sentence && spans_overlap(&a.spans, &e.spans))
}

/// Merges `sets` by voting. Keys with fewer than `min_votes` votes are
/// dropped; accepted relations bring their precipitant and effect mentions
/// into the entity pool unless those conflict, in which case the relation is
/// dropped.
pub fn merge(sets: &[CorpusFile], min_votes: usize) -> Result<CorpusFile> {
    let Some(first) = sets.first() else {
        return Err(Error::Invalid("ensemble merge needs at least one prediction set".into()));
    };
    for s in &sets[1..] {
        check_skeletons(first, s)?;
    }
    let t = tally(sets);

    let mut entity_order: Vec<(&EntityVote, usize)> =
        t.entities.iter().filter(|(_, &v)| v >= min_votes).map(|(e, &v)| (e, v)).collect();
    entity_order.sort_by(|(a, va), (b, vb)| {
        (std::cmp::Reverse(*va), start(&a.spans), a.kind.as_str(), &a.spans, &a.sentence).cmp(&(
            std::cmp::Reverse(*vb),
            start(&b.spans),
            b.kind.as_str(),
            &b.spans,
            &b.sentence,
        ))
    });
    let mut entities: Vec<EntityVote> = Vec::new();
    for (e, _) in entity_order {
        if !entity_conflicts(&entities, e) {
            entities.push(e.clone());
        }
    }

    let mut relation_order: Vec<(&RelationVote, usize)> =
        t.relations.iter().filter(|(_, &v)| v >= min_votes).map(|(r, &v)| (r, v)).collect();
    relation_order.sort_by(|(a, va), (b, vb)| {
        (std::cmp::Reverse(*va), start(&a.precipitant), a.kind.as_str(), &a.precipitant, &a.outcome, &a.sentence).cmp(
            &(std::cmp::Reverse(*vb), start(&b.precipitant), b.kind.as_str(), &b.precipitant, &b.outcome, &b.sentence),
        )
    });
    let mut relations: Vec<RelationVote> = Vec::new();
    for (r, _) in relation_order {
        if relations.iter().any(|a| relations_conflict(a, r)) {
            continue;
        }
        let mut needed = vec![EntityVote {
            sentence: r.sentence.clone(),
            kind: MentionKind::Precipitant,
            spans: r.precipitant.clone(),
        }];
        if let OutcomeKey::Effect(spans) = &r.outcome {
            needed.push(EntityVote {
                sentence: r.sentence.clone(),
                kind: MentionKind::SpecificInteraction,
                spans: spans.clone(),
            });
        }
        let missing: Vec<EntityVote> = needed.into_iter().filter(|e| !entities.contains(e)).collect();
        let mut ok = true;
        let mut staged: Vec<EntityVote> = Vec::new();
        for e in &missing {
            if entity_conflicts(&entities, e) || entity_conflicts(&staged, e) {
                ok = false;
                break;
            }
            staged.push(e.clone());
        }
        if ok {
            entities.extend(staged);
            relations.push(r.clone());
        }
    }

    let mut by_sentence: HashMap<&SentenceRef, (Vec<&EntityVote>, Vec<&RelationVote>)> = HashMap::new();
    for e in &entities {
        by_sentence.entry(&e.sentence).or_default().0.push(e);
    }
    for r in &relations {
        by_sentence.entry(&r.sentence).or_default().1.push(r);
    }
    let mut out = first.skeleton();
    out.provenance = Provenance::Predicted;
    for label in &mut out.labels {
        let lid = label.id.clone();
        for s in label.sentences_mut() {
            let Some((ents, rels)) = by_sentence.get(&(lid.clone(), s.id.clone())) else { continue };
            let mut ents = ents.clone();
            ents.sort();
            for (i, e) in ents.iter().enumerate() {
                s.mentions.push(Mention::from_spans(format!("M{}", i + 1), e.kind, e.spans.clone(), &s.text)?);
            }
            let find = |kind: MentionKind, spans: &[Span], s: &crate::annot::Sentence| {
                s.mentions.iter().find(|m| m.kind == kind && m.spans == spans).map(|m| m.id.clone())
            };
            let mut rels = rels.clone();
            rels.sort();
            for (i, r) in rels.iter().enumerate() {
                let precipitant =
                    find(MentionKind::Precipitant, &r.precipitant, s).expect("relation mentions accepted");
                let outcome = match &r.outcome {
                    OutcomeKey::Effect(spans) => Outcome::PD {
                        effect: find(MentionKind::SpecificInteraction, spans, s).expect("relation mentions accepted"),
                    },
                    OutcomeKey::Code(code) => Outcome::PK { code: code.clone() },
                    OutcomeKey::None => Outcome::UN,
                };
                s.interactions.push(Interaction { id: format!("I{}", i + 1), precipitant, outcome });
            }
            canonicalize_sentence(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{DrugLabel, Section, Sentence};

    const TEXT: &str = "Avoid aspirin and strong warfarin with bleeding risk .";

    fn corpus(mentions: &[(MentionKind, usize, usize)], relations: &[(usize, Outcome)]) -> CorpusFile {
        let mut s = Sentence::new("S1", TEXT);
        for (i, &(k, a, b)) in mentions.iter().enumerate() {
            s.mentions.push(Mention::from_spans(format!("M{}", i + 1), k, vec![Span::new(a, b)], TEXT).unwrap());
        }
        for (i, (m, o)) in relations.iter().enumerate() {
            s.interactions.push(Interaction {
                id: format!("I{}", i + 1),
                precipitant: format!("M{m}"),
                outcome: o.clone(),
            });
        }
        canonicalize_sentence(&mut s);
        let label = DrugLabel {
            id: "L1".into(),
            drug: "X".into(),
            aliases: vec![],
            sections: vec![Section { name: "DRUG INTERACTIONS".into(), sentences: vec![s] }],
        };
        CorpusFile::new(Provenance::Predicted, vec![label])
    }

    const P: MentionKind = MentionKind::Precipitant;

    #[test]
    fn majority_beats_overlapping_minority() {
        let a = corpus(&[(P, 6, 13)], &[(1, Outcome::UN)]);
        let b = corpus(&[(P, 6, 17)], &[(1, Outcome::UN)]);
        let merged = merge(&[a.clone(), a.clone(), a.clone(), b], 1).unwrap();
        assert_eq!(merged, merge(std::slice::from_ref(&a), 1).unwrap());
        assert_eq!(merge(std::slice::from_ref(&a), 1).unwrap(), a);
    }

    #[test]
    fn disjoint_ties_are_both_kept() {
        let a = corpus(&[(P, 6, 13)], &[]);
        let b = corpus(&[(P, 25, 33)], &[]);
        let merged = merge(&[a, b], 1).unwrap();
        assert_eq!(merged.labels[0].sections[0].sentences[0].mentions.len(), 2);
    }

    #[test]
    fn tally_counts_per_set() {
        let a = corpus(&[(P, 6, 13), (P, 6, 13)], &[]);
        let b = corpus(&[(P, 6, 14)], &[]);
        let t = tally(&[a.clone(), a, b]);
        assert_eq!(t.entities.len(), 2);
        assert_eq!(t.entities.values().copied().collect::<Vec<_>>(), [2, 1]);
        assert!(tally(&[]).entities.is_empty());
    }

    #[test]
    fn relations_force_add_their_mentions() {
        let effect = (MentionKind::SpecificInteraction, 39, 47);
        let a = corpus(&[(P, 25, 33), effect], &[(1, Outcome::PD { effect: "M2".into() })]);
        let b = corpus(&[(P, 25, 33)], &[]);
        let c = corpus(&[(P, 18, 33), (MentionKind::SpecificInteraction, 39, 52)], &[]);
        let merged = merge(&[b.clone(), c.clone(), c, a], 1).unwrap();
        let s = &merged.labels[0].sections[0].sentences[0];
        // "strong warfarin" outvotes "warfarin", so the PD relation loses its precipitant.
        assert!(s.interactions.is_empty());
        let merged =
            merge(&[b.clone(), b, corpus(&[(P, 25, 33), effect], &[(1, Outcome::PD { effect: "M2".into() })])], 2)
                .unwrap();
        let s = &merged.labels[0].sections[0].sentences[0];
        assert_eq!(s.mentions.len(), 1);
        assert!(s.interactions.is_empty());
    }

    #[test]
    fn pd_relations_of_one_precipitant_coexist() {
        let a = corpus(
            &[(P, 25, 33), (MentionKind::SpecificInteraction, 39, 47), (MentionKind::SpecificInteraction, 48, 52)],
            &[(1, Outcome::PD { effect: "M2".into() }), (1, Outcome::PD { effect: "M3".into() })],
        );
        assert_eq!(merge(std::slice::from_ref(&a), 1).unwrap(), a);
    }

    #[test]
    fn mismatched_skeletons_are_rejected() {
        let a = corpus(&[], &[]);
        let mut b = a.clone();
        b.labels[0].sections[0].sentences[0].text.push('!');
        assert!(merge(&[a, b], 1).is_err());
    }
}
