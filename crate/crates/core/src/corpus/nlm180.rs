//! Mapping of NLM-180-style coarse records onto the corpus schema.
//!
//! NLM-180 does not separate triggers from effects, and its PK records only
//! carry an increase/decrease direction. Triggers of UN and PK records stay
//! triggers; for PD records the trigger span becomes the effect
//! (SpecificInteraction) and no trigger is emitted. PK outcomes get a
//! `COARSE_*` marker that bootstrapping later resolves to a real code.

use serde::{Deserialize, Serialize};

use crate::annot::{
    Direction, DrugLabel, Interaction, InteractionKind, Mention, MentionKind, Outcome, Section, Sentence, Span,
};
use crate::corpus::{json_error, CorpusFile, Provenance};
use crate::error::{Error, Result};

pub const NLM180_VERSION: &str = "nlm180-coarse/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nlm180Record {
    pub id: String,
    pub section: String,
    pub text: String,
    #[serde(default)]
    pub triggers: Vec<Span>,
    #[serde(default)]
    pub precipitants: Vec<Span>,
    pub kind: InteractionKind,
    #[serde(default)]
    pub direction: Option<Direction>,
}

impl Nlm180Record {
    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match (self.kind, self.direction) {
            (InteractionKind::PK, None) => out.push(format!("record {}: PK record without direction", self.id)),
            (InteractionKind::PD | InteractionKind::UN, Some(_)) => {
                out.push(format!("record {}: direction on a {} record", self.id, self.kind))
            }
            _ => {}
        }
        let len = crate::annot::char_len(&self.text);
        for s in self.triggers.iter().chain(&self.precipitants) {
            if s.start >= s.end || s.end > len {
                out.push(format!("record {}: bad span {s}", self.id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nlm180Label {
    pub id: String,
    pub drug: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub records: Vec<Nlm180Record>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nlm180File {
    pub version: String,
    pub labels: Vec<Nlm180Label>,
}

pub fn parse_nlm180(bytes: &[u8]) -> Result<Nlm180File> {
    let file: Nlm180File = serde_json::from_slice(bytes).map_err(json_error)?;
    if file.version != NLM180_VERSION {
        return Err(Error::Version { found: file.version, expected: NLM180_VERSION.into() });
    }
    let v: Vec<String> = file.labels.iter().flat_map(|l| l.records.iter().flat_map(|r| r.violations())).collect();
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    Ok(file)
}

#[derive(Debug, Clone)]
pub struct MapOutcome {
    pub corpus: CorpusFile,
    /// One entry per skipped record.
    pub warnings: Vec<String>,
}

fn map_record(rec: &Nlm180Record) -> Result<Sentence> {
    let text = &rec.text;
    let mut sentence = Sentence::new(rec.id.clone(), text.clone());
    let mut next_mention = 0;
    let mut mention = |kind: MentionKind, span: Span, out: &mut Vec<Mention>| -> Result<String> {
        next_mention += 1;
        let id = format!("M{next_mention}");
        out.push(Mention::from_spans(id.clone(), kind, vec![span], text)?);
        Ok(id)
    };

    let mut mentions = Vec::new();
    let precipitants = rec
        .precipitants
        .iter()
        .map(|s| mention(MentionKind::Precipitant, *s, &mut mentions))
        .collect::<Result<Vec<_>>>()?;
    let trigger_kind = match rec.kind {
        InteractionKind::PD => MentionKind::SpecificInteraction,
        InteractionKind::PK | InteractionKind::UN => MentionKind::Trigger,
    };
    let triggers = rec.triggers.iter().map(|s| mention(trigger_kind, *s, &mut mentions)).collect::<Result<Vec<_>>>()?;

    let mut interactions = Vec::new();
    for p in &precipitants {
        let outcomes: Vec<Outcome> = match rec.kind {
            InteractionKind::PD => triggers.iter().map(|e| Outcome::PD { effect: e.clone() }).collect(),
            InteractionKind::PK => {
                let dir = rec.direction.expect("validated PK record has a direction");
                vec![Outcome::PK { code: dir.coarse_marker().to_string() }]
            }
            InteractionKind::UN => vec![Outcome::UN],
        };
        for outcome in outcomes {
            interactions.push(Interaction {
                id: format!("I{}", interactions.len() + 1),
                precipitant: p.clone(),
                outcome,
            });
        }
    }
    sentence.mentions = mentions;
    sentence.interactions = interactions;
    Ok(sentence)
}

/// Maps coarse records to a corpus with provenance `mapped`.
pub fn map_nlm180(file: &Nlm180File) -> Result<MapOutcome> {
    let mut warnings = Vec::new();
    let mut labels = Vec::with_capacity(file.labels.len());
    for l in &file.labels {
        let mut sections: Vec<Section> = Vec::new();
        for rec in &l.records {
            let v = rec.violations();
            if !v.is_empty() {
                return Err(Error::Validation(v));
            }
            if rec.kind == InteractionKind::PD && rec.triggers.is_empty() {
                let msg = format!("record {}: PD record without a trigger span skipped", rec.id);
                log::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            let sentence = map_record(rec)?;
            match sections.iter_mut().find(|s| s.name == rec.section) {
                Some(s) => s.sentences.push(sentence),
                None => sections.push(Section { name: rec.section.clone(), sentences: vec![sentence] }),
            }
        }
        labels.push(DrugLabel { id: l.id.clone(), drug: l.drug.clone(), aliases: l.aliases.clone(), sections });
    }
    Ok(MapOutcome { corpus: CorpusFile::new(Provenance::Mapped, labels), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annot::{CodeVocabulary, COARSE_DECREASE};

    fn record(kind: InteractionKind, direction: Option<Direction>, text: &str, trig: &str, prec: &str) -> Nlm180Record {
        let span = |needle: &str| {
            let b = text.find(needle).unwrap();
            Span::new(b, b + needle.len())
        };
        Nlm180Record {
            id: "R1".into(),
            section: "DRUG INTERACTIONS".into(),
            text: text.into(),
            triggers: if trig.is_empty() { vec![] } else { vec![span(trig)] },
            precipitants: vec![span(prec)],
            kind,
            direction,
        }
    }

    fn file(records: Vec<Nlm180Record>) -> Nlm180File {
        Nlm180File {
            version: NLM180_VERSION.into(),
            labels: vec![Nlm180Label { id: "L".into(), drug: "Drug".into(), aliases: vec![], records }],
        }
    }

    fn only_sentence(out: &MapOutcome) -> &Sentence {
        out.corpus.sentences().next().unwrap().2
    }

    #[test]
    fn pd_trigger_becomes_effect_without_trigger_mention() {
        let r = record(
            InteractionKind::PD,
            None,
            "Alcohol may increase hypotension with Drug.",
            "may increase hypotension",
            "Alcohol",
        );
        let out = map_nlm180(&file(vec![r])).unwrap();
        let s = only_sentence(&out);
        assert!(s.mentions.iter().all(|m| m.kind != MentionKind::Trigger));
        let effect = s.mentions.iter().find(|m| m.kind == MentionKind::SpecificInteraction).unwrap();
        assert_eq!(effect.text, "may increase hypotension");
        assert_eq!(s.interactions[0].outcome, Outcome::PD { effect: effect.id.clone() });
        assert!(out.corpus.validate(&CodeVocabulary::placeholder()).is_ok());
    }

    #[test]
    fn un_trigger_stays_trigger() {
        let r = record(InteractionKind::UN, None, "Use caution with aspirin.", "caution", "aspirin");
        let out = map_nlm180(&file(vec![r])).unwrap();
        let s = only_sentence(&out);
        assert_eq!(s.mentions.iter().filter(|m| m.kind == MentionKind::Trigger).count(), 1);
        assert_eq!(s.interactions[0].outcome, Outcome::UN);
    }

    #[test]
    fn pk_direction_becomes_coarse_marker() {
        let r = record(
            InteractionKind::PK,
            Some(Direction::Decrease),
            "Rifampin decreased Drug levels.",
            "decreased",
            "Rifampin",
        );
        let out = map_nlm180(&file(vec![r])).unwrap();
        let s = only_sentence(&out);
        assert_eq!(s.interactions[0].outcome, Outcome::PK { code: COARSE_DECREASE.into() });
        assert_eq!(out.corpus.provenance, Provenance::Mapped);
        assert!(out.corpus.validate(&CodeVocabulary::placeholder()).is_ok());
    }

    #[test]
    fn pd_without_trigger_is_skipped_with_warning() {
        let r = record(InteractionKind::PD, None, "Aspirin and Drug.", "", "Aspirin");
        let out = map_nlm180(&file(vec![r])).unwrap();
        assert_eq!(out.corpus.sentence_count(), 0);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn pk_without_direction_is_rejected() {
        let r = record(InteractionKind::PK, None, "Rifampin decreased Drug.", "decreased", "Rifampin");
        assert!(matches!(map_nlm180(&file(vec![r])), Err(Error::Validation(_))));
    }
}
