//! Span-exact annotation model for drug-label sentences.
//!
//! Offsets count Unicode scalar values (Rust `char`s) of the owning
//! sentence text, start inclusive and end exclusive. A mention may cover
//! several disjoint spans; its `text` is the covered substrings joined by a
//! single space.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provisional PK outcome for mapped records that only carry a coarse
/// "increase" direction.
pub const COARSE_INCREASE: &str = "COARSE_INCREASE";
/// Provisional PK outcome for mapped records that only carry a coarse
/// "decrease" direction.
pub const COARSE_DECREASE: &str = "COARSE_DECREASE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// True when any span of `a` overlaps any span of `b`.
pub fn spans_overlap(a: &[Span], b: &[Span]) -> bool {
    a.iter().any(|x| b.iter().any(|y| x.overlaps(y)))
}

/// Number of scalar values in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by scalar-value offsets. `None` when out of bounds or reversed.
pub fn slice_chars(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let b_start = indices.nth(start)?;
    let b_end = if end == start { b_start } else { indices.nth(end - start - 1)? };
    Some(&text[b_start..b_end])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MentionKind {
    Trigger,
    Precipitant,
    SpecificInteraction,
}

impl MentionKind {
    pub const ALL: [MentionKind; 3] =
        [MentionKind::Trigger, MentionKind::Precipitant, MentionKind::SpecificInteraction];

    pub fn as_str(&self) -> &'static str {
        match self {
            MentionKind::Trigger => "Trigger",
            MentionKind::Precipitant => "Precipitant",
            MentionKind::SpecificInteraction => "SpecificInteraction",
        }
    }
}

impl fmt::Display for MentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub kind: MentionKind,
    pub spans: Vec<Span>,
    pub text: String,
}

impl Mention {
    /// Builds a mention whose text is taken from `sentence_text`.
    pub fn from_spans(id: impl Into<String>, kind: MentionKind, spans: Vec<Span>, sentence_text: &str) -> Result<Self> {
        let id = id.into();
        let text = join_spans(&id, &spans, sentence_text)?;
        Ok(Mention { id, kind, spans, text })
    }

    pub fn start(&self) -> usize {
        self.spans.first().map(|s| s.start).unwrap_or(0)
    }

    pub fn end(&self) -> usize {
        self.spans.last().map(|s| s.end).unwrap_or(0)
    }

    pub fn is_contiguous(&self) -> bool {
        self.spans.len() == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InteractionKind {
    PD,
    PK,
    UN,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 3] = [InteractionKind::PD, InteractionKind::PK, InteractionKind::UN];

    pub fn as_str(&self) -> &'static str {
        match self {
            InteractionKind::PD => "PD",
            InteractionKind::PK => "PK",
            InteractionKind::UN => "UN",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Interaction outcome; the variant fixes the interaction kind.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Outcome {
    /// Pharmacodynamic: id of the SpecificInteraction (effect) mention.
    PD { effect: String },
    /// Pharmacokinetic: NCI Thesaurus code.
    PK { code: String },
    /// Unspecified: no outcome.
    UN,
}

impl Outcome {
    pub fn kind(&self) -> InteractionKind {
        match self {
            Outcome::PD { .. } => InteractionKind::PD,
            Outcome::PK { .. } => InteractionKind::PK,
            Outcome::UN => InteractionKind::UN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub id: String,
    pub precipitant: String,
    pub outcome: Outcome,
}

impl Interaction {
    pub fn kind(&self) -> InteractionKind {
        self.outcome.kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub fn coarse_marker(&self) -> &'static str {
        match self {
            Direction::Increase => COARSE_INCREASE,
            Direction::Decrease => COARSE_DECREASE,
        }
    }

    pub fn from_coarse_marker(code: &str) -> Option<Direction> {
        match code {
            COARSE_INCREASE => Some(Direction::Increase),
            COARSE_DECREASE => Some(Direction::Decrease),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NciCode {
    pub code: String,
    pub direction: Direction,
}

fn is_nci_pattern(code: &str) -> bool {
    let mut chars = code.chars();
    chars.next() == Some('C') && {
        let rest = chars.as_str();
        !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
    }
}

/// The fixed PK outcome label space together with each code's direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeVocabulary {
    pub codes: Vec<NciCode>,
}

const DEFAULT_CODES: &str = include_str!("../config/nci_codes.json");

impl CodeVocabulary {
    pub fn new(codes: Vec<NciCode>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &codes {
            if !is_nci_pattern(&c.code) {
                return Err(Error::Config(format!("code {:?} does not match C<digits>", c.code)));
            }
            if !seen.insert(c.code.clone()) {
                return Err(Error::Config(format!("duplicate code {:?}", c.code)));
            }
        }
        if codes.is_empty() {
            return Err(Error::Config("code vocabulary is empty".into()));
        }
        Ok(CodeVocabulary { codes })
    }

    /// The bundled placeholder vocabulary of 20 codes.
    pub fn placeholder() -> Self {
        Self::from_json(DEFAULT_CODES).expect("bundled code vocabulary is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parsed: CodeVocabulary = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(parsed.codes)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c.code == code)
    }

    pub fn direction(&self, code: &str) -> Option<Direction> {
        self.codes.iter().find(|c| c.code == code).map(|c| c.direction)
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index_of(code).is_some()
    }
}

impl Default for CodeVocabulary {
    fn default() -> Self {
        Self::placeholder()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<Mention>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Sentence { id: id.into(), text: text.into(), mentions: Vec::new(), interactions: Vec::new() }
    }

    pub fn mention(&self, id: &str) -> Option<&Mention> {
        self.mentions.iter().find(|m| m.id == id)
    }

    pub fn is_annotated(&self) -> bool {
        !self.mentions.is_empty() || !self.interactions.is_empty()
    }

    /// Copy of the sentence with annotations removed.
    pub fn skeleton(&self) -> Sentence {
        Sentence::new(self.id.clone(), self.text.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugLabel {
    pub id: String,
    pub drug: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub sections: Vec<Section>,
}

impl DrugLabel {
    /// Sentences with their section names, in document order.
    pub fn sentences(&self) -> impl Iterator<Item = (&str, &Sentence)> {
        self.sections.iter().flat_map(|s| s.sentences.iter().map(move |t| (s.name.as_str(), t)))
    }

    pub fn sentences_mut(&mut self) -> impl Iterator<Item = &mut Sentence> {
        self.sections.iter_mut().flat_map(|s| s.sentences.iter_mut())
    }
}

/// Knobs for [`validate`] that depend on where a label came from.
#[derive(Debug, Clone, Copy)]
pub struct ValidationContext<'a> {
    pub codes: &'a CodeVocabulary,
    /// Accept `COARSE_*` PK markers (mapped corpora awaiting bootstrap).
    pub allow_provisional: bool,
}

/// Substrings at `spans` joined by a single space.
fn join_spans(mention_id: &str, spans: &[Span], text: &str) -> Result<String> {
    let len = char_len(text);
    let mut parts = Vec::with_capacity(spans.len());
    for s in spans {
        let piece = if s.end <= len { slice_chars(text, s.start, s.end) } else { None };
        match piece {
            Some(p) if s.start < s.end => parts.push(p),
            _ => return Err(Error::Offset { mention: mention_id.to_string(), start: s.start, end: s.end, len }),
        }
    }
    Ok(parts.join(" "))
}

/// The text a mention covers within its sentence.
pub fn covered_text(sentence: &Sentence, mention: &Mention) -> Result<String> {
    join_spans(&mention.id, &mention.spans, &sentence.text)
}

fn validate_sentence(section: &str, sentence: &Sentence, ctx: ValidationContext<'_>, out: &mut Vec<String>) {
    let sid = &sentence.id;
    let len = char_len(&sentence.text);
    let mut by_id: HashMap<&str, &Mention> = HashMap::new();
    if section.trim().is_empty() {
        out.push(format!("sentence {sid}: empty section name"));
    }
    for m in &sentence.mentions {
        let mid = &m.id;
        if by_id.insert(m.id.as_str(), m).is_some() {
            out.push(format!("sentence {sid}: duplicate mention id {mid}"));
        }
        if m.spans.is_empty() {
            out.push(format!("sentence {sid}: mention {mid}: no spans"));
            continue;
        }
        let mut well_formed = true;
        for s in &m.spans {
            if s.start >= s.end {
                out.push(format!("sentence {sid}: mention {mid}: empty span {s}"));
                well_formed = false;
            } else if s.end > len {
                out.push(format!("sentence {sid}: mention {mid}: span {s} exceeds text length {len}"));
                well_formed = false;
            }
        }
        for w in m.spans.windows(2) {
            if w[0].start > w[1].start {
                out.push(format!("sentence {sid}: mention {mid}: spans not sorted by start"));
                well_formed = false;
            } else if w[0].overlaps(&w[1]) {
                out.push(format!("sentence {sid}: mention {mid}: spans {} and {} overlap", w[0], w[1]));
                well_formed = false;
            }
        }
        if well_formed {
            match join_spans(mid, &m.spans, &sentence.text) {
                Ok(t) if t == m.text => {}
                Ok(t) => out.push(format!(
                    "sentence {sid}: mention {mid}: text {:?} does not match covered text {:?}",
                    m.text, t
                )),
                Err(e) => out.push(format!("sentence {sid}: {e}")),
            }
        }
    }

    let mut interaction_ids = HashSet::new();
    for i in &sentence.interactions {
        let iid = &i.id;
        if !interaction_ids.insert(i.id.as_str()) {
            out.push(format!("sentence {sid}: duplicate interaction id {iid}"));
        }
        match by_id.get(i.precipitant.as_str()) {
            None => {
                out.push(format!("sentence {sid}: interaction {iid}: precipitant {} does not exist", i.precipitant))
            }
            Some(m) if m.kind != MentionKind::Precipitant => out.push(format!(
                "sentence {sid}: interaction {iid}: precipitant {} is a {} mention",
                i.precipitant, m.kind
            )),
            Some(_) => {}
        }
        match &i.outcome {
            Outcome::PD { effect } => match by_id.get(effect.as_str()) {
                None => out.push(format!("sentence {sid}: interaction {iid}: effect {effect} does not exist")),
                Some(m) if m.kind != MentionKind::SpecificInteraction => {
                    out.push(format!("sentence {sid}: interaction {iid}: effect {effect} is a {} mention", m.kind))
                }
                Some(_) => {}
            },
            Outcome::PK { code } => {
                let provisional = Direction::from_coarse_marker(code).is_some();
                if provisional {
                    if !ctx.allow_provisional {
                        out.push(format!(
                            "sentence {sid}: interaction {iid}: provisional code {code} outside a mapped corpus"
                        ));
                    }
                } else if !ctx.codes.contains(code) {
                    out.push(format!("sentence {sid}: interaction {iid}: code {code} not in the PK code vocabulary"));
                }
            }
            Outcome::UN => {}
        }
    }
}

/// Lists every invariant violation in `label`; empty when the label is valid.
pub fn validate(label: &DrugLabel, ctx: ValidationContext<'_>) -> Vec<String> {
    let mut out = Vec::new();
    let lid = &label.id;
    if label.drug.trim().is_empty() {
        out.push(format!("label {lid}: empty drug name"));
    }
    let mut aliases = HashSet::new();
    for a in &label.aliases {
        if a.eq_ignore_ascii_case(&label.drug) {
            out.push(format!("label {lid}: alias {a:?} duplicates the drug name"));
        }
        if !aliases.insert(a.to_lowercase()) {
            out.push(format!("label {lid}: duplicate alias {a:?}"));
        }
    }
    let mut sentence_ids = HashSet::new();
    for (section, sentence) in label.sentences() {
        if !sentence_ids.insert(sentence.id.as_str()) {
            out.push(format!("label {lid}: duplicate sentence id {}", sentence.id));
        }
        validate_sentence(section, sentence, ctx, &mut out);
    }
    out
}

/// Renumbers ids and sorts annotations so that equal annotation sets compare
/// equal. Mentions are ordered by (spans, kind) and named `M1..`; interactions
/// by (precipitant spans, kind, outcome) and named `I1..`.
pub fn canonicalize_sentence(sentence: &mut Sentence) {
    let old = std::mem::take(&mut sentence.mentions);
    let mut mentions = old.clone();
    mentions.sort_by(|a, b| (&a.spans, a.kind).cmp(&(&b.spans, b.kind)));
    mentions.dedup_by(|a, b| a.spans == b.spans && a.kind == b.kind);
    for (i, m) in mentions.iter_mut().enumerate() {
        m.id = format!("M{}", i + 1);
    }
    // Duplicates fold onto the surviving canonical mention.
    let rename: HashMap<&str, &Mention> = old
        .iter()
        .filter_map(|o| mentions.iter().find(|m| m.spans == o.spans && m.kind == o.kind).map(|m| (o.id.as_str(), m)))
        .collect();

    let mut keyed = Vec::new();
    for inter in &sentence.interactions {
        let Some(p) = rename.get(inter.precipitant.as_str()) else { continue };
        let (outcome, outcome_key) = match &inter.outcome {
            Outcome::PD { effect } => match rename.get(effect.as_str()) {
                Some(e) => (Outcome::PD { effect: e.id.clone() }, format!("E{:?}", e.spans)),
                None => continue,
            },
            Outcome::PK { code } => (inter.outcome.clone(), format!("K{code}")),
            Outcome::UN => (Outcome::UN, "U".to_string()),
        };
        let key = (p.spans.clone(), outcome.kind(), outcome_key);
        keyed.push((key, Interaction { id: String::new(), precipitant: p.id.clone(), outcome }));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    sentence.interactions = keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut inter))| {
            inter.id = format!("I{}", i + 1);
            inter
        })
        .collect();
    sentence.mentions = mentions;
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn adenocard_sentence() -> Sentence {
        let text = "The use of Adenocard in patients receiving digitalis may be rarely associated with ventricular fibrillation.";
        let find = |needle: &str| {
            let b = text.find(needle).unwrap();
            let start = text[..b].chars().count();
            Span::new(start, start + needle.chars().count())
        };
        let mut s = Sentence::new("S1", text);
        s.mentions = vec![
            Mention::from_spans("M1", MentionKind::Precipitant, vec![find("digitalis")], text).unwrap(),
            Mention::from_spans("M2", MentionKind::Trigger, vec![find("associated with")], text).unwrap(),
            Mention::from_spans("M3", MentionKind::SpecificInteraction, vec![find("ventricular fibrillation")], text)
                .unwrap(),
        ];
        s.interactions = vec![Interaction {
            id: "I1".into(),
            precipitant: "M1".into(),
            outcome: Outcome::PD { effect: "M3".into() },
        }];
        s
    }

    fn label_with(sentence: Sentence) -> DrugLabel {
        DrugLabel {
            id: "L1".into(),
            drug: "Adenocard".into(),
            aliases: vec!["adenosine".into()],
            sections: vec![Section { name: "DRUG INTERACTIONS".into(), sentences: vec![sentence] }],
        }
    }

    fn ctx(codes: &CodeVocabulary) -> ValidationContext<'_> {
        ValidationContext { codes, allow_provisional: false }
    }

    #[test]
    fn adenocard_example_is_valid() {
        let codes = CodeVocabulary::placeholder();
        let label = label_with(adenocard_sentence());
        assert!(validate(&label, ctx(&codes)).is_empty());
        let s = &label.sections[0].sentences[0];
        assert_eq!(s.mention("M1").unwrap().text, "digitalis");
        assert_eq!(s.mention("M3").unwrap().text, "ventricular fibrillation");
    }

    #[test]
    fn pd_outcome_pointing_at_trigger_is_one_violation() {
        let codes = CodeVocabulary::placeholder();
        let mut s = adenocard_sentence();
        s.interactions[0].outcome = Outcome::PD { effect: "M2".into() };
        let v = validate(&label_with(s), ctx(&codes));
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("I1"));
    }

    #[test]
    fn empty_span_is_reported() {
        let codes = CodeVocabulary::placeholder();
        let mut s = adenocard_sentence();
        s.mentions[1].spans = vec![Span::new(5, 5)];
        let v = validate(&label_with(s), ctx(&codes));
        assert!(v.iter().any(|x| x.contains("empty span")), "{v:?}");
    }

    #[test]
    fn pk_codes_checked_against_vocabulary() {
        let codes = CodeVocabulary::placeholder();
        let mut s = adenocard_sentence();
        s.interactions[0].outcome = Outcome::PK { code: "C99999999".into() };
        assert_eq!(validate(&label_with(s.clone()), ctx(&codes)).len(), 1);
        s.interactions[0].outcome = Outcome::PK { code: COARSE_DECREASE.into() };
        assert_eq!(validate(&label_with(s.clone()), ctx(&codes)).len(), 1);
        let mapped = ValidationContext { codes: &codes, allow_provisional: true };
        assert!(validate(&label_with(s), mapped).is_empty());
    }

    #[test]
    fn alias_duplicating_name_is_reported() {
        let codes = CodeVocabulary::placeholder();
        let mut label = label_with(adenocard_sentence());
        label.aliases.push("ADENOCARD".into());
        assert_eq!(validate(&label, ctx(&codes)).len(), 1);
    }

    #[test]
    fn covered_text_slices_and_joins() {
        let s = Sentence::new("S", "The use of X");
        let m =
            Mention { id: "M".into(), kind: MentionKind::Trigger, spans: vec![Span::new(4, 7)], text: "use".into() };
        assert_eq!(covered_text(&s, &m).unwrap(), "use");

        let s = Sentence::new("S", "X and Y inducers");
        let m = Mention {
            id: "M".into(),
            kind: MentionKind::Precipitant,
            spans: vec![Span::new(0, 1), Span::new(8, 16)],
            text: String::new(),
        };
        assert_eq!(covered_text(&s, &m).unwrap(), "X inducers");

        let m = Mention { spans: vec![Span::new(8, 40)], ..m };
        assert!(matches!(covered_text(&s, &m), Err(Error::Offset { .. })));
    }

    #[test]
    fn offsets_count_scalar_values() {
        let text = "Hämoglobin ↑ levels";
        assert_eq!(slice_chars(text, 0, 10), Some("Hämoglobin"));
        assert_eq!(slice_chars(text, 11, 12), Some("↑"));
        assert_eq!(slice_chars(text, 13, 19), Some("levels"));
        assert_eq!(slice_chars(text, 13, 20), None);
    }

    #[test]
    fn placeholder_vocabulary_has_twenty_codes() {
        let codes = CodeVocabulary::placeholder();
        assert_eq!(codes.len(), 20);
        assert_eq!(codes.direction("C54615"), Some(Direction::Decrease));
    }

    #[test]
    fn validate_is_pure() {
        let codes = CodeVocabulary::placeholder();
        let mut s = adenocard_sentence();
        s.interactions[0].precipitant = "M9".into();
        let label = label_with(s);
        assert_eq!(validate(&label, ctx(&codes)), validate(&label, ctx(&codes)));
    }
}
