use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{prepare_tokens, BindingContext, Tag, TagLabel, Token};
use crate::annot::{InteractionKind, MentionKind, Outcome, Sentence, Span};
use crate::error::{Error, Result};

pub const PRECIPITANT_TOKEN: &str = "PRECIPITANT";
pub const EFFECT_TOKEN: &str = "EFFECT";

/// Which corpus an example came from; primary-corpus losses are upweighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceWeight {
    Primary,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSequence {
    pub sentence_id: String,
    pub tokens: Vec<Token>,
    pub tags: Vec<Tag>,
    pub source: SourceWeight,
}

impl TagSequence {
    /// Every I-X follows B-X or I-X.
    pub fn is_consistent(&self) -> bool {
        let mut prev = Tag::O;
        for &t in &self.tags {
            if let Tag::I(l) = t {
                if prev.label() != Some(l) {
                    return false;
                }
            }
            prev = t;
        }
        self.tokens.len() == self.tags.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Overlaps a longer (or equally long, earlier) encoded mention.
    Overlap,
    Discontiguous,
    /// A mention boundary falls inside a token.
    TokenizationMismatch,
    /// A further interaction of a precipitant already typed by an earlier one.
    MixedKind,
    /// A precipitant that no interaction names has no D/K/U type.
    NoInteraction,
    PrecipitantDropped,
    EffectDropped,
    /// Folded into the contiguous coordination phrase it shares a head with.
    CoordinationMerged,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Overlap => "overlap",
            DropReason::Discontiguous => "discontiguous",
            DropReason::TokenizationMismatch => "tokenization-mismatch",
            DropReason::MixedKind => "mixed-kind",
            DropReason::NoInteraction => "no-interaction",
            DropReason::PrecipitantDropped => "precipitant-dropped",
            DropReason::EffectDropped => "effect-dropped",
            DropReason::CoordinationMerged => "coordination-merged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedMention {
    pub mention: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedInteraction {
    pub interaction: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeReport {
    pub sentence: String,
    /// Mentions whose exact spans survive the reduction.
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedMention>,
    pub dropped_interactions: Vec<DroppedInteraction>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Encode "X and Y inducers" as one entity instead of keeping only
    /// "Y inducers".
    pub coordination: bool,
}

/// Token index range `[a, b)` whose outer boundaries coincide with `span`.
fn aligned_range(tokens: &[Token], span: Span) -> Option<(usize, usize)> {
    let a = tokens.iter().position(|t| t.span.start == span.start)?;
    let b = tokens.iter().position(|t| t.span.end == span.end)?;
    (a <= b).then_some((a, b + 1))
}

struct Candidate {
    id: String,
    label: TagLabel,
    range: (usize, usize),
    span: Span,
}

/// Encodes gold annotations as one tag per token.
pub fn encode(
    sentence: &Sentence,
    ctx: &BindingContext,
    source: SourceWeight,
    options: EncodeOptions,
) -> (TagSequence, EncodeReport) {
    let tokens = prepare_tokens(&sentence.text, ctx);
    let mut report = EncodeReport {
        sentence: sentence.id.clone(),
        kept: Vec::new(),
        dropped: Vec::new(),
        dropped_interactions: Vec::new(),
    };

    // Interaction kind of each precipitant, first interaction wins.
    let mut kind_of: HashMap<&str, InteractionKind> = HashMap::new();
    for i in &sentence.interactions {
        match kind_of.get(i.precipitant.as_str()) {
            None => {
                kind_of.insert(&i.precipitant, i.kind());
            }
            Some(k) if *k != i.kind() => report
                .dropped_interactions
                .push(DroppedInteraction { interaction: i.id.clone(), reason: DropReason::MixedKind }),
            Some(_) => {}
        }
    }
    let label_of = |m: &crate::annot::Mention| match m.kind {
        MentionKind::Trigger => Some(TagLabel::T),
        MentionKind::SpecificInteraction => Some(TagLabel::E),
        MentionKind::Precipitant => kind_of.get(m.id.as_str()).map(|k| TagLabel::for_precipitant(*k)),
    };

    // Coordination merge: a discontiguous precipitant "X … HEAD" folds into a
    // contiguous precipitant of the same type ending at HEAD.
    let mut hull_start: HashMap<&str, usize> = HashMap::new();
    let mut partner_of: HashMap<&str, &str> = HashMap::new();
    if options.coordination {
        for d in sentence.mentions.iter().filter(|m| !m.is_contiguous()) {
            let Some(dl) = label_of(d) else { continue };
            let partner = sentence.mentions.iter().find(|p| {
                p.is_contiguous()
                    && p.end() == d.end()
                    && p.start() > d.start()
                    && label_of(p) == Some(dl)
                    && aligned_range(&tokens, Span::new(d.start(), p.end())).is_some()
            });
            if let Some(p) = partner {
                let h = hull_start.entry(p.id.as_str()).or_insert(d.start());
                *h = (*h).min(d.start());
                partner_of.insert(d.id.as_str(), p.id.as_str());
            }
        }
    }

    let mut candidates = Vec::new();
    for m in &sentence.mentions {
        let Some(label) = label_of(m) else {
            report.dropped.push(DroppedMention { mention: m.id.clone(), reason: DropReason::NoInteraction });
            continue;
        };
        if partner_of.contains_key(m.id.as_str()) {
            continue;
        }
        if !m.is_contiguous() {
            report.dropped.push(DroppedMention { mention: m.id.clone(), reason: DropReason::Discontiguous });
            continue;
        }
        let span = Span::new(hull_start.get(m.id.as_str()).copied().unwrap_or(m.start()), m.end());
        match aligned_range(&tokens, span) {
            Some(range) => candidates.push(Candidate { id: m.id.clone(), label, range, span }),
            None => {
                report.dropped.push(DroppedMention { mention: m.id.clone(), reason: DropReason::TokenizationMismatch })
            }
        }
    }

    // Longer first, then earlier start.
    candidates.sort_by_key(|c| (std::cmp::Reverse(c.span.len()), c.span.start));
    let mut tags = vec![Tag::O; tokens.len()];
    let mut taken = vec![false; tokens.len()];
    let mut kept: HashSet<String> = HashSet::new();
    for c in candidates {
        let (a, b) = c.range;
        if taken[a..b].iter().any(|&t| t) {
            report.dropped.push(DroppedMention { mention: c.id, reason: DropReason::Overlap });
            continue;
        }
        for (k, tag) in tags.iter_mut().enumerate().take(b).skip(a) {
            taken[k] = true;
            *tag = if k == a { Tag::B(c.label) } else { Tag::I(c.label) };
        }
        kept.insert(c.id);
    }
    // Folded mentions come back when their coordination phrase is split.
    let recovered = |id: &str| kept.contains(id) || partner_of.get(id).is_some_and(|p| kept.contains(*p));
    for m in sentence.mentions.iter().filter(|m| partner_of.contains_key(m.id.as_str()) && !recovered(&m.id)) {
        report.dropped.push(DroppedMention { mention: m.id.clone(), reason: DropReason::CoordinationMerged });
    }
    report.kept = sentence.mentions.iter().filter(|m| recovered(&m.id)).map(|m| m.id.clone()).collect();

    let mixed: HashSet<String> = report.dropped_interactions.iter().map(|d| d.interaction.clone()).collect();
    for i in &sentence.interactions {
        if mixed.contains(&i.id) {
            continue;
        }
        let reason = if !recovered(&i.precipitant) {
            Some(DropReason::PrecipitantDropped)
        } else {
            match &i.outcome {
                Outcome::PD { effect } if !recovered(effect) => Some(DropReason::EffectDropped),
                _ => None,
            }
        };
        if let Some(reason) = reason {
            report.dropped_interactions.push(DroppedInteraction { interaction: i.id.clone(), reason });
        }
    }

    (TagSequence { sentence_id: sentence.id.clone(), tokens, tags, source }, report)
}

/// A run of tokens decoded from a tag sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedMention {
    pub label: TagLabel,
    /// Token index range `[start, end)`.
    pub tokens: (usize, usize),
    pub span: Span,
}

impl DecodedMention {
    pub fn kind(&self) -> MentionKind {
        self.label.mention_kind()
    }

    pub fn interaction_kind(&self) -> Option<InteractionKind> {
        self.label.interaction_kind()
    }
}

/// Maximal runs of B-X I-X*. An I-X that does not continue an X run starts
/// a new run, so every tag sequence decodes.
pub fn decode(tokens: &[Token], tags: &[Tag]) -> Vec<DecodedMention> {
    assert_eq!(tokens.len(), tags.len(), "one tag per token");
    let mut out: Vec<DecodedMention> = Vec::new();
    let mut open: Option<TagLabel> = None;
    for (k, &t) in tags.iter().enumerate() {
        match t {
            Tag::O => open = None,
            Tag::I(l) if open == Some(l) => {
                let m = out.last_mut().expect("open run has a mention");
                m.tokens.1 = k + 1;
                m.span.end = tokens[k].span.end;
            }
            Tag::B(l) | Tag::I(l) => {
                out.push(DecodedMention { label: l, tokens: (k, k + 1), span: tokens[k].span });
                open = Some(l);
            }
        }
    }
    out
}

/// Replaces the tokens covered by `target` with `PRECIPITANT` and those
/// covered by `secondary` with `EFFECT`, one replacement per token so the
/// result stays aligned with the original sequence.
pub fn entity_bind(tokens: &[Token], target: &[Span], secondary: Option<&[Span]>) -> Result<Vec<Token>> {
    let check = |spans: &[Span]| -> Result<()> {
        for s in spans {
            if aligned_range(tokens, *s).is_none() {
                return Err(Error::Binding {
                    mention: spans.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
                    message: format!("span {s} does not fall on token boundaries"),
                });
            }
        }
        Ok(())
    };
    check(target)?;
    if let Some(sec) = secondary {
        check(sec)?;
    }
    let inside = |t: &Token, spans: &[Span]| spans.iter().any(|s| s.start <= t.span.start && t.span.end <= s.end);
    Ok(tokens
        .iter()
        .map(|t| {
            let text = if inside(t, target) {
                PRECIPITANT_TOKEN
            } else if secondary.is_some_and(|s| inside(t, s)) {
                EFFECT_TOKEN
            } else {
                return t.clone();
            };
            Token { text: text.to_string(), span: t.span, is_label_drug: false }
        })
        .collect())
}
