//! Micro-averaged precision/recall/F1 under primary and relaxed matching.
//!
//! Entity keys: primary (sentence, kind, spans), relaxed (sentence, spans).
//! Relation keys: primary (sentence, precipitant spans, kind, outcome),
//! relaxed (sentence, precipitant spans). The PD outcome is the effect span
//! list, PK the code, UN nothing. Triggers never enter relation keys.
//! Duplicates collapse: annotations are compared as sets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annot::{InteractionKind, MentionKind, Outcome, Sentence, Span};
use crate::corpus::CorpusFile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Entity,
    Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Primary,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Criterion {
    pub task: Task,
    pub mode: Mode,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion { task: Task::Entity, mode: Mode::Primary },
        Criterion { task: Task::Entity, mode: Mode::Relaxed },
        Criterion { task: Task::Relation, mode: Mode::Primary },
        Criterion { task: Task::Relation, mode: Mode::Relaxed },
    ];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.task {
            Task::Entity => "entity",
            Task::Relation => "relation",
        };
        let m = match self.mode {
            Mode::Primary => "primary",
            Mode::Relaxed => "relaxed",
        };
        write!(f, "{t} {m}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn of<K: Eq + std::hash::Hash>(gold: &HashSet<K>, pred: &HashSet<K>) -> Counts {
        let tp = gold.intersection(pred).count();
        Counts { tp, fp: pred.len() - tp, fn_: gold.len() - tp }
    }
}

/// Counts plus derived metrics for one criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub criterion: Criterion,
    #[serde(flatten)]
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scores: Vec<CriterionScore>,
}

impl ScoreReport {
    fn from_counts(counts: [Counts; 4]) -> Self {
        ScoreReport {
            scores: Criterion::ALL
                .iter()
                .zip(counts)
                .map(|(c, n)| CriterionScore {
                    criterion: *c,
                    counts: n,
                    precision: n.precision(),
                    recall: n.recall(),
                    f1: n.f1(),
                })
                .collect(),
        }
    }

    pub fn get(&self, task: Task, mode: Mode) -> &CriterionScore {
        self.scores
            .iter()
            .find(|s| s.criterion.task == task && s.criterion.mode == mode)
            .expect("all four criteria present")
    }

    pub fn entity_primary(&self) -> &CriterionScore {
        self.get(Task::Entity, Mode::Primary)
    }

    pub fn relation_primary(&self) -> &CriterionScore {
        self.get(Task::Relation, Mode::Primary)
    }

    /// Aligned plain-text table, percentages with two decimals.
    pub fn table(&self) -> String {
        let mut out =
            format!("{:<18} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}\n", "criterion", "TP", "FP", "FN", "P", "R", "F1");
        for s in &self.scores {
            out.push_str(&format!(
                "{:<18} {:>6} {:>6} {:>6} {:>8.2} {:>8.2} {:>8.2}\n",
                s.criterion.to_string(),
                s.counts.tp,
                s.counts.fp,
                s.counts.fn_,
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1
            ));
        }
        out
    }
}

/// (label id, sentence id) — sentence ids need only be unique per label.
pub type SentenceRef = (String, String);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeKey {
    Effect(Vec<Span>),
    Code(String),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityKey {
    pub sentence: SentenceRef,
    pub kind: Option<MentionKind>,
    pub spans: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationKey {
    pub sentence: SentenceRef,
    pub precipitant: Vec<Span>,
    pub kind: Option<InteractionKind>,
    pub outcome: Option<OutcomeKey>,
}

fn sorted(spans: &[Span]) -> Vec<Span> {
    let mut s = spans.to_vec();
    s.sort();
    s
}

/// Primary-mode key parts of every interaction whose references resolve.
pub fn relation_parts(sentence: &Sentence) -> Vec<(Vec<Span>, InteractionKind, OutcomeKey)> {
    let mut out = Vec::new();
    for i in &sentence.interactions {
        let Some(p) = sentence.mention(&i.precipitant) else { continue };
        if p.kind != MentionKind::Precipitant {
            continue;
        }
        let outcome = match &i.outcome {
            Outcome::PD { effect } => match sentence.mention(effect) {
                Some(e) => OutcomeKey::Effect(sorted(&e.spans)),
                None => continue,
            },
            Outcome::PK { code } => OutcomeKey::Code(code.clone()),
            Outcome::UN => OutcomeKey::None,
        };
        out.push((sorted(&p.spans), i.kind(), outcome));
    }
    out
}

fn entity_keys<'a>(sref: &SentenceRef, s: &'a Sentence, mode: Mode) -> impl Iterator<Item = EntityKey> + 'a {
    let sref = sref.clone();
    s.mentions.iter().map(move |m| EntityKey {
        sentence: sref.clone(),
        kind: (mode == Mode::Primary).then_some(m.kind),
        spans: sorted(&m.spans),
    })
}

fn relation_keys(sref: &SentenceRef, s: &Sentence, mode: Mode) -> Vec<RelationKey> {
    relation_parts(s)
        .into_iter()
        .map(|(precipitant, kind, outcome)| RelationKey {
            sentence: sref.clone(),
            precipitant,
            kind: (mode == Mode::Primary).then_some(kind),
            outcome: (mode == Mode::Primary).then_some(outcome),
        })
        .collect()
}

fn sentence_map(c: &CorpusFile) -> HashMap<SentenceRef, (&str, &Sentence)> {
    c.sentences().map(|(l, sec, s)| ((l.id.clone(), s.id.clone()), (sec, s))).collect()
}

/// Errors unless both corpora hold the same sentences with the same texts.
pub fn check_skeletons(gold: &CorpusFile, pred: &CorpusFile) -> Result<()> {
    let g = sentence_map(gold);
    let p = sentence_map(pred);
    let mut bad: Vec<String> = Vec::new();
    for (k, (_, s)) in &g {
        match p.get(k) {
            Some((_, t)) if t.text == s.text => {}
            _ => bad.push(format!("{}/{}", k.0, k.1)),
        }
    }
    for k in p.keys() {
        if !g.contains_key(k) {
            bad.push(format!("{}/{}", k.0, k.1));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        bad.sort();
        Err(Error::Skeleton(bad))
    }
}

fn count_sentences<'a>(pairs: impl Iterator<Item = (SentenceRef, &'a Sentence, Option<&'a Sentence>)>) -> [Counts; 4] {
    let mut sets: [(HashSet<EntityKey>, HashSet<EntityKey>); 2] = Default::default();
    let mut rsets: [(HashSet<RelationKey>, HashSet<RelationKey>); 2] = Default::default();
    for (sref, g, p) in pairs {
        for (i, mode) in [Mode::Primary, Mode::Relaxed].into_iter().enumerate() {
            sets[i].0.extend(entity_keys(&sref, g, mode));
            rsets[i].0.extend(relation_keys(&sref, g, mode));
            if let Some(p) = p {
                sets[i].1.extend(entity_keys(&sref, p, mode));
                rsets[i].1.extend(relation_keys(&sref, p, mode));
            }
        }
    }
    [
        Counts::of(&sets[0].0, &sets[0].1),
        Counts::of(&sets[1].0, &sets[1].1),
        Counts::of(&rsets[0].0, &rsets[0].1),
        Counts::of(&rsets[1].0, &rsets[1].1),
    ]
}

/// Scores `pred` against `gold` over the whole corpus.
pub fn score(gold: &CorpusFile, pred: &CorpusFile) -> Result<ScoreReport> {
    check_skeletons(gold, pred)?;
    let p = sentence_map(pred);
    let pairs = gold.sentences().map(|(l, _, s)| {
        let sref = (l.id.clone(), s.id.clone());
        let ps = p.get(&sref).map(|(_, t)| *t);
        (sref, s, ps)
    });
    Ok(ScoreReport::from_counts(count_sentences(pairs)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    /// Primary entity counts per mention kind.
    pub entity_by_kind: BTreeMap<MentionKind, Counts>,
    /// Primary relation counts per interaction kind.
    pub relation_by_kind: BTreeMap<InteractionKind, Counts>,
    /// Full reports restricted to the sentences of each (gold) section.
    pub by_section: BTreeMap<String, ScoreReport>,
}

/// Primary counts split by annotation kind, and all criteria per section.
pub fn score_breakdown(gold: &CorpusFile, pred: &CorpusFile) -> Result<ScoreBreakdown> {
    check_skeletons(gold, pred)?;
    let p = sentence_map(pred);
    let mut entity_by_kind = BTreeMap::new();
    let mut relation_by_kind = BTreeMap::new();
    for kind in MentionKind::ALL {
        let mut g = HashSet::new();
        let mut q = HashSet::new();
        for (l, _, s) in gold.sentences() {
            let sref = (l.id.clone(), s.id.clone());
            g.extend(entity_keys(&sref, s, Mode::Primary).filter(|k| k.kind == Some(kind)));
            if let Some((_, ps)) = p.get(&sref) {
                q.extend(entity_keys(&sref, ps, Mode::Primary).filter(|k| k.kind == Some(kind)));
            }
        }
        entity_by_kind.insert(kind, Counts::of(&g, &q));
    }
    for kind in InteractionKind::ALL {
        let mut g = HashSet::new();
        let mut q = HashSet::new();
        for (l, _, s) in gold.sentences() {
            let sref = (l.id.clone(), s.id.clone());
            g.extend(relation_keys(&sref, s, Mode::Primary).into_iter().filter(|k| k.kind == Some(kind)));
            if let Some((_, ps)) = p.get(&sref) {
                q.extend(relation_keys(&sref, ps, Mode::Primary).into_iter().filter(|k| k.kind == Some(kind)));
            }
        }
        relation_by_kind.insert(kind, Counts::of(&g, &q));
    }
    type Pairs<'a> = Vec<(SentenceRef, &'a Sentence, Option<&'a Sentence>)>;
    let mut sections: BTreeMap<String, Pairs> = BTreeMap::new();
    for (l, sec, s) in gold.sentences() {
        let sref = (l.id.clone(), s.id.clone());
        let ps = p.get(&sref).map(|(_, t)| *t);
        sections.entry(sec.to_string()).or_default().push((sref, s, ps));
    }
    let by_section = sections
        .into_iter()
        .map(|(name, pairs)| (name, ScoreReport::from_counts(count_sentences(pairs.into_iter()))))
        .collect();
    Ok(ScoreBreakdown { entity_by_kind, relation_by_kind, by_section })
}
