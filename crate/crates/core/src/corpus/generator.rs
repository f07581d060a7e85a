//! Template-based synthetic corpora with controlled statistics.
//!
//! Mention and interaction counts are allocated by quota from the requested
//! mixtures, so realized proportions match the request up to rounding. Every
//! annotated sentence is assembled from "units": a PD group (one effect plus
//! the precipitants linked to it) or a single PK/UN precipitant. Units render
//! to fixed clause templates whose wording depends on the interaction kind
//! and, for PK, on the outcome code, so the text carries the signal a model
//! needs to recover the annotations.
//!
//! Two kinds of reduction-hostile cases can be injected on purpose and are
//! recorded in the corpus metadata:
//!
//! * overlap: a precipitant nested inside a two-token precipitant phrase;
//! * coordination: "X and Y inhibitors" annotated as a discontiguous
//!   "X inhibitors" plus a contiguous "Y inhibitors".

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annot::{
    char_len, CodeVocabulary, Direction, DrugLabel, Interaction, InteractionKind, Mention, MentionKind, Outcome,
    Section, Sentence, Span,
};
use crate::corpus::{CorpusFile, CorpusMetadata, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MentionMix {
    pub precipitant: f64,
    pub trigger: f64,
    pub specific_interaction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionMix {
    pub pd: f64,
    pub pk: f64,
    pub un: f64,
}

/// Word lists the templates draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorVocabulary {
    /// (brand name, generic alias) pairs used as label drugs.
    pub label_drugs: Vec<(String, String)>,
    /// Single-token precipitant drug names.
    pub drugs: Vec<String>,
    /// Modifiers for two-token class precipitants ("CYP3A4" in "CYP3A4 inhibitors").
    pub class_modifiers: Vec<String>,
    /// Heads for two-token class precipitants.
    pub class_heads: Vec<String>,
    pub effects: Vec<String>,
    /// PK measurements; code i of a direction uses the i-th entry.
    pub measurements: Vec<String>,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Default for GeneratorVocabulary {
    fn default() -> Self {
        GeneratorVocabulary {
            label_drugs: [
                ("Adenocard", "adenosine"),
                ("Lasix", "furosemide"),
                ("Lanoxin", "digoxin"),
                ("Zocor", "simvastatin"),
                ("Plavix", "clopidogrel"),
                ("Xarelto", "rivaroxaban"),
                ("Tegretol", "carbamazepine"),
                ("Norvasc", "amlodipine"),
                ("Eliquis", "apixaban"),
                ("Lexapro", "escitalopram"),
                ("Prograf", "tacrolimus"),
            ]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
            drugs: strings(&[
                "digitalis",
                "ketoconazole",
                "itraconazole",
                "rifampin",
                "phenytoin",
                "warfarin",
                "aspirin",
                "ritonavir",
                "clarithromycin",
                "erythromycin",
                "fluconazole",
                "cimetidine",
                "lithium",
                "dipyridamole",
                "theophylline",
                "cyclosporine",
                "verapamil",
                "diltiazem",
                "quinidine",
                "amiodarone",
                "fluoxetine",
                "paroxetine",
                "omeprazole",
                "methotrexate",
                "probenecid",
                "colestipol",
                "cholestyramine",
                "sucralfate",
                "antacids",
                "alcohol",
                "insulin",
                "metformin",
                "glyburide",
                "propranolol",
                "metoprolol",
                "spironolactone",
                "sildenafil",
                "tramadol",
                "linezolid",
                "heparin",
            ]),
            class_modifiers: strings(&[
                "CYP3A4",
                "CYP2D6",
                "CYP2C9",
                "P-gp",
                "MAO",
                "thiazide",
                "loop",
                "potassium-sparing",
                "ACE",
                "beta",
            ]),
            class_heads: strings(&["inhibitors", "inducers", "diuretics", "blockers", "substrates"]),
            effects: strings(&[
                "ventricular fibrillation",
                "hypotension",
                "bleeding",
                "serotonin syndrome",
                "hyperkalemia",
                "QT prolongation",
                "myopathy",
                "rhabdomyolysis",
                "hypoglycemia",
                "respiratory depression",
                "nephrotoxicity",
                "severe bradycardia",
                "additive sedation",
                "lactic acidosis",
            ]),
            measurements: strings(&[
                "AUC",
                "Cmax",
                "plasma concentrations",
                "half-life",
                "clearance",
                "bioavailability",
                "trough concentrations",
                "absorption",
                "serum levels",
                "exposure",
                "elimination",
                "urinary excretion",
                "protein binding",
                "metabolism",
                "Tmax",
                "distribution volume",
                "renal clearance",
                "peak concentrations",
                "steady-state levels",
                "systemic exposure",
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub labels: usize,
    pub sentences_per_label: usize,
    pub annotated_proportion: f64,
    pub mentions_per_annotated: f64,
    pub mean_words: f64,
    pub mention_mix: MentionMix,
    pub interaction_mix: InteractionMix,
    /// Probability that an annotated sentence receives a nested-precipitant injection.
    pub overlap_rate: f64,
    /// Probability that an annotated sentence receives a coordination injection.
    pub coordination_rate: f64,
    pub vocabulary: GeneratorVocabulary,
}

impl Default for GeneratorSpec {
    /// Shaped like the Training-22 column of the dataset statistics.
    fn default() -> Self {
        GeneratorSpec {
            seed: 0,
            labels: 22,
            sentences_per_label: 27,
            annotated_proportion: 0.51,
            mentions_per_annotated: 3.8,
            mean_words: 23.0,
            mention_mix: MentionMix { precipitant: 0.53, trigger: 0.28, specific_interaction: 0.19 },
            interaction_mix: InteractionMix { pd: 0.49, pk: 0.21, un: 0.30 },
            overlap_rate: 0.0,
            coordination_rate: 0.0,
            vocabulary: GeneratorVocabulary::default(),
        }
    }
}

fn check_mix(name: &str, parts: &[f64]) -> Result<()> {
    if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Infeasible(format!("{name} has a component outside [0, 1]")));
    }
    let sum: f64 = parts.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Infeasible(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let m = &self.mention_mix;
        check_mix("mention mixture", &[m.precipitant, m.trigger, m.specific_interaction])?;
        let i = &self.interaction_mix;
        check_mix("interaction mixture", &[i.pd, i.pk, i.un])?;
        for (name, r) in [
            ("annotated proportion", self.annotated_proportion),
            ("overlap rate", self.overlap_rate),
            ("coordination rate", self.coordination_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Infeasible(format!("{name} {r} outside [0, 1]")));
            }
        }
        if self.mentions_per_annotated < 1.0 {
            return Err(Error::Infeasible("mentions per annotated sentence must be at least 1".into()));
        }
        let v = &self.vocabulary;
        if v.label_drugs.is_empty() || v.drugs.len() < 3 || v.class_modifiers.len() < 2 || v.class_heads.is_empty() {
            return Err(Error::Infeasible("generator vocabulary too small".into()));
        }
        if v.effects.is_empty() || v.measurements.is_empty() {
            return Err(Error::Infeasible("generator vocabulary needs effects and measurements".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Overlap,
    Coordination,
}

/// A deliberately injected case the tagging reduction cannot represent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub sentence: String,
    pub kind: InjectionKind,
    /// The mention the reduction is expected to drop.
    pub mention: String,
}

#[derive(Debug, Clone)]
enum UnitKind {
    /// Number of precipitants sharing one effect.
    Pd(usize),
    /// PK precipitant with its code index.
    Pk(usize),
    Un,
}

#[derive(Debug, Clone)]
struct Unit {
    kind: UnitKind,
    trigger: bool,
    injection: Option<InjectionKind>,
}

/// Incrementally built sentence text with scalar-value offsets.
struct TextBuilder {
    text: String,
    len: usize,
    words: usize,
}

impl TextBuilder {
    fn new() -> Self {
        TextBuilder { text: String::new(), len: 0, words: 0 }
    }

    /// Appends whitespace-separated words; returns the span they cover.
    fn words(&mut self, phrase: &str) -> Span {
        let mut start = None;
        for w in phrase.split_whitespace() {
            if !self.text.is_empty() {
                self.text.push(' ');
                self.len += 1;
            }
            start.get_or_insert(self.len);
            self.text.push_str(w);
            self.len += char_len(w);
            self.words += 1;
        }
        Span::new(start.unwrap_or(self.len), self.len)
    }

    /// Punctuation glued to the previous word.
    fn punct(&mut self, p: &str) {
        self.text.push_str(p);
        self.len += char_len(p);
        self.words += 1;
    }
}

struct SentenceAnnotations {
    mentions: Vec<(MentionKind, Vec<Span>)>,
    /// (precipitant mention index, outcome) where PD effects are mention indices.
    interactions: Vec<(usize, GenOutcome)>,
    injections: Vec<(InjectionKind, usize)>,
}

#[derive(Clone, Copy)]
enum GenOutcome {
    Pd(usize),
    Pk(usize),
    Un,
}

impl SentenceAnnotations {
    fn mention(&mut self, kind: MentionKind, spans: Vec<Span>) -> usize {
        self.mentions.push((kind, spans));
        self.mentions.len() - 1
    }
}

const FILLER_SUFFIXES: &[&str] = &[
    ", particularly in elderly patients",
    ", especially at higher doses",
    ", and dose adjustment may be required",
    ", although the clinical significance is unknown",
    ", based on studies in healthy volunteers",
    ", and patients should be observed during treatment",
    ", as reported in controlled clinical trials",
    ", in patients with renal impairment",
    ", over the first week of therapy",
];

const FILLER_PREFIXES: &[&str] = &[
    "In a clinical study ,",
    "Based on postmarketing reports ,",
    "In healthy volunteers ,",
    "During clinical trials ,",
    "In pharmacokinetic studies ,",
];

const BACKGROUND_CLAUSES: &[&str] = &[
    "{L} is indicated for the treatment of hypertension in adults",
    "The recommended starting dose of {L} is 10 mg once daily with or without food",
    "Tablets should be stored at room temperature and protected from light",
    "No dose adjustment of {L} is necessary in patients with mild hepatic impairment",
    "The safety and effectiveness of {L} in pediatric patients have not been established",
    "{L} is supplied as a white film-coated tablet",
    "Patients should be advised to read the medication guide before starting therapy",
    "The mean terminal half-life of {L} was approximately 12 hours in healthy subjects",
    "Geriatric patients showed similar responses to younger adult patients",
    "Laboratory tests should be performed periodically during long-term therapy",
];

struct Generator<'a> {
    spec: &'a GeneratorSpec,
    codes: &'a CodeVocabulary,
    rng: ChaCha8Rng,
    /// Measurement index per code index, ranked within the code's direction.
    measurement_of_code: Vec<usize>,
}

impl<'a> Generator<'a> {
    fn pick<'v>(&mut self, items: &'v [String]) -> &'v str {
        items.choose(&mut self.rng).expect("non-empty list")
    }

    fn label_ref(&mut self, label: &(String, String)) -> String {
        if self.rng.random_bool(0.7) {
            label.0.clone()
        } else {
            label.1.clone()
        }
    }

    /// Renders the precipitant list of a unit and records its mentions.
    /// Returns the precipitant mention indices.
    fn precipitants(
        &mut self,
        b: &mut TextBuilder,
        ann: &mut SentenceAnnotations,
        count: usize,
        injection: Option<InjectionKind>,
    ) -> Vec<usize> {
        let vocab = &self.spec.vocabulary;
        let mut used: Vec<String> = Vec::new();
        let mut out = Vec::new();
        for i in 0..count {
            if i > 0 {
                if i + 1 == count {
                    b.words("and");
                } else {
                    b.punct(",");
                }
            }
            match (i, injection) {
                (0, Some(InjectionKind::Coordination)) => {
                    let x = self.pick(&vocab.class_modifiers).to_string();
                    let mut y = self.pick(&vocab.class_modifiers).to_string();
                    while y == x {
                        y = self.pick(&vocab.class_modifiers).to_string();
                    }
                    let head = self.pick(&vocab.class_heads).to_string();
                    let xs = b.words(&x);
                    b.words("and");
                    let ys = b.words(&y);
                    let hs = b.words(&head);
                    let disjoint = ann.mention(MentionKind::Precipitant, vec![xs, hs]);
                    let trailing = ann.mention(MentionKind::Precipitant, vec![Span::new(ys.start, hs.end)]);
                    ann.injections.push((InjectionKind::Coordination, disjoint));
                    out.push(trailing);
                    out.push(disjoint);
                    if count > 1 {
                        b.punct(",");
                    }
                }
                (0, Some(InjectionKind::Overlap)) => {
                    let m = self.pick(&vocab.class_modifiers).to_string();
                    let h = self.pick(&vocab.class_heads).to_string();
                    let ms = b.words(&m);
                    let hs = b.words(&h);
                    let host = ann.mention(MentionKind::Precipitant, vec![Span::new(ms.start, hs.end)]);
                    let nested = ann.mention(MentionKind::Precipitant, vec![ms]);
                    ann.injections.push((InjectionKind::Overlap, nested));
                    out.push(host);
                    out.push(nested);
                }
                _ => {
                    let surface = loop {
                        let s = if self.rng.random_bool(0.2) {
                            format!("{} {}", self.pick(&vocab.class_modifiers), self.pick(&vocab.class_heads))
                        } else {
                            self.pick(&vocab.drugs).to_string()
                        };
                        if !used.contains(&s) {
                            break s;
                        }
                    };
                    used.push(surface.clone());
                    let span = b.words(&surface);
                    out.push(ann.mention(MentionKind::Precipitant, vec![span]));
                }
            }
        }
        out
    }

    fn render_unit(
        &mut self,
        b: &mut TextBuilder,
        ann: &mut SentenceAnnotations,
        unit: &Unit,
        label: &(String, String),
    ) {
        let vocab = self.spec.vocabulary.clone();
        match unit.kind {
            UnitKind::Pd(n) => {
                match self.rng.random_range(0..3) {
                    0 => {
                        b.words("In patients receiving");
                    }
                    1 => {
                        let l = self.label_ref(label);
                        b.words(&format!("Coadministration of {l} with"));
                    }
                    _ => {
                        let l = self.label_ref(label);
                        b.words(&format!("Concomitant use of {l} and"));
                    }
                }
                let ps = self.precipitants(b, ann, n, unit.injection);
                if unit.trigger {
                    let (pre, trig) = [
                        ("may be", "associated with"),
                        ("may", "increase the risk of"),
                        ("may", "potentiate"),
                        ("may", "result in"),
                    ][self.rng.random_range(0..4)];
                    b.words(pre);
                    let t = b.words(trig);
                    ann.mention(MentionKind::Trigger, vec![t]);
                } else {
                    b.words("has been reported with");
                }
                let effect = self.pick(&vocab.effects).to_string();
                let e = b.words(&effect);
                let e = ann.mention(MentionKind::SpecificInteraction, vec![e]);
                for p in ps {
                    ann.interactions.push((p, GenOutcome::Pd(e)));
                }
            }
            UnitKind::Pk(code) => {
                let ps = self.precipitants(b, ann, 1, unit.injection);
                let dir = self.codes.codes[code].direction;
                let measurement = &vocab.measurements[self.measurement_of_code[code] % vocab.measurements.len()];
                let l = self.label_ref(label);
                if unit.trigger {
                    let t = b.words(match dir {
                        Direction::Increase => "increased",
                        Direction::Decrease => "decreased",
                    });
                    ann.mention(MentionKind::Trigger, vec![t]);
                    b.words(&format!("the {measurement} of {l}"));
                } else {
                    let adj = match dir {
                        Direction::Increase => "higher",
                        Direction::Decrease => "lower",
                    };
                    b.words(&format!("resulted in {adj} {measurement} of {l}"));
                }
                for p in ps {
                    ann.interactions.push((p, GenOutcome::Pk(code)));
                }
            }
            UnitKind::Un => {
                let l = self.label_ref(label);
                let ps = if unit.trigger {
                    if self.rng.random_bool(0.5) {
                        let t = b.words("Caution");
                        ann.mention(MentionKind::Trigger, vec![t]);
                        b.words(&format!("is advised when {l} is used with"));
                    } else {
                        let t = b.words("Avoid");
                        ann.mention(MentionKind::Trigger, vec![t]);
                        b.words(&format!("concomitant use of {l} with"));
                    }
                    self.precipitants(b, ann, 1, unit.injection)
                } else {
                    b.words(&format!("{l} has not been evaluated together with"));
                    self.precipitants(b, ann, 1, unit.injection)
                };
                for p in ps {
                    ann.interactions.push((p, GenOutcome::Un));
                }
            }
        }
    }

    fn target_words(&mut self) -> usize {
        let mean = self.spec.mean_words.round() as i64;
        let w = self.rng.random_range(mean - 6..=mean + 6);
        w.max(4) as usize
    }

    fn pad_to(&mut self, b: &mut TextBuilder, target: usize) {
        while b.words + 3 < target {
            let s = *FILLER_SUFFIXES.choose(&mut self.rng).expect("non-empty");
            for tok in s.split_whitespace() {
                if tok == "," {
                    b.punct(",");
                } else if let Some(rest) = tok.strip_prefix(',') {
                    b.punct(",");
                    b.words(rest);
                } else {
                    b.words(tok);
                }
            }
        }
    }

    fn annotated_sentence(
        &mut self,
        id: &str,
        units: &[Unit],
        extra_triggers: usize,
        label: &(String, String),
    ) -> (Sentence, Vec<Injection>) {
        let mut b = TextBuilder::new();
        let mut ann = SentenceAnnotations { mentions: Vec::new(), interactions: Vec::new(), injections: Vec::new() };
        let target = self.target_words();
        if self.rng.random_bool(0.3) {
            let p = *FILLER_PREFIXES.choose(&mut self.rng).expect("non-empty");
            let (words, _) = p.split_at(p.len() - 2);
            b.words(words);
            b.punct(",");
        }
        for (i, unit) in units.iter().enumerate() {
            if i > 0 {
                b.punct(";");
            }
            self.render_unit(&mut b, &mut ann, unit, label);
        }
        for _ in 0..extra_triggers {
            b.punct(";");
            let t = b.words("Monitor");
            ann.mention(MentionKind::Trigger, vec![t]);
            b.words("patients closely");
        }
        self.pad_to(&mut b, target);
        b.punct(".");

        let text = b.text;
        let mut sentence = Sentence::new(id, text.clone());
        sentence.mentions = ann
            .mentions
            .iter()
            .enumerate()
            .map(|(i, (kind, spans))| {
                Mention::from_spans(format!("M{}", i + 1), *kind, spans.clone(), &text)
                    .expect("generated spans are in bounds")
            })
            .collect();
        sentence.interactions = ann
            .interactions
            .iter()
            .enumerate()
            .map(|(i, (p, o))| Interaction {
                id: format!("I{}", i + 1),
                precipitant: format!("M{}", p + 1),
                outcome: match o {
                    GenOutcome::Pd(e) => Outcome::PD { effect: format!("M{}", e + 1) },
                    GenOutcome::Pk(c) => Outcome::PK { code: self.codes.codes[*c].code.clone() },
                    GenOutcome::Un => Outcome::UN,
                },
            })
            .collect();
        let injections = ann
            .injections
            .iter()
            .map(|(kind, m)| Injection { sentence: id.to_string(), kind: *kind, mention: format!("M{}", m + 1) })
            .collect();
        (sentence, injections)
    }

    fn background_sentence(&mut self, id: &str, label: &(String, String)) -> Sentence {
        let mut b = TextBuilder::new();
        let target = self.target_words();
        let clause = *BACKGROUND_CLAUSES.choose(&mut self.rng).expect("non-empty");
        let l = self.label_ref(label);
        b.words(&clause.replace("{L}", &l));
        self.pad_to(&mut b, target);
        b.punct(".");
        Sentence::new(id, b.text)
    }
}

fn quota(total: usize, p: f64) -> usize {
    (total as f64 * p).round() as usize
}

const ANNOTATED_SECTIONS: [&str; 2] = ["DRUG INTERACTIONS", "WARNINGS AND PRECAUTIONS"];
const OTHER_SECTIONS: [&str; 2] = ["DOSAGE AND ADMINISTRATION", "CLINICAL PHARMACOLOGY"];
const SECTION_ORDER: [&str; 4] =
    ["DOSAGE AND ADMINISTRATION", "WARNINGS AND PRECAUTIONS", "DRUG INTERACTIONS", "CLINICAL PHARMACOLOGY"];

/// Generates a gold-consistent synthetic corpus; deterministic in `spec`.
pub fn generate_corpus(spec: &GeneratorSpec, codes: &CodeVocabulary) -> Result<CorpusFile> {
    spec.validate()?;
    let mut rank = HashMap::new();
    let measurement_of_code = codes
        .codes
        .iter()
        .map(|c| {
            let r = rank.entry(c.direction).or_insert(0usize);
            *r += 1;
            *r - 1
        })
        .collect();
    let mut g = Generator { spec, codes, rng: ChaCha8Rng::seed_from_u64(spec.seed), measurement_of_code };

    let total = spec.labels * spec.sentences_per_label;
    let annotated = quota(total, spec.annotated_proportion);
    let mentions = quota(annotated, spec.mentions_per_annotated);
    let n_prec = quota(mentions, spec.mention_mix.precipitant);
    let n_trig = quota(mentions, spec.mention_mix.trigger).min(mentions - n_prec);
    let n_eff = mentions - n_prec - n_trig;
    let n_pd = quota(n_prec, spec.interaction_mix.pd);
    let n_pk = quota(n_prec, spec.interaction_mix.pk).min(n_prec - n_pd);
    let n_un = n_prec - n_pd - n_pk;

    if n_eff > 0 && n_pd == 0 {
        return Err(Error::Infeasible("effects requested but the PD mixture is 0".into()));
    }
    if n_pd > 0 && n_eff == 0 {
        return Err(Error::Infeasible("PD interactions requested but no effect mentions".into()));
    }
    if n_eff > n_pd {
        return Err(Error::Infeasible(format!("{n_eff} effects need at least as many PD precipitants, got {n_pd}")));
    }
    let n_units = n_eff + n_pk + n_un;
    if n_units < annotated {
        return Err(Error::Infeasible(format!("{annotated} annotated sentences but only {n_units} precipitant units")));
    }

    // Units: PD groups share one effect each.
    let mut pd_sizes = vec![1usize; n_eff];
    for _ in n_eff..n_pd {
        let i = g.rng.random_range(0..n_eff);
        pd_sizes[i] += 1;
    }
    let mut units: Vec<Unit> = pd_sizes
        .into_iter()
        .map(UnitKind::Pd)
        .chain((0..n_pk).map(|_| UnitKind::Pk(0)))
        .chain((0..n_un).map(|_| UnitKind::Un))
        .map(|kind| Unit { kind, trigger: false, injection: None })
        .collect();
    for u in &mut units {
        if let UnitKind::Pk(c) = &mut u.kind {
            *c = g.rng.random_range(0..codes.len());
        }
    }
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.shuffle(&mut g.rng);
    for &i in order.iter().take(n_trig) {
        units[i].trigger = true;
    }
    let extra_triggers = n_trig.saturating_sub(units.len());
    units.shuffle(&mut g.rng);

    // Which sentences are annotated, and which units each receives.
    let mut sentence_order: Vec<usize> = (0..total).collect();
    sentence_order.shuffle(&mut g.rng);
    let annotated_ids: Vec<usize> = sentence_order[..annotated].to_vec();
    let mut assigned: HashMap<usize, (Vec<Unit>, usize)> = HashMap::new();
    for (k, unit) in units.into_iter().enumerate() {
        let s = if k < annotated { annotated_ids[k] } else { annotated_ids[g.rng.random_range(0..annotated)] };
        assigned.entry(s).or_default().0.push(unit);
    }
    for _ in 0..extra_triggers {
        let s = annotated_ids[g.rng.random_range(0..annotated)];
        assigned.entry(s).or_default().1 += 1;
    }
    // Injections, at most one per annotated sentence.
    for &s in &annotated_ids {
        let (units, _) = assigned.get_mut(&s).expect("annotated sentence has units");
        let r: f64 = g.rng.random();
        let kind = if r < spec.overlap_rate {
            Some(InjectionKind::Overlap)
        } else if r < spec.overlap_rate + spec.coordination_rate {
            Some(InjectionKind::Coordination)
        } else {
            None
        };
        if let Some(kind) = kind {
            let u = g.rng.random_range(0..units.len());
            units[u].injection = Some(kind);
        }
    }

    let mut labels = Vec::with_capacity(spec.labels);
    let mut injections = Vec::new();
    for li in 0..spec.labels {
        let label_drug = spec.vocabulary.label_drugs[li % spec.vocabulary.label_drugs.len()].clone();
        let label_id = format!("L{:03}", li + 1);
        let mut by_section: HashMap<&str, Vec<Sentence>> = HashMap::new();
        for si in 0..spec.sentences_per_label {
            let global = li * spec.sentences_per_label + si;
            let id = format!("{label_id}.S{:03}", si + 1);
            let (sentence, section) = match assigned.get(&global) {
                Some((units, extra)) => {
                    let (s, inj) = g.annotated_sentence(&id, units, *extra, &label_drug);
                    injections.extend(inj);
                    (s, *ANNOTATED_SECTIONS.choose(&mut g.rng).expect("non-empty"))
                }
                None => {
                    let s = g.background_sentence(&id, &label_drug);
                    let pool: Vec<&str> = ANNOTATED_SECTIONS.iter().chain(&OTHER_SECTIONS).copied().collect();
                    (s, *pool.choose(&mut g.rng).expect("non-empty"))
                }
            };
            by_section.entry(section).or_default().push(sentence);
        }
        let sections = SECTION_ORDER
            .iter()
            .filter_map(|name| by_section.remove(name).map(|sentences| Section { name: name.to_string(), sentences }))
            .collect();
        labels.push(DrugLabel {
            id: label_id,
            drug: label_drug.0.clone(),
            aliases: vec![label_drug.1.clone()],
            sections,
        });
    }
    let mut corpus = CorpusFile::new(Provenance::Synthetic, labels);
    corpus.metadata = Some(CorpusMetadata { seed: spec.seed, injections });
    Ok(corpus)
}

/// Realized corpus statistics, comparable with [`GeneratorSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub sentences: usize,
    pub annotated_proportion: f64,
    pub mean_words: f64,
    pub mentions_per_annotated: f64,
    pub mention_mix: MentionMix,
    pub interaction_mix: InteractionMix,
}

pub fn corpus_stats(corpus: &CorpusFile) -> CorpusStats {
    let mut sentences = 0usize;
    let mut annotated = 0usize;
    let mut words = 0usize;
    let mut mention_counts = [0usize; 3];
    let mut inter_counts = [0usize; 3];
    for (_, _, s) in corpus.sentences() {
        sentences += 1;
        words += s.text.split_whitespace().count();
        if !s.mentions.is_empty() {
            annotated += 1;
        }
        for m in &s.mentions {
            mention_counts[m.kind as usize] += 1;
        }
        for i in &s.interactions {
            inter_counts[i.kind() as usize] += 1;
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let nm: usize = mention_counts.iter().sum();
    let ni: usize = inter_counts.iter().sum();
    CorpusStats {
        sentences,
        annotated_proportion: frac(annotated, sentences),
        mean_words: frac(words, sentences),
        mentions_per_annotated: frac(nm, annotated),
        mention_mix: MentionMix {
            trigger: frac(mention_counts[MentionKind::Trigger as usize], nm),
            precipitant: frac(mention_counts[MentionKind::Precipitant as usize], nm),
            specific_interaction: frac(mention_counts[MentionKind::SpecificInteraction as usize], nm),
        },
        interaction_mix: InteractionMix {
            pd: frac(inter_counts[InteractionKind::PD as usize], ni),
            pk: frac(inter_counts[InteractionKind::PK as usize], ni),
            un: frac(inter_counts[InteractionKind::UN as usize], ni),
        },
    }
}

/// Replaces every PK code with its coarse direction marker, the way NLM-180
/// records arrive. Returns the mapped corpus and the hidden true code per
/// `sentence_id/interaction_id`.
pub fn hide_pk_codes(corpus: &CorpusFile, codes: &CodeVocabulary) -> (CorpusFile, HashMap<String, String>) {
    let mut out = corpus.clone();
    out.provenance = Provenance::Mapped;
    let mut truth = HashMap::new();
    for l in &mut out.labels {
        for s in l.sentences_mut() {
            for i in &mut s.interactions {
                if let Outcome::PK { code } = &mut i.outcome {
                    if let Some(dir) = codes.direction(code) {
                        truth.insert(format!("{}/{}", s.id, i.id), code.clone());
                        *code = dir.coarse_marker().to_string();
                    }
                }
            }
        }
    }
    (out, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::serialize_corpus;

    fn spec(seed: u64, labels: usize, per_label: usize) -> GeneratorSpec {
        GeneratorSpec { seed, labels, sentences_per_label: per_label, ..GeneratorSpec::default() }
    }

    #[test]
    fn same_seed_same_bytes() {
        let codes = CodeVocabulary::placeholder();
        let a = generate_corpus(&spec(7, 5, 20), &codes).unwrap();
        let b = generate_corpus(&spec(7, 5, 20), &codes).unwrap();
        assert_eq!(serialize_corpus(&a), serialize_corpus(&b));
        let c = generate_corpus(&spec(8, 5, 20), &codes).unwrap();
        assert_ne!(serialize_corpus(&a), serialize_corpus(&c));
    }

    #[test]
    fn output_validates() {
        let codes = CodeVocabulary::placeholder();
        let mut s = spec(3, 10, 30);
        s.overlap_rate = 0.2;
        s.coordination_rate = 0.2;
        let c = generate_corpus(&s, &codes).unwrap();
        assert_eq!(c.violations(&codes), Vec::<String>::new());
        assert!(!c.metadata.as_ref().unwrap().injections.is_empty());
    }

    #[test]
    fn training22_mixture_is_realized_within_three_points() {
        let codes = CodeVocabulary::placeholder();
        let c = generate_corpus(&spec(11, 50, 100), &codes).unwrap();
        let st = corpus_stats(&c);
        assert_eq!(st.sentences, 5000);
        let close = |a: f64, b: f64| (a - b).abs() <= 0.03;
        assert!(close(st.annotated_proportion, 0.51));
        assert!(close(st.interaction_mix.pd, 0.49), "{st:?}");
        assert!(close(st.interaction_mix.pk, 0.21), "{st:?}");
        assert!(close(st.interaction_mix.un, 0.30), "{st:?}");
        assert!(close(st.mention_mix.precipitant, 0.53), "{st:?}");
        assert!(close(st.mention_mix.trigger, 0.28), "{st:?}");
        assert!(close(st.mention_mix.specific_interaction, 0.19), "{st:?}");
        assert!((st.mean_words - 23.0).abs() < 3.0, "{st:?}");
    }

    #[test]
    fn effects_without_pd_are_infeasible() {
        let codes = CodeVocabulary::placeholder();
        let mut s = spec(1, 2, 10);
        s.interaction_mix = InteractionMix { pd: 0.0, pk: 0.5, un: 0.5 };
        assert!(matches!(generate_corpus(&s, &codes), Err(Error::Infeasible(_))));
        s.interaction_mix = InteractionMix { pd: 0.2, pk: 0.5, un: 0.5 };
        assert!(matches!(generate_corpus(&s, &codes), Err(Error::Infeasible(_))));
    }

    #[test]
    fn hiding_codes_keeps_truth() {
        let codes = CodeVocabulary::placeholder();
        let c = generate_corpus(&spec(2, 4, 20), &codes).unwrap();
        let (mapped, truth) = hide_pk_codes(&c, &codes);
        assert!(!truth.is_empty());
        assert!(mapped.validate(&codes).is_ok());
        for (_, _, s) in mapped.sentences() {
            for i in &s.interactions {
                if let Outcome::PK { code } = &i.outcome {
                    let d = Direction::from_coarse_marker(code).unwrap();
                    assert_eq!(codes.direction(&truth[&format!("{}/{}", s.id, i.id)]), Some(d));
                }
            }
        }
    }
}
