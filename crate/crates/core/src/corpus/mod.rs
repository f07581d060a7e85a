//! Corpus container format, embedding loader, NLM-180 mapping and the
//! synthetic corpus generator.
//!
//! A corpus file is a single UTF-8 JSON document:
//!
//! ```json
//! {
//!   "labels": [ { "aliases": [], "drug": "...", "id": "...",
//!                 "sections": [ { "name": "...", "sentences": [ ... ] } ] } ],
//!   "metadata": null,
//!   "provenance": "gold",
//!   "version": "ddi-corpus/1"
//! }
//! ```
//!
//! Serialization is canonical: object keys are sorted and the document is
//! pretty-printed with two-space indentation and a trailing newline, so equal
//! values always produce identical bytes.

mod embeddings;
pub mod generator;
mod nlm180;

use serde::{Deserialize, Serialize};

use crate::annot::{self, canonicalize_sentence, CodeVocabulary, DrugLabel, Sentence, ValidationContext};
use crate::error::{Error, Result};

pub use embeddings::{load_embeddings, EmbeddingTable, RESERVED_TOKENS};
pub use generator::{generate_corpus, GeneratorSpec, Injection, InjectionKind};
pub use nlm180::{map_nlm180, parse_nlm180, MapOutcome, Nlm180File, Nlm180Label, Nlm180Record, NLM180_VERSION};

pub const CORPUS_VERSION: &str = "ddi-corpus/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gold,
    Predicted,
    Synthetic,
    Mapped,
}

/// Generator bookkeeping carried alongside a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    pub seed: u64,
    pub injections: Vec<Injection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFile {
    pub version: String,
    pub provenance: Provenance,
    pub labels: Vec<DrugLabel>,
    #[serde(default)]
    pub metadata: Option<CorpusMetadata>,
}

impl CorpusFile {
    pub fn new(provenance: Provenance, labels: Vec<DrugLabel>) -> Self {
        CorpusFile { version: CORPUS_VERSION.to_string(), provenance, labels, metadata: None }
    }

    pub fn sentences(&self) -> impl Iterator<Item = (&DrugLabel, &str, &Sentence)> {
        self.labels.iter().flat_map(|l| l.sentences().map(move |(sec, s)| (l, sec, s)))
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences().count()
    }

    /// Every invariant violation across all labels.
    pub fn violations(&self, codes: &CodeVocabulary) -> Vec<String> {
        let ctx = ValidationContext { codes, allow_provisional: self.provenance == Provenance::Mapped };
        let mut out: Vec<String> = self.labels.iter().flat_map(|l| annot::validate(l, ctx)).collect();
        let mut seen = std::collections::HashSet::new();
        for l in &self.labels {
            if !seen.insert(l.id.as_str()) {
                out.push(format!("duplicate label id {}", l.id));
            }
        }
        out
    }

    pub fn validate(&self, codes: &CodeVocabulary) -> Result<()> {
        let v = self.violations(codes);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Same labels and sentences with all annotations removed.
    pub fn skeleton(&self) -> CorpusFile {
        let mut out = self.clone();
        out.metadata = None;
        for l in &mut out.labels {
            for s in l.sentences_mut() {
                *s = s.skeleton();
            }
        }
        out
    }

    /// Renumbers and sorts annotations in every sentence.
    pub fn canonicalize(&mut self) {
        for l in &mut self.labels {
            for s in l.sentences_mut() {
                canonicalize_sentence(s);
            }
        }
    }
}

pub(crate) fn json_error(e: serde_json::Error) -> Error {
    Error::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parses and validates a corpus document.
pub fn parse_corpus(bytes: &[u8], codes: &CodeVocabulary) -> Result<CorpusFile> {
    let corpus: CorpusFile = serde_json::from_slice(bytes).map_err(json_error)?;
    if corpus.version != CORPUS_VERSION {
        return Err(Error::Version { found: corpus.version, expected: CORPUS_VERSION.into() });
    }
    corpus.validate(codes)?;
    Ok(corpus)
}

/// Canonical bytes: sorted keys, two-space indentation, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    // `serde_json::Value` keeps object keys in a BTreeMap, which sorts them.
    let value = serde_json::to_value(value).expect("annotation types serialize to JSON");
    let mut out = serde_json::to_vec_pretty(&value).expect("JSON values serialize");
    out.push(b'\n');
    out
}

pub fn serialize_corpus(corpus: &CorpusFile) -> Vec<u8> {
    to_canonical_json(corpus)
}
