use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tagging::{Token, EFFECT_TOKEN, LABEL_DRUG_TOKEN, PRECIPITANT_TOKEN};

pub const PAD: &str = "<PAD>";
pub const UNK: &str = "<UNK>";

/// Word rows every model carries, in this order.
pub const RESERVED_WORDS: [&str; 5] = [PAD, UNK, LABEL_DRUG_TOKEN, PRECIPITANT_TOKEN, EFFECT_TOKEN];

/// Word and character indices. Character index 0 is unknown; padding
/// characters have no row and embed to zeros.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    chars: Vec<char>,
    #[serde(skip)]
    word_index: HashMap<String, usize>,
    #[serde(skip)]
    char_index: HashMap<char, usize>,
}

impl Vocab {
    pub fn new(words: impl IntoIterator<Item = String>, chars: impl IntoIterator<Item = char>) -> Self {
        let mut v = Vocab {
            words: Vec::new(),
            chars: vec!['\u{FFFD}'],
            word_index: HashMap::new(),
            char_index: HashMap::new(),
        };
        for w in RESERVED_WORDS.iter().map(|s| s.to_string()).chain(words) {
            if !v.word_index.contains_key(&w) {
                v.word_index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        for c in chars {
            if !v.char_index.contains_key(&c) && c != '\u{FFFD}' {
                v.char_index.insert(c, v.chars.len());
                v.chars.push(c);
            }
        }
        v.reindex();
        v
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.word_index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        self.char_index = self.chars.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    /// Exact form, then lowercase, then `<UNK>`.
    pub fn word_id(&self, w: &str) -> usize {
        self.word_index.get(w).or_else(|| self.word_index.get(&w.to_lowercase())).copied().unwrap_or(1)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(0)
    }

    pub fn encode(&self, tokens: &[Token], max_word_len: usize) -> SentenceInput {
        SentenceInput {
            words: tokens.iter().map(|t| self.word_id(&t.text)).collect(),
            chars: tokens
                .iter()
                .map(|t| t.text.chars().take(max_word_len.max(1)).map(|c| self.char_id(c)).collect())
                .collect(),
        }
    }

    /// Word ids only, for entity-bound contexts.
    pub fn word_ids(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.word_id(&t.text)).collect()
    }
}

/// Model-ready ids for one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceInput {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
}

impl SentenceInput {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}
