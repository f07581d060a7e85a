//! Reduction of span annotations to an 11-tag IOB sequence and back.
//!
//! Each token gets O or B/I of T (trigger), E (effect), or D/K/U (a
//! precipitant together with the kind of its interaction: PD, PK or UN).

mod codec;
mod roundtrip;
mod tags;

use serde::{Deserialize, Serialize};

use crate::annot::{DrugLabel, Span};

pub use codec::{
    decode, encode, entity_bind, DecodedMention, DropReason, DroppedInteraction, DroppedMention, EncodeOptions,
    EncodeReport, SourceWeight, TagSequence, EFFECT_TOKEN, PRECIPITANT_TOKEN,
};
pub use roundtrip::{roundtrip_upperbound, RoundtripReport};
pub use tags::{Tag, TagLabel, NUM_TAGS};

/// Surface form of a bound label-drug token.
pub const LABEL_DRUG_TOKEN: &str = "LABELDRUG";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub span: Span,
    #[serde(default)]
    pub is_label_drug: bool,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '–' | '—' | '…' | '«' | '»' | '·')
}

/// Splits on whitespace, then peels leading and trailing punctuation off
/// each chunk as single-character tokens. Inner punctuation (hyphens,
/// slashes, decimal points) stays inside the word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let end = i;
        let mut a = start;
        while a < end && is_punct(chars[a]) {
            a += 1;
        }
        let mut b = end;
        while b > a && is_punct(chars[b - 1]) {
            b -= 1;
        }
        let mut push = |s: usize, e: usize| {
            out.push(Token { text: chars[s..e].iter().collect(), span: Span::new(s, e), is_label_drug: false })
        };
        for k in start..a {
            push(k, k + 1);
        }
        if a < b {
            push(a, b);
        }
        for k in b.max(a)..end {
            push(k, k + 1);
        }
    }
    out
}

/// Names the label drug is bound from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingContext {
    pub drug: String,
    pub aliases: Vec<String>,
    /// Class terms bound instead when the drug itself is not mentioned.
    pub proxies: Vec<String>,
}

impl BindingContext {
    pub fn for_label(label: &DrugLabel, proxies: &[String]) -> Self {
        BindingContext { drug: label.drug.clone(), aliases: label.aliases.clone(), proxies: proxies.to_vec() }
    }
}

fn bind_names(tokens: &[Token], names: &[&str]) -> (Vec<Token>, usize) {
    let patterns: Vec<Vec<String>> = names
        .iter()
        .map(|n| tokenize(n).into_iter().map(|t| t.text.to_lowercase()).collect::<Vec<_>>())
        .filter(|p: &Vec<String>| !p.is_empty())
        .collect();
    let lower: Vec<String> = tokens.iter().map(|t| t.text.to_lowercase()).collect();
    let mut out = Vec::with_capacity(tokens.len());
    let mut matches = 0;
    let mut i = 0;
    while i < tokens.len() {
        let best = patterns
            .iter()
            .filter(|p| i + p.len() <= tokens.len() && lower[i..i + p.len()] == p[..])
            .map(|p| p.len())
            .max();
        match best {
            Some(len) if !tokens[i].is_label_drug => {
                out.push(Token {
                    text: LABEL_DRUG_TOKEN.to_string(),
                    span: Span::new(tokens[i].span.start, tokens[i + len - 1].span.end),
                    is_label_drug: true,
                });
                matches += 1;
                i += len;
            }
            _ => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    (out, matches)
}

/// Replaces case-insensitive longest matches of the drug name or an alias
/// with one `LABELDRUG` token spanning the matched surface. Without any
/// match, the proxy class terms are bound the same way.
pub fn bind_label_drug(tokens: &[Token], ctx: &BindingContext) -> Vec<Token> {
    let mut names: Vec<&str> = vec![ctx.drug.as_str()];
    names.extend(ctx.aliases.iter().map(String::as_str));
    let (bound, n) = bind_names(tokens, &names);
    if n > 0 || ctx.proxies.is_empty() {
        return bound;
    }
    let proxies: Vec<&str> = ctx.proxies.iter().map(String::as_str).collect();
    bind_names(tokens, &proxies).0
}

/// Tokenizes and binds in one step.
pub fn prepare_tokens(text: &str, ctx: &BindingContext) -> Vec<Token> {
    bind_label_drug(&tokenize(text), ctx)
}
