//! Post-rules over predicted precipitant mentions, applied in order:
//! modifier stripping, purging, coordination splitting.

use crate::annot::Span;
use crate::tagging::Token;

/// Drops leading modifier tokens ("strong", "potent", …). Returns the
/// remaining token slice, empty when nothing is left.
pub fn strip_modifiers<'t>(tokens: &'t [Token], modifiers: &[String]) -> &'t [Token] {
    let skip = tokens.iter().take_while(|t| modifiers.iter().any(|m| m.eq_ignore_ascii_case(&t.text))).count();
    &tokens[skip..]
}

fn is_punct_token(t: &Token) -> bool {
    t.text.chars().all(|c| !c.is_alphanumeric())
}

/// True when every token is a stopword, a generic term, or punctuation.
pub fn is_purgeable(tokens: &[Token], stopwords: &[String], generic: &[String]) -> bool {
    tokens.iter().all(|t| is_punct_token(t) || stopwords.iter().chain(generic).any(|w| w.eq_ignore_ascii_case(&t.text)))
}

fn is_conjunction(t: &Token) -> bool {
    t.text.eq_ignore_ascii_case("and") || t.text.eq_ignore_ascii_case("or")
}

/// Splits `A (, B)* and|or C HEAD` into one mention per conjunct: earlier
/// conjuncts become discontiguous `[A][HEAD]`, the last stays contiguous
/// `C HEAD`. Conjuncts are single tokens; anything else comes back whole.
pub fn split_coordination(tokens: &[Token]) -> Vec<Vec<Span>> {
    let whole =
        || vec![vec![Span::new(tokens.first().map_or(0, |t| t.span.start), tokens.last().map_or(0, |t| t.span.end))]];
    let Some(j) = tokens.iter().rposition(is_conjunction) else { return whole() };
    if j == 0 || j + 2 >= tokens.len() {
        return whole();
    }
    let word = |t: &Token| !is_punct_token(t) && !is_conjunction(t);
    let last = &tokens[j + 1];
    let head = &tokens[j + 2..];
    if !word(last) || !head.iter().all(|t| !is_conjunction(t)) {
        return whole();
    }
    // Before the conjunction: word (, word)* with an optional final comma.
    let mut before = &tokens[..j];
    if before.len() > 1 && before[before.len() - 1].text == "," {
        before = &before[..before.len() - 1];
    }
    let mut conjuncts = Vec::new();
    for (k, t) in before.iter().enumerate() {
        if k % 2 == 0 {
            if !word(t) {
                return whole();
            }
            conjuncts.push(t.span);
        } else if t.text != "," {
            return whole();
        }
    }
    if before.len().is_multiple_of(2) {
        return whole();
    }
    let head_span = Span::new(head[0].span.start, head[head.len() - 1].span.end);
    let mut out: Vec<Vec<Span>> = conjuncts.into_iter().map(|c| vec![c, head_span]).collect();
    out.push(vec![Span::new(last.span.start, head_span.end)]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagging::tokenize;

    fn words(s: &[Token]) -> Vec<&str> {
        s.iter().map(|t| t.text.as_str()).collect()
    }

    fn covered(text: &str, spans: &[Span]) -> String {
        spans.iter().map(|s| text.chars().skip(s.start).take(s.len()).collect::<String>()).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn strips_leading_modifiers_only() {
        let toks = tokenize("strong inhibitors of CYP3A4");
        let mods = vec!["moderate".to_string(), "strong".to_string(), "potent".to_string()];
        assert_eq!(words(strip_modifiers(&toks, &mods)), ["inhibitors", "of", "CYP3A4"]);
        let toks = tokenize("Potent strong");
        assert!(strip_modifiers(&toks, &mods).is_empty());
    }

    #[test]
    fn purges_generic_mentions() {
        let generic = vec!["drugs".to_string(), "agents".to_string()];
        let stop = vec!["other".to_string(), "these".to_string()];
        assert!(is_purgeable(&tokenize("agents"), &stop, &generic));
        assert!(is_purgeable(&tokenize("other drugs"), &stop, &generic));
        assert!(!is_purgeable(&tokenize("antifungal agents"), &stop, &generic));
    }

    #[test]
    fn splits_coordinated_heads() {
        let text = "X and Y inducers";
        let out = split_coordination(&tokenize(text));
        let got: Vec<String> = out.iter().map(|s| covered(text, s)).collect();
        assert_eq!(got, ["X inducers", "Y inducers"]);
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[1].len(), 1);

        let text = "A, B and C inhibitors";
        let out = split_coordination(&tokenize(text));
        let got: Vec<String> = out.iter().map(|s| covered(text, s)).collect();
        assert_eq!(got, ["A inhibitors", "B inhibitors", "C inhibitors"]);
        let head = Span::new(11, 21);
        assert!(out.iter().all(|s| s.last().unwrap().end == head.end));

        for text in ["aspirin", "aspirin and warfarin", "and X inducers", "A B and C inducers"] {
            let toks = tokenize(text);
            assert_eq!(split_coordination(&toks).len(), 1, "{text}");
        }
    }
}
