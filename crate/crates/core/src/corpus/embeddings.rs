use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::init_uniform;

/// Tokens every embedding table carries; appended when a file lacks them.
pub const RESERVED_TOKENS: [&str; 3] = ["<PAD>", "<UNK>", "LABELDRUG"];

/// Word vectors in the plain-text "V d" format.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    /// Row-major `words.len() x dim`.
    matrix: Vec<f64>,
    dim: usize,
}

impl EmbeddingTable {
    /// A table over `words` (reserved tokens first) with uniformly
    /// initialized rows; the fallback when no pre-trained file is given.
    pub fn random<R: Rng + ?Sized>(words: impl IntoIterator<Item = String>, dim: usize, rng: &mut R) -> Self {
        let mut table = EmbeddingTable { words: Vec::new(), index: HashMap::new(), matrix: Vec::new(), dim };
        for w in RESERVED_TOKENS.iter().map(|s| s.to_string()).chain(words) {
            if !table.index.contains_key(&w) {
                let row: Vec<f64> = (0..dim).map(|_| init_uniform(rng)).collect();
                table.push(w, row);
            }
        }
        table
    }

    fn push(&mut self, word: String, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.dim);
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.matrix.extend(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }
}

/// Parses a "V d" header followed by V lines of `token v1 .. vd`. Reserved
/// tokens missing from the file are appended with random rows.
pub fn load_embeddings<R: Rng + ?Sized>(bytes: &[u8], expected_dim: usize, rng: &mut R) -> Result<EmbeddingTable> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(Error::Format { line: 1, message: "missing \"V d\" header".into() })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| s.parse::<usize>().ok();
    let (count, dim) = match fields.as_slice() {
        [v, d] => match (parse_usize(v), parse_usize(d)) {
            (Some(v), Some(d)) => (v, d),
            _ => return Err(Error::Format { line: hline, message: format!("header {header:?} is not two integers") }),
        },
        _ => return Err(Error::Format { line: hline, message: format!("header {header:?} is not \"V d\"") }),
    };
    if dim != expected_dim {
        return Err(Error::Format {
            line: hline,
            message: format!("embedding width {dim} does not match configured width {expected_dim}"),
        });
    }
    let mut table = EmbeddingTable {
        words: Vec::with_capacity(count + RESERVED_TOKENS.len()),
        index: HashMap::with_capacity(count + RESERVED_TOKENS.len()),
        matrix: Vec::with_capacity((count + RESERVED_TOKENS.len()) * dim),
        dim,
    };
    let mut rows = 0;
    for (lineno, line) in lines {
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("line is non-empty");
        let values = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format { line: lineno, message: format!("bad value: {e}") })?;
        if values.len() != dim {
            return Err(Error::Format {
                line: lineno,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format { line: lineno, message: "non-finite value".into() });
        }
        if table.index.contains_key(token) {
            return Err(Error::Format { line: lineno, message: format!("duplicate token {token:?}") });
        }
        table.push(token.to_string(), values);
        rows += 1;
    }
    if rows != count {
        return Err(Error::Format { line: hline, message: format!("header declares {count} rows, found {rows}") });
    }
    for r in RESERVED_TOKENS {
        if !table.index.contains_key(r) {
            let row = (0..dim).map(|_| init_uniform(rng)).collect();
            table.push(r.to_string(), row);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn appends_reserved_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = load_embeddings(b"2 3\nfoo 1 2 3\nbar 0.5 -1 2e-1\n", 3, &mut rng).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("bar").unwrap(), &[0.5, -1.0, 0.2]);
        for r in RESERVED_TOKENS {
            assert!(t.index_of(r).is_some());
        }
    }

    #[test]
    fn short_row_reports_its_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match load_embeddings(b"2 3\nfoo 1 2 3\nbar 1 2\n", 3, &mut rng) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn width_mismatch_and_duplicates_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(load_embeddings(b"1 4\nfoo 1 2 3 4\n", 3, &mut rng), Err(Error::Format { line: 1, .. })));
        assert!(matches!(load_embeddings(b"2 1\nfoo 1\nfoo 2\n", 1, &mut rng), Err(Error::Format { line: 3, .. })));
    }

    #[test]
    fn random_fallback_covers_vocabulary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = EmbeddingTable::random(["a".to_string(), "b".to_string(), "a".to_string()], 4, &mut rng);
        assert_eq!(t.len(), 5);
        assert!(t.row(4).iter().all(|v| v.abs() <= 0.05));
    }
}
