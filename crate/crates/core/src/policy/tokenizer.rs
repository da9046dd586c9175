//! Symbol-level tokenizer for textual affordances.
//!
//! Words and punctuation hash into a fixed number of embedding buckets.
//! Numbers keep their value: a number contributes `value * A[slot] + B[slot]`
//! where the slot is the component kind of its clause and its ordinal
//! within that clause, so coordinates reach the network linearly.

use serde::{Deserialize, Serialize};

use crate::prompt::text::{classify_clause, CLAUSE_SEPARATOR};

use super::{PolicyConfig, PolicyError};

/// Slot kind for numbers in clauses that match no template.
pub const UNKNOWN_KIND: usize = 4;
pub const SLOT_KINDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Symbol {
    Word(usize),
    Number { value: f64, slot: usize },
}

/// Bag-of-symbols summary of one text: the sufficient statistics of the
/// padded mean-pooled embedding.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TextBag {
    /// `(bucket, count)`
    pub words: Vec<(usize, f64)>,
    /// `(slot, value sum, count)`
    pub numbers: Vec<(usize, f64, f64)>,
    pub symbols: usize,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn word_bucket(word: &str, buckets: usize) -> usize {
    (fnv1a(word) % buckets as u64) as usize
}

fn lex_clause(clause: &str, kind: usize, cfg: &PolicyConfig, out: &mut Vec<Symbol>) {
    let b = clause.as_bytes();
    let mut i = 0;
    let mut ordinal = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == b'-' && b.get(i + 1) == Some(&b'>') {
            out.push(Symbol::Word(word_bucket("->", cfg.vocab_buckets)));
            i += 2;
        } else if c.is_ascii_digit() || (c == b'-' && b.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            match clause[start..i].parse::<f64>() {
                Ok(value) => {
                    let slot = kind * cfg.number_slots + ordinal.min(cfg.number_slots - 1);
                    out.push(Symbol::Number { value, slot });
                    ordinal += 1;
                }
                Err(_) => out.push(Symbol::Word(word_bucket(&clause[start..i], cfg.vocab_buckets))),
            }
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < b.len() && b[i].is_ascii_alphabetic() {
                i += 1;
            }
            out.push(Symbol::Word(word_bucket(&clause[start..i].to_ascii_lowercase(), cfg.vocab_buckets)));
        } else {
            let len = clause[i..].chars().next().map_or(1, char::len_utf8);
            out.push(Symbol::Word(word_bucket(&clause[i..i + len], cfg.vocab_buckets)));
            i += len;
        }
    }
}

/// Splits `text` into symbols.
pub fn tokenize(text: &str, cfg: &PolicyConfig) -> Result<Vec<Symbol>, PolicyError> {
    let mut out = Vec::new();
    for (i, clause) in text.split(CLAUSE_SEPARATOR).enumerate() {
        if i > 0 {
            out.push(Symbol::Word(word_bucket(";", cfg.vocab_buckets)));
        }
        let kind = classify_clause(clause).map_or(UNKNOWN_KIND, |(k, _)| k.index());
        lex_clause(clause, kind, cfg, &mut out);
    }
    if out.len() > cfg.max_text_len {
        return Err(PolicyError::TextTooLong { len: out.len(), max: cfg.max_text_len });
    }
    Ok(out)
}

pub fn bag(symbols: &[Symbol]) -> TextBag {
    use std::collections::BTreeMap;
    let mut words: BTreeMap<usize, f64> = BTreeMap::new();
    let mut numbers: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for s in symbols {
        match *s {
            Symbol::Word(w) => *words.entry(w).or_default() += 1.0,
            Symbol::Number { value, slot } => {
                let e = numbers.entry(slot).or_default();
                e.0 += value;
                e.1 += 1.0;
            }
        }
    }
    TextBag {
        words: words.into_iter().collect(),
        numbers: numbers.into_iter().map(|(k, (v, c))| (k, v, c)).collect(),
        symbols: symbols.len(),
    }
}

pub fn encode_bag(text: &str, cfg: &PolicyConfig) -> Result<TextBag, PolicyError> {
    tokenize(text, cfg).map(|s| bag(&s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_get_clause_slots() {
        let cfg = PolicyConfig::default();
        let s = tokenize("grasp at (0.500, 0.250); move along (0.100, 0.200) -> (0.300, -0.010)", &cfg).unwrap();
        let nums: Vec<(f64, usize)> = s
            .iter()
            .filter_map(|x| match x {
                Symbol::Number { value, slot } => Some((*value, *slot)),
                _ => None,
            })
            .collect();
        let k = cfg.number_slots;
        assert_eq!(nums, vec![(0.5, k), (0.25, k + 1), (0.1, 3 * k), (0.2, 3 * k + 1), (0.3, 3 * k + 2), (-0.01, 3 * k + 3)]);
        let arrows = s.iter().filter(|x| **x == Symbol::Word(word_bucket("->", cfg.vocab_buckets))).count();
        assert_eq!(arrows, 1);
    }

    #[test]
    fn long_text_is_rejected() {
        let cfg = PolicyConfig { max_text_len: 4, ..PolicyConfig::default() };
        assert!(matches!(tokenize("place at (0.100, 0.200)", &cfg), Err(PolicyError::TextTooLong { .. })));
    }

    #[test]
    fn bag_counts_symbols() {
        let cfg = PolicyConfig::default();
        let s = tokenize("place at (0.100, 0.200), (0.300, 0.400)", &cfg).unwrap();
        let b = bag(&s);
        assert_eq!(b.symbols, s.len());
        let words: f64 = b.words.iter().map(|w| w.1).sum();
        let nums: f64 = b.numbers.iter().map(|n| n.2).sum();
        assert_eq!(words + nums, s.len() as f64);
        assert_eq!(nums, 4.0);
    }
}
