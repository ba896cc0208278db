//! The fixed character alphabet and fixed-length sentence encoding.
//!
//! Index layout (71 symbols):
//!
//! | index  | symbol                                   |
//! |--------|------------------------------------------|
//! | 0      | padding                                  |
//! | 1–26   | `a`–`z`                                  |
//! | 27–36  | `0`–`9`                                  |
//! | 37–68  | `, ; . ! ? : ' " / \ | _ @ # $ % ^ & * ~ ` + - = < > ( ) [ ] { }` |
//! | 69     | newline                                  |
//! | 70     | unknown                                  |

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ALPHABET_SIZE: usize = 71;
pub const PAD_INDEX: usize = 0;
pub const NEWLINE_INDEX: usize = 69;
pub const UNK_INDEX: usize = 70;

const PUNCTUATION: &str = ",;.!?:'\"/\\|_@#$%^&*~`+-=<>()[]{}";

/// One entry of the alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Pad,
    Char(char),
    Unknown,
}

impl Symbol {
    /// Printable single-line label, as emitted by `alphabet dump`.
    pub fn label(&self) -> String {
        match self {
            Symbol::Pad => "<pad>".to_string(),
            Symbol::Unknown => "<unk>".to_string(),
            Symbol::Char('\n') => "<newline>".to_string(),
            Symbol::Char(c) => c.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CharAlphabet {
    symbols: Vec<Symbol>,
    index_of: HashMap<char, usize>,
    pad_index: usize,
    unk_index: usize,
}

/// Builds the 71-symbol alphabet in its frozen order.
pub fn build_alphabet() -> CharAlphabet {
    let mut symbols = Vec::with_capacity(ALPHABET_SIZE);
    symbols.push(Symbol::Pad);
    symbols.extend(('a'..='z').map(Symbol::Char));
    symbols.extend(('0'..='9').map(Symbol::Char));
    symbols.extend(PUNCTUATION.chars().map(Symbol::Char));
    symbols.push(Symbol::Char('\n'));
    symbols.push(Symbol::Unknown);
    debug_assert_eq!(symbols.len(), ALPHABET_SIZE);

    let index_of = symbols
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            Symbol::Char(c) => Some((*c, i)),
            _ => None,
        })
        .collect();

    CharAlphabet {
        symbols,
        index_of,
        pad_index: PAD_INDEX,
        unk_index: UNK_INDEX,
    }
}

impl Default for CharAlphabet {
    fn default() -> Self {
        build_alphabet()
    }
}

impl CharAlphabet {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn pad_index(&self) -> usize {
        self.pad_index
    }

    pub fn unk_index(&self) -> usize {
        self.unk_index
    }

    /// Index of an in-alphabet character. Case-sensitive; `encode` lowercases first.
    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index_of.get(&c).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<Symbol> {
        self.symbols.get(index).copied()
    }

    /// One label per line, LF-terminated.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for s in &self.symbols {
            out.push_str(&s.label());
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`dump`](Self::dump), hex encoded. Stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.dump().as_bytes()))
    }

    fn map_char(&self, c: char) -> usize {
        if c == ' ' || c == '\t' {
            return self.pad_index;
        }
        if !c.is_ascii() {
            return self.unk_index;
        }
        self.index_of(c.to_ascii_lowercase())
            .unwrap_or(self.unk_index)
    }

    /// Encodes `text` into exactly `max_len` indices.
    ///
    /// ASCII is lowercased, space and tab become padding, anything outside the
    /// alphabet (including every non-ASCII character) becomes unknown.
    pub fn encode(&self, text: &str, max_len: usize) -> EncodedSentence {
        assert!(max_len > 0, "max_len must be positive");
        let mut indices: Vec<usize> = text
            .chars()
            .take(max_len)
            .map(|c| self.map_char(c))
            .collect();
        let true_len = indices.len();
        indices.resize(max_len, self.pad_index);
        EncodedSentence { indices, true_len }
    }

    /// Inverse of `encode` for printable output: padding becomes a space and
    /// unknown becomes U+FFFD.
    pub fn decode_printable(&self, s: &EncodedSentence) -> String {
        s.indices[..s.true_len]
            .iter()
            .map(|&i| match self.symbols[i] {
                Symbol::Pad => ' ',
                Symbol::Unknown => '\u{FFFD}',
                Symbol::Char(c) => c,
            })
            .collect()
    }
}

/// A sentence as a fixed-length index vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSentence {
    pub indices: Vec<usize>,
    /// Number of characters consumed from the input (before right padding).
    pub true_len: usize,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Shorthand for `alphabet.encode(text, max_len)`.
pub fn encode(text: &str, max_len: usize, alphabet: &CharAlphabet) -> EncodedSentence {
    alphabet.encode(text, max_len)
}
