//! Word-overlap features appended to the pooled sentence vectors.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::QAPair;
use crate::error::{Error, Result};

/// Number of features produced by [`pair_features`].
pub const N_FEATURES: usize = 2;

/// Lowercase, split on whitespace, trim non-alphanumeric characters from
/// both ends of each token, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

fn token_set(tokens: &[String]) -> HashSet<&str> {
    tokens.iter().map(String::as_str).collect()
}

/// `|Q ∩ A| / (|Q| + |A|)` over token sets; in [0, 0.5].
pub fn word_overlap(q_tokens: &[String], a_tokens: &[String]) -> f64 {
    let q = token_set(q_tokens);
    let a = token_set(a_tokens);
    let denom = q.len() + a.len();
    if denom == 0 {
        return 0.0;
    }
    q.intersection(&a).count() as f64 / denom as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub idf: BTreeMap<String, f64>,
    pub n_docs: usize,
    pub default_idf: f64,
}

fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((n_docs as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

/// Document frequencies over answer sentences, one document per pair.
pub fn build_idf(corpus: &[QAPair]) -> Result<IdfTable> {
    if corpus.is_empty() {
        return Err(Error::Config(
            "cannot build IDF table from an empty corpus".into(),
        ));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for pair in corpus {
        let tokens = tokenize(&pair.answer);
        for word in token_set(&tokens) {
            *df.entry(word.to_string()).or_default() += 1;
        }
    }
    let n_docs = corpus.len();
    let idf = df
        .into_iter()
        .map(|(w, d)| (w, smoothed_idf(n_docs, d)))
        .collect();
    Ok(IdfTable {
        idf,
        n_docs,
        default_idf: smoothed_idf(n_docs, 0),
    })
}

impl IdfTable {
    pub fn get(&self, word: &str) -> f64 {
        self.idf.get(word).copied().unwrap_or(self.default_idf)
    }

    /// Header `#n_docs\t<n>`, then one `word\tidf` line per entry in word order.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#n_docs\t{}\n", self.n_docs);
        for (w, v) in &self.idf {
            out.push_str(&format!("{w}\t{v}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let n_docs = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#n_docs\t")
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| parse_err(1, "expected header `#n_docs\\t<count>`".into()))?,
            None => return Err(parse_err(1, "empty IDF table".into())),
        };
        let mut idf = BTreeMap::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (w, v) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(i + 1, "expected `word\\tidf`".into()))?;
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad idf value {v:?}")))?;
            if v.is_nan() || v <= 0.0 {
                return Err(parse_err(i + 1, format!("idf must be positive, got {v}")));
            }
            idf.insert(w.to_string(), v);
        }
        Ok(Self {
            idf,
            n_docs,
            default_idf: smoothed_idf(n_docs, 0),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, path)
    }
}

/// `Σ idf(Q ∩ A) / Σ idf(Q ∪ A)`; 0 when the union is empty.
pub fn idf_overlap(q_tokens: &[String], a_tokens: &[String], table: &IdfTable) -> f64 {
    let q = token_set(q_tokens);
    let a = token_set(a_tokens);
    // Sorted so the float sums do not depend on hash order.
    let mut union: Vec<&str> = q.union(&a).copied().collect();
    union.sort_unstable();
    if union.is_empty() {
        return 0.0;
    }
    let mut shared = 0.0;
    let mut total = 0.0;
    for w in union {
        let v = table.get(w);
        total += v;
        if q.contains(w) && a.contains(w) {
            shared += v;
        }
    }
    shared / total
}

/// `[word_overlap, idf_overlap]` for one question/answer pair.
pub fn pair_features(question: &str, answer: &str, table: &IdfTable) -> [f64; N_FEATURES] {
    let q = tokenize(question);
    let a = tokenize(answer);
    [word_overlap(&q, &a), idf_overlap(&q, &a, table)]
}
