//! QA-pair ingestion.
//!
//! The canonical format is a headerless UTF-8 TSV with five columns:
//! `qid question aid answer label`. WikiQA's published layout is read by a
//! dedicated adapter; TrecQA is expected pre-converted to canonical form.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub qid: String,
    pub aid: String,
    pub question: String,
    pub answer: String,
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitStats {
    pub n_questions: usize,
    pub n_pairs: usize,
    /// Fraction of positive pairs, in [0, 1].
    pub pct_correct: f64,
}

impl SplitStats {
    /// `"<questions> <pairs> <pct>%"`, percentage with two decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {} {:.2}%",
            self.n_questions,
            self.n_pairs,
            self.pct_correct * 100.0
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataset {
    TrecQa,
    WikiQa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Published split statistics: questions, pairs, percent correct as printed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceStats {
    pub n_questions: usize,
    pub n_pairs: usize,
    pub pct_correct_printed: f64,
}

pub fn reference_stats(dataset: Dataset, split: Split) -> ReferenceStats {
    let (n_questions, n_pairs, pct_correct_printed) = match (dataset, split) {
        (Dataset::TrecQa, Split::Train) => (94, 4_718, 7.4),
        (Dataset::TrecQa, Split::Dev) => (65, 1_117, 18.4),
        (Dataset::TrecQa, Split::Test) => (68, 1_442, 17.2),
        (Dataset::WikiQa, Split::Train) => (2_118, 20_360, 5.11),
        (Dataset::WikiQa, Split::Dev) => (296, 2_733, 5.12),
        (Dataset::WikiQa, Split::Test) => (633, 6_165, 4.75),
    };
    ReferenceStats {
        n_questions,
        n_pairs,
        pct_correct_printed,
    }
}

/// Percentage tolerance when comparing to a printed value.
pub const PCT_TOLERANCE_POINTS: f64 = 0.05;

impl ReferenceStats {
    /// Counts must match exactly; the percentage within
    /// [`PCT_TOLERANCE_POINTS`] of the printed figure.
    pub fn check(&self, stats: &SplitStats) -> std::result::Result<(), String> {
        let pct = stats.pct_correct * 100.0;
        let mut problems = Vec::new();
        if stats.n_questions != self.n_questions {
            problems.push(format!(
                "questions {} != {}",
                stats.n_questions, self.n_questions
            ));
        }
        if stats.n_pairs != self.n_pairs {
            problems.push(format!("pairs {} != {}", stats.n_pairs, self.n_pairs));
        }
        if (pct - self.pct_correct_printed).abs() > PCT_TOLERANCE_POINTS + 1e-9 {
            problems.push(format!(
                "correct {:.3}% != {}%",
                pct, self.pct_correct_printed
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems.join(", "))
        }
    }
}

pub fn compute_stats(pairs: &[QAPair]) -> SplitStats {
    let n_questions = pairs
        .iter()
        .map(|p| p.qid.as_str())
        .collect::<HashSet<_>>()
        .len();
    let n_pairs = pairs.len();
    let positives: usize = pairs.iter().map(|p| p.label as usize).sum();
    let pct_correct = if n_pairs == 0 {
        0.0
    } else {
        positives as f64 / n_pairs as f64
    };
    SplitStats {
        n_questions,
        n_pairs,
        pct_correct,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_label(raw: &str, path: &Path, line: usize) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("label must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Enforces (qid, aid) uniqueness and consistent question text per qid.
struct SplitValidator<'a> {
    path: &'a Path,
    seen_pairs: HashSet<(String, String)>,
    question_text: HashMap<String, String>,
}

impl<'a> SplitValidator<'a> {
    fn new(path: &'a Path) -> Self {
        Self {
            path,
            seen_pairs: HashSet::new(),
            question_text: HashMap::new(),
        }
    }

    fn admit(&mut self, pair: &QAPair, line: usize) -> Result<()> {
        let err = |msg: String| Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg,
        };
        if !self.seen_pairs.insert((pair.qid.clone(), pair.aid.clone())) {
            return Err(err(format!("duplicate pair ({}, {})", pair.qid, pair.aid)));
        }
        match self.question_text.get(&pair.qid) {
            Some(text) if text != &pair.question => {
                return Err(err(format!(
                    "question text for {} differs from its first occurrence",
                    pair.qid
                )))
            }
            Some(_) => {}
            None => {
                self.question_text
                    .insert(pair.qid.clone(), pair.question.clone());
            }
        }
        Ok(())
    }
}

pub fn load_canonical_tsv(path: impl AsRef<Path>) -> Result<Vec<QAPair>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut validator = SplitValidator::new(path);
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        let pair = QAPair {
            qid: fields[0].to_string(),
            question: fields[1].to_string(),
            aid: fields[2].to_string(),
            answer: fields[3].to_string(),
            label: parse_label(fields[4], path, line)?,
        };
        validator.admit(&pair, line)?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_canonical_tsv(pairs: &[QAPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for p in pairs {
        for field in [&p.qid, &p.question, &p.aid, &p.answer] {
            if field.contains(['\t', '\n', '\r']) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!(
                        "field of pair ({}, {}) contains a tab or newline",
                        p.qid, p.aid
                    ),
                });
            }
        }
    }
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            p.qid, p.question, p.aid, p.answer, p.label
        ));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub const WIKIQA_HEADER: [&str; 7] = [
    "QuestionID",
    "Question",
    "DocumentID",
    "DocumentTitle",
    "SentenceID",
    "Sentence",
    "Label",
];

/// Reads the published WikiQA TSV (header row, seven columns).
pub fn load_wikiqa_tsv(path: impl AsRef<Path>) -> Result<Vec<QAPair>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r').split('\t').collect(),
        None => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: "empty file, expected WikiQA header".into(),
            })
        }
    };
    if header != WIKIQA_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "header mismatch: expected {:?}, found {:?}",
                WIKIQA_HEADER, header
            ),
        });
    }
    let mut validator = SplitValidator::new(path);
    let mut pairs = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 7 tab-separated fields, found {}", fields.len()),
            });
        }
        let pair = QAPair {
            qid: fields[0].to_string(),
            question: fields[1].to_string(),
            aid: fields[4].to_string(),
            answer: fields[5].to_string(),
            label: parse_label(fields[6], path, line)?,
        };
        validator.admit(&pair, line)?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Loads a split by dataset layout. TrecQA and plain canonical files share
/// the canonical reader.
pub fn load_split(path: impl AsRef<Path>, layout: Layout) -> Result<Vec<QAPair>> {
    match layout {
        Layout::WikiQa => load_wikiqa_tsv(path),
        Layout::Canonical => load_canonical_tsv(path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Canonical,
    WikiQa,
}

impl Layout {
    /// WikiQA if the first line starts with the WikiQA header's first column.
    pub fn detect(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_text(path)?;
        let first = text.lines().next().unwrap_or("");
        Ok(if first.split('\t').next() == Some(WIKIQA_HEADER[0]) {
            Layout::WikiQa
        } else {
            Layout::Canonical
        })
    }
}
