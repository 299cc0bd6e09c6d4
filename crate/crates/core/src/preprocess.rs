//! Token cleaning: lowercase, keep maximal alphabetic runs, length filter,
//! stopword filter.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{Corpus, Label, RawDocument};
use crate::error::{Error, Result};

pub const MIN_TOKEN_LEN: usize = 3;
pub const MAX_TOKEN_LEN: usize = 15;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const BUNDLED_SOURCE_ID: &str = "nltk-english-179";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
    source_id: String,
}

impl StopwordList {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::parse(BUNDLED_STOPWORDS, BUNDLED_SOURCE_ID)
    }

    pub fn empty() -> Self {
        Self::parse("", "empty")
    }

    /// One word per line; blank lines and `#` comments are skipped. Entries are lowercased.
    pub fn parse(text: &str, source_id: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Self {
            words,
            source_id: source_id.to_string(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text, &path.display().to_string()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Entries in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.words.iter().map(String::as_str).collect();
        w.sort_unstable();
        w
    }

    pub fn from_words<I, S>(words: I, source_id: &str) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().to_lowercase())
                .collect(),
            source_id: source_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub tokens: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub kept: usize,
    pub dropped_empty: usize,
}

/// A char that may appear inside a token once the text has been lowercased.
fn is_token_char(c: char) -> bool {
    c.is_alphabetic() && !c.is_uppercase()
}

/// Splits `text` into cleaned tokens.
///
/// The text is lowercased first, then cut into maximal runs of letters; any
/// other character (digits, punctuation, whitespace, combining marks left over
/// from case folding) ends a run. Runs whose length in chars falls outside
/// `[MIN_TOKEN_LEN, MAX_TOKEN_LEN]` are dropped, then stopwords are removed.
pub fn clean_tokenize(text: &str, stopwords: &StopwordList) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut len = 0usize;
    let flush = |current: &mut String, len: &mut usize, tokens: &mut Vec<String>| {
        if (MIN_TOKEN_LEN..=MAX_TOKEN_LEN).contains(len) && !stopwords.contains(current) {
            tokens.push(std::mem::take(current));
        } else {
            current.clear();
        }
        *len = 0;
    };
    for c in text.chars().flat_map(char::to_lowercase) {
        if is_token_char(c) {
            current.push(c);
            len += 1;
        } else if len > 0 {
            flush(&mut current, &mut len, &mut tokens);
        }
    }
    if len > 0 {
        flush(&mut current, &mut len, &mut tokens);
    }
    tokens
}

/// Tokens of `title + " " + body`.
pub fn document_tokens(doc: &RawDocument, stopwords: &StopwordList) -> Vec<String> {
    clean_tokenize(&format!("{} {}", doc.title, doc.body), stopwords)
}

/// Cleans every document; documents left with no tokens are dropped and
/// counted. Output order follows corpus order.
pub fn preprocess_corpus(
    corpus: &Corpus,
    stopwords: &StopwordList,
) -> (Vec<TokenizedDocument>, PreprocessSummary) {
    let cleaned: Vec<TokenizedDocument> = corpus
        .documents()
        .par_iter()
        .map(|d| TokenizedDocument {
            tokens: document_tokens(d, stopwords),
            label: d.label,
        })
        .collect();
    let total = cleaned.len();
    let kept: Vec<TokenizedDocument> = cleaned
        .into_iter()
        .filter(|d| !d.tokens.is_empty())
        .collect();
    let summary = PreprocessSummary {
        kept: kept.len(),
        dropped_empty: total - kept.len(),
    };
    (kept, summary)
}
