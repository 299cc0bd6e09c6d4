use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::preprocess::TokenizedDocument;
use crate::sparse::SparseVector;

use super::Vocabulary;

fn term_counts(doc: &TokenizedDocument, vocab: &Vocabulary) -> BTreeMap<u32, u64> {
    let mut counts = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(i) = vocab.index(t) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    counts
}

/// Raw in-vocabulary token counts; out-of-vocabulary tokens are ignored.
pub fn bow_vector(doc: &TokenizedDocument, vocab: &Vocabulary) -> SparseVector {
    let counts = term_counts(doc, vocab);
    let (idx, val) = counts.into_iter().map(|(i, c)| (i, c as f64)).unzip();
    SparseVector::from_sorted_unchecked(vocab.len(), idx, val)
}

/// Vocabulary plus `idf(t) = ln(M / m_t)`, unsmoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    vocab: Vocabulary,
    idf: Vec<f64>,
}

impl TfidfModel {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Restores a model whose idf table was stored alongside the vocabulary.
    pub fn from_parts(vocab: Vocabulary, idf: Vec<f64>) -> Result<Self> {
        if idf.len() != vocab.len() {
            return Err(Error::Domain(
                "idf table length differs from vocabulary".into(),
            ));
        }
        if idf.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain(
                "idf weights must be finite and non-negative".into(),
            ));
        }
        Ok(Self { vocab, idf })
    }
}

pub fn fit_tfidf(vocab: &Vocabulary) -> TfidfModel {
    let m = vocab.total_docs() as f64;
    let idf = vocab
        .doc_freqs()
        .iter()
        .map(|&mt| (m / mt as f64).ln())
        .collect();
    TfidfModel {
        vocab: vocab.clone(),
        idf,
    }
}

/// `count(t, doc) * idf(t)`; zero-idf terms produce no entry.
pub fn tfidf_vector(doc: &TokenizedDocument, model: &TfidfModel) -> SparseVector {
    let mut idx = Vec::new();
    let mut val = Vec::new();
    for (i, c) in term_counts(doc, &model.vocab) {
        let w = model.idf[i as usize];
        if w > 0.0 {
            idx.push(i);
            val.push(c as f64 * w);
        }
    }
    SparseVector::from_sorted_unchecked(model.vocab.len(), idx, val)
}
