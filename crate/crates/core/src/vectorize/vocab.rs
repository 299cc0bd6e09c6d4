use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedDocument;

/// Term index with document frequencies, built from training documents only.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    term_to_index: HashMap<String, u32>,
    doc_freq: Vec<u64>,
    total_docs: u64,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its parts (terms in index order).
    pub fn from_parts(terms: Vec<String>, doc_freq: Vec<u64>, total_docs: u64) -> Result<Self> {
        if terms.len() != doc_freq.len() {
            return Err(Error::Domain("terms and doc_freq lengths differ".into()));
        }
        if let Some(bad) = doc_freq.iter().find(|&&m| m == 0 || m > total_docs) {
            return Err(Error::Domain(format!(
                "document frequency {bad} outside [1, {total_docs}]"
            )));
        }
        let mut term_to_index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if term_to_index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Domain(format!("duplicate term '{t}'")));
            }
        }
        Ok(Self {
            terms,
            term_to_index,
            doc_freq,
            total_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index(&self, term: &str) -> Option<u32> {
        self.term_to_index.get(term).copied()
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// `m_t` for the term at `index`.
    pub fn doc_freq(&self, index: u32) -> u64 {
        self.doc_freq[index as usize]
    }

    pub fn doc_freqs(&self) -> &[u64] {
        &self.doc_freq
    }

    /// `M`, the number of training documents.
    pub fn total_docs(&self) -> u64 {
        self.total_docs
    }
}

/// Keeps terms present in at least `min_df` training documents; indices
/// follow lexicographic term order.
pub fn build_vocab(train_docs: &[TokenizedDocument], min_df: u64) -> Result<Vocabulary> {
    if train_docs.is_empty() {
        return Err(Error::Precondition(
            "cannot build a vocabulary from zero documents".into(),
        ));
    }
    let mut df: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in train_docs {
        let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let (terms, freqs): (Vec<String>, Vec<u64>) = df
        .into_iter()
        .filter(|&(_, m)| m >= min_df.max(1))
        .map(|(t, m)| (t.to_string(), m))
        .unzip();
    Vocabulary::from_parts(terms, freqs, train_docs.len() as u64)
}
