//! Text vectorizers: bag of words counts, TF-IDF and CBOW word embeddings.

mod cbow;
mod counts;
mod vocab;

pub use cbow::{
    embed_doc, train_cbow, train_cbow_with_threads, CbowExample, CbowObjective, CbowParams,
    WordEmbeddings,
};
pub use counts::{bow_vector, fit_tfidf, tfidf_vector, TfidfModel};
pub use vocab::{build_vocab, Vocabulary};

/// Feature space a pipeline works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    Bow,
    Tfidf,
    W2v,
}

impl FeatureSpace {
    pub const ALL: [FeatureSpace; 3] = [FeatureSpace::Bow, FeatureSpace::Tfidf, FeatureSpace::W2v];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSpace::Bow => "bow",
            FeatureSpace::Tfidf => "tfidf",
            FeatureSpace::W2v => "w2v",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            FeatureSpace::Bow => 0,
            FeatureSpace::Tfidf => 1,
            FeatureSpace::W2v => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.code() == code)
    }
}

impl std::str::FromStr for FeatureSpace {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                crate::Error::Config(format!(
                    "unknown vectorizer '{s}' (expected bow, tfidf or w2v)"
                ))
            })
    }
}

impl std::fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
