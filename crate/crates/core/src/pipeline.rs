//! End-to-end training and scoring: corpus → tokens → features → SVM.

use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, EvaluationReport};
use crate::preprocess::{
    clean_tokenize, document_tokens, preprocess_corpus, StopwordList, TokenizedDocument,
};
use crate::rng::stage;
use crate::sparse::SparseVector;
use crate::svm::{
    class_of, map_label, scale_alpha, train_kernel_with_progress, train_linear_with_progress,
    Classifier, Kernel, Progress, SolverConfig, TrainingSet,
};
use crate::vectorize::{
    bow_vector, build_vocab, embed_doc, fit_tfidf, tfidf_vector, train_cbow_with_threads,
    CbowParams, FeatureSpace, TfidfModel, Vocabulary, WordEmbeddings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    Rbf,
}

impl KernelChoice {
    pub const ALL: [KernelChoice; 2] = [KernelChoice::Linear, KernelChoice::Rbf];

    pub fn name(self) -> &'static str {
        match self {
            KernelChoice::Linear => "linear",
            KernelChoice::Rbf => "rbf",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            KernelChoice::Linear => 0,
            KernelChoice::Rbf => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown kernel '{s}' (expected linear or rbf)")))
    }
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Vectorizer × kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PipelineKind {
    pub vectorizer: FeatureSpace,
    pub kernel: KernelChoice,
}

impl PipelineKind {
    pub fn new(vectorizer: FeatureSpace, kernel: KernelChoice) -> Self {
        Self { vectorizer, kernel }
    }

    /// All six combinations, vectorizer-major.
    pub fn all() -> Vec<PipelineKind> {
        FeatureSpace::ALL
            .into_iter()
            .flat_map(|v| {
                KernelChoice::ALL
                    .into_iter()
                    .map(move |k| PipelineKind::new(v, k))
            })
            .collect()
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "svm-{}-{}", self.vectorizer, self.kernel)
    }
}

/// Fitted text-to-vector map.
#[derive(Debug, Clone, PartialEq)]
pub enum Featurizer {
    Bow(Vocabulary),
    Tfidf(TfidfModel),
    W2v(WordEmbeddings),
}

impl Featurizer {
    pub fn space(&self) -> FeatureSpace {
        match self {
            Featurizer::Bow(_) => FeatureSpace::Bow,
            Featurizer::Tfidf(_) => FeatureSpace::Tfidf,
            Featurizer::W2v(_) => FeatureSpace::W2v,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Bow(v) => v.len(),
            Featurizer::Tfidf(m) => m.vocab().len(),
            Featurizer::W2v(e) => e.dim(),
        }
    }

    pub fn transform(&self, doc: &TokenizedDocument) -> SparseVector {
        match self {
            Featurizer::Bow(v) => bow_vector(doc, v),
            Featurizer::Tfidf(m) => tfidf_vector(doc, m),
            Featurizer::W2v(e) => SparseVector::from_dense(&embed_doc(doc, e)),
        }
    }

    pub fn transform_all(&self, docs: &[TokenizedDocument]) -> Vec<SparseVector> {
        docs.par_iter().map(|d| self.transform(d)).collect()
    }
}

/// Fits the vectorizer for `space` on training documents. CBOW uses `cbow` as given.
pub fn fit_featurizer(
    space: FeatureSpace,
    train_docs: &[TokenizedDocument],
    min_df: u64,
    cbow: &CbowParams,
    threads: usize,
) -> Result<Featurizer> {
    Ok(match space {
        FeatureSpace::Bow => Featurizer::Bow(build_vocab(train_docs, min_df)?),
        FeatureSpace::Tfidf => Featurizer::Tfidf(fit_tfidf(&build_vocab(train_docs, min_df)?)),
        FeatureSpace::W2v => Featurizer::W2v(train_cbow_with_threads(train_docs, cbow, threads)?),
    })
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub vectorizer: FeatureSpace,
    pub kernel: KernelChoice,
    pub r: f64,
    /// RBF width; `None` selects the scale heuristic on the training features.
    pub alpha: Option<f64>,
    pub min_df: u64,
    /// `seed` inside is replaced by the pipeline seed's embedding stream.
    pub cbow: CbowParams,
    /// `seed` inside is replaced by the pipeline seed's solver stream.
    pub solver: SolverConfig,
    pub seed: u64,
    pub threads: usize,
    /// Recorded in the model file only.
    pub split: SplitSpec,
    pub stopwords: StopwordList,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            vectorizer: FeatureSpace::Bow,
            kernel: KernelChoice::Linear,
            r: 1.0,
            alpha: None,
            min_df: 2,
            cbow: CbowParams::default(),
            solver: SolverConfig::default(),
            seed: 42,
            threads: 1,
            split: SplitSpec::default(),
            stopwords: StopwordList::english(),
        }
    }
}

impl TrainConfig {
    pub fn for_kind(kind: PipelineKind) -> Self {
        Self {
            vectorizer: kind.vectorizer,
            kernel: kind.kernel,
            ..Default::default()
        }
    }

    pub fn kind(&self) -> PipelineKind {
        PipelineKind::new(self.vectorizer, self.kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Config(format!("R must be positive, got {}", self.r)));
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config(format!("alpha must be positive, got {a}")));
            }
        }
        if self.min_df == 0 {
            return Err(Error::Config("min_df must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.cbow.validate()?;
        self.solver.validate()?;
        self.split.validate()
    }

    fn cbow_params(&self) -> CbowParams {
        CbowParams {
            seed: self.seed.wrapping_add(stage::EMBEDDING),
            ..self.cbow.clone()
        }
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed.wrapping_add(stage::SOLVER),
            ..self.solver
        }
    }
}

/// Settings recorded alongside a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub split: SplitSpec,
    pub min_df: u64,
    pub r: f64,
    /// RBF width actually used; 0 for linear models.
    pub alpha: f64,
    pub tolerance: f64,
    pub max_iter: u64,
    pub cbow: CbowParams,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
}

/// Vectorizer, classifier and the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: PipelineKind,
    pub featurizer: Featurizer,
    pub classifier: Classifier,
    pub stopwords: StopwordList,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub decision: f64,
    /// No tokens survived cleaning; the decision is that of the zero vector.
    pub empty: bool,
}

impl ModelBundle {
    /// Assembles a bundle, checking that the parts agree with `kind`.
    pub fn new(
        kind: PipelineKind,
        featurizer: Featurizer,
        classifier: Classifier,
        stopwords: StopwordList,
        provenance: Provenance,
    ) -> Result<Self> {
        if featurizer.space() != kind.vectorizer {
            return Err(Error::Pipeline(format!(
                "featurizer is {} but pipeline kind says {}",
                featurizer.space(),
                kind.vectorizer
            )));
        }
        let kernel_ok = matches!(
            (kind.kernel, &classifier),
            (KernelChoice::Linear, Classifier::Linear(_))
                | (KernelChoice::Rbf, Classifier::Kernel(_))
        );
        if !kernel_ok {
            return Err(Error::Pipeline(format!(
                "classifier does not match {} kernel",
                kind.kernel
            )));
        }
        if featurizer.dim() != classifier.dim() {
            return Err(Error::Pipeline(format!(
                "featurizer dimension {} but classifier dimension {}",
                featurizer.dim(),
                classifier.dim()
            )));
        }
        Ok(Self {
            kind,
            featurizer,
            classifier,
            stopwords,
            provenance,
        })
    }

    /// Refuses to score in a feature space other than the one trained on.
    pub fn check_space(&self, requested: FeatureSpace) -> Result<()> {
        if requested != self.kind.vectorizer {
            return Err(Error::Pipeline(format!(
                "model was trained on {} features but {} was requested",
                self.kind.vectorizer, requested
            )));
        }
        Ok(())
    }

    pub fn predict_tokens(&self, tokens: Vec<String>) -> Result<Prediction> {
        let empty = tokens.is_empty();
        // label only feeds metrics; transform ignores it
        let doc = TokenizedDocument {
            tokens,
            label: crate::corpus::Label::Fake,
        };
        let decision = self
            .classifier
            .decision_value(&self.featurizer.transform(&doc))?;
        Ok(Prediction {
            label: class_of(decision),
            decision,
            empty,
        })
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        self.predict_tokens(clean_tokenize(text, &self.stopwords))
    }

    pub fn predict_texts(&self, texts: &[String]) -> Result<Vec<Prediction>> {
        texts.par_iter().map(|t| self.predict_text(t)).collect()
    }

    /// One prediction per document, in corpus order; nothing is dropped.
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Prediction>> {
        corpus
            .documents()
            .par_iter()
            .map(|d| self.predict_tokens(document_tokens(d, &self.stopwords)))
            .collect()
    }
}

/// Counts and timings gathered while fitting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    pub documents: usize,
    pub dropped_empty: usize,
    pub feature_dim: usize,
    pub alpha: Option<f64>,
    pub support_vectors: usize,
    pub objective: f64,
    pub featurize_secs: f64,
    pub train_secs: f64,
}

pub fn fit(train: &Corpus, cfg: &TrainConfig) -> Result<(ModelBundle, FitReport)> {
    fit_with_progress(train, cfg, &mut |_| {})
}

pub fn fit_with_progress(
    train: &Corpus,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(Progress),
) -> Result<(ModelBundle, FitReport)> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let (docs, summary) = preprocess_corpus(train, &cfg.stopwords);
    if docs.is_empty() {
        return Err(Error::Precondition(
            "no training document survived cleaning".into(),
        ));
    }
    let cbow = cfg.cbow_params();
    let featurizer = fit_featurizer(cfg.vectorizer, &docs, cfg.min_df, &cbow, cfg.threads)?;
    let x = featurizer.transform_all(&docs);
    let y = docs
        .iter()
        .map(|d| map_label(d.label.class()))
        .collect::<Result<Vec<i8>>>()?;
    let data = TrainingSet::new(x, y)?;
    let featurize_secs = start.elapsed().as_secs_f64();

    let start = std::time::Instant::now();
    let solver = cfg.solver_config();
    let (classifier, alpha, support_vectors, objective) = match cfg.kernel {
        KernelChoice::Linear => {
            let m = train_linear_with_progress(&data, cfg.r, &solver, progress)?;
            let svs = m.support_vectors(&data, solver.tolerance)?.count();
            let obj = m.objective();
            (Classifier::Linear(m), None, svs, obj)
        }
        KernelChoice::Rbf => {
            let alpha = cfg.alpha.unwrap_or_else(|| scale_alpha(&data));
            let m =
                train_kernel_with_progress(&data, cfg.r, Kernel::Rbf { alpha }, &solver, progress)?;
            let (svs, obj) = (m.support_x().len(), m.dual_objective());
            (Classifier::Kernel(m), Some(alpha), svs, obj)
        }
    };
    let train_secs = start.elapsed().as_secs_f64();

    let provenance = Provenance {
        seed: cfg.seed,
        split: cfg.split,
        min_df: cfg.min_df,
        r: cfg.r,
        alpha: alpha.unwrap_or(0.0),
        tolerance: solver.tolerance,
        max_iter: solver.max_iter as u64,
        cbow,
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let report = FitReport {
        documents: docs.len(),
        dropped_empty: summary.dropped_empty,
        feature_dim: featurizer.dim(),
        alpha,
        support_vectors,
        objective,
        featurize_secs,
        train_secs,
    };
    let bundle = ModelBundle::new(
        cfg.kind(),
        featurizer,
        classifier,
        cfg.stopwords.clone(),
        provenance,
    )?;
    Ok((bundle, report))
}

/// Scores every document of `test` and computes the metric report.
pub fn evaluate(
    bundle: &ModelBundle,
    test: &Corpus,
) -> Result<(EvaluationReport, Vec<Prediction>)> {
    let preds = bundle.predict_corpus(test)?;
    let y_true: Vec<u8> = test.documents().iter().map(|d| d.label.class()).collect();
    let y_pred: Vec<u8> = preds.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.decision).collect();
    let report = metrics::evaluate(&y_true, &y_pred, &scores)?;
    Ok((report, preds))
}
