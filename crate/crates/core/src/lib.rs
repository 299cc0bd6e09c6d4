//! Fake news detection toolkit.
//!
//! The crate covers the whole batch pipeline: ISOT-style corpus ingestion and
//! stratified splitting, token cleaning, three text vectorizers (bag of words,
//! TF-IDF and CBOW word embeddings), linear and RBF-kernel support vector
//! machines, evaluation metrics with ROC/AUC, exact t-SNE projection, and a
//! versioned binary model container.
//!
//! [`pipeline`] wires the pieces together; the `fnd` binary in the sibling
//! `fnd-cli` crate is a thin driver around it.

pub mod artifact;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod projection;
pub mod rng;
pub mod sparse;
pub mod svm;
pub mod vectorize;

pub use error::{Error, Result};
pub use sparse::SparseVector;
