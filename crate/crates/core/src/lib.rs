//! Identifier-anchored paragraph vectors for passage retrieval.
//!
//! The pipeline: ingest articles and question records into fixed-size
//! passages ([`corpus`]), build a frequency-filtered vocabulary
//! ([`vocab`]), train passage and question identifier vectors jointly
//! with word vectors ([`model`], [`trainer`]), embed unseen questions
//! against the frozen model ([`infer`]), run exact cosine top-k over a
//! vector store ([`store`]), and score retrieval quality ([`eval`]).
//! [`tuner`] searches hyperparameter combinations against validation
//! rank metrics.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod infer;
pub mod model;
pub mod seed;
pub mod store;
pub mod trainer;
pub mod tuner;
pub mod vocab;

pub use error::{Error, Result};
