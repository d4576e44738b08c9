//! Fine-grained redundancy detection for natural-language test cases.
//!
//! Summaries are split into spans, spans are classified into five entity
//! categories and linked to Components by four relation categories, each case
//! is dissected into atomic test tuples, and two cases are compared tuple by
//! tuple under a covering rule.

pub mod applications;
pub mod baselines;
pub mod cli;
pub mod compare;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluate;
pub mod extraction;
pub mod preprocess;
pub mod tuples;

pub use error::{Error, Result};
