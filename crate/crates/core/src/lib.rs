//! Shapley-value modality attribution for text + image classifiers, with an
//! experiment harness for cross-domain, caption and confounder evaluations.

pub mod cli;
pub mod data;
pub mod harness;
pub mod metrics;
pub mod predictor;
pub mod segment;
pub mod shapley;
