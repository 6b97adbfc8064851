//! Per-class sequence models with neural factor scores.
//!
//! This crate trains one small model per class of interest (a word, a
//! user, …) over labeled observation sequences, decodes with Viterbi
//! search over a label trellis, and turns raw sequence scores into
//! accept/reject decisions via a linear calibration. Three architectures
//! provide the factor scores: an MLP pair over observations and label
//! transitions (`crf-mlp`), an Elman recurrent network (`crf-rnn`), and a
//! single-layer perceptron (`crf-prcpt`).
//!
//! The high-level entry points are [`training::train`],
//! [`decoder::viterbi`], [`evaluation::evaluate_model`], and the
//! benchmark drivers in [`harness`]. `data` holds loaders for the
//! pixel-word corpus and generic event logs, plus synthetic generators
//! used by the test suite.

pub mod data;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod model;
pub mod neural;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Architecture, Dataset, HyperParams, LabelAlphabet, LabeledSequence, ModelDescriptor,
    Observation, PrevLabel,
};
