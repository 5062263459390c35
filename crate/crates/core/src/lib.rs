//! Toolkit for explainable smart-contract vulnerability detection at desk scale.
//!
//! The crate covers the whole data and training path:
//!
//! * [`corpus`]: tokenization, Jaccard deduplication, source decomposition and
//!   the mixed continual-pre-training stream.
//! * [`scanner`]: a lexeme-level Solidity pattern scanner for reentrancy,
//!   timestamp dependence, integer overflow and delegatecall.
//! * [`datasets`]: SFT / DPO dataset builders, weighted composite scoring and
//!   manifest validation.
//! * [`model`]: a tiny causal attention policy with exact log-probabilities and
//!   a hand-written backward pass.
//! * [`losses`]: the CPT, balanced SFT and DPO objectives plus the closed-form
//!   optimal-policy oracle.
//! * [`trainer`]: AdamW, cosine schedule and the three-stage pipeline.
//! * [`evalkit`]: detection metrics, confusion-matrix reconstruction and
//!   Likert summaries.

pub mod corpus;
pub mod datasets;
pub mod evalkit;
pub mod lexer;
pub mod losses;
pub mod model;
pub mod scanner;
pub mod synth;
pub mod taxonomy;
pub mod trainer;

pub use taxonomy::{VulnFamily, VulnType};
