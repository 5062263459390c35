//! Corpus ingestion: tokenization, Jaccard deduplication, source
//! decomposition and the mixed continual-pre-training stream.

mod decompose;
mod dedup;
mod io;
mod mix;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::lexer;

pub use decompose::{decompose, DecomposeError, DecomposedSource};
pub use dedup::{dedup, jaccard, DedupOutcome, Removal};
pub use io::{load_dir, load_jsonl, parse_jsonl, CorpusManifest, ReferenceTargets};
pub use mix::{assemble_cpt_mix, CptSequence, MixPlan, MixSource};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("record `{0}` has an empty source")]
    EmptySource(String),
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("dedup threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("cannot assemble a pre-training mix from empty corpora")]
    EmptyMix,
    #[error("invalid mix plan: {0}")]
    BadMixPlan(String),
    #[error("line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Where a source unit was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Chain,
    Github,
    Blog,
    #[default]
    Synthetic,
}

/// Content category of a record within the pre-training mix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Contract,
    GeneralCode,
    Math,
    English,
    Chinese,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Contract,
        Category::GeneralCode,
        Category::Math,
        Category::English,
        Category::Chinese,
    ];

    pub fn is_contract(self) -> bool {
        self == Category::Contract
    }
}

/// Splits source text on Solidity lexeme boundaries. Comments are dropped and
/// string literals stay whole. Never fails; empty input gives an empty list.
pub fn tokenize(source: &str) -> Vec<String> {
    lexer::lex_lenient(source)
        .into_iter()
        .map(|l| l.text)
        .collect()
}

/// One source unit of the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub id: String,
    pub filename: String,
    pub source: String,
    pub token_bag: BTreeSet<String>,
    pub origin: Origin,
    pub category: Category,
}

impl ContractRecord {
    pub fn new(
        id: impl Into<String>,
        filename: impl Into<String>,
        source: impl Into<String>,
        origin: Origin,
        category: Category,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let source = source.into();
        if source.trim().is_empty() {
            return Err(CorpusError::EmptySource(id));
        }
        let token_bag = tokenize(&source).into_iter().collect();
        Ok(ContractRecord {
            id,
            filename: filename.into(),
            source,
            token_bag,
            origin,
            category,
        })
    }

    /// Shorthand for a synthetic contract record.
    pub fn contract(
        id: impl Into<String>,
        filename: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        Self::new(id, filename, source, Origin::Synthetic, Category::Contract)
    }
}

/// Rejects corpora with repeated ids.
pub fn check_unique_ids(records: &[ContractRecord]) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(CorpusError::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}
