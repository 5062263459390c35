//! SFT and DPO dataset builders, weighted composite scoring, manifest
//! validation and a deterministic mock explanation generator.

mod dpo;
mod generator;
mod manifest;
mod score;
mod sft;

pub use dpo::{build_dpo, dpo_prompt, parse_dpo, DegradationTag, DpoRecord};
pub use generator::{
    candidates_for, explain_prompt, extract_contract, heuristic_score, Candidate, GeneratorClient,
    TemplateGenerator, TemplateStyle,
};
pub use manifest::{
    validate_manifest, DatasetManifest, EvalSplit, ManifestCheck, ManifestReport, SHARE_TOLERANCE_PP,
};
pub use score::{argmax_first, composite_score, select_best, ScoreCard};
pub use sft::{build_sft, emit_sft, parse_sft, Label, LabeledContract, ReviewedExplanation, SftExample};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{dimension} score {value} is outside 1..=10")]
    ScoreOutOfRange { dimension: &'static str, value: i64 },
    #[error("stored composite score {stored} does not match recomputed {computed}")]
    WcsMismatch { stored: f64, computed: f64 },
    #[error("cannot select from an empty candidate list")]
    NoCandidates,
    #[error("explanations not marked as reviewed: {}", .0.join(", "))]
    Unreviewed(Vec<String>),
    #[error("records without an explanation: {}", .0.join(", "))]
    MissingExplanation(Vec<String>),
    #[error("invalid example `{id}`: {reason}")]
    InvalidExample { id: String, reason: String },
    #[error("invalid preference pair `{id}`: {reason}")]
    InvalidPair { id: String, reason: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown degradation tag `{0}`")]
    UnknownTag(String),
    #[error("line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Serializes `items` as JSON lines, each terminated by `\n`.
pub(crate) fn to_jsonl<T: serde::Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("dataset rows always serialize"));
        out.push('\n');
    }
    out
}

pub(crate) fn from_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, DatasetError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|source| DatasetError::Jsonl { line: n + 1, source }))
        .collect()
}

pub(crate) fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), DatasetError> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(DatasetError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}
