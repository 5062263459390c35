use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_unique, from_jsonl, to_jsonl, DatasetError, ScoreCard};
use crate::scanner::Span;
use crate::taxonomy::VulnType;

/// Detection label, serialized as `1` (vulnerable) or `0` (secure).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Secure,
    Vulnerable,
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Secure => 0,
            Label::Vulnerable => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Label::Secure),
            1 => Ok(Label::Vulnerable),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl Label {
    /// The answer word the detection head is trained to emit.
    pub fn answer(self) -> &'static str {
        match self {
            Label::Secure => "secure",
            Label::Vulnerable => "vulnerable",
        }
    }
}

/// One line of the SFT file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftExample {
    pub id: String,
    pub contract: String,
    pub label: Label,
    pub vuln_types: Vec<VulnType>,
    pub explanation: String,
    pub locations: Vec<Span>,
}

impl SftExample {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidExample {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.contract.trim().is_empty() {
            return Err(invalid("contract is empty"));
        }
        if self.explanation.trim().is_empty() {
            return Err(invalid("explanation is empty"));
        }
        if self.label == Label::Secure && !(self.vuln_types.is_empty() && self.locations.is_empty()) {
            return Err(invalid("secure examples carry no vulnerability types or locations"));
        }
        if let Some(s) = self.locations.iter().find(|s| !s.is_ordered()) {
            return Err(invalid(&format!("location {s} is not ordered")));
        }
        Ok(())
    }
}

/// A contract with its gold label, before an explanation is attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledContract {
    pub id: String,
    pub contract: String,
    pub label: Label,
    #[serde(default)]
    pub vuln_types: Vec<VulnType>,
    #[serde(default)]
    pub locations: Vec<Span>,
}

/// A selected explanation and whether an expert signed it off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewedExplanation {
    pub id: String,
    pub text: String,
    pub reviewed: bool,
    #[serde(default)]
    pub score: Option<ScoreCard>,
}

/// Joins labeled contracts with their reviewed explanations and emits the
/// SFT JSONL, ordered by id.
pub fn build_sft(
    records: &[LabeledContract],
    explanations: &[ReviewedExplanation],
) -> Result<String, DatasetError> {
    check_unique(records.iter().map(|r| r.id.as_str()))?;
    check_unique(explanations.iter().map(|e| e.id.as_str()))?;
    let by_id: BTreeMap<&str, &ReviewedExplanation> =
        explanations.iter().map(|e| (e.id.as_str(), e)).collect();

    let missing: Vec<String> = records
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingExplanation(missing));
    }
    let mut unreviewed: Vec<String> = records
        .iter()
        .filter(|r| !by_id[r.id.as_str()].reviewed)
        .map(|r| r.id.clone())
        .collect();
    if !unreviewed.is_empty() {
        unreviewed.sort();
        return Err(DatasetError::Unreviewed(unreviewed));
    }

    let examples: Vec<SftExample> = records
        .iter()
        .map(|r| SftExample {
            id: r.id.clone(),
            contract: r.contract.clone(),
            label: r.label,
            vuln_types: r.vuln_types.clone(),
            explanation: by_id[r.id.as_str()].text.clone(),
            locations: r.locations.clone(),
        })
        .collect();
    emit_sft(&examples)
}

/// Validates and serializes examples, ordered by id.
pub fn emit_sft(examples: &[SftExample]) -> Result<String, DatasetError> {
    check_unique(examples.iter().map(|e| e.id.as_str()))?;
    for e in examples {
        e.validate()?;
    }
    let mut sorted: Vec<&SftExample> = examples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(to_jsonl(&sorted))
}

pub fn parse_sft(text: &str) -> Result<Vec<SftExample>, DatasetError> {
    let examples: Vec<SftExample> = from_jsonl(text)?;
    check_unique(examples.iter().map(|e| e.id.as_str()))?;
    for e in &examples {
        e.validate()?;
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, vulnerable: bool) -> LabeledContract {
        LabeledContract {
            id: id.to_string(),
            contract: format!("contract {id} {{ }}"),
            label: if vulnerable { Label::Vulnerable } else { Label::Secure },
            vuln_types: if vulnerable { vec![VulnType::RE] } else { vec![] },
            locations: if vulnerable { vec![Span::new(3, 5, 4, 9)] } else { vec![] },
        }
    }

    fn explained(id: &str, reviewed: bool) -> ReviewedExplanation {
        ReviewedExplanation {
            id: id.to_string(),
            text: format!("analysis of {id}"),
            reviewed,
            score: None,
        }
    }

    #[test]
    fn three_reviewed_records_three_lines_sorted() {
        let recs = [record("c", true), record("a", false), record("b", true)];
        let exps = [explained("a", true), explained("b", true), explained("c", true)];
        let out = build_sft(&recs, &exps).unwrap();
        assert_eq!(out.lines().count(), 3);
        let parsed = parse_sft(&out).unwrap();
        let ids: Vec<_> = parsed.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let first: serde_json::Value = serde_json::from_str(out.lines().nth(1).unwrap()).unwrap();
        assert_eq!(first["label"], 1);
        assert_eq!(first["vuln_types"][0], "RE");
        assert_eq!(first["locations"][0]["start_line"], 3);
    }

    #[test]
    fn unreviewed_is_named() {
        let recs = [record("a", true), record("b", true), record("c", false)];
        let exps = [explained("a", true), explained("b", false), explained("c", true)];
        match build_sft(&recs, &exps) {
            Err(DatasetError::Unreviewed(ids)) => assert_eq!(ids, ["b"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            build_sft(&recs, &exps[..2]),
            Err(DatasetError::MissingExplanation(ids)) if ids == ["c"]
        ));
    }

    #[test]
    fn round_trip_identity() {
        let examples: Vec<SftExample> = (0..4)
            .map(|i| SftExample {
                id: format!("ex{i}"),
                contract: "contract C { uint \"q\"; }\nline two".into(),
                label: if i % 2 == 0 { Label::Vulnerable } else { Label::Secure },
                vuln_types: if i % 2 == 0 { vec![VulnType::IO, VulnType::PO] } else { vec![] },
                explanation: "unicode ✓ and \"quotes\"".into(),
                locations: if i % 2 == 0 { vec![Span::new(1, 1, 1, 4)] } else { vec![] },
            })
            .collect();
        let text = emit_sft(&examples).unwrap();
        assert_eq!(parse_sft(&text).unwrap(), examples);
        assert_eq!(emit_sft(&parse_sft(&text).unwrap()).unwrap(), text);
    }

    #[test]
    fn secure_examples_have_no_types() {
        let mut bad = record("x", false);
        bad.vuln_types.push(VulnType::TD);
        let err = build_sft(&[bad], &[explained("x", true)]).unwrap_err();
        assert!(matches!(err, DatasetError::InvalidExample { .. }));
        assert!(serde_json::from_str::<Label>("2").is_err());
    }
}
