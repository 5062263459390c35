use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_unique, from_jsonl, to_jsonl, DatasetError};
use crate::taxonomy::VulnFamily;

/// How a rejected output was deliberately weakened relative to the chosen
/// one. One tag per vulnerability family; every rejected output must carry
/// one so the quality gap is checkable from metadata alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DegradationTag {
    #[serde(rename = "re-obvious-external-calls-only")]
    ReObviousExternalCallsOnly,
    #[serde(rename = "td-direct-timestamp-only")]
    TdDirectTimestampOnly,
    #[serde(rename = "io-simple-overflow-only")]
    IoSimpleOverflowOnly,
    #[serde(rename = "de-basic-delegatecall-only")]
    DeBasicDelegatecallOnly,
    #[serde(rename = "mu-key-details-omitted")]
    MuKeyDetailsOmitted,
}

impl DegradationTag {
    pub const ALL: [DegradationTag; 5] = [
        DegradationTag::ReObviousExternalCallsOnly,
        DegradationTag::TdDirectTimestampOnly,
        DegradationTag::IoSimpleOverflowOnly,
        DegradationTag::DeBasicDelegatecallOnly,
        DegradationTag::MuKeyDetailsOmitted,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            DegradationTag::ReObviousExternalCallsOnly => "re-obvious-external-calls-only",
            DegradationTag::TdDirectTimestampOnly => "td-direct-timestamp-only",
            DegradationTag::IoSimpleOverflowOnly => "io-simple-overflow-only",
            DegradationTag::DeBasicDelegatecallOnly => "de-basic-delegatecall-only",
            DegradationTag::MuKeyDetailsOmitted => "mu-key-details-omitted",
        }
    }

    pub fn family(self) -> VulnFamily {
        match self {
            DegradationTag::ReObviousExternalCallsOnly => VulnFamily::RE,
            DegradationTag::TdDirectTimestampOnly => VulnFamily::TD,
            DegradationTag::IoSimpleOverflowOnly => VulnFamily::IO,
            DegradationTag::DeBasicDelegatecallOnly => VulnFamily::DE,
            DegradationTag::MuKeyDetailsOmitted => VulnFamily::MU,
        }
    }

    pub fn for_family(family: VulnFamily) -> DegradationTag {
        DegradationTag::ALL
            .into_iter()
            .find(|t| t.family() == family)
            .expect("one tag per family")
    }

    /// Reviewer-facing description of the weakening.
    pub fn description(self) -> &'static str {
        match self {
            DegradationTag::ReObviousExternalCallsOnly => {
                "flags only the plainly visible external calls; misses call ordering, \
                 state written after the call and indirect re-entry paths"
            }
            DegradationTag::TdDirectTimestampOnly => {
                "notices block.timestamp where it is read directly; misses timestamps \
                 flowing through variables or helper functions into decisions"
            }
            DegradationTag::IoSimpleOverflowOnly => {
                "points at the obvious arithmetic site; misses compound expressions, \
                 unchecked blocks and the missing guard library"
            }
            DegradationTag::DeBasicDelegatecallOnly => {
                "reports that delegatecall is used; does not discuss who controls the \
                 target or the shared storage context"
            }
            DegradationTag::MuKeyDetailsOmitted => {
                "names the issue class but drops or oversimplifies the details that \
                 make the exploit work"
            }
        }
    }
}

impl fmt::Display for DegradationTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for DegradationTag {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DegradationTag::ALL
            .into_iter()
            .find(|t| t.slug() == s)
            .ok_or_else(|| DatasetError::UnknownTag(s.to_string()))
    }
}

/// One line of the DPO file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoRecord {
    pub id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub tag: Option<DegradationTag>,
}

impl DpoRecord {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidPair {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        for (name, value) in [("id", &self.id), ("prompt", &self.prompt), ("chosen", &self.chosen), ("rejected", &self.rejected)] {
            if value.trim().is_empty() {
                return Err(invalid(&format!("{name} is empty")));
            }
        }
        if self.chosen == self.rejected {
            return Err(invalid("chosen and rejected outputs are identical"));
        }
        if self.tag.is_none() {
            return Err(invalid("rejected output carries no degradation tag"));
        }
        Ok(())
    }
}

/// Validates every pair and emits the DPO JSONL, ordered by id.
pub fn build_dpo(pairs: &[DpoRecord]) -> Result<String, DatasetError> {
    check_unique(pairs.iter().map(|p| p.id.as_str()))?;
    for p in pairs {
        p.validate()?;
    }
    let mut sorted: Vec<&DpoRecord> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(to_jsonl(&sorted))
}

pub fn parse_dpo(text: &str) -> Result<Vec<DpoRecord>, DatasetError> {
    let pairs: Vec<DpoRecord> = from_jsonl(text)?;
    check_unique(pairs.iter().map(|p| p.id.as_str()))?;
    for p in &pairs {
        p.validate()?;
    }
    Ok(pairs)
}

/// Instruction prompt shared by every DPO pair of a family.
pub fn dpo_prompt(contract: &str, family: VulnFamily) -> String {
    format!(
        "You are auditing a Solidity contract for {} vulnerabilities.\n\
         Decide whether the contract is vulnerable, then explain the relevant code paths.\n\
         ```solidity\n{}\n```\n",
        family.long_name(),
        contract.trim_end()
    )
}
