//! Vulnerability taxonomy shared by the scanner, dataset builders and evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Fine-grained vulnerability type carried by labeled examples.
///
/// The last seven variants are the machine-unauditable classes; they only
/// enter the pipeline through labeled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VulnType {
    /// Reentrancy.
    RE,
    /// Timestamp dependence.
    TD,
    /// Integer overflow / underflow.
    IO,
    /// Dangerous delegatecall.
    DE,
    /// Price oracle manipulation.
    PO,
    /// Erroneous accounting.
    EA,
    /// ID uniqueness violation.
    IU,
    /// Inconsistent state update.
    IS,
    /// Privilege escalation.
    PE,
    /// Atomicity violation.
    AV,
    /// Contract implementation specific.
    CI,
}

impl VulnType {
    pub const ALL: [VulnType; 11] = [
        VulnType::RE,
        VulnType::TD,
        VulnType::IO,
        VulnType::DE,
        VulnType::PO,
        VulnType::EA,
        VulnType::IU,
        VulnType::IS,
        VulnType::PE,
        VulnType::AV,
        VulnType::CI,
    ];

    pub fn family(self) -> VulnFamily {
        match self {
            VulnType::RE => VulnFamily::RE,
            VulnType::TD => VulnFamily::TD,
            VulnType::IO => VulnFamily::IO,
            VulnType::DE => VulnFamily::DE,
            _ => VulnFamily::MU,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VulnType::RE => "RE",
            VulnType::TD => "TD",
            VulnType::IO => "IO",
            VulnType::DE => "DE",
            VulnType::PO => "PO",
            VulnType::EA => "EA",
            VulnType::IU => "IU",
            VulnType::IS => "IS",
            VulnType::PE => "PE",
            VulnType::AV => "AV",
            VulnType::CI => "CI",
        }
    }
}

impl fmt::Display for VulnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VulnType {
    type Err = UnknownVulnType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownVulnType(s.to_string()))
    }
}

/// Per-family grouping used by dataset manifests, DPO degradation tags and
/// evaluation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VulnFamily {
    RE,
    TD,
    IO,
    DE,
    /// Machine-unauditable vulnerabilities (PO/EA/IU/IS/PE/AV/CI).
    MU,
}

impl VulnFamily {
    pub const ALL: [VulnFamily; 5] = [
        VulnFamily::RE,
        VulnFamily::TD,
        VulnFamily::IO,
        VulnFamily::DE,
        VulnFamily::MU,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VulnFamily::RE => "RE",
            VulnFamily::TD => "TD",
            VulnFamily::IO => "IO",
            VulnFamily::DE => "DE",
            VulnFamily::MU => "MU",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            VulnFamily::RE => "Reentrancy",
            VulnFamily::TD => "Timestamp Dependency",
            VulnFamily::IO => "Overflow/Underflow",
            VulnFamily::DE => "Delegatecall",
            VulnFamily::MU => "Machine-unauditable",
        }
    }
}

impl fmt::Display for VulnFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VulnFamily {
    type Err = UnknownVulnType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnFamily::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownVulnType(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown vulnerability type `{0}`")]
pub struct UnknownVulnType(pub String);
