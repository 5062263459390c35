use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScoreCard;
use crate::scanner::{scan_all, AuditableType, PatternFinding};

/// Something that turns a prompt into a candidate explanation.
pub trait GeneratorClient {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateStyle {
    /// Walks through every scanner finding with its line and a fix.
    Detailed,
    /// Mentions only the first finding.
    Brief,
}

/// Offline stand-in for a hosted model: explanations are assembled from
/// scanner findings on the contract embedded in the prompt. Output depends
/// only on (prompt, seed).
#[derive(Debug, Clone)]
pub struct TemplateGenerator {
    name: String,
    style: TemplateStyle,
    seed: u64,
}

impl TemplateGenerator {
    pub fn new(name: impl Into<String>, style: TemplateStyle, seed: u64) -> Self {
        TemplateGenerator {
            name: name.into(),
            style,
            seed,
        }
    }

    /// The two default mock generators.
    pub fn pair(seed: u64) -> [TemplateGenerator; 2] {
        [
            TemplateGenerator::new("mock-detailed", TemplateStyle::Detailed, seed),
            TemplateGenerator::new("mock-brief", TemplateStyle::Brief, seed),
        ]
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

const FENCE_OPEN: &str = "```solidity\n";
const FENCE_CLOSE: &str = "\n```";

/// Standard explanation request for one contract.
pub fn explain_prompt(contract: &str) -> String {
    format!(
        "Analyze the following Solidity contract. State whether it is vulnerable, \
         name the vulnerability types and explain the affected lines.\n{FENCE_OPEN}{}{FENCE_CLOSE}\n",
        contract.trim_end()
    )
}

/// The contract inside the first solidity fence of a prompt, or the whole
/// prompt when there is none.
pub fn extract_contract(prompt: &str) -> &str {
    prompt
        .find(FENCE_OPEN)
        .map(|start| {
            let body = &prompt[start + FENCE_OPEN.len()..];
            body.find(FENCE_CLOSE).map_or(body, |end| &body[..end])
        })
        .unwrap_or(prompt)
}

fn findings_of(contract: &str) -> Vec<PatternFinding> {
    scan_all("", contract).map(|r| r.findings).unwrap_or_default()
}

fn risk(t: AuditableType) -> &'static str {
    match t {
        AuditableType::RE => "a callee can re-enter before the balance is updated and withdraw repeatedly",
        AuditableType::TD => "the block proposer can shift the timestamp to steer the outcome",
        AuditableType::IO => "the value can wrap around and corrupt balances or supply",
        AuditableType::DE => "the called code runs with this contract's storage and balance",
    }
}

fn fix(t: AuditableType) -> &'static str {
    match t {
        AuditableType::RE => "update state before the external call or add a reentrancy guard",
        AuditableType::TD => "avoid using the timestamp as a source of randomness or tight deadlines",
        AuditableType::IO => "use checked arithmetic (SafeMath or a 0.8+ compiler outside unchecked blocks)",
        AuditableType::DE => "restrict delegatecall to a fixed, trusted implementation",
    }
}

fn type_name(t: AuditableType) -> &'static str {
    match t {
        AuditableType::RE => "reentrancy",
        AuditableType::TD => "timestamp dependence",
        AuditableType::IO => "integer overflow",
        AuditableType::DE => "dangerous delegatecall",
    }
}

impl GeneratorClient for TemplateGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, prompt: &str) -> String {
        let findings = findings_of(extract_contract(prompt));
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(prompt) ^ self.seed);
        if findings.is_empty() {
            let opener = [
                "The contract appears secure.",
                "No vulnerable pattern was found; the contract is secure.",
                "The contract is secure with respect to the checked patterns.",
            ]
            .choose(&mut rng)
            .expect("non-empty");
            return format!("{opener} External calls, timestamps, arithmetic and delegatecall usage look safe.");
        }
        let types: BTreeSet<AuditableType> = findings.iter().map(|f| f.vuln_type).collect();
        let names: Vec<&str> = types.iter().map(|&t| type_name(t)).collect();
        let opener = [
            "The contract is vulnerable",
            "This contract is vulnerable",
            "Vulnerable",
        ]
        .choose(&mut rng)
        .expect("non-empty");
        match self.style {
            TemplateStyle::Detailed => {
                let mut out = format!("{opener}: {}.", names.join(", "));
                for f in &findings {
                    out.push_str(&format!(
                        " Line {}: {}; {}.",
                        f.span.start_line,
                        f.note,
                        risk(f.vuln_type)
                    ));
                }
                for &t in &types {
                    out.push_str(&format!(" To fix {}, {}.", type_name(t), fix(t)));
                }
                out
            }
            TemplateStyle::Brief => {
                let f = &findings[0];
                format!("{opener}: {} near line {}.", type_name(f.vuln_type), f.span.start_line)
            }
        }
    }
}

/// Heuristic stand-in for reviewer scoring on the 1–10 scale.
///
/// Correctness tracks how many of the scanner-flagged lines the explanation
/// cites; thoroughness how many flagged types it names, whether it proposes a
/// fix and whether it goes beyond one sentence per type; clarity the mean
/// sentence length.
pub fn heuristic_score(contract: &str, explanation: &str) -> ScoreCard {
    let findings = findings_of(contract);
    let lower = explanation.to_lowercase();
    let scale = |frac: f64| (1.0 + 9.0 * frac).round() as i64;
    let (correctness, thoroughness) = if findings.is_empty() {
        let says_secure = lower.contains("secure");
        (if says_secure { 9 } else { 3 }, if says_secure { 7 } else { 3 })
    } else {
        let lines: BTreeSet<u32> = findings.iter().map(|f| f.span.start_line).collect();
        let cited = lines
            .iter()
            .filter(|l| lower.contains(&format!("line {l}")))
            .count();
        let types: BTreeSet<AuditableType> = findings.iter().map(|f| f.vuln_type).collect();
        let named = types.iter().filter(|&&t| lower.contains(type_name(t))).count();
        let c = if lower.contains("vulnerable") { scale(cited as f64 / lines.len() as f64) } else { 1 };
        let remedy = ["fix", "guard", "restrict", "avoid", "use checked"].iter().any(|w| lower.contains(w));
        let depth = explanation.split(['.', ';']).filter(|s| !s.trim().is_empty()).count() > types.len();
        let t = 0.5 * named as f64 / types.len() as f64
            + 0.25 * f64::from(u8::from(remedy))
            + 0.25 * f64::from(u8::from(depth));
        (c, scale(t))
    };
    let sentences = explanation.split(['.', ';']).filter(|s| !s.trim().is_empty()).count().max(1);
    let words = explanation.split_whitespace().count();
    let mean = words as f64 / sentences as f64;
    let clarity = (10.0 - ((mean - 12.0).max(0.0) / 3.0)).round().clamp(1.0, 10.0) as i64;
    ScoreCard::new(correctness.clamp(1, 10), thoroughness.clamp(1, 10), clarity)
        .expect("components clamped into range")
}

/// A generated explanation with its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub generator: String,
    pub text: String,
    pub score: ScoreCard,
}

/// One scored candidate per generator, in generator order.
pub fn candidates_for(contract: &str, generators: &[&dyn GeneratorClient]) -> Vec<Candidate> {
    let prompt = explain_prompt(contract);
    generators
        .iter()
        .map(|g| {
            let text = g.generate(&prompt);
            let score = heuristic_score(contract, &text);
            Candidate {
                generator: g.name().to_string(),
                text,
                score,
            }
        })
        .collect()
}
