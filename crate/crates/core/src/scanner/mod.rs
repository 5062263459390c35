//! Lexeme-level Solidity pattern scanner for the four machine-auditable
//! vulnerability types.
//!
//! Rules work on the lexeme stream plus brace matching; there is no AST and
//! no data-flow analysis. A "state-looking" identifier is one that is indexed
//! with `[` or declared at contract scope. The rule ids and their summaries
//! are listed in [`RULES`].

mod rules;
mod structure;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::ContractRecord;
use crate::lexer::{self, LexError, Lexeme, LexemeKind};
use crate::taxonomy::{UnknownVulnType, VulnFamily, VulnType};

pub use rules::{
    DE_DELEGATECALL, IO_UNCHECKED_ARITHMETIC, IO_UNGUARDED_ARITHMETIC, RE_CALL_VALUE_BEFORE_WRITE,
    RULES, TD_TIMESTAMP_IN_DECISION,
};
use structure::Structure;

/// Vulnerability types the scanner has rules for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AuditableType {
    RE,
    TD,
    IO,
    DE,
}

impl AuditableType {
    pub const ALL: [AuditableType; 4] = [
        AuditableType::RE,
        AuditableType::TD,
        AuditableType::IO,
        AuditableType::DE,
    ];

    pub fn as_str(self) -> &'static str {
        self.vuln_type().as_str()
    }

    pub fn vuln_type(self) -> VulnType {
        match self {
            AuditableType::RE => VulnType::RE,
            AuditableType::TD => VulnType::TD,
            AuditableType::IO => VulnType::IO,
            AuditableType::DE => VulnType::DE,
        }
    }

    pub fn family(self) -> VulnFamily {
        self.vuln_type().family()
    }
}

impl fmt::Display for AuditableType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TryFrom<VulnType> for AuditableType {
    type Error = UnknownVulnType;

    fn try_from(t: VulnType) -> Result<Self, Self::Error> {
        AuditableType::ALL
            .into_iter()
            .find(|a| a.vuln_type() == t)
            .ok_or_else(|| UnknownVulnType(format!("{t} has no scanner rules")))
    }
}

impl TryFrom<VulnFamily> for AuditableType {
    type Error = UnknownVulnType;

    fn try_from(f: VulnFamily) -> Result<Self, Self::Error> {
        AuditableType::ALL
            .into_iter()
            .find(|a| a.family() == f)
            .ok_or_else(|| UnknownVulnType(format!("{} has no scanner rules", f.as_str())))
    }
}

impl FromStr for AuditableType {
    type Err = UnknownVulnType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VulnType::from_str(s).and_then(AuditableType::try_from)
    }
}

/// 1-based, inclusive source range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        Span {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    /// Whether the start does not come after the end and both are 1-based.
    pub fn is_ordered(&self) -> bool {
        self.start_line >= 1
            && self.start_col >= 1
            && (self.start_line, self.start_col) <= (self.end_line, self.end_col)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}-{}:{}",
            self.start_line, self.start_col, self.end_line, self.end_col
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternFinding {
    pub vuln_type: AuditableType,
    pub rule_id: String,
    pub span: Span,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PragmaVersion {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl PragmaVersion {
    pub const fn new(major: u32, minor: u32, patch: u32) -> Self {
        PragmaVersion { major, minor, patch }
    }
}

impl fmt::Display for PragmaVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub contract_id: String,
    pub findings: Vec<PatternFinding>,
    pub pragma_version: Option<PragmaVersion>,
}

/// The first version number of the first `pragma solidity` directive, i.e.
/// the lower bound of the usual `^x.y.z` / `>=x.y.z <...` forms.
pub fn pragma_version(lexemes: &[Lexeme]) -> Option<PragmaVersion> {
    let start = lexemes
        .windows(2)
        .position(|w| w[0].is("pragma") && w[1].is("solidity"))?;
    let number = lexemes[start + 2..]
        .iter()
        .take_while(|l| !l.is(";"))
        .find(|l| l.kind == LexemeKind::Number)?;
    let mut parts = number.text.split('.').map(|p| p.parse::<u32>().ok());
    let major = parts.next()??;
    let minor = parts.next().flatten().unwrap_or(0);
    let patch = parts.next().flatten().unwrap_or(0);
    Some(PragmaVersion::new(major, minor, patch))
}

fn sort_findings(findings: &mut [PatternFinding]) {
    findings.sort_by(|a, b| (a.span, &a.rule_id).cmp(&(b.span, &b.rule_id)));
}

fn run_rule(s: &Structure, pragma: Option<PragmaVersion>, t: AuditableType) -> Vec<PatternFinding> {
    match t {
        AuditableType::RE => rules::reentrancy(s),
        AuditableType::TD => rules::timestamp(s),
        AuditableType::IO => rules::overflow(s, pragma),
        AuditableType::DE => rules::delegatecall(s),
    }
}

/// Runs the rule for one vulnerability type. Findings are sorted by span.
pub fn scan(source: &str, vuln_type: AuditableType) -> Result<Vec<PatternFinding>, LexError> {
    let lx = lexer::lex(source)?;
    let s = Structure::new(&lx);
    let mut findings = run_rule(&s, pragma_version(&lx), vuln_type);
    sort_findings(&mut findings);
    Ok(findings)
}

/// Runs every rule over one contract.
pub fn scan_all(contract_id: &str, source: &str) -> Result<ScanReport, LexError> {
    let lx = lexer::lex(source)?;
    let s = Structure::new(&lx);
    let pragma = pragma_version(&lx);
    let mut findings: Vec<_> = AuditableType::ALL
        .into_iter()
        .flat_map(|t| run_rule(&s, pragma, t))
        .collect();
    sort_findings(&mut findings);
    Ok(ScanReport {
        contract_id: contract_id.to_string(),
        findings,
        pragma_version: pragma,
    })
}

/// Whether the lexeme stream contains the trigger of a rule: `.call.value(` /
/// `.call{value:`, `block.timestamp` / `now`, an arithmetic operator, or
/// `delegatecall`. Every rule needs its trigger to fire.
pub fn has_trigger(lexemes: &[Lexeme], vuln_type: AuditableType) -> bool {
    match vuln_type {
        AuditableType::DE => lexemes.iter().any(|l| l.is("delegatecall")),
        AuditableType::IO => lexemes
            .iter()
            .any(|l| l.kind == LexemeKind::Punct && rules::is_arithmetic_lexeme(&l.text)),
        AuditableType::RE | AuditableType::TD => {
            let s = Structure::new(lexemes);
            if vuln_type == AuditableType::RE {
                (0..lexemes.len()).any(|k| rules::is_call_value(&s, k))
            } else {
                !rules::timestamp_uses(&s, 0, lexemes.len()).is_empty()
            }
        }
    }
}

/// Records whose lexeme stream contains the trigger for `vuln_type`.
///
/// Lexing is lenient here, so records that would fail [`scan`] may still be
/// kept. The result is always a superset of the records [`scan`] flags.
pub fn prefilter(corpus: &[ContractRecord], vuln_type: AuditableType) -> Vec<&ContractRecord> {
    corpus
        .iter()
        .filter(|r| has_trigger(&lexer::lex_lenient(&r.source), vuln_type))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(findings: &[PatternFinding]) -> Vec<&str> {
        findings.iter().map(|f| f.rule_id.as_str()).collect()
    }

    const BANK: &str = r#"pragma solidity ^0.4.24;
contract Bank {
    mapping(address => uint) balances;
    function withdraw(uint amt) public {
        require(balances[msg.sender] >= amt);
        msg.sender.call.value(amt)("");
        balances[msg.sender] -= amt;
    }
}
"#;

    #[test]
    fn call_value_then_write_is_one_re_finding() {
        let f = scan(BANK, AuditableType::RE).unwrap();
        assert_eq!(ids(&f), [RE_CALL_VALUE_BEFORE_WRITE]);
        assert_eq!(f[0].span, Span::new(6, 20, 7, 36));
        assert!(f[0].note.contains("balances"));
    }

    #[test]
    fn write_before_call_is_not_reentrancy() {
        let src = r#"contract Bank {
    mapping(address => uint) balances;
    function withdraw(uint amt) public {
        balances[msg.sender] -= amt;
        msg.sender.call.value(amt)("");
    }
}"#;
        assert!(scan(src, AuditableType::RE).unwrap().is_empty());
    }

    #[test]
    fn call_brace_value_and_plain_state_var() {
        let src = r#"pragma solidity ^0.8.0;
contract Vault {
    uint total;
    function pay(address to, uint amt) external {
        uint local;
        (bool ok, ) = to.call{value: amt}("");
        local = 1;
        total = total - amt;
    }
}"#;
        let f = scan(src, AuditableType::RE).unwrap();
        assert_eq!(f.len(), 1);
        assert!(f[0].note.contains("`total`"));
    }

    #[test]
    fn modern_pragma_without_unchecked_has_no_io() {
        let src = "pragma solidity ^0.8.0;\ncontract C { function f(uint a, uint b) public pure returns (uint) { return a + b; } }";
        assert!(scan(src, AuditableType::IO).unwrap().is_empty());
        let unchecked = "pragma solidity ^0.8.0;\ncontract C { function f(uint a, uint b) public pure returns (uint) { unchecked { return a + b; } } }";
        assert_eq!(ids(&scan(unchecked, AuditableType::IO).unwrap()), [IO_UNCHECKED_ARITHMETIC]);
    }

    #[test]
    fn old_pragma_flags_arithmetic_unless_safemath() {
        let src = "pragma solidity ^0.6.0;\ncontract C { uint n; function f(uint a) public { n += a; n++; uint c = 2 * 3; } }";
        let f = scan(src, AuditableType::IO).unwrap();
        assert_eq!(f.len(), 2, "{f:?}");
        assert!(f.iter().all(|x| x.rule_id == IO_UNGUARDED_ARITHMETIC));
        let safe = "pragma solidity ^0.6.0;\ncontract C { using SafeMath for uint; uint n; function f(uint a) public { n = n.add(a); n += a; } }";
        assert!(scan(safe, AuditableType::IO).unwrap().is_empty());
        let no_pragma = "contract C { function f(uint a) public returns (uint) { return a - 1; } }";
        assert_eq!(scan(no_pragma, AuditableType::IO).unwrap().len(), 1);
    }

    #[test]
    fn timestamp_in_emit_only_is_suppressed() {
        let src = r#"contract Log {
    event Stored(uint at);
    uint v;
    function store(uint x) public {
        require(x > 0);
        v = x;
        emit Stored(block.timestamp);
    }
}"#;
        assert!(scan(src, AuditableType::TD).unwrap().is_empty());
    }

    #[test]
    fn timestamp_with_comparison_fires() {
        let src = r#"contract Lottery {
    function play() public {
        if (now % 2 == 0) { msg.sender.transfer(1); }
        uint t = block.timestamp;
    }
    function quiet() public view returns (uint) { return block.timestamp; }
}"#;
        let f = scan(src, AuditableType::TD).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].span, Span::new(3, 13, 3, 15));
        assert_eq!(f[1].span, Span::new(4, 18, 4, 32));
    }

    #[test]
    fn delegatecall_target_kind() {
        let src = r#"contract Proxy {
    address constant LIB = address(0x1234);
    address impl;
    function a() public { LIB.delegatecall(msg.data); }
    function b() public { impl.delegatecall(msg.data); }
    function c() public { address(0xdead).delegatecall(""); }
}"#;
        let f = scan(src, AuditableType::DE).unwrap();
        assert_eq!(f.len(), 3);
        assert!(f[0].note.contains("constant target `LIB`"));
        assert!(f[1].note.contains("variable target `impl`"));
        assert!(f[2].note.contains("constant target"));
    }

    #[test]
    fn lex_errors_propagate() {
        assert!(scan("contract C { string s = \"open; }", AuditableType::RE).is_err());
    }

    #[test]
    fn scan_all_reports_pragma_and_sorted_findings() {
        let r = scan_all("bank", BANK).unwrap();
        assert_eq!(r.pragma_version, Some(PragmaVersion::new(0, 4, 24)));
        assert!(r.findings.windows(2).all(|w| w[0].span <= w[1].span));
        assert!(r.findings.iter().all(|f| f.span.is_ordered()));
        assert!(ids(&r.findings).contains(&RE_CALL_VALUE_BEFORE_WRITE));
        assert!(ids(&r.findings).contains(&IO_UNGUARDED_ARITHMETIC));
    }

    #[test]
    fn pragma_forms() {
        let v = |s: &str| pragma_version(&lexer::lex(s).unwrap());
        assert_eq!(v("pragma solidity ^0.8.0;"), Some(PragmaVersion::new(0, 8, 0)));
        assert_eq!(v("pragma solidity >=0.7.0 <0.9.0;"), Some(PragmaVersion::new(0, 7, 0)));
        assert_eq!(v("pragma solidity 0.5;"), Some(PragmaVersion::new(0, 5, 0)));
        assert_eq!(v("contract C {}"), None);
    }

    #[test]
    fn prefilter_keeps_trigger_records() {
        let recs: Vec<_> = (0..5)
            .map(|i| {
                let body = if i % 2 == 1 { "impl.delegatecall(msg.data);" } else { "x = 1;" };
                ContractRecord::contract(format!("c{i}"), "C.sol", format!("contract C {{ function f() public {{ {body} }} }}"))
                    .unwrap()
            })
            .collect();
        assert_eq!(prefilter(&recs, AuditableType::DE).len(), 2);
        assert!(prefilter(&[], AuditableType::RE).is_empty());
    }

    #[test]
    fn auditable_type_conversions() {
        assert_eq!("td".parse::<AuditableType>().unwrap(), AuditableType::TD);
        assert!("PO".parse::<AuditableType>().is_err());
        assert!(AuditableType::try_from(VulnFamily::MU).is_err());
        assert_eq!(AuditableType::try_from(VulnType::DE).unwrap(), AuditableType::DE);
    }
}
