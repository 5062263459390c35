//! The four lexeme-level detection rules.

use super::structure::Structure;
use super::{AuditableType, PatternFinding, PragmaVersion, Span};
use crate::lexer::LexemeKind;

pub const RE_CALL_VALUE_BEFORE_WRITE: &str = "RE-CALL-VALUE-BEFORE-STATE-WRITE";
pub const TD_TIMESTAMP_IN_DECISION: &str = "TD-TIMESTAMP-IN-DECISION";
pub const IO_UNGUARDED_ARITHMETIC: &str = "IO-UNGUARDED-ARITHMETIC";
pub const IO_UNCHECKED_ARITHMETIC: &str = "IO-UNCHECKED-BLOCK-ARITHMETIC";
pub const DE_DELEGATECALL: &str = "DE-DELEGATECALL";

/// The documented rule table: id, type, summary.
pub const RULES: &[(&str, AuditableType, &str)] = &[
    (
        RE_CALL_VALUE_BEFORE_WRITE,
        AuditableType::RE,
        "`.call.value(` or `.call{value:` followed, in the same function body, by a write to an indexed or contract-scope identifier",
    ),
    (
        TD_TIMESTAMP_IN_DECISION,
        AuditableType::TD,
        "`block.timestamp` or `now` in a function that also transfers, requires, asserts or compares; uses inside `emit` arguments are ignored",
    ),
    (
        IO_UNGUARDED_ARITHMETIC,
        AuditableType::IO,
        "arithmetic on identifiers under a pre-0.8 pragma with no SafeMath usage",
    ),
    (
        IO_UNCHECKED_ARITHMETIC,
        AuditableType::IO,
        "arithmetic on identifiers inside an `unchecked` block",
    ),
    (
        DE_DELEGATECALL,
        AuditableType::DE,
        "any `delegatecall`, noting whether the target is constant or variable",
    ),
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>="];
const BINARY_ARITH: &[&str] = &["+", "-", "*", "**"];
const COMPOUND_ARITH: &[&str] = &["+=", "-=", "*="];
const DECISION_LEXEMES: &[&str] = &["transfer", "send", "require", "assert", "<", ">", "<=", ">=", "==", "!="];

fn span(s: &Structure, start: usize, end: usize) -> Span {
    let (end_line, end_col) = s.lx[end].end();
    Span {
        start_line: s.lx[start].line,
        start_col: s.lx[start].col,
        end_line,
        end_col,
    }
}

/// `.call.value(` or `.call{value:` starting at the `.` lexeme `k`.
pub(crate) fn is_call_value(s: &Structure, k: usize) -> bool {
    s.is(k, ".")
        && s.is(k + 1, "call")
        && ((s.is(k + 2, ".") && s.is(k + 3, "value") && s.is(k + 4, "("))
            || (s.is(k + 2, "{") && s.is(k + 3, "value") && s.is(k + 4, ":")))
}

/// Root identifier of the lvalue ending at `end`, and whether it was indexed.
fn lvalue_root(s: &Structure, end: usize) -> Option<(usize, bool)> {
    let mut i = end as isize;
    let mut indexed = false;
    while i >= 0 {
        let idx = i as usize;
        if s.is(idx, "]") {
            indexed = true;
            i = s.partner[idx]? as isize - 1;
            continue;
        }
        if s.kind(idx) == Some(LexemeKind::Ident) || s.is(idx, "this") {
            if idx >= 2 && s.is(idx - 1, ".") {
                i = idx as isize - 2;
                continue;
            }
            return Some((idx, indexed));
        }
        return None;
    }
    None
}

fn is_state_write_at(s: &Structure, j: usize) -> Option<usize> {
    let text = s.text(j);
    let target_end = if ASSIGN_OPS.contains(&text) {
        j.checked_sub(1)?
    } else if text == "++" || text == "--" {
        // postfix when something precedes that ends an lvalue, else prefix
        if j > 0 && (s.is(j - 1, "]") || s.kind(j - 1) == Some(LexemeKind::Ident)) {
            j - 1
        } else {
            forward_lvalue_end(s, j + 1)?
        }
    } else if text == "delete" {
        forward_lvalue_end(s, j + 1)?
    } else {
        return None;
    };
    let (root, indexed) = lvalue_root(s, target_end)?;
    (indexed || s.state_vars.contains(s.text(root))).then_some(root)
}

fn forward_lvalue_end(s: &Structure, start: usize) -> Option<usize> {
    if s.kind(start) != Some(LexemeKind::Ident) {
        return None;
    }
    let mut i = start;
    loop {
        if s.is(i + 1, "[") {
            i = s.partner[i + 1]?;
        } else if s.is(i + 1, ".") && s.kind(i + 2) == Some(LexemeKind::Ident) {
            i += 2;
        } else {
            return Some(i);
        }
    }
}

fn statement_end(s: &Structure, from: usize, limit: usize) -> usize {
    (from..limit).find(|&i| s.is(i, ";")).unwrap_or(from)
}

pub(crate) fn reentrancy(s: &Structure) -> Vec<PatternFinding> {
    let mut out = Vec::new();
    for f in &s.functions {
        for k in f.open + 1..f.close {
            if !is_call_value(s, k) {
                continue;
            }
            let write = (k + 5..f.close).find_map(|j| is_state_write_at(s, j).map(|root| (j, root)));
            if let Some((j, root)) = write {
                let end = statement_end(s, j, f.close);
                let call = &s.lx[k + 1];
                out.push(PatternFinding {
                    vuln_type: AuditableType::RE,
                    rule_id: RE_CALL_VALUE_BEFORE_WRITE.to_string(),
                    span: span(s, k + 1, end),
                    note: format!(
                        "external call with value at line {} in `{}` precedes a write to `{}` at line {}",
                        call.line,
                        f.name,
                        s.text(root),
                        s.lx[j].line
                    ),
                });
            }
        }
    }
    out
}

/// Index ranges (exclusive) of `emit Event(...)` argument lists.
fn emit_argument_ranges(s: &Structure, from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in from..to {
        if !s.is(i, "emit") {
            continue;
        }
        if let Some(p) = (i + 1..to).find(|&j| s.is(j, "(") || s.is(j, ";")) {
            if s.is(p, "(") {
                if let Some(q) = s.partner[p] {
                    out.push((p, q));
                }
            }
        }
    }
    out
}

pub(crate) fn timestamp_uses(s: &Structure, from: usize, to: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in from..to {
        if s.is(k, "block") && s.is(k + 1, ".") && s.is(k + 2, "timestamp") {
            out.push((k, k + 2));
        } else if s.is(k, "now")
            && s.kind(k) == Some(LexemeKind::Ident)
            && !(k > 0 && s.is(k - 1, "."))
        {
            out.push((k, k));
        }
    }
    out
}

pub(crate) fn timestamp(s: &Structure) -> Vec<PatternFinding> {
    let mut out = Vec::new();
    for f in &s.functions {
        let emits = emit_argument_ranges(s, f.open + 1, f.close);
        let in_emit = |i: usize| emits.iter().any(|&(p, q)| p < i && i < q);
        let decides = (f.open + 1..f.close)
            .any(|i| !in_emit(i) && DECISION_LEXEMES.contains(&s.text(i)));
        if !decides {
            continue;
        }
        for (a, b) in timestamp_uses(s, f.open + 1, f.close) {
            if in_emit(a) {
                continue;
            }
            out.push(PatternFinding {
                vuln_type: AuditableType::TD,
                rule_id: TD_TIMESTAMP_IN_DECISION.to_string(),
                span: span(s, a, b),
                note: format!(
                    "`{}` read in `{}`, which transfers, requires or compares",
                    if a == b { "now" } else { "block.timestamp" },
                    f.name
                ),
            });
        }
    }
    out
}

fn is_operand_end(s: &Structure, i: usize) -> bool {
    matches!(s.kind(i), Some(LexemeKind::Ident | LexemeKind::Number)) || s.is(i, ")") || s.is(i, "]")
}

fn is_operand_start(s: &Structure, i: usize) -> bool {
    matches!(s.kind(i), Some(LexemeKind::Ident | LexemeKind::Number)) || s.is(i, "(")
}

/// Whether lexeme `i` is arithmetic involving at least one identifier operand.
pub(crate) fn is_identifier_arithmetic(s: &Structure, i: usize) -> bool {
    let text = s.text(i);
    if i == 0 {
        return false;
    }
    let prev_ident = s.kind(i - 1) == Some(LexemeKind::Ident) || s.is(i - 1, "]");
    if BINARY_ARITH.contains(&text) {
        let next_ident = s.kind(i + 1) == Some(LexemeKind::Ident);
        is_operand_end(s, i - 1) && is_operand_start(s, i + 1) && (prev_ident || next_ident)
    } else if COMPOUND_ARITH.contains(&text) {
        prev_ident
    } else if text == "++" || text == "--" {
        prev_ident || s.kind(i + 1) == Some(LexemeKind::Ident)
    } else {
        false
    }
}

pub(crate) fn is_arithmetic_lexeme(text: &str) -> bool {
    BINARY_ARITH.contains(&text) || COMPOUND_ARITH.contains(&text) || text == "++" || text == "--"
}

pub(crate) fn overflow(s: &Structure, pragma: Option<PragmaVersion>) -> Vec<PatternFinding> {
    let modern = pragma.is_some_and(|v| v >= PragmaVersion::new(0, 8, 0));
    let uses_safemath = s.lx.iter().any(|l| l.is("SafeMath"));
    let mut out = Vec::new();
    let mut push = |i: usize, rule: &str, note: String| {
        out.push(PatternFinding {
            vuln_type: AuditableType::IO,
            rule_id: rule.to_string(),
            span: span(s, i, i),
            note,
        });
    };
    if modern {
        for u in 0..s.lx.len() {
            if !s.is(u, "unchecked") || !s.is(u + 1, "{") {
                continue;
            }
            let Some(close) = s.partner[u + 1] else { continue };
            for i in u + 2..close {
                if is_identifier_arithmetic(s, i) {
                    push(
                        i,
                        IO_UNCHECKED_ARITHMETIC,
                        format!("`{}` inside an unchecked block skips overflow checks", s.text(i)),
                    );
                }
            }
        }
    } else if !uses_safemath {
        let version = pragma.map_or_else(|| "none".to_string(), |v| v.to_string());
        for f in &s.functions {
            for i in f.open + 1..f.close {
                if is_identifier_arithmetic(s, i) {
                    push(
                        i,
                        IO_UNGUARDED_ARITHMETIC,
                        format!(
                            "`{}` in `{}` without SafeMath under pragma {version}",
                            s.text(i),
                            f.name
                        ),
                    );
                }
            }
        }
    }
    out
}

pub(crate) fn delegatecall(s: &Structure) -> Vec<PatternFinding> {
    let mut out = Vec::new();
    for k in 0..s.lx.len() {
        if !s.is(k, "delegatecall") {
            continue;
        }
        let target = if k >= 2 && s.is(k - 1, ".") {
            let recv = k - 2;
            if s.is(recv, ")") {
                let literal = s.partner[recv].is_some_and(|open| {
                    (open..recv).any(|j| s.kind(j) == Some(LexemeKind::Number) && s.text(j).starts_with("0x"))
                });
                if literal {
                    "constant target (address literal)".to_string()
                } else {
                    "variable target (computed expression)".to_string()
                }
            } else if s.is(recv, "this") {
                "constant target (`this`)".to_string()
            } else if s.constants.contains(s.text(recv)) {
                format!("constant target `{}`", s.text(recv))
            } else {
                format!("variable target `{}`", s.text(recv))
            }
        } else {
            "variable target (inline assembly or bare call)".to_string()
        };
        out.push(PatternFinding {
            vuln_type: AuditableType::DE,
            rule_id: DE_DELEGATECALL.to_string(),
            span: span(s, k, k),
            note: format!("delegatecall with {target}"),
        });
    }
    out
}
