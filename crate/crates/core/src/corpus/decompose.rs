use serde::{Deserialize, Serialize};

use crate::lexer::{self, Lexeme};

/// A source unit split into business logic, library code and imports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecomposedSource {
    pub business_logic: String,
    pub library_code: String,
    pub imports: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecomposeError {
    #[error("unbalanced braces: `}}` at line {line} has no matching `{{`")]
    UnexpectedClose { line: u32 },
    #[error("unbalanced braces: `{{` opened at line {line} is never closed")]
    Unclosed { line: u32 },
}

impl DecomposeError {
    pub fn line(&self) -> u32 {
        match *self {
            DecomposeError::UnexpectedClose { line } | DecomposeError::Unclosed { line } => line,
        }
    }
}

/// Heuristic split of a Solidity source unit.
///
/// Top-level `import ...;` statements go to `imports`, top-level
/// `library Name { ... }` blocks to `library_code`, and everything else to
/// `business_logic`. Removed spans are replaced by a newline so that no two
/// neighbouring lexemes fuse; the token multiset of the three parts together
/// equals that of the input.
pub fn decompose(source: &str) -> Result<DecomposedSource, DecomposeError> {
    let lexemes = lexer::lex_lenient(source);
    let closers = match_braces(&lexemes)?;

    let mut out = DecomposedSource::default();
    let mut cut: Vec<(usize, usize)> = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < lexemes.len() {
        let lx = &lexemes[i];
        if depth == 0 && lx.is("import") {
            let end = (i..lexemes.len())
                .find(|&j| lexemes[j].is(";"))
                .unwrap_or(lexemes.len() - 1);
            let span = (lx.offset, lexemes[end].end_offset());
            out.imports.push(source[span.0..span.1].to_string());
            cut.push(span);
            i = end + 1;
            continue;
        }
        if depth == 0 && lx.is("library") {
            if let Some(open) = (i..lexemes.len()).find(|&j| lexemes[j].is("{") || lexemes[j].is(";")) {
                if lexemes[open].is("{") {
                    let close = closers[open].expect("braces already matched");
                    let span = (lx.offset, lexemes[close].end_offset());
                    if !out.library_code.is_empty() {
                        out.library_code.push('\n');
                    }
                    out.library_code.push_str(&source[span.0..span.1]);
                    cut.push(span);
                    i = close + 1;
                    continue;
                }
            }
        }
        if lx.is("{") {
            depth += 1;
        } else if lx.is("}") {
            depth -= 1;
        }
        i += 1;
    }

    let mut business = String::with_capacity(source.len());
    let mut pos = 0;
    for (start, end) in cut {
        business.push_str(&source[pos..start]);
        business.push('\n');
        pos = end;
    }
    business.push_str(&source[pos..]);
    out.business_logic = if out.imports.is_empty() && out.library_code.is_empty() {
        source.to_string()
    } else {
        business
    };
    Ok(out)
}

/// For every `{` lexeme, the index of its matching `}`.
fn match_braces(lexemes: &[Lexeme]) -> Result<Vec<Option<usize>>, DecomposeError> {
    let mut closers = vec![None; lexemes.len()];
    let mut stack = Vec::new();
    for (i, lx) in lexemes.iter().enumerate() {
        if lx.is("{") {
            stack.push(i);
        } else if lx.is("}") {
            let open = stack
                .pop()
                .ok_or(DecomposeError::UnexpectedClose { line: lx.line })?;
            closers[open] = Some(i);
        }
    }
    match stack.first() {
        Some(&open) => Err(DecomposeError::Unclosed {
            line: lexemes[open].line,
        }),
        None => Ok(closers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn multiset(parts: &[&str]) -> Vec<String> {
        let mut v: Vec<String> = parts.iter().flat_map(|p| tokenize(p)).collect();
        v.sort();
        v
    }

    const MIXED: &str = r#"pragma solidity ^0.6.0;
import "./A.sol";
import {B} from "./B.sol";

library SafeOps {
    function add(uint a, uint b) internal pure returns (uint) { return a + b; }
}

contract Bank {
    mapping(address => uint) balances;
    function deposit() public payable { balances[msg.sender] += msg.value; }
}
"#;

    #[test]
    fn one_import() {
        let d = decompose("import \"./A.sol\";\ncontract C {}").unwrap();
        assert_eq!(d.imports, ["import \"./A.sol\";"]);
        assert!(d.library_code.is_empty());
    }

    #[test]
    fn one_library() {
        let d = decompose("library L { function f() internal {} }\ncontract C {}").unwrap();
        assert!(!d.library_code.is_empty());
        assert!(d.library_code.starts_with("library L"));
        assert!(!d.business_logic.contains("library"));
    }

    #[test]
    fn plain_source_is_all_business_logic() {
        let src = "contract C { uint x; }";
        let d = decompose(src).unwrap();
        assert_eq!(d.business_logic, src);
        assert!(d.imports.is_empty() && d.library_code.is_empty());
    }

    #[test]
    fn mixed_source_round_trips_tokens() {
        let d = decompose(MIXED).unwrap();
        assert_eq!(d.imports.len(), 2);
        assert!(d.library_code.contains("function add"));
        assert!(d.business_logic.contains("contract Bank"));
        let mut parts = vec![d.business_logic.as_str(), d.library_code.as_str()];
        parts.extend(d.imports.iter().map(String::as_str));
        assert_eq!(multiset(&parts), multiset(&[MIXED]));
    }

    #[test]
    fn unbalanced_braces_name_the_line() {
        let err = decompose("contract C {\n function f() {\n}\n").unwrap_err();
        assert_eq!(err, DecomposeError::Unclosed { line: 1 });
        let err = decompose("contract C {\n}\n}\n").unwrap_err();
        assert_eq!(err, DecomposeError::UnexpectedClose { line: 3 });
        assert_eq!(err.line(), 3);
    }

    #[test]
    fn adjacent_spans_do_not_fuse_tokens() {
        let src = "uint a;import \"x\";uint b;";
        let d = decompose(src).unwrap();
        let mut parts = vec![d.business_logic.as_str()];
        parts.extend(d.imports.iter().map(String::as_str));
        assert_eq!(multiset(&parts), multiset(&[src]));
    }
}
