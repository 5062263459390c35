//! Brace-level structure recovered from a lexeme stream: bracket pairs,
//! function bodies and contract-scope declarations.

use std::collections::BTreeSet;

use crate::lexer::{Lexeme, LexemeKind};

#[derive(Debug, Clone)]
pub(crate) struct FunctionBody {
    pub name: String,
    /// Index of the opening `{`.
    pub open: usize,
    /// Index of the matching `}`.
    pub close: usize,
}

pub(crate) struct Structure<'a> {
    pub lx: &'a [Lexeme],
    /// Matching partner of every bracket lexeme, if balanced.
    pub partner: Vec<Option<usize>>,
    pub functions: Vec<FunctionBody>,
    /// Identifiers declared at contract scope.
    pub state_vars: BTreeSet<String>,
    /// Contract-scope declarations marked `constant` or `immutable`.
    pub constants: BTreeSet<String>,
}

const BODY_KEYWORDS: &[&str] = &["function", "modifier", "constructor", "fallback", "receive"];
const NON_STATE_HEADS: &[&str] = &[
    "function", "modifier", "event", "struct", "enum", "constructor", "fallback", "receive",
    "using", "error",
];

impl<'a> Structure<'a> {
    pub fn new(lx: &'a [Lexeme]) -> Self {
        let partner = match_brackets(lx);
        let functions = find_functions(lx, &partner);
        let mut s = Structure {
            lx,
            partner,
            functions,
            state_vars: BTreeSet::new(),
            constants: BTreeSet::new(),
        };
        s.collect_declarations();
        s
    }

    pub fn text(&self, idx: usize) -> &str {
        self.lx.get(idx).map_or("", |l| l.text.as_str())
    }

    pub fn is(&self, idx: usize, text: &str) -> bool {
        self.lx.get(idx).is_some_and(|l| l.text == text)
    }

    pub fn kind(&self, idx: usize) -> Option<LexemeKind> {
        self.lx.get(idx).map(|l| l.kind)
    }

    fn collect_declarations(&mut self) {
        let lx = self.lx;
        for (i, l) in lx.iter().enumerate() {
            if !matches!(l.text.as_str(), "contract" | "library" | "interface") || l.kind != LexemeKind::Keyword {
                continue;
            }
            let Some(open) = (i + 1..lx.len()).find(|&j| lx[j].is("{") || lx[j].is(";")) else {
                continue;
            };
            if !lx[open].is("{") {
                continue;
            }
            let Some(close) = self.partner[open] else { continue };
            let mut stmt_start = open + 1;
            let mut j = open + 1;
            while j < close {
                if lx[j].is("{") {
                    // function, modifier, struct, enum ... body
                    j = self.partner[j].unwrap_or(close);
                    stmt_start = j + 1;
                } else if lx[j].is(";") {
                    self.declaration(stmt_start, j);
                    stmt_start = j + 1;
                }
                j += 1;
            }
        }
    }

    fn declaration(&mut self, start: usize, end: usize) {
        let stmt = &self.lx[start..end];
        let Some(head) = stmt.first() else { return };
        if NON_STATE_HEADS.contains(&head.text.as_str()) {
            return;
        }
        let decl_end = stmt.iter().position(|l| l.is("=")).unwrap_or(stmt.len());
        let Some(name) = stmt[..decl_end].iter().rev().find(|l| l.kind == LexemeKind::Ident) else {
            return;
        };
        let is_constant = stmt[..decl_end]
            .iter()
            .any(|l| l.is("constant") || l.is("immutable"));
        if is_constant {
            self.constants.insert(name.text.clone());
        }
        self.state_vars.insert(name.text.clone());
    }
}

fn match_brackets(lx: &[Lexeme]) -> Vec<Option<usize>> {
    let mut partner = vec![None; lx.len()];
    let mut stacks: [Vec<usize>; 3] = Default::default();
    for (i, l) in lx.iter().enumerate() {
        if l.kind != LexemeKind::Punct {
            continue;
        }
        let (slot, open) = match l.text.as_str() {
            "(" => (0, true),
            ")" => (0, false),
            "[" => (1, true),
            "]" => (1, false),
            "{" => (2, true),
            "}" => (2, false),
            _ => continue,
        };
        if open {
            stacks[slot].push(i);
        } else if let Some(o) = stacks[slot].pop() {
            partner[o] = Some(i);
            partner[i] = Some(o);
        }
    }
    partner
}

fn find_functions(lx: &[Lexeme], partner: &[Option<usize>]) -> Vec<FunctionBody> {
    let mut out = Vec::new();
    for (i, l) in lx.iter().enumerate() {
        if l.kind != LexemeKind::Keyword || !BODY_KEYWORDS.contains(&l.text.as_str()) {
            continue;
        }
        let name = match lx.get(i + 1) {
            Some(n) if n.kind == LexemeKind::Ident => n.text.clone(),
            _ => l.text.clone(),
        };
        // first `{` or `;` outside the parameter / return lists
        let mut depth = 0i32;
        let mut j = i + 1;
        while j < lx.len() {
            match lx[j].text.as_str() {
                "(" => depth += 1,
                ")" => depth -= 1,
                "{" | ";" if depth <= 0 => break,
                _ => {}
            }
            j += 1;
        }
        if j < lx.len() && lx[j].is("{") {
            if let Some(close) = partner[j] {
                out.push(FunctionBody {
                    name,
                    open: j,
                    close,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::lex;

    #[test]
    fn finds_bodies_and_state() {
        let src = r#"
contract Bank {
    mapping(address => uint) balances;
    uint public total = 5;
    address constant LIB = address(0x1234);
    event Paid(uint amount);
    struct S { uint inner; }
    function withdraw(uint amt) public {
        uint local = amt;
    }
    function abstractish() external;
    modifier onlyOwner() { _; }
}
"#;
        let lx = lex(src).unwrap();
        let s = Structure::new(&lx);
        let names: Vec<_> = s.functions.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["withdraw", "onlyOwner"]);
        assert_eq!(
            s.state_vars.iter().map(String::as_str).collect::<Vec<_>>(),
            ["LIB", "balances", "total"]
        );
        assert!(s.constants.contains("LIB"));
        assert!(!s.state_vars.contains("local"));
        assert!(!s.state_vars.contains("inner"));
    }
}
