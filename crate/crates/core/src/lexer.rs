//! Solidity lexeme splitter shared by the corpus tokenizer and the scanner.
//!
//! Two entry points exist. [`lex`] is strict and reports unterminated string
//! literals, unterminated block comments and nested block-comment openers with
//! their position. [`lex_lenient`] never fails: it is what corpus tokenization
//! uses on arbitrary scraped text.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexemeKind {
    Ident,
    Number,
    Punct,
    String,
    Keyword,
}

/// One lexeme with its 1-based start position and byte offset into the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexeme {
    pub kind: LexemeKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    pub offset: usize,
}

impl Lexeme {
    /// Position of the last character of the lexeme.
    pub fn end(&self) -> (u32, u32) {
        let width = self.text.chars().count() as u32;
        (self.line, self.col + width.saturating_sub(1))
    }

    /// Byte offset one past the end of the lexeme.
    pub fn end_offset(&self) -> usize {
        self.offset + self.text.len()
    }

    pub fn is(&self, text: &str) -> bool {
        self.text == text
    }

    pub fn is_word(&self) -> bool {
        matches!(self.kind, LexemeKind::Ident | LexemeKind::Keyword)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LexError {
    #[error("unterminated string literal starting at line {line}, column {col}")]
    UnterminatedString { line: u32, col: u32 },
    #[error("unterminated block comment starting at line {line}, column {col}")]
    UnterminatedComment { line: u32, col: u32 },
    #[error("nested block comment opener at line {line}, column {col} (block comments do not nest)")]
    NestedComment { line: u32, col: u32 },
}

impl LexError {
    pub fn line(&self) -> u32 {
        match *self {
            LexError::UnterminatedString { line, .. }
            | LexError::UnterminatedComment { line, .. }
            | LexError::NestedComment { line, .. } => line,
        }
    }
}

const KEYWORDS: &[&str] = &[
    "abstract", "address", "anonymous", "as", "assembly", "assert", "bool", "break", "byte",
    "bytes", "calldata", "catch", "constant", "constructor", "continue", "contract", "delete",
    "do", "else", "emit", "enum", "error", "event", "external", "fallback", "false", "for",
    "function", "if", "immutable", "import", "indexed", "int", "interface", "internal", "is",
    "library", "mapping", "memory", "modifier", "new", "override", "payable", "pragma",
    "private", "public", "pure", "receive", "require", "return", "returns", "revert",
    "solidity", "storage", "string", "struct", "this", "true", "try", "type", "uint", "unchecked",
    "using", "var", "view", "virtual", "while",
];

/// Multi-character operators, longest first.
const OPERATORS: &[&str] = &[
    "<<=", ">>=", "**", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=",
    "/=", "%=", "|=", "&=", "^=", "<<", ">>", "=>", "->", ":=",
];

fn is_keyword(word: &str) -> bool {
    if KEYWORDS.contains(&word) {
        return true;
    }
    // uint8..uint256, int8..int256, bytes1..bytes32
    for prefix in ["uint", "int", "bytes"] {
        if let Some(rest) = word.strip_prefix(prefix) {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                return true;
            }
        }
    }
    false
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            src,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_nth(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest().starts_with(s)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Strict,
    Lenient,
}

/// Strict lexing: comments are skipped, string literals are kept whole
/// (quotes included), malformed comments and strings are errors.
pub fn lex(source: &str) -> Result<Vec<Lexeme>, LexError> {
    run(source, Mode::Strict)
}

/// Lexing that never fails. Unterminated strings run to end of line,
/// unterminated comments swallow the rest of the input, and `/*` inside a
/// block comment is ordinary comment text.
pub fn lex_lenient(source: &str) -> Vec<Lexeme> {
    run(source, Mode::Lenient).expect("lenient lexing is infallible")
}

fn run(source: &str, mode: Mode) -> Result<Vec<Lexeme>, LexError> {
    let mut cur = Cursor::new(source);
    let mut out = Vec::new();

    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        let (line, col, offset) = (cur.line, cur.col, cur.pos);

        if cur.starts_with("//") {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            let mut closed = false;
            while cur.peek().is_some() {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    closed = true;
                    break;
                }
                if mode == Mode::Strict && cur.starts_with("/*") {
                    return Err(LexError::NestedComment {
                        line: cur.line,
                        col: cur.col,
                    });
                }
                cur.bump();
            }
            if !closed && mode == Mode::Strict {
                return Err(LexError::UnterminatedComment { line, col });
            }
            continue;
        }

        let kind = if c == '"' || c == '\'' {
            cur.bump();
            let mut closed = false;
            while let Some(ch) = cur.peek() {
                if ch == '\n' {
                    break;
                }
                cur.bump();
                if ch == '\\' {
                    if cur.peek().is_some_and(|n| n != '\n') {
                        cur.bump();
                    }
                } else if ch == c {
                    closed = true;
                    break;
                }
            }
            if !closed && mode == Mode::Strict {
                return Err(LexError::UnterminatedString { line, col });
            }
            LexemeKind::String
        } else if is_ident_start(c) {
            while cur.peek().is_some_and(is_ident_continue) {
                cur.bump();
            }
            if is_keyword(&source[offset..cur.pos]) {
                LexemeKind::Keyword
            } else {
                LexemeKind::Ident
            }
        } else if c.is_ascii_digit() {
            loop {
                match cur.peek() {
                    Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => {
                        cur.bump();
                    }
                    Some('.') if cur.peek_nth(1).is_some_and(|n| n.is_ascii_digit()) => {
                        cur.bump();
                    }
                    _ => break,
                }
            }
            LexemeKind::Number
        } else {
            match OPERATORS.iter().find(|op| cur.starts_with(op)) {
                Some(op) => {
                    for _ in 0..op.len() {
                        cur.bump();
                    }
                }
                None => {
                    cur.bump();
                }
            }
            LexemeKind::Punct
        };

        out.push(Lexeme {
            kind,
            text: source[offset..cur.pos].to_string(),
            line,
            col,
            offset,
        });
    }
    Ok(out)
}

impl fmt::Display for Lexeme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:{}", self.text, self.line, self.col)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(src: &str) -> Vec<String> {
        lex(src).unwrap().into_iter().map(|l| l.text).collect()
    }

    #[test]
    fn pragma_line() {
        let lx = lex("pragma solidity ^0.8.0;").unwrap();
        assert_eq!(lx.len(), 5);
        assert_eq!(lx[3].text, "0.8.0");
        assert_eq!(lx[3].kind, LexemeKind::Number);
        assert_eq!(lx[0].kind, LexemeKind::Keyword);
        assert_eq!((lx[4].line, lx[4].col), (1, 23));
    }

    #[test]
    fn empty_source() {
        assert!(lex("").unwrap().is_empty());
        assert!(lex("  \n\t ").unwrap().is_empty());
    }

    #[test]
    fn operators_are_longest_match() {
        assert_eq!(
            texts("a+=b==c<=d**2>>=1"),
            ["a", "+=", "b", "==", "c", "<=", "d", "**", "2", ">>=", "1"]
        );
        assert_eq!(texts("x=-1"), ["x", "=", "-", "1"]);
    }

    #[test]
    fn strings_are_single_lexemes() {
        let lx = lex(r#"f("a \"b\" // c", 'x')"#).unwrap();
        assert_eq!(lx[2].text, r#""a \"b\" // c""#);
        assert_eq!(lx[2].kind, LexemeKind::String);
        assert_eq!(lx[4].text, "'x'");
    }

    #[test]
    fn comments_skipped_positions_kept() {
        let lx = lex("a // one\n/* two\n lines */ b").unwrap();
        assert_eq!(lx.len(), 2);
        assert_eq!((lx[1].line, lx[1].col), (3, 11));
        assert_eq!(lx[1].offset, "a // one\n/* two\n lines */ ".len());
    }

    #[test]
    fn nested_block_comment_is_an_error() {
        let err = lex("uint a;\n/* outer\n  /* inner */ still */").unwrap_err();
        assert_eq!(err, LexError::NestedComment { line: 3, col: 3 });
        assert_eq!(err.line(), 3);
    }

    #[test]
    fn unterminated_errors() {
        assert_eq!(
            lex("a /* never closed").unwrap_err(),
            LexError::UnterminatedComment { line: 1, col: 3 }
        );
        assert_eq!(
            lex("x = \"open\ny").unwrap_err(),
            LexError::UnterminatedString { line: 1, col: 5 }
        );
    }

    #[test]
    fn lenient_never_fails() {
        let lx = lex_lenient("a /* b /* c */ d \"unterminated\ne /* tail");
        let t: Vec<_> = lx.iter().map(|l| l.text.as_str()).collect();
        assert_eq!(t, ["a", "d", "\"unterminated", "e"]);
    }

    #[test]
    fn keywords_and_numbers() {
        let lx = lex("uint256 x = 0x1F + 1e18 + 1_000; bytes32 h; int y;").unwrap();
        assert_eq!(lx[0].kind, LexemeKind::Keyword);
        assert_eq!(lx[3].text, "0x1F");
        assert_eq!(lx[5].text, "1e18");
        assert_eq!(lx[7].text, "1_000");
        assert!(lx.iter().filter(|l| l.kind == LexemeKind::Keyword).count() == 3);
    }

    #[test]
    fn end_position() {
        let lx = lex("  balances").unwrap();
        assert_eq!(lx[0].end(), (1, 10));
        assert_eq!(lx[0].end_offset(), 10);
    }
}
