use super::ast::Pos;
use super::SyntaxError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(u64),
    Kw(&'static str),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Kw(k) | Tok::Punct(k) => format!("`{k}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
    /// Byte offset one past the token's last character.
    pub end: u32,
}

pub const KEYWORDS: &[&str] = &[
    "template",
    "endtemplate",
    "instance",
    "typedef",
    "enum",
    "process",
    "task",
    "controllable",
    "void",
    "goal",
    "if",
    "else",
    "forever",
    "pause",
    "assert",
    "true",
    "false",
    "bool",
];

// Longest first so that prefixes do not shadow longer operators.
const PUNCTS: &[&str] = &[
    "...", "==", "!=", "&&", "||", "<=", ">=", "(", ")", "{", "}", "[", "]", ";", ",", ".", "=",
    "!", "<", ">", "*", ":",
];

pub fn lex(file: u32, text: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;
    let pos_at = |i: usize, line: u32, line_start: usize| Pos {
        file,
        line,
        col: (text[line_start..i].chars().count() + 1) as u32,
        offset: i as u32,
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if text[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if text[i..].starts_with("/*") {
            let start = pos_at(i, line, line_start);
            i += 2;
            loop {
                if i >= bytes.len() {
                    return Err(SyntaxError {
                        pos: start,
                        expected: vec!["`*/`".into()],
                        found: "end of input".into(),
                    });
                }
                if text[i..].starts_with("*/") {
                    i += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    line_start = i + 1;
                }
                i += 1;
            }
            continue;
        }
        let pos = pos_at(i, line, line_start);
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &text[start..i];
            let tok = match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => Tok::Kw(k),
                None => Tok::Ident(word.to_string()),
            };
            toks.push(Token {
                tok,
                pos,
                end: i as u32,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let (radix, digits_start) =
                if text[i..].starts_with("0x") || text[i..].starts_with("0X") {
                    (16, i + 2)
                } else if text[i..].starts_with("0b") || text[i..].starts_with("0B") {
                    (2, i + 2)
                } else {
                    (10, i)
                };
            i = digits_start;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let digits: String = text[digits_start..i]
                .chars()
                .filter(|&c| c != '_')
                .collect();
            let value = u64::from_str_radix(&digits, radix).map_err(|_| SyntaxError {
                pos,
                expected: vec!["integer literal".into()],
                found: format!("`{}`", &text[start..i]),
            })?;
            toks.push(Token {
                tok: Tok::Int(value),
                pos,
                end: i as u32,
            });
            continue;
        }
        match PUNCTS.iter().find(|p| text[i..].starts_with(**p)) {
            Some(p) => {
                i += p.len();
                toks.push(Token {
                    tok: Tok::Punct(p),
                    pos,
                    end: i as u32,
                });
            }
            None => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(SyntaxError {
                    pos,
                    expected: vec!["token".into()],
                    found: format!("character `{ch}`"),
                });
            }
        }
    }
    toks.push(Token {
        tok: Tok::Eof,
        pos: pos_at(bytes.len(), line, line_start),
        end: bytes.len() as u32,
    });
    Ok(toks)
}
