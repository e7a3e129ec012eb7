//! A Java lexer good enough for single statements and fragments.
//!
//! Whitespace and comments are dropped; everything else becomes a token.
//! The lexer never needs a complete compilation unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    NumericLiteral,
    StringLiteral,
    CharLiteral,
    Operator,
    Separator,
    /// Placeholder produced by preprocessing (`<num>`, `<str>`, ...).
    Special,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

impl Token {
    pub fn new(kind: TokenKind, text: impl Into<String>) -> Self {
        Token {
            kind,
            text: text.into(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
    "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp",
    "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "var", "true", "false", "null",
];

// Longest first so that the first prefix match is the maximal munch.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=", ">=",
    "+=", "-=", "*=", "/=", "&=", "|=", "^=", "%=", "<<", ">>", "=", ">", "<", "!", "~", "?", ":",
    "+", "-", "*", "/", "&", "|", "^", "%", "@",
];

const SEPARATORS: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.'];

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_part(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    lossy: bool,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Lex {
            offset,
            message: message.into(),
        }
    }

    /// Skips whitespace and comments. Returns an error for an unterminated
    /// block comment.
    fn skip_trivia(&mut self) -> Result<()> {
        loop {
            let rest = self.rest();
            let trimmed = rest.trim_start();
            self.pos += rest.len() - trimmed.len();
            if trimmed.starts_with("//") {
                self.pos += trimmed.find('\n').unwrap_or(trimmed.len());
            } else if let Some(body) = trimmed.strip_prefix("/*") {
                match body.find("*/") {
                    Some(end) => self.pos += end + 4,
                    None if self.lossy => self.pos = self.src.len(),
                    None => return Err(self.err(self.pos, "unterminated block comment")),
                }
            } else {
                return Ok(());
            }
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let rest = self.rest();
        let len = rest.find(|c: char| !f(c)).unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn number(&mut self) -> Token {
        let start = self.pos;
        let rest = self.rest();
        if rest.starts_with("0x") || rest.starts_with("0X") {
            self.pos += 2;
            self.take_while(|c| c.is_ascii_hexdigit() || c == '_');
        } else if rest.starts_with("0b") || rest.starts_with("0B") {
            self.pos += 2;
            self.take_while(|c| c == '0' || c == '1' || c == '_');
        } else {
            self.take_while(|c| c.is_ascii_digit() || c == '_');
            if self.peek() == Some('.') && !self.rest().starts_with("...") {
                self.pos += 1;
                self.take_while(|c| c.is_ascii_digit() || c == '_');
            }
            if matches!(self.peek(), Some('e' | 'E')) {
                let save = self.pos;
                self.pos += 1;
                if matches!(self.peek(), Some('+' | '-')) {
                    self.pos += 1;
                }
                if self.take_while(|c| c.is_ascii_digit()).is_empty() {
                    self.pos = save;
                }
            }
        }
        if matches!(self.peek(), Some('l' | 'L' | 'f' | 'F' | 'd' | 'D')) {
            self.pos += 1;
        }
        Token::new(TokenKind::NumericLiteral, &self.src[start..self.pos])
    }

    fn quoted(&mut self, quote: char, kind: TokenKind) -> Result<Token> {
        let start = self.pos;
        if quote == '"' && self.rest().starts_with("\"\"\"") {
            return match self.rest()[3..].find("\"\"\"") {
                Some(end) => {
                    self.pos += end + 6;
                    Ok(Token::new(kind, &self.src[start..self.pos]))
                }
                None => self.unterminated(start, kind),
            };
        }
        self.pos += 1;
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => {
                    chars.next();
                }
                '\n' => break,
                c if c == quote => {
                    self.pos += i + 1;
                    return Ok(Token::new(kind, &self.src[start..self.pos]));
                }
                _ => {}
            }
        }
        self.unterminated(start, kind)
    }

    fn unterminated(&mut self, start: usize, kind: TokenKind) -> Result<Token> {
        if self.lossy {
            let end = self.src[start..].find('\n').map_or(self.src.len(), |e| start + e);
            self.pos = end;
            Ok(Token::new(kind, &self.src[start..end]))
        } else {
            Err(self.err(start, "unterminated literal"))
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>> {
        self.skip_trivia()?;
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        if is_ident_start(c) {
            let word = self.take_while(is_ident_part);
            let kind = if KEYWORDS.contains(&word) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            return Ok(Some(Token::new(kind, word)));
        }
        if c.is_ascii_digit() || (c == '.' && self.peek_at(1).is_some_and(|d| d.is_ascii_digit())) {
            return Ok(Some(self.number()));
        }
        if c == '"' {
            return self.quoted('"', TokenKind::StringLiteral).map(Some);
        }
        if c == '\'' {
            return self.quoted('\'', TokenKind::CharLiteral).map(Some);
        }
        if let Some(op) = OPERATORS.iter().find(|op| self.rest().starts_with(**op)) {
            self.pos += op.len();
            return Ok(Some(Token::new(TokenKind::Operator, *op)));
        }
        if SEPARATORS.contains(&c) {
            self.pos += 1;
            return Ok(Some(Token::new(TokenKind::Separator, c.to_string())));
        }
        if self.lossy {
            self.pos += c.len_utf8();
            return self.next_token();
        }
        Err(self.err(self.pos, format!("unexpected character {c:?}")))
    }

    fn run(mut self) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        while let Some(tok) = self.next_token()? {
            out.push(tok);
        }
        Ok(out)
    }
}

/// Lexes a Java fragment. Fails on characters outside the Java lexical
/// grammar and on unterminated literals or comments.
pub fn lex_code(text: &str) -> Result<Vec<Token>> {
    Lexer {
        src: text,
        pos: 0,
        lossy: false,
    }
    .run()
}

/// Like [`lex_code`] but skips unlexable characters and closes unterminated
/// literals at end of line. Used when a best-effort token stream is wanted.
pub fn lex_code_lossy(text: &str) -> Vec<Token> {
    Lexer {
        src: text,
        pos: 0,
        lossy: true,
    }
    .run()
    .expect("lossy lexing does not fail")
}
