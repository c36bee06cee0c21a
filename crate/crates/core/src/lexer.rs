//! Shared tokenizer for the net format, constraint text and the query language.

use std::fmt;

use crate::rational::{parse_rational, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Unsigned decimal literal; fractions are `Num / Num` at the grammar level.
    Num(Rational),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Hash,
    At,
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
    And,
    Or,
    Not,
    Arrow,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(name) => return write!(f, "`{name}`"),
            Tok::Num(n) => return write!(f, "`{n}`"),
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Hash => "#",
            Tok::At => "@",
            Tok::Le => "<=",
            Tok::Lt => "<",
            Tok::Ge => ">=",
            Tok::Gt => ">",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::And => "&&",
            Tok::Or => "||",
            Tok::Not => "!",
            Tok::Arrow => "->",
        };
        write!(f, "`{s}`")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

/// Splits one line of text into tokens. `line` is 1-based and only used for positions.
pub fn tokenize(text: &str, line: usize) -> Result<Vec<(Tok, Pos)>, LexError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos {
            line,
            column: i + 1,
        };
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let literal: String = chars[start..i].iter().collect();
            let value = parse_rational(&literal).ok_or_else(|| LexError {
                pos,
                message: format!("malformed number `{literal}`"),
            })?;
            out.push((Tok::Num(value), pos));
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', Some('=')) => (Tok::Eq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('&', Some('&')) => (Tok::And, 2),
            ('|', Some('|')) => (Tok::Or, 2),
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::Eq, 1),
            ('!', _) => (Tok::Not, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            (',', _) => (Tok::Comma, 1),
            (':', _) => (Tok::Colon, 1),
            (';', _) => (Tok::Semi, 1),
            ('#', _) => (Tok::Hash, 1),
            ('@', _) => (Tok::At, 1),
            _ => {
                return Err(LexError {
                    pos,
                    message: format!("unexpected character `{c}`"),
                });
            }
        };
        out.push((tok, pos));
        i += width;
    }
    Ok(out)
}

/// Cursor over a token list with one-token lookahead and end-of-input position.
pub struct Cursor {
    toks: Vec<(Tok, Pos)>,
    idx: usize,
    end: Pos,
}

impl Cursor {
    pub fn new(toks: Vec<(Tok, Pos)>, end: Pos) -> Self {
        Cursor { toks, idx: 0, end }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    pub fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.idx + offset).map(|(t, _)| t)
    }

    pub fn pos(&self) -> Pos {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.end)
    }

    pub fn next(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.idx).map(|(t, _)| t.clone());
        if tok.is_some() {
            self.idx += 1;
        }
        tok
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(w)) if w == word) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub fn at_end(&self) -> bool {
        self.idx >= self.toks.len()
    }

    pub fn error(&self, message: impl Into<String>) -> LexError {
        LexError {
            pos: self.pos(),
            message: message.into(),
        }
    }

    pub fn expect(&mut self, tok: &Tok) -> Result<(), LexError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("{tok}")))
        }
    }

    pub fn expect_ident(&mut self) -> Result<String, LexError> {
        match self.peek() {
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                self.idx += 1;
                Ok(name)
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    pub fn unexpected(&self, wanted: &str) -> LexError {
        match self.peek() {
            Some(tok) => self.error(format!("expected {wanted}, found {tok}")),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    /// Unsigned rational literal: `n` or `n / m`.
    pub fn rational_literal(&mut self) -> Result<Rational, LexError> {
        let value = match self.peek() {
            Some(Tok::Num(n)) => n.clone(),
            _ => return Err(self.unexpected("a number")),
        };
        self.idx += 1;
        if self.peek() == Some(&Tok::Slash) && matches!(self.peek_at(1), Some(Tok::Num(_))) {
            self.idx += 1;
            let pos = self.pos();
            if let Some(Tok::Num(den)) = self.next() {
                if num_traits::Zero::is_zero(&den) {
                    return Err(LexError {
                        pos,
                        message: "division by zero".into(),
                    });
                }
                return Ok(value / den);
            }
        }
        Ok(value)
    }
}
