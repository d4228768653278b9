//! Tokenizer and recursive-descent parser for atoms.
//!
//! Grammar (whitespace insignificant between tokens):
//!
//! ```text
//! atom  := ident | ident '(' term (',' term)* ')'
//! term  := ident | VAR | ident '(' term (',' term)* ')'
//! ident := [a-z0-9][A-Za-z0-9_]*
//! VAR   := [A-Z_][A-Za-z0-9_]*
//! ```
//!
//! Every occurrence of a variable starting with `_` is a distinct fresh
//! variable.

use std::collections::BTreeMap;

use super::term::{Atom, Sym, Term, VarGen};
use super::LogicError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    /// Lowercase- or digit-initial identifier.
    Word(String),
    Var(String),
    /// Decimal with a fraction or exponent part.
    Number(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Colon,
    Eq,
    Slash,
    /// `-->`
    Arrow,
    /// `--`
    Dash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Word(w) => format!("`{w}`"),
            Tok::Var(v) => format!("variable `{v}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Arrow => "`-->`".into(),
            Tok::Dash => "`--`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub offset: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `text` into tokens; `#` starts a comment running to end of line.
pub fn tokenize(text: &str) -> Result<Vec<Token>, LogicError> {
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let at = |k: usize| bytes.get(k).map(|&(_, c)| c);
    while i < bytes.len() {
        let (off, c) = bytes[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '.' => Some(Tok::Dot),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, offset: off });
            i += 1;
            continue;
        }
        if c == '-' {
            if at(i + 1) == Some('-') && at(i + 2) == Some('>') {
                out.push(Token { tok: Tok::Arrow, offset: off });
                i += 3;
            } else if at(i + 1) == Some('-') {
                out.push(Token { tok: Tok::Dash, offset: off });
                i += 2;
            } else {
                return Err(LogicError::Syntax { offset: off, message: "stray `-`".into() });
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut j = i;
            while at(j).is_some_and(|c| c.is_ascii_digit()) {
                j += 1;
            }
            let mut numeric = false;
            if at(j) == Some('.') && at(j + 1).is_some_and(|c| c.is_ascii_digit()) {
                j += 1;
                while at(j).is_some_and(|c| c.is_ascii_digit()) {
                    j += 1;
                }
                numeric = true;
            }
            if matches!(at(j), Some('e') | Some('E')) {
                let k = if matches!(at(j + 1), Some('+') | Some('-')) { j + 2 } else { j + 1 };
                if at(k).is_some_and(|c| c.is_ascii_digit()) {
                    j = k;
                    while at(j).is_some_and(|c| c.is_ascii_digit()) {
                        j += 1;
                    }
                    numeric = true;
                }
            }
            if numeric && !at(j).is_some_and(is_word_char) {
                let s: String = bytes[start..j].iter().map(|&(_, c)| c).collect();
                out.push(Token { tok: Tok::Number(s), offset: off });
                i = j;
                continue;
            }
            // plain integer or alphanumeric word
            let mut j = start;
            while at(j).is_some_and(is_word_char) {
                j += 1;
            }
            let s: String = bytes[start..j].iter().map(|&(_, c)| c).collect();
            out.push(Token { tok: Tok::Word(s), offset: off });
            i = j;
            continue;
        }
        if c.is_ascii_lowercase() || c.is_ascii_uppercase() || c == '_' {
            let start = i;
            let mut j = i;
            while at(j).is_some_and(is_word_char) {
                j += 1;
            }
            let s: String = bytes[start..j].iter().map(|&(_, c)| c).collect();
            let tok = if c.is_ascii_lowercase() { Tok::Word(s) } else { Tok::Var(s) };
            out.push(Token { tok, offset: off });
            i = j;
            continue;
        }
        return Err(LogicError::Syntax { offset: off, message: format!("unexpected character `{c}`") });
    }
    out.push(Token { tok: Tok::Eof, offset: text.len() });
    Ok(out)
}

/// Cursor over a token stream, shared by the atom, corpus and model parsers.
pub struct Parser<'g> {
    toks: Vec<Token>,
    pos: usize,
    gen: &'g VarGen,
    /// Named variables seen in the current scope.
    scope: BTreeMap<String, Sym>,
    /// When false, named variables keep their written names.
    rename_named: bool,
}

impl<'g> Parser<'g> {
    pub fn new(text: &str, gen: &'g VarGen) -> Result<Self, LogicError> {
        Ok(Parser { toks: tokenize(text)?, pos: 0, gen, scope: BTreeMap::new(), rename_named: false })
    }

    /// Named variables are mapped to fresh names, one per scope.
    pub fn renaming_named(mut self) -> Self {
        self.rename_named = true;
        self
    }

    pub fn reset_scope(&mut self) {
        self.scope.clear();
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn offset(&self) -> usize {
        self.toks[self.pos].offset
    }

    pub fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn error(&self, message: impl Into<String>) -> LogicError {
        LogicError::Syntax { offset: self.offset(), message: message.into() }
    }

    pub fn expect(&mut self, want: Tok) -> Result<(), LogicError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error(format!("expected {}, found {}", want.describe(), self.peek().describe())))
        }
    }

    pub fn word(&mut self) -> Result<String, LogicError> {
        match self.peek().clone() {
            Tok::Word(w) => {
                self.next();
                Ok(w)
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    pub fn number(&mut self) -> Result<f64, LogicError> {
        let text = match self.peek().clone() {
            Tok::Number(n) => n,
            Tok::Word(w) if w.chars().all(|c| c.is_ascii_digit()) => w,
            other => return Err(self.error(format!("expected number, found {}", other.describe()))),
        };
        let v = text.parse::<f64>().map_err(|_| self.error(format!("bad number `{text}`")))?;
        self.next();
        Ok(v)
    }

    pub fn integer(&mut self) -> Result<usize, LogicError> {
        match self.peek().clone() {
            Tok::Word(w) if w.chars().all(|c| c.is_ascii_digit()) => {
                let v = w.parse::<usize>().map_err(|_| self.error(format!("bad integer `{w}`")))?;
                self.next();
                Ok(v)
            }
            other => Err(self.error(format!("expected integer, found {}", other.describe()))),
        }
    }

    pub fn atom(&mut self) -> Result<Atom, LogicError> {
        let name = self.word()?;
        if name.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.error(format!("predicate name `{name}` must start with a letter")));
        }
        let args = if *self.peek() == Tok::LParen { self.args()? } else { Vec::new() };
        Ok(Atom::new(&name, args))
    }

    fn args(&mut self) -> Result<Vec<Term>, LogicError> {
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term()?];
        while *self.peek() == Tok::Comma {
            self.next();
            args.push(self.term()?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    pub fn term(&mut self) -> Result<Term, LogicError> {
        match self.peek().clone() {
            Tok::Var(v) => {
                self.next();
                Ok(Term::Var(self.variable(&v)))
            }
            Tok::Word(w) => {
                self.next();
                if *self.peek() == Tok::LParen {
                    Ok(Term::Compound(w.into(), self.args()?))
                } else {
                    Ok(Term::Const(w.into()))
                }
            }
            other => Err(self.error(format!("expected term, found {}", other.describe()))),
        }
    }

    fn variable(&mut self, name: &str) -> Sym {
        if name.starts_with('_') {
            return self.gen.fresh();
        }
        if !self.rename_named {
            return name.into();
        }
        if let Some(v) = self.scope.get(name) {
            return v.clone();
        }
        let v = self.gen.fresh();
        self.scope.insert(name.to_string(), v.clone());
        v
    }
}

/// Parses a single atom.
pub fn parse_atom(text: &str) -> Result<Atom, LogicError> {
    let mut p = Parser::new(text, VarGen::global())?;
    let a = p.atom()?;
    if !p.at_eof() {
        return Err(p.error(format!("trailing input: {}", p.peek().describe())));
    }
    Ok(a)
}

/// Parses a comma-separated list of atoms; an empty input yields no atoms.
pub fn parse_atom_list(text: &str) -> Result<Vec<Atom>, LogicError> {
    let mut p = Parser::new(text, VarGen::global())?;
    let mut out = Vec::new();
    if p.at_eof() {
        return Ok(out);
    }
    out.push(p.atom()?);
    while *p.peek() == Tok::Comma {
        p.next();
        out.push(p.atom()?);
    }
    if !p.at_eof() {
        return Err(p.error(format!("expected `,` or end of line, found {}", p.peek().describe())));
    }
    Ok(out)
}
