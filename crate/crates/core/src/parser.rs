//! Reader and printer for the `.lpad` text format.
//!
//! ```text
//! program   := { item "." }
//! item      := "evidence(" literal [ "," ("true"|"false") ] ")"
//!            | "query(" atom ")"
//!            | [ "map_query" ] head { ";" head } [ ":-" literal { "," literal } ]
//! head      := atom [ ":" number ]
//! literal   := [ "\+" ] atom | "\+" "(" atom ")"
//! atom      := ident [ "(" term { "," term } ")" ]
//! ```
//!
//! `%` starts a line comment. Constants are lowercase identifiers or
//! integers; variables start with an uppercase letter or `_`.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{AnnotatedClause, Atom, Diagnostic, Head, Literal, Program, Term};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Number(String),
    Neck,
    Colon,
    Semi,
    Comma,
    Dot,
    LParen,
    RParen,
    Not,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Var(s) | Tok::Number(s) => write!(f, "`{s}`"),
            Tok::Neck => f.write_str("`:-`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Not => f.write_str("`\\+`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

/// Token with its byte range.
type Spanned = (Tok, usize, usize);
/// Byte range and message.
type LexError = (usize, usize, String);

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.char_indices().peekable(),
            text,
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.text.len(), |&(i, _)| i)
    }

    fn tokens(mut self) -> std::result::Result<Vec<Spanned>, LexError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '%' {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.column);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                'a'..='z' | 'A'..='Z' | '_' => {
                    let start = self.offset();
                    while self
                        .peek()
                        .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                    {
                        self.bump();
                    }
                    let word = self.text[start..self.offset()].to_string();
                    if c.is_ascii_lowercase() {
                        Tok::Ident(word)
                    } else {
                        Tok::Var(word)
                    }
                }
                '0'..='9' => {
                    let start = self.offset();
                    while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                        self.bump();
                    }
                    if self.peek() == Some('.') && self.peek2().is_some_and(|c| c.is_ascii_digit())
                    {
                        self.bump();
                        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                            self.bump();
                        }
                    }
                    if matches!(self.peek(), Some('e' | 'E')) {
                        let next = self.peek2();
                        if next.is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+') {
                            self.bump();
                            if matches!(self.peek(), Some('-' | '+')) {
                                self.bump();
                            }
                            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                                self.bump();
                            }
                        }
                    }
                    Tok::Number(self.text[start..self.offset()].to_string())
                }
                ':' => {
                    self.bump();
                    if self.peek() == Some('-') {
                        self.bump();
                        Tok::Neck
                    } else {
                        Tok::Colon
                    }
                }
                '\\' => {
                    self.bump();
                    if self.peek() == Some('+') {
                        self.bump();
                        Tok::Not
                    } else {
                        return Err((line, col, "expected `\\+`".into()));
                    }
                }
                ';' | ',' | '.' | '(' | ')' => {
                    self.bump();
                    match c {
                        ';' => Tok::Semi,
                        ',' => Tok::Comma,
                        '.' => Tok::Dot,
                        '(' => Tok::LParen,
                        _ => Tok::RParen,
                    }
                }
                '\'' => {
                    return Err((
                        line,
                        col,
                        "quoted atoms (including the null head '') are not accepted in input"
                            .into(),
                    ))
                }
                other => return Err((line, col, format!("unexpected character `{other}`"))),
            };
            out.push((tok, line, col));
        }
    }
}

/// A parsed program plus non-fatal findings such as repeated directives.
#[derive(Clone, Debug, Default)]
pub struct ParseOutput {
    pub program: Program,
    pub diagnostics: Vec<Diagnostic>,
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    file: String,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn span(&self) -> SourceSpan {
        let (_, line, column) = self.toks[self.pos];
        SourceSpan {
            file: self.file.clone(),
            line,
            column,
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            span: self.span(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            self.error(format!("expected {tok}, found {}", self.peek()))
        }
    }

    fn program(&mut self) -> Result<ParseOutput> {
        let mut out = ParseOutput::default();
        while *self.peek() != Tok::Eof {
            let is_directive = matches!(self.peek(), Tok::Ident(w) if w == "evidence" || w == "query")
                && *self.peek_at(1) == Tok::LParen;
            if is_directive {
                self.directive(&mut out)?;
            } else {
                let id = out.program.clauses.len();
                let clause = self.clause(id)?;
                out.program.clauses.push(clause);
            }
            self.expect(Tok::Dot)?;
        }
        Ok(out)
    }

    fn directive(&mut self, out: &mut ParseOutput) -> Result<()> {
        let Tok::Ident(kind) = self.next() else {
            unreachable!()
        };
        self.expect(Tok::LParen)?;
        if kind == "evidence" {
            let mut lit = self.literal()?;
            if *self.peek() == Tok::Comma {
                self.next();
                match self.next() {
                    Tok::Ident(v) if v == "true" => {}
                    Tok::Ident(v) if v == "false" => lit = lit.negated(),
                    other => return self.error(format!("expected `true` or `false`, found {other}")),
                }
            }
            self.expect(Tok::RParen)?;
            if out.program.evidence.contains(&lit) {
                out.diagnostics.push(Diagnostic {
                    clause: None,
                    message: format!("duplicate evidence({lit}) ignored"),
                });
            } else {
                out.program.evidence.push(lit);
            }
        } else {
            let atom = self.atom()?;
            self.expect(Tok::RParen)?;
            if out.program.queries.contains(&atom) {
                out.diagnostics.push(Diagnostic {
                    clause: None,
                    message: format!("duplicate query({atom}) ignored"),
                });
            } else {
                out.program.queries.push(atom);
            }
        }
        Ok(())
    }

    fn clause(&mut self, id: usize) -> Result<AnnotatedClause> {
        let is_query = matches!(self.peek(), Tok::Ident(w) if w == "map_query")
            && matches!(self.peek_at(1), Tok::Ident(_));
        if is_query {
            self.next();
        }
        let mut heads = Vec::new();
        let mut annotated = Vec::new();
        loop {
            let span = self.span();
            let atom = self.atom()?;
            let prob = if *self.peek() == Tok::Colon {
                self.next();
                annotated.push(true);
                self.probability()?
            } else {
                annotated.push(false);
                1.0
            };
            if atom.is_null() {
                return Err(Error::Syntax {
                    span,
                    message: "null head in input".into(),
                });
            }
            heads.push(Head::new(atom, prob));
            if *self.peek() == Tok::Semi {
                self.next();
            } else {
                break;
            }
        }
        if heads.len() > 1 && annotated.iter().any(|a| !a) {
            return self.error("every head of a disjunction needs a probability annotation");
        }
        let mut body = Vec::new();
        if *self.peek() == Tok::Neck {
            self.next();
            loop {
                body.push(self.literal()?);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        Ok(AnnotatedClause {
            id,
            heads,
            body,
            is_query,
        })
    }

    fn probability(&mut self) -> Result<f64> {
        let span = self.span();
        match self.next() {
            Tok::Number(n) => {
                let p: f64 = n.parse().map_err(|_| Error::Syntax {
                    span: span.clone(),
                    message: format!("malformed number `{n}`"),
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Syntax {
                        span,
                        message: format!("probability {n} outside [0,1]"),
                    });
                }
                Ok(p)
            }
            other => Err(Error::Syntax {
                span,
                message: format!("expected probability, found {other}"),
            }),
        }
    }

    fn literal(&mut self) -> Result<Literal> {
        if *self.peek() == Tok::Not {
            self.next();
            if *self.peek() == Tok::LParen {
                self.next();
                let atom = self.atom()?;
                self.expect(Tok::RParen)?;
                Ok(Literal::neg(atom))
            } else {
                Ok(Literal::neg(self.atom()?))
            }
        } else {
            Ok(Literal::pos(self.atom()?))
        }
    }

    fn atom(&mut self) -> Result<Atom> {
        let name = match self.peek().clone() {
            Tok::Ident(name) => {
                self.next();
                name
            }
            other => return self.error(format!("expected atom, found {other}")),
        };
        let mut args = Vec::new();
        if *self.peek() == Tok::LParen {
            self.next();
            loop {
                args.push(self.term()?);
                if *self.peek() == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(Atom::new(name, args))
    }

    fn term(&mut self) -> Result<Term> {
        match self.peek().clone() {
            Tok::Ident(c) => {
                if *self.peek_at(1) == Tok::LParen {
                    return self.error("function symbols are not supported");
                }
                self.next();
                Ok(Term::Const(c))
            }
            Tok::Var(v) => {
                self.next();
                Ok(Term::Var(v))
            }
            Tok::Number(n) if n.bytes().all(|b| b.is_ascii_digit()) => {
                self.next();
                Ok(Term::Const(n))
            }
            other => self.error(format!("expected term, found {other}")),
        }
    }
}

/// Parses program text. Repeated directives are dropped; use
/// [`parse_program_with_diagnostics`] to see them.
pub fn parse_program(text: &str) -> Result<Program> {
    parse_program_with_diagnostics(text, "<input>").map(|o| o.program)
}

pub fn parse_program_with_diagnostics(text: &str, file: &str) -> Result<ParseOutput> {
    let toks = Lexer::new(text)
        .tokens()
        .map_err(|(line, column, message)| Error::Syntax {
            span: SourceSpan {
                file: file.to_string(),
                line,
                column,
            },
            message,
        })?;
    Parser {
        toks,
        pos: 0,
        file: file.to_string(),
    }
    .program()
}

pub fn format_clause(clause: &AnnotatedClause) -> String {
    let mut s = String::new();
    if clause.is_query {
        s.push_str("map_query ");
    }
    if clause.is_deterministic() {
        s.push_str(&clause.heads[0].atom.to_string());
    } else {
        let heads: Vec<String> = clause
            .heads
            .iter()
            .map(|h| format!("{}:{}", h.atom, h.prob))
            .collect();
        s.push_str(&heads.join("; "));
    }
    if !clause.body.is_empty() {
        s.push_str(" :- ");
        let body: Vec<String> = clause.body.iter().map(|l| l.to_string()).collect();
        s.push_str(&body.join(", "));
    }
    s.push('.');
    s
}

/// Canonical text for a program; annotations are printed as authored, so
/// the implicit null head never appears.
pub fn format_program(program: &Program) -> String {
    let mut out = String::new();
    for clause in &program.clauses {
        out.push_str(&format_clause(clause));
        out.push('\n');
    }
    for lit in &program.evidence {
        out.push_str(&format!("evidence({lit}).\n"));
    }
    for q in &program.queries {
        out.push_str(&format!("query({q}).\n"));
    }
    out
}
