//! Reader and printer for the s-expression sub-language used by
//! `define-with-docs` annotations and Scheme chunks.
//!
//! The lexer keeps every byte of the input accounted for (whitespace and
//! comments included) so that token spans can drive renaming passes.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

/// A fully parsed s-expression value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Datum {
    Symbol(String),
    /// Exact integer, decimal or rational literal, kept as written.
    Number(String),
    Text(String),
    Boolean(bool),
    /// Character literal without the `#\` prefix.
    Char(String),
    List(Vec<Datum>),
    Vector(Vec<Datum>),
    Quoted(Box<Datum>),
    /// Keyword argument marker, stored without the `#:` prefix.
    Keyword(String),
}

impl Datum {
    pub fn symbol(text: impl Into<String>) -> Self {
        Datum::Symbol(text.into())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Datum::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_symbol(&self, text: &str) -> bool {
        self.as_symbol() == Some(text)
    }

    /// Text payload of a string or symbol datum.
    pub fn as_text_like(&self) -> Option<&str> {
        match self {
            Datum::Text(s) | Datum::Symbol(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Symbol(s) | Datum::Number(s) => f.write_str(s),
            Datum::Text(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Datum::Boolean(true) => f.write_str("#t"),
            Datum::Boolean(false) => f.write_str("#f"),
            Datum::Char(c) => write!(f, "#\\{c}"),
            Datum::List(items) => write_seq(f, "(", items),
            Datum::Vector(items) => write_seq(f, "#(", items),
            Datum::Quoted(inner) => write!(f, "'{inner}"),
            Datum::Keyword(k) => write!(f, "#:{k}"),
        }
    }
}

fn write_seq(f: &mut fmt::Formatter<'_>, open: &str, items: &[Datum]) -> fmt::Result {
    f.write_str(open)?;
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(" ")?;
        }
        write!(f, "{item}")?;
    }
    f.write_str(")")
}

/// Canonical printed form of a datum.
pub fn print_datum(datum: &Datum) -> String {
    datum.to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ReadErrorKind {
    #[error("unbalanced parenthesis: list opened here is never closed")]
    UnclosedList,
    #[error("unbalanced parenthesis: unexpected `)`")]
    UnexpectedClose,
    #[error("unterminated text literal")]
    UnterminatedText,
    #[error("unterminated block comment")]
    UnterminatedComment,
    #[error("quote prefix without a following datum")]
    DanglingQuote,
    #[error("no datum found")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind} (at byte {offset})")]
pub struct ReadError {
    pub kind: ReadErrorKind,
    pub offset: usize,
}

impl ReadError {
    fn new(kind: ReadErrorKind, offset: usize) -> Self {
        ReadError { kind, offset }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Open,
    Close,
    /// `#(`
    VectorOpen,
    Quote,
    Quasiquote,
    Unquote,
    UnquoteSplicing,
    /// `#;` datum comment prefix.
    DatumComment,
    Text(String),
    Atom,
    Comment,
    Whitespace,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | '"' | ';')
}

/// Splits `text` into tokens covering every byte, comments and whitespace
/// included.
pub fn tokenize(text: &str) -> Result<Vec<Token>, ReadError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().expect("in bounds");
        let start = i;
        let kind = if c.is_whitespace() {
            i += c.len_utf8();
            while let Some(c) = text[i..].chars().next() {
                if !c.is_whitespace() {
                    break;
                }
                i += c.len_utf8();
            }
            TokenKind::Whitespace
        } else if c == '(' || c == '[' {
            i += 1;
            TokenKind::Open
        } else if c == ')' || c == ']' {
            i += 1;
            TokenKind::Close
        } else if c == '\'' {
            i += 1;
            TokenKind::Quote
        } else if c == '`' {
            i += 1;
            TokenKind::Quasiquote
        } else if c == ',' {
            if bytes.get(i + 1) == Some(&b'@') {
                i += 2;
                TokenKind::UnquoteSplicing
            } else {
                i += 1;
                TokenKind::Unquote
            }
        } else if c == ';' {
            i = text[i..].find('\n').map_or(text.len(), |n| i + n);
            TokenKind::Comment
        } else if c == '"' {
            let (value, end) = lex_text(text, i)?;
            i = end;
            TokenKind::Text(value)
        } else if c == '#' && bytes.get(i + 1) == Some(&b'|') {
            let mut depth = 1;
            i += 2;
            while depth > 0 {
                if i + 1 >= text.len() {
                    return Err(ReadError::new(ReadErrorKind::UnterminatedComment, start));
                }
                if bytes[i] == b'|' && bytes[i + 1] == b'#' {
                    depth -= 1;
                    i += 2;
                } else if bytes[i] == b'#' && bytes[i + 1] == b'|' {
                    depth += 1;
                    i += 2;
                } else {
                    i += 1;
                }
            }
            TokenKind::Comment
        } else if c == '#' && bytes.get(i + 1) == Some(&b';') {
            i += 2;
            TokenKind::DatumComment
        } else if c == '#' && bytes.get(i + 1) == Some(&b'(') {
            i += 2;
            TokenKind::VectorOpen
        } else {
            // `#\(` and friends: the first character after `#\` is never a delimiter.
            if text[i..].starts_with("#\\") {
                i += 2;
                if let Some(c) = text[i..].chars().next() {
                    i += c.len_utf8();
                }
            }
            while let Some(c) = text[i..].chars().next() {
                if is_delimiter(c) {
                    break;
                }
                i += c.len_utf8();
            }
            if i == start {
                i += c.len_utf8();
            }
            TokenKind::Atom
        };
        tokens.push(Token {
            kind,
            span: start..i,
        });
    }
    Ok(tokens)
}

fn lex_text(text: &str, start: usize) -> Result<(String, usize), ReadError> {
    let mut value = String::new();
    let mut chars = text[start + 1..].char_indices();
    while let Some((off, c)) = chars.next() {
        match c {
            '"' => return Ok((value, start + 1 + off + 1)),
            '\\' => match chars.next() {
                Some((_, 'n')) => value.push('\n'),
                Some((_, 't')) => value.push('\t'),
                Some((_, 'r')) => value.push('\r'),
                Some((_, other)) => value.push(other),
                None => break,
            },
            c => value.push(c),
        }
    }
    Err(ReadError::new(ReadErrorKind::UnterminatedText, start))
}

fn classify_atom(text: &str) -> Datum {
    if let Some(kw) = text.strip_prefix("#:") {
        return Datum::Keyword(kw.to_string());
    }
    match text {
        "#t" | "#true" => return Datum::Boolean(true),
        "#f" | "#false" => return Datum::Boolean(false),
        _ => {}
    }
    if let Some(c) = text.strip_prefix("#\\") {
        return Datum::Char(c.to_string());
    }
    if is_number(text) {
        return Datum::Number(text.to_string());
    }
    Datum::Symbol(text.to_string())
}

fn is_number(text: &str) -> bool {
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    if body.is_empty() {
        return false;
    }
    if let Some((num, den)) = body.split_once('/') {
        return !num.is_empty()
            && !den.is_empty()
            && num.bytes().all(|b| b.is_ascii_digit())
            && den.bytes().all(|b| b.is_ascii_digit());
    }
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], Some(&body[pos + 1..])),
        None => (body, None),
    };
    let mantissa_ok = match mantissa.split_once('.') {
        Some((int, frac)) => {
            (!int.is_empty() || !frac.is_empty())
                && int.bytes().all(|b| b.is_ascii_digit())
                && frac.bytes().all(|b| b.is_ascii_digit())
        }
        None => !mantissa.is_empty() && mantissa.bytes().all(|b| b.is_ascii_digit()),
    };
    let exponent_ok = exponent.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && e.bytes().all(|b| b.is_ascii_digit())
    });
    mantissa_ok && exponent_ok
}

/// A datum together with the byte span it was read from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syntax {
    pub node: SyntaxNode,
    pub span: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SyntaxNode {
    Atom(Datum),
    List(Vec<Syntax>),
    Vector(Vec<Syntax>),
    Quoted(Box<Syntax>),
    /// Reader shorthand such as `` `x `` that expands to `(quasiquote x)`.
    Prefixed(&'static str, Box<Syntax>),
}

impl Syntax {
    pub fn to_datum(&self) -> Datum {
        match &self.node {
            SyntaxNode::Atom(d) => d.clone(),
            SyntaxNode::List(items) => Datum::List(items.iter().map(Syntax::to_datum).collect()),
            SyntaxNode::Vector(items) => {
                Datum::Vector(items.iter().map(Syntax::to_datum).collect())
            }
            SyntaxNode::Quoted(inner) => Datum::Quoted(Box::new(inner.to_datum())),
            SyntaxNode::Prefixed(name, inner) => {
                Datum::List(vec![Datum::symbol(*name), inner.to_datum()])
            }
        }
    }

    pub fn list_items(&self) -> Option<&[Syntax]> {
        match &self.node {
            SyntaxNode::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn atom(&self) -> Option<&Datum> {
        match &self.node {
            SyntaxNode::Atom(d) => Some(d),
            _ => None,
        }
    }
}

struct Reader<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Result<Self, ReadError> {
        Ok(Reader {
            text,
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    fn skip_trivia(&mut self) -> Result<(), ReadError> {
        while let Some(tok) = self.tokens.get(self.pos) {
            match tok.kind {
                TokenKind::Whitespace | TokenKind::Comment => self.pos += 1,
                TokenKind::DatumComment => {
                    let at = tok.span.start;
                    self.pos += 1;
                    if self.read()?.is_none() {
                        return Err(ReadError::new(ReadErrorKind::DanglingQuote, at));
                    }
                }
                _ => break,
            }
        }
        Ok(())
    }

    /// Reads the next datum, or `None` at end of input.
    fn read(&mut self) -> Result<Option<Syntax>, ReadError> {
        self.skip_trivia()?;
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Ok(None);
        };
        self.pos += 1;
        let start = tok.span.start;
        match tok.kind {
            TokenKind::Open | TokenKind::VectorOpen => {
                let mut items = Vec::new();
                loop {
                    self.skip_trivia()?;
                    match self.tokens.get(self.pos) {
                        None => return Err(ReadError::new(ReadErrorKind::UnclosedList, start)),
                        Some(t) if t.kind == TokenKind::Close => {
                            let end = t.span.end;
                            self.pos += 1;
                            let node = if tok.kind == TokenKind::Open {
                                SyntaxNode::List(items)
                            } else {
                                SyntaxNode::Vector(items)
                            };
                            return Ok(Some(Syntax {
                                node,
                                span: start..end,
                            }));
                        }
                        Some(_) => {
                            let item = self.read()?.expect("non-empty token stream");
                            items.push(item);
                        }
                    }
                }
            }
            TokenKind::Close => Err(ReadError::new(ReadErrorKind::UnexpectedClose, start)),
            TokenKind::Quote
            | TokenKind::Quasiquote
            | TokenKind::Unquote
            | TokenKind::UnquoteSplicing => {
                let Some(inner) = self.read()? else {
                    return Err(ReadError::new(ReadErrorKind::DanglingQuote, start));
                };
                let span = start..inner.span.end;
                let node = match tok.kind {
                    TokenKind::Quote => SyntaxNode::Quoted(Box::new(inner)),
                    TokenKind::Quasiquote => SyntaxNode::Prefixed("quasiquote", Box::new(inner)),
                    TokenKind::Unquote => SyntaxNode::Prefixed("unquote", Box::new(inner)),
                    _ => SyntaxNode::Prefixed("unquote-splicing", Box::new(inner)),
                };
                Ok(Some(Syntax { node, span }))
            }
            TokenKind::Text(value) => Ok(Some(Syntax {
                node: SyntaxNode::Atom(Datum::Text(value)),
                span: tok.span,
            })),
            TokenKind::Atom => Ok(Some(Syntax {
                node: SyntaxNode::Atom(classify_atom(&self.text[tok.span.clone()])),
                span: tok.span,
            })),
            TokenKind::Whitespace | TokenKind::Comment | TokenKind::DatumComment => {
                unreachable!("trivia skipped")
            }
        }
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map_or(self.text.len(), |t| t.span.start)
    }
}

/// Reads the first datum of `text`, returning it with the unread remainder.
pub fn parse_datum(text: &str) -> Result<(Datum, &str), ReadError> {
    let mut reader = Reader::new(text)?;
    match reader.read()? {
        Some(syntax) => Ok((syntax.to_datum(), &text[syntax.span.end..])),
        None => Err(ReadError::new(ReadErrorKind::Empty, reader.offset())),
    }
}

/// Reads every top-level datum in `text`.
pub fn read_all(text: &str) -> Result<Vec<Syntax>, ReadError> {
    let mut reader = Reader::new(text)?;
    let mut out = Vec::new();
    while let Some(syntax) = reader.read()? {
        out.push(syntax);
    }
    Ok(out)
}
