//! A closed, side-effect-free query language over the node table.
//!
//! ```text
//! expr := INT | STRING | "[" [INT {"," INT}] "]" | NAME "(" [expr {"," expr}] ")"
//! ```
//!
//! Only the builtins in [`Builtin`] exist, so a query can read the table and
//! nothing else. Arguments are type-checked at parse time.

mod eval;
mod fuzz;

use std::fmt;

use thiserror::Error;

pub use eval::{eval_query, EvalError, Evaluator, DEFAULT_RENDER_CAP, DEFAULT_VISIT_CAP};
pub use fuzz::random_query;

pub const MAX_DEPTH: usize = 16;

/// Grammar reference shown to models and humans.
pub const GRAMMAR: &str = "\
expr := INT | STRING | \"[\" [INT {\",\" INT}] \"]\" | NAME \"(\" [expr {\",\" expr}] \")\"
Functions (ids is a list of node ids such as [1, 2] or neighbors(3)):
  row(id)                 full row: features, neighbors and label
  features(id)            textual description of a node
  label(id)               label of a node, or None if it is not in the training set
  neighbors(id)           neighbor ids, ascending
  hop(id, k)              ids exactly k hops away, ascending
  degree(id)              number of neighbors
  features_of(ids)        one \"Node i: text\" line per id
  labels_of(ids)          one \"Node i: label\" line per id
  count_labels(ids)       \"class: count\" lines; unlabeled nodes are counted under None
  filter_label(ids, c)    ids whose label is c (c may also be \"None\")
  sample(ids, n[, seed])  n ids drawn uniformly without replacement, ascending
  head(ids, n)            first n ids
  size(ids)               number of ids
  classes()               the class catalog
One expression per turn; nesting depth at most 16.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Row,
    Features,
    Label,
    Neighbors,
    Hop,
    Degree,
    FeaturesOf,
    LabelsOf,
    CountLabels,
    FilterLabel,
    Sample,
    Head,
    Size,
    Classes,
}

/// Static types of expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Int,
    Str,
    Ids,
    Label,
    Text,
    Row,
    Table,
    Counts,
    Catalog,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ty::Int => "integer",
            Ty::Str => "string",
            Ty::Ids => "id list",
            Ty::Label => "label",
            Ty::Text => "text",
            Ty::Row => "row",
            Ty::Table => "table",
            Ty::Counts => "label counts",
            Ty::Catalog => "class catalog",
        };
        f.write_str(s)
    }
}

/// Parameter kinds: node ids and counts are integers, a class filter is an
/// integer or the string "None".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Param {
    Id,
    Int,
    Ids,
    Class,
}

impl Param {
    fn accepts(self, ty: Ty) -> bool {
        match self {
            Param::Id | Param::Int => ty == Ty::Int,
            Param::Ids => ty == Ty::Ids,
            Param::Class => ty == Ty::Int || ty == Ty::Str,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Param::Id => "a node id",
            Param::Int => "an integer",
            Param::Ids => "an id list",
            Param::Class => "a class index or \"None\"",
        }
    }
}

impl Builtin {
    pub const ALL: [Builtin; 14] = [
        Builtin::Row,
        Builtin::Features,
        Builtin::Label,
        Builtin::Neighbors,
        Builtin::Hop,
        Builtin::Degree,
        Builtin::FeaturesOf,
        Builtin::LabelsOf,
        Builtin::CountLabels,
        Builtin::FilterLabel,
        Builtin::Sample,
        Builtin::Head,
        Builtin::Size,
        Builtin::Classes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Row => "row",
            Builtin::Features => "features",
            Builtin::Label => "label",
            Builtin::Neighbors => "neighbors",
            Builtin::Hop => "hop",
            Builtin::Degree => "degree",
            Builtin::FeaturesOf => "features_of",
            Builtin::LabelsOf => "labels_of",
            Builtin::CountLabels => "count_labels",
            Builtin::FilterLabel => "filter_label",
            Builtin::Sample => "sample",
            Builtin::Head => "head",
            Builtin::Size => "size",
            Builtin::Classes => "classes",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    /// Required parameters, then optional ones.
    fn params(self) -> (&'static [Param], &'static [Param]) {
        use Param::*;
        match self {
            Builtin::Row | Builtin::Features | Builtin::Label | Builtin::Neighbors | Builtin::Degree => {
                (&[Id], &[])
            }
            Builtin::Hop => (&[Id, Int], &[]),
            Builtin::FeaturesOf | Builtin::LabelsOf | Builtin::CountLabels | Builtin::Size => {
                (&[Ids], &[])
            }
            Builtin::FilterLabel => (&[Ids, Class], &[]),
            Builtin::Sample => (&[Ids, Int], &[Int]),
            Builtin::Head => (&[Ids, Int], &[]),
            Builtin::Classes => (&[], &[]),
        }
    }

    pub fn returns(self) -> Ty {
        match self {
            Builtin::Row => Ty::Row,
            Builtin::Features => Ty::Text,
            Builtin::Label => Ty::Label,
            Builtin::Neighbors | Builtin::Hop | Builtin::FilterLabel | Builtin::Sample | Builtin::Head => {
                Ty::Ids
            }
            Builtin::Degree | Builtin::Size => Ty::Int,
            Builtin::FeaturesOf | Builtin::LabelsOf => Ty::Table,
            Builtin::CountLabels => Ty::Counts,
            Builtin::Classes => Ty::Catalog,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Str(String),
    IdList(Vec<i64>),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn ty(&self) -> Ty {
        match self {
            Expr::Int(_) => Ty::Int,
            Expr::Str(_) => Ty::Str,
            Expr::IdList(_) => Ty::Ids,
            Expr::Call(b, _) => b.returns(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    pub fn call(builtin: Builtin, args: Vec<Expr>) -> Self {
        Expr::Call(builtin, args)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Str(s) => write!(f, "{s:?}"),
            Expr::IdList(ids) => {
                let parts: Vec<String> = ids.iter().map(ToString::to_string).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Expr::Call(b, args) => {
                let parts: Vec<String> = args.iter().map(ToString::to_string).collect();
                write!(f, "{}({})", b.name(), parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{message}")]
pub struct ParseError {
    pub message: String,
}

fn fail<T>(message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Other(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => f.write_str(s),
            Token::Int(i) => write!(f, "{i}"),
            Token::Str(s) => write!(f, "{s:?}"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
            Token::LBracket => f.write_str("["),
            Token::RBracket => f.write_str("]"),
            Token::Comma => f.write_str(","),
            Token::Other(c) => write!(f, "{c}"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' | '[' | ']' | ',' => {
                chars.next();
                out.push(match c {
                    '(' => Token::LParen,
                    ')' => Token::RParen,
                    '[' => Token::LBracket,
                    ']' => Token::RBracket,
                    _ => Token::Comma,
                });
            }
            '"' | '\'' => {
                chars.next();
                let mut s = String::new();
                let mut closed = false;
                while let Some((_, ch)) = chars.next() {
                    match ch {
                        '\\' => match chars.next() {
                            Some((_, 'n')) => s.push('\n'),
                            Some((_, esc)) => s.push(esc),
                            None => break,
                        },
                        ch if ch == c => {
                            closed = true;
                            break;
                        }
                        ch => s.push(ch),
                    }
                }
                if !closed {
                    return fail(format!("unterminated string starting at column {}", start + 1));
                }
                out.push(Token::Str(s));
            }
            c if c.is_ascii_digit() || c == '-' => {
                chars.next();
                let mut end = start + c.len_utf8();
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = i + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let text = &src[start..end];
                match text.parse::<i64>() {
                    Ok(v) => out.push(Token::Int(v)),
                    Err(_) => return fail(format!("malformed integer {text}")),
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut end = start;
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' {
                        end = i + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Ident(src[start..end].to_string()));
            }
            other => {
                chars.next();
                out.push(Token::Other(other));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token, context: &str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => fail(format!("expected {want} {context}, found {t}")),
            None => fail(format!("expected {want} {context}, found end of input")),
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ParseError> {
        if depth > MAX_DEPTH {
            return fail(format!("expression nested deeper than {MAX_DEPTH}"));
        }
        match self.next() {
            None => fail("empty expression"),
            Some(Token::Int(i)) => Ok(Expr::Int(i)),
            Some(Token::Str(s)) => Ok(Expr::Str(s)),
            Some(Token::LBracket) => self.id_list(),
            Some(Token::Ident(name)) => {
                let Some(builtin) = Builtin::from_name(&name) else {
                    return fail(format!("unknown identifier {name}"));
                };
                self.expect(Token::LParen, &format!("after {name}"))?;
                let mut args = Vec::new();
                if self.peek() == Some(&Token::RParen) {
                    self.next();
                } else {
                    loop {
                        args.push(self.expr(depth + 1)?);
                        match self.next() {
                            Some(Token::Comma) => continue,
                            Some(Token::RParen) => break,
                            Some(t) => {
                                return fail(format!("expected , or ) in call to {name}, found {t}"))
                            }
                            None => return fail(format!("unclosed call to {name}")),
                        }
                    }
                }
                check_call(builtin, &args)?;
                Ok(Expr::Call(builtin, args))
            }
            Some(t) => fail(format!("unexpected token {t}")),
        }
    }

    fn id_list(&mut self) -> Result<Expr, ParseError> {
        let mut ids = Vec::new();
        if self.peek() == Some(&Token::RBracket) {
            self.next();
            return Ok(Expr::IdList(ids));
        }
        loop {
            match self.next() {
                Some(Token::Int(i)) => ids.push(i),
                Some(t) => return fail(format!("id lists hold integers only, found {t}")),
                None => return fail("unclosed id list"),
            }
            match self.next() {
                Some(Token::Comma) => continue,
                Some(Token::RBracket) => return Ok(Expr::IdList(ids)),
                Some(t) => return fail(format!("expected , or ] in id list, found {t}")),
                None => return fail("unclosed id list"),
            }
        }
    }
}

fn check_call(builtin: Builtin, args: &[Expr]) -> Result<(), ParseError> {
    let (required, optional) = builtin.params();
    let name = builtin.name();
    if args.len() < required.len() || args.len() > required.len() + optional.len() {
        let expected = if optional.is_empty() {
            required.len().to_string()
        } else {
            format!("{} to {}", required.len(), required.len() + optional.len())
        };
        return fail(format!(
            "{name} takes {expected} argument(s), got {}",
            args.len()
        ));
    }
    for (i, (arg, param)) in args.iter().zip(required.iter().chain(optional)).enumerate() {
        if !param.accepts(arg.ty()) {
            return fail(format!(
                "argument {} of {name} must be {}, found {} {arg}",
                i + 1,
                param.describe(),
                arg.ty()
            ));
        }
        if let (Param::Class, Expr::Str(s)) = (param, arg) {
            if s != "None" {
                return fail(format!("argument {} of {name}: string {s:?} is not \"None\"", i + 1));
            }
        }
    }
    Ok(())
}

/// Parses one expression. Callers pass the final non-empty line of a reply.
pub fn parse_query(text: &str) -> Result<Expr, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr(1)?;
    if let Some(t) = parser.peek() {
        return fail(format!("unexpected token {t} after expression"));
    }
    Ok(expr)
}
