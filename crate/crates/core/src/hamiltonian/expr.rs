//! Recursive-descent parser and jet evaluator for Hamiltonian expressions.
//!
//! Grammar (standard precedence, parentheses, unary minus):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' integer)?
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are the variables `x1..x2`, `p1..p2`, `u` and the functions
//! `sin`, `cos`, `exp`. Exponents are integer literals (optionally negative).

use thiserror::Error;

use super::jet::JetValue;
use crate::geometry::MAX_DIM;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier '{name}' at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("empty expression")]
    Empty,
}

/// Evaluation failure: some subexpression produced a non-finite value.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite value in subexpression '{snippet}' (bytes {start}..{end})")]
pub struct EvalError {
    pub start: usize,
    pub end: usize,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq)]
enum NodeKind {
    Num(f64),
    VarX(usize),
    VarP(usize),
    VarU,
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Pow(Box<Node>, i32),
    Sin(Box<Node>),
    Cos(Box<Node>),
    Exp(Box<Node>),
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    kind: NodeKind,
    start: usize,
    end: usize,
}

/// A parsed expression over `(x, p, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
    /// Highest axis index referenced by `x`/`p` variables plus one
    /// (at least 1, so a pure `u` expression is one-dimensional).
    dim: usize,
    uses_p: bool,
    uses_u: bool,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            source: text,
        };
        let root = parser.expr()?;
        parser.expect_end()?;
        let mut dim = 1;
        let mut uses_p = false;
        let mut uses_u = false;
        scan_vars(&root, &mut dim, &mut uses_p, &mut uses_u);
        Ok(Self {
            root,
            source: text.to_string(),
            dim,
            uses_p,
            uses_u,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn uses_p(&self) -> bool {
        self.uses_p
    }

    pub fn uses_u(&self) -> bool {
        self.uses_u
    }

    /// Evaluate with exact first derivatives. On a non-finite intermediate
    /// the error names the offending subexpression.
    pub fn eval(
        &self,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<JetValue, EvalError> {
        let out = eval_node(&self.root, x, p, u);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(self.locate_failure(&self.root, x, p, u))
        }
    }

    /// Value-only evaluation (same result as `eval(..).value`).
    pub fn eval_value(
        &self,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> Result<f64, EvalError> {
        self.eval(x, p, u).map(|j| j.value)
    }

    // Walk down to the smallest subtree that already evaluates non-finite.
    fn locate_failure(
        &self,
        node: &Node,
        x: &[f64; MAX_DIM],
        p: &[f64; MAX_DIM],
        u: f64,
    ) -> EvalError {
        let children: Vec<&Node> = match &node.kind {
            NodeKind::Add(a, b)
            | NodeKind::Sub(a, b)
            | NodeKind::Mul(a, b)
            | NodeKind::Div(a, b) => vec![a.as_ref(), b.as_ref()],
            NodeKind::Neg(a)
            | NodeKind::Pow(a, _)
            | NodeKind::Sin(a)
            | NodeKind::Cos(a)
            | NodeKind::Exp(a) => vec![a.as_ref()],
            _ => vec![],
        };
        for child in children {
            if !eval_node(child, x, p, u).is_finite() {
                return self.locate_failure(child, x, p, u);
            }
        }
        EvalError {
            start: node.start,
            end: node.end,
            snippet: self.source[node.start..node.end].to_string(),
        }
    }
}

fn scan_vars(node: &Node, dim: &mut usize, uses_p: &mut bool, uses_u: &mut bool) {
    match &node.kind {
        NodeKind::VarX(a) => *dim = (*dim).max(a + 1),
        NodeKind::VarP(a) => {
            *dim = (*dim).max(a + 1);
            *uses_p = true;
        }
        NodeKind::VarU => *uses_u = true,
        NodeKind::Add(a, b)
        | NodeKind::Sub(a, b)
        | NodeKind::Mul(a, b)
        | NodeKind::Div(a, b) => {
            scan_vars(a, dim, uses_p, uses_u);
            scan_vars(b, dim, uses_p, uses_u);
        }
        NodeKind::Neg(a)
        | NodeKind::Pow(a, _)
        | NodeKind::Sin(a)
        | NodeKind::Cos(a)
        | NodeKind::Exp(a) => scan_vars(a, dim, uses_p, uses_u),
        NodeKind::Num(_) => {}
    }
}

fn eval_node(node: &Node, x: &[f64; MAX_DIM], p: &[f64; MAX_DIM], u: f64) -> JetValue {
    match &node.kind {
        NodeKind::Num(v) => JetValue::constant(*v),
        NodeKind::VarX(a) => JetValue::var_x(*a, x[*a]),
        NodeKind::VarP(a) => JetValue::var_p(*a, p[*a]),
        NodeKind::VarU => JetValue::var_u(u),
        NodeKind::Add(a, b) => eval_node(a, x, p, u) + eval_node(b, x, p, u),
        NodeKind::Sub(a, b) => eval_node(a, x, p, u) - eval_node(b, x, p, u),
        NodeKind::Mul(a, b) => eval_node(a, x, p, u) * eval_node(b, x, p, u),
        NodeKind::Div(a, b) => eval_node(a, x, p, u) / eval_node(b, x, p, u),
        NodeKind::Neg(a) => -eval_node(a, x, p, u),
        NodeKind::Pow(a, k) => eval_node(a, x, p, u).powi(*k),
        NodeKind::Sin(a) => eval_node(a, x, p, u).sin(),
        NodeKind::Cos(a) => eval_node(a, x, p, u).cos(),
        NodeKind::Exp(a) => eval_node(a, x, p, u).exp(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    start: usize,
    end: usize,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number '{v}'"),
            TokenKind::Ident(s) => format!("identifier '{s}'"),
            TokenKind::Plus => "'+'".into(),
            TokenKind::Minus => "'-'".into(),
            TokenKind::Star => "'*'".into(),
            TokenKind::Slash => "'/'".into(),
            TokenKind::Caret => "'^'".into(),
            TokenKind::LParen => "'('".into(),
            TokenKind::RParen => "')'".into(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' | b'(' | b')' => {
                let kind = match c {
                    b'+' => TokenKind::Plus,
                    b'-' => TokenKind::Minus,
                    b'*' => TokenKind::Star,
                    b'/' => TokenKind::Slash,
                    b'^' => TokenKind::Caret,
                    b'(' => TokenKind::LParen,
                    _ => TokenKind::RParen,
                };
                tokens.push(Token {
                    kind,
                    start: i,
                    end: i + 1,
                });
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let slice = &text[start..i];
                let value: f64 = slice.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    expected: "a numeric literal".into(),
                    found: format!("'{slice}'"),
                })?;
                tokens.push(Token {
                    kind: TokenKind::Number(value),
                    start,
                    end: i,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..i].to_string()),
                    start,
                    end: i,
                });
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: i,
                    expected: "a number, identifier, or operator".into(),
                    found: format!("'{}'", &text[i..i + 1]),
                })
            }
        }
    }
    if tokens.is_empty() {
        return Err(ExprError::Empty);
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    source: &'a str,
}

const PRIMARY_EXPECTED: &str = "a number, identifier, '(' or '-'";

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn advance(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, expected: &str) -> ExprError {
        match self.peek() {
            Some(tok) => ExprError::Syntax {
                offset: tok.start,
                expected: expected.into(),
                found: tok.kind.describe(),
            },
            None => ExprError::Syntax {
                offset: self.source.len(),
                expected: expected.into(),
                found: "end of input".into(),
            },
        }
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        if self.pos == self.tokens.len() {
            Ok(())
        } else {
            Err(self.error_here("an operator or end of input"))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokenKind::Plus => NodeKind::Add as fn(Box<Node>, Box<Node>) -> NodeKind,
                TokenKind::Minus => NodeKind::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            let (start, end) = (lhs.start, rhs.end);
            lhs = Node {
                kind: op(Box::new(lhs), Box::new(rhs)),
                start,
                end,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            let op = match tok.kind {
                TokenKind::Star => NodeKind::Mul as fn(Box<Node>, Box<Node>) -> NodeKind,
                TokenKind::Slash => NodeKind::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.unary()?;
            let (start, end) = (lhs.start, rhs.end);
            lhs = Node {
                kind: op(Box::new(lhs), Box::new(rhs)),
                start,
                end,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Minus {
                let start = tok.start;
                self.advance();
                let inner = self.unary()?;
                let end = inner.end;
                return Ok(Node {
                    kind: NodeKind::Neg(Box::new(inner)),
                    start,
                    end,
                });
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Caret {
                self.advance();
                // optional sign on the exponent literal
                let mut sign = 1i32;
                if let Some(t) = self.peek() {
                    if t.kind == TokenKind::Minus {
                        sign = -1;
                        self.advance();
                    }
                }
                let (k, end) = match self.peek() {
                    Some(Token {
                        kind: TokenKind::Number(v),
                        start,
                        end,
                    }) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => {
                        let k = *v as i32;
                        let (_s, e) = (*start, *end);
                        self.advance();
                        (k, e)
                    }
                    _ => return Err(self.error_here("an integer exponent")),
                };
                let start = base.start;
                return Ok(Node {
                    kind: NodeKind::Pow(Box::new(base), sign * k),
                    start,
                    end,
                });
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return Err(self.error_here(PRIMARY_EXPECTED)),
        };
        match tok.kind {
            TokenKind::Number(v) => {
                self.advance();
                Ok(Node {
                    kind: NodeKind::Num(v),
                    start: tok.start,
                    end: tok.end,
                })
            }
            TokenKind::LParen => {
                self.advance();
                let inner = self.expr()?;
                match self.peek() {
                    Some(t) if t.kind == TokenKind::RParen => {
                        let end = t.end;
                        self.advance();
                        Ok(Node {
                            kind: inner.kind,
                            start: tok.start,
                            end,
                        })
                    }
                    _ => Err(self.error_here("')'")),
                }
            }
            TokenKind::Ident(name) => {
                self.advance();
                if let Some(func) = function_ctor(&name) {
                    match self.peek() {
                        Some(t) if t.kind == TokenKind::LParen => {
                            self.advance();
                            let arg = self.expr()?;
                            match self.peek() {
                                Some(t) if t.kind == TokenKind::RParen => {
                                    let end = t.end;
                                    self.advance();
                                    Ok(Node {
                                        kind: func(Box::new(arg)),
                                        start: tok.start,
                                        end,
                                    })
                                }
                                _ => Err(self.error_here("')'")),
                            }
                        }
                        _ => Err(self.error_here("'(' after function name")),
                    }
                } else if let Some(kind) = variable_kind(&name) {
                    Ok(Node {
                        kind,
                        start: tok.start,
                        end: tok.end,
                    })
                } else {
                    Err(ExprError::UnknownIdentifier {
                        offset: tok.start,
                        name,
                    })
                }
            }
            _ => Err(self.error_here(PRIMARY_EXPECTED)),
        }
    }
}

fn function_ctor(name: &str) -> Option<fn(Box<Node>) -> NodeKind> {
    match name {
        "sin" => Some(NodeKind::Sin),
        "cos" => Some(NodeKind::Cos),
        "exp" => Some(NodeKind::Exp),
        _ => None,
    }
}

fn variable_kind(name: &str) -> Option<NodeKind> {
    if name == "u" {
        return Some(NodeKind::VarU);
    }
    let (head, tail) = name.split_at(1);
    let axis: usize = tail.parse().ok()?;
    if !(1..=MAX_DIM).contains(&axis) {
        return None;
    }
    match head {
        "x" => Some(NodeKind::VarX(axis - 1)),
        "p" => Some(NodeKind::VarP(axis - 1)),
        _ => None,
    }
}
