//! Text front end: a small expression language and a printer whose output
//! parses back to the same canonical expression.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary ("*" unary)*
//! unary  := ("-" | "+") unary | factor
//! factor := base ("^" UINT)?
//! base   := NUMBER | VAR | "(" expr ")" | func
//! func   := ("sin" | "cos" | "sign" | "relu") "(" expr (";" "sigma" "=" NUMBER)? ")"
//!         | "rbf" "(" "amp" "=" NUMBER "," "center" "=" vector "," "width" "=" NUMBER ")"
//!         | "exp" "(" NUMBER ")"
//! vector := "[" NUMBER ("," NUMBER)* "]"
//! VAR    := "x" UINT            (1-based)
//! ```
//!
//! Function arguments must be linear in the variables. `sin` / `cos` with
//! integer coefficients become trigonometric terms (a constant is allowed and
//! becomes a phase); `sin` with other coefficients, and `sign` / `relu`,
//! become linear-argument activations, which take no constant term. The
//! optional `sigma` annotation marks an activation that has already been
//! smoothed, and `exp(c)` multiplies by `e^c` (absorbed into the damping of
//! trigonometric terms). Input starting with `{` is read as the JSON form of
//! an [`Expression`].

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{Activation, ExprError, Expression, LinearArgTerm, RbfTerm, Term, TrigTerm};

const MAX_DEPTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    fn to(self, other: SourceSpan) -> SourceSpan {
        SourceSpan::new(self.start, other.end.max(self.start))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    fn new(span: SourceSpan, message: impl Into<String>) -> Self {
        Self {
            span,
            message: message.into(),
            expected: Vec::new(),
        }
    }

    fn expecting(span: SourceSpan, message: impl Into<String>, expected: &[&str]) -> Self {
        Self {
            span,
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// The message followed by the offending line with a caret underline.
    pub fn render(&self, src: &str) -> String {
        let mut out = format!("error: {self}\n");
        let start = self.span.start.min(src.len());
        let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
        let line_end = src[start..].find('\n').map_or(src.len(), |i| start + i);
        let line = &src[line_start..line_end];
        let col = src[line_start..start].chars().count();
        let width = src[start..self.span.end.clamp(start, line_end)]
            .chars()
            .count()
            .max(1);
        out.push_str(&format!(
            "  {line}\n  {}{}",
            " ".repeat(col),
            "^".repeat(width)
        ));
        out
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at {}..{}",
            self.message, self.span.start, self.span.end
        )?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, bool),
    Var(usize),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(..) => "number".into(),
            Tok::Var(i) => format!("variable x{i}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Comma => "','".into(),
            Tok::Eq => "'='".into(),
            Tok::Semi => "';'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let single = |tok| Token {
            tok,
            span: SourceSpan::new(start, start + 1),
        };
        match c {
            b'+' => out.push(single(Tok::Plus)),
            b'-' => out.push(single(Tok::Minus)),
            b'*' => out.push(single(Tok::Star)),
            b'^' => out.push(single(Tok::Caret)),
            b'(' => out.push(single(Tok::LParen)),
            b')' => out.push(single(Tok::RParen)),
            b'[' => out.push(single(Tok::LBracket)),
            b']' => out.push(single(Tok::RBracket)),
            b',' => out.push(single(Tok::Comma)),
            b'=' => out.push(single(Tok::Eq)),
            b';' => out.push(single(Tok::Semi)),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                let mut integral = true;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    integral = false;
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        integral = false;
                        j = k;
                    }
                }
                let span = SourceSpan::new(start, j);
                let text = &src[start..j];
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::new(span, format!("malformed number '{text}'")))?;
                if !value.is_finite() {
                    return Err(ParseError::new(span, "number out of range"));
                }
                out.push(Token {
                    tok: Tok::Num(value, integral),
                    span,
                });
                i = j;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let span = SourceSpan::new(start, j);
                let word = &src[start..j];
                let tok =
                    match word.strip_prefix('x') {
                        Some(digits)
                            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) =>
                        {
                            match digits.parse::<usize>() {
                                Ok(k) if (1..=1 << 16).contains(&k) => Tok::Var(k),
                                _ => return Err(ParseError::new(
                                    span,
                                    format!(
                                        "variable index in '{word}' must be between 1 and 65536"
                                    ),
                                )),
                            }
                        }
                        _ => Tok::Ident(word.to_string()),
                    };
                out.push(Token { tok, span });
                i = j;
                continue;
            }
            _ => {
                let ch = src[i..].chars().next().expect("index on a char boundary");
                return Err(ParseError::new(
                    SourceSpan::new(start, start + ch.len_utf8()),
                    format!("unexpected character '{ch}'"),
                ));
            }
        }
        i += 1;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: SourceSpan::new(src.len(), src.len()),
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Sign,
    Relu,
}

#[derive(Debug)]
enum NodeKind {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Sum(Vec<(bool, Node)>),
    Product(Vec<Node>),
    Pow(Box<Node>, u32),
    Call {
        func: Func,
        arg: Box<Node>,
        sigma: Option<f64>,
    },
    Rbf {
        amp: f64,
        center: Vec<f64>,
        width: f64,
    },
    Exp(f64),
}

#[derive(Debug)]
struct Node {
    kind: NodeKind,
    span: SourceSpan,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError::expecting(t.span, format!("unexpected {}", t.tok.describe()), expected)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[what]))
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<Token, ParseError> {
        match &self.peek().tok {
            Tok::Ident(w) if w == word => Ok(self.bump()),
            _ => Err(self.unexpected(&[&format!("'{word}'")])),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::new(
                self.peek().span,
                "expression nested too deeply",
            ));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let first = self.term()?;
        let mut span = first.span;
        let mut items = vec![(false, first)];
        loop {
            let negate = match self.peek().tok {
                Tok::Plus => false,
                Tok::Minus => true,
                _ => break,
            };
            self.bump();
            let t = self.term()?;
            span = span.to(t.span);
            items.push((negate, t));
        }
        if items.len() == 1 {
            return Ok(items.pop().expect("one item").1);
        }
        Ok(Node {
            kind: NodeKind::Sum(items),
            span,
        })
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let first = self.unary()?;
        let mut span = first.span;
        let mut items = vec![first];
        while self.peek().tok == Tok::Star {
            self.bump();
            let f = self.unary()?;
            span = span.to(f.span);
            items.push(f);
        }
        if items.len() == 1 {
            return Ok(items.pop().expect("one item"));
        }
        Ok(Node {
            kind: NodeKind::Product(items),
            span,
        })
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        match self.peek().tok {
            Tok::Minus | Tok::Plus => {
                let op = self.bump();
                self.enter()?;
                let inner = self.unary()?;
                self.depth -= 1;
                let span = op.span.to(inner.span);
                Ok(if op.tok == Tok::Minus {
                    Node {
                        kind: NodeKind::Neg(Box::new(inner)),
                        span,
                    }
                } else {
                    inner
                })
            }
            _ => self.factor(),
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.base()?;
        if self.peek().tok != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let t = self.bump();
        match t.tok {
            Tok::Num(v, true) if v <= u32::MAX as f64 => Ok(Node {
                span: base.span.to(t.span),
                kind: NodeKind::Pow(Box::new(base), v as u32),
            }),
            _ => Err(ParseError::expecting(
                t.span,
                "exponent must be a non-negative integer",
                &["integer exponent"],
            )),
        }
    }

    fn signed_number(&mut self) -> Result<(f64, SourceSpan), ParseError> {
        let mut sign = 1.0;
        let start = self.peek().span;
        if matches!(self.peek().tok, Tok::Minus | Tok::Plus) && self.bump().tok == Tok::Minus {
            sign = -1.0;
        }
        match self.peek().tok {
            Tok::Num(v, _) => {
                let t = self.bump();
                Ok((sign * v, start.to(t.span)))
            }
            _ => Err(self.unexpected(&["number"])),
        }
    }

    fn base(&mut self) -> Result<Node, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v, _) => {
                self.bump();
                Ok(Node {
                    kind: NodeKind::Num(v),
                    span: t.span,
                })
            }
            Tok::Var(k) => {
                self.bump();
                Ok(Node {
                    kind: NodeKind::Var(k - 1),
                    span: t.span,
                })
            }
            Tok::LParen => {
                self.bump();
                self.enter()?;
                let inner = self.expr()?;
                self.depth -= 1;
                let close = self.expect(Tok::RParen, "')'")?;
                Ok(Node {
                    kind: inner.kind,
                    span: t.span.to(close.span),
                })
            }
            Tok::Ident(ref name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "sign" => Some(Func::Sign),
                    "relu" => Some(Func::Relu),
                    "rbf" | "exp" => None,
                    _ => {
                        return Err(ParseError::expecting(
                            t.span,
                            format!("unknown function '{name}'"),
                            &["sin", "cos", "sign", "relu", "rbf", "exp"],
                        ))
                    }
                };
                self.bump();
                self.expect(Tok::LParen, "'('")?;
                let node = match (func, name.as_str()) {
                    (Some(func), _) => {
                        self.enter()?;
                        let arg = self.expr()?;
                        self.depth -= 1;
                        let sigma = if self.peek().tok == Tok::Semi {
                            self.bump();
                            self.expect_word("sigma")?;
                            self.expect(Tok::Eq, "'='")?;
                            let (s, span) = self.signed_number()?;
                            if s < 0.0 {
                                return Err(ParseError::new(span, "sigma must be non-negative"));
                            }
                            Some(s)
                        } else {
                            None
                        };
                        NodeKind::Call {
                            func,
                            arg: Box::new(arg),
                            sigma,
                        }
                    }
                    (None, "exp") => NodeKind::Exp(self.signed_number()?.0),
                    _ => {
                        self.expect_word("amp")?;
                        self.expect(Tok::Eq, "'='")?;
                        let (amp, _) = self.signed_number()?;
                        self.expect(Tok::Comma, "','")?;
                        self.expect_word("center")?;
                        self.expect(Tok::Eq, "'='")?;
                        self.expect(Tok::LBracket, "'['")?;
                        let mut center = vec![self.signed_number()?.0];
                        while self.peek().tok == Tok::Comma {
                            self.bump();
                            center.push(self.signed_number()?.0);
                        }
                        self.expect(Tok::RBracket, "']'")?;
                        self.expect(Tok::Comma, "','")?;
                        self.expect_word("width")?;
                        self.expect(Tok::Eq, "'='")?;
                        let (width, wspan) = self.signed_number()?;
                        if width <= 0.0 {
                            return Err(ParseError::new(wspan, "rbf width must be positive"));
                        }
                        NodeKind::Rbf { amp, center, width }
                    }
                };
                let close = self.expect(Tok::RParen, "')'")?;
                Ok(Node {
                    kind: node,
                    span: t.span.to(close.span),
                })
            }
            _ => Err(self.unexpected(&["number", "variable", "'('", "function"])),
        }
    }
}

/// Largest variable index and RBF center length used in the tree.
fn scan_dimension(node: &Node, vars: &mut usize, centers: &mut usize) {
    match &node.kind {
        NodeKind::Var(i) => *vars = (*vars).max(i + 1),
        NodeKind::Rbf { center, .. } => *centers = (*centers).max(center.len()),
        NodeKind::Neg(inner) | NodeKind::Pow(inner, _) => scan_dimension(inner, vars, centers),
        NodeKind::Call { arg, .. } => scan_dimension(arg, vars, centers),
        NodeKind::Sum(items) => items
            .iter()
            .for_each(|(_, n)| scan_dimension(n, vars, centers)),
        NodeKind::Product(items) => items.iter().for_each(|n| scan_dimension(n, vars, centers)),
        NodeKind::Num(_) | NodeKind::Exp(_) => {}
    }
}

fn find_var(node: &Node, index: usize) -> Option<SourceSpan> {
    match &node.kind {
        NodeKind::Var(i) if *i == index => Some(node.span),
        NodeKind::Neg(inner) | NodeKind::Pow(inner, _) => find_var(inner, index),
        NodeKind::Call { arg, .. } => find_var(arg, index),
        NodeKind::Sum(items) => items.iter().find_map(|(_, n)| find_var(n, index)),
        NodeKind::Product(items) => items.iter().find_map(|n| find_var(n, index)),
        _ => None,
    }
}

fn semantic(span: SourceSpan, err: ExprError) -> ParseError {
    ParseError::new(span, err.to_string())
}

fn check_finite(e: Expression, span: SourceSpan) -> Result<Expression, ParseError> {
    if e.terms().iter().all(|t| t.coeff().is_finite()) {
        Ok(e)
    } else {
        Err(ParseError::new(span, "numeric overflow"))
    }
}

struct Lowering {
    n: usize,
}

impl Lowering {
    fn lower(&self, node: &Node) -> Result<Expression, ParseError> {
        let n = self.n;
        let e = match &node.kind {
            NodeKind::Num(v) => Expression::constant(n, *v),
            NodeKind::Var(i) => Expression::variable(n, *i),
            NodeKind::Neg(inner) => self.lower(inner)?.scale(-1.0),
            NodeKind::Sum(items) => {
                let mut acc = Expression::zero(n);
                for (negate, item) in items {
                    let v = self.lower(item)?;
                    acc = if *negate { acc.sub(&v) } else { acc.add(&v) }
                        .map_err(|e| semantic(item.span, e))?;
                    acc = check_finite(acc, item.span)?;
                }
                acc
            }
            NodeKind::Product(items) => {
                let mut exp_total = 0.0;
                let mut acc = Expression::constant(n, 1.0);
                for item in items {
                    if let NodeKind::Exp(c) = item.kind {
                        exp_total += c;
                        continue;
                    }
                    let v = self.lower(item)?;
                    acc = acc.expand_product(&v).map_err(|e| semantic(item.span, e))?;
                    acc = check_finite(acc, item.span)?;
                }
                if exp_total != 0.0 {
                    acc = acc.apply_exp_factor(exp_total);
                }
                acc
            }
            NodeKind::Pow(inner, k) => self
                .lower(inner)?
                .expand_power(*k)
                .map_err(|e| semantic(node.span, e))?,
            NodeKind::Exp(c) => Expression::constant(n, 1.0).apply_exp_factor(*c),
            NodeKind::Rbf { amp, center, width } => {
                if center.len() != n {
                    return Err(ParseError::new(
                        node.span,
                        format!(
                            "rbf center has length {} but the expression has dimension {n}",
                            center.len()
                        ),
                    ));
                }
                Expression::from_term(
                    n,
                    Term::Rbf(RbfTerm {
                        amp: *amp,
                        center: center.clone(),
                        width: *width,
                    }),
                )
                .map_err(|e| semantic(node.span, e))?
            }
            NodeKind::Call { func, arg, sigma } => {
                self.lower_call(*func, arg, *sigma, node.span)?
            }
        };
        check_finite(e, node.span)
    }

    /// Direction and constant of a linear argument.
    fn linear(&self, arg: &Node) -> Result<(Vec<f64>, f64), ParseError> {
        let e = self.lower(arg)?;
        let mut direction = vec![0.0; self.n];
        let mut constant = 0.0;
        for t in e.terms() {
            let Term::Monomial(m) = t else {
                return Err(ParseError::new(
                    arg.span,
                    "function arguments must be linear",
                ));
            };
            let degree: u32 = m.exponents.iter().sum();
            match degree {
                0 => constant = m.coeff,
                1 => {
                    let d = m
                        .exponents
                        .iter()
                        .position(|&p| p == 1)
                        .expect("degree one");
                    direction[d] = m.coeff;
                }
                _ => {
                    return Err(ParseError::new(
                        arg.span,
                        "function arguments must be linear",
                    ))
                }
            }
        }
        Ok((direction, constant))
    }

    fn lower_call(
        &self,
        func: Func,
        arg: &Node,
        sigma: Option<f64>,
        span: SourceSpan,
    ) -> Result<Expression, ParseError> {
        let (direction, constant) = self.linear(arg)?;
        let activation = match func {
            Func::Sign => Some(Activation::Sign),
            Func::Relu => Some(Activation::Relu),
            Func::Sin => None,
            Func::Cos => None,
        };
        let integral = direction
            .iter()
            .all(|&k| k.fract() == 0.0 && k.abs() <= 1e9);
        let as_activation = match (func, sigma) {
            (Func::Cos, Some(_)) => {
                return Err(ParseError::new(
                    span,
                    "only sin, sign and relu accept a sigma annotation",
                ))
            }
            (Func::Sin, None) if integral => None,
            (Func::Cos, None) => {
                if !integral {
                    return Err(ParseError::new(
                        arg.span,
                        "cos arguments need integer coefficients",
                    ));
                }
                None
            }
            (Func::Sin, _) => Some(Activation::Sin),
            _ => activation,
        };
        match as_activation {
            Some(act) => {
                if constant != 0.0 {
                    return Err(ParseError::new(
                        arg.span,
                        format!(
                            "{} arguments cannot have a constant term; append a variable fixed at 1 instead",
                            act.name()
                        ),
                    ));
                }
                Expression::from_term(
                    self.n,
                    Term::LinearArg(LinearArgTerm {
                        coeff: 1.0,
                        activation: act,
                        direction,
                        smoothed_sigma: sigma.unwrap_or(0.0),
                    }),
                )
                .map_err(|e| semantic(span, e))
            }
            None => {
                let phase = if func == Func::Sin {
                    constant - FRAC_PI_2
                } else {
                    constant
                };
                self.harmonic_sum(&direction, phase)
                    .map_err(|e| semantic(span, e))
            }
        }
    }

    /// `cos(sum_d k_d x_d + phase)` as a sum of per-axis harmonic products.
    fn harmonic_sum(&self, freqs: &[f64], phase: f64) -> Result<Expression, ExprError> {
        let n = self.n;
        let axes: Vec<(usize, i64)> = freqs
            .iter()
            .enumerate()
            .filter(|(_, &k)| k != 0.0)
            .map(|(d, &k)| (d, k as i64))
            .collect();
        let single = |d: usize, k: i64, phi: f64| {
            let mut fr = vec![0; n];
            let mut ph = vec![0.0; n];
            fr[d] = k;
            ph[d] = phi;
            Expression::from_term(
                n,
                Term::Trig(TrigTerm {
                    coeff: 1.0,
                    freqs: fr,
                    phases: ph,
                    damping: 0.0,
                }),
            )
        };
        let Some((&(d0, k0), rest)) = axes.split_first() else {
            return Ok(Expression::constant(n, phase.cos()));
        };
        let mut cos_acc = single(d0, k0, phase)?;
        let mut sin_acc = single(d0, k0, phase - FRAC_PI_2)?;
        for &(d, k) in rest {
            let c = single(d, k, 0.0)?;
            let s = single(d, k, -FRAC_PI_2)?;
            let next_cos = cos_acc
                .expand_product(&c)?
                .sub(&sin_acc.expand_product(&s)?)?;
            let next_sin = sin_acc
                .expand_product(&c)?
                .add(&cos_acc.expand_product(&s)?)?;
            cos_acc = next_cos;
            sin_acc = next_sin;
        }
        Ok(cos_acc)
    }
}

fn parse_json(src: &str, dimension: Option<usize>) -> Result<Expression, ParseError> {
    let e: Expression = serde_json::from_str(src).map_err(|err| {
        let offset = src
            .lines()
            .take(err.line().saturating_sub(1))
            .map(|l| l.len() + 1)
            .sum::<usize>()
            + err.column().saturating_sub(1);
        let at = offset.min(src.len());
        let at = (0..=at)
            .rev()
            .find(|&i| src.is_char_boundary(i))
            .unwrap_or(0);
        ParseError::new(
            SourceSpan::new(at, at),
            format!("invalid expression JSON: {err}"),
        )
    })?;
    if let Some(n) = dimension {
        if e.dimension() != n {
            return Err(ParseError::new(
                SourceSpan::new(0, src.len()),
                format!("expected dimension {n}, found {}", e.dimension()),
            ));
        }
    }
    Ok(e)
}

fn parse_impl(src: &str, dimension: Option<usize>) -> Result<Expression, ParseError> {
    if src.trim_start().starts_with('{') {
        return parse_json(src, dimension);
    }
    let tokens = lex(src)?;
    if tokens.len() == 1 {
        return Err(ParseError::expecting(
            SourceSpan::new(0, src.len()),
            "empty input",
            &["expression"],
        ));
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let root = p.expr()?;
    if p.peek().tok != Tok::Eof {
        return Err(p.unexpected(&["operator", "end of input"]));
    }
    let (mut vars, mut centers) = (0, 0);
    scan_dimension(&root, &mut vars, &mut centers);
    let n = match dimension {
        Some(n) => {
            if n == 0 {
                return Err(ParseError::new(root.span, "dimension must be positive"));
            }
            if vars > n {
                return Err(ParseError::new(
                    find_var(&root, vars - 1).unwrap_or(root.span),
                    format!("variable x{vars} exceeds the dimension {n}"),
                ));
            }
            n
        }
        None => vars.max(centers).max(1),
    };
    Lowering { n }.lower(&root)
}

/// Parses `src`, inferring the dimension from the highest variable index and
/// the RBF center lengths.
pub fn parse(src: &str) -> Result<Expression, ParseError> {
    parse_impl(src, None)
}

/// Parses `src` as an expression over exactly `dimension` variables.
pub fn parse_in(src: &str, dimension: usize) -> Result<Expression, ParseError> {
    parse_impl(src, Some(dimension))
}

/// Number rendering used by [`print_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrintOptions {
    /// Round to this many significant digits; `None` prints the shortest
    /// representation that reads back to the same `f64`.
    pub significant_digits: Option<usize>,
}

impl PrintOptions {
    pub fn format(&self, x: f64) -> String {
        format_number(x, self.significant_digits)
    }
}

/// Shortest round-trip rendering, or rounded to `digits` significant digits.
pub fn format_number(x: f64, digits: Option<usize>) -> String {
    let x = match digits {
        Some(d) if x != 0.0 && x.is_finite() => format!("{:.*e}", d.saturating_sub(1), x)
            .parse::<f64>()
            .unwrap_or(x),
        _ => x,
    };
    format!("{}", x + 0.0)
}

/// Canonical rendering with full precision; `parse_in(&print(e), e.dimension())`
/// reproduces `e`.
pub fn print(e: &Expression) -> String {
    print_with(e, &PrintOptions::default())
}

pub fn print_with(e: &Expression, opts: &PrintOptions) -> String {
    if e.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, t) in e.terms().iter().enumerate() {
        let (negative, body) = render_term(t, opts);
        match (i, negative) {
            (0, true) => out.push('-'),
            (0, false) => {}
            (_, true) => out.push_str(" - "),
            (_, false) => out.push_str(" + "),
        }
        out.push_str(&body);
    }
    out
}

fn with_coefficient(magnitude: f64, factors: Vec<String>, opts: &PrintOptions) -> String {
    let mut parts = Vec::with_capacity(factors.len() + 1);
    if magnitude != 1.0 || factors.is_empty() {
        parts.push(opts.format(magnitude));
    }
    parts.extend(factors);
    parts.join("*")
}

fn render_linear(coeffs: &[f64], constant: Option<f64>, opts: &PrintOptions) -> String {
    let mut out = String::new();
    for (d, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let var = format!("x{}", d + 1);
        let body = if c.abs() == 1.0 {
            var
        } else {
            format!("{}*{var}", opts.format(c.abs()))
        };
        match (out.is_empty(), c < 0.0) {
            (true, true) => out.push('-'),
            (true, false) => {}
            (false, true) => out.push_str(" - "),
            (false, false) => out.push_str(" + "),
        }
        out.push_str(&body);
    }
    if let Some(c) = constant.filter(|&c| c != 0.0) {
        if out.is_empty() {
            out.push_str(&opts.format(c));
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
            out.push_str(&opts.format(c.abs()));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn render_term(t: &Term, opts: &PrintOptions) -> (bool, String) {
    match t {
        Term::Monomial(m) => {
            let factors = m
                .exponents
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0)
                .map(|(d, &p)| {
                    if p == 1 {
                        format!("x{}", d + 1)
                    } else {
                        format!("x{}^{p}", d + 1)
                    }
                })
                .collect();
            (
                m.coeff < 0.0,
                with_coefficient(m.coeff.abs(), factors, opts),
            )
        }
        Term::Rbf(r) => {
            let center: Vec<String> = r.center.iter().map(|&c| opts.format(c)).collect();
            (
                false,
                format!(
                    "rbf(amp={}, center=[{}], width={})",
                    opts.format(r.amp),
                    center.join(", "),
                    opts.format(r.width)
                ),
            )
        }
        Term::Trig(tr) => {
            let mut coeff = tr.coeff;
            let mut factors = Vec::new();
            for (d, (&k, &phi)) in tr.freqs.iter().zip(&tr.phases).enumerate() {
                if k == 0 {
                    continue;
                }
                let mut one_hot = vec![0.0; tr.freqs.len()];
                one_hot[d] = k as f64;
                if phi == FRAC_PI_2 {
                    // cos(y + pi/2) = -sin(y)
                    coeff = -coeff;
                    factors.push(format!("sin({})", render_linear(&one_hot, None, opts)));
                } else {
                    factors.push(format!("cos({})", render_linear(&one_hot, Some(phi), opts)));
                }
            }
            if tr.damping != 0.0 {
                factors.push(format!("exp({})", opts.format(-tr.damping)));
            }
            (coeff < 0.0, with_coefficient(coeff.abs(), factors, opts))
        }
        Term::LinearArg(l) => {
            let sigma = if l.activation == Activation::Sin || l.smoothed_sigma != 0.0 {
                format!("; sigma={}", opts.format(l.smoothed_sigma))
            } else {
                String::new()
            };
            let call = format!(
                "{}({}{sigma})",
                l.activation.name(),
                render_linear(&l.direction, None, opts)
            );
            (
                l.coeff < 0.0,
                with_coefficient(l.coeff.abs(), vec![call], opts),
            )
        }
    }
}
