//! Closed-form diffusion coefficients `a(r)` typed in by the user.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | 'r' | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := exp | ln | sqrt | pow
//! ```
//!
//! `^` binds tighter than unary minus, so `-2^2 = -4` while `2^-2 = 0.25`.

use std::fmt;
use std::iter::Peekable;
use std::str::CharIndices;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{name}` at byte {pos}")]
    UnknownIdent { pos: usize, name: String },
    #[error("function `{name}` takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("domain error at r = {r:e}: {msg}")]
    Domain { r: f64, msg: String },
    #[error("overflow at r = {r:e}")]
    Overflow { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sqrt" => Some(Func::Sqrt),
            "pow" => Some(Func::Pow),
            _ => None,
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Pow => "pow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Parsed expression in the single free variable `r`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTree {
    root: Node,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    chars: Peekable<CharIndices<'a>>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().peekable(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, ExprError> {
        let mut out = Vec::new();
        while let Some(&(pos, c)) = self.chars.peek() {
            if c.is_whitespace() {
                self.chars.next();
                continue;
            }
            let tok = match c {
                '0'..='9' | '.' => self.number(pos)?,
                'a'..='z' | 'A'..='Z' | '_' => {
                    let mut end = pos;
                    while let Some(&(i, c)) = self.chars.peek() {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            end = i + c.len_utf8();
                            self.chars.next();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(self.src[pos..end].to_string())
                }
                '+' | '-' | '*' | '/' | '^' => {
                    self.chars.next();
                    Tok::Op(c)
                }
                '(' => {
                    self.chars.next();
                    Tok::LParen
                }
                ')' => {
                    self.chars.next();
                    Tok::RParen
                }
                ',' => {
                    self.chars.next();
                    Tok::Comma
                }
                other => {
                    return Err(ExprError::Syntax {
                        pos,
                        msg: format!("unexpected character `{other}`"),
                    })
                }
            };
            out.push((pos, tok));
        }
        out.push((self.src.len(), Tok::End));
        Ok(out)
    }

    fn number(&mut self, start: usize) -> Result<Tok, ExprError> {
        let mut end = start;
        let mut seen_exp = false;
        let mut prev = ' ';
        while let Some(&(i, c)) = self.chars.peek() {
            let take = c.is_ascii_digit()
                || c == '.'
                || (!seen_exp && (c == 'e' || c == 'E'))
                || ((c == '+' || c == '-') && (prev == 'e' || prev == 'E'));
            if !take {
                break;
            }
            if c == 'e' || c == 'E' {
                seen_exp = true;
            }
            prev = c;
            end = i + 1;
            self.chars.next();
        }
        let text = &self.src[start..end];
        text.parse::<f64>()
            .map(Tok::Num)
            .map_err(|_| ExprError::Syntax {
                pos: start,
                msg: format!("malformed number `{text}`"),
            })
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].1
    }

    fn pos(&self) -> usize {
        self.toks[self.idx].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].1.clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                pos: self.pos(),
                msg: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) if name == "r" => Ok(Node::Var),
            Tok::Ident(name) => {
                let func =
                    Func::lookup(&name).ok_or(ExprError::UnknownIdent { pos, name: name.clone() })?;
                self.expect(Tok::LParen, "`(` after function name")?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen, "`)` closing the argument list")?;
                if args.len() != func.arity() {
                    return Err(ExprError::Arity {
                        name,
                        expected: func.arity(),
                        got: args.len(),
                    });
                }
                Ok(Node::Call(func, args))
            }
            Tok::End => Err(ExprError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            other => Err(ExprError::Syntax {
                pos,
                msg: format!("unexpected token {other:?}"),
            }),
        }
    }
}

/// Parse coefficient text such as `"(1+r)^-2"` or `"(1+r)/r^2.5"`.
pub fn parse_coefficient(text: &str) -> Result<ExpressionTree, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "empty expression".into(),
        });
    }
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser { toks, idx: 0 };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(ExprError::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(ExpressionTree {
        root,
        source: text.to_string(),
    })
}

fn checked(r: f64, v: f64) -> Result<f64, ExprError> {
    if v.is_finite() {
        Ok(v)
    } else if v.is_nan() {
        Err(ExprError::Domain {
            r,
            msg: "result is not a number".into(),
        })
    } else {
        Err(ExprError::Overflow { r })
    }
}

fn eval_node(node: &Node, r: f64) -> Result<f64, ExprError> {
    match node {
        Node::Num(v) => Ok(*v),
        Node::Var => Ok(r),
        Node::Neg(inner) => Ok(-eval_node(inner, r)?),
        Node::Bin(op, lhs, rhs) => {
            let x = eval_node(lhs, r)?;
            let y = eval_node(rhs, r)?;
            match op {
                BinOp::Add => checked(r, x + y),
                BinOp::Sub => checked(r, x - y),
                BinOp::Mul => checked(r, x * y),
                BinOp::Div => {
                    if y == 0.0 {
                        return Err(ExprError::Domain {
                            r,
                            msg: "division by zero".into(),
                        });
                    }
                    checked(r, x / y)
                }
                BinOp::Pow => power(r, x, y),
            }
        }
        Node::Call(func, args) => {
            let x = eval_node(&args[0], r)?;
            match func {
                Func::Exp => checked(r, x.exp()),
                Func::Ln => {
                    if x <= 0.0 {
                        return Err(ExprError::Domain {
                            r,
                            msg: format!("ln of non-positive value {x:e}"),
                        });
                    }
                    Ok(x.ln())
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(ExprError::Domain {
                            r,
                            msg: format!("sqrt of negative value {x:e}"),
                        });
                    }
                    Ok(x.sqrt())
                }
                Func::Pow => power(r, x, eval_node(&args[1], r)?),
            }
        }
    }
}

fn power(r: f64, base: f64, exp: f64) -> Result<f64, ExprError> {
    if base == 0.0 && exp < 0.0 {
        return Err(ExprError::Domain {
            r,
            msg: "zero raised to a negative power".into(),
        });
    }
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(ExprError::Domain {
            r,
            msg: format!("negative base {base:e} with non-integer exponent {exp}"),
        });
    }
    checked(r, base.powf(exp))
}

impl ExpressionTree {
    /// Evaluate at `r`. Non-finite intermediate results are reported, never returned.
    pub fn evaluate(&self, r: f64) -> Result<f64, ExprError> {
        eval_node(&self.root, r)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

fn write_node(node: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match node {
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var => write!(f, "r"),
        Node::Neg(inner) => {
            write!(f, "(-")?;
            write_node(inner, f)?;
            write!(f, ")")
        }
        Node::Bin(op, lhs, rhs) => {
            let sym = match op {
                BinOp::Add => '+',
                BinOp::Sub => '-',
                BinOp::Mul => '*',
                BinOp::Div => '/',
                BinOp::Pow => '^',
            };
            write!(f, "(")?;
            write_node(lhs, f)?;
            write!(f, " {sym} ")?;
            write_node(rhs, f)?;
            write!(f, ")")
        }
        Node::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_node(a, f)?;
            }
            write!(f, ")")
        }
    }
}

/// Fully parenthesised rendering; re-parses to an equivalent tree.
impl fmt::Display for ExpressionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub samples: usize,
    /// Sample points where the value was `<= 0`.
    pub failures: Vec<(f64, f64)>,
}

impl PositivityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Sample on a log grid of `[r_min, r_max]` and list every point where `a(r) <= 0`.
pub fn validate_positivity(
    tree: &ExpressionTree,
    r_min: f64,
    r_max: f64,
    samples: usize,
) -> Result<PositivityReport, ExprError> {
    if !(r_min > 0.0 && r_min < r_max) || samples < 2 {
        return Err(ExprError::Domain {
            r: r_min,
            msg: format!("need 0 < r_min < r_max and samples >= 2, got [{r_min}, {r_max}], {samples}"),
        });
    }
    let mut failures = Vec::new();
    for r in log_space(r_min, r_max, samples) {
        let v = tree.evaluate(r)?;
        if v <= 0.0 {
            failures.push((r, v));
        }
    }
    Ok(PositivityReport { samples, failures })
}
