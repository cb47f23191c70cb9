//! Expression trees over state variables `x1..xn` and noise variables
//! `w1..wn`, with a recursive-descent parser.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' integer)?
//! base   := number | 'x'index | 'w'index | func '(' expr ')' | '(' expr ')' | '-' base
//! func   := sin | cos | exp | sqrt | abs
//! ```

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::Interval;

use super::interval as iv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

/// Variable indices are zero-based internally; `x1` is `State(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    State(usize),
    Noise(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Pointwise evaluation. Errors carry a plain message; the caller adds
    /// the component context.
    pub fn eval(&self, x: &[f64], w: &[f64]) -> std::result::Result<f64, String> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::State(i) => x[*i],
            Expr::Noise(i) => w[*i],
            Expr::Neg(a) => -a.eval(x, w)?,
            Expr::Add(a, b) => a.eval(x, w)? + b.eval(x, w)?,
            Expr::Sub(a, b) => a.eval(x, w)? - b.eval(x, w)?,
            Expr::Mul(a, b) => a.eval(x, w)? * b.eval(x, w)?,
            Expr::Div(a, b) => {
                let den = b.eval(x, w)?;
                if den == 0.0 {
                    return Err("division by zero".into());
                }
                a.eval(x, w)? / den
            }
            Expr::Pow(a, k) => a.eval(x, w)?.powi(*k as i32),
            Expr::Call(f, a) => {
                let v = a.eval(x, w)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(format!("sqrt of negative value {v}"));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    /// Natural interval extension over `x in xbox`, `w in wbox`.
    pub fn eval_interval(
        &self,
        xbox: &[Interval],
        wbox: &[Interval],
    ) -> std::result::Result<Interval, String> {
        Ok(match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::State(i) => xbox[*i],
            Expr::Noise(i) => wbox
                .get(*i)
                .copied()
                .ok_or_else(|| format!("noise variable w{} has no range", i + 1))?,
            Expr::Neg(a) => iv::neg(a.eval_interval(xbox, wbox)?),
            Expr::Add(a, b) => iv::add(a.eval_interval(xbox, wbox)?, b.eval_interval(xbox, wbox)?),
            Expr::Sub(a, b) => iv::sub(a.eval_interval(xbox, wbox)?, b.eval_interval(xbox, wbox)?),
            Expr::Mul(a, b) => iv::mul(a.eval_interval(xbox, wbox)?, b.eval_interval(xbox, wbox)?),
            Expr::Div(a, b) => iv::div(a.eval_interval(xbox, wbox)?, b.eval_interval(xbox, wbox)?)?,
            Expr::Pow(a, k) => iv::powi(a.eval_interval(xbox, wbox)?, *k),
            Expr::Call(f, a) => {
                let v = a.eval_interval(xbox, wbox)?;
                match f {
                    Func::Sin => iv::sin(v),
                    Func::Cos => iv::cos(v),
                    Func::Exp => iv::exp(v),
                    Func::Sqrt => iv::sqrt(v)?,
                    Func::Abs => iv::abs(v),
                }
            }
        })
    }

    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::State(_) | Expr::Noise(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.visit(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Sorted, deduplicated zero-based indices of noise variables used.
    pub fn noise_vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Noise(i) = e {
                out.push(*i);
            }
        });
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn max_state_var(&self) -> Option<usize> {
        let mut out = None;
        self.visit(&mut |e| {
            if let Expr::State(i) = e {
                out = Some(out.map_or(*i, |m: usize| m.max(*i)));
            }
        });
        out
    }

    pub fn has_noise(&self) -> bool {
        !self.noise_vars().is_empty()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::State(i) => write!(f, "x{}", i + 1),
            Expr::Noise(i) => write!(f, "w{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Parses one expression. `line` is used only for error positions.
pub fn parse_expr(text: &str, line: usize) -> Result<Expr> {
    let mut p = Parser {
        lex: Lexer {
            src: text.as_bytes(),
            pos: 0,
        },
        line,
        tok: Tok::End,
        tok_start: 0,
    };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.error(format!("unexpected {}", describe(&p.tok))));
    }
    Ok(e)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    line: usize,
    tok: Tok,
    tok_start: usize,
}

impl Parser<'_> {
    fn error(&self, message: String) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.tok_start + 1,
            message,
        }
    }

    fn advance(&mut self) -> Result<()> {
        let src = self.lex.src;
        while self.lex.pos < src.len() && src[self.lex.pos].is_ascii_whitespace() {
            self.lex.pos += 1;
        }
        self.tok_start = self.lex.pos;
        if self.lex.pos >= src.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = src[self.lex.pos];
        if c.is_ascii_digit() || c == b'.' {
            let start = self.lex.pos;
            let mut i = start;
            while i < src.len() && (src[i].is_ascii_digit() || src[i] == b'.') {
                i += 1;
            }
            if i < src.len() && (src[i] == b'e' || src[i] == b'E') {
                let mut j = i + 1;
                if j < src.len() && (src[j] == b'+' || src[j] == b'-') {
                    j += 1;
                }
                if j < src.len() && src[j].is_ascii_digit() {
                    while j < src.len() && src[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = std::str::from_utf8(&src[start..i]).expect("ascii slice");
            self.lex.pos = i;
            self.tok = Tok::Num(
                text.parse()
                    .map_err(|_| self.error(format!("malformed number `{text}`")))?,
            );
            return Ok(());
        }
        if c.is_ascii_alphabetic() {
            let start = self.lex.pos;
            let mut i = start;
            while i < src.len() && src[i].is_ascii_alphanumeric() {
                i += 1;
            }
            self.lex.pos = i;
            self.tok = Tok::Ident(std::str::from_utf8(&src[start..i]).unwrap().to_string());
            return Ok(());
        }
        if b"+-*/^()".contains(&c) {
            self.lex.pos += 1;
            self.tok = Tok::Op(c as char);
            return Ok(());
        }
        Err(self.error(format!("unexpected character `{}`", c as char)))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Tok::Op(op @ ('+' | '-')) = self.tok {
            self.advance()?;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Tok::Op(op @ ('*' | '/')) = self.tok {
            self.advance()?;
            let rhs = self.factor()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if self.tok == Tok::Op('^') {
            self.advance()?;
            let k = match self.tok {
                Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => v as u32,
                _ => {
                    return Err(self.error(format!(
                        "exponent must be a non-negative integer, found {}",
                        describe(&self.tok)
                    )))
                }
            };
            self.advance()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Const(v))
            }
            Tok::Op('-') => {
                self.advance()?;
                Ok(Expr::Neg(Box::new(self.base()?)))
            }
            Tok::Op('(') => {
                self.advance()?;
                let e = self.expr()?;
                self.expect_close()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.advance()?;
                    if self.tok != Tok::Op('(') {
                        return Err(self.error(format!("expected `(` after `{name}`")));
                    }
                    self.advance()?;
                    let arg = self.expr()?;
                    self.expect_close()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                let var = self.variable(&name)?;
                self.advance()?;
                Ok(var)
            }
            other => Err(self.error(format!("expected an operand, found {}", describe(&other)))),
        }
    }

    fn variable(&self, name: &str) -> Result<Expr> {
        let (kind, digits) = name.split_at(1);
        let index: usize = digits
            .parse()
            .ok()
            .filter(|&i| i >= 1)
            .ok_or_else(|| self.error(format!("unknown identifier `{name}`")))?;
        match kind {
            "x" => Ok(Expr::State(index - 1)),
            "w" => Ok(Expr::Noise(index - 1)),
            _ => Err(self.error(format!("unknown identifier `{name}`"))),
        }
    }

    fn expect_close(&mut self) -> Result<()> {
        if self.tok != Tok::Op(')') {
            return Err(self.error(format!("expected `)`, found {}", describe(&self.tok))));
        }
        self.advance()
    }
}
