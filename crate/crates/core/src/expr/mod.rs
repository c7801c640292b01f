//! Analytic scalar expressions.
//!
//! The grammar covers numeric literals, the variables `x1..xn` (or `y` for a
//! single-input injection map), `+ - * /`, `^` with a non-negative integer
//! literal exponent, the functions `exp`, `ln` and `sqrt`, and parentheses.
//! An [`Expr`] can be evaluated at a real point or expanded into a
//! [`TruncatedSeries`] about a center point.

mod parse;
mod series;

use std::fmt;

pub use parse::{parse, parse_with_names};
pub use series::{Basis, TruncatedSeries};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Expression tree node. Variables are zero-based indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    /// Largest variable index plus one (0 for constant expressions).
    pub fn min_arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Pow(a, _) => a.min_arity(),
            Expr::Binary(_, a, b) => a.min_arity().max(b.min_arity()),
        }
    }

    /// Evaluates the expression at `x` in IEEE double precision.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Var(i) => x.get(*i).copied().ok_or(Error::DimensionMismatch {
                expected: i + 1,
                got: x.len(),
            }),
            Expr::Neg(a) => Ok(-a.eval(x)?),
            Expr::Call(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Exp => Ok(v.exp()),
                    Func::Ln if v > 0.0 => Ok(v.ln()),
                    Func::Sqrt if v > 0.0 => Ok(v.sqrt()),
                    _ => Err(self.domain_error(format!("argument {v} is not positive"))),
                }
            }
            Expr::Binary(op, a, b) => {
                let (u, v) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => Ok(u + v),
                    BinOp::Sub => Ok(u - v),
                    BinOp::Mul => Ok(u * v),
                    BinOp::Div if v == 0.0 => Err(Error::DivisionByZero {
                        expr: self.to_string(),
                    }),
                    BinOp::Div => Ok(u / v),
                }
            }
            Expr::Pow(a, k) => Ok(a.eval(x)?.powi(*k as i32)),
        }
    }

    /// Taylor expansion about `center`, truncated at total degree `order`.
    pub fn series_eval(&self, center: &[f64], order: usize) -> Result<TruncatedSeries> {
        let n = center.len();
        if self.min_arity() > n {
            return Err(Error::DimensionMismatch {
                expected: self.min_arity(),
                got: n,
            });
        }
        self.series_rec(center, order)
    }

    fn series_rec(&self, center: &[f64], order: usize) -> Result<TruncatedSeries> {
        let n = center.len();
        match self {
            Expr::Const(c) => Ok(TruncatedSeries::constant(n, order, *c)),
            Expr::Var(i) => {
                let mut s = TruncatedSeries::variable(n, order, *i);
                s.add_constant(center[*i]);
                Ok(s)
            }
            Expr::Neg(a) => Ok(a.series_rec(center, order)?.scale(-1.0)),
            Expr::Call(f, a) => {
                let s = a.series_rec(center, order)?;
                let c = s.constant_term();
                let r = match f {
                    Func::Exp => Ok(s.exp()),
                    Func::Ln => s.ln(),
                    Func::Sqrt => s.sqrt(),
                };
                r.map_err(|_| self.domain_error(format!("argument {c} at center is not positive")))
            }
            Expr::Binary(op, a, b) => {
                let (u, v) = (a.series_rec(center, order)?, b.series_rec(center, order)?);
                match op {
                    BinOp::Add => Ok(&u + &v),
                    BinOp::Sub => Ok(&u - &v),
                    BinOp::Mul => Ok(&u * &v),
                    BinOp::Div => {
                        let inv = v.recip().map_err(|_| Error::DivisionByZero {
                            expr: self.to_string(),
                        })?;
                        Ok(&u * &inv)
                    }
                }
            }
            Expr::Pow(a, k) => Ok(a.series_rec(center, order)?.powi(*k)),
        }
    }

    fn domain_error(&self, msg: String) -> Error {
        Error::Domain {
            expr: self.to_string(),
            msg,
        }
    }

    /// Canonical text using the supplied variable names.
    pub fn to_string_with(&self, names: &[&str]) -> String {
        let mut out = String::new();
        self.write(&mut out, names, 0);
        out
    }

    fn write(&self, out: &mut String, names: &[&str], parent_prec: u8) {
        match self {
            Expr::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    out.push('(');
                    out.push_str(&format!("{c:?}"));
                    out.push(')');
                } else {
                    out.push_str(&fmt_number(*c));
                }
            }
            Expr::Var(i) => match names.get(*i) {
                Some(name) => out.push_str(name),
                None => out.push_str(&format!("x{}", i + 1)),
            },
            Expr::Neg(a) => {
                let wrap = parent_prec > 1;
                if wrap {
                    out.push('(');
                }
                out.push('-');
                a.write(out, names, 3);
                if wrap {
                    out.push(')');
                }
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(out, names, 0);
                out.push(')');
            }
            Expr::Binary(op, a, b) => {
                let prec = op.precedence();
                let wrap = prec < parent_prec;
                if wrap {
                    out.push('(');
                }
                a.write(out, names, prec);
                out.push_str(op.symbol());
                // Right operand of a left-associative operator binds tighter.
                b.write(out, names, prec + 1);
                if wrap {
                    out.push(')');
                }
            }
            Expr::Pow(a, k) => {
                a.write(out, names, 4);
                out.push('^');
                out.push_str(&k.to_string());
            }
        }
    }
}

fn fmt_number(c: f64) -> String {
    // `{:?}` is the shortest round-trip form; trim the `.0` the parser doesn't need.
    let s = format!("{c:?}");
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_string_with(&[]))
    }
}

/// Evaluates a vector of expressions, tagging failures with the component.
pub fn eval_all(exprs: &[Expr], x: &[f64]) -> Result<Vec<f64>> {
    exprs
        .iter()
        .enumerate()
        .map(|(i, e)| e.eval(x).map_err(|err| err.in_component(i)))
        .collect()
}
