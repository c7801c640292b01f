use super::{BinOp, Expr, Func};
use crate::error::{Error, Result};

/// Parses `text` over the variables `x1..x{arity}`. When `arity == 1` the
/// identifier `y` is accepted as an alias for `x1`.
pub fn parse(text: &str, arity: usize) -> Result<Expr> {
    run(text, Names::Indexed(arity))
}

/// Parses `text` with an explicit list of variable names; `names[i]` maps to
/// variable index `i`.
pub fn parse_with_names(text: &str, names: &[&str]) -> Result<Expr> {
    let owned = names.iter().map(|s| s.to_string()).collect();
    run(text, Names::Explicit(owned))
}

enum Names {
    Indexed(usize),
    Explicit(Vec<String>),
}

impl Names {
    fn resolve(&self, ident: &str, pos: usize) -> Result<Expr> {
        match self {
            Names::Indexed(arity) => {
                if ident == "y" && *arity == 1 {
                    return Ok(Expr::Var(0));
                }
                let digits = ident.strip_prefix('x').filter(|d| {
                    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()) && !d.starts_with('0')
                });
                match digits.and_then(|d| d.parse::<usize>().ok()) {
                    Some(k) if k <= *arity => Ok(Expr::Var(k - 1)),
                    Some(_) => Err(Error::VariableOutOfRange {
                        name: ident.to_owned(),
                        arity: *arity,
                    }),
                    None => Err(Error::UnknownIdentifier {
                        name: ident.to_owned(),
                        pos,
                    }),
                }
            }
            Names::Explicit(names) => names
                .iter()
                .position(|n| n == ident)
                .map(Expr::Var)
                .ok_or_else(|| Error::UnknownIdentifier {
                    name: ident.to_owned(),
                    pos,
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    names: Names,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
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
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| Error::Syntax {
                pos: start,
                msg: format!("malformed number `{lit}`"),
            })?;
            out.push((Tok::Num(v, lit.to_owned()), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_owned()), start));
        } else if "+-*/^".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else if c == '(' {
            out.push((Tok::LParen, i));
            i += 1;
        } else if c == ')' {
            out.push((Tok::RParen, i));
            i += 1;
        } else {
            return Err(Error::Syntax {
                pos: i,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let mut base = self.primary()?;
        while self.peek() == &Tok::Op('^') {
            self.bump();
            let pos = self.pos();
            match self.bump() {
                Tok::Num(_, lit) if lit.bytes().all(|b| b.is_ascii_digit()) => {
                    let k: u32 = lit.parse().map_err(|_| Error::Syntax {
                        pos,
                        msg: format!("exponent `{lit}` too large"),
                    })?;
                    base = Expr::Pow(Box::new(base), k);
                }
                _ => {
                    return Err(Error::Syntax {
                        pos,
                        msg: "exponent must be a non-negative integer literal".into(),
                    })
                }
            }
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v, _) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if self.peek() != &Tok::LParen {
                        return self.syntax(format!("expected `(` after `{name}`"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(f, Box::new(arg)))
                } else {
                    self.names.resolve(&name, pos)
                }
            }
            Tok::End => Err(Error::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
            t => Err(Error::Syntax {
                pos,
                msg: format!("unexpected token {t:?}"),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == &Tok::RParen {
            self.bump();
            Ok(())
        } else {
            self.syntax("expected `)`")
        }
    }
}

fn run(text: &str, names: Names) -> Result<Expr> {
    let mut p = Parser {
        toks: tokenize(text)?,
        at: 0,
        names,
    };
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return p.syntax("trailing input");
    }
    Ok(e)
}
