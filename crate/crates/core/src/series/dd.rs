//! Double-double series arithmetic for the coefficient equations.
//!
//! The degree-N operators can be badly conditioned near resonances, so the
//! plant series and the equation residual are carried in roughly 106-bit
//! precision while the linear solves stay in `f64`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{BinOp, Basis, Expr, Func, TruncatedSeries};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_zero(self) -> bool {
        self.hi == 0.0
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = quick_two_sum(s, e + t);
        quick_two_sum(r.hi, r.lo + f)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        quick_two_sum(p, e)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        let q = quick_two_sum(q1, q2);
        q.add(Dd::from(q3))
    }

    pub fn sqrt(self) -> Dd {
        let x = self.hi.sqrt();
        let r = self.sub(Dd::from(x).mul(Dd::from(x)));
        quick_two_sum(x, r.hi / (2.0 * x))
    }

    pub fn exp(self) -> Dd {
        let k = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.mul(Dd::from(k)));
        // |r| <= ln2 / 2, so 27 Taylor terms reach double-double accuracy.
        let mut acc = Dd::ONE;
        for j in (1..=27).rev() {
            acc = acc.mul(r).div(Dd::from(j as f64)).add(Dd::ONE);
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: acc.hi * scale,
            lo: acc.lo * scale,
        }
    }

    pub fn ln(self) -> Dd {
        let y = Dd::from(self.hi.ln());
        // One Newton step on exp(y) = a.
        y.add(self.mul(y.neg().exp())).sub(Dd::ONE)
    }

    fn powi(self, k: u32) -> Dd {
        (0..k).fold(Dd::ONE, |acc, _| acc.mul(self))
    }
}

/// Truncated multivariate series with double-double coefficients.
#[derive(Debug, Clone)]
pub struct DdSeries {
    basis: Arc<Basis>,
    coeffs: Vec<Dd>,
}

impl DdSeries {
    pub fn constant(basis: &Arc<Basis>, c: Dd) -> Self {
        let mut coeffs = vec![Dd::ZERO; basis.len()];
        coeffs[0] = c;
        DdSeries {
            basis: basis.clone(),
            coeffs,
        }
    }

    pub fn to_f64(&self) -> TruncatedSeries {
        let c = self.coeffs.iter().map(|v| v.to_f64()).collect();
        TruncatedSeries::from_coeffs(self.basis.n(), self.basis.order(), c).expect("matching basis")
    }

    pub fn constant_term(&self) -> Dd {
        self.coeffs[0]
    }

    pub fn drop_constant(&mut self) {
        self.coeffs[0] = Dd::ZERO;
    }

    pub fn coeff(&self, i: usize) -> Dd {
        self.coeffs[i]
    }

    fn zip(&self, o: &Self, f: impl Fn(Dd, Dd) -> Dd) -> Self {
        DdSeries {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, Dd::add)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, Dd::sub)
    }

    pub fn scale(&self, c: Dd) -> Self {
        DdSeries {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|v| v.mul(c)).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut coeffs = vec![Dd::ZERO; self.coeffs.len()];
        for &(i, j, k) in self.basis.products() {
            let (a, b) = (self.coeffs[i as usize], o.coeffs[j as usize]);
            if !a.is_zero() && !b.is_zero() {
                coeffs[k as usize] = coeffs[k as usize].add(a.mul(b));
            }
        }
        DdSeries {
            basis: self.basis.clone(),
            coeffs,
        }
    }

    fn compose_univariate(&self, taylor: &[Dd]) -> Self {
        let mut rest = self.clone();
        rest.drop_constant();
        let order = self.basis.order();
        let mut acc = DdSeries::constant(&self.basis, taylor[order]);
        for k in (0..order).rev() {
            acc = acc.mul(&rest);
            acc.coeffs[0] = acc.coeffs[0].add(taylor[k]);
        }
        acc
    }

    fn exp(&self) -> Self {
        let ec = self.constant_term().exp();
        let mut t = vec![ec];
        for k in 1..=self.basis.order() {
            let prev = t[k - 1];
            t.push(prev.div(Dd::from(k as f64)));
        }
        self.compose_univariate(&t)
    }

    fn ln(&self) -> Self {
        let c = self.constant_term();
        let mut t = vec![c.ln()];
        for k in 1..=self.basis.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(Dd::from(sign).div(Dd::from(k as f64).mul(c.powi(k as u32))));
        }
        self.compose_univariate(&t)
    }

    fn sqrt(&self) -> Self {
        let c = self.constant_term();
        let sc = c.sqrt();
        let mut t = vec![sc];
        let mut binom = Dd::ONE;
        for k in 1..=self.basis.order() {
            binom = binom.mul(Dd::from(0.5 - (k as f64 - 1.0))).div(Dd::from(k as f64));
            t.push(sc.mul(binom).div(c.powi(k as u32)));
        }
        self.compose_univariate(&t)
    }

    fn recip(&self) -> Self {
        let c = self.constant_term();
        let inv = Dd::ONE.div(c);
        let mut t = vec![inv];
        for k in 1..=self.basis.order() {
            let prev = t[k - 1];
            t.push(prev.mul(inv).neg());
        }
        self.compose_univariate(&t)
    }

    fn powi(&self, k: u32) -> Self {
        let mut out = DdSeries::constant(&self.basis, Dd::ONE);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Powers `self^0 ..= self^order`.
    fn powers(&self) -> Vec<DdSeries> {
        let mut pw = vec![DdSeries::constant(&self.basis, Dd::ONE)];
        for k in 1..=self.basis.order() {
            let next = pw[k - 1].mul(self);
            pw.push(next);
        }
        pw
    }

    /// Substitutes `args` into a polynomial given over `self`'s variables.
    pub fn compose(&self, args: &[DdSeries]) -> DdSeries {
        let target = &args[0].basis;
        let powers: Vec<Vec<DdSeries>> = args.iter().map(|a| a.powers()).collect();
        let mut out = DdSeries::constant(target, Dd::ZERO);
        for (c, e) in self.coeffs.iter().zip(self.basis.exponents()) {
            if c.is_zero() {
                continue;
            }
            let mut term = DdSeries::constant(target, *c);
            for (v, &ev) in e.iter().enumerate() {
                if ev > 0 {
                    term = term.mul(&powers[v][ev as usize]);
                }
            }
            out = out.add(&term);
        }
        out
    }
}

/// Taylor expansion of `expr` about `center` in double-double arithmetic.
/// Domain checks mirror [`Expr::series_eval`], which callers run first.
pub fn series_eval(expr: &Expr, center: &[f64], order: usize) -> Result<DdSeries> {
    let basis = Basis::get(center.len(), order);
    eval_rec(expr, center, &basis)
}

fn eval_rec(expr: &Expr, center: &[f64], basis: &Arc<Basis>) -> Result<DdSeries> {
    Ok(match expr {
        Expr::Const(c) => DdSeries::constant(basis, Dd::from(*c)),
        Expr::Var(i) => {
            let mut s = DdSeries::constant(basis, Dd::from(center[*i]));
            let mut e = vec![0u32; center.len()];
            e[*i] = 1;
            let idx = basis.index_of(&e).expect("degree-1 monomial");
            if basis.order() >= 1 {
                s.coeffs[idx] = Dd::ONE;
            }
            s
        }
        Expr::Neg(a) => eval_rec(a, center, basis)?.scale(Dd::from(-1.0)),
        Expr::Call(f, a) => {
            let s = eval_rec(a, center, basis)?;
            let c = s.constant_term().to_f64();
            if *f != Func::Exp && !(c > 0.0) {
                return Err(Error::Domain {
                    expr: expr.to_string(),
                    msg: format!("argument {c} at center is not positive"),
                });
            }
            match f {
                Func::Exp => s.exp(),
                Func::Ln => s.ln(),
                Func::Sqrt => s.sqrt(),
            }
        }
        Expr::Binary(op, a, b) => {
            let (u, v) = (eval_rec(a, center, basis)?, eval_rec(b, center, basis)?);
            match op {
                BinOp::Add => u.add(&v),
                BinOp::Sub => u.sub(&v),
                BinOp::Mul => u.mul(&v),
                BinOp::Div => {
                    if v.constant_term().is_zero() {
                        return Err(Error::DivisionByZero {
                            expr: expr.to_string(),
                        });
                    }
                    u.mul(&v.recip())
                }
            }
        }
        Expr::Pow(a, k) => eval_rec(a, center, basis)?.powi(*k),
    })
}

/// Evaluates `T(phi) - A T - b(h)` with `phi` powers computed once.
pub struct ResidualEvaluator {
    phi_powers: Vec<Vec<DdSeries>>,
    injection: Vec<DdSeries>,
    a: Matrix,
}

impl ResidualEvaluator {
    pub fn new(phi: &[DdSeries], injection: Vec<DdSeries>, a: &Matrix) -> Self {
        ResidualEvaluator {
            phi_powers: phi.iter().map(|p| p.powers()).collect(),
            injection,
            a: a.clone(),
        }
    }

    /// Degree-`degree` coefficients, component-major, rounded to `f64`.
    pub fn block(&self, t: &[TruncatedSeries], degree: usize) -> Vec<f64> {
        let basis = t[0].basis().clone();
        let range = basis.degree_range(degree);
        let n = t.len();
        let mut out = Vec::with_capacity(n * range.len());
        for i in 0..n {
            let mut acc = DdSeries::constant(&basis, Dd::ZERO);
            for (c, e) in t[i].coeffs().iter().zip(basis.exponents()) {
                if *c == 0.0 {
                    continue;
                }
                let mut term = DdSeries::constant(&basis, Dd::from(*c));
                for (v, &ev) in e.iter().enumerate() {
                    if ev > 0 {
                        term = term.mul(&self.phi_powers[v][ev as usize]);
                    }
                }
                acc = acc.add(&term);
            }
            for idx in range.clone() {
                let mut v = acc.coeffs[idx].sub(self.injection[i].coeffs[idx]);
                for k in 0..n {
                    v = v.sub(Dd::from(self.a[(i, k)]).mul(Dd::from(t[k].coeffs()[idx])));
                }
                out.push(v.to_f64());
            }
        }
        out
    }
}
