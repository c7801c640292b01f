use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

use crate::error::{Error, Result};

/// Monomial basis for `n` variables up to total degree `order`, in graded
/// lexicographic order: ascending total degree, and within one degree the
/// exponent tuples in descending lexicographic order (`x1^2, x1 x2, x2^2`).
pub struct Basis {
    n: usize,
    order: usize,
    exponents: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    degree_start: Vec<usize>,
    /// `(i, j, k)` with `e_i + e_j = e_k` and total degree within `order`.
    products: Vec<(u32, u32, u32)>,
}

static BASES: Lazy<Mutex<HashMap<(usize, usize), Arc<Basis>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn exponents_of_degree(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == n {
        prefix.push(d);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=d).rev() {
        prefix.push(first);
        exponents_of_degree(n, d - first, prefix, out);
        prefix.pop();
    }
}

impl Basis {
    pub fn get(n: usize, order: usize) -> Arc<Basis> {
        let mut cache = BASES.lock().unwrap();
        cache
            .entry((n, order))
            .or_insert_with(|| Arc::new(Basis::build(n, order)))
            .clone()
    }

    fn build(n: usize, order: usize) -> Basis {
        let mut exponents = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(exponents.len());
            if n == 0 {
                if d == 0 {
                    exponents.push(Vec::new());
                }
            } else {
                exponents_of_degree(n, d as u32, &mut Vec::new(), &mut exponents);
            }
        }
        degree_start.push(exponents.len());
        let index: HashMap<_, _> = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let mut products = Vec::new();
        let mut sum = vec![0u32; n];
        for (i, a) in exponents.iter().enumerate() {
            for (j, b) in exponents.iter().enumerate() {
                let deg: u32 = a.iter().chain(b.iter()).sum();
                if deg as usize > order {
                    continue;
                }
                for v in 0..n {
                    sum[v] = a[v] + b[v];
                }
                products.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        Basis {
            n,
            order,
            exponents,
            index,
            degree_start,
            products,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, i: usize) -> &[u32] {
        &self.exponents[i]
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.index.get(exponent).copied()
    }

    /// Triples `(i, j, k)` with `e_i + e_j = e_k` within the order.
    pub fn products(&self) -> &[(u32, u32, u32)] {
        &self.products
    }

    /// Index range of the monomials of total degree `d`.
    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        if d > self.order {
            return self.len()..self.len();
        }
        self.degree_start[d]..self.degree_start[d + 1]
    }
}

impl std::fmt::Debug for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Basis")
            .field("n", &self.n)
            .field("order", &self.order)
            .finish()
    }
}

/// Multivariate Taylor polynomial truncated at total degree `order`.
#[derive(Clone, Debug)]
pub struct TruncatedSeries {
    basis: Arc<Basis>,
    coeffs: Vec<f64>,
}

impl PartialEq for TruncatedSeries {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && self.order() == other.order() && self.coeffs == other.coeffs
    }
}

impl TruncatedSeries {
    pub fn zero(n: usize, order: usize) -> Self {
        let basis = Basis::get(n, order);
        let coeffs = vec![0.0; basis.len()];
        TruncatedSeries { basis, coeffs }
    }

    pub fn constant(n: usize, order: usize, c: f64) -> Self {
        let mut s = Self::zero(n, order);
        s.coeffs[0] = c;
        s
    }

    /// The series of `x_{index+1}` (a pure displacement, zero constant term).
    pub fn variable(n: usize, order: usize, index: usize) -> Self {
        let mut s = Self::zero(n, order);
        if order >= 1 {
            let mut e = vec![0; n];
            e[index] = 1;
            let k = s.basis.index_of(&e).unwrap();
            s.coeffs[k] = 1.0;
        }
        s
    }

    pub fn from_coeffs(n: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        let basis = Basis::get(n, order);
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(TruncatedSeries { basis, coeffs })
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient of the monomial with the given exponent; 0 when the
    /// exponent exceeds the truncation order.
    pub fn coeff(&self, exponent: &[u32]) -> f64 {
        self.basis
            .index_of(exponent)
            .map_or(0.0, |i| self.coeffs[i])
    }

    pub fn set_coeff(&mut self, exponent: &[u32], value: f64) -> Result<()> {
        let i = self.basis.index_of(exponent).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "exponent {exponent:?} outside basis (n={}, order={})",
                self.n(),
                self.order()
            ))
        })?;
        self.coeffs[i] = value;
        Ok(())
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn add_constant(&mut self, c: f64) {
        self.coeffs[0] += c;
    }

    pub fn scale(mut self, c: f64) -> Self {
        self.coeffs.iter_mut().for_each(|v| *v *= c);
        self
    }

    fn check_same(&self, other: &Self) {
        assert!(
            self.n() == other.n() && self.order() == other.order(),
            "series arithmetic over mismatched (n, order): ({}, {}) vs ({}, {})",
            self.n(),
            self.order(),
            other.n(),
            other.order()
        );
    }

    /// Part of total degree exactly `d`.
    pub fn degree_part(&self, d: usize) -> &[f64] {
        &self.coeffs[self.basis.degree_range(d)]
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut result = Self::constant(self.n(), self.order(), 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// `f(self)` from the univariate Taylor coefficients `taylor[k]` of `f`
    /// about the constant term, evaluated by Horner's rule on the
    /// zero-constant remainder.
    fn compose_univariate(&self, taylor: &[f64]) -> Self {
        let mut rest = self.clone();
        rest.coeffs[0] = 0.0;
        let order = self.order();
        let mut acc = Self::constant(self.n(), order, taylor[order]);
        for k in (0..order).rev() {
            acc = &acc * &rest;
            acc.coeffs[0] += taylor[k];
        }
        acc
    }

    pub fn exp(&self) -> Self {
        let c = self.constant_term();
        let ec = c.exp();
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut fact = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                fact *= k as f64;
            }
            t.push(ec / fact);
        }
        self.compose_univariate(&t)
    }

    pub fn ln(&self) -> Result<Self> {
        let c = self.constant_term();
        if c <= 0.0 {
            return Err(Error::Domain {
                expr: "ln".into(),
                msg: format!("constant term {c} is not positive"),
            });
        }
        let mut t = vec![c.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign / (k as f64 * c.powi(k as i32)));
        }
        Ok(self.compose_univariate(&t))
    }

    pub fn sqrt(&self) -> Result<Self> {
        let c = self.constant_term();
        if c <= 0.0 {
            return Err(Error::Domain {
                expr: "sqrt".into(),
                msg: format!("constant term {c} is not positive"),
            });
        }
        // sqrt(c + u) = sqrt(c) * sum_k binom(1/2, k) (u/c)^k
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        let sc = c.sqrt();
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (0.5 - (k as f64 - 1.0)) / k as f64;
            }
            t.push(sc * binom / c.powi(k as i32));
        }
        Ok(self.compose_univariate(&t))
    }

    pub fn recip(&self) -> Result<Self> {
        let c = self.constant_term();
        if c == 0.0 {
            return Err(Error::DivisionByZero {
                expr: "recip".into(),
            });
        }
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut v = 1.0 / c;
        for _ in 0..=self.order() {
            t.push(v);
            v *= -1.0 / c;
        }
        Ok(self.compose_univariate(&t))
    }

    /// Evaluates the polynomial at displacement `dx` from the expansion center.
    pub fn eval_at(&self, dx: &[f64]) -> f64 {
        let n = self.n();
        let order = self.order();
        // powers[v][p] = dx[v]^p
        let mut powers = vec![vec![1.0; order + 1]; n];
        for v in 0..n {
            for p in 1..=order {
                powers[v][p] = powers[v][p - 1] * dx[v];
            }
        }
        let mut total = 0.0;
        for (c, e) in self.coeffs.iter().zip(self.basis.exponents.iter()) {
            if *c == 0.0 {
                continue;
            }
            let mut m = *c;
            for v in 0..n {
                m *= powers[v][e[v] as usize];
            }
            total += m;
        }
        total
    }

    /// Gradient of the polynomial at displacement `dx`.
    pub fn gradient_at(&self, dx: &[f64]) -> Vec<f64> {
        let n = self.n();
        let order = self.order();
        let mut powers = vec![vec![1.0; order + 1]; n];
        for v in 0..n {
            for p in 1..=order {
                powers[v][p] = powers[v][p - 1] * dx[v];
            }
        }
        let mut grad = vec![0.0; n];
        for (c, e) in self.coeffs.iter().zip(self.basis.exponents.iter()) {
            if *c == 0.0 {
                continue;
            }
            for (k, g) in grad.iter_mut().enumerate() {
                if e[k] == 0 {
                    continue;
                }
                let mut m = c * e[k] as f64;
                for v in 0..n {
                    let p = if v == k { e[v] - 1 } else { e[v] };
                    m *= powers[v][p as usize];
                }
                *g += m;
            }
        }
        grad
    }

    /// Substitutes series `args` for the variables: `self(args[0], ..)`,
    /// truncated at the order of the arguments. The coefficients of `self`
    /// are taken as a polynomial in the arguments themselves (the expansion
    /// center is ignored).
    pub fn compose(&self, args: &[TruncatedSeries]) -> Result<TruncatedSeries> {
        if args.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: args.len(),
            });
        }
        let (m, order) = match args.first() {
            Some(a) => (a.n(), a.order()),
            None => {
                return Err(Error::InvalidArgument(
                    "composition needs at least one argument".into(),
                ))
            }
        };
        for a in args {
            a.check_same(&args[0]);
        }
        let max_pow = self.order();
        let mut powers: Vec<Vec<TruncatedSeries>> = Vec::with_capacity(args.len());
        for a in args {
            let mut p = vec![TruncatedSeries::constant(m, order, 1.0)];
            for k in 1..=max_pow {
                let next = &p[k - 1] * a;
                p.push(next);
            }
            powers.push(p);
        }
        let mut out = TruncatedSeries::zero(m, order);
        for (c, e) in self.coeffs.iter().zip(self.basis.exponents.iter()) {
            if *c == 0.0 {
                continue;
            }
            let mut term = TruncatedSeries::constant(m, order, *c);
            for (v, &ev) in e.iter().enumerate() {
                if ev > 0 {
                    term = &term * &powers[v][ev as usize];
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }
}

impl Add for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn add(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.check_same(rhs);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        TruncatedSeries {
            basis: self.basis.clone(),
            coeffs,
        }
    }
}

impl Sub for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn sub(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.check_same(rhs);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        TruncatedSeries {
            basis: self.basis.clone(),
            coeffs,
        }
    }
}

impl Mul for &TruncatedSeries {
    type Output = TruncatedSeries;

    fn mul(self, rhs: &TruncatedSeries) -> TruncatedSeries {
        self.check_same(rhs);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.basis.products {
            let a = self.coeffs[i as usize];
            if a != 0.0 {
                coeffs[k as usize] += a * rhs.coeffs[j as usize];
            }
        }
        TruncatedSeries {
            basis: self.basis.clone(),
            coeffs,
        }
    }
}
