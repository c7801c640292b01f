//! The abstract transform `T` and its closed-form realization.

use crate::error::{Error, Result};
use crate::expr::{eval_all, parse, Expr};
use crate::linalg::Matrix;

/// An evaluable map `R^n -> R^n` standing in for the observer transform.
pub trait TransformMap: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Exact Jacobian when the map can supply one.
    fn jacobian(&self, _x: &[f64]) -> Option<Result<Matrix>> {
        None
    }

    /// Whether `x` lies in the region where the map is defined.
    fn contains(&self, _x: &[f64]) -> bool {
        true
    }
}

/// Central finite-difference Jacobian of `map` at `x`.
pub fn fd_jacobian_central(map: &dyn TransformMap, x: &[f64], step: f64) -> Result<Matrix> {
    let n = map.dim();
    let mut jac = Matrix::zeros(n, x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        xp[k] = x[k] + step;
        let plus = map.eval(&xp)?;
        xp[k] = x[k] - step;
        let minus = map.eval(&xp)?;
        xp[k] = x[k];
        for i in 0..n {
            jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Jacobian from the map when available, central differences otherwise.
pub fn jacobian_or_fd(map: &dyn TransformMap, x: &[f64], step: f64) -> Result<Matrix> {
    match map.jacobian(x) {
        Some(j) => j,
        None => fd_jacobian_central(map, x, step),
    }
}

/// Closed-form map given by one expression per component. The optional
/// `positive` guards declare the domain: every guard must be strictly
/// positive at `x`.
#[derive(Debug, Clone)]
pub struct ExprMap {
    n: usize,
    components: Vec<Expr>,
    positive: Vec<Expr>,
}

impl ExprMap {
    pub fn new(n: usize, components: Vec<Expr>) -> Result<Self> {
        if components.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: components.len(),
            });
        }
        if let Some(e) = components.iter().find(|e| e.min_arity() > n) {
            return Err(Error::InvalidArgument(format!("`{e}` uses more than {n} variables")));
        }
        Ok(ExprMap {
            n,
            components,
            positive: Vec::new(),
        })
    }

    pub fn parse(n: usize, texts: &[&str]) -> Result<Self> {
        let components = texts.iter().map(|t| parse(t, n)).collect::<Result<Vec<_>>>()?;
        ExprMap::new(n, components)
    }

    pub fn with_positive_guards(mut self, guards: Vec<Expr>) -> Self {
        self.positive = guards;
        self
    }

    /// The map `x -> 0`.
    pub fn zero(n: usize) -> Self {
        ExprMap {
            n,
            components: vec![Expr::Const(0.0); n],
            positive: Vec::new(),
        }
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    fn guard(&self, x: &[f64]) -> Result<()> {
        for g in &self.positive {
            let v = g.eval(x)?;
            if !(v > 0.0) {
                return Err(Error::Domain {
                    expr: g.to_string(),
                    msg: format!("guard value {v} is not positive at {x:?}"),
                });
            }
        }
        Ok(())
    }
}

impl TransformMap for ExprMap {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        self.guard(x)?;
        eval_all(&self.components, x)
    }

    fn jacobian(&self, x: &[f64]) -> Option<Result<Matrix>> {
        let build = || -> Result<Matrix> {
            self.guard(x)?;
            let mut jac = Matrix::zeros(self.n, self.n);
            for (i, e) in self.components.iter().enumerate() {
                let s = e.series_eval(x, 1).map_err(|err| err.in_component(i))?;
                for k in 0..self.n {
                    jac[(i, k)] = s.degree_part(1)[k];
                }
            }
            Ok(jac)
        };
        Some(build())
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.guard(x).is_ok()
    }
}
