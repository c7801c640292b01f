//! Power-series solution of the functional equations, degree by degree.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expr::{Basis, TruncatedSeries};
use crate::linalg::{lu_solve, sylvester_solve, Matrix};
use crate::system::{DiscreteSystem, ObserverSpec};
use crate::transform::TransformMap;

mod dd;

/// Highest supported truncation order.
pub const MAX_ORDER: usize = 10;

const REFINEMENT_ROUNDS: usize = 3;

/// Polynomial transform about the origin with zero constant terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMap {
    components: Vec<TruncatedSeries>,
}

impl PolyMap {
    pub fn new(components: Vec<TruncatedSeries>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("polynomial map needs a component".into()))?;
        let (n, order) = (first.n(), first.order());
        if components.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: components.len(),
            });
        }
        for c in &components {
            if c.n() != n || c.order() != order {
                return Err(Error::InvalidArgument("components must share one basis".into()));
            }
            if c.constant_term() != 0.0 {
                return Err(Error::InvalidArgument("constant terms must be zero".into()));
            }
        }
        Ok(PolyMap { components })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn order(&self) -> usize {
        self.components[0].order()
    }

    pub fn components(&self) -> &[TruncatedSeries] {
        &self.components
    }

    /// Coefficients of the linear part as an `n x n` matrix.
    pub fn linear_part(&self) -> Matrix {
        let n = self.n();
        let mut j = Matrix::zeros(n, n);
        for (i, c) in self.components.iter().enumerate() {
            for k in 0..n {
                j[(i, k)] = c.coeff(&unit_exponent(n, k));
            }
        }
        j
    }

    /// Number of stored nonconstant monomials over all components.
    pub fn coefficient_count(&self) -> usize {
        self.n() * (self.components[0].basis().len() - 1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("polynomial map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("polynomial map JSON: {e}")))
    }
}

fn unit_exponent(n: usize, k: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[k] = 1;
    e
}

/// Evaluates every component at `x`.
pub fn eval_polymap(pm: &PolyMap, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != pm.n() {
        return Err(Error::DimensionMismatch {
            expected: pm.n(),
            got: x.len(),
        });
    }
    Ok(pm.components.iter().map(|c| c.eval_at(x)).collect())
}

impl TransformMap for PolyMap {
    fn dim(&self) -> usize {
        self.n()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        eval_polymap(self, x)
    }

    fn jacobian(&self, x: &[f64]) -> Option<Result<Matrix>> {
        if x.len() != self.n() {
            return Some(Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            }));
        }
        let rows: Vec<Vec<f64>> = self.components.iter().map(|c| c.gradient_at(x)).collect();
        Some(Matrix::from_rows(&rows))
    }
}

#[derive(Serialize, Deserialize)]
struct PolyMapRepr {
    n: usize,
    order: usize,
    components: Vec<Vec<(Vec<u32>, f64)>>,
}

impl Serialize for PolyMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let basis = self.components[0].basis();
        let components = self
            .components
            .iter()
            .map(|c| {
                (1..basis.len())
                    .map(|i| (basis.exponent(i).to_vec(), c.coeffs()[i]))
                    .collect()
            })
            .collect();
        PolyMapRepr {
            n: self.n(),
            order: self.order(),
            components,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolyMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = PolyMapRepr::deserialize(d)?;
        if repr.n == 0 || repr.order > MAX_ORDER {
            return Err(D::Error::custom("unsupported dimension or order"));
        }
        let mut comps = Vec::with_capacity(repr.components.len());
        for terms in repr.components {
            let mut s = TruncatedSeries::zero(repr.n, repr.order);
            for (e, c) in terms {
                if e.iter().all(|&v| v == 0) {
                    return Err(D::Error::custom("constant terms must be zero"));
                }
                s.set_coeff(&e, c).map_err(D::Error::custom)?;
            }
            comps.push(s);
        }
        PolyMap::new(comps).map_err(D::Error::custom)
    }
}

/// Solves `T(phi(x)) = A T(x) + b(h(x))`, `T(0) = 0` for the Taylor
/// coefficients of `T` up to total degree `order`.
pub fn solve_series(sys: &DiscreteSystem, obs: &ObserverSpec, order: usize) -> Result<PolyMap> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "series order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let n = sys.n;
    if obs.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n(),
        });
    }
    let origin = sys.equilibrium();
    // The f64 expansions validate domains and name failing subexpressions.
    for e in sys.phi.iter().chain(std::iter::once(&sys.h)) {
        e.series_eval(&origin, order)?;
    }
    for e in &obs.b {
        e.series_eval(&[0.0], order)?;
    }
    let centered = |e: &crate::expr::Expr| -> Result<dd::DdSeries> {
        let mut s = dd::series_eval(e, &origin, order)?;
        s.drop_constant();
        Ok(s)
    };
    let phi: Vec<dd::DdSeries> = sys.phi.iter().map(centered).collect::<Result<_>>()?;
    let h = centered(&sys.h)?;
    let injection: Vec<dd::DdSeries> = obs
        .b
        .iter()
        .map(|e| Ok(dd::series_eval(e, &[0.0], order)?.compose(std::slice::from_ref(&h))))
        .collect::<Result<_>>()?;
    let phi_f64: Vec<TruncatedSeries> = phi.iter().map(|p| p.to_f64()).collect();
    let residual = dd::ResidualEvaluator::new(&phi, injection, &obs.a);

    let basis = Basis::get(n, order);
    let mut t: Vec<TruncatedSeries> = vec![TruncatedSeries::zero(n, order); n];

    // Degree 1: J F - A J = B H.
    let unit = |k: usize| basis.index_of(&unit_exponent(n, k)).expect("degree-1 monomial");
    let mut f = Matrix::zeros(n, n);
    let mut hm = Matrix::zeros(1, n);
    for k in 0..n {
        for i in 0..n {
            f[(i, k)] = phi_f64[i].coeffs()[unit(k)];
        }
        hm[(0, k)] = h.coeff(unit(k)).to_f64();
    }
    let mut bm = Matrix::zeros(n, 1);
    for (i, e) in obs.b.iter().enumerate() {
        bm[(i, 0)] = dd::series_eval(e, &[0.0], 1)?.coeff(1).to_f64();
    }
    let j0 = sylvester_solve(&f, &obs.a, &(&bm * &hm)).map_err(|e| match e {
        Error::Singular { .. } | Error::SpectraOverlap { .. } => Error::Resonance { degree: 1 },
        other => other,
    })?;
    for i in 0..n {
        for k in 0..n {
            t[i].coeffs_mut()[unit(k)] = j0[(i, k)];
        }
    }

    for degree in 1..=order {
        let range = basis.degree_range(degree);
        let m = range.len();
        let unknowns = n * m;
        // Columns of the degree-N operator by probing unit coefficients.
        let mut op = Matrix::zeros(unknowns, unknowns);
        for col in 0..unknowns {
            let (comp, local) = (col / m, col % m);
            let mut probe = vec![TruncatedSeries::zero(n, order); n];
            probe[comp].coeffs_mut()[range.start + local] = 1.0;
            let out = equation_residual(&probe, &phi_f64, &obs.a)?;
            for (i, r) in out.iter().enumerate() {
                for (l, v) in r.degree_part(degree).iter().enumerate() {
                    op[(i * m + l, col)] = *v;
                }
            }
        }
        // Near resonances make these operators badly conditioned, so each
        // block is refined against the double-double residual.
        for _ in 0..REFINEMENT_ROUNDS {
            let neg: Vec<f64> = residual.block(&t, degree).iter().map(|v| -v).collect();
            let delta = lu_solve(&op, &neg).map_err(|e| match e {
                Error::Singular { .. } => Error::Resonance { degree },
                other => other,
            })?;
            for i in 0..n {
                for l in 0..m {
                    t[i].coeffs_mut()[range.start + l] += delta[i * m + l];
                }
            }
        }
    }
    PolyMap::new(t)
}

/// `T(phi) - A T`, the homogeneous part of the equation.
fn equation_residual(t: &[TruncatedSeries], phi: &[TruncatedSeries], a: &Matrix) -> Result<Vec<TruncatedSeries>> {
    let n = t.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = t[i].compose(phi)?;
        for k in 0..n {
            if a[(i, k)] != 0.0 {
                r = &r - &t[k].clone().scale(a[(i, k)]);
            }
        }
        out.push(r);
    }
    Ok(out)
}
