//! Plant, observer design, and the hypothesis checks on their linear parts.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{eval_all, Expr};
use crate::linalg::{self, Matrix};

const FD_STEP: f64 = 1e-6;
const EQUILIBRIUM_TOL: f64 = 1e-10;
const RESONANCE_TOL: f64 = 1e-9;

/// Discrete-time plant `x(t+1) = phi(x(t))`, `y(t) = h(x(t))`, with the
/// equilibrium at the origin.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub n: usize,
    pub phi: Vec<Expr>,
    pub h: Expr,
}

impl DiscreteSystem {
    pub fn new(phi: Vec<Expr>, h: Expr) -> Result<Self> {
        let n = phi.len();
        if n == 0 {
            return Err(Error::InvalidArgument("system needs at least one state".into()));
        }
        for e in phi.iter().chain(std::iter::once(&h)) {
            if e.min_arity() > n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: e.min_arity(),
                });
            }
        }
        Ok(DiscreteSystem { n, phi, h })
    }

    pub fn equilibrium(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }

    /// Checks `phi(0) = 0` and `h(0) = 0`.
    pub fn check_equilibrium(&self) -> Result<f64> {
        let x0 = self.equilibrium();
        let px = self.step(&x0)?;
        let hx = self.output(&x0)?;
        let dev = px.iter().fold(hx.abs(), |m, v| m.max(v.abs()));
        if dev > EQUILIBRIUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "origin is not an equilibrium (deviation {dev:e})"
            )));
        }
        Ok(dev)
    }

    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        eval_all(&self.phi, x)
    }

    pub fn output(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.h.eval(x)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Observer design `z(t+1) = A z(t) + b(y(t))`.
#[derive(Debug, Clone)]
pub struct ObserverSpec {
    pub a: Matrix,
    /// Injection map components, each an expression in the single variable `y`.
    pub b: Vec<Expr>,
}

impl ObserverSpec {
    pub fn new(a: Matrix, b: Vec<Expr>) -> Result<Self> {
        if !a.is_square() || a.rows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                got: b.len(),
            });
        }
        if let Some(e) = b.iter().find(|e| e.min_arity() > 1) {
            return Err(Error::InvalidArgument(format!(
                "injection map `{e}` must depend on y only"
            )));
        }
        Ok(ObserverSpec { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn injection(&self, y: f64) -> Result<Vec<f64>> {
        eval_all(&self.b, &[y])
    }

    /// `Psi(z, y) = A z + b(y)`.
    pub fn advance(&self, z: &[f64], y: f64) -> Result<Vec<f64>> {
        let mut next = self.a.matvec(z);
        for (v, bi) in next.iter_mut().zip(self.injection(y)?) {
            *v += bi;
        }
        Ok(next)
    }

    /// Checks `b(0) = 0`.
    pub fn check_injection_origin(&self) -> Result<f64> {
        let dev = self.injection(0.0)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dev > EQUILIBRIUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "b(0) is not zero (deviation {dev:e})"
            )));
        }
        Ok(dev)
    }
}

/// Linear parts at the equilibrium.
#[derive(Debug, Clone)]
pub struct LinearizationData {
    /// Jacobian of phi, n x n.
    pub f: Matrix,
    /// Gradient of h, 1 x n.
    pub h: Matrix,
    /// Derivative of b, n x 1.
    pub b: Matrix,
}

fn central_difference(g: impl Fn(f64) -> Result<Vec<f64>>, step: f64) -> Result<Vec<f64>> {
    let plus = g(step)?;
    let minus = g(-step)?;
    Ok(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * step)).collect())
}

/// Central finite-difference linearization at the origin.
pub fn linearize(sys: &DiscreteSystem, obs: &ObserverSpec) -> Result<LinearizationData> {
    let n = sys.n;
    if obs.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: obs.n(),
        });
    }
    let x0 = sys.equilibrium();
    let mut f = Matrix::zeros(n, n);
    let mut h = Matrix::zeros(1, n);
    for k in 0..n {
        let probe = |s: f64| -> Result<Vec<f64>> {
            let mut x = x0.clone();
            x[k] += s;
            let mut v = sys.step(&x)?;
            v.push(sys.output(&x)?);
            Ok(v)
        };
        let col = central_difference(probe, FD_STEP)?;
        for i in 0..n {
            f[(i, k)] = col[i];
        }
        h[(0, k)] = col[n];
    }
    let db = central_difference(|s| obs.injection(s), FD_STEP)?;
    Ok(LinearizationData {
        f,
        h,
        b: Matrix::column(&db),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub n: usize,
    pub observable: bool,
}

/// Rank test on `[H; HF; ...; HF^{n-1}]`.
pub fn check_observability(lin: &LinearizationData) -> ObservabilityReport {
    let n = lin.f.rows();
    let mut blocks = vec![lin.h.clone()];
    for k in 1..n {
        let next = &blocks[k - 1] * &lin.f;
        blocks.push(next);
    }
    let rank = linalg::rank(&Matrix::vstack(&blocks), linalg::RANK_TOL);
    ObservabilityReport {
        rank,
        n,
        observable: rank == n,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControllabilityReport {
    pub rank: usize,
    pub n: usize,
    pub controllable: bool,
}

/// Rank test on `[B, AB, ..., A^{n-1}B]`.
pub fn check_controllability(a: &Matrix, b: &Matrix) -> ControllabilityReport {
    let n = a.rows();
    let mut blocks = vec![b.clone()];
    for k in 1..n {
        let next = a * &blocks[k - 1];
        blocks.push(next);
    }
    let rank = linalg::rank(&Matrix::hstack(&blocks), linalg::RANK_TOL);
    ControllabilityReport {
        rank,
        n,
        controllable: rank == n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResonanceStatus {
    Pass,
    Warning,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceReport {
    pub status: ResonanceStatus,
    pub message: String,
    /// Offending multi-index and (zero-based) target eigenvalue index.
    pub resonance: Option<(Vec<u32>, usize)>,
    pub max_order: usize,
}

/// Non-resonance check between the spectrum of F (`k`) and of A (`lambda`).
pub fn check_resonance(lin: &LinearizationData, obs: &ObserverSpec) -> Result<ResonanceReport> {
    let k = linalg::eigenvalues(&lin.f)?;
    let lambda = linalg::eigenvalues(&obs.a)?;
    Ok(resonance_between(&k, &lambda))
}

/// Enumerates products `prod k_i^{m_i}` with `sum m_i >= 1` that could reach
/// any nonzero `lambda_j` and reports the first within tolerance.
pub fn resonance_between(k: &[Complex64], lambda: &[Complex64]) -> ResonanceReport {
    let kmax = k.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if kmax >= 1.0 {
        return ResonanceReport {
            status: ResonanceStatus::Warning,
            message: format!(
                "outside Poincaré domain: spectral radius of F is {kmax:.6}; non-resonance not enumerated"
            ),
            resonance: None,
            max_order: 0,
        };
    }
    let nonzero: Vec<f64> = lambda.iter().map(|z| z.norm()).filter(|&v| v > 0.0).collect();
    // A zero product needs a zero k_i; with some k_i = 0, any multi-index
    // using it gives 0, which resonates with a zero lambda_j.
    let has_zero_k = k.iter().any(|z| z.norm() == 0.0);
    if has_zero_k {
        if let Some(j) = lambda.iter().position(|z| z.norm() <= RESONANCE_TOL) {
            let i = k.iter().position(|z| z.norm() == 0.0).unwrap();
            let mut m = vec![0u32; k.len()];
            m[i] = 1;
            return fail(m, j, 1);
        }
    }
    let max_order = if nonzero.is_empty() || kmax == 0.0 {
        1
    } else {
        let lmin = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = (lmin.ln() / kmax.ln()).ceil();
        (bound.max(0.0) as usize) + 1
    };
    let n = k.len();
    let mut m = vec![0u32; n];
    for order in 1..=max_order {
        if let Some((mi, j)) = search_degree(k, lambda, &mut m, 0, order as u32) {
            return fail(mi, j, max_order);
        }
    }
    ResonanceReport {
        status: ResonanceStatus::Pass,
        message: format!("no resonance up to total degree {max_order}"),
        resonance: None,
        max_order,
    }
}

fn fail(m: Vec<u32>, j: usize, max_order: usize) -> ResonanceReport {
    ResonanceReport {
        status: ResonanceStatus::Fail,
        message: format!("resonance: multi-index {m:?} reaches eigenvalue {} of A", j + 1),
        resonance: Some((m, j)),
        max_order,
    }
}

fn search_degree(
    k: &[Complex64],
    lambda: &[Complex64],
    m: &mut Vec<u32>,
    pos: usize,
    remaining: u32,
) -> Option<(Vec<u32>, usize)> {
    if pos + 1 == k.len() {
        m[pos] = remaining;
        let prod = k
            .iter()
            .zip(m.iter())
            .fold(Complex64::new(1.0, 0.0), |acc, (ki, &mi)| acc * ki.powu(mi));
        let hit = lambda.iter().position(|l| (prod - l).norm() <= RESONANCE_TOL);
        let out = hit.map(|j| (m.clone(), j));
        m[pos] = 0;
        return out;
    }
    for v in (0..=remaining).rev() {
        m[pos] = v;
        if let Some(found) = search_degree(k, lambda, m, pos + 1, remaining - v) {
            m[pos] = 0;
            return Some(found);
        }
    }
    m[pos] = 0;
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{self, BenchmarkId};

    fn c(v: f64) -> Complex64 {
        Complex64::new(v, 0.0)
    }

    #[test]
    fn step_examples() {
        let b1 = benchmarks::get(BenchmarkId::Bench1);
        assert_eq!(b1.system.step(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        match b1.system.step(&[-0.6, -0.6]) {
            Err(Error::Component { component, .. }) => assert_eq!(component, 0),
            other => panic!("{other:?}"),
        }
        let b2 = benchmarks::get(BenchmarkId::Bench2);
        let x = b2.system.step(&[0.1, 0.0]).unwrap();
        let u = 0.1 / 1.1;
        let want = 0.5 * u / (1.0 - 0.5 * u);
        assert!((x[0] - want).abs() < 1e-15 && x[1] == 0.0);
        assert!((x[0] - 0.047619047619047616).abs() < 1e-15);
    }

    #[test]
    fn linearize_benchmarks() {
        let b1 = benchmarks::get(BenchmarkId::Bench1);
        let lin = linearize(&b1.system, &b1.observer).unwrap();
        let want = Matrix::from_rows(&[vec![0.0, -0.2], vec![0.5, 0.9]]).unwrap();
        assert!(lin.f.sub(&want).max_abs() < 1e-6);
        assert!((lin.b[(0, 0)] + 0.1).abs() < 1e-6 && lin.b[(1, 0)].abs() < 1e-6);
        assert!((lin.h[(0, 0)]).abs() < 1e-6 && (lin.h[(0, 1)] - 1.0).abs() < 1e-6);

        let b2 = benchmarks::get(BenchmarkId::Bench2);
        let lin = linearize(&b2.system, &b2.observer).unwrap();
        let want = Matrix::from_rows(&[vec![0.5, -0.9], vec![0.0, 1.0]]).unwrap();
        assert!(lin.f.sub(&want).max_abs() < 1e-6);
    }

    #[test]
    fn observability() {
        for id in [BenchmarkId::Bench1, BenchmarkId::Bench2] {
            let b = benchmarks::get(id);
            let lin = linearize(&b.system, &b.observer).unwrap();
            let rep = check_observability(&lin);
            assert!(rep.observable && rep.rank == 2);
        }
        let lin = LinearizationData {
            f: Matrix::identity(2),
            h: Matrix::zeros(1, 2),
            b: Matrix::zeros(2, 1),
        };
        let rep = check_observability(&lin);
        assert!(!rep.observable && rep.rank == 0);
    }

    #[test]
    fn resonance_examples() {
        let b1 = benchmarks::get(BenchmarkId::Bench1);
        let lin = linearize(&b1.system, &b1.observer).unwrap();
        let rep = check_resonance(&lin, &b1.observer).unwrap();
        assert_eq!(rep.status, ResonanceStatus::Pass, "{}", rep.message);

        let rep = resonance_between(&[c(0.5)], &[c(0.25)]);
        assert_eq!(rep.status, ResonanceStatus::Fail);
        assert_eq!(rep.resonance, Some((vec![2], 0)));

        let b2 = benchmarks::get(BenchmarkId::Bench2);
        let lin = linearize(&b2.system, &b2.observer).unwrap();
        let rep = check_resonance(&lin, &b2.observer).unwrap();
        assert_eq!(rep.status, ResonanceStatus::Warning);
    }

    #[test]
    fn resonance_with_zero_eigenvalues() {
        // Products of nonzero k never vanish, so lambda = 0 alone is harmless.
        let rep = resonance_between(&[c(0.5), c(0.3)], &[c(0.0), c(0.7)]);
        assert_eq!(rep.status, ResonanceStatus::Pass);
        let rep = resonance_between(&[c(0.0), c(0.3)], &[c(0.0), c(0.7)]);
        assert_eq!(rep.status, ResonanceStatus::Fail);
        // Mixed product 0.5 * 0.3 = 0.15.
        let rep = resonance_between(&[c(0.5), c(0.3)], &[c(0.15)]);
        assert_eq!(rep.resonance, Some((vec![1, 1], 0)));
    }

    #[test]
    fn resonance_symmetric_under_reordering() {
        let k = [c(0.1298), c(0.7702)];
        let l = [c(0.8405), c(0.0515)];
        let a = resonance_between(&k, &l);
        let b = resonance_between(&[k[1], k[0]], &[l[1], l[0]]);
        assert_eq!(a.status, b.status);
        let k = [c(0.6), c(0.2)];
        let l = [c(0.9), c(0.12)];
        assert_eq!(
            resonance_between(&k, &l).status,
            resonance_between(&[k[1], k[0]], &[l[1], l[0]]).status
        );
    }

    #[test]
    fn controllability_bench1() {
        let b1 = benchmarks::get(BenchmarkId::Bench1);
        let lin = linearize(&b1.system, &b1.observer).unwrap();
        assert!(check_controllability(&b1.observer.a, &lin.b).controllable);
    }
}
