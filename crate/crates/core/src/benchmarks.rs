//! Built-in benchmark problems with closed-form transforms and inverses.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expr::parse;
use crate::linalg::Matrix;
use crate::pinn::ContinuationSchedule;
use crate::system::{DiscreteSystem, ObserverSpec};
use crate::transform::{ExprMap, TransformMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    Bench1,
    Bench2,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 2] = [BenchmarkId::Bench1, BenchmarkId::Bench2];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkId::Bench1 => "bench1",
            BenchmarkId::Bench2 => "bench2",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bench1" => Ok(BenchmarkId::Bench1),
            "bench2" => Ok(BenchmarkId::Bench2),
            other => Err(Error::UnknownBenchmark(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub system: DiscreteSystem,
    pub observer: ObserverSpec,
    /// Per-dimension `[lower, upper]`.
    pub domain: Vec<(f64, f64)>,
    pub analytic_t: ExprMap,
    /// Closed-form inverse, written over `x1..xn` standing for `z1..zn`.
    pub analytic_t_inverse: ExprMap,
    pub schedule: ContinuationSchedule,
}

struct Source {
    phi: [&'static str; 2],
    h: &'static str,
    a: [[f64; 2]; 2],
    b: [&'static str; 2],
    t: [&'static str; 2],
    t_guard: &'static str,
    t_inv: [&'static str; 2],
    t_inv_guard: Option<&'static str>,
    lower: f64,
}

const BENCH1: Source = Source {
    phi: [
        "exp(0.2*x2/(1+x2))*sqrt(1+x1+x2)-1-0.4*x2-0.5*ln(1+x1+x2)",
        "0.5*ln(1+x1+x2)+0.4*x2",
    ],
    h: "x2",
    a: [[0.5, 0.3], [0.5, 0.4]],
    b: ["0.2*y/(1+y)-0.3*y", "0"],
    t: ["ln(1+x1+x2)", "x2"],
    t_guard: "1+x1+x2",
    t_inv: ["exp(x1)-x2-1", "x2"],
    t_inv_guard: None,
    lower: -0.495,
};

const BENCH2: Source = Source {
    phi: [
        "(0.5*x1/(1+x1)-0.9*x2)/(1-0.5*x1/(1+x1)+0.9*x2)",
        "x2",
    ],
    h: "x1",
    a: [[0.0, 0.0], [0.0, 0.1]],
    b: ["0.5*y/(1+y)", "y/(1+y)"],
    t: ["x1/(1+x1)+0.9*x2", "2.5*(x1/(1+x1)+x2)"],
    t_guard: "1+x1",
    t_inv: ["(10*x1-3.6*x2)/(1-10*x1+3.6*x2)", "4*x2-10*x1"],
    t_inv_guard: Some("1-10*x1+3.6*x2"),
    lower: -0.91,
};

fn build(id: BenchmarkId, src: &Source) -> Result<Benchmark> {
    let n = 2;
    let phi = src.phi.iter().map(|t| parse(t, n)).collect::<Result<Vec<_>>>()?;
    let system = DiscreteSystem::new(phi, parse(src.h, n)?)?;
    let a = Matrix::from_rows(&src.a.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
    let b = src.b.iter().map(|t| parse(t, 1)).collect::<Result<Vec<_>>>()?;
    let observer = ObserverSpec::new(a, b)?;
    let analytic_t = ExprMap::parse(n, &src.t)?.with_positive_guards(vec![parse(src.t_guard, n)?]);
    let inv_guards = src.t_inv_guard.map(|g| parse(g, n)).transpose()?;
    let analytic_t_inverse =
        ExprMap::parse(n, &src.t_inv)?.with_positive_guards(inv_guards.into_iter().collect());
    Ok(Benchmark {
        id,
        system,
        observer,
        domain: vec![(src.lower, 0.0); n],
        analytic_t,
        analytic_t_inverse,
        schedule: ContinuationSchedule::for_benchmark(id),
    })
}

/// Returns the fully populated benchmark.
pub fn get(id: BenchmarkId) -> Benchmark {
    let src = match id {
        BenchmarkId::Bench1 => &BENCH1,
        BenchmarkId::Bench2 => &BENCH2,
    };
    build(id, src).expect("built-in benchmark definitions parse")
}

pub fn get_by_name(name: &str) -> Result<Benchmark> {
    Ok(get(name.parse()?))
}

impl Benchmark {
    pub fn n(&self) -> usize {
        self.system.n
    }

    /// Lower bound of the (square) domain; the upper bound is 0.
    pub fn domain_lower(&self) -> f64 {
        self.domain[0].0
    }

    pub fn analytic_transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.analytic_t.eval(x)
    }

    pub fn analytic_inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.analytic_t_inverse.eval(z)
    }
}
