//! Physics-informed training of the transform network.
//!
//! The loss stacks three unweighted residual blocks: the functional equation
//! `T(phi(x_i)) - A T(x_i) - b(h(x_i))` at every collocation point, the
//! anchor `T(0)`, and the Jacobian anchor `dT/dx(0) - J0` where `J0` solves
//! the Sylvester equation `J0 F - A J0 = B H`.

use serde::{Deserialize, Serialize};

use crate::benchmarks::{Benchmark, BenchmarkId};
use crate::error::{Error, Result};
use crate::linalg::{sylvester_solve, Matrix};
use crate::lm::{self, LmOptions, LmResult, Termination};
use crate::metrics::{make_grid, GridKind, GridSpec};
use crate::mlp::{self, MlpConfig, Workspace};
use crate::system::{linearize, DiscreteSystem, ObserverSpec};
use crate::transform::{jacobian_or_fd, TransformMap};

/// Points per dimension of the collocation grid in every stage.
pub const COLLOCATION_POINTS: usize = 15;

const MAP_FD_STEP: f64 = 1e-6;

/// Nested square subdomains `[lower, 0]^n`, innermost first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSchedule {
    pub lowers: Vec<f64>,
}

impl ContinuationSchedule {
    pub fn new(lowers: Vec<f64>) -> Result<Self> {
        if lowers.is_empty() {
            return Err(Error::InvalidArgument("schedule must not be empty".into()));
        }
        if lowers.iter().any(|&l| !(l < 0.0)) {
            return Err(Error::InvalidArgument("subdomain lower bounds must be negative".into()));
        }
        if lowers.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidArgument("subdomains must be strictly nested".into()));
        }
        Ok(ContinuationSchedule { lowers })
    }

    /// One stage covering `[lower, 0]^n` directly.
    pub fn single(lower: f64) -> Result<Self> {
        ContinuationSchedule::new(vec![lower])
    }

    /// Starts at `start` and walks each `(step, until)` segment; steps are
    /// negative. Bounds are snapped to 1e-6 so decimal steps do not drift.
    pub fn from_segments(start: f64, segments: &[(f64, f64)]) -> Result<Self> {
        let snap = |v: f64| (v * 1e6).round() as i64;
        let mut cur = snap(start);
        let mut lowers = vec![cur];
        for &(step, until) in segments {
            let (s, u) = (snap(step), snap(until));
            if s >= 0 {
                return Err(Error::InvalidArgument("schedule steps must be negative".into()));
            }
            while cur + s >= u {
                cur += s;
                lowers.push(cur);
            }
            if cur != u {
                cur = u;
                lowers.push(cur);
            }
        }
        ContinuationSchedule::new(lowers.into_iter().map(|v| v as f64 / 1e6).collect())
    }

    pub fn for_benchmark(id: BenchmarkId) -> Self {
        let segments: &[(f64, f64)] = match id {
            BenchmarkId::Bench1 => &[(-0.1, -0.4), (-0.01, -0.49), (-0.001, -0.495)],
            BenchmarkId::Bench2 => &[(-0.1, -0.8), (-0.01, -0.91)],
        };
        ContinuationSchedule::from_segments(-0.1, segments).expect("built-in schedules are nested")
    }

    pub fn len(&self) -> usize {
        self.lowers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lowers.is_empty()
    }

    pub fn final_lower(&self) -> f64 {
        *self.lowers.last().expect("non-empty schedule")
    }
}

/// The Jacobian target for `dT/dx(0)`.
#[derive(Debug, Clone)]
pub struct PhaseTarget {
    pub j0: Matrix,
}

impl PhaseTarget {
    pub fn compute(sys: &DiscreteSystem, obs: &ObserverSpec) -> Result<Self> {
        let lin = linearize(sys, obs)?;
        let c = &lin.b * &lin.h;
        Ok(PhaseTarget {
            j0: sylvester_solve(&lin.f, &obs.a, &c)?,
        })
    }
}

/// Collocation points with `phi(x_i)` and `b(h(x_i))` precomputed.
#[derive(Debug, Clone)]
pub struct CollocationSet {
    pub points: Vec<Vec<f64>>,
    pub mapped: Vec<Vec<f64>>,
    pub injected: Vec<Vec<f64>>,
}

impl CollocationSet {
    pub fn new(sys: &DiscreteSystem, obs: &ObserverSpec, points: Vec<Vec<f64>>) -> Result<Self> {
        let mut mapped = Vec::with_capacity(points.len());
        let mut injected = Vec::with_capacity(points.len());
        for x in &points {
            let wrap = |e: Error| Error::CollocationPoint {
                point: x.clone(),
                source: Box::new(e),
            };
            mapped.push(sys.step(x).map_err(wrap)?);
            let y = sys.output(x).map_err(wrap)?;
            injected.push(obs.injection(y).map_err(wrap)?);
        }
        Ok(CollocationSet {
            points,
            mapped,
            injected,
        })
    }

    /// Equispaced `count x ... x count` grid over `[lower, 0]^n`.
    pub fn square(sys: &DiscreteSystem, obs: &ObserverSpec, lower: f64, count: usize) -> Result<Self> {
        let spec = GridSpec::square(GridKind::Equispaced, lower, 0.0, count, sys.n);
        CollocationSet::new(sys, obs, make_grid(&spec)?)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Everything the residual needs, precomputed for one subdomain.
#[derive(Debug, Clone)]
pub struct PinnProblem {
    pub a: Matrix,
    pub colloc: CollocationSet,
    pub phase: PhaseTarget,
}

impl PinnProblem {
    pub fn new(obs: &ObserverSpec, colloc: CollocationSet, phase: PhaseTarget) -> Self {
        PinnProblem {
            a: obs.a.clone(),
            colloc,
            phase,
        }
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn residual_len(&self) -> usize {
        let n = self.n();
        self.colloc.len() * n + n + n * n
    }

    fn push_point_residuals(&self, i: usize, tx: &[f64], tphi: &[f64], out: &mut Vec<f64>) {
        let n = self.n();
        let inj = &self.colloc.injected[i];
        for j in 0..n {
            let mut lin = 0.0;
            for k in 0..n {
                lin += self.a[(j, k)] * tx[k];
            }
            out.push(tphi[j] - lin - inj[j]);
        }
    }

    fn push_anchors(&self, t0: &[f64], jac0: &Matrix, out: &mut Vec<f64>) {
        let n = self.n();
        out.extend_from_slice(t0);
        for j in 0..n {
            for k in 0..n {
                out.push(jac0[(j, k)] - self.phase.j0[(j, k)]);
            }
        }
    }

    /// Residual vector of an arbitrary map.
    pub fn residuals_for_map(&self, map: &dyn TransformMap) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.residual_len());
        for i in 0..self.colloc.len() {
            let tx = map.eval(&self.colloc.points[i])?;
            let tphi = map.eval(&self.colloc.mapped[i])?;
            self.push_point_residuals(i, &tx, &tphi, &mut out);
        }
        let origin = vec![0.0; self.n()];
        let t0 = map.eval(&origin)?;
        let jac0 = jacobian_or_fd(map, &origin, MAP_FD_STEP)?;
        self.push_anchors(&t0, &jac0, &mut out);
        Ok(out)
    }

    /// Residual vector of the network with parameters `p`.
    pub fn residuals(&self, cfg: &MlpConfig, p: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if cfg.n != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cfg.n,
            });
        }
        if p.len() != cfg.param_count() {
            return Err(Error::DimensionMismatch {
                expected: cfg.param_count(),
                got: p.len(),
            });
        }
        let mut ws = Workspace::new(cfg);
        let mut tx = vec![0.0; n];
        let mut tphi = vec![0.0; n];
        let mut out = Vec::with_capacity(self.residual_len());
        for i in 0..self.colloc.len() {
            mlp::forward_into(cfg, p, &self.colloc.points[i], &mut ws, &mut tx);
            mlp::forward_into(cfg, p, &self.colloc.mapped[i], &mut ws, &mut tphi);
            self.push_point_residuals(i, &tx, &tphi, &mut out);
        }
        let origin = vec![0.0; n];
        mlp::forward_into(cfg, p, &origin, &mut ws, &mut tx);
        let jac0 = mlp::input_jacobian(cfg, p, &origin)?;
        self.push_anchors(&tx, &jac0, &mut out);
        Ok(out)
    }

    pub fn cost(&self, cfg: &MlpConfig, p: &[f64]) -> Result<f64> {
        Ok(self.residuals(cfg, p)?.iter().map(|v| v * v).sum())
    }
}

/// Stacked residual vector for parameters `p` over `points`.
pub fn residual_vector(
    sys: &DiscreteSystem,
    obs: &ObserverSpec,
    cfg: &MlpConfig,
    p: &[f64],
    points: Vec<Vec<f64>>,
    phase: &PhaseTarget,
) -> Result<Vec<f64>> {
    let colloc = CollocationSet::new(sys, obs, points)?;
    PinnProblem::new(obs, colloc, phase.clone()).residuals(cfg, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    pub schedule: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub final_cost: f64,
}

/// A trained network usable as a [`TransformMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMap {
    pub config: MlpConfig,
    pub params: Vec<f64>,
    pub provenance: Provenance,
}

impl TrainedMap {
    pub fn new(config: MlpConfig, params: Vec<f64>) -> Result<Self> {
        if params.len() != config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: config.param_count(),
                got: params.len(),
            });
        }
        Ok(TrainedMap {
            config,
            params,
            provenance: Provenance::default(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trained map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: TrainedMap =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("trained map JSON: {e}")))?;
        if map.params.len() != map.config.param_count() {
            return Err(Error::DimensionMismatch {
                expected: map.config.param_count(),
                got: map.params.len(),
            });
        }
        Ok(map)
    }
}

impl TransformMap for TrainedMap {
    fn dim(&self) -> usize {
        self.config.n
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        mlp::forward(&self.config, &self.params, x)
    }

    fn jacobian(&self, x: &[f64]) -> Option<Result<Matrix>> {
        Some(mlp::input_jacobian(&self.config, &self.params, x))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub map: TrainedMap,
    pub lm: LmResult,
}

/// Minimizes the stacked residual from `p0`.
pub fn train(problem: &PinnProblem, cfg: &MlpConfig, p0: &[f64], opts: &LmOptions) -> Result<TrainOutcome> {
    let res = lm::minimize(|p| problem.residuals(cfg, p), p0, opts)?;
    let mut map = TrainedMap::new(*cfg, res.params.clone())?;
    map.provenance.final_cost = res.cost;
    Ok(TrainOutcome { map, lm: res })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub lower: f64,
    /// Cost of the incoming parameters on this stage's grid.
    pub start_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub fevals: usize,
    pub termination: Termination,
    /// Accepted-iterate costs never increased.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyReport {
    pub stages: Vec<StageReport>,
}

impl GreedyReport {
    pub fn monotone(&self) -> bool {
        self.stages.iter().all(|s| s.monotone)
    }

    /// Plain-text log, one line per stage.
    pub fn log_lines(&self) -> String {
        let mut s = String::new();
        for st in &self.stages {
            s.push_str(&format!(
                "stage {:>2} lower {:>9.6} start_cost {:.6e} final_cost {:.6e} iterations {} fevals {} termination {}\n",
                st.stage,
                st.lower,
                st.start_cost,
                st.final_cost,
                st.iterations,
                st.fevals,
                st.termination.as_str()
            ));
        }
        s
    }
}

/// Trains stage by stage over `schedule`, warm-starting each stage from the
/// previous stage's parameters.
pub fn greedy_train_from(
    sys: &DiscreteSystem,
    obs: &ObserverSpec,
    schedule: &ContinuationSchedule,
    cfg: &MlpConfig,
    opts: &LmOptions,
    p0: Vec<f64>,
) -> Result<(TrainedMap, GreedyReport)> {
    greedy_train_grid(sys, obs, schedule, cfg, opts, p0, COLLOCATION_POINTS)
}

/// [`greedy_train_from`] with `count` equispaced collocation points per
/// dimension on every stage.
pub fn greedy_train_grid(
    sys: &DiscreteSystem,
    obs: &ObserverSpec,
    schedule: &ContinuationSchedule,
    cfg: &MlpConfig,
    opts: &LmOptions,
    p0: Vec<f64>,
    count: usize,
) -> Result<(TrainedMap, GreedyReport)> {
    let phase = PhaseTarget::compute(sys, obs)?;
    let mut params = p0;
    let mut stages = Vec::with_capacity(schedule.len());
    let mut last_cost = f64::NAN;
    for (k, &lower) in schedule.lowers.iter().enumerate() {
        let stage_err = |reason: String| Error::Stage { stage: k + 1, reason };
        let colloc = CollocationSet::square(sys, obs, lower, count)
            .map_err(|e| stage_err(e.to_string()))?;
        let problem = PinnProblem::new(obs, colloc, phase.clone());
        let out = train(&problem, cfg, &params, opts).map_err(|e| stage_err(e.to_string()))?;
        if !out.lm.cost.is_finite() {
            return Err(stage_err(format!("non-finite cost {}", out.lm.cost)));
        }
        stages.push(StageReport {
            stage: k + 1,
            lower,
            start_cost: out.lm.cost_history[0],
            final_cost: out.lm.cost,
            iterations: out.lm.iterations,
            fevals: out.lm.fevals,
            termination: out.lm.termination,
            monotone: out.lm.cost_history.windows(2).all(|w| w[1] <= w[0]),
        });
        params = out.lm.params;
        last_cost = out.lm.cost;
    }
    let mut map = TrainedMap::new(*cfg, params)?;
    map.provenance.schedule = schedule.lowers.clone();
    map.provenance.final_cost = last_cost;
    Ok((map, GreedyReport { stages }))
}

/// Greedy continuation over the benchmark's schedule from `init_random(seed)`.
pub fn greedy_train(
    bench: &Benchmark,
    cfg: &MlpConfig,
    opts: &LmOptions,
    seed: u64,
) -> Result<(TrainedMap, GreedyReport)> {
    train_benchmark(bench, &bench.schedule, cfg, opts, seed)
}

/// Single-stage training on the full benchmark domain.
pub fn single_train(
    bench: &Benchmark,
    cfg: &MlpConfig,
    opts: &LmOptions,
    seed: u64,
) -> Result<(TrainedMap, GreedyReport)> {
    let schedule = ContinuationSchedule::single(bench.domain_lower())?;
    train_benchmark(bench, &schedule, cfg, opts, seed)
}

fn train_benchmark(
    bench: &Benchmark,
    schedule: &ContinuationSchedule,
    cfg: &MlpConfig,
    opts: &LmOptions,
    seed: u64,
) -> Result<(TrainedMap, GreedyReport)> {
    let p0 = mlp::init_random(cfg, seed);
    let (mut map, report) = greedy_train_from(&bench.system, &bench.observer, schedule, cfg, opts, p0)?;
    map.provenance.benchmark = Some(bench.id.to_string());
    map.provenance.seed = Some(seed);
    Ok((map, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    /// Max over the grid of `||T(phi(x)) - A T(x) - b(h(x))||_inf`.
    pub max_residual: f64,
    /// `||T(0)||_inf`.
    pub origin: f64,
}

impl VerifyReport {
    pub fn max(&self) -> f64 {
        self.max_residual.max(self.origin)
    }
}

/// Functional-equation residual of `map` over `grid`.
pub fn verify_transform(
    map: &dyn TransformMap,
    sys: &DiscreteSystem,
    obs: &ObserverSpec,
    grid: &[Vec<f64>],
) -> Result<VerifyReport> {
    let mut worst = 0.0f64;
    for x in grid {
        let lhs = map.eval(&sys.step(x)?)?;
        let rhs = obs.advance(&map.eval(x)?, sys.output(x)?)?;
        for (a, b) in lhs.iter().zip(&rhs) {
            worst = worst.max((a - b).abs());
        }
    }
    let origin = map
        .eval(&sys.equilibrium())?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(VerifyReport {
        max_residual: worst,
        origin,
    })
}
