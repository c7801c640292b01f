use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pinn_observer::linalg::{eigenvalues, spectral_radius};
use pinn_observer::lm::LmOptions;
use pinn_observer::metrics::{error_field, make_grid, norms, uq_aggregate, ErrorStats, GridKind, GridSpec, Norms};
use pinn_observer::mlp::{init_random, MlpConfig};
use pinn_observer::observer::{simulate, NewtonOptions, SimulationInput};
use pinn_observer::pinn::{greedy_train_grid, verify_transform, ContinuationSchedule, GreedyReport, TrainedMap};
use pinn_observer::series::solve_series;
use pinn_observer::system::{check_controllability, check_observability, check_resonance, linearize, ResonanceStatus};
use pinn_observer::transform::TransformMap;
use rayon::prelude::*;
use serde::Serialize;

use crate::mapfile::MapFile;
use crate::problem::Problem;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Solver {
    PinnGreedy,
    PinnSingle,
    Series,
}

/// `kind:count` or a bare count that keeps the flag's default kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridArg {
    pub kind: Option<GridKind>,
    pub count: usize,
}

impl std::str::FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, count) = match s.split_once(':') {
            Some((k, c)) => {
                let kind = match k {
                    "equispaced" => GridKind::Equispaced,
                    "chebyshev" | "chebyshev-lobatto" => GridKind::ChebyshevLobatto,
                    other => return Err(format!("unknown grid kind `{other}`")),
                };
                (Some(kind), c)
            }
            None => (None, s),
        };
        let count: usize = count.parse().map_err(|_| format!("bad point count `{count}`"))?;
        if count < 2 {
            return Err("a grid needs at least 2 points per dimension".into());
        }
        Ok(GridArg { kind, count })
    }
}

impl GridArg {
    pub fn spec(self, default: GridKind, lower: f64, n: usize) -> GridSpec {
        GridSpec::square(self.kind.unwrap_or(default), lower, 0.0, self.count, n)
    }
}

pub struct TrainSettings {
    pub seed: Option<u64>,
    pub max_fevals: Option<usize>,
    pub hidden: (usize, usize),
    pub collocation: usize,
}

impl TrainSettings {
    fn lm_options(&self) -> LmOptions {
        let mut opts = LmOptions::default();
        if let Some(m) = self.max_fevals {
            opts.max_fevals = m;
        }
        opts
    }

    fn mlp(&self, n: usize) -> Result<MlpConfig, CliError> {
        MlpConfig::new(n, self.hidden.0, self.hidden.1).map_err(|e| CliError::usage(e.to_string()))
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn fmt_eig(m: &pinn_observer::linalg::Matrix) -> Result<String, CliError> {
    let eig = eigenvalues(m).map_err(CliError::numerical)?;
    Ok(eig
        .iter()
        .map(|z| {
            if z.im.abs() < 1e-12 {
                format!("{:.4}", z.re)
            } else {
                format!("{:.4}{:+.4}i", z.re, z.im)
            }
        })
        .collect::<Vec<_>>()
        .join(", "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Verdict {
    Pass,
    Warning,
    Fail,
}

pub struct CheckReport {
    pub verdict: Verdict,
    pub text: String,
}

/// Assumption checks on the problem at its equilibrium.
pub fn check(p: &Problem) -> Result<CheckReport, CliError> {
    let mut verdict = Verdict::Pass;
    let mut text = String::new();
    let mut line = |v: Verdict, msg: String| {
        verdict = verdict.max(v);
        let tag = match v {
            Verdict::Pass => "PASS",
            Verdict::Warning => "WARNING",
            Verdict::Fail => "FAIL",
        };
        let _ = writeln!(text, "{tag:<7} {msg}");
    };
    match (p.system.check_equilibrium(), p.observer.check_injection_origin()) {
        (Ok(d1), Ok(d2)) => line(Verdict::Pass, format!("equilibrium: |phi(0)|, |h(0)|, |b(0)| <= {:.1e}", d1.max(d2))),
        (Err(e), _) | (_, Err(e)) => {
            line(Verdict::Fail, format!("equilibrium: {e}"));
            return Ok(CheckReport { verdict, text });
        }
    }
    let lin = linearize(&p.system, &p.observer).map_err(CliError::numerical)?;
    line(Verdict::Pass, format!("eigenvalues of F: {}", fmt_eig(&lin.f)?));
    line(Verdict::Pass, format!("eigenvalues of A: {}", fmt_eig(&p.observer.a)?));
    let rho = spectral_radius(&p.observer.a).map_err(CliError::numerical)?;
    if rho < 1.0 {
        line(Verdict::Pass, format!("observer stability: spectral radius of A {rho:.4} < 1"));
    } else {
        line(Verdict::Fail, format!("observer stability: spectral radius of A {rho:.4} >= 1"));
    }
    let obs = check_observability(&lin);
    line(
        if obs.observable { Verdict::Pass } else { Verdict::Fail },
        format!("observability rank {} of {}", obs.rank, obs.n),
    );
    let ctrb = check_controllability(&p.observer.a, &lin.b);
    line(
        if ctrb.controllable { Verdict::Pass } else { Verdict::Fail },
        format!("controllability rank of (A, B) {} of {}", ctrb.rank, ctrb.n),
    );
    let res = check_resonance(&lin, &p.observer).map_err(CliError::numerical)?;
    let v = match res.status {
        ResonanceStatus::Pass => Verdict::Pass,
        ResonanceStatus::Warning => Verdict::Warning,
        ResonanceStatus::Fail => Verdict::Fail,
    };
    line(v, format!("non-resonance: {}", res.message));
    Ok(CheckReport { verdict, text })
}

#[derive(Serialize)]
struct VerifyOutput {
    problem: String,
    grid: GridSpec,
    max_residual: f64,
    origin: f64,
}

fn train_one(
    p: &Problem,
    solver: Solver,
    settings: &TrainSettings,
    seed: u64,
) -> pinn_observer::Result<(TrainedMap, GreedyReport)> {
    let cfg = MlpConfig::new(p.n(), settings.hidden.0, settings.hidden.1)?;
    let schedule = match solver {
        Solver::PinnSingle => ContinuationSchedule::single(p.lower)?,
        _ => p.schedule.clone(),
    };
    let (mut map, report) = greedy_train_grid(
        &p.system,
        &p.observer,
        &schedule,
        &cfg,
        &settings.lm_options(),
        init_random(&cfg, seed),
        settings.collocation,
    )?;
    map.provenance.benchmark = Some(p.name.clone());
    map.provenance.seed = Some(seed);
    Ok((map, report))
}

pub fn solve(
    p: &Problem,
    solver: Solver,
    order: usize,
    settings: &TrainSettings,
    grid_train: GridArg,
    out: &Path,
) -> Result<String, CliError> {
    let report = check(p)?;
    if report.verdict == Verdict::Fail {
        return Err(CliError::assumption(report.text));
    }
    let mut summary = String::new();
    let map = match solver {
        Solver::Series => {
            let pm = solve_series(&p.system, &p.observer, order).map_err(CliError::numerical)?;
            let _ = writeln!(summary, "series order {order}: {} coefficients", pm.coefficient_count());
            MapFile::Series(pm)
        }
        Solver::PinnGreedy | Solver::PinnSingle => {
            let seed = settings
                .seed
                .ok_or_else(|| CliError::usage("--seed is required for PINN solvers"))?;
            settings.mlp(p.n())?;
            let (map, log) = train_one(p, solver, settings, seed).map_err(CliError::numerical)?;
            let lines = log.log_lines();
            write(out, "training_log.txt", &lines)?;
            summary.push_str(&lines);
            let _ = writeln!(summary, "{} stages, final cost {:.6e}", log.stages.len(), map.provenance.final_cost);
            MapFile::Pinn(map)
        }
    };
    let spec = grid_train.spec(GridKind::Equispaced, p.lower, p.n());
    let grid = make_grid(&spec).map_err(|e| CliError::usage(e.to_string()))?;
    let transform = map.clone().into_transform(p.n())?;
    let v = verify_transform(transform.as_ref(), &p.system, &p.observer, &grid).map_err(CliError::numerical)?;
    write(out, "map.json", &map.to_json())?;
    write(
        out,
        "verify.json",
        &json(&VerifyOutput {
            problem: p.name.clone(),
            grid: spec,
            max_residual: v.max_residual,
            origin: v.origin,
        }),
    )?;
    let _ = writeln!(
        summary,
        "functional-equation residual: max {:.3e}, |T(0)| {:.3e}",
        v.max_residual, v.origin
    );
    Ok(summary)
}

#[derive(Serialize)]
struct GridNorms {
    grid: GridSpec,
    /// One entry per transform component.
    components: Vec<Norms>,
}

#[derive(Serialize)]
struct EvalOutput {
    problem: String,
    train: GridNorms,
    test: GridNorms,
}

fn fields_csv(grid: &[Vec<f64>], field: &[Vec<f64>]) -> String {
    let n = field.len();
    let mut s = String::new();
    let cols: Vec<String> = (1..=grid.first().map_or(n, Vec::len))
        .map(|i| format!("x{i}"))
        .chain((1..=n).map(|j| format!("e{j}")))
        .collect();
    s.push_str(&cols.join(","));
    s.push('\n');
    for (i, x) in grid.iter().enumerate() {
        let row: Vec<String> = x.iter().map(f64::to_string).chain(field.iter().map(|f| f[i].to_string())).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn grid_norms(
    map: &dyn TransformMap,
    oracle: &dyn TransformMap,
    spec: GridSpec,
) -> Result<(GridNorms, String), CliError> {
    let grid = make_grid(&spec).map_err(|e| CliError::usage(e.to_string()))?;
    let field = error_field(map, oracle, &grid).map_err(CliError::numerical)?;
    let csv = fields_csv(&grid, &field);
    let components = field.iter().map(|f| norms(f)).collect();
    Ok((GridNorms { grid: spec, components }, csv))
}

pub fn eval(p: &Problem, map: MapFile, train: GridArg, test: GridArg, out: &Path) -> Result<String, CliError> {
    let oracle = p.oracle()?;
    let map = map.into_transform(p.n())?;
    let (train, train_csv) = grid_norms(map.as_ref(), oracle, train.spec(GridKind::Equispaced, p.lower, p.n()))?;
    let (test, test_csv) = grid_norms(map.as_ref(), oracle, test.spec(GridKind::ChebyshevLobatto, p.lower, p.n()))?;
    write(out, "fields_train.csv", &train_csv)?;
    write(out, "fields_test.csv", &test_csv)?;
    let mut summary = String::new();
    for (label, g) in [("train", &train), ("test", &test)] {
        for (j, n) in g.components.iter().enumerate() {
            let _ = writeln!(summary, "{label} T{}: L1 {:.3e} L2 {:.3e} Linf {:.3e}", j + 1, n.l1, n.l2, n.linf);
        }
    }
    write(
        out,
        "norms.json",
        &json(&EvalOutput {
            problem: p.name.clone(),
            train,
            test,
        }),
    )?;
    Ok(summary)
}

pub struct SimulateSettings {
    pub x0: Option<Vec<f64>>,
    pub z0: Option<Vec<f64>>,
    pub z0_exact: bool,
    pub guess: Option<Vec<f64>>,
    pub horizon: usize,
    pub allow_outside: bool,
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<(), CliError> {
    if v.len() != n {
        return Err(CliError::usage(format!("{what} needs {n} values, got {}", v.len())));
    }
    Ok(())
}

pub fn simulate_cmd(p: &Problem, map: Option<MapFile>, s: &SimulateSettings, out: &Path) -> Result<String, CliError> {
    let n = p.n();
    let map: Box<dyn TransformMap> = match map {
        Some(m) => m.into_transform(n)?,
        None => Box::new(p.oracle()?.clone()),
    };
    let x0 = s.x0.clone().unwrap_or_else(|| p.initial_state.clone());
    check_len("--x0", &x0, n)?;
    if !s.allow_outside && !p.in_domain(&x0) {
        return Err(CliError::usage(format!(
            "initial state {x0:?} lies outside [{}, 0]^{n}; pass --allow-outside-domain to run it anyway",
            p.lower
        )));
    }
    let z0 = if s.z0_exact {
        map.eval(&x0).map_err(CliError::numerical)?
    } else {
        s.z0.clone().unwrap_or_else(|| vec![0.0; n])
    };
    check_len("--z0", &z0, n)?;
    let guess = s.guess.clone().unwrap_or_else(|| vec![0.1; n]);
    check_len("--guess", &guess, n)?;
    let input = SimulationInput {
        x0,
        z0,
        x_hat_guess: guess,
        horizon: s.horizon,
    };
    match simulate(&p.system, &p.observer, map.as_ref(), &input, &NewtonOptions::default()) {
        Ok(traj) => {
            write(out, "trajectory.csv", &traj.to_csv(n))?;
            Ok(match traj.e_x_inf().last() {
                Some(e) => format!("{} steps, final |x - x_hat|_inf {e:.6e}\n", traj.len()),
                None => "0 steps\n".to_string(),
            })
        }
        Err(f) => {
            write(out, "trajectory.csv", &f.partial.to_csv(n))?;
            Err(CliError::numerical(f.error))
        }
    }
}

pub struct UqSettings {
    pub runs: usize,
    pub same_seed: bool,
    pub workers: Option<usize>,
}

#[derive(Serialize)]
struct UqOutput {
    problem: String,
    solver: String,
    runs: usize,
    failures: usize,
    seeds: Vec<u64>,
    /// One entry per transform component.
    components: Vec<ErrorStats>,
}

/// Largest tolerated share of failed runs.
const MAX_FAILURE_RATE: f64 = 0.2;

pub fn uq(
    p: &Problem,
    solver: Solver,
    settings: &TrainSettings,
    uq: &UqSettings,
    test: GridArg,
    out: &Path,
) -> Result<String, CliError> {
    if solver == Solver::Series {
        return Err(CliError::usage("uq needs a PINN solver; the series solver is deterministic"));
    }
    if uq.runs < 2 {
        return Err(CliError::usage(format!("uq needs at least 2 runs, got {}", uq.runs)));
    }
    let base = settings
        .seed
        .ok_or_else(|| CliError::usage("--seed is required for PINN solvers"))?;
    settings.mlp(p.n())?;
    let oracle = p.oracle()?;
    let grid = make_grid(&test.spec(GridKind::ChebyshevLobatto, p.lower, p.n())).map_err(|e| CliError::usage(e.to_string()))?;
    let seeds: Vec<u64> = (0..uq.runs as u64)
        .map(|i| if uq.same_seed { base } else { base + i })
        .collect();
    let job = |seed: &u64| -> Result<Vec<Norms>, String> {
        let (map, _) = train_one(p, solver, settings, *seed).map_err(|e| e.to_string())?;
        let field = error_field(&map, oracle, &grid).map_err(|e| e.to_string())?;
        Ok(field.iter().map(|f| norms(f)).collect())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(uq.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let results: Vec<Result<Vec<Norms>, String>> = pool.install(|| seeds.par_iter().map(job).collect());

    let n = p.n();
    let mut csv = String::from("run,seed,status");
    for j in 1..=n {
        let _ = write!(csv, ",T{j}_l1,T{j}_l2,T{j}_linf");
    }
    csv.push('\n');
    let mut ok: Vec<&Vec<Norms>> = Vec::new();
    for (i, (seed, r)) in seeds.iter().zip(&results).enumerate() {
        match r {
            Ok(v) => {
                let _ = write!(csv, "{i},{seed},ok");
                for nm in v {
                    let _ = write!(csv, ",{},{},{}", nm.l1, nm.l2, nm.linf);
                }
                ok.push(v);
            }
            Err(e) => {
                let _ = write!(csv, "{i},{seed},\"failed: {}\"", e.replace('"', "'"));
                csv.push_str(&",".repeat(3 * n));
            }
        }
        csv.push('\n');
    }
    write(out, "runs.csv", &csv)?;
    let failures = uq.runs - ok.len();
    let rate = failures as f64 / uq.runs as f64;
    let mut summary = format!("{} runs, {failures} failed\n", uq.runs);
    if ok.len() >= 2 {
        let components = (0..n)
            .map(|j| uq_aggregate(&ok.iter().map(|v| v[j]).collect::<Vec<_>>()))
            .collect::<pinn_observer::Result<Vec<_>>>()
            .map_err(CliError::numerical)?;
        for (j, st) in components.iter().enumerate() {
            let _ = writeln!(
                summary,
                "T{} Linf median {:.3e} (p05 {:.3e}, p95 {:.3e})",
                j + 1,
                st.linf.median,
                st.linf.p05,
                st.linf.p95
            );
        }
        let solver_name = match solver {
            Solver::PinnGreedy => "pinn-greedy",
            _ => "pinn-single",
        };
        write(
            out,
            "stats.json",
            &json(&UqOutput {
                problem: p.name.clone(),
                solver: solver_name.into(),
                runs: uq.runs,
                failures,
                seeds: seeds.clone(),
                components,
            }),
        )?;
    }
    if rate > MAX_FAILURE_RATE || ok.len() < 2 {
        return Err(CliError {
            code: 4,
            message: format!("{summary}failure rate {:.0}% exceeds {:.0}%", rate * 100.0, MAX_FAILURE_RATE * 100.0),
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::load;

    #[test]
    fn grid_arg_forms() {
        let g: GridArg = "chebyshev:20".parse().unwrap();
        assert_eq!(g.kind, Some(GridKind::ChebyshevLobatto));
        assert_eq!(g.count, 20);
        let g: GridArg = "15".parse().unwrap();
        assert_eq!(g.kind, None);
        assert!("hex:4".parse::<GridArg>().is_err());
        assert!("1".parse::<GridArg>().is_err());
    }

    #[test]
    fn benchmark_checks() {
        let r1 = check(&load(Some("bench1"), None).unwrap()).unwrap();
        assert_eq!(r1.verdict, Verdict::Pass, "{}", r1.text);
        assert!(r1.text.contains("0.7702") && r1.text.contains("0.8405"));
        let r2 = check(&load(Some("bench2"), None).unwrap()).unwrap();
        assert_eq!(r2.verdict, Verdict::Warning, "{}", r2.text);
        assert!(r2.text.contains("PASS    observability"));
    }

    #[test]
    fn unstable_observer_fails() {
        let mut p = load(Some("bench1"), None).unwrap();
        p.observer.a = pinn_observer::linalg::Matrix::from_rows(&[vec![1.2, 0.0], vec![0.5, 0.4]]).unwrap();
        assert_eq!(check(&p).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn csv_layout() {
        let s = fields_csv(&[vec![0.0, -0.5]], &[vec![1.5], vec![-2.0]]);
        assert_eq!(s, "x1,x2,e1,e2\n0,-0.5,1.5,-2\n");
    }
}
