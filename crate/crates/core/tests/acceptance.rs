//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report is always printed. The process exits
//! non-zero on a FAIL only when `ACCEPTANCE_STRICT=1`.
//! `ACCEPTANCE_STAGE_FEVALS` overrides the per-stage LM evaluation budget.

use std::time::Instant;

use pinn_observer::benchmarks::{get, Benchmark, BenchmarkId};
use pinn_observer::linalg::{eigenvalues, sylvester_solve, Matrix};
use pinn_observer::lm::{minimize, LmOptions};
use pinn_observer::metrics::{error_field, make_grid, norms, summarize, GridKind, GridSpec, Norms};
use pinn_observer::mlp::MlpConfig;
use pinn_observer::observer::{error_dynamics_check, newton_invert, simulate, NewtonOptions, SimulationInput};
use pinn_observer::pinn::{greedy_train, single_train, verify_transform, GreedyReport, TrainedMap};
use pinn_observer::series::solve_series;
use pinn_observer::system::linearize;
use pinn_observer::transform::TransformMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const DEFAULT_STAGE_FEVALS: usize = 15_000;
const SMALL_CAMPAIGN: usize = 20;
const LARGE_CAMPAIGN: usize = 40;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn test_grid(bench: &Benchmark) -> Vec<Vec<f64>> {
    make_grid(&GridSpec::square(GridKind::ChebyshevLobatto, bench.domain_lower(), 0.0, 20, 2)).unwrap()
}

fn train_grid(bench: &Benchmark) -> Vec<Vec<f64>> {
    make_grid(&GridSpec::square(GridKind::Equispaced, bench.domain_lower(), 0.0, 15, 2)).unwrap()
}

fn field_norms(map: &dyn TransformMap, bench: &Benchmark) -> [Norms; 2] {
    let f = error_field(map, &bench.analytic_t, &test_grid(bench)).unwrap();
    [norms(&f[0]), norms(&f[1])]
}

fn c1_phase() -> Outcome {
    let expected = [
        (BenchmarkId::Bench1, [[1.0, 1.0], [0.0, 1.0]]),
        (BenchmarkId::Bench2, [[1.0, 0.9], [2.5, 2.5]]),
    ];
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for (id, j) in expected {
        let b = get(id);
        let lin = linearize(&b.system, &b.observer).unwrap();
        let c = &lin.b * &lin.h;
        let t0 = Instant::now();
        let got = sylvester_solve(&lin.f, &b.observer.a, &c).unwrap();
        slowest = slowest.max(t0.elapsed().as_secs_f64());
        let want = Matrix::from_rows(&j.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        worst = worst.max(got.sub(&want).max_abs());
    }
    Outcome {
        id: 1,
        name: "phase condition",
        pass: worst <= 1e-8 && slowest < 1e-3,
        detail: format!("max |J - J0| = {worst:.2e} (tol 1e-8), slowest solve {:.1} us (< 1 ms)", slowest * 1e6),
    }
}

fn c2_eigenvalues() -> Outcome {
    let b = get(BenchmarkId::Bench1);
    let lin = linearize(&b.system, &b.observer).unwrap();
    let mut got: Vec<f64> = eigenvalues(&lin.f).unwrap().iter().map(|z| z.re).collect();
    got.extend(eigenvalues(&b.observer.a).unwrap().iter().map(|z| z.re));
    let mut f_sorted = got[..2].to_vec();
    f_sorted.sort_by(f64::total_cmp);
    let mut a_sorted = got[2..].to_vec();
    a_sorted.sort_by(|x, y| y.total_cmp(x));
    let got = [f_sorted[0], f_sorted[1], a_sorted[0], a_sorted[1]];
    let printed = [0.1298, 0.7702, 0.8405, 0.0515];
    let errs: Vec<f64> = got.iter().zip(&printed).map(|(g, p)| (g - p).abs()).collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Outcome {
        id: 2,
        name: "eigenvalues",
        pass: worst <= 1e-3,
        detail: format!(
            "computed [{:.4}, {:.4}, {:.4}, {:.4}] vs printed {printed:?}, max err {worst:.2e} (tol 1e-3)",
            got[0], got[1], got[2], got[3]
        ),
    }
}

fn c3_oracle_residual() -> Outcome {
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for id in [BenchmarkId::Bench1, BenchmarkId::Bench2] {
        let b = get(id);
        let r = verify_transform(&b.analytic_t, &b.system, &b.observer, &train_grid(&b)).unwrap();
        worst = worst.max(r.max());
        parts.push(format!("{id} {:.2e}", r.max()));
    }
    Outcome {
        id: 3,
        name: "oracle residual",
        pass: worst <= 1e-12,
        detail: format!("{} (tol 1e-12)", parts.join(", ")),
    }
}

fn c4_series_coefficients() -> Outcome {
    let mut worst = 0.0f64;
    let mut t2_nonlinear = 0.0f64;
    for id in [BenchmarkId::Bench1, BenchmarkId::Bench2] {
        let b = get(id);
        let pm = solve_series(&b.system, &b.observer, 6).unwrap();
        for (j, comp) in pm.components().iter().enumerate() {
            let oracle = b.analytic_t.components()[j].series_eval(&[0.0, 0.0], 6).unwrap();
            for (c, o) in comp.coeffs().iter().zip(oracle.coeffs()) {
                worst = worst.max((c - o).abs());
            }
            if id == BenchmarkId::Bench1 && j == 1 {
                let basis = comp.basis();
                for i in basis.degree_range(2).start..basis.len() {
                    t2_nonlinear = t2_nonlinear.max(comp.coeffs()[i].abs());
                }
            }
        }
    }
    Outcome {
        id: 4,
        name: "series coefficients",
        pass: worst <= 1e-8 && t2_nonlinear <= 1e-10,
        detail: format!("max coefficient error {worst:.2e} (tol 1e-8), bench1 T2 nonlinear max {t2_nonlinear:.2e} (tol 1e-10)"),
    }
}

fn c5_series_errors() -> Outcome {
    let t0 = Instant::now();
    let b1 = get(BenchmarkId::Bench1);
    let n1 = field_norms(&solve_series(&b1.system, &b1.observer, 6).unwrap(), &b1);
    let b2 = get(BenchmarkId::Bench2);
    let n2 = field_norms(&solve_series(&b2.system, &b2.observer, 6).unwrap(), &b2);
    let secs = t0.elapsed().as_secs_f64();
    let pass = (1.0..=6.0).contains(&n1[0].linf)
        && (30.0..=140.0).contains(&n1[0].l1)
        && (5.0..=40.0).contains(&n2[0].linf)
        && secs < 60.0;
    Outcome {
        id: 5,
        name: "series error magnitudes",
        pass,
        detail: format!(
            "bench1 Linf(T1) {:.3} in [1,6], L1(T1) {:.2} in [30,140]; bench2 Linf(T1) {:.3} in [5,40]; {secs:.1} s",
            n1[0].linf, n1[0].l1, n2[0].linf
        ),
    }
}

struct Run {
    map: TrainedMap,
    report: GreedyReport,
    norms: [Norms; 2],
}

fn campaign(
    bench: &Benchmark,
    seeds: std::ops::RangeInclusive<u64>,
    opts: &LmOptions,
    single: bool,
) -> Vec<Run> {
    let cfg = MlpConfig::default_for(2);
    seeds
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|seed| {
            let (map, report) = if single {
                single_train(bench, &cfg, opts, seed)
            } else {
                greedy_train(bench, &cfg, opts, seed)
            }
            .unwrap();
            let norms = field_norms(&map, bench);
            Run { map, report, norms }
        })
        .collect()
}

fn median_of(runs: &[Run], pick: impl Fn(&Run) -> f64) -> f64 {
    summarize(&runs.iter().map(pick).collect::<Vec<_>>()).median
}

fn c6_greedy_quality(greedy: &[Run], single: &[Run], secs: f64) -> Outcome {
    let g = median_of(&greedy[..SMALL_CAMPAIGN], |r| r.norms[0].linf);
    let s = median_of(single, |r| r.norms[0].linf);
    let ratio = s / g;
    Outcome {
        id: 6,
        name: "PINN greedy quality",
        pass: g <= 0.6 && ratio >= 5.0 && secs < 1800.0,
        detail: format!(
            "median Linf(T1) greedy {g:.3e} (<= 0.6), single {s:.3e}, ratio {ratio:.2} (>= 5), {} + {} runs, training {secs:.0} s",
            SMALL_CAMPAIGN,
            single.len()
        ),
    }
}

fn c7_uq_stability(greedy: &[Run]) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for j in 0..2 {
        let picks: [(&str, fn(&Norms) -> f64); 3] = [("L1", |n| n.l1), ("L2", |n| n.l2), ("Linf", |n| n.linf)];
        for (label, f) in picks {
            let small = median_of(&greedy[..SMALL_CAMPAIGN], |r| f(&r.norms[j]));
            let large = median_of(greedy, |r| f(&r.norms[j]));
            let rel = (small - large).abs() / large.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            parts.push(format!("T{} {label} {small:.3e}/{large:.3e}", j + 1));
        }
    }
    Outcome {
        id: 7,
        name: "UQ stability",
        pass: worst <= 0.5,
        detail: format!(
            "{SMALL_CAMPAIGN}-run vs {LARGE_CAMPAIGN}-run medians: {}; max relative gap {worst:.3} (<= 0.5)",
            parts.join(", ")
        ),
    }
}

fn c8_newton() -> Outcome {
    let opts = NewtonOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut max_iters = 0;
    let mut failures = 0;
    for id in [BenchmarkId::Bench1, BenchmarkId::Bench2] {
        let b = get(id);
        let lo = b.domain_lower();
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(lo..=0.0)).collect();
            let guess: Vec<f64> = x.iter().map(|v| (v + rng.gen_range(-0.01..=0.01)).clamp(lo, 0.0)).collect();
            let z = b.analytic_t.eval(&x).unwrap();
            match newton_invert(&b.analytic_t, &z, &guess, &opts) {
                Ok(r) => {
                    let err = r.x.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    worst = worst.max(err);
                    max_iters = max_iters.max(r.iterations);
                }
                Err(_) => failures += 1,
            }
        }
    }
    let b1 = get(BenchmarkId::Bench1);
    let paper = newton_invert(&b1.analytic_t, &[0.0, 0.0], &[0.1, 0.1], &opts);
    let paper_iters = paper.as_ref().map(|r| r.iterations).unwrap_or(usize::MAX);
    Outcome {
        id: 8,
        name: "Newton inversion",
        pass: failures == 0 && worst <= 1e-6 && max_iters <= 10 && paper_iters <= 5,
        detail: format!(
            "200 round trips: {failures} failures, max error {worst:.2e} (tol 1e-6), max iterations {max_iters} (<= 10); z=0 from (0.1,0.1): {} iterations (<= 5)",
            if paper.is_ok() { paper_iters.to_string() } else { "failed".into() }
        ),
    }
}

fn c9_error_dynamics() -> Outcome {
    let mut check = 0.0f64;
    for (id, x0) in [(BenchmarkId::Bench1, [-0.2, -0.1]), (BenchmarkId::Bench2, [-0.3, -0.2])] {
        let b = get(id);
        check = check.max(error_dynamics_check(&b.system, &b.observer, &b.analytic_t, &x0, 60).unwrap());
    }
    let b = get(BenchmarkId::Bench1);
    let input = SimulationInput {
        x0: vec![-0.2, -0.1],
        z0: vec![0.0, 0.0],
        x_hat_guess: vec![0.1, 0.1],
        horizon: 41,
    };
    let traj = simulate(&b.system, &b.observer, &b.analytic_t, &input, &NewtonOptions::default()).unwrap();
    let e = traj.e_z_inf();
    let pts: Vec<(f64, f64)> = (5..=40).map(|t| (t as f64, e[t].ln())).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let rate = slope.exp();
    Outcome {
        id: 9,
        name: "error dynamics",
        pass: check <= 1e-12 && (0.80..=0.88).contains(&rate),
        detail: format!("error_dynamics_check {check:.2e} (tol 1e-12), bench1 e_z decay rate {rate:.4} in [0.80, 0.88]"),
    }
}

fn c10_reconstruction(map: &TrainedMap) -> Outcome {
    let b = get(BenchmarkId::Bench1);
    // Newton starts at the origin, the exact preimage of z0 = 0, inside the
    // trained square; (0.1, 0.1) would query the network outside it.
    let input = SimulationInput {
        x0: vec![-0.2, -0.1],
        z0: vec![0.0, 0.0],
        x_hat_guess: vec![0.0, 0.0],
        horizon: 60,
    };
    match simulate(&b.system, &b.observer, map, &input, &NewtonOptions::default()) {
        Ok(traj) => {
            let tail = traj.e_x_inf()[20..].iter().cloned().fold(0.0, f64::max);
            let iters = traj.newton_iterations.iter().max().copied().unwrap_or(0);
            Outcome {
                id: 10,
                name: "observer reconstruction",
                pass: tail <= 5e-2,
                detail: format!(
                    "seed {} map, x0 (-0.2,-0.1), Newton start (0,0): max |x_hat - x| for t >= 20 {tail:.2e} (tol 5e-2), max Newton iterations {iters}",
                    map.provenance.seed.unwrap_or(0)
                ),
            }
        }
        Err(f) => Outcome {
            id: 10,
            name: "observer reconstruction",
            pass: false,
            detail: format!("simulation failed: {}", f.error),
        },
    }
}

fn c11_optimizer(runs: &[&Run]) -> Outcome {
    let rosen = |x: &[f64]| Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
    let opts = LmOptions {
        fd_step: 1e-7,
        ..LmOptions::default()
    };
    let r = minimize(rosen, &[-1.2, 1.0], &opts).unwrap();
    let err = (r.params[0] - 1.0).abs().max((r.params[1] - 1.0).abs());
    let rosen_monotone = r.cost_history.windows(2).all(|w| w[1] <= w[0]);
    let bad = runs.iter().filter(|run| !run.report.monotone()).count();
    Outcome {
        id: 11,
        name: "optimizer sanity",
        pass: err <= 1e-6 && r.iterations <= 200 && rosen_monotone && bad == 0,
        detail: format!(
            "Rosenbrock error {err:.2e} (tol 1e-6) in {} iterations (<= 200); non-monotone training runs {bad} of {}",
            r.iterations,
            runs.len()
        ),
    }
}

fn main() {
    let budget = std::env::var("ACCEPTANCE_STAGE_FEVALS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_STAGE_FEVALS);
    let mut outcomes = vec![
        c1_phase(),
        c2_eigenvalues(),
        c3_oracle_residual(),
        c4_series_coefficients(),
        c5_series_errors(),
    ];

    let bench = get(BenchmarkId::Bench1);
    let stages = bench.schedule.len();
    let greedy_opts = LmOptions {
        max_fevals: budget,
        ..LmOptions::default()
    };
    // Single-domain runs get the whole greedy budget in one stage.
    let single_opts = LmOptions {
        max_fevals: budget * stages,
        ..LmOptions::default()
    };
    let t0 = Instant::now();
    let greedy = campaign(&bench, 1..=SMALL_CAMPAIGN as u64, &greedy_opts, false);
    let single = campaign(&bench, 1..=SMALL_CAMPAIGN as u64, &single_opts, true);
    let c6_secs = t0.elapsed().as_secs_f64();
    let mut greedy_all = greedy;
    greedy_all.extend(campaign(
        &bench,
        SMALL_CAMPAIGN as u64 + 1..=LARGE_CAMPAIGN as u64,
        &greedy_opts,
        false,
    ));

    outcomes.push(c6_greedy_quality(&greedy_all, &single, c6_secs));
    outcomes.push(c7_uq_stability(&greedy_all));
    outcomes.push(c8_newton());
    outcomes.push(c9_error_dynamics());
    outcomes.push(c10_reconstruction(&greedy_all[0].map));
    let all_runs: Vec<&Run> = greedy_all.iter().chain(&single).collect();
    outcomes.push(c11_optimizer(&all_runs));

    println!("acceptance: {budget} LM evaluations per greedy stage, {stages} stages");
    for o in &outcomes {
        println!(
            "{} criterion {:>2} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.id,
            o.name,
            o.detail
        );
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed}/{} criteria passed", outcomes.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").map(|v| v == "1").unwrap_or(false);
    if strict && passed != outcomes.len() {
        std::process::exit(1);
    }
}
