//! `pinn-observer` command-line front end.
//!
//! Exit codes: 0 success or warning, 1 usage or configuration error,
//! 2 failed assumption check, 3 numerical failure, 4 UQ failure rate breach.

mod commands;
mod mapfile;
mod problem;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{GridArg, SimulateSettings, Solver, TrainSettings, UqSettings, Verdict};
use mapfile::MapFile;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn assumption(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerical(e: pinn_observer::Error) -> Self {
        CliError {
            code: 3,
            message: e.to_string(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::usage(format!("{}: {e}", path.display()))
    }
}

#[derive(Parser)]
#[command(name = "pinn-observer", version, about = "Design and run discrete-time nonlinear observers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProblemArgs {
    /// Built-in benchmark (bench1 or bench2).
    #[arg(long)]
    benchmark: Option<String>,
    /// TOML system-definition file.
    #[arg(long)]
    problem: Option<PathBuf>,
}

impl ProblemArgs {
    fn load(&self) -> Result<problem::Problem, CliError> {
        problem::load(self.benchmark.as_deref(), self.problem.as_deref())
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Seed for network initialization (base seed for uq).
    #[arg(long)]
    seed: Option<u64>,
    /// LM evaluation budget per continuation stage.
    #[arg(long)]
    max_fevals: Option<usize>,
    /// Hidden layer widths.
    #[arg(long, value_parser = parse_hidden, default_value = "5,5")]
    hidden: (usize, usize),
}

fn parse_hidden(s: &str) -> Result<(usize, usize), String> {
    let v = parse_list(s)?;
    match v.as_slice() {
        [a, b] if *a >= 1.0 && *b >= 1.0 && a.fract() == 0.0 && b.fract() == 0.0 => Ok((*a as usize, *b as usize)),
        _ => Err("expected two positive widths such as 5,5".into()),
    }
}

/// Comma-separated coordinates such as `-0.2,-0.1`.
#[derive(Debug, Clone)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    parse_list(s).map(Point)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}

#[derive(Subcommand)]
enum Command {
    /// Check equilibrium, stability, observability, controllability and resonance.
    Check {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Solve the functional equations and write the map.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum)]
        solver: Solver,
        /// Truncation order for the series solver.
        #[arg(long, default_value_t = 6)]
        order: usize,
        #[command(flatten)]
        train: TrainArgs,
        /// Collocation and residual-report grid (equispaced).
        #[arg(long, default_value = "equispaced:15")]
        grid_train: GridArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a map against the closed-form transform on train and test grids.
    Eval {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Map JSON written by `solve`.
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "equispaced:15")]
        grid_train: GridArg,
        #[arg(long, default_value = "chebyshev:20")]
        grid_test: GridArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run plant and observer, reconstructing the state by Newton inversion.
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Map JSON; the closed-form transform when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        x0: Option<Point>,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, conflicts_with = "z0_exact")]
        z0: Option<Point>,
        /// Start the observer at z0 = T(x0).
        #[arg(long)]
        z0_exact: bool,
        /// First Newton starting point.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        guess: Option<Point>,
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        /// Accept an initial state outside the problem domain.
        #[arg(long)]
        allow_outside_domain: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Repeat seeded trainings and aggregate test-grid error norms.
    Uq {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_enum, default_value = "pinn-greedy")]
        solver: Solver,
        #[arg(long)]
        runs: usize,
        #[command(flatten)]
        train: TrainArgs,
        /// Use the base seed for every run.
        #[arg(long)]
        same_seed: bool,
        /// Concurrent runs; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
        /// Collocation grid (equispaced).
        #[arg(long, default_value = "equispaced:15")]
        grid_train: GridArg,
        #[arg(long, default_value = "chebyshev:20")]
        grid_test: GridArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn settings(t: &TrainArgs, grid_train: GridArg) -> Result<TrainSettings, CliError> {
    if grid_train.kind == Some(pinn_observer::metrics::GridKind::ChebyshevLobatto) {
        return Err(CliError::usage("--grid-train must be equispaced"));
    }
    Ok(TrainSettings {
        seed: t.seed,
        max_fevals: t.max_fevals,
        hidden: t.hidden,
        collocation: grid_train.count,
    })
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Check { problem } => {
            let report = commands::check(&problem.load()?)?;
            match report.verdict {
                Verdict::Fail => Err(CliError::assumption(report.text)),
                _ => Ok(report.text),
            }
        }
        Command::Solve {
            problem,
            solver,
            order,
            train,
            grid_train,
            out,
        } => {
            let s = settings(&train, grid_train)?;
            commands::solve(&problem.load()?, solver, order, &s, grid_train, &out)
        }
        Command::Eval {
            problem,
            map,
            grid_train,
            grid_test,
            out,
        } => commands::eval(&problem.load()?, MapFile::load(&map)?, grid_train, grid_test, &out),
        Command::Simulate {
            problem,
            map,
            x0,
            z0,
            z0_exact,
            guess,
            horizon,
            allow_outside_domain,
            out,
        } => {
            let p = problem.load()?;
            let map = map.as_deref().map(MapFile::load).transpose()?;
            let s = SimulateSettings {
                x0: x0.map(|p| p.0),
                z0: z0.map(|p| p.0),
                z0_exact,
                guess: guess.map(|p| p.0),
                horizon,
                allow_outside: allow_outside_domain,
            };
            commands::simulate_cmd(&p, map, &s, &out)
        }
        Command::Uq {
            problem,
            solver,
            runs,
            train,
            same_seed,
            workers,
            grid_train,
            grid_test,
            out,
        } => {
            let s = settings(&train, grid_train)?;
            let u = UqSettings {
                runs,
                same_seed,
                workers,
            };
            commands::uq(&problem.load()?, solver, &s, &u, grid_test, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message.trim_end());
            ExitCode::from(e.code)
        }
    }
}
