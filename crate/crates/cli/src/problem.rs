//! Problem sources: built-in benchmarks and TOML system-definition files.

use std::path::Path;

use pinn_observer::benchmarks::{get_by_name, Benchmark};
use pinn_observer::expr::parse;
use pinn_observer::linalg::Matrix;
use pinn_observer::pinn::ContinuationSchedule;
use pinn_observer::system::{DiscreteSystem, ObserverSpec};
use pinn_observer::transform::ExprMap;
use serde::Deserialize;

use crate::CliError;

/// Everything the commands need about one observer-design problem.
pub struct Problem {
    pub name: String,
    pub system: DiscreteSystem,
    pub observer: ObserverSpec,
    /// Lower bound of the square domain `[lower, 0]^n`.
    pub lower: f64,
    pub schedule: ContinuationSchedule,
    /// Closed-form transform used as the evaluation oracle, when known.
    pub oracle: Option<ExprMap>,
    pub initial_state: Vec<f64>,
}

impl Problem {
    pub fn n(&self) -> usize {
        self.system.n
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| (self.lower..=0.0).contains(&v))
    }

    pub fn oracle(&self) -> Result<&ExprMap, CliError> {
        self.oracle
            .as_ref()
            .ok_or_else(|| CliError::usage(format!("problem `{}` has no closed-form transform to compare against", self.name)))
    }

    pub fn from_benchmark(b: Benchmark) -> Self {
        let n = b.n();
        Problem {
            name: b.id.to_string(),
            system: b.system,
            observer: b.observer,
            lower: b.domain[0].0,
            schedule: b.schedule,
            oracle: Some(b.analytic_t),
            initial_state: in_domain_start(b.domain[0].0, n),
        }
    }
}

/// Default initial plant state: inside the domain, away from its corner.
fn in_domain_start(lower: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lower * if i == 0 { 0.4 } else { 0.2 }).collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    name: Option<String>,
    system: SystemSection,
    observer: ObserverSection,
    domain: DomainSection,
    transform: Option<TransformSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    phi: Vec<String>,
    h: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObserverSection {
    a: Vec<Vec<f64>>,
    b: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainSection {
    lower: f64,
    schedule: Option<Vec<f64>>,
    initial_state: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformSection {
    t: Vec<String>,
    #[serde(default)]
    positive: Vec<String>,
}

fn diag(what: &str, e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{what}: {e}"))
}

pub fn parse_problem(text: &str) -> Result<Problem, CliError> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| diag("problem file", e))?;
    let n = file.system.phi.len();
    let phi = file
        .system
        .phi
        .iter()
        .enumerate()
        .map(|(i, t)| parse(t, n).map_err(|e| diag(&format!("system.phi[{i}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let h = parse(&file.system.h, n).map_err(|e| diag("system.h", e))?;
    let system = DiscreteSystem::new(phi, h).map_err(|e| diag("system", e))?;
    let a = Matrix::from_rows(&file.observer.a).map_err(|e| diag("observer.a", e))?;
    let b = file
        .observer
        .b
        .iter()
        .enumerate()
        .map(|(i, t)| parse(t, 1).map_err(|e| diag(&format!("observer.b[{i}]"), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let observer = ObserverSpec::new(a, b).map_err(|e| diag("observer", e))?;
    if observer.n() != n {
        return Err(CliError::usage(format!(
            "observer has dimension {} but the system has {n} states",
            observer.n()
        )));
    }
    let lower = file.domain.lower;
    if !(lower < 0.0) {
        return Err(CliError::usage("domain.lower must be negative"));
    }
    let schedule = match file.domain.schedule {
        Some(lowers) => ContinuationSchedule::new(lowers).map_err(|e| diag("domain.schedule", e))?,
        None => ContinuationSchedule::single(lower).map_err(|e| diag("domain", e))?,
    };
    if (schedule.final_lower() - lower).abs() > 1e-12 {
        return Err(CliError::usage("domain.schedule must end at domain.lower"));
    }
    let oracle = match file.transform {
        Some(t) => {
            let texts: Vec<&str> = t.t.iter().map(String::as_str).collect();
            let guards = t
                .positive
                .iter()
                .map(|g| parse(g, n))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| diag("transform.positive", e))?;
            Some(ExprMap::parse(n, &texts).map_err(|e| diag("transform.t", e))?.with_positive_guards(guards))
        }
        None => None,
    };
    let initial_state = match file.domain.initial_state {
        Some(x) if x.len() == n => x,
        Some(x) => {
            return Err(CliError::usage(format!(
                "domain.initial_state has {} entries, expected {n}",
                x.len()
            )))
        }
        None => in_domain_start(lower, n),
    };
    Ok(Problem {
        name: file.name.unwrap_or_else(|| "problem".into()),
        system,
        observer,
        lower,
        schedule,
        oracle,
        initial_state,
    })
}

pub fn load(benchmark: Option<&str>, problem: Option<&Path>) -> Result<Problem, CliError> {
    match (benchmark, problem) {
        (Some(name), None) => Ok(Problem::from_benchmark(
            get_by_name(name).map_err(|e| CliError::usage(e.to_string()))?,
        )),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            parse_problem(&text)
        }
        _ => Err(CliError::usage("give exactly one of --benchmark or --problem")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH1_TOML: &str = r#"
name = "bench1-file"

[system]
phi = [
  "exp(0.2*x2/(1+x2))*sqrt(1+x1+x2)-1-0.4*x2-0.5*ln(1+x1+x2)",
  "0.5*ln(1+x1+x2)+0.4*x2",
]
h = "x2"

[observer]
a = [[0.5, 0.3], [0.5, 0.4]]
b = ["0.2*y/(1+y)-0.3*y", "0"]

[domain]
lower = -0.495
schedule = [-0.1, -0.3, -0.495]

[transform]
t = ["ln(1+x1+x2)", "x2"]
positive = ["1+x1+x2"]
"#;

    #[test]
    fn parses_full_file() {
        let p = parse_problem(BENCH1_TOML).unwrap();
        assert_eq!(p.name, "bench1-file");
        assert_eq!(p.n(), 2);
        assert_eq!(p.schedule.lowers, vec![-0.1, -0.3, -0.495]);
        assert!(p.oracle.is_some());
        assert!(p.in_domain(&p.initial_state));
    }

    #[test]
    fn missing_schedule_means_one_stage() {
        let text = BENCH1_TOML.replace("schedule = [-0.1, -0.3, -0.495]\n", "");
        assert_eq!(parse_problem(&text).unwrap().schedule.lowers, vec![-0.495]);
    }

    #[test]
    fn bad_expression_names_the_key() {
        let text = BENCH1_TOML.replace("h = \"x2\"", "h = \"x3\"");
        let err = parse_problem(&text).err().unwrap();
        assert_eq!(err.code, 1);
        assert!(err.message.contains("system.h"), "{}", err.message);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BENCH1_TOML.replace("[domain]", "[domain]\nupper = 1.0");
        assert!(parse_problem(&text).is_err());
    }

    #[test]
    fn exactly_one_source() {
        assert_eq!(load(None, None).err().unwrap().code, 1);
        assert_eq!(load(Some("bench3"), None).err().unwrap().code, 1);
        assert_eq!(load(Some("bench2"), None).unwrap().n(), 2);
    }
}
