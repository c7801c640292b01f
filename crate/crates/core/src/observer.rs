//! Newton inversion of the transform and closed-loop simulation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lu_solve;
use crate::system::{DiscreteSystem, ObserverSpec};
use crate::transform::{fd_jacobian_central, TransformMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianSource {
    /// Use the map's own Jacobian, falling back to differences.
    Map,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub jacobian: JacobianSource,
    pub fd_step: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
            max_iterations: 50,
            jacobian: JacobianSource::Map,
            fd_step: 1e-6,
            max_halvings: 10,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.fd_step > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument("Newton tolerances and limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn defect(map: &dyn TransformMap, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if !map.contains(x) {
        return Err(Error::Domain {
            expr: "transform".into(),
            msg: format!("{x:?} is outside the map's domain"),
        });
    }
    Ok(map.eval(x)?.iter().zip(z).map(|(t, z)| t - z).collect())
}

/// Solves `T(x) = z` from `x0`. At least one step is always taken.
pub fn newton_invert(map: &dyn TransformMap, z: &[f64], x0: &[f64], opts: &NewtonOptions) -> Result<NewtonResult> {
    opts.validate()?;
    let n = map.dim();
    if z.len() != n || x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if z.len() != n { z.len() } else { x0.len() },
        });
    }
    let fail = |iterations: usize, reason: String| Error::Newton { iterations, reason };
    let mut x = x0.to_vec();
    let mut g = defect(map, &x, z).map_err(|e| fail(0, format!("initial guess: {e}")))?;
    for it in 1..=opts.max_iterations {
        let jac = match opts.jacobian {
            JacobianSource::Map => map.jacobian(&x).unwrap_or_else(|| fd_jacobian_central(map, &x, opts.fd_step)),
            JacobianSource::FiniteDifference => fd_jacobian_central(map, &x, opts.fd_step),
        }
        .map_err(|e| fail(it - 1, format!("Jacobian: {e}")))?;
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut delta = lu_solve(&jac, &neg).map_err(|e| fail(it - 1, format!("Jacobian: {e}")))?;
        let mut halvings = 0;
        let (trial, g_trial) = loop {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            match defect(map, &trial, z) {
                Ok(gt) if gt.iter().all(|v| v.is_finite()) => break (trial, gt),
                outcome => {
                    if halvings == opts.max_halvings {
                        let why = match outcome {
                            Err(e) => e.to_string(),
                            Ok(_) => "non-finite defect".into(),
                        };
                        return Err(fail(it, format!("left the domain after {halvings} halvings: {why}")));
                    }
                    halvings += 1;
                    delta.iter_mut().for_each(|d| *d *= 0.5);
                }
            }
        };
        x = trial;
        g = g_trial;
        if inf_norm(&g) <= opts.abs_tol && inf_norm(&delta) <= opts.rel_tol * (1.0 + inf_norm(&x)) {
            return Ok(NewtonResult { x, iterations: it });
        }
    }
    Err(fail(
        opts.max_iterations,
        format!("no convergence, final defect {:e}", inf_norm(&g)),
    ))
}

/// Closed-loop record; row `t` holds the quantities at time `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub x_hat: Vec<Vec<f64>>,
    /// `z(t) - T(x(t))`.
    pub e_z: Vec<Vec<f64>>,
    /// `x(t) - x_hat(t)`.
    pub e_x: Vec<Vec<f64>>,
    pub newton_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn e_z_inf(&self) -> Vec<f64> {
        self.e_z.iter().map(|v| inf_norm(v)).collect()
    }

    pub fn e_x_inf(&self) -> Vec<f64> {
        self.e_x.iter().map(|v| inf_norm(v)).collect()
    }

    /// CSV with columns `t, x.., y, z.., xhat.., ez_inf, ex_inf, newton_iters`.
    pub fn to_csv(&self, n: usize) -> String {
        let mut s = String::from("t");
        for prefix in ["x", "", "z", "xhat"] {
            if prefix.is_empty() {
                s.push_str(",y");
                continue;
            }
            for i in 1..=n {
                let _ = write!(s, ",{prefix}{i}");
            }
        }
        s.push_str(",ez_inf,ex_inf,newton_iters\n");
        for t in 0..self.len() {
            let _ = write!(s, "{t}");
            for v in &self.x[t] {
                let _ = write!(s, ",{v}");
            }
            let _ = write!(s, ",{}", self.y[t]);
            for v in self.z[t].iter().chain(&self.x_hat[t]) {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(
                s,
                ",{},{},{}",
                inf_norm(&self.e_z[t]),
                inf_norm(&self.e_x[t]),
                self.newton_iterations[t]
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct SimulationInput {
    pub x0: Vec<f64>,
    pub z0: Vec<f64>,
    /// Newton starting point for the first step.
    pub x_hat_guess: Vec<f64>,
    pub horizon: usize,
}

/// A failed simulation with everything recorded before the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct SimulationFailure {
    pub partial: Trajectory,
    pub error: Error,
}

impl From<SimulationFailure> for Error {
    fn from(f: SimulationFailure) -> Error {
        f.error
    }
}

/// Runs plant and observer for `horizon` steps, recovering `x_hat(t)` from
/// `z(t)` by warm-started Newton.
pub fn simulate(
    sys: &DiscreteSystem,
    obs: &ObserverSpec,
    map: &dyn TransformMap,
    input: &SimulationInput,
    opts: &NewtonOptions,
) -> std::result::Result<Trajectory, SimulationFailure> {
    let mut traj = Trajectory::default();
    let n = sys.n;
    for (what, v) in [("x0", &input.x0), ("z0", &input.z0), ("x_hat_guess", &input.x_hat_guess)] {
        if v.len() != n || map.dim() != n {
            return Err(SimulationFailure {
                partial: traj,
                error: Error::InvalidArgument(format!("{what} must have length {n}")),
            });
        }
    }
    let mut x = input.x0.clone();
    let mut z = input.z0.clone();
    let mut guess = input.x_hat_guess.clone();
    for t in 0..input.horizon {
        let row = (|| -> Result<_> {
            let y = sys.output(&x)?;
            let tx = map.eval(&x)?;
            let inv = newton_invert(map, &z, &guess, opts)?;
            Ok((y, tx, inv))
        })();
        let (y, tx, inv) = match row {
            Ok(r) => r,
            Err(e) => {
                return Err(SimulationFailure {
                    partial: traj,
                    error: Error::Simulation {
                        step: t,
                        source: Box::new(e),
                    },
                })
            }
        };
        traj.e_z.push(z.iter().zip(&tx).map(|(a, b)| a - b).collect());
        traj.e_x.push(x.iter().zip(&inv.x).map(|(a, b)| a - b).collect());
        traj.newton_iterations.push(inv.iterations);
        traj.x.push(x.clone());
        traj.y.push(y);
        traj.z.push(z.clone());
        traj.x_hat.push(inv.x.clone());
        guess = inv.x;
        if t + 1 == input.horizon {
            break;
        }
        let advanced = obs.advance(&z, y).and_then(|zn| Ok((zn, sys.step(&x)?)));
        match advanced {
            Ok((zn, xn)) => {
                z = zn;
                x = xn;
            }
            Err(e) => {
                return Err(SimulationFailure {
                    partial: traj,
                    error: Error::Simulation {
                        step: t + 1,
                        source: Box::new(e),
                    },
                })
            }
        }
    }
    Ok(traj)
}

/// Max over `t` of `||e_z(t+1) - A e_z(t)||_inf` with `e_z = z - T(x)`,
/// starting the observer from `z(0) = 0`. No inversion is needed.
pub fn error_dynamics_check(
    sys: &DiscreteSystem,
    obs: &ObserverSpec,
    map: &dyn TransformMap,
    x0: &[f64],
    horizon: usize,
) -> Result<f64> {
    let n = sys.n;
    let mut x = x0.to_vec();
    let mut z = vec![0.0; n];
    let wrap = |step: usize| move |e: Error| Error::Simulation { step, source: Box::new(e) };
    let mut e_prev: Vec<f64> = z.iter().zip(map.eval(&x).map_err(wrap(0))?).map(|(a, b)| a - b).collect();
    let mut worst = 0.0f64;
    for t in 0..horizon {
        let y = sys.output(&x).map_err(wrap(t))?;
        z = obs.advance(&z, y).map_err(wrap(t))?;
        x = sys.step(&x).map_err(wrap(t))?;
        let tx = map.eval(&x).map_err(wrap(t + 1))?;
        let e: Vec<f64> = z.iter().zip(&tx).map(|(a, b)| a - b).collect();
        let ae = obs.a.matvec(&e_prev);
        worst = worst.max(e.iter().zip(&ae).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        e_prev = e;
    }
    Ok(worst)
}
