//! Levenberg–Marquardt least squares with a forward-difference Jacobian.
//!
//! Minimizes `sum_i r_i(p)^2`. Each outer iteration builds the Jacobian at
//! the current iterate, then solves the Marquardt-scaled normal equations
//! `(J^T J + lambda diag(J^T J)) delta = -J^T r`, raising `lambda` by the
//! increase factor on every rejected trial and lowering it on acceptance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};

/// Damping above which the normal equations are considered hopeless.
const DAMPING_CEILING: f64 = 1e12;
/// Relative floor on `diag(J^T J)` so dead parameters keep a positive scale.
const DIAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    pub max_fevals: usize,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub step_tol: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub cost_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_fevals: 500_000,
            max_iterations: 50_000,
            fd_step: 1e-5,
            step_tol: 1e-12,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            cost_tol: 1e-14,
        }
    }
}

impl LmOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.fd_step,
            self.step_tol,
            self.initial_damping,
            self.damping_increase,
            self.damping_decrease,
            self.cost_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_fevals == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidArgument("LM options must all be positive".into()));
        }
        if self.fd_step >= 1.0 {
            return Err(Error::InvalidArgument("LM finite-difference step must be < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    StepTol,
    CostTol,
    MaxIter,
    MaxFeval,
    /// Damping exceeded its ceiling without finding a decrease.
    DampingLimit,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::StepTol => "step-tol",
            Termination::CostTol => "cost-tol",
            Termination::MaxIter => "max-iter",
            Termination::MaxFeval => "max-feval",
            Termination::DampingLimit => "damping-limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub fevals: usize,
    pub termination: Termination,
    /// Cost at the start and after each accepted step.
    pub cost_history: Vec<f64>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Forward-difference Jacobian; column `j` is `(r(x + h e_j) - r(x)) / h`.
/// `r0` is the residual at `x` when the caller already has it.
pub fn fd_jacobian<F>(residual: &F, x: &[f64], r0: Option<&[f64]>, step: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let base;
    let r0 = match r0 {
        Some(r) => r,
        None => {
            base = residual(x)?;
            &base
        }
    };
    let m = r0.len();
    let cols: Vec<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|j| {
            let mut xp = x.to_vec();
            xp[j] += step;
            let rp = residual(&xp).map_err(|e| Error::JacobianColumn {
                column: j,
                source: Box::new(e),
            })?;
            if rp.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: rp.len(),
                });
            }
            Ok(rp.iter().zip(r0).map(|(a, b)| (a - b) / step).collect())
        })
        .collect::<Result<_>>()?;
    let mut jac = Matrix::zeros(m.max(1), x.len().max(1));
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            jac[(i, j)] = *v;
        }
    }
    Ok(jac)
}

/// Runs Levenberg–Marquardt from `x0`.
pub fn minimize<F>(residual: F, x0: &[f64], opts: &LmOptions) -> Result<LmResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    opts.validate()?;
    let np = x0.len();
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let mut fevals = 1;
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::InvalidArgument("initial residual is not finite".into()));
    }
    let mut history = vec![cost];
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;

    let finish = |x: Vec<f64>, cost, iterations, fevals, termination, history| LmResult {
        params: x,
        cost,
        iterations,
        fevals,
        termination,
        cost_history: history,
    };

    if cost < opts.cost_tol {
        return Ok(finish(x, cost, 0, fevals, Termination::CostTol, history));
    }

    loop {
        if iterations >= opts.max_iterations {
            return Ok(finish(x, cost, iterations, fevals, Termination::MaxIter, history));
        }
        if fevals + np > opts.max_fevals {
            return Ok(finish(x, cost, iterations, fevals, Termination::MaxFeval, history));
        }
        let jac = fd_jacobian(&residual, &x, Some(&r), opts.fd_step)?;
        fevals += np;
        iterations += 1;

        let (jtj, jtr) = normal_equations(&jac, &r);
        let max_diag = (0..np).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = DIAG_FLOOR * max_diag.max(f64::MIN_POSITIVE);

        loop {
            let mut lhs = jtj.clone();
            for i in 0..np {
                lhs[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let neg_g: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let delta = match lu_solve(&lhs, &neg_g) {
                Ok(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => {
                    lambda *= opts.damping_increase;
                    if lambda > DAMPING_CEILING {
                        return Ok(finish(x, cost, iterations, fevals, Termination::DampingLimit, history));
                    }
                    continue;
                }
            };
            let step_norm = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step_norm < opts.step_tol {
                return Ok(finish(x, cost, iterations, fevals, Termination::StepTol, history));
            }
            if fevals + 1 > opts.max_fevals {
                return Ok(finish(x, cost, iterations, fevals, Termination::MaxFeval, history));
            }
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let trial_r = residual(&trial);
            fevals += 1;
            let trial_cost = match &trial_r {
                Ok(rt) => sum_sq(rt),
                Err(_) => f64::INFINITY,
            };
            if trial_cost.is_finite() && trial_cost < cost {
                x = trial;
                r = trial_r.expect("finite cost implies Ok");
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / opts.damping_decrease).max(f64::MIN_POSITIVE);
                if cost < opts.cost_tol {
                    return Ok(finish(x, cost, iterations, fevals, Termination::CostTol, history));
                }
                break;
            }
            lambda *= opts.damping_increase;
            if lambda > DAMPING_CEILING {
                return Ok(finish(x, cost, iterations, fevals, Termination::DampingLimit, history));
            }
        }
    }
}

fn normal_equations(jac: &Matrix, r: &[f64]) -> (Matrix, Vec<f64>) {
    let (m, np) = (jac.rows(), jac.cols());
    let mut jtj = Matrix::zeros(np, np);
    let mut jtr = vec![0.0; np];
    let data = jac.as_slice();
    for i in 0..m {
        let row = &data[i * np..(i + 1) * np];
        let ri = r[i];
        for a in 0..np {
            let va = row[a];
            if va == 0.0 {
                continue;
            }
            jtr[a] += va * ri;
            for b in a..np {
                jtj[(a, b)] += va * row[b];
            }
        }
    }
    for a in 0..np {
        for b in 0..a {
            jtj[(a, b)] = jtj[(b, a)];
        }
    }
    (jtj, jtr)
}
