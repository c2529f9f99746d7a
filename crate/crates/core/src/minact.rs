//! Minimization of the regularized action over discretized paths with fixed
//! endpoints: gradient descent with Armijo backtracking (Barzilai–Borwein
//! trial step), starting from the straight-line path.
//!
//! Optimization always runs on J_β with β̃ = max(β, β_floor) because the
//! pseudoinverse functional is non-smooth across rank changes; the final
//! value is re-evaluated at the requested β (pseudoinverse route when β = 0).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::action::{self, ActionValue};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::path::Path;
use crate::psdlinalg::DEFAULT_RCOND;

pub const BETA_FLOOR: f64 = 1e-6;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const STAGNATION_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct MinActionProblem {
    pub model: DiffusionModel,
    pub end: DVector<f64>,
    pub t_end: f64,
    pub n_steps: usize,
    /// Requested regularization; 0 asks for pseudoinverse weighting in the
    /// final report.
    pub beta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinActionResult {
    #[serde(skip)]
    pub path: Path,
    pub value: ActionValue,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn drift_jacobian(model: &DiffusionModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = model.dim();
    let h = 1e-5 * (1.0 + x.norm());
    let mut jac = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let col = (model.drift(&xp)? - model.drift(&xm)?) / (2.0 * h);
        jac.set_column(i, &col);
    }
    Ok(jac)
}

fn a_partials(model: &DiffusionModel, x: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
    let d = model.dim();
    let h = 1e-5 * (1.0 + x.norm());
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        out.push((model.eval_a(&xp)? - model.eval_a(&xm)?) / (2.0 * h));
    }
    Ok(out)
}

/// Exact gradient of the midpoint-rule discretization of J_β with respect to
/// the interior nodes, assembled from per-interval contributions. The drift
/// Jacobian and ∂a/∂x_i come from central finite differences.
pub fn action_gradient(model: &DiffusionModel, path: &Path, beta: f64) -> Result<Vec<DVector<f64>>> {
    if beta <= 0.0 {
        return Err(Error::InvalidArgument("action_gradient requires beta > 0".into()));
    }
    let d = model.dim();
    let n = path.n_steps();
    let dt = path.dt();
    let states = path.states();
    let mut grad = vec![DVector::zeros(d); n.saturating_sub(1)];

    for k in 0..n {
        let m = (&states[k] + &states[k + 1]) * 0.5;
        let v = (&states[k + 1] - &states[k]) / dt;
        let b = model.drift(&m).map_err(|e| e.at_node("action_gradient", k))?;
        let a = model.eval_a(&m).map_err(|e| e.at_node("action_gradient", k))?;
        let mut a_reg = a;
        for i in 0..d {
            a_reg[(i, i)] += beta;
        }
        let chol = a_reg
            .cholesky()
            .ok_or_else(|| Error::Numeric("a(m)+βI is not positive definite".into()))?;
        let excess = &v - &b;
        let g = chol.solve(&excess); // (a+βI)⁻¹ (v − b)

        let jac_b = drift_jacobian(model, &m)?;
        let parts = a_partials(model, &m)?;
        // shared midpoint-chain terms: −(dt/2)·J_b^T g − (dt/4)·s,
        // s_i = g^T (∂a/∂x_i) g; velocity term contributes ±g
        let mut shared = jac_b.transpose() * &g * (-dt / 2.0);
        for i in 0..d {
            shared[i] -= dt / 4.0 * g.dot(&(&parts[i] * &g));
        }
        if k >= 1 {
            grad[k - 1] += &shared - &g;
        }
        if k + 1 <= n - 1 {
            grad[k] += &shared + &g;
        }
    }
    Ok(grad)
}

fn grad_norm(grad: &[DVector<f64>]) -> f64 {
    grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
}

fn flat_dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn apply_step(path: &Path, grad: &[DVector<f64>], step: f64) -> Path {
    let mut out = path.clone();
    for (j, g) in grad.iter().enumerate() {
        out.states_mut()[j + 1] -= g * step;
    }
    out
}

/// Minimize the action from model.x0 to `problem.end` over paths with fixed
/// endpoints. Accepted iterates never increase J_β̃.
pub fn minimize_action(problem: &MinActionProblem) -> Result<MinActionResult> {
    if problem.n_steps < 4 {
        return Err(Error::InvalidArgument("n_steps must be >= 4".into()));
    }
    if problem.beta < 0.0 {
        return Err(Error::InvalidArgument("beta must be nonnegative".into()));
    }
    if problem.grad_tol <= 0.0 {
        return Err(Error::InvalidArgument("grad_tol must be positive".into()));
    }
    let model = &problem.model;
    let beta_opt = problem.beta.max(BETA_FLOOR);
    let mut path = Path::straight_line(model.x0(), &problem.end, problem.t_end, problem.n_steps)?;
    let mut f = action::rate_functional_regularized(model, &path, beta_opt)?;
    if !f.is_finite() {
        return Err(Error::Numeric(
            "action is non-finite at the initial path; try a larger beta".into(),
        ));
    }
    let mut grad = action_gradient(model, &path, beta_opt)?;
    let mut gn = grad_norm(&grad);
    let mut prev_state: Option<(Vec<DVector<f64>>, Vec<DVector<f64>>)> = None; // (interior nodes, gradient)
    let mut step = 1.0 / (1.0 + gn);
    let mut iterations = 0;
    let mut last_rel_decrease = f64::INFINITY;

    while iterations < problem.max_iters && gn > problem.grad_tol {
        iterations += 1;
        if let Some((x_prev, g_prev)) = &prev_state {
            let interior: Vec<DVector<f64>> =
                path.states()[1..path.n_steps()].iter().cloned().collect();
            let dx: Vec<DVector<f64>> =
                interior.iter().zip(x_prev).map(|(a, b)| a - b).collect();
            let dg: Vec<DVector<f64>> = grad.iter().zip(g_prev).map(|(a, b)| a - b).collect();
            let den = flat_dot(&dx, &dg);
            if den > 0.0 {
                step = (flat_dot(&dx, &dx) / den).clamp(1e-12, 1e6);
            } else {
                step *= 2.0;
            }
        }
        // Armijo backtracking with halving
        let g2 = gn * gn;
        let mut accepted = None;
        let mut alpha = step;
        for _ in 0..MAX_HALVINGS {
            let candidate = apply_step(&path, &grad, alpha);
            let f_new = action::rate_functional_regularized(model, &candidate, beta_opt)?;
            if f_new <= f - ARMIJO_C * alpha * g2 {
                accepted = Some((candidate, f_new));
                break;
            }
            alpha *= 0.5;
        }
        let Some((candidate, f_new)) = accepted else {
            // no acceptable step: treat as stagnation
            last_rel_decrease = 0.0;
            break;
        };
        prev_state = Some((
            path.states()[1..path.n_steps()].to_vec(),
            grad.clone(),
        ));
        last_rel_decrease = (f - f_new) / f.abs().max(f64::MIN_POSITIVE);
        path = candidate;
        f = f_new;
        grad = action_gradient(model, &path, beta_opt)?;
        gn = grad_norm(&grad);
    }

    // converged: gradient target reached, or no meaningful decrease left
    let converged = gn <= problem.grad_tol || last_rel_decrease < STAGNATION_REL_TOL;

    let value = if problem.beta > 0.0 {
        ActionValue::Finite(action::rate_functional_regularized(model, &path, problem.beta)?)
    } else {
        action::rate_functional(model, &path, DEFAULT_RCOND, crate::action::DEFAULT_RESIDUAL_TOL)?.value
    };
    Ok(MinActionResult { path, value, grad_norm: gn, iterations, converged })
}
