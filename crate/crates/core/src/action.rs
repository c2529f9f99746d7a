//! The rate functional J_T(u) = ½∫‖u̇−b(u)‖²_{a⊕(u)} dt on discretized paths,
//! with the admissibility constraints that force J = ∞: the path must start
//! at x₀ and its excess velocity u̇−b(u) must stay in range(a(u)).
//!
//! Quadrature is the midpoint rule: velocities v_k = (u_{k+1}−u_k)/dt are
//! paired with midpoint states m_k = (u_k+u_{k+1})/2. Summation runs in fixed
//! node order so results are deterministic.

use nalgebra::DVector;
use serde::{Serialize, Serializer};

use crate::error::Result;
use crate::model::DiffusionModel;
use crate::path::Path;
use crate::psdlinalg::{self, LimitKind};

/// Default relative per-node tolerance separating genuine range-constraint
/// violations from roundoff.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;

/// A rate-functional value: finite or the +∞ sentinel. Admissibility is a
/// verdict, never a floating overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActionValue {
    Finite(f64),
    Infinite,
}

impl ActionValue {
    pub fn is_finite(self) -> bool {
        matches!(self, ActionValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ActionValue::Finite(v) => Some(v),
            ActionValue::Infinite => None,
        }
    }
}

impl Serialize for ActionValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ActionValue::Finite(v) => s.serialize_f64(*v),
            ActionValue::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionResult {
    pub value: ActionValue,
    /// Max over nodes of the relative range residual ‖a a⊕(u̇−b) − (u̇−b)‖/‖u̇−b‖.
    pub constraint_residual: f64,
    /// ‖u₀ − x₀‖.
    pub start_mismatch: f64,
    pub admissible: bool,
    /// ½‖v_k − b(m_k)‖²_{a⊕(m_k)} per interval (0 where divergent).
    pub per_node_integrand: Vec<f64>,
}

/// Midpoint velocities v_k = (u_{k+1}−u_k)/dt, one per interval.
pub fn finite_difference_velocity(path: &Path) -> Vec<DVector<f64>> {
    let dt = path.dt();
    path.states()
        .windows(2)
        .map(|w| (&w[1] - &w[0]) / dt)
        .collect()
}

fn midpoints(path: &Path) -> Vec<DVector<f64>> {
    path.states().windows(2).map(|w| (&w[0] + &w[1]) * 0.5).collect()
}

/// Evaluate J_T(u) with pseudoinverse weighting and the Γ_T admissibility
/// checks. Divergent range classification at any midpoint, a start mismatch,
/// or a constraint residual above `residual_tol` all force the +∞ sentinel.
pub fn rate_functional(
    model: &DiffusionModel,
    path: &Path,
    rcond: f64,
    residual_tol: f64,
) -> Result<ActionResult> {
    let dt = path.dt();
    let velocities = finite_difference_velocity(path);
    let mids = midpoints(path);
    let start_mismatch = (&path.states()[0] - model.x0()).norm();

    let mut value = 0.0;
    let mut any_divergent = false;
    let mut constraint_residual = 0.0f64;
    let mut per_node_integrand = Vec::with_capacity(velocities.len());

    for (k, (v, m)) in velocities.iter().zip(&mids).enumerate() {
        let b = model.drift(m).map_err(|e| e.at_node("rate_functional", k))?;
        let a = model.eval_a(m).map_err(|e| e.at_node("rate_functional", k))?;
        let excess = v - b;
        let cls = psdlinalg::pinv_limit_classify(&a, &excess, rcond)?;
        let enorm = excess.norm();
        if enorm >= 1e-12 {
            constraint_residual = constraint_residual.max(cls.range_residual / enorm);
        }
        match cls.kind {
            LimitKind::Finite => {
                let integrand = 0.5 * cls.value.expect("finite classification carries a value");
                per_node_integrand.push(integrand);
                value += dt * integrand;
            }
            LimitKind::Divergent => {
                any_divergent = true;
                per_node_integrand.push(0.0);
            }
        }
    }

    let admissible =
        !any_divergent && start_mismatch <= residual_tol && constraint_residual <= residual_tol;
    Ok(ActionResult {
        value: if admissible { ActionValue::Finite(value) } else { ActionValue::Infinite },
        constraint_residual,
        start_mismatch,
        admissible,
        per_node_integrand,
    })
}

/// Scalar shortcut J(u) = ½∫(u̇−b)²/σ² dt with the 0/0 = 0 convention:
/// a node where both the excess velocity and σ² vanish contributes nothing;
/// σ² = 0 with a genuine excess forces +∞.
pub fn rate_functional_scalar(model: &DiffusionModel, path: &Path, residual_tol: f64) -> Result<ActionValue> {
    assert_eq!(model.dim(), 1, "rate_functional_scalar requires dim = 1");
    let dt = path.dt();
    let velocities = finite_difference_velocity(path);
    let mids = midpoints(path);
    if (&path.states()[0] - model.x0()).norm() > residual_tol {
        return Ok(ActionValue::Infinite);
    }
    let mut value = 0.0;
    for (k, (v, m)) in velocities.iter().zip(&mids).enumerate() {
        let b = model.drift(m).map_err(|e| e.at_node("rate_functional_scalar", k))?;
        let a = model.eval_a(m).map_err(|e| e.at_node("rate_functional_scalar", k))?;
        let excess = v[0] - b[0];
        let a00 = a[(0, 0)];
        if a00 == 0.0 {
            if excess * excess > residual_tol * residual_tol {
                return Ok(ActionValue::Infinite);
            }
            // 0/0 = 0
        } else {
            value += 0.5 * dt * excess * excess / a00;
        }
    }
    Ok(ActionValue::Finite(value))
}

/// The regularized functional J_β(u): same quadrature with weight
/// (a(m_k)+βI)⁻¹. Always finite for β > 0.
pub fn rate_functional_regularized(model: &DiffusionModel, path: &Path, beta: f64) -> Result<f64> {
    let dt = path.dt();
    let velocities = finite_difference_velocity(path);
    let mids = midpoints(path);
    let mut value = 0.0;
    for (k, (v, m)) in velocities.iter().zip(&mids).enumerate() {
        let b = model.drift(m).map_err(|e| e.at_node("rate_functional_regularized", k))?;
        let a = model.eval_a(m).map_err(|e| e.at_node("rate_functional_regularized", k))?;
        let excess = v - b;
        value += 0.5 * dt * psdlinalg::regularized_quadratic(&a, &excess, beta)?;
    }
    Ok(value)
}

/// Integrate u̇ = b(u) from x₀ with classical RK4 on a uniform grid.
pub fn flow_path(model: &DiffusionModel, t_end: f64, n_steps: usize) -> Result<Path> {
    let dt = t_end / n_steps as f64;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = model.x0().clone();
    states.push(x.clone());
    for _ in 0..n_steps {
        let k1 = model.drift(&x)?;
        let k2 = model.drift(&(&x + &k1 * (dt / 2.0)))?;
        let k3 = model.drift(&(&x + &k2 * (dt / 2.0)))?;
        let k4 = model.drift(&(&x + &k3 * dt))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        states.push(x.clone());
    }
    Path::new(t_end, states)
}
