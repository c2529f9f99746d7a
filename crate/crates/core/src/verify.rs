//! Certificate checks: the bounded Lyapunov function V(x) = c‖x‖/(1+‖x‖)·‖x‖,
//! its generator-type operator 𝔇V = ⟨∇V, b⟩ + ½⟨∇V, a∇V⟩, a radial scan
//! comparing 𝔇V against the drift-controlled bound −½·c·r(x)·|⟨x,b⟩|/‖x‖,
//! and empirical frequency checks of the exponential martingale tail bounds
//! on simulated Brownian motion.

use serde::Serialize;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::sde::{stream_rng, NoiseStream};
use crate::util::batch_map;

/// V(x) = c·‖x‖²/(1+‖x‖). Bounded growth: V(x) ≤ c‖x‖, V(x) ~ c‖x‖ at ∞.
pub fn lyapunov_v(x: &DVector<f64>, c: f64) -> f64 {
    let n = x.norm();
    c * n * n / (1.0 + n)
}

/// Radial factor r(x) = (2+‖x‖)‖x‖/(1+‖x‖)² appearing in ∇V = c·r(x)·x/‖x‖.
/// Increases from 0 at the origin to 1 at infinity.
pub fn radial_factor(x: &DVector<f64>) -> f64 {
    let n = x.norm();
    (2.0 + n) * n / ((1.0 + n) * (1.0 + n))
}

/// ∇V(x) = c·r(x)·x/‖x‖, with ∇V(0) = 0.
pub fn lyapunov_grad(x: &DVector<f64>, c: f64) -> DVector<f64> {
    let n = x.norm();
    if n == 0.0 {
        return DVector::zeros(x.len());
    }
    x * (c * radial_factor(x) / n)
}

/// 𝔇V(x) = ⟨∇V, b(x)⟩ + ½⟨∇V, a(x)∇V⟩.
pub fn dv_operator(model: &DiffusionModel, x: &DVector<f64>, c: f64) -> Result<f64> {
    let g = lyapunov_grad(x, c);
    let b = model.drift(x)?;
    let a = model.eval_a(x)?;
    Ok(g.dot(&b) + 0.5 * g.dot(&(&a * &g)))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub enum ScanVerdict {
    /// 𝔇V ≤ bound ≤ 0 at every probed point with ‖x‖ > l.
    Certified,
    /// 𝔇V ≤ 0 outside the ball but the drift-controlled bound fails somewhere.
    NegativeOnly,
    /// 𝔇V > 0 at some probed point outside the ball.
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovScanRow {
    pub radius: f64,
    /// max over directions of 𝔇V on the sphere of this radius.
    pub dv_max: f64,
    /// max over directions of the bound −½·c·r(x)·|⟨x,b⟩|/‖x‖.
    pub bound_max: f64,
    /// max of 𝔇V − bound; ≤ 0 means the chain inequality held on this shell.
    pub slack_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    pub c: f64,
    pub l: f64,
    pub verdict: ScanVerdict,
    pub rows: Vec<LyapunovScanRow>,
    /// sup of |𝔇V| over probed points inside the ball ‖x‖ ≤ l.
    pub inner_sup: f64,
}

fn sphere_point(rng: &mut impl Rng, dim: usize, radius: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.norm();
        if n > 1e-8 {
            return v * (radius / n);
        }
    }
}

/// Probe 𝔇V on concentric spheres. Outside radius `l` the drift-controlled
/// bound −½·c·r·|⟨x,b⟩|/‖x‖ must dominate for a `Certified` verdict; inside
/// the ball only the sup of |𝔇V| is recorded.
pub fn lyapunov_scan(
    model: &DiffusionModel,
    c: f64,
    l: f64,
    radii: &[f64],
    directions: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    if c <= 0.0 {
        return Err(Error::InvalidArgument("lyapunov constant c must be positive".into()));
    }
    if l <= 0.0 {
        return Err(Error::InvalidArgument("ball radius L must be positive".into()));
    }
    if radii.is_empty() || directions == 0 {
        return Err(Error::InvalidArgument("need at least one radius and one direction".into()));
    }
    for &r in radii {
        if !(r > 0.0) {
            return Err(Error::InvalidArgument("scan radii must be positive".into()));
        }
    }
    let dim = model.dim();
    let mut rows = Vec::with_capacity(radii.len());
    let mut inner_sup = 0.0f64;
    let mut rng = stream_rng(seed, 0, NoiseStream::Base);
    // axis directions first, then random sphere points; deterministic in seed
    for (i, &radius) in radii.iter().enumerate() {
        let mut dv_max = f64::NEG_INFINITY;
        let mut bound_max = f64::NEG_INFINITY;
        let mut slack_max = f64::NEG_INFINITY;
        for j in 0..directions {
            let x = if j < 2 * dim {
                let mut e = DVector::zeros(dim);
                e[j / 2] = if j % 2 == 0 { radius } else { -radius };
                e
            } else {
                sphere_point(&mut rng, dim, radius)
            };
            let dv = dv_operator(model, &x, c)
                .map_err(|e| e.at_node("lyapunov scan", i))?;
            if radius <= l {
                inner_sup = inner_sup.max(dv.abs());
            }
            let b = model.drift(&x)?;
            let bound = -0.5 * c * radial_factor(&x) * x.dot(&b).abs() / radius;
            dv_max = dv_max.max(dv);
            bound_max = bound_max.max(bound);
            slack_max = slack_max.max(dv - bound);
        }
        rows.push(LyapunovScanRow { radius, dv_max, bound_max, slack_max });
    }
    let outer: Vec<&LyapunovScanRow> = rows.iter().filter(|r| r.radius > l).collect();
    let verdict = if outer.iter().any(|r| r.dv_max > 0.0) {
        ScanVerdict::Failed
    } else if outer.iter().any(|r| r.slack_max > 1e-12) {
        ScanVerdict::NegativeOnly
    } else {
        ScanVerdict::Certified
    };
    Ok(LyapunovReport { c, l, verdict, rows, inner_sup })
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleBoundRow {
    /// Which tail inequality: "a", "b", "c" or "d".
    pub item: String,
    pub alpha: f64,
    pub bracket: f64,
    /// Empirical frequency of the event over n sample paths.
    pub frequency: f64,
    /// Theoretical tail bound.
    pub bound: f64,
    /// frequency ≤ bound + 3·SE.
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub n: u64,
    pub t_end: f64,
    pub dt: f64,
    pub rows: Vec<MartingaleBoundRow>,
    pub all_pass: bool,
}

struct PathStats {
    sup_m: f64,
    sup_abs_m: f64,
    terminal_exp: f64, // e^{M_T − ⟨M⟩_T/2}
}

fn brownian_stats(seed: u64, index: u64, n_steps: usize, dt: f64) -> PathStats {
    let mut rng = stream_rng(seed, index, NoiseStream::Base);
    let sd = dt.sqrt();
    let mut m = 0.0f64;
    let mut sup_m = 0.0f64;
    let mut sup_abs_m = 0.0f64;
    for _ in 0..n_steps {
        m += sd * rng.sample::<f64, _>(StandardNormal);
        sup_m = sup_m.max(m);
        sup_abs_m = sup_abs_m.max(m.abs());
    }
    let t = n_steps as f64 * dt;
    PathStats { sup_m, sup_abs_m, terminal_exp: (m - 0.5 * t).exp() }
}

/// Check the four exponential tail bounds on standard Brownian motion
/// (⟨M⟩_t = t, so the bracket cap B is compared against T directly):
///   (a) P(sup e^{M−⟨M⟩/2} ≥ e^α)           ≤ e^{−α}
///   (b) P(sup M ≥ α, ⟨M⟩_T ≤ B)            ≤ e^{−α²/2B}
///   (c) P(sup |M| ≥ α, ⟨M⟩_T ≤ B)          ≤ 2e^{−α²/2B}
///   (d) P(sup |M| ≥ α)                      ≤ 2e^{−α²/2B} when ⟨M⟩ ≤ B a.s.
/// A row passes when the empirical frequency stays within three binomial
/// standard errors of its bound.
pub fn martingale_bound_check(
    alphas: &[f64],
    bracket: f64,
    t_end: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("need at least one alpha".into()));
    }
    for &a in alphas {
        if !(a > 0.0) {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
    }
    if !(bracket > 0.0) || !(t_end > 0.0) || !(dt > 0.0) || dt >= t_end {
        return Err(Error::InvalidArgument("need 0 < dt < T and bracket B > 0".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let n_steps = (t_end / dt).round() as usize;
    let stats = batch_map(n, |i| brownian_stats(seed, i as u64, n_steps, dt));
    let bracket_ok = t_end <= bracket; // deterministic bracket for Brownian motion
    let mut rows = Vec::new();
    for &alpha in alphas {
        // (a) supremum of the exponential martingale
        let thresh = alpha.exp();
        push_row(&mut rows, "a", alpha, bracket, (-alpha).exp(), n, stats.iter().filter(|s| s.terminal_exp >= thresh).count());
        // (b) one-sided sup with bracket condition
        let tail = (-alpha * alpha / (2.0 * bracket)).exp();
        push_row(&mut rows, "b", alpha, bracket, tail, n, if bracket_ok { stats.iter().filter(|s| s.sup_m >= alpha).count() } else { 0 });
        // (c) two-sided sup with bracket condition
        push_row(&mut rows, "c", alpha, bracket, 2.0 * tail, n, if bracket_ok { stats.iter().filter(|s| s.sup_abs_m >= alpha).count() } else { 0 });
        // (d) two-sided sup, bracket bounded a.s.; vacuous bound 1 otherwise
        let bound_d = if bracket_ok { (2.0 * tail).min(1.0) } else { 1.0 };
        push_row(&mut rows, "d", alpha, bracket, bound_d, n, stats.iter().filter(|s| s.sup_abs_m >= alpha).count());
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(MartingaleReport { n: n as u64, t_end, dt, rows, all_pass })
}

fn push_row(rows: &mut Vec<MartingaleBoundRow>, item: &str, alpha: f64, bracket: f64, bound: f64, n: usize, hits: usize) {
    let f = hits as f64 / n as f64;
    let se = (f * (1.0 - f) / n as f64).sqrt();
    rows.push(MartingaleBoundRow {
        item: item.to_string(),
        alpha,
        bracket,
        frequency: f,
        bound,
        pass: f <= bound + 3.0 * se,
    });
}
