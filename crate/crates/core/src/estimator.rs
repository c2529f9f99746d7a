//! Crude Monte Carlo estimation of the probabilities appearing in the LDP
//! statements: tube events sup‖X−u‖ ≤ δ, exit events Θ_C ≤ T, the ε²·log
//! scaling ladder against −J_T(u), and the coupling deviation probability
//! P(sup‖X^{ε,β}−X^ε‖ > β^{1/4}).
//!
//! Rare rows with zero hits report the rule-of-three upper bound ε²·ln(3/n)
//! and are flagged as upper bounds rather than estimates. Diverged paths
//! count conservatively (miss for tube events, hit for exit/deviation
//! events) and are tallied separately. Confidence intervals are exact
//! Clopper–Pearson at 95%.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::action;
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::path::Path;
use crate::sde::{self, SimConfig};
use crate::util::batch_map;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Outcome {
    Hit,
    Miss,
    Diverged,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TubeEstimate {
    pub epsilon: f64,
    /// Tube half-width δ (exit level C for exit events, β^{1/4} for
    /// coupling-deviation events).
    pub delta: f64,
    pub t_end: f64,
    pub hits: u64,
    pub n: u64,
    pub diverged: u64,
    pub p_hat: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    /// ε²·ln p̂, or the rule-of-three upper bound ε²·ln(3/n) when hits = 0.
    pub eps2_log_p: f64,
    pub is_upper_bound: bool,
}

impl TubeEstimate {
    fn from_outcomes(epsilon: f64, delta: f64, t_end: f64, outcomes: &[Outcome], diverged_as_hit: bool) -> Self {
        let n = outcomes.len() as u64;
        let diverged = outcomes.iter().filter(|o| **o == Outcome::Diverged).count() as u64;
        let mut hits = outcomes.iter().filter(|o| **o == Outcome::Hit).count() as u64;
        if diverged_as_hit {
            hits += diverged;
        }
        let (p_lo, p_hi) = clopper_pearson(hits, n, 0.95);
        let (eps2_log_p, is_upper_bound) = log_prob_summary(hits, n, epsilon);
        TubeEstimate {
            epsilon,
            delta,
            t_end,
            hits,
            n,
            diverged,
            p_hat: hits as f64 / n as f64,
            p_lo,
            p_hi,
            eps2_log_p,
            is_upper_bound,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderRow {
    pub epsilon: f64,
    pub estimate: TubeEstimate,
    /// −J_T(u) from the rate functional.
    pub target: f64,
}

/// Exact two-sided Clopper–Pearson interval at the given confidence level.
pub fn clopper_pearson(hits: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n >= 1 && hits <= n);
    assert!((0.0..1.0).contains(&confidence));
    let alpha = 1.0 - confidence;
    let h = hits as f64;
    let m = n as f64;
    let lo = if hits == 0 {
        0.0
    } else {
        Beta::new(h, m - h + 1.0).expect("valid beta parameters").inverse_cdf(alpha / 2.0)
    };
    let hi = if hits == n {
        1.0
    } else {
        Beta::new(h + 1.0, m - h).expect("valid beta parameters").inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// ε²·ln of the estimated probability; zero hits fall back to the
/// rule-of-three upper bound 3/n, flagged as an upper bound.
pub fn log_prob_summary(hits: u64, n: u64, epsilon: f64) -> (f64, bool) {
    assert!(n >= 1 && hits <= n);
    if hits > 0 {
        (epsilon * epsilon * (hits as f64 / n as f64).ln(), false)
    } else {
        (epsilon * epsilon * (3.0 / n as f64).ln(), true)
    }
}

fn simulate_outcome(
    model: &DiffusionModel,
    cfg: &SimConfig,
    index: u64,
    event: impl Fn(&Path) -> bool,
) -> Result<Outcome> {
    match sde::simulate_path(model, cfg, index) {
        Ok(path) => Ok(if event(&path) { Outcome::Hit } else { Outcome::Miss }),
        Err(Error::Divergence { .. }) => Ok(Outcome::Diverged),
        Err(e) => Err(e),
    }
}

fn collect_outcomes(results: Vec<Result<Outcome>>) -> Result<Vec<Outcome>> {
    results.into_iter().collect()
}

/// Estimate P(sup_k ‖X_k − u_k‖ ≤ δ) over n independent paths. The target
/// path is resampled onto the simulation grid by linear interpolation when
/// the grids differ.
pub fn tube_probability(
    model: &DiffusionModel,
    u: &Path,
    delta: f64,
    cfg: &SimConfig,
    n: usize,
) -> Result<TubeEstimate> {
    cfg.validate()?;
    if delta <= 0.0 {
        return Err(Error::InvalidArgument("delta must be positive".into()));
    }
    if (u.t_end() - cfg.t_end).abs() > 1e-9 * (1.0 + cfg.t_end) {
        return Err(Error::InvalidArgument("target path and simulation horizons differ".into()));
    }
    let target = u.resample(cfg.n_steps())?;
    let outcomes = collect_outcomes(batch_map(n, |i| {
        simulate_outcome(model, cfg, i as u64, |path| {
            path.states()
                .iter()
                .zip(target.states())
                .all(|(x, uk)| (x - uk).norm() <= delta)
        })
    }))?;
    Ok(TubeEstimate::from_outcomes(cfg.epsilon, delta, cfg.t_end, &outcomes, false))
}

/// Estimate P(Θ_C ≤ T), the probability that the path norm reaches C before
/// the horizon. Diverged paths count as exits.
pub fn exit_probability(model: &DiffusionModel, c: f64, cfg: &SimConfig, n: usize) -> Result<TubeEstimate> {
    cfg.validate()?;
    if c <= model.x0().norm() {
        return Err(Error::InvalidArgument("exit level C must exceed ‖x₀‖".into()));
    }
    let outcomes = collect_outcomes(batch_map(n, |i| {
        simulate_outcome(model, cfg, i as u64, |path| {
            sde::first_exit_time(path, c).map(|t| t <= cfg.t_end).unwrap_or(false)
        })
    }))?;
    Ok(TubeEstimate::from_outcomes(cfg.epsilon, c, cfg.t_end, &outcomes, true))
}

/// One tube estimate per ε, sharing u, δ and n; every row carries the
/// action target −J_T(u).
pub fn ldp_ladder(
    model: &DiffusionModel,
    u: &Path,
    delta: f64,
    eps_list: &[f64],
    base_cfg: &SimConfig,
    n: usize,
    rcond: f64,
    residual_tol: f64,
) -> Result<Vec<LadderRow>> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("eps_list must be nonempty".into()));
    }
    for w in eps_list.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidArgument("eps_list must be strictly decreasing".into()));
        }
    }
    let j = action::rate_functional(model, u, rcond, residual_tol)?
        .value
        .finite()
        .ok_or_else(|| Error::InvalidArgument("target path has infinite action".into()))?;
    let target = -j;
    eps_list
        .iter()
        .map(|&epsilon| {
            let cfg = SimConfig { epsilon, ..*base_cfg };
            let estimate = tube_probability(model, u, delta, &cfg, n)?;
            Ok(LadderRow { epsilon, estimate, target })
        })
        .collect()
}

/// Estimate P(sup_{t ≤ τ^β_C∧T} ‖X^{ε,β} − X^ε‖ > β^{1/4}) over n coupled
/// simulations.
pub fn coupling_deviation_probability(
    model: &DiffusionModel,
    cfg: &SimConfig,
    beta: f64,
    c: f64,
    n: usize,
) -> Result<TubeEstimate> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument("beta must lie in [0,1]".into()));
    }
    if c <= 0.0 {
        return Err(Error::InvalidArgument("cap C must be positive".into()));
    }
    let threshold = beta.powf(0.25);
    let outcomes = collect_outcomes(batch_map(n, |i| {
        match sde::simulate_perturbed_path(model, cfg, beta, i as u64) {
            Ok(pair) => Ok(if beta == 0.0 {
                Outcome::Miss // identical paths by construction
            } else if pair.sup_deviation_up_to(c) > threshold {
                Outcome::Hit
            } else {
                Outcome::Miss
            }),
            Err(Error::Divergence { .. }) => Ok(Outcome::Diverged),
            Err(e) => Err(e),
        }
    }))?;
    Ok(TubeEstimate::from_outcomes(cfg.epsilon, threshold, cfg.t_end, &outcomes, true))
}
