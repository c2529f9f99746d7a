//! Strict JSON experiment configs. Unknown keys are rejected and parse
//! errors carry the offending key path.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, ScanOptions};
use crate::sde::{Scheme, SimConfig};

/// Model families constructible from a config file; custom drift/diffusion
/// pairs are library-only.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Linear {
        x0: Vec<f64>,
        theta: f64,
        sigma_scale: f64,
    },
    CubicExample {
        x0: f64,
    },
    GradientPolynomial {
        x0: Vec<f64>,
        coefficients: Vec<f64>,
        sigma_scale: f64,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<DiffusionModel> {
        match self {
            ModelSpec::Linear { x0, theta, sigma_scale } => {
                DiffusionModel::linear(DVector::from_vec(x0.clone()), *theta, *sigma_scale)
            }
            ModelSpec::CubicExample { x0 } => DiffusionModel::cubic_example(*x0),
            ModelSpec::GradientPolynomial { x0, coefficients, sigma_scale } => DiffusionModel::gradient_polynomial(
                DVector::from_vec(x0.clone()),
                coefficients.clone(),
                *sigma_scale,
            ),
        }
    }
}

/// Worker pool size: a positive integer or `"auto"` (global default pool).
/// The environment variable `LDP_LAB_WORKERS` overrides either.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Workers {
    #[default]
    Auto,
    Count(usize),
}

impl Serialize for Workers {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Workers::Auto => s.serialize_str("auto"),
            Workers::Count(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Workers {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "auto" => Ok(Workers::Auto),
            serde_json::Value::Number(n) if n.as_u64().is_some() => {
                Ok(Workers::Count(n.as_u64().unwrap() as usize))
            }
            _ => Err(D::Error::custom("workers must be a nonnegative integer or \"auto\"")),
        }
    }
}

impl Workers {
    /// Resolve against the `LDP_LAB_WORKERS` environment variable;
    /// `None` means the global default pool.
    pub fn resolve(self) -> Result<Option<usize>> {
        if let Ok(v) = std::env::var("LDP_LAB_WORKERS") {
            let k: usize = v
                .parse()
                .map_err(|_| Error::Config(format!("LDP_LAB_WORKERS must be a positive integer, got '{v}'")))?;
            if k == 0 {
                return Err(Error::Config("LDP_LAB_WORKERS must be positive".into()));
            }
            return Ok(Some(k));
        }
        match self {
            Workers::Auto => Ok(None),
            Workers::Count(0) => Err(Error::Config("workers must be positive".into())),
            Workers::Count(k) => Ok(Some(k)),
        }
    }
}

/// Simulation block shared by the sampling subcommands; the seed lives at
/// the top level of each config.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SimBlock {
    pub fn to_sim_config(&self, seed: u64) -> Result<SimConfig> {
        let cfg = SimConfig { epsilon: self.epsilon, t_end: self.t_end, dt: self.dt, seed, scheme: self.scheme };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_seed() -> u64 {
    0
}

fn default_output() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub radii: Vec<f64>,
    pub probes_per_shell: usize,
    pub l: f64,
    pub ball_radius: f64,
    pub pair_samples: usize,
    /// Analytic assertions for H-1, H-2, H-3 in that order.
    #[serde(default)]
    pub analytic: [bool; 3],
}

impl ScanBlock {
    pub fn to_options(&self, seed: u64) -> ScanOptions {
        ScanOptions {
            radii: self.radii.clone(),
            probes_per_shell: self.probes_per_shell,
            l: self.l,
            ball_radius: self.ball_radius,
            pair_samples: self.pair_samples,
            seed,
            analytic: self.analytic,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckHypothesesConfig {
    pub model: ModelSpec,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub scan: Option<ScanBlock>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinvLimitConfig {
    /// Symmetric PSD matrix, row-major.
    pub matrix: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub rcond: Option<f64>,
    /// Regularization ladder for the β → 0 diagnostic; must be decreasing.
    pub betas: Option<Vec<f64>>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl PinvLimitConfig {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.matrix.len();
        if n == 0 {
            return Err(Error::Config("matrix must be nonempty".into()));
        }
        for row in &self.matrix {
            if row.len() != n {
                return Err(Error::Config("matrix must be square".into()));
            }
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.matrix[i][j]))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub model: ModelSpec,
    /// Path CSV (`t,x1,...,xd`) to evaluate.
    pub path_csv: PathBuf,
    pub rcond: Option<f64>,
    pub residual_tol: Option<f64>,
    /// Optional regularization; when set, reports J_β instead of J.
    pub beta: Option<f64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub model: ModelSpec,
    pub end: Vec<f64>,
    pub t_end: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub beta: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelSpec,
    pub sim: SimBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    /// Number of paths; 1 writes `path.csv`, more write `path_<k>.csv`.
    pub n_paths: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeProbConfig {
    pub model: ModelSpec,
    pub sim: SimBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    pub delta: f64,
    pub n: usize,
    /// Tube center; the deterministic flow of the model when omitted.
    pub path_csv: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitProbConfig {
    pub model: ModelSpec,
    pub sim: SimBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    pub c: f64,
    pub n: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub model: ModelSpec,
    /// `sim.epsilon` is the base value; each ladder row overrides it.
    pub sim: SimBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    pub delta: f64,
    /// Strictly decreasing noise ladder.
    pub eps_list: Vec<f64>,
    pub n: usize,
    pub path_csv: Option<PathBuf>,
    pub rcond: Option<f64>,
    pub residual_tol: Option<f64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub model: ModelSpec,
    pub sim: SimBlock,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    pub beta: f64,
    /// Cap C for the coupled stopping time τ^β_C.
    pub c: f64,
    pub n: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovScanConfig {
    pub model: ModelSpec,
    pub c: f64,
    pub l: f64,
    pub radii: Vec<f64>,
    pub directions: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleCheckConfig {
    pub alphas: Vec<f64>,
    pub bracket: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub workers: Workers,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

/// Parse a config strictly; errors name the offending key path.
pub fn load_config<T: DeserializeOwned>(path: &FsPath) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let p = e.path().to_string();
        if p == "." {
            Error::Config(e.inner().to_string())
        } else {
            Error::Config(format!("{p}: {}", e.inner()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_spec_builds_each_family() {
        let linear: ModelSpec =
            parse_config(r#"{"family":"linear","x0":[0.5,0.0],"theta":1.0,"sigma_scale":1.0}"#).unwrap();
        assert_eq!(linear.build().unwrap().dim(), 2);

        let cubic: ModelSpec = parse_config(r#"{"family":"cubic_example","x0":0.3}"#).unwrap();
        assert_eq!(cubic.build().unwrap().dim(), 1);

        let grad: ModelSpec = parse_config(
            r#"{"family":"gradient_polynomial","x0":[1.0],"coefficients":[0.0,1.0],"sigma_scale":0.5}"#,
        )
        .unwrap();
        assert_eq!(grad.build().unwrap().dim(), 1);
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = parse_config::<ExitProbConfig>(
            r#"{"model":{"family":"cubic_example","x0":0.3},
                "sim":{"epsilon":0.1,"t_end":1.0,"dt":0.01,"dtt":1},
                "c":2.0,"n":10}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sim") && msg.contains("dtt"), "got: {msg}");
    }

    #[test]
    fn negative_dt_names_sim_dt() {
        let cfg: ExitProbConfig = parse_config(
            r#"{"model":{"family":"cubic_example","x0":0.3},
                "sim":{"epsilon":0.1,"t_end":1.0,"dt":-0.01},
                "c":2.0,"n":10}"#,
        )
        .unwrap();
        let err = cfg.sim.to_sim_config(cfg.seed).unwrap_err();
        assert!(err.to_string().contains("sim.dt"), "got: {err}");
    }

    #[test]
    fn workers_parses_auto_and_count() {
        #[derive(Deserialize)]
        struct W {
            workers: Workers,
        }
        let w: W = parse_config(r#"{"workers":"auto"}"#).unwrap();
        assert_eq!(w.workers, Workers::Auto);
        let w: W = parse_config(r#"{"workers":4}"#).unwrap();
        assert_eq!(w.workers, Workers::Count(4));
        assert!(parse_config::<W>(r#"{"workers":"many"}"#).is_err());
    }

    #[test]
    fn pinv_matrix_must_be_square() {
        let cfg: PinvLimitConfig =
            parse_config(r#"{"matrix":[[1.0,0.0]],"x":[1.0,0.0]}"#).unwrap();
        assert!(cfg.matrix().is_err());
        let cfg: PinvLimitConfig =
            parse_config(r#"{"matrix":[[2.0,0.0],[0.0,0.0]],"x":[1.0,0.0]}"#).unwrap();
        assert_eq!(cfg.matrix().unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn scheme_defaults_to_tamed() {
        let cfg: SimulateConfig = parse_config(
            r#"{"model":{"family":"cubic_example","x0":0.3},
                "sim":{"epsilon":0.1,"t_end":1.0,"dt":0.01},
                "n_paths":1}"#,
        )
        .unwrap();
        assert_eq!(cfg.sim.scheme, Scheme::Tamed);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.workers, Workers::Auto);
    }
}
