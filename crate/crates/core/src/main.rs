//! `ldp-lab`: experiment driver. Every subcommand reads one strict JSON
//! config, writes JSON/CSV artifacts plus a `manifest.json` echoing the
//! resolved config, and exits 0 on success, 2 when the run succeeded but a
//! verdict failed, 1 on any error.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use ldp_lab::config::{
    self, ActionConfig, CheckHypothesesConfig, CouplingConfig, ExitProbConfig, LadderConfig,
    LyapunovScanConfig, MartingaleCheckConfig, MinimizeConfig, PinvLimitConfig, SimulateConfig,
    TubeProbConfig,
};
use ldp_lab::error::{Error, Result};
use ldp_lab::model::{self, ScanOptions};
use ldp_lab::path::Path;
use ldp_lab::psdlinalg::{self, DEFAULT_RCOND};
use ldp_lab::sde;
use ldp_lab::util::with_workers;
use ldp_lab::{action, estimator, minact, verify};

const EXIT_VERDICT_FAIL: u8 = 2;

#[derive(Parser)]
#[command(name = "ldp-lab", version, about = "Small-noise diffusion large-deviations lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probe the standing hypotheses (local Lipschitz, inward drift, balance)
    CheckHypotheses {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify the β→0 limit of ⟨x,(A+βI)⁻¹x⟩ for a PSD matrix
    PinvLimit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the rate functional on a path CSV
    Action {
        #[arg(long)]
        config: PathBuf,
    },
    /// Minimize the discretized action between fixed endpoints
    Minimize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate paths of the small-noise SDE
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate a tube-confinement probability
    TubeProb {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate an exit probability P(Θ_C ≤ T)
    ExitProb {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tube probabilities along a decreasing ε ladder, with the action target
    Ladder {
        #[arg(long)]
        config: PathBuf,
    },
    /// Deviation probability of the β-perturbed coupled process
    Coupling {
        #[arg(long)]
        config: PathBuf,
    },
    /// Scan the Lyapunov operator 𝔇V on concentric shells
    LyapunovScan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Empirical check of the exponential martingale tail bounds
    MartingaleCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::CheckHypotheses { config } => check_hypotheses(&config),
        Command::PinvLimit { config } => pinv_limit(&config),
        Command::Action { config } => action_cmd(&config),
        Command::Minimize { config } => minimize(&config),
        Command::Simulate { config } => simulate(&config),
        Command::TubeProb { config } => tube_prob(&config),
        Command::ExitProb { config } => exit_prob(&config),
        Command::Ladder { config } => ladder(&config),
        Command::Coupling { config } => coupling(&config),
        Command::LyapunovScan { config } => lyapunov_scan(&config),
        Command::MartingaleCheck { config } => martingale_check(&config),
    }
}

/// Write `manifest.json` echoing the resolved config. The timestamp lives
/// here and only here; all other artifacts are deterministic.
fn write_manifest<C: Serialize>(out: &FsPath, command: &str, cfg: &C) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a, C> {
        artifact_version: &'a str,
        command: &'a str,
        unix_time: u64,
        config: &'a C,
    }
    let manifest = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        command,
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config: cfg,
    };
    write_json(out, "manifest.json", &manifest)
}

fn ensure_output(dir: &FsPath) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(dir: &FsPath, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn check_hypotheses(path: &FsPath) -> Result<u8> {
    let cfg: CheckHypothesesConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "check-hypotheses", &cfg)?;
    let model = cfg.model.build()?;
    let opts = match &cfg.scan {
        Some(block) => block.to_options(cfg.seed),
        None => ScanOptions { seed: cfg.seed, ..ScanOptions::default() },
    };
    let workers = cfg.workers.resolve()?;
    let report = with_workers(workers, || model::check_hypotheses(&model, &opts))?;
    write_json(&cfg.output, "report.json", &report)?;
    Ok(if report.any_fail() { EXIT_VERDICT_FAIL } else { 0 })
}

fn pinv_limit(path: &FsPath) -> Result<u8> {
    let cfg: PinvLimitConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "pinv-limit", &cfg)?;
    let a = cfg.matrix()?;
    let x = nalgebra::DVector::from_vec(cfg.x.clone());
    let rcond = cfg.rcond.unwrap_or(DEFAULT_RCOND);
    let classification = psdlinalg::pinv_limit_classify(&a, &x, rcond)?;
    let betas = cfg.betas.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01, 1e-3, 1e-4]);
    for w in betas.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Config("betas must be strictly decreasing".into()));
        }
    }
    let ladder: Vec<(f64, f64)> = betas
        .iter()
        .map(|&b| psdlinalg::regularized_quadratic(&a, &x, b).map(|v| (b, v)))
        .collect::<Result<_>>()?;
    #[derive(Serialize)]
    struct Report<'a> {
        classification: &'a psdlinalg::LimitClassification,
        /// (β, ⟨x,(A+βI)⁻¹x⟩) pairs along the requested ladder.
        regularized: &'a [(f64, f64)],
    }
    write_json(&cfg.output, "pinv_limit.json", &Report { classification: &classification, regularized: &ladder })?;
    println!("{}", serde_json::to_string(&classification)?);
    Ok(0)
}

fn action_cmd(path: &FsPath) -> Result<u8> {
    let cfg: ActionConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "action", &cfg)?;
    let model = cfg.model.build()?;
    let file = fs::File::open(&cfg.path_csv)
        .map_err(|e| Error::Config(format!("cannot open path CSV {}: {e}", cfg.path_csv.display())))?;
    let u = Path::read_csv(std::io::BufReader::new(file))?;
    match cfg.beta {
        Some(beta) => {
            let value = action::rate_functional_regularized(&model, &u, beta)?;
            #[derive(Serialize)]
            struct Regularized {
                beta: f64,
                value: f64,
            }
            write_json(&cfg.output, "action.json", &Regularized { beta, value })?;
        }
        None => {
            let result = action::rate_functional(
                &model,
                &u,
                cfg.rcond.unwrap_or(DEFAULT_RCOND),
                cfg.residual_tol.unwrap_or(action::DEFAULT_RESIDUAL_TOL),
            )?;
            write_json(&cfg.output, "action.json", &result)?;
        }
    }
    Ok(0)
}

fn minimize(path: &FsPath) -> Result<u8> {
    let cfg: MinimizeConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "minimize", &cfg)?;
    let model = cfg.model.build()?;
    let problem = minact::MinActionProblem {
        model,
        end: nalgebra::DVector::from_vec(cfg.end.clone()),
        t_end: cfg.t_end,
        n_steps: cfg.n_steps,
        beta: cfg.beta,
        max_iters: cfg.max_iters,
        grad_tol: cfg.grad_tol,
    };
    let result = minact::minimize_action(&problem)?;
    write_json(&cfg.output, "minimize.json", &result)?;
    let mut buf = Vec::new();
    result.path.write_csv(&mut buf)?;
    fs::write(cfg.output.join("minimizer.csv"), buf)?;
    Ok(0)
}

fn simulate(path: &FsPath) -> Result<u8> {
    let cfg: SimulateConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "simulate", &cfg)?;
    let model = cfg.model.build()?;
    let sim = cfg.sim.to_sim_config(cfg.seed)?;
    if cfg.n_paths == 0 {
        return Err(Error::Config("n_paths must be positive".into()));
    }
    let workers = cfg.workers.resolve()?;
    let paths: Vec<Path> = with_workers(workers, || {
        ldp_lab::util::batch_map(cfg.n_paths, |i| sde::simulate_path(&model, &sim, i as u64))
            .into_iter()
            .collect::<Result<_>>()
    })?;
    for (i, p) in paths.iter().enumerate() {
        let name = if cfg.n_paths == 1 { "path.csv".to_string() } else { format!("path_{i}.csv") };
        let mut buf = Vec::new();
        p.write_csv(&mut buf)?;
        fs::write(cfg.output.join(name), buf)?;
    }
    let dim = model.dim();
    let mean_terminal: Vec<f64> = (0..dim)
        .map(|j| paths.iter().map(|p| p.states().last().unwrap()[j]).sum::<f64>() / cfg.n_paths as f64)
        .collect();
    #[derive(Serialize)]
    struct Summary {
        n_paths: usize,
        mean_terminal: Vec<f64>,
    }
    write_json(&cfg.output, "simulate.json", &Summary { n_paths: cfg.n_paths, mean_terminal })?;
    Ok(0)
}

fn load_target_path(csv: &Option<PathBuf>, model: &ldp_lab::model::DiffusionModel, sim: &sde::SimConfig) -> Result<Path> {
    match csv {
        Some(p) => {
            let file = fs::File::open(p)
                .map_err(|e| Error::Config(format!("cannot open path CSV {}: {e}", p.display())))?;
            Path::read_csv(std::io::BufReader::new(file))
        }
        None => action::flow_path(model, sim.t_end, sim.n_steps()),
    }
}

fn tube_prob(path: &FsPath) -> Result<u8> {
    let cfg: TubeProbConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "tube-prob", &cfg)?;
    let model = cfg.model.build()?;
    let sim = cfg.sim.to_sim_config(cfg.seed)?;
    let u = load_target_path(&cfg.path_csv, &model, &sim)?;
    let workers = cfg.workers.resolve()?;
    let est = with_workers(workers, || estimator::tube_probability(&model, &u, cfg.delta, &sim, cfg.n))?;
    write_json(&cfg.output, "tube_prob.json", &est)?;
    Ok(0)
}

fn exit_prob(path: &FsPath) -> Result<u8> {
    let cfg: ExitProbConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "exit-prob", &cfg)?;
    let model = cfg.model.build()?;
    let sim = cfg.sim.to_sim_config(cfg.seed)?;
    let workers = cfg.workers.resolve()?;
    let est = with_workers(workers, || estimator::exit_probability(&model, cfg.c, &sim, cfg.n))?;
    write_json(&cfg.output, "exit_prob.json", &est)?;
    Ok(0)
}

fn ladder_csv(rows: &[estimator::LadderRow]) -> String {
    let mut out = String::from("epsilon,hits,n,p_hat,p_lo,p_hi,eps2_log_p,is_upper_bound,target\n");
    for r in rows {
        let e = &r.estimate;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.epsilon, e.hits, e.n, e.p_hat, e.p_lo, e.p_hi, e.eps2_log_p, e.is_upper_bound, r.target
        ));
    }
    out
}

fn ladder(path: &FsPath) -> Result<u8> {
    let cfg: LadderConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "ladder", &cfg)?;
    let model = cfg.model.build()?;
    let sim = cfg.sim.to_sim_config(cfg.seed)?;
    let u = load_target_path(&cfg.path_csv, &model, &sim)?;
    let workers = cfg.workers.resolve()?;
    let rows = with_workers(workers, || {
        estimator::ldp_ladder(
            &model,
            &u,
            cfg.delta,
            &cfg.eps_list,
            &sim,
            cfg.n,
            cfg.rcond.unwrap_or(DEFAULT_RCOND),
            cfg.residual_tol.unwrap_or(action::DEFAULT_RESIDUAL_TOL),
        )
    })?;
    write_json(&cfg.output, "ladder.json", &rows)?;
    fs::write(cfg.output.join("ladder.csv"), ladder_csv(&rows))?;
    Ok(0)
}

fn coupling(path: &FsPath) -> Result<u8> {
    let cfg: CouplingConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "coupling", &cfg)?;
    let model = cfg.model.build()?;
    let sim = cfg.sim.to_sim_config(cfg.seed)?;
    let workers = cfg.workers.resolve()?;
    let est = with_workers(workers, || {
        estimator::coupling_deviation_probability(&model, &sim, cfg.beta, cfg.c, cfg.n)
    })?;
    write_json(&cfg.output, "coupling.json", &est)?;
    Ok(0)
}

fn lyapunov_scan(path: &FsPath) -> Result<u8> {
    let cfg: LyapunovScanConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "lyapunov-scan", &cfg)?;
    let model = cfg.model.build()?;
    let report = verify::lyapunov_scan(&model, cfg.c, cfg.l, &cfg.radii, cfg.directions, cfg.seed)?;
    write_json(&cfg.output, "lyapunov.json", &report)?;
    Ok(if report.verdict == verify::ScanVerdict::Failed { EXIT_VERDICT_FAIL } else { 0 })
}

fn martingale_check(path: &FsPath) -> Result<u8> {
    let cfg: MartingaleCheckConfig = config::load_config(path)?;
    ensure_output(&cfg.output)?;
    write_manifest(&cfg.output, "martingale-check", &cfg)?;
    let workers = cfg.workers.resolve()?;
    let report = with_workers(workers, || {
        verify::martingale_bound_check(&cfg.alphas, cfg.bracket, cfg.t_end, cfg.dt, cfg.n, cfg.seed)
    })?;
    write_json(&cfg.output, "martingale.json", &report)?;
    Ok(if report.all_pass { 0 } else { EXIT_VERDICT_FAIL })
}
