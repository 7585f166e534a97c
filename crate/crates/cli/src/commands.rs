use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use containment_core::attacks::dos_duty_fit;
use containment_core::cpl::{integrate_regulator_flow, pack_delta, regulator_direct_solve, unpack_delta};
use containment_core::sim::{assemble, validate, CheckStatus, ValidationReport};
use containment_core::Error as CoreError;

use crate::config::{self, ConfigError, ExperimentConfig, Resolved};
use crate::output::{write_run, RunReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// An error carrying the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
#[error("{msg}")]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

/// Exit code for an error returned by any command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code;
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<CoreError>() {
        Some(CoreError::NonFinite { .. }) => EXIT_DIVERGED,
        _ => EXIT_CHECK,
    }
}

fn config_failure(e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_CONFIG, e.to_string())
}

/// Loads and resolves a config, mapping every problem to exit code 2.
pub fn load_resolved(path: &Path) -> anyhow::Result<(ExperimentConfig, Resolved)> {
    let cfg = config::load(path).map_err(config_failure)?;
    config::sanity(&cfg).map_err(config_failure)?;
    let resolved = cfg
        .resolve()
        .map_err(|e| config_failure(format!("{}: {e}", path.display())))?;
    Ok((cfg, resolved))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

pub fn print_validation(out: &mut dyn Write, report: &ValidationReport) -> std::io::Result<()> {
    for item in &report.items {
        let tag = match item.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Warn => "warn",
            CheckStatus::Fail => "FAIL",
        };
        if item.detail.is_empty() {
            writeln!(out, "[{tag}] {}", item.name)?;
        } else {
            writeln!(out, "[{tag}] {}: {}", item.name, item.detail)?;
        }
    }
    let q = &report.quantities;
    writeln!(out, "sigma_max(S)             = {:.6}", q.sigma_max_s)?;
    writeln!(out, "lambda_min(Omega Theta^-1) = {}", fmt_opt(q.lambda_min_omega_theta_inv))?;
    writeln!(out, "tau_a                    = {}", fmt_opt(q.tau_a))?;
    writeln!(out, "T0                       = {}", fmt_opt(q.t0))?;
    writeln!(out, "mu1 bound                = {}", fmt_opt(q.mu1_bound))?;
    for (i, b) in q.mu3_bounds.iter().enumerate() {
        writeln!(out, "mu3 bound (follower {})   = {}", i + 1, fmt_opt(*b))?;
    }
    writeln!(out, "alpha1, alpha2           = {}, {}", fmt_opt(q.alpha1), fmt_opt(q.alpha2))?;
    writeln!(out, "duty threshold           = {}", fmt_opt(q.duty_threshold))?;
    let s = &report.sizes;
    writeln!(out, "state size               = {}", s.total)?;
    Ok(())
}

/// `sim check`: prints every condition, fails only on hard failures.
pub fn cmd_check(path: &Path, out: &mut dyn Write) -> anyhow::Result<ValidationReport> {
    let (_, resolved) = load_resolved(path)?;
    let report = validate(&resolved.closed_loop).map_err(config_failure)?;
    print_validation(out, &report)?;
    if report.has_failures() {
        let names: Vec<&str> = report.failures().map(|f| f.name.as_str()).collect();
        return Err(Failure::new(EXIT_CHECK, format!("hard check failed: {}", names.join(", "))).into());
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

/// `sim run`: integrates the loop and writes trace.csv, diagnostics.csv and
/// report.json into `out_dir`.
pub fn cmd_run(path: &Path, out_dir: &Path, overrides: RunOverrides) -> anyhow::Result<bool> {
    let (cfg, mut resolved) = load_resolved(path)?;
    let cl = &mut resolved.closed_loop;
    if let Some(dt) = overrides.dt {
        if !(dt > 0.0) {
            return Err(Failure::new(EXIT_CONFIG, "--dt must be positive").into());
        }
        cl.dt = dt;
    }
    if let Some(h) = overrides.horizon {
        if !(h > 0.0) {
            return Err(Failure::new(EXIT_CONFIG, "--horizon must be positive").into());
        }
        cl.horizon = h;
    }
    let dos_fit = if cl.dos.is_empty() {
        None
    } else {
        dos_duty_fit(&cl.dos, cl.horizon).ok()
    };
    let system = assemble(resolved.closed_loop).map_err(|e| match e {
        CoreError::Assumption { .. } => Failure::new(EXIT_CHECK, e.to_string()),
        other => config_failure(other),
    })?;
    info!("{}: {} steps of {}", cfg.display_name(), system.n_steps(), system.config().dt);
    let trace = system.run().map_err(|e| match e {
        CoreError::NonFinite { .. } => Failure::new(EXIT_DIVERGED, e.to_string()),
        other => Failure::new(EXIT_CHECK, other.to_string()),
    })?;
    let report = RunReport::new(cfg.display_name(), &trace, dos_fit);
    write_run(out_dir, &trace, &report)?;
    if !trace.summary.bounds_satisfied {
        warn!("{}: ultimate bounds not met on the tail", cfg.display_name());
    }
    Ok(trace.summary.bounds_satisfied)
}

#[derive(Debug, Clone)]
pub struct RegsolveResult {
    pub pi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub state_residual: f64,
    pub output_residual: f64,
    pub flow_pi: DMatrix<f64>,
    pub flow_gamma: DMatrix<f64>,
    pub difference: f64,
}

/// `sim regsolve`: direct solve against the gradient flow for one follower
/// (1-based index).
pub fn cmd_regsolve(path: &Path, follower: usize, out: &mut dyn Write) -> anyhow::Result<RegsolveResult> {
    let (_, resolved) = load_resolved(path)?;
    let cl = &resolved.closed_loop;
    let n = cl.followers.len();
    if follower == 0 || follower > n {
        return Err(Failure::new(EXIT_CONFIG, format!("--follower must be in 1..={n}, got {follower}")).into());
    }
    let fm = &cl.followers[follower - 1].model;
    let (s, r) = (&cl.leader.s, &cl.leader.r);
    let direct = regulator_direct_solve(s, r, fm).map_err(|e| Failure::new(EXIT_CHECK, e.to_string()))?;
    let exact = pack_delta(&direct.pi, &direct.gamma)?;
    let delta0 = DVector::zeros(exact.len());
    let flow = integrate_regulator_flow(s, r, fm, cl.mu3, &delta0, None)
        .map_err(|e| Failure::new(EXIT_CHECK, e.to_string()))?;
    let (flow_pi, flow_gamma) = unpack_delta(&flow, fm, cl.leader.q())?;
    let difference = (&flow - &exact).norm();

    writeln!(out, "follower {follower}")?;
    writeln!(out, "Pi ={}", direct.pi)?;
    writeln!(out, "Gamma ={}", direct.gamma)?;
    writeln!(out, "state residual  ||A Pi + B Gamma - Pi S|| = {:.3e}", direct.state_residual)?;
    writeln!(out, "output residual ||C Pi - R||              = {:.3e}", direct.output_residual)?;
    writeln!(out, "flow Pi ={flow_pi}")?;
    writeln!(out, "flow Gamma ={flow_gamma}")?;
    writeln!(out, "||Delta_flow - Delta_direct|| = {difference:.3e}")?;
    Ok(RegsolveResult {
        pi: direct.pi,
        gamma: direct.gamma,
        state_residual: direct.state_residual,
        output_residual: direct.output_residual,
        flow_pi,
        flow_gamma,
        difference,
    })
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub result: Result<bool, (u8, String)>,
}

/// Config files of a sweep directory in name order.
pub fn sweep_configs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// `sim sweep`: runs every `*.json` in `dir` on `jobs` threads, writing each
/// into `<out>/<stem>/`.
pub fn cmd_sweep(dir: &Path, out: Option<&Path>, jobs: usize) -> anyhow::Result<Vec<SweepOutcome>> {
    let files = sweep_configs(dir)?;
    if files.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, format!("no .json configs in {}", dir.display())).into());
    }
    let out_root = out.map_or_else(|| dir.join("runs"), Path::to_path_buf);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("cannot start worker pool")?;
    let outcomes = pool.install(|| {
        files
            .par_iter()
            .map(|cfg| {
                let stem = cfg.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
                let out_dir = out_root.join(stem);
                let result = cmd_run(cfg, &out_dir, RunOverrides::default()).map_err(|e| (exit_code(&e), e.to_string()));
                SweepOutcome {
                    config: cfg.clone(),
                    out_dir,
                    result,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(outcomes)
}
