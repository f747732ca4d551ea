//! The `verify` command: closed forms checked against brute-force oracles.
//!
//! Deterministic checks run on the configured parameters and on four
//! reference sets (sigma = T = 1, mu = x0 = 0). The simulator and quantizer
//! checks are Monte-Carlo and run once.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use ou_bridge::noise::{domain, StandardNormals};
use ou_bridge::oracle::{conditioned_kernel, nystrom_eigen, DenseKernel};
use ou_bridge::quantizer::{distortion, lloyd, QuantizerConfig};
use ou_bridge::{bridge_cov, bridge_mean, kl_basis, total_bridge_variance, OuParams, Simulator, TimeGrid};

use crate::config::{Format, RunConfig};
use crate::output::{csv_document, emit, json_document};
use crate::VerificationFailed;

/// `(theta, sigma0^2)` with sigma = T = 1.
pub const REFERENCE_SETS: [(f64, f64); 4] = [(1.0, 0.5), (1.0, 2.0), (-0.5, 1.0), (0.0, 1.0)];

pub const KERNEL_POINTS: usize = 100;
pub const KERNEL_TOL: f64 = 1e-10;
pub const NYSTROM_POINTS: usize = 2000;
pub const NYSTROM_MODES: usize = 5;
pub const NYSTROM_RTOL: f64 = 5e-3;
pub const MERCER_MODES: usize = 2000;
pub const MERCER_RTOL: f64 = 1e-4;
pub const BROWNIAN_TOL: f64 = 1e-10;
/// Monte-Carlo checks pass within this many standard errors.
pub const MC_SIGMAS: f64 = 4.0;
pub const LLOYD_POINT_TOL: f64 = 1e-6;
pub const LLOYD_EVAL_BUDGET: usize = 1_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub params: String,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, params: &str, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            params: params.into(),
            error,
            tolerance,
            pass: error <= tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} [{}] error={:.3e} tol={:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.params,
            self.error,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn label(p: &OuParams) -> String {
    format!(
        "theta={} sigma={} sigma0^2={:.6} T={}",
        p.theta(),
        p.sigma(),
        p.sigma0_sq(),
        p.horizon()
    )
}

fn reference_params() -> anyhow::Result<Vec<OuParams>> {
    REFERENCE_SETS
        .iter()
        .map(|&(theta, s0)| Ok(OuParams::new(theta, 0.0, 1.0, s0.sqrt(), 0.0, 1.0)?))
        .collect()
}

/// Closed-form kernel against the Schur complement of the process kernel.
pub fn kernel_consistency(p: &OuParams) -> anyhow::Result<Check> {
    let grid = TimeGrid::uniform(p.horizon(), KERNEL_POINTS - 1)?;
    let oracle = conditioned_kernel(p, &grid)?;
    let closed = DenseKernel::from_fn(grid, |s, t| bridge_cov(p, s, t))?;
    Ok(Check::new("kernel_consistency", &label(p), oracle.max_abs_diff(&closed.matrix), KERNEL_TOL))
}

/// Largest relative gap between the top analytic eigenvalues, scaled by
/// `corrupt`, and the Nyström eigenvalues of the oracle kernel.
pub fn nystrom_agreement(p: &OuParams, corrupt: f64) -> anyhow::Result<Check> {
    let grid = TimeGrid::uniform(p.horizon(), NYSTROM_POINTS - 1)?;
    let numeric = nystrom_eigen(&conditioned_kernel(p, &grid)?, NYSTROM_MODES)?;
    let analytic = kl_basis(p, NYSTROM_MODES)?;
    let err = analytic
        .modes
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (corrupt * a.lambda / b.lambda - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(Check::new("nystrom_eigenvalues", &label(p), err, NYSTROM_RTOL))
}

/// Partial eigenvalue sum plus tail estimate against the integrated variance.
pub fn mercer_trace(p: &OuParams) -> anyhow::Result<Check> {
    let basis = kl_basis(p, MERCER_MODES)?;
    let sum: f64 = basis.eigenvalues().iter().sum();
    let trace = total_bridge_variance(p)?;
    let err = ((sum + basis.tail_estimate()) / trace - 1.0).abs();
    Ok(Check::new("mercer_trace", &label(p), err, MERCER_RTOL))
}

/// Brownian-bridge closed forms; only meaningful for theta = sigma0 = 0.
pub fn brownian_closed_forms(p: &OuParams) -> anyhow::Result<Check> {
    let big_t = p.horizon();
    let s2 = p.sigma_sq();
    let basis = kl_basis(p, 20)?;
    let mut err: f64 = 0.0;
    for m in &basis.modes {
        let n = m.n as f64;
        err = err.max((m.omega / (n * PI / big_t) - 1.0).abs());
        err = err.max((m.lambda / (s2 * big_t * big_t / (n * n * PI * PI)) - 1.0).abs());
    }
    for i in 0..=10 {
        for j in 0..=10 {
            let (s, t) = (big_t * i as f64 / 10.0, big_t * j as f64 / 10.0);
            let exact = s2 * (s.min(t) - s * t / big_t);
            err = err.max((bridge_cov(p, s, t)? - exact).abs());
        }
    }
    err = err.max((total_bridge_variance(p)? / (s2 * big_t * big_t / 6.0) - 1.0).abs());
    Ok(Check::new("brownian_closed_forms", &label(p), err, BROWNIAN_TOL))
}

/// Paths from the configured simulator: mean and variance at the grid point
/// nearest `T/2` in standard-error units, and the pinned endpoint.
pub fn simulator_law(cfg: &RunConfig) -> anyhow::Result<Vec<Check>> {
    let spec = cfg.spec()?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.grid)?;
    let sim = Simulator::new(&spec, &grid, cfg.scheme.into())?;
    let k = cfg.grid / 2;
    let t = grid.points()[k];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut pin: f64 = 0.0;
    let mean = bridge_mean(&spec, t)?;
    for i in 0..cfg.paths {
        let mut noise = StandardNormals::new(cfg.seed, domain::PATHS, i as u64);
        let path = sim.simulate(&mut noise)?;
        let x = path.values[k] - mean;
        sum += x;
        sum_sq += x * x;
        pin = pin.max((path.last() - cfg.z).abs());
    }
    let n = cfg.paths as f64;
    let var = bridge_cov(&cfg.params()?, t, t)?;
    let emp_mean = sum / n;
    let emp_var = (sum_sq - n * emp_mean * emp_mean) / (n - 1.0).max(1.0);
    let mean_se = (var / n).sqrt();
    let var_se = var * (2.0 / (n - 1.0).max(1.0)).sqrt();
    let where_ = format!("{} scheme={:?} paths={} t={t}", label(&cfg.params()?), cfg.scheme, cfg.paths);
    let in_se = |diff: f64, se: f64| if se > 0.0 { diff.abs() / se } else if diff.abs() < 1e-12 { 0.0 } else { f64::INFINITY };
    Ok(vec![
        Check::new("simulator_mean_se", &where_, in_se(emp_mean, mean_se), MC_SIGMAS),
        Check::new("simulator_variance_se", &where_, in_se(emp_var - var, var_se), MC_SIGMAS),
        Check::new("simulator_pinning", &where_, pin, 0.0),
    ])
}

/// Two-point quantizer of N(0, 1): codepoints against `sqrt(2/pi)` and the
/// held-out distortion against `1 - 2/pi` in standard-error units.
pub fn lloyd_anchors(seed: u64) -> anyhow::Result<Vec<Check>> {
    let cfg = QuantizerConfig { seed, ..QuantizerConfig::default() };
    let run = lloyd(&[1.0], 2, None, &cfg)?;
    let a = (2.0 / PI).sqrt();
    let mut pts: Vec<f64> = run.codebook.points.iter().map(|p| p[0]).collect();
    pts.sort_by(f64::total_cmp);
    let point_err = (pts[0] + a).abs().max((pts[1] - a).abs());
    let est = distortion(&run.codebook, &[1.0], LLOYD_EVAL_BUDGET, seed)?;
    let gap = (est.distortion - (1.0 - 2.0 / PI)).abs();
    let in_se = if est.std_error > 0.0 { gap / est.std_error } else if gap < 1e-12 { 0.0 } else { f64::INFINITY };
    Ok(vec![
        Check::new("lloyd_codepoints", "N(0,1) N=2", point_err, LLOYD_POINT_TOL),
        Check::new("lloyd_distortion_se", "N(0,1) N=2", in_se, 3.0),
    ])
}

/// Runs every check. `corrupt` scales the analytic eigenvalues in the
/// Nyström comparison; 1 leaves them untouched.
pub fn run_checks(cfg: &RunConfig, corrupt: f64) -> anyhow::Result<Vec<Check>> {
    let mut sets = vec![cfg.params()?];
    sets.extend(reference_params()?);
    let mut checks = Vec::new();
    for p in &sets {
        checks.push(kernel_consistency(p)?);
        checks.push(nystrom_agreement(p, corrupt)?);
        checks.push(mercer_trace(p)?);
        if p.is_driftless() && p.sigma0() == 0.0 {
            checks.push(brownian_closed_forms(p)?);
        }
    }
    checks.extend(simulator_law(cfg)?);
    checks.extend(lloyd_anchors(cfg.seed)?);
    Ok(checks)
}

pub fn cmd_verify(cfg: &RunConfig, out: Option<&Path>, corrupt: Option<f64>) -> anyhow::Result<()> {
    let checks = run_checks(cfg, corrupt.unwrap_or(1.0))?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    let lines: String = checks.iter().map(|c| c.line() + "\n").collect();
    match out {
        Some(path) => {
            let bytes = match cfg.format {
                Format::Json => json_document(&Report {
                    config: cfg.clone(),
                    checks: checks.clone(),
                    passed: failed == 0,
                })?,
                Format::Csv => csv_document(
                    cfg,
                    &[],
                    &["name", "params", "error", "tolerance", "pass"],
                    checks.iter().map(|c| {
                        vec![c.name.clone(), c.params.clone(), c.error.to_string(), c.tolerance.to_string(), c.pass.to_string()]
                    }),
                )?,
            };
            emit(Some(path), &bytes)?;
            eprint!("{lines}");
        }
        None => emit(None, lines.as_bytes())?,
    }
    if failed > 0 {
        return Err(VerificationFailed(failed).into());
    }
    Ok(())
}
