//! Run configuration: built-in defaults, then an optional JSON file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use ou_bridge::quantizer::QuantizerConfig;
use ou_bridge::{BridgeSpec, OuParams, Scheme};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Euler,
    Exact,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::Exact => Scheme::Exact,
        }
    }
}

/// Every knob of every command. Output files echo this verbatim (without the
/// output path), so a rerun with the echoed config reproduces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub sigma0: f64,
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub z: f64,
    pub seed: u64,
    pub n_modes: usize,
    /// Number of time steps; grids have `grid + 1` points.
    pub grid: usize,
    pub paths: usize,
    pub scheme: SchemeArg,
    #[serde(rename = "N")]
    pub n: usize,
    pub m_max: usize,
    pub mc_budget: Option<usize>,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    pub eval_budget: usize,
    pub tol: f64,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            mu: 0.0,
            sigma: 1.0,
            sigma0: 0.0,
            x0: 0.0,
            horizon: 1.0,
            z: 0.0,
            seed: 0,
            n_modes: 10,
            grid: 256,
            paths: 1000,
            scheme: SchemeArg::Euler,
            n: 10,
            m_max: 10,
            mc_budget: None,
            n_list: vec![2, 4, 8, 16, 32, 64],
            eval_budget: 1_000_000,
            tol: 1e-6,
            format: Format::Json,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> anyhow::Result<OuParams> {
        Ok(OuParams::new(self.theta, self.mu, self.sigma, self.sigma0, self.x0, self.horizon)?)
    }

    pub fn spec(&self) -> anyhow::Result<BridgeSpec> {
        Ok(BridgeSpec::new(self.params()?, self.z)?)
    }

    pub fn quantizer(&self) -> QuantizerConfig {
        QuantizerConfig {
            seed: self.seed,
            mc_budget: self.mc_budget,
            eval_budget: self.eval_budget,
            tol: self.tol,
            ..QuantizerConfig::default()
        }
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())).into())
    }

    fn check(&self) -> anyhow::Result<()> {
        let positive = [
            ("n-modes", self.n_modes),
            ("grid", self.grid),
            ("paths", self.paths),
            ("N", self.n),
            ("m-max", self.m_max),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(UsageError(format!("--{name} must be >= 1")).into());
            }
        }
        if self.mc_budget == Some(0) || self.eval_budget < 2 {
            return Err(UsageError("sample budgets must be positive".into()).into());
        }
        if !(self.tol >= 0.0) {
            return Err(UsageError("tol must be >= 0".into()).into());
        }
        Ok(())
    }
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// Horizon T.
    #[arg(long = "T", allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Conditioning value X_T = z.
    #[arg(long, allow_hyphen_values = true)]
    pub z: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with any subset of the configuration keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Command-specific flags, all optional.
#[derive(Debug, Clone, Default)]
pub struct Specific {
    pub n_modes: Option<usize>,
    pub grid: Option<usize>,
    pub paths: Option<usize>,
    pub scheme: Option<SchemeArg>,
    pub n: Option<usize>,
    pub m_max: Option<usize>,
    pub mc_budget: Option<usize>,
    pub n_list: Option<Vec<usize>>,
}

/// Defaults, overridden by the config file, overridden by flags.
pub fn resolve(common: &CommonArgs, specific: Specific) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
            }
        };
    }
    set!(theta, common.theta);
    set!(mu, common.mu);
    set!(sigma, common.sigma);
    set!(sigma0, common.sigma0);
    set!(x0, common.x0);
    set!(horizon, common.horizon);
    set!(z, common.z);
    set!(seed, common.seed);
    set!(format, common.format);
    set!(n_modes, specific.n_modes);
    set!(grid, specific.grid);
    set!(paths, specific.paths);
    set!(scheme, specific.scheme);
    set!(n, specific.n);
    set!(m_max, specific.m_max);
    set!(n_list, specific.n_list);
    if specific.mc_budget.is_some() {
        cfg.mc_budget = specific.mc_budget;
    }
    cfg.check()?;
    Ok(cfg)
}
