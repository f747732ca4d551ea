//! Command-line pipeline for the OU bridge: eigen-systems, simulation,
//! functional quantization, self-verification and rate studies.

pub mod config;
pub mod output;
pub mod verify;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ou_bridge::noise::{domain, StandardNormals};
use ou_bridge::quantizer::{functional_quantizer, rate_check, FunctionalQuantizer, RateStudy};
use ou_bridge::kl_solver::{frequency_brackets, frequency_residual, has_low_frequency_root};
use ou_bridge::{kl_basis, total_bridge_variance, FrequencyCase, KlBasis, Simulator, TimeGrid};

use config::{resolve, CommonArgs, Format, RunConfig, SchemeArg, Specific};
use output::{csv_document, emit, json_document, sibling};

/// Bad input detected by the front end itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Raised by `verify` when at least one check fails.
#[derive(Debug)]
pub struct VerificationFailed(pub usize);

impl fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} verification check(s) failed", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Debug, Parser)]
#[command(name = "ou-bridge", version, about = "Karhunen-Loeve expansion, simulation and quantization of the OU bridge")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Frequencies, eigenvalues and normalizations of the first modes.
    Eigen(EigenArgs),
    /// Sample paths of the bridge.
    Simulate(SimulateArgs),
    /// Optimal functional quantizer and its representative paths.
    Quantize(QuantizeArgs),
    /// Cross-check closed forms against the brute-force oracle.
    Verify(VerifyArgs),
    /// Distortion against codebook size.
    Rate(RateArgs),
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n_modes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of time steps.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Codebook size.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub mc_budget: Option<usize>,
    /// Number of time steps of the emitted paths.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Negative control: scale the analytic eigenvalues before comparing.
    #[arg(long, hide = true)]
    pub corrupt_eigenvalues: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated codebook sizes.
    #[arg(long = "N-list", value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub mc_budget: Option<usize>,
}

/// Runs one command; the error carries the exit-code category.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Eigen(a) => {
            let cfg = resolve(&a.common, Specific { n_modes: a.n_modes, ..Default::default() })?;
            cmd_eigen(&cfg, a.common.out.as_deref())
        }
        Command::Simulate(a) => {
            let specific = Specific {
                grid: a.grid,
                paths: a.paths,
                scheme: a.scheme,
                ..Default::default()
            };
            let cfg = resolve(&a.common, specific)?;
            cmd_simulate(&cfg, a.common.out.as_deref())
        }
        Command::Quantize(a) => {
            let specific = Specific {
                n: a.n,
                m_max: a.m_max,
                mc_budget: a.mc_budget,
                grid: a.grid,
                ..Default::default()
            };
            let cfg = resolve(&a.common, specific)?;
            cmd_quantize(&cfg, a.common.out.as_deref())
        }
        Command::Verify(a) => {
            let specific = Specific {
                grid: a.grid,
                paths: a.paths,
                scheme: a.scheme,
                ..Default::default()
            };
            let cfg = resolve(&a.common, specific)?;
            verify::cmd_verify(&cfg, a.common.out.as_deref(), a.corrupt_eigenvalues)
        }
        Command::Rate(a) => {
            let specific = Specific {
                n_list: a.n_list,
                m_max: a.m_max,
                mc_budget: a.mc_budget,
                ..Default::default()
            };
            let cfg = resolve(&a.common, specific)?;
            cmd_rate(&cfg, a.common.out.as_deref())
        }
    }
}

/// 2 for invalid input, 3 for solver or numerical failures, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> ExitCode {
    if err.downcast_ref::<UsageError>().is_some() {
        return ExitCode::from(2);
    }
    if let Some(e) = err.downcast_ref::<ou_bridge::Error>() {
        use ou_bridge::Error::*;
        return match e {
            InvalidParams(_) | Domain { .. } | Usage(_) => ExitCode::from(2),
            _ => ExitCode::from(3),
        };
    }
    ExitCode::from(1)
}

fn fmt_row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// One line of the eigen table.
#[derive(Serialize)]
struct EigenRow {
    n: usize,
    omega: f64,
    lambda: f64,
    norm: f64,
    bracket_lower: f64,
    bracket_upper: f64,
    residual: f64,
}

#[derive(Serialize)]
struct EigenDoc<'a> {
    config: &'a RunConfig,
    case: FrequencyCase,
    /// Whether the first bracket is the low interval `]0, pi/(2T)[`.
    low_frequency_root: bool,
    trace: f64,
    basis: &'a KlBasis,
    table: &'a [EigenRow],
}

pub fn cmd_eigen(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let params = cfg.params()?;
    let basis = kl_basis(&params, cfg.n_modes)?;
    let trace = total_bridge_variance(&params)?;
    let low = has_low_frequency_root(&params);
    let table: Vec<EigenRow> = basis
        .modes
        .iter()
        .zip(frequency_brackets(&params, cfg.n_modes))
        .map(|(m, b)| EigenRow {
            n: m.n,
            omega: m.omega,
            lambda: m.lambda,
            norm: m.norm,
            bracket_lower: b.lower,
            bracket_upper: b.upper,
            residual: frequency_residual(&params, m.omega),
        })
        .collect();
    let bytes = match cfg.format {
        Format::Json => json_document(&EigenDoc {
            config: cfg,
            case: basis.case,
            low_frequency_root: low,
            trace,
            basis: &basis,
            table: &table,
        })?,
        Format::Csv => csv_document(
            cfg,
            &[
                format!("case: {:?}", basis.case),
                format!("low_frequency_root: {low}"),
                format!("trace: {trace}"),
            ],
            &["n", "omega", "lambda", "norm", "bracket_lower", "bracket_upper", "residual"],
            table.iter().map(|r| {
                let mut row = vec![r.n.to_string()];
                row.extend(fmt_row(&[r.omega, r.lambda, r.norm, r.bracket_lower, r.bracket_upper, r.residual]));
                row
            }),
        )?,
    };
    emit(out, &bytes)
}

#[derive(Serialize)]
struct SimulateDoc<'a> {
    config: &'a RunConfig,
    grid: &'a [f64],
    paths: Vec<Vec<f64>>,
}

/// Path `i` reads its noise from stream `i`, so a path does not depend on
/// how many others are drawn.
pub fn simulate_paths(cfg: &RunConfig, grid: &TimeGrid) -> anyhow::Result<Vec<Vec<f64>>> {
    let spec = cfg.spec()?;
    let sim = Simulator::new(&spec, grid, cfg.scheme.into())?;
    (0..cfg.paths)
        .map(|i| {
            let mut noise = StandardNormals::new(cfg.seed, domain::PATHS, i as u64);
            Ok(sim.simulate(&mut noise)?.values)
        })
        .collect()
}

pub fn cmd_simulate(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let grid = TimeGrid::uniform(cfg.horizon, cfg.grid)?;
    let paths = simulate_paths(cfg, &grid)?;
    let bytes = match cfg.format {
        Format::Json => json_document(&SimulateDoc {
            config: cfg,
            grid: grid.points(),
            paths,
        })?,
        Format::Csv => csv_document(
            cfg,
            &[],
            &["path_id", "t", "value"],
            paths.iter().enumerate().flat_map(|(i, p)| {
                grid.points()
                    .iter()
                    .zip(p)
                    .map(move |(t, v)| vec![i.to_string(), t.to_string(), v.to_string()])
            }),
        )?,
    };
    emit(out, &bytes)
}

#[derive(Serialize)]
struct QuantizeDoc<'a> {
    config: &'a RunConfig,
    /// The selected quantization dimension.
    d: usize,
    quantizer: &'a FunctionalQuantizer,
    grid: &'a [f64],
    mean_path: Vec<f64>,
}

fn paths_csv(cfg: &RunConfig, fq: &FunctionalQuantizer, grid: &TimeGrid) -> anyhow::Result<Vec<u8>> {
    let paths = fq.paths(grid)?;
    csv_document(
        cfg,
        &[format!("d: {}", fq.dimension())],
        &["t", "value", "path_id", "probability"],
        paths.iter().enumerate().flat_map(|(i, p)| {
            grid.points().iter().zip(&p.values).map(move |(t, v)| {
                vec![t.to_string(), v.to_string(), i.to_string(), p.probability.to_string()]
            })
        }),
    )
}

/// Writes the quantizer document and its paths. With `--format json` the
/// paths CSV goes next to `--out` as `<stem>.paths.csv`; with `--format csv`
/// the roles swap and the JSON goes to `<stem>.quantizer.json`. Without
/// `--out` only the primary document is printed.
pub fn cmd_quantize(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    let spec = cfg.spec()?;
    let fq = functional_quantizer(&spec, cfg.n, cfg.m_max, &cfg.quantizer())?;
    let grid = TimeGrid::uniform(cfg.horizon, cfg.grid)?;
    let json = json_document(&QuantizeDoc {
        config: cfg,
        d: fq.dimension(),
        quantizer: &fq,
        grid: grid.points(),
        mean_path: fq.mean_path(&grid)?,
    })?;
    let csv = paths_csv(cfg, &fq, &grid)?;
    let (primary, secondary, suffix) = match cfg.format {
        Format::Json => (json, csv, "paths.csv"),
        Format::Csv => (csv, json, "quantizer.json"),
    };
    if let Some(path) = out {
        output::write_atomic(&sibling(path, suffix), &secondary)?;
    }
    emit(out, &primary)
}

#[derive(Serialize)]
struct RateDoc<'a> {
    config: &'a RunConfig,
    study: &'a RateStudy,
}

pub fn cmd_rate(cfg: &RunConfig, out: Option<&Path>) -> anyhow::Result<()> {
    if cfg.n_list.len() < 4 {
        return Err(UsageError(format!(
            "--N-list needs at least 4 increasing sizes, got {:?}",
            cfg.n_list
        ))
        .into());
    }
    let study = rate_check(&cfg.spec()?, &cfg.n_list, cfg.m_max, &cfg.quantizer())?;
    let bytes = match cfg.format {
        Format::Json => json_document(&RateDoc { config: cfg, study: &study })?,
        Format::Csv => csv_document(
            cfg,
            &[format!("slope: {}", study.slope), format!("K: {}", study.k)],
            &["N", "d", "distortion", "std_error"],
            study.rows.iter().map(|r| {
                let mut row = vec![r.n.to_string(), r.d.to_string()];
                row.extend(fmt_row(&[r.distortion, r.std_error]));
                row
            }),
        )?,
    };
    emit(out, &bytes)
}
