//! Command-line front end. `run` is the whole program minus process exit, so
//! tests can drive it in-process.
//!
//! Exit codes: 0 ok, 2 usage, 3 config or input, 4 io, 5 numeric.
//! Output locations are excluded from the provenance hash, so identical
//! computations written to different directories produce identical bytes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::{run_experiment, write_outputs, ExperimentConfig};
use crate::io::{atomic_write, config_hash, ingest_returns, panel_csv, provenance_line, IngestOptions, MissingPolicy, Transform};
use crate::model::{preset, simulate_panel, ModelSpec, DEFAULT_N, DEFAULT_P};
use crate::panel::Panel;
use crate::products::{pareto_product_survival, peff, ratio_limit_mc, splitup_check, ExponentMatrix, PositiveFactor};
use crate::distributions::LawSpec;
use crate::rng::RngStream;
use crate::spectrum::{eigen, sample_cov};
use crate::tail::{extremogram, hill, hill_matrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_NUMERIC: i32 = 5;

pub const DEFAULT_QUANTILE: f64 = 0.97;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter { .. }
        | Error::Validation(_)
        | Error::Ingest { .. }
        | Error::UnknownPreset(_)
        | Error::Config(_)
        | Error::Json(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        Error::Numeric(_)
        | Error::UnsupportedModel(_)
        | Error::Budget { .. }
        | Error::InsufficientTail { .. }
        | Error::EmptyPanel
        | Error::ContractViolation(_)
        | Error::DegenerateRow(_) => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "svlab", version, about = "Heavy-tailed stochastic volatility covariance lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a panel X_it from a preset or a model JSON file.
    Simulate(SimulateArgs),
    /// Eigendecomposition of the sample covariance of a panel.
    Eigen(EigenArgs),
    /// Cross-product Hill matrix and per-series tail reports.
    Hill(HillArgs),
    /// Extremogram of one series.
    Extremogram(ExtremogramArgs),
    /// Run an experiment described by a JSON config.
    Experiment(ExperimentArgs),
    /// Product tail oracles.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON model specification.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_P)]
    p: usize,
    #[arg(long, default_value_t = DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    transform: Transform,
    #[arg(long, value_enum, default_value_t)]
    missing: MissingPolicy,
}

impl InputArgs {
    fn panel(&self, center: bool) -> Result<Panel> {
        let table = ingest_returns(
            &self.input,
            IngestOptions {
                transform: self.transform,
                missing: self.missing,
            },
        )?;
        let panel = table.to_panel()?;
        if center {
            centered(&panel)
        } else {
            Ok(panel)
        }
    }
}

fn centered(panel: &Panel) -> Result<Panel> {
    let rows: Vec<Vec<f64>> = panel
        .rows()
        .map(|r| {
            let m = crate::numeric::neumaier_sum(r.iter().copied()) / r.len() as f64;
            r.iter().map(|x| x - m).collect()
        })
        .collect();
    Panel::from_rows(&rows, panel.role())
}

#[derive(Debug, Args, Serialize)]
struct EigenArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Subtract series means before forming the covariance.
    #[arg(long)]
    center: bool,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct HillArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_QUANTILE)]
    quantile: f64,
    /// Subtract series means before forming products.
    #[arg(long)]
    center: bool,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct ExtremogramArgs {
    #[command(flatten)]
    input: InputArgs,
    /// 1-based series index.
    #[arg(long, default_value_t = 1)]
    series: usize,
    /// Lags as a list (`1,2,5`) or range (`1-5`).
    #[arg(long, default_value = "1-5")]
    lags: String,
    #[arg(long, default_value_t = DEFAULT_QUANTILE)]
    quantile: f64,
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(subcommand)]
    oracle: Oracle,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Oracle {
    /// Closed-form survival of a product of two iid Pareto(alpha) variables.
    ParetoProduct {
        #[arg(long)]
        alpha: f64,
        /// Evaluation points, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    /// Effective number of heavy factors of an exponent matrix (`1,0;0.5,1`).
    Peff {
        #[arg(long)]
        matrix: String,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo ratio `P(XY > x) / P(X > x)` from a JSON config.
    Ratio {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo single-big-factor decomposition from a JSON config.
    Splitup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        #[serde(skip)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, serde::Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RatioConfig {
    schema_version: u32,
    x_law: LawSpec,
    y_law: LawSpec,
    levels: Vec<f64>,
    mc_budget: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, serde::Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SplitupConfig {
    schema_version: u32,
    factor: PositiveFactor,
    a: Vec<f64>,
    v: f64,
    t_grid: Vec<f64>,
    s_grid: Vec<f64>,
    mc_budget: usize,
    #[serde(default)]
    seed: u64,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
/// Failures print one JSON error record on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let rec = ErrorRecord {
                error: "usage",
                message: e.to_string().trim().to_string(),
                exit_code: EXIT_USAGE,
            };
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_default());
            return EXIT_USAGE;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            let rec = ErrorRecord {
                error: e.kind(),
                message: e.to_string(),
                exit_code: code,
            };
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_default());
            code
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(&a),
        Command::Eigen(a) => eigen_cmd(&a),
        Command::Hill(a) => hill_cmd(&a),
        Command::Extremogram(a) => extremogram_cmd(&a),
        Command::Experiment(a) => experiment_cmd(&a),
        Command::Oracle(a) => oracle_cmd(&a.oracle),
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn check_quantile(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("quantile: must lie in (0, 1), got {q}")))
    }
}

/// JSON output with the provenance fields embedded, since JSON has no comments.
fn json_with_provenance<C: Serialize, T: Serialize>(config: &C, seed: u64, body: &T) -> Result<Vec<u8>> {
    let value = serde_json::json!({
        "provenance": {
            "svlab": env!("CARGO_PKG_VERSION"),
            "config_sha256": config_hash(config)?,
            "seed": seed,
        },
        "result": body,
    });
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

fn with_header<C: Serialize>(config: &C, seed: u64, csv: Vec<u8>) -> Result<Vec<u8>> {
    let mut out = provenance_line(config, seed)?.into_bytes();
    out.extend(csv);
    Ok(out)
}

fn model_spec(a: &SimulateArgs) -> Result<ModelSpec> {
    match &a.config {
        Some(path) => {
            let spec: ModelSpec = serde_json::from_str(&read_text(path)?).map_err(|e| Error::Config(e.to_string()))?;
            let spec = ModelSpec {
                master_seed: a.seed,
                ..spec
            };
            spec.validate()?;
            Ok(spec)
        }
        None => preset(a.preset.as_deref().unwrap_or("case1"), a.p, a.n, a.seed),
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec = model_spec(a)?;
    let panel = simulate_panel(&spec)?;
    let bytes = match a.format {
        Format::Csv => panel_csv(&panel, Some(&provenance_line(a, a.seed)?))?,
        Format::Json => {
            let rows: Vec<&[f64]> = panel.rows().collect();
            json_with_provenance(
                a,
                a.seed,
                &serde_json::json!({ "p": panel.p(), "n": panel.n(), "spec": spec, "rows": rows }),
            )?
        }
    };
    atomic_write(&a.out.join(format!("panel.{}", a.format.ext())), &bytes)
}

fn eigen_cmd(a: &EigenArgs) -> Result<()> {
    let panel = a.input.panel(a.center)?;
    let cov = sample_cov(&panel, false)?;
    let report = eigen(&cov.matrix)?;
    let bytes = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            with_header(a, 0, buf)?
        }
        Format::Json => json_with_provenance(a, 0, &report)?,
    };
    atomic_write(&a.out.join(format!("eigen.{}", a.format.ext())), &bytes)
}

fn hill_cmd(a: &HillArgs) -> Result<()> {
    check_quantile(a.quantile)?;
    let panel = a.input.panel(a.center)?;
    let matrix = hill_matrix(&panel, a.quantile)?;
    let reports: Vec<_> = panel.rows().map(|r| hill(r, a.quantile)).collect::<Result<_>>()?;
    match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            matrix.write_csv(&mut buf)?;
            atomic_write(&a.out.join("hill_matrix.csv"), &with_header(a, 0, buf)?)?;
            let mut buf = Vec::new();
            {
                let mut wr = csv::Writer::from_writer(&mut buf);
                wr.write_record(["series", "hill_index", "threshold", "k_exceedances", "p_plus", "p_minus"])?;
                for (i, r) in reports.iter().enumerate() {
                    wr.write_record(&[
                        format!("s{}", i + 1),
                        format!("{}", r.hill_index),
                        format!("{}", r.threshold),
                        r.k_exceedances.to_string(),
                        format!("{}", r.balance.p_plus),
                        format!("{}", r.balance.p_minus),
                    ])?;
                }
                wr.flush()?;
            }
            atomic_write(&a.out.join("tail_report.csv"), &with_header(a, 0, buf)?)
        }
        Format::Json => {
            let body = serde_json::json!({ "hill_matrix": matrix, "tail_reports": reports });
            atomic_write(&a.out.join("hill.json"), &json_with_provenance(a, 0, &body)?)
        }
    }
}

/// `1,2,5` or `1-5`.
fn parse_lags(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("lags: cannot parse `{s}`"));
    if let Some((lo, hi)) = s.split_once('-') {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    let lags: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if lags.is_empty() || lags.contains(&0) {
        return Err(bad());
    }
    Ok(lags)
}

fn extremogram_cmd(a: &ExtremogramArgs) -> Result<()> {
    check_quantile(a.quantile)?;
    let lags = parse_lags(&a.lags)?;
    let panel = a.input.panel(false)?;
    if a.series == 0 || a.series > panel.p() {
        return Err(Error::Config(format!("series: must lie in 1..={}", panel.p())));
    }
    let points = extremogram(panel.row(a.series - 1), &lags, a.quantile)?;
    let bytes = match a.format {
        Format::Csv => {
            let mut buf = Vec::new();
            {
                let mut wr = csv::Writer::from_writer(&mut buf);
                wr.write_record(["lag", "estimate", "se", "base", "joint"])?;
                for pt in &points {
                    wr.write_record(&[
                        pt.lag.to_string(),
                        format!("{}", pt.estimate),
                        format!("{}", pt.se),
                        pt.base.to_string(),
                        pt.joint.to_string(),
                    ])?;
                }
                wr.flush()?;
            }
            with_header(a, 0, buf)?
        }
        Format::Json => json_with_provenance(a, 0, &points)?,
    };
    atomic_write(&a.out.join(format!("extremogram.{}", a.format.ext())), &bytes)
}

fn experiment_cmd(a: &ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_json(&read_text(&a.config)?)?;
    let dir = a
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Error::Config("output: no output directory given".into()))?;
    let output = run_experiment(&cfg)?;
    for path in write_outputs(&cfg, &output, &dir)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("matrix: cannot parse `{x}`")))
                })
                .collect()
        })
        .collect()
}

fn emit<C: Serialize, T: Serialize>(config: &C, seed: u64, body: &T, out: &Option<PathBuf>) -> Result<()> {
    let bytes = json_with_provenance(config, seed, body)?;
    match out {
        Some(path) => atomic_write(path, &bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
            Ok(())
        }
    }
}

fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Config(e.to_string()))
}

fn check_schema(v: u32) -> Result<()> {
    if v == crate::experiments::SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Config(format!("schema_version: expected 1, got {v}")))
    }
}

fn oracle_cmd(o: &Oracle) -> Result<()> {
    match o {
        Oracle::ParetoProduct { alpha, x, out } => {
            let rows: Vec<_> = x
                .iter()
                .map(|&x| Ok(serde_json::json!({ "x": x, "survival": pareto_product_survival(*alpha, x)? })))
                .collect::<Result<_>>()?;
            emit(o, 0, &rows, out)
        }
        Oracle::Peff { matrix, out } => {
            let res = peff(&ExponentMatrix::new(parse_matrix(matrix)?)?)?;
            emit(o, 0, &res, out)
        }
        Oracle::Ratio { config, out } => {
            let cfg: RatioConfig = parse_config(config)?;
            check_schema(cfg.schema_version)?;
            let res = ratio_limit_mc(&cfg.x_law, &cfg.y_law, &cfg.levels, cfg.mc_budget, &RngStream::new(cfg.seed, 0))?;
            emit(&cfg, cfg.seed, &res, out)
        }
        Oracle::Splitup { config, out } => {
            let cfg: SplitupConfig = parse_config(config)?;
            check_schema(cfg.schema_version)?;
            let res = splitup_check(
                &cfg.factor,
                &cfg.a,
                cfg.v,
                &cfg.t_grid,
                &cfg.s_grid,
                cfg.mc_budget,
                &RngStream::new(cfg.seed, 0),
            )?;
            emit(&cfg, cfg.seed, &res, out)
        }
    }
}
