//! Command-line front end for the error-structure library: declarative
//! experiment configs, one subcommand per library area, machine-readable
//! reports, and a built-in selftest.
//!
//! Exit codes: 0 success, 1 domain or config error, 2 numerical error,
//! 3 selftest failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

mod commands;
mod config;
mod expr;
mod report;
mod selftest;
mod setup;

use commands::Invocation;
use config::{ExperimentConfig, Format};
use errstruct::quad::QuadOptions;
use report::Report;

/// Overrides the default quadrature tolerance used when normalizing
/// priors; a positive number.
const TOL_ENV: &str = "ERRSTRUCT_TOL";

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(arg: FormatArg) -> Format {
        match arg {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "errstruct",
    about = "Error structures of parametric statistical models",
    version
)]
struct Cli {
    /// Root seed for every random stream; overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replication fan-out; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Report file path; overrides output.path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format; overrides output.format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fisher information of the configured model at run.theta.
    Fisher {
        #[arg(long)]
        config: PathBuf,
    },
    /// Squared error of a functional under the model's error structure.
    Propagate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Image field of the structure under the configured map, on a grid.
    Image {
        #[arg(long)]
        config: PathBuf,
    },
    /// Product of the model and model2 structures at a parameter pair.
    Product {
        #[arg(long)]
        config: PathBuf,
    },
    /// Monte Carlo estimator asymptotics, plain or conditioned on the image.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimator risk against the information bound.
    Crlb {
        #[arg(long)]
        config: PathBuf,
    },
    /// Inverse image information against the image field at a point.
    CompareBounds {
        #[arg(long)]
        config: PathBuf,
        /// Image point; overrides run.a.
        #[arg(long)]
        a: Option<f64>,
    },
    /// Information-volume prior density of the configured model.
    Jeffreys {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every shipping check at full scale; exit 3 on any failure.
    Selftest,
}

fn fail(code: u8, message: &str) -> u8 {
    eprintln!("error: {message}");
    code
}

fn quad_options(config_tol: Option<f64>) -> Result<QuadOptions, String> {
    let from_env = match std::env::var(TOL_ENV) {
        Ok(text) => Some(
            text.parse::<f64>()
                .map_err(|_| format!("{TOL_ENV} must be a number, got '{text}'"))?,
        ),
        Err(_) => None,
    };
    let tol = config_tol.or(from_env);
    match tol {
        None => Ok(QuadOptions::default()),
        Some(t) if t.is_finite() && t > 0.0 => Ok(QuadOptions::with_tol(t)),
        Some(t) => Err(format!("tolerance must be positive and finite, got {t}")),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let origin = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read config '{origin}': {e}"))?;
    let config = ExperimentConfig::parse(&text, &origin)?;
    debug_assert_eq!(
        ExperimentConfig::parse(&config.serialize(), &origin).as_ref(),
        Ok(&config),
        "canonical serialization must round-trip"
    );
    Ok(config)
}

fn write_report(report: &Report, path: &Path, format: Format) -> Result<(), String> {
    let bytes = match format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    std::fs::write(path, bytes)
        .map_err(|e| format!("cannot write report '{}': {e}", path.display()))
}

fn summarize(report: &Report) -> String {
    if let Some(estimate) = report.get_f64("estimate") {
        let mut line = format!("estimate = {estimate}");
        if let Some(reference) = report.get_f64("reference") {
            line.push_str(&format!(", reference = {reference}"));
        }
        if let Some(se) = report.get_f64("std_err") {
            line.push_str(&format!(", std err = {se}"));
        }
        return line;
    }
    if let (Some(gamma), Some(inv)) = (report.get_f64("gamma_psi"), report.get_f64("inv_fisher_Q"))
    {
        return format!(
            "gamma_psi = {gamma}, inv_fisher_Q = {inv}, strict = {}",
            inv > gamma
        );
    }
    if let (Some(g00), Some(g11)) = (report.get_f64("gamma_00"), report.get_f64("gamma_11")) {
        return format!("gamma diagonal = ({g00}, {g11})");
    }
    if let Some(points) = report.get_f64("points") {
        return format!("{points} grid points");
    }
    "done".into()
}

fn run_selftest(cli: &Cli) -> u8 {
    let start = Instant::now();
    let outcomes = selftest::run_all();
    let total = outcomes.len();
    let mut failures = 0;
    for (index, outcome) in outcomes.iter().enumerate() {
        let verdict = if outcome.pass { "pass" } else { "FAIL" };
        println!(
            "check {}/{} ({}): {} ({})",
            index + 1,
            total,
            outcome.name,
            verdict,
            outcome.detail
        );
        if !outcome.pass {
            failures += 1;
        }
    }

    let mut report = Report::new("selftest", "full-scale shipping checks");
    report.set_u64("checks", total as u64);
    report.set_u64("failures", failures as u64);
    let rows: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            let mut obj = Map::new();
            obj.insert("name".into(), Value::String(o.name.into()));
            obj.insert("pass".into(), Value::Bool(o.pass));
            Value::Object(obj)
        })
        .collect();
    let format = cli.format.map(Format::from).unwrap_or(Format::Json);
    let path = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(default_report_name(format)));
    let text = match format {
        Format::Json => {
            let mut whole: Map<String, Value> =
                serde_json::from_str(&report.to_json()).expect("report JSON is valid");
            whole.insert("outcomes".into(), Value::Array(rows));
            let mut text = serde_json::to_string_pretty(&Value::Object(whole))
                .expect("selftest report is serializable");
            text.push('\n');
            text
        }
        Format::Csv => {
            let mut text = String::from("name,pass\n");
            for o in &outcomes {
                text.push_str(&format!("{},{}\n", o.name, o.pass));
            }
            text
        }
    };
    if let Err(e) = std::fs::write(&path, text) {
        return fail(
            EXIT_CONFIG,
            &format!("cannot write report '{}': {e}", path.display()),
        );
    }
    let ms = start.elapsed().as_millis();
    println!(
        "selftest: {} of {total} checks passed; wrote {} in {ms} ms",
        total - failures,
        path.display()
    );
    if failures > 0 {
        EXIT_SELFTEST
    } else {
        EXIT_OK
    }
}

fn default_report_name(format: Format) -> &'static str {
    match format {
        Format::Json => "report.json",
        Format::Csv => "report.csv",
    }
}

fn run(cli: &Cli) -> u8 {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return fail(EXIT_CONFIG, "--workers must be at least 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            return fail(EXIT_CONFIG, &format!("cannot size the worker pool: {e}"));
        }
    }

    let config_path = match &cli.command {
        Command::Selftest => None,
        Command::Fisher { config }
        | Command::Propagate { config }
        | Command::Image { config }
        | Command::Product { config }
        | Command::Simulate { config }
        | Command::Crlb { config }
        | Command::CompareBounds { config, .. }
        | Command::Jeffreys { config } => Some(config.clone()),
    };

    let Some(config_path) = config_path else {
        return run_selftest(cli);
    };

    let start = Instant::now();
    let config = match load_config(&config_path) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    let opts = match quad_options(config.run.tolerance) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    let seed = cli.seed.or(config.run.seed).unwrap_or(0);
    let format = cli.format.map(Format::from).unwrap_or(config.output.format);
    let out_path = cli
        .out
        .clone()
        .or_else(|| config.output.path.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default_report_name(format)));

    let invocation = Invocation { config, seed, opts };
    let (label, result) = match &cli.command {
        Command::Fisher { .. } => ("fisher", commands::fisher_info(&invocation)),
        Command::Propagate { .. } => ("propagate", commands::propagate(&invocation)),
        Command::Image { .. } => ("image", commands::image(&invocation)),
        Command::Product { .. } => ("product", commands::product_structure(&invocation)),
        Command::Simulate { .. } => ("simulate", commands::simulate(&invocation)),
        Command::Crlb { .. } => ("crlb", commands::crlb(&invocation)),
        Command::CompareBounds { a, .. } => {
            ("compare-bounds", commands::compare_bounds(&invocation, *a))
        }
        Command::Jeffreys { .. } => ("jeffreys", commands::jeffreys(&invocation)),
        Command::Selftest => unreachable!("handled above"),
    };

    let report = match result {
        Ok(r) => r,
        Err(e) => {
            let code = if e.is_usage() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERIC
            };
            return fail(code, &e.to_string());
        }
    };
    if let Err(e) = write_report(&report, &out_path, format) {
        return fail(EXIT_CONFIG, &e);
    }
    let ms = start.elapsed().as_millis();
    println!(
        "{label}: {}; wrote {} in {ms} ms",
        summarize(&report),
        out_path.display()
    );
    EXIT_OK
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}
