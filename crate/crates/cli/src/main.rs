//! `ivdc`: fit the two-step dependent-censoring model to CSV data, or run
//! simulation studies.

mod report;

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ivdc_core::estimation::{
    fit_independent, fit_naive, fit_oracle, fit_two_step, EstimatorVariant, FitOptions, FitResult,
};
use ivdc_core::io::{read_column, read_observations, write_observations, ColumnMap};
use ivdc_core::simulation::{generate_dataset, run_monte_carlo, summary_table, DesignId, NuScale, SimulationDesign};
use ivdc_core::{Error, FirstStageFamily, ObservationSet};

const EXIT_INPUT: u8 = 2;
const EXIT_ESTIMATION: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "ivdc", version, about = "Instrumented regression for dependently censored log-durations")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one estimator to a CSV dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo study on one of the built-in designs.
    Simulate(SimulateArgs),
    /// Write one simulated dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Input CSV with a header row.
    input: PathBuf,
    /// Follow-up time column (log-time unless --log-time is given).
    #[arg(long, default_value = "y")]
    time: String,
    /// Event indicator column: 1 = event observed, 0 = censored.
    #[arg(long, default_value = "status")]
    status: String,
    /// Confounded regressor column.
    #[arg(long, default_value = "z")]
    z: String,
    /// Instrument column.
    #[arg(long, default_value = "w")]
    w: String,
    /// Exogenous covariate columns, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "x1")]
    covariates: Vec<String>,
    /// Take the natural log of the time column.
    #[arg(long)]
    log_time: bool,
    /// First-stage model; inferred from z (binary -> logit, else linear) when omitted.
    #[arg(long)]
    family: Option<String>,
    /// naive, independent, oracle or two_step
    #[arg(long, default_value = "two_step")]
    variant: String,
    /// Column with the true control function (oracle variant only).
    #[arg(long)]
    control: Option<String>,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Echoed in the report.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Built-in design, 1 to 4
    #[arg(long)]
    design: u8,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000")]
    n: Vec<usize>,
    /// Replications per sample size
    #[arg(long, default_value_t = 500)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimators, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "naive,independent,oracle,two_step")]
    variants: Vec<String>,
    /// How to read the 2 in nu ~ N(0, 2) for designs 1 and 2: sd or variance.
    #[arg(long, default_value = "sd")]
    nu_scale: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Summary output; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Built-in design, 1 to 4
    #[arg(long)]
    design: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replication: u64,
    #[arg(long, default_value = "sd")]
    nu_scale: String,
    /// Append the true control function as column `v`.
    #[arg(long)]
    with_control: bool,
    #[arg(long, short)]
    out: PathBuf,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Data(_) | Error::Config(_) | Error::Csv(_) | Error::Io(_) | Error::Dimension(_) => EXIT_INPUT,
            _ => EXIT_ESTIMATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Generate(a) => cmd_generate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(format!("cannot open {}: {e}", path.display())))
}

fn infer_family(arg: Option<&str>, data: &ObservationSet) -> Result<FirstStageFamily, Failure> {
    match arg {
        Some(s) => Ok(s.parse()?),
        None if data.z_is_binary() => Ok(FirstStageFamily::Logit),
        None => Ok(FirstStageFamily::Linear),
    }
}

fn run_fit(
    variant: EstimatorVariant,
    family: FirstStageFamily,
    data: &ObservationSet,
    control: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult, Failure> {
    Ok(match variant {
        EstimatorVariant::TwoStep => fit_two_step(family, data, opts)?,
        EstimatorVariant::Independent => fit_independent(family, data, opts)?,
        EstimatorVariant::Naive => fit_naive(data, opts)?,
        EstimatorVariant::Oracle => {
            let v = control.ok_or_else(|| Failure::input("the oracle variant needs --control <column>"))?;
            fit_oracle(data, v, opts)?
        }
    })
}

fn cmd_fit(a: &FitArgs) -> Result<u8, Failure> {
    let variant: EstimatorVariant = a.variant.parse()?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Failure::input(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let map = ColumnMap {
        time: a.time.clone(),
        status: a.status.clone(),
        z: a.z.clone(),
        w: a.w.clone(),
        covariates: a.covariates.iter().filter(|c| !c.is_empty()).cloned().collect(),
    };
    let data = read_observations(open(&a.input)?, &map, a.log_time)?;
    let family = infer_family(a.family.as_deref(), &data)?;
    let control = match &a.control {
        Some(col) => Some(read_column(open(&a.input)?, col)?),
        None => None,
    };
    let opts = FitOptions {
        level: a.level,
        ..FitOptions::default()
    };
    let fit = run_fit(variant, family, &data, control.as_deref(), &opts)?;

    let ctx = report::FitContext {
        input: &a.input,
        columns: &map,
        log_time: a.log_time,
        family,
        seed: a.seed,
    };
    let body = match a.format {
        Format::Text => report::fit_text(&fit, &ctx),
        Format::Json => report::fit_json(&fit, &ctx),
        Format::Csv => report::fit_csv(&fit),
    };
    emit(a.output.as_deref(), &body)?;
    if fit.converged {
        Ok(0)
    } else {
        eprintln!(
            "error: the optimizer did not converge (score sup-norm {:.3e}); report is partial",
            fit.score_norm
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|e| Failure::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<u8, Failure> {
    let design = DesignId::try_from(a.design)?;
    if a.reps < 2 {
        return Err(Failure::input(format!("--reps must be at least 2, got {}", a.reps)));
    }
    if a.n.is_empty() {
        return Err(Failure::input("--n needs at least one sample size"));
    }
    let nu_scale: NuScale = a.nu_scale.parse()?;
    let variants = a
        .variants
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<EstimatorVariant>())
        .collect::<Result<Vec<_>, _>>()?;
    let opts = FitOptions {
        level: a.level,
        ..FitOptions::default()
    };

    let mut summaries = Vec::with_capacity(a.n.len());
    for &n in &a.n {
        let d = SimulationDesign::new(design, n)
            .with_replications(a.reps)
            .with_seed(a.seed)
            .with_nu_scale(nu_scale);
        let s = run_monte_carlo(&d, &variants, &opts)?;
        if !s.healthy {
            eprintln!(
                "warning: n = {n}: more than 5% of replications failed for at least one estimator ({} replications affected)",
                s.failed_replications
            );
        }
        summaries.push(s);
    }
    let table = summary_table(&summaries);
    print!("{}", table.text);
    println!("ivdc {} (nu scale: {})", env!("CARGO_PKG_VERSION"), nu_scale.as_str());
    if let Some(path) = &a.out {
        let body = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let mut v = serde_json::to_string_pretty(&serde_json::json!({
                "version": env!("CARGO_PKG_VERSION"),
                "summaries": summaries,
            }))
            .map_err(|e| Failure::input(e.to_string()))?;
            v.push('\n');
            v
        } else {
            table.csv
        };
        emit(Some(path), &body)?;
    }
    Ok(0)
}

fn cmd_generate(a: &GenerateArgs) -> Result<u8, Failure> {
    let design = DesignId::try_from(a.design)?;
    let d = SimulationDesign::new(design, a.n)
        .with_seed(a.seed)
        .with_nu_scale(a.nu_scale.parse()?);
    let (data, control) = generate_dataset(&d, a.replication)?;
    let file = File::create(&a.out).map_err(|e| Failure::input(format!("cannot write {}: {e}", a.out.display())))?;
    write_observations(io::BufWriter::new(file), &data, a.with_control.then_some(control.as_slice()))?;
    Ok(0)
}
