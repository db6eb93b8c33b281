//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bound violation, 2 configuration error,
//! 3 strategy validation failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::Error;
use crate::extraction::log_question_set;
use crate::game::{self, DEFAULT_WORKERS, MAX_EXACT_N};
use crate::strategy::{self, NoiseModel, NoiseSpec, Strategy};
use crate::verifier::{self, CertifyOptions, CoverageMode, SelfTestReport, DEFAULT_SAMPLES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

pub const SWEEP_HEADER: &str = "n,model,param,value,epsilon,delta_cert,eps1_meas,eps1_cert,\
eps2_meas,eps2_cert,eps3_meas,eps3_cert,dist_fixed_max,dist_opt_max,junk_norm";

const SIMULATE_HEADER: &str = "estimate,stderr,win_rate,rounds,seed,workers";

const NOISE_NAMES: [&str; 3] = ["none", "bob-rotation", "partial-entanglement"];

fn noise_parser() -> impl clap::builder::TypedValueParser<Value = NoiseModel> {
    PossibleValuesParser::new(NOISE_NAMES).map(|s| s.parse::<NoiseModel>().expect("listed name"))
}

#[derive(Debug, Parser)]
#[command(name = "parchsh", version, about = "Parallel CHSH strategy simulation and self-test verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a strategy file for a built-in family.
    Strategy(StrategyCmd),
    /// Exact game value.
    Value(ValueCmd),
    /// Monte Carlo referee.
    Simulate(SimulateCmd),
    /// Run the certification pipeline.
    Certify(CertifyCmd),
    /// Certify a grid of sizes and noise parameters; emits CSV.
    Sweep(SweepCmd),
    /// Print the logarithmic separating question set.
    Logset(LogsetCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CoverageArg {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Args)]
pub struct StrategySource {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value = "none", value_parser = noise_parser())]
    pub noise: NoiseModel,
    #[arg(long, allow_negative_numbers = true)]
    pub noise_param: Option<f64>,
    /// Strategy JSON file; replaces --noise.
    #[arg(long, conflicts_with_all = ["noise", "noise_param"])]
    pub strategy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StrategyCmd {
    #[command(flatten)]
    pub source: StrategySource,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValueCmd {
    #[command(flatten)]
    pub source: StrategySource,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub source: StrategySource,
    #[arg(long)]
    pub rounds: u64,
    #[arg(long, env = "SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[arg(long, value_enum)]
    pub coverage: Option<CoverageArg>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Seed for sampled coverage and sampled distances; defaults to 0.
    #[arg(long, env = "SEED")]
    pub seed: Option<u64>,
}

impl CoverageArgs {
    fn options(&self) -> Result<CertifyOptions, CliError> {
        if self.samples == 0 {
            return Err(CliError::config("--samples must be at least 1"));
        }
        Ok(CertifyOptions {
            coverage: match self.coverage {
                None => CoverageMode::Auto,
                Some(CoverageArg::Exhaustive) => CoverageMode::Exhaustive,
                Some(CoverageArg::Sampled) => CoverageMode::Sampled,
            },
            samples: self.samples,
            seed: self.seed.unwrap_or(0),
        })
    }
}

#[derive(Debug, Args)]
pub struct CertifyCmd {
    #[command(flatten)]
    pub source: StrategySource,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    /// `csv` writes one sweep-style row, `text` the full JSON report.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepCmd {
    /// Comma-separated sizes.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub n: Vec<usize>,
    #[arg(long, default_value = "bob-rotation", value_parser = noise_parser())]
    pub noise: NoiseModel,
    /// Comma-separated noise parameters; must be empty for `none`.
    #[arg(long, value_delimiter = ',', num_args = 0.., allow_negative_numbers = true)]
    pub noise_param: Vec<f64>,
    #[command(flatten)]
    pub coverage: CoverageArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LogsetCmd {
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidStrategy(_) => EXIT_VALIDATION,
            Error::JunkExtraction(_) => EXIT_VIOLATION,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<i32, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Strategy(cmd) => cmd_strategy(cmd, out),
        Command::Value(cmd) => cmd_value(cmd, out),
        Command::Simulate(cmd) => cmd_simulate(cmd, out),
        Command::Certify(cmd) => cmd_certify(cmd, out),
        Command::Sweep(cmd) => cmd_sweep(cmd, out),
        Command::Logset(cmd) => cmd_logset(cmd, out),
    }
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    let res = match path {
        Some(p) => fs::write(p, text),
        None => out.write_all(text.as_bytes()),
    };
    res.map_err(|e| CliError::config(format!("cannot write output: {e}")))
}

fn load_strategy(src: &StrategySource) -> Result<Strategy, CliError> {
    if let Some(path) = &src.strategy {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let s = Strategy::from_json(&text)?;
        if let Some(n) = src.n {
            if n != s.n() {
                return Err(CliError::config(format!("--n {n} but strategy file has n = {}", s.n())));
            }
        }
        let report = strategy::validate(&s);
        if !report.passed {
            return Err(Error::InvalidStrategy(format!("{report:?}")).into());
        }
        return Ok(s);
    }
    let n = src.n.ok_or_else(|| CliError::config("--n or --strategy is required"))?;
    let param = match (src.noise, src.noise_param) {
        (NoiseModel::None, p) => p.unwrap_or(0.0),
        (_, Some(p)) => p,
        (model, None) => return Err(CliError::config(format!("--noise {model} needs --noise-param"))),
    };
    Ok(strategy::noisy_strategy(n, NoiseSpec::new(src.noise, param)?)?)
}

fn cmd_strategy(cmd: StrategyCmd, out: &mut dyn Write) -> CliResult {
    let s = load_strategy(&cmd.source)?;
    let mut text = s.to_json()?;
    text.push('\n');
    emit(out, cmd.out.as_ref(), &text)?;
    Ok(EXIT_OK)
}

fn cmd_value(cmd: ValueCmd, out: &mut dyn Write) -> CliResult {
    let s = load_strategy(&cmd.source)?;
    if s.n() > MAX_EXACT_N {
        return Err(Error::TooLarge {
            n: s.n(),
            limit: MAX_EXACT_N,
            what: "exact value",
        }
        .into());
    }
    let v = game::exact_value(&s)?;
    let text = match cmd.format {
        Format::Csv => format!("{:.12}\n", v.value),
        Format::Text => format!("value {:.12}\nwin_rate {:.12}\n", v.value, v.win_rate),
    };
    emit(out, None, &text)?;
    Ok(EXIT_OK)
}

fn cmd_simulate(cmd: SimulateCmd, out: &mut dyn Write) -> CliResult {
    if cmd.rounds == 0 {
        return Err(CliError::config("--rounds must be at least 1"));
    }
    let seed = cmd
        .seed
        .ok_or_else(|| CliError::config("simulate needs --seed or SEED"))?;
    let s = load_strategy(&cmd.source)?;
    let v = game::referee_simulate(&s, cmd.rounds, seed, DEFAULT_WORKERS)?;
    let text = match cmd.format {
        Format::Csv => format!(
            "{SIMULATE_HEADER}\n{},{},{},{},{},{}\n",
            fmt_sig12(v.value),
            fmt_sig12(v.stderr),
            fmt_sig12(v.win_rate),
            v.rounds,
            seed,
            v.workers
        ),
        Format::Text => format!(
            "estimate {:.12}\nstderr {:.12}\nwin_rate {:.12}\nrounds {}\nseed {}\nworkers {}\n",
            v.value, v.stderr, v.win_rate, v.rounds, seed, v.workers
        ),
    };
    emit(out, cmd.out.as_ref(), &text)?;
    Ok(EXIT_OK)
}

fn exit_for(report: &SelfTestReport) -> i32 {
    if report.pass.all {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

fn cmd_certify(cmd: CertifyCmd, out: &mut dyn Write) -> CliResult {
    let options = cmd.coverage.options()?;
    let s = load_strategy(&cmd.source)?;
    let (model, param) = match &cmd.source.strategy {
        Some(_) => ("file", 0.0),
        None => (cmd.source.noise.as_str(), cmd.source.noise_param.unwrap_or(0.0)),
    };
    let report = verifier::certify(&s, &options)?;
    let text = match cmd.format {
        Format::Csv => format!("{SWEEP_HEADER}\n{}\n", sweep_row(model, param, &report)),
        Format::Text => format!("{}\n", report.to_json()?),
    };
    emit(out, cmd.out.as_ref(), &text)?;
    Ok(exit_for(&report))
}

/// Formats `x` with 12 significant digits, shortest form.
pub fn fmt_sig12(x: f64) -> String {
    let r = verifier::round_sig12(x);
    if r == 0.0 {
        "0".to_string()
    } else if (1e-4..1e12).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

pub fn sweep_row(model: &str, param: f64, r: &SelfTestReport) -> String {
    let nums = [
        param,
        r.value,
        r.epsilon,
        r.delta_cert,
        r.measured.eps1,
        r.certified_eps.eps1,
        r.measured.eps2,
        r.certified_eps.eps2,
        r.measured.eps3,
        r.certified_eps.eps3,
        r.dist_fixed_max,
        r.dist_opt_max,
        r.junk_norm,
    ];
    let mut row = format!("{},{model}", r.n);
    for x in nums {
        row.push(',');
        row.push_str(&fmt_sig12(x));
    }
    row
}

fn cmd_sweep(cmd: SweepCmd, out: &mut dyn Write) -> CliResult {
    let options = cmd.coverage.options()?;
    let params = match cmd.noise {
        NoiseModel::None if !cmd.noise_param.is_empty() => {
            return Err(CliError::config("--noise none takes no --noise-param"));
        }
        NoiseModel::None => vec![0.0],
        _ => cmd.noise_param.clone(),
    };
    let mut grid = Vec::new();
    for &n in &cmd.n {
        for &p in &params {
            let noise = NoiseSpec::new(cmd.noise, p)?;
            strategy::check_n(n)?;
            if n > verifier::MAX_CERTIFY_N {
                return Err(Error::TooLarge {
                    n,
                    limit: verifier::MAX_CERTIFY_N,
                    what: "certification",
                }
                .into());
            }
            grid.push((n, noise));
        }
    }
    let reports = grid
        .par_iter()
        .map(|&(n, noise)| {
            let s = strategy::noisy_strategy(n, noise)?;
            verifier::certify(&s, &options)
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let mut text = String::new();
    match cmd.format {
        Format::Csv => {
            text.push_str(SWEEP_HEADER);
            text.push('\n');
            for (&(_, noise), r) in grid.iter().zip(&reports) {
                text.push_str(&sweep_row(noise.model.as_str(), noise.param, r));
                text.push('\n');
            }
        }
        Format::Text => {
            for (&(_, noise), r) in grid.iter().zip(&reports) {
                let ratio = r.scaling_ratio.map_or("-".to_string(), fmt_sig12);
                text.push_str(&format!(
                    "n={} model={} param={} value={} epsilon={} dist_fixed_max={} dist_opt_max={} ratio={} pass={}\n",
                    r.n,
                    noise.model,
                    fmt_sig12(noise.param),
                    fmt_sig12(r.value),
                    fmt_sig12(r.epsilon),
                    fmt_sig12(r.dist_fixed_max),
                    fmt_sig12(r.dist_opt_max),
                    ratio,
                    r.pass.all
                ));
            }
        }
    }
    emit(out, cmd.out.as_ref(), &text)?;
    Ok(if reports.iter().all(|r| r.pass.all) {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

fn cmd_logset(cmd: LogsetCmd, out: &mut dyn Write) -> CliResult {
    let mut text = String::new();
    for q in log_question_set(cmd.n)? {
        text.push_str(&q.to_string());
        text.push('\n');
    }
    emit(out, None, &text)?;
    Ok(EXIT_OK)
}
