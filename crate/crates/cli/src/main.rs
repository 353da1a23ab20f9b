//! `levnv`: command-line front end for the levitated-nanodiamond toolkit.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::commands::{
    CalibrateStrainArgs, EscapeArgs, FitEsrArgs, FitPsdArgs, FitTpArgs, O2Args, PsdArgs, Run,
    SimulateArgs, SizeArgs, TempArgs,
};
use crate::config::{explicit, RunRecord};

#[derive(Parser, Debug)]
#[command(name = "levnv", version, about = "Levitated nanodiamond simulation and analysis")]
struct Cli {
    /// JSON run record to load inputs from; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for the random number generator.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output artifacts [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the centre-of-mass trajectory.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Estimate the power spectral density of a trajectory.
    #[command(allow_negative_numbers = true)]
    Psd(PsdArgs),
    /// Fit the damped-oscillator model to a spectrum.
    #[command(allow_negative_numbers = true)]
    FitPsd(FitPsdArgs),
    /// Particle size from the gas damping rate.
    #[command(allow_negative_numbers = true)]
    Size(SizeArgs),
    /// Fit a double-Gaussian ESR scan.
    #[command(allow_negative_numbers = true)]
    FitEsr(FitEsrArgs),
    /// Convert between zero-field splitting and temperature.
    #[command(allow_negative_numbers = true)]
    Temp(TempArgs),
    /// Zero-power strain calibration from a power series.
    #[command(allow_negative_numbers = true)]
    CalibrateStrain(CalibrateStrainArgs),
    /// Fit T = T0 + alpha / P to a heating series.
    #[command(allow_negative_numbers = true)]
    FitTp(FitTpArgs),
    /// Oxygen count calibration and inversion.
    #[command(allow_negative_numbers = true)]
    O2(O2Args),
    /// Monte Carlo escape from a finite-depth trap.
    #[command(allow_negative_numbers = true)]
    Escape(EscapeArgs),
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(levnv::Error),
}

impl From<levnv::Error> for CliError {
    fn from(e: levnv::Error) -> Self {
        CliError::Run(e)
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Values shared by every subcommand.
pub struct Context {
    pub seed: u64,
    pub out: PathBuf,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn parse(argv: &[std::ffi::OsString]) -> ArgMatches {
    Cli::command()
        .try_get_matches_from(argv)
        .unwrap_or_else(|e| e.exit())
}

fn run(mut argv: Vec<std::ffi::OsString>) -> Result<String, CliError> {
    let mut matches = parse(&argv);
    let mut cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());

    let record = match &cli.config {
        Some(path) => Some(RunRecord::load(path)?),
        None => None,
    };
    if cli.command.is_none() {
        // the subcommand comes from the config file
        let Some(rec) = &record else {
            Cli::command().print_help().ok();
            return Err(usage("a subcommand or --config is required"));
        };
        argv.push(rec.command.clone().into());
        matches = parse(&argv);
        cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    }
    let (name, sub) = matches.subcommand().expect("subcommand present");
    if let Some(rec) = &record {
        if rec.command != name {
            return Err(usage(format!(
                "config is for `{}` but `{name}` was requested",
                rec.command
            )));
        }
    }

    let seed = match (cli.seed, &record) {
        (Some(s), _) if explicit(sub, "seed") || explicit(&matches, "seed") => s,
        (_, Some(rec)) => rec.seed,
        (s, None) => s.unwrap_or(0),
    };
    let out = match (&cli.out, &record) {
        (Some(o), _) if explicit(sub, "out") || explicit(&matches, "out") => o.clone(),
        (_, Some(rec)) => rec.out.clone(),
        (o, None) => o.clone().unwrap_or_else(|| PathBuf::from(".")),
    };
    let ctx = Context { seed, out };
    let inputs = record.as_ref().map(|r| &r.inputs);

    match cli.command.expect("subcommand present") {
        Command::Simulate(a) => execute(name, a, sub, inputs, &ctx),
        Command::Psd(a) => execute(name, a, sub, inputs, &ctx),
        Command::FitPsd(a) => execute(name, a, sub, inputs, &ctx),
        Command::Size(a) => execute(name, a, sub, inputs, &ctx),
        Command::FitEsr(a) => execute(name, a, sub, inputs, &ctx),
        Command::Temp(a) => execute(name, a, sub, inputs, &ctx),
        Command::CalibrateStrain(a) => execute(name, a, sub, inputs, &ctx),
        Command::FitTp(a) => execute(name, a, sub, inputs, &ctx),
        Command::O2(a) => execute(name, a, sub, inputs, &ctx),
        Command::Escape(a) => execute(name, a, sub, inputs, &ctx),
    }
}

fn execute<A: Run>(
    name: &str,
    parsed: A,
    matches: &ArgMatches,
    inputs: Option<&Value>,
    ctx: &Context,
) -> Result<String, CliError> {
    let args = config::merge(parsed, matches, inputs)?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| {
        CliError::Run(levnv::Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", ctx.out.display()),
        )))
    })?;
    let outputs = args.run(ctx)?;
    let record = RunRecord {
        command: name.to_string(),
        seed: ctx.seed,
        out: ctx.out.clone(),
        inputs: to_value(&args),
        outputs: Some(outputs),
    };
    write_record(&ctx.path(&format!("{name}.json")), &record)?;
    Ok(serde_json::to_string(&record).expect("record serializes"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("inputs serialize")
}

fn write_record(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    levnv::io::file::write_json(path, record)?;
    Ok(())
}
