use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use revealmm::scenario::{self, Format, Report, RunFlags, Scenario};

/// Run and check market-maker scenarios.
#[derive(Parser)]
#[command(name = "revealmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the scenario's trading protocol and audit the result.
    Run(Opts),
    /// Analyze the scenario without trading.
    Check(Opts),
}

#[derive(Args)]
struct Opts {
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Switch costs even when the plan fails its consistency check.
    #[arg(long)]
    allow_inconsistent: bool,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Jsonl)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Jsonl,
    Csv,
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_PARSE: u8 = 2;

fn emit(report: &Report, opts: &Opts) -> anyhow::Result<()> {
    let format = match opts.format {
        OutFormat::Jsonl => Format::Jsonl,
        OutFormat::Csv => Format::Csv,
    };
    match &opts.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            scenario::write_records(&report.records, format, file)?;
        }
        None => scenario::write_records(&report.records, format, io::stdout().lock())?,
    }
    let mut err = io::stderr().lock();
    for note in &report.notes {
        writeln!(err, "{note}")?;
    }
    for f in &report.failures {
        writeln!(err, "FAIL {f}")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (opts, is_run) = match &cli.command {
        Command::Run(o) => (o, true),
        Command::Check(o) => (o, false),
    };
    let sc = match Scenario::load(&opts.scenario) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let flags = RunFlags { seed: opts.seed, tol: opts.tol, allow_inconsistent: opts.allow_inconsistent };
    let report = if is_run { scenario::run(&sc, &flags) } else { scenario::check(&sc, &flags) };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CHECK_FAILED);
        }
    };
    if let Err(e) = emit(&report, opts) {
        eprintln!("{e:#}");
        return ExitCode::from(EXIT_CHECK_FAILED);
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
