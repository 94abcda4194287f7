use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cot_pi_harness::bench::{format_summary, run_benchmark, write_rows};
use cot_pi_harness::commands::{cmd_estimate, cmd_select_c, cmd_simulate, format_estimate, write_curve};
use cot_pi_harness::config::Settings;
use cot_pi_harness::input::write_draw;
use cot_pi_harness::{HarnessError, Result};

/// Covariate-assisted partial-identification bounds via adapted conditional
/// optimal transport.
///
/// Settings come from built-in defaults, then `--config`, then `COTPI_<KEY>`
/// environment variables, then `--set` and the dedicated flags.
#[derive(Debug, Parser)]
#[command(name = "cotpi", version)]
struct Cli {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo repetitions.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `KEY=VALUE` settings, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the interval on a CSV file with columns `w, y_*, z_*[, weight]`.
    /// Falls back to the `input` setting.
    Estimate { input: Option<PathBuf> },
    /// Draw one synthetic sample and write it in the input schema.
    Simulate,
    /// Choose the cell constant by the bootstrap elbow rule, on a data
    /// file or else on one synthetic draw.
    SelectC { input: Option<PathBuf> },
    /// Repeat draw-and-estimate over the configured size grid.
    Benchmark {
        /// Also write the summary table as CSV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::load(cli.config.as_deref())?;
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        s.apply(k, v)?;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(reps) = cli.reps {
        s.reps = reps;
    }
    if let Some(jobs) = cli.jobs {
        s.jobs = jobs;
    }
    Ok(s)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: &Cli) -> Result<()> {
    let s = settings(cli)?;
    match &cli.command {
        Command::Estimate { input } => {
            let input = input
                .clone()
                .or_else(|| s.input.clone())
                .ok_or_else(|| HarnessError::Config("estimate needs an input file".into()))?;
            let report = cmd_estimate(&s, &input)?;
            print!("{}", format_estimate(&report));
            if let Some(p) = &cli.out {
                write_rows(File::create(p)?, &[report.row])?;
            }
        }
        Command::Simulate => {
            let draw = cmd_simulate(&s)?;
            write_draw(sink(cli.out.as_deref())?, &draw)?;
        }
        Command::SelectC { input } => {
            let input = input.clone().or_else(|| s.input.clone());
            let choice = cmd_select_c(&s, input.as_deref())?;
            eprintln!("chosen c = {}", choice.chosen);
            write_curve(sink(cli.out.as_deref())?, &choice)?;
        }
        Command::Benchmark { summary } => {
            let report = run_benchmark(&s)?;
            for n in &report.notices {
                eprintln!("notice: {n}");
            }
            if let Some(o) = report.oracle {
                println!("oracle lower bound {o:.6}");
            }
            print!("{}", format_summary(&report.summary, s.metric));
            if let Some(p) = &cli.out {
                write_rows(File::create(p)?, &report.rows)?;
            }
            if let Some(p) = summary {
                write_rows(File::create(p)?, &report.summary)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cotpi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
