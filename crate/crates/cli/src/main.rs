use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gridsim::fixtures;
use gridsim::num::{parse_rational, render_rational};
use gridsim::report::{format_summary, report_dir, run_to_dir, ReportError, RunOptions};
use gridsim::{load_scenario, ExecMode, Scenario, ScenarioError};
use num_rational::Rational64;

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gridsim",
    version,
    about = "Smart grid demand coordination simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and list every violated rule.
    Validate { path: PathBuf },
    /// Run a scenario and write metrics, flows, summary and manifest.
    Run {
        path: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        max_feedback_rounds: Option<u32>,
        /// Feedback coefficient, as a decimal ("0.05") or fraction ("1/20").
        #[arg(long, value_parser = parse_epsilon)]
        epsilon: Option<Rational64>,
        /// Run every stage on the calling thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Verify a finished run directory and print its summary.
    Report { dir: PathBuf },
    /// Print a built-in scenario as a scenario file.
    Example {
        #[arg(value_enum)]
        name: ExampleName,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Iterations for `tracking`.
        #[arg(long, default_value_t = 1953)]
        iterations: u64,
        /// Simulated days for `daily`.
        #[arg(long, default_value_t = 5)]
        days: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleName {
    ThreeHouses,
    Tracking,
    Daily,
}

fn parse_epsilon(text: &str) -> Result<Rational64, String> {
    let e = parse_rational(text).ok_or_else(|| format!("not a number: {text:?}"))?;
    if e <= Rational64::from(0) || e >= Rational64::from(1) {
        return Err(format!(
            "must lie strictly between 0 and 1, got {}",
            render_rational(&e)
        ));
    }
    Ok(e)
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    })?;
    load_scenario(&text).map_err(|e| match e {
        ScenarioError::Parse {
            line,
            column,
            message,
        } => {
            eprintln!("{}:{line}:{column}: {message}", path.display());
            ExitCode::from(EXIT_PARSE)
        }
        ScenarioError::Invalid(violations) => {
            for v in &violations {
                println!("{v}");
            }
            ExitCode::from(EXIT_VIOLATIONS)
        }
        ScenarioError::Io(e) => {
            eprintln!("{}: {e}", path.display());
            ExitCode::from(EXIT_IO)
        }
    })
}

fn validate(path: &Path) -> ExitCode {
    match load(path) {
        Ok(s) => {
            let devices: usize = s.houses().map(|h| h.devices.len()).sum();
            println!(
                "ok: {} microgrid(s), {} house(s), {} device(s), {} plant(s)",
                s.microgrids.len(),
                s.house_count(),
                devices,
                s.plants.len()
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn report_failure(e: ReportError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        ReportError::Io { .. } => ExitCode::from(EXIT_IO),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { path } => validate(&path),
        Command::Run {
            path,
            seed,
            iterations,
            out,
            max_feedback_rounds,
            epsilon,
            sequential,
        } => {
            let scenario = match load(&path) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let mode = if sequential {
                ExecMode::Sequential
            } else {
                ExecMode::Parallel
            };
            let options = RunOptions {
                seed,
                iterations,
                max_feedback_rounds,
                epsilon,
                mode,
            };
            match run_to_dir(&path.display().to_string(), &scenario, &options, &out) {
                Ok(manifest) => {
                    println!(
                        "wrote {} iteration(s) to {}",
                        manifest.iterations,
                        out.display()
                    );
                    for (file, sum) in &manifest.checksums {
                        println!("  {file}  sha256:{sum}");
                    }
                    if !manifest.warnings.is_empty() {
                        println!(
                            "{} warning(s) recorded in the manifest",
                            manifest.warnings.len()
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => report_failure(e),
            }
        }
        Command::Report { dir } => match report_dir(&dir) {
            Ok((manifest, summary)) => {
                println!("scenario: {} (seed {})", manifest.scenario, manifest.seed);
                print!("{}", format_summary(&summary));
                if !manifest.warnings.is_empty() {
                    println!("warnings: {}", manifest.warnings.len());
                }
                ExitCode::SUCCESS
            }
            Err(e) => report_failure(e),
        },
        Command::Example {
            name,
            seed,
            iterations,
            days,
        } => {
            let s = match name {
                ExampleName::ThreeHouses => fixtures::three_houses(),
                ExampleName::Tracking => fixtures::tracking(seed, iterations),
                ExampleName::Daily => fixtures::daily(seed, days),
            };
            print!("{}", s.to_toml_string());
            ExitCode::SUCCESS
        }
    }
}
