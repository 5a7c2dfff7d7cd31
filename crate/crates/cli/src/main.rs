use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use photonnet::netspec;
use photonnet::verify::{verify, DEFAULT_CASES};
use photonnet::Error;

const EXIT_INVALID: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser)]
#[command(name = "photonnet", version, about = "Photon detection statistics for fiber networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate an experiment file and print its result table.
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
        out: OutFormat,
        /// Replace a sweep axis, e.g. `detector.D.eta_det=0.1,0.5`.
        #[arg(long = "sweep-override", value_name = "K=V")]
        sweep_override: Vec<String>,
    },
    /// Cross-check the engine against the dense-Fock oracle on random cases.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_CASES)]
        cases: usize,
        /// Print the per-case report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the JSON Schema of experiment files.
    Schema,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run_error(e: Error) -> ExitCode {
    fail(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID }, e)
}

fn parse_override(s: &str) -> Result<(String, Vec<f64>), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("sweep override {s:?} is not K=V"))?;
    let values = v
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("sweep override {k}: {x:?} is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((k.trim().to_string(), values))
}

fn run(file: PathBuf, out: OutFormat, overrides: Vec<String>) -> ExitCode {
    let text = match std::fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_INVALID, format!("{}: {e}", file.display())),
    };
    let mut exp = match netspec::parse(&text) {
        Ok(x) => x,
        Err(e) => return run_error(e),
    };
    for o in &overrides {
        let (k, v) = match parse_override(o) {
            Ok(kv) => kv,
            Err(msg) => return fail(EXIT_INVALID, msg),
        };
        exp = match exp.override_parameter(&k, v) {
            Ok(x) => x,
            Err(e) => return run_error(e),
        };
    }
    match exp.run() {
        Ok(r) => {
            match out {
                OutFormat::Csv => emit(&r.to_csv()),
                OutFormat::Json => emit(&format!("{}\n", r.to_json())),
            }
            ExitCode::SUCCESS
        }
        Err(e) => run_error(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { file, out, sweep_override } => run(file, out, sweep_override),
        Command::Verify { seed, cases, json } => match verify(seed, cases) {
            Ok(report) => {
                if json {
                    emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")));
                }
                let failures = report.failures();
                eprintln!(
                    "verify: {} cases, seed {}, max |engine - oracle| = {:.3e}, tolerance {:.0e}, {} failed",
                    report.cases.len(),
                    seed,
                    report.max_abs_diff(),
                    report.tolerance,
                    failures.len()
                );
                if failures.is_empty() {
                    ExitCode::SUCCESS
                } else {
                    for f in failures {
                        eprintln!("  case {}: diff {:.3e}", f.index, f.max_abs_diff);
                    }
                    ExitCode::from(EXIT_NUMERICAL)
                }
            }
            Err(e) => run_error(e),
        },
        Command::Schema => {
            emit(&format!("{}\n", netspec::json_schema()));
            ExitCode::SUCCESS
        }
    }
}
