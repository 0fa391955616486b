//! `clogb` — runs regret experiments from flat config files, sweeps one
//! parameter across values, and self-checks the offline oracles.
//!
//! Exit codes: 0 on success, 1 on any runtime failure (bad config, harness
//! error, failed oracle crosscheck), 2 on command-line usage errors.

use clap::{Parser, Subcommand};
use clogb::{emit_csv, parse_experiment, run_experiment, run_oracle_crosschecks, summarize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "clogb", version, about = "Combinatorial logistic bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// Path to a flat `key = value` experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Directory for `trace.csv` and `summary.csv`; created if missing.
        /// Without it, results only print to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress the summary table on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Re-run a config several times, overriding one key per run.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Config key to override, e.g. `k` or `clogucb.delta`.
        #[arg(long)]
        param: String,
        /// Comma-separated values for the key.
        #[arg(long)]
        values: String,
        /// Root output directory; each run writes under `<param>=<value>/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check every offline oracle against exhaustive enumeration.
    CheckOracles {
        /// Seed for the random test corpus.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run { config, out, quiet } => {
            let summary = run_one(&config, None, out.as_deref())?;
            if !quiet {
                print!("{summary}");
            }
            Ok(())
        }
        Command::Sweep { config, param, values, out } => {
            if values.is_empty() {
                return Err("--values needs at least one value".into());
            }
            for value in values.split(',').map(str::trim) {
                let out_dir = out.as_ref().map(|root| root.join(format!("{param}={value}")));
                let summary =
                    run_one(&config, Some((&param, value)), out_dir.as_deref())?;
                println!("--- {param} = {value} ---");
                print!("{summary}");
            }
            Ok(())
        }
        Command::CheckOracles { seed } => {
            let reports = run_oracle_crosschecks(seed);
            let mut all_ok = true;
            for r in &reports {
                let status = if r.passed() { "ok" } else { "FAILED" };
                println!(
                    "{:<28} {:>5} cases, {} failures, max error {:.3e} ... {status}",
                    r.name, r.cases, r.failures, r.max_error
                );
                all_ok &= r.passed();
            }
            if all_ok {
                Ok(())
            } else {
                Err("oracle crosschecks failed".into())
            }
        }
    }
}

/// Loads a config (optionally overriding one key), runs it, writes outputs,
/// and returns the summary table.
fn run_one(
    config_path: &Path,
    override_kv: Option<(&str, &str)>,
    out_dir: Option<&Path>,
) -> Result<String, String> {
    let mut text = std::fs::read_to_string(config_path)
        .map_err(|e| format!("could not read `{}`: {e}", config_path.display()))?;
    if let Some((key, value)) = override_kv {
        text = override_key(&text, key, value);
    }
    let base_dir = config_path.parent();
    let config = parse_experiment(&text, base_dir).map_err(|e| e.to_string())?;
    let result = run_experiment(&config).map_err(|e| e.to_string())?;
    let summary = summarize(&result);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| format!("could not create `{}`: {e}", dir.display()))?;
        let trace_path = dir.join("trace.csv");
        let mut trace = Vec::new();
        emit_csv(&result, &mut trace).expect("writing to memory cannot fail");
        std::fs::write(&trace_path, trace)
            .map_err(|e| format!("could not write `{}`: {e}", trace_path.display()))?;
        let summary_path = dir.join("summary.csv");
        std::fs::write(&summary_path, summary_csv(&summary))
            .map_err(|e| format!("could not write `{}`: {e}", summary_path.display()))?;
    }
    Ok(summary)
}

/// Replaces (or appends) one `key = value` assignment in config text.
fn override_key(text: &str, key: &str, value: &str) -> String {
    let mut out: String = text
        .lines()
        .filter(|line| {
            let content = line.split('#').next().unwrap_or("");
            match content.split_once('=') {
                Some((k, _)) => k.trim() != key,
                None => true,
            }
        })
        .map(|line| format!("{line}\n"))
        .collect();
    out.push_str(&format!("{key} = {value}\n"));
    out
}

/// The aligned summary table as CSV: same columns, comma-separated.
fn summary_csv(table: &str) -> String {
    table
        .lines()
        .map(|line| line.split_whitespace().collect::<Vec<_>>().join(","))
        .map(|line| format!("{line}\n"))
        .collect()
}
