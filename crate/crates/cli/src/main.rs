use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use odmix_cli::{run_command, CliResult, Outcome, RunConfig, Verb};

/// Bayesian OD trip models and congestion assessment.
#[derive(Debug, Parser)]
#[command(name = "odmix", version)]
struct Args {
    /// One of synth, fit, predict, assign, report, sweep-a.
    verb: String,
    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// `key=value` override; repeatable, applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Treat a PSRF above the threshold as an error (exit 5).
    #[arg(long)]
    strict: bool,
}

fn run(args: &Args) -> CliResult<Outcome> {
    let verb: Verb = args.verb.parse()?;
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &args.overrides {
        cfg.apply_override(kv)?;
    }
    if args.strict {
        cfg.strict = true;
    }
    run_command(verb, &cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for p in &out.artifacts {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
