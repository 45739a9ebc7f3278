use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lr_ergo_cli::{run_file, violation_json, Format, RunOptions, EXIT_OK, EXIT_VIOLATION};

/// Run a lattice dynamics experiment described by a TOML file.
#[derive(Parser, Debug)]
#[command(name = "lr-ergo", version)]
struct Args {
    /// One of: lr-certify, localize, ergodic-sweep, oscillatory, moments,
    /// mean-square, multi-point, spacelike-probe, kms-check, hydro.
    command: String,
    /// Experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: available cores). Never changes results.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let opts = RunOptions {
        out_dir: args.out.clone(),
        format: args.format,
        workers: args.workers,
    };
    match run_file(&args.command, &args.config, &opts) {
        Ok(outcome) => {
            for f in &outcome.manifest.outputs {
                println!("{}", args.out.join(&f.file).display());
            }
            println!("{}", args.out.join("manifest.json").display());
            match outcome.violation {
                Some(msg) => {
                    eprintln!("{}", violation_json(&args.command, &msg));
                    ExitCode::from(EXIT_VIOLATION as u8)
                }
                None => ExitCode::from(EXIT_OK as u8),
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json(&args.command));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
