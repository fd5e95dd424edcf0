use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use geoflow_cli::{output_dir, parse_config, run, Mode, OUTPUT_ROOT_ENV};

/// Porous medium equation on evolving manifolds: simulations, identity
/// checks and Harnack estimate checks driven by a TOML configuration.
#[derive(Debug, Parser)]
#[command(name = "geoflow", version)]
struct Args {
    /// Configuration file.
    config: PathBuf,
    /// Overrides the configured mode.
    #[arg(long)]
    mode: Option<Mode>,
    /// Output directory (default: configured, else $GEOFLOW_OUTPUT_ROOT/<mode>).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long, env = OUTPUT_ROOT_ENV, hide = true)]
    output_root: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(m) = args.mode {
        cfg.mode = m;
        if let Err((_, _, msg)) = cfg.validate() {
            eprintln!("{}: {msg}", args.config.display());
            return ExitCode::from(2);
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = output_dir(&cfg, args.output.as_deref(), args.output_root.as_deref());
    match run(&cfg, &out) {
        Ok(status) => {
            println!("{}: {}", cfg.mode, status.name());
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
