use clap::{Parser, Subcommand};
use mkv_core::Error;
use mkvctl::config::parse_nu_bounds;
use mkvctl::{compare_runs, error_json, exit_code, run, Command, ExperimentConfig, Overrides, RunRecord};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mkvctl", version, about = "Run and verify mean-field control solvers")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    /// Intensity bounds as `lo,hi`.
    #[arg(long, value_parser = parse_nu_bounds)]
    nu_bounds: Option<(f64, f64)>,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the particle system under one catalog control.
    Simulate(RunArgs),
    /// Optimize over the step-control catalog.
    ValueDirect(RunArgs),
    /// Law-level value over the atoms of π.
    ValueMkv(RunArgs),
    /// Intensity-controlled value on the jump lattice.
    ValueRandomized(RunArgs),
    /// Penalized BSDE scheme up to the schedule's last level.
    Bsde(RunArgs),
    /// Run the cross-checks and write the residual table.
    Verify(RunArgs),
    /// Time one repeat of every configured route.
    Bench(RunArgs),
    /// Compare two results.json files.
    Compare { a: PathBuf, b: PathBuf },
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("MKVCTL_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::Config {
            pointer: String::new(),
            message: format!("MKVCTL_THREADS must be a positive integer, got `{v}`"),
        })?;
        if n == 0 {
            return Err(Error::Config {
                pointer: String::new(),
                message: "MKVCTL_THREADS must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(())
}

fn load_record(path: &PathBuf) -> Result<RunRecord, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    let (command, args) = match cli.command {
        Cmd::Compare { a, b } => {
            let diff = compare_runs(&load_record(&a)?, &load_record(&b)?).map_err(|e| Error::UnsupportedInput(e.to_string()))?;
            println!("{}", serde_json::to_string_pretty(&diff).expect("diff serializes"));
            return Ok(());
        }
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::ValueDirect(a) => (Command::ValueDirect, a),
        Cmd::ValueMkv(a) => (Command::ValueMkv, a),
        Cmd::ValueRandomized(a) => (Command::ValueRandomized, a),
        Cmd::Bsde(a) => (Command::Bsde, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Bench(a) => (Command::Bench, a),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    Overrides {
        seed: args.seed,
        out: args.out,
        nu_bounds: args.nu_bounds,
        repeats: args.repeats,
    }
    .apply(&mut cfg)?;
    let record = run(command, &cfg)?;
    for r in &record.routes {
        println!("{:<12} {:>14.6e} ± {:.2e}", r.route, r.value, r.ci);
    }
    for r in &record.residuals {
        let status = if r.pass { "ok" } else { "FAIL" };
        println!("{:<16} {:>12.3e} (tol {:.1e}) {status}", r.name, r.value, r.tolerance);
    }
    println!("wrote {}/results.json", cfg.output);
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
