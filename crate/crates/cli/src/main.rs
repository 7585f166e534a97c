use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use containment_cli::commands::{self, exit_code, RunOverrides};

/// Resilient containment-control simulator.
#[derive(Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print every assumption and gain condition.
    Check { config: PathBuf },
    /// Simulate and write trace.csv, diagnostics.csv and report.json.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Solve the regulator equations of one follower (1-based).
    Regsolve {
        config: PathBuf,
        #[arg(long)]
        follower: usize,
    },
    /// Run every config in a directory.
    Sweep {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output root; defaults to `<dir>/runs`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIM_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    let result = match cli.command {
        Command::Check { config } => commands::cmd_check(&config, &mut stdout).map(|_| 0),
        Command::Run { config, out, dt, horizon } => {
            commands::cmd_run(&config, &out, RunOverrides { dt, horizon }).map(|ok| {
                println!("bounds_satisfied: {ok}");
                0
            })
        }
        Command::Regsolve { config, follower } => {
            commands::cmd_regsolve(&config, follower, &mut stdout).map(|_| 0)
        }
        Command::Sweep { dir, jobs, out } => commands::cmd_sweep(&dir, out.as_deref(), jobs).map(|runs| {
            let mut worst = 0;
            for r in &runs {
                match &r.result {
                    Ok(ok) => println!("{}: ok (bounds_satisfied: {ok})", r.config.display()),
                    Err((code, msg)) => {
                        println!("{}: exit {code}: {msg}", r.config.display());
                        worst = worst.max(*code);
                    }
                }
            }
            worst
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
