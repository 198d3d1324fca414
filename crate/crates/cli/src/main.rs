use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crossdiff_core::harness;

#[derive(Parser)]
#[command(name = "crossdiff", version, about = "Two-species cross-diffusion simulator and admissibility harness")]
#[command(after_help = harness::help_text())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write snapshots, the step log and basic checks.
    #[command(after_help = harness::help_text())]
    Simulate { config: PathBuf },
    /// Run a refinement ladder with all diagnostics and print the check table.
    #[command(after_help = harness::help_text())]
    Ladder { config: PathBuf },
    /// Write (a, s, phi) rows of the entropy family on equispaced activities.
    PhiTable {
        /// Mobility ratio, != 1.
        #[arg(long, default_value_t = 2.0)]
        nu: f64,
        /// Comma-separated indices inside (alpha/beta, beta/alpha).
        #[arg(long, value_delimiter = ',', default_value = "0.7,0.8,0.9,1.0,1.1,1.2,1.3")]
        s: Vec<f64>,
        /// Activities per index.
        #[arg(long, default_value_t = 201)]
        n_nodes: usize,
        #[arg(long, default_value = "phi_table.csv")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config } => harness::simulate(&config).map(|s| {
            println!("{} steps, {} snapshots", s.n_steps, s.n_snapshots);
            for (name, v) in &s.checks {
                println!("{name:<18} {v:e}");
            }
            0
        }),
        Command::Ladder { config } => harness::ladder(&config).map(|report| {
            print!("{}", harness::summary_table(&report));
            let failed: Vec<_> = report.hard_failures().map(|c| c.name.clone()).collect();
            if failed.is_empty() {
                0
            } else {
                eprintln!("ERROR 2: hard checks failed: {}", failed.join(", "));
                2
            }
        }),
        Command::PhiTable { nu, s, n_nodes, out } => harness::phi_table(nu, &s, n_nodes, &out).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", harness::error_line(&e));
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
