//! `hallmhd` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 failed acceptance criterion.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hallmhd::config::parse_config;
use hallmhd::runner::{self, exit, Command};
use hallmhd::verification::StudyAxis;

#[derive(Debug, Parser)]
#[command(name = "hallmhd", version, about = "Spectral-Galerkin solver for density-dependent Hall-MHD")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run one simulation and write the ledger, level sets and snapshots.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat the simulation along a refinement axis and report convergence.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_axis)]
        axis: StudyAxis,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Simulate, then evaluate diagnostics and acceptance verdicts.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_axis(s: &str) -> Result<StudyAxis, String> {
    s.parse()
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { code(exit::USAGE) } else { code(exit::OK) };
        }
    };
    let (path, command) = match cli.command {
        Cmd::Simulate { config } => (config, Command::Simulate),
        Cmd::Study { config, axis, levels } => (config, Command::Study { axis, levels }),
        Cmd::Verify { config } => (config, Command::Verify),
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return code(exit::USAGE);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return code(exit::USAGE);
        }
    };
    match runner::run(command, &cfg) {
        Ok(out) => {
            for v in &out.manifest.verdicts {
                println!("{:<32} {:?}  value={:.3e} threshold={:.3e}", v.id, v.verdict, v.value, v.threshold);
            }
            if let Some(f) = &out.manifest.failure {
                eprintln!("failure: {f}");
            }
            println!(
                "{} {} in {:.2}s -> {}",
                command.name(),
                out.manifest.status,
                out.manifest.timings.total_s,
                out.out_dir.display()
            );
            code(out.exit_code)
        }
        Err(e) => {
            eprintln!("error: cannot write run artifacts: {e}");
            code(runner::classify(&e))
        }
    }
}
