use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hardball_core::harness::{self, Command, EXIT_INPUT};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Simulate,
    RefineStudy,
    UniquenessProbe,
    ClusterSim,
    GibbsSample,
    Reversibility,
    Diagnostics,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::RefineStudy => Command::RefineStudy,
            Cmd::UniquenessProbe => Command::UniquenessProbe,
            Cmd::ClusterSim => Command::ClusterSim,
            Cmd::GibbsSample => Command::GibbsSample,
            Cmd::Reversibility => Command::Reversibility,
            Cmd::Diagnostics => Command::Diagnostics,
        }
    }
}

/// Brownian hard-ball simulator.
#[derive(Parser, Debug)]
#[command(name = "hardball", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment spec (`key = value` lines) or a manifest.json from an earlier run.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let spec = match harness::load_spec(&cli.spec, Some(cli.command.into()), cli.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("input error: {e}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let outcome = harness::run(&spec, &cli.out);
    if outcome.exit_code == 0 {
        println!("{}", outcome.message);
        for p in &outcome.outputs {
            println!("wrote {}", p.display());
        }
    } else {
        eprintln!("{}", outcome.message);
    }
    ExitCode::from(outcome.exit_code as u8)
}
