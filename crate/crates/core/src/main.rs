use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use privpower::scenario::{self, exit_code, Scenario, Task};
use privpower::Unit;

/// Privacy-power curves, allocations, lower bounds and simulations from a
/// JSON scenario.
#[derive(Debug, Parser)]
#[command(name = "privpower", version)]
struct Args {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,

    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Task to run (repeatable); defaults to the scenario's task list.
    #[arg(long = "task", value_name = "NAME")]
    tasks: Vec<Task>,

    /// Re-validate the written outputs.
    #[arg(long)]
    verify: bool,

    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the reporting unit (bits or nats).
    #[arg(long)]
    unit: Option<Unit>,
}

fn run(args: &Args) -> privpower::Result<()> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(unit) = args.unit {
        scenario.unit = unit;
    }
    if let Some(seed) = args.seed {
        if let Some(sim) = scenario.sim.as_mut() {
            sim.seed = seed;
        }
    }
    let tasks = (!args.tasks.is_empty()).then_some(args.tasks.as_slice());
    for path in scenario::run(&scenario, &args.out, tasks)? {
        println!("wrote {}", path.display());
    }
    if args.verify {
        for path in scenario::verify(&args.out)? {
            println!("verified {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
