//! Runs a JSON scenario in-process, as the `privpower` binary does, and
//! re-validates the written files.

use std::path::PathBuf;

use privpower::scenario::{run, verify, Scenario};

fn main() -> privpower::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/three_binary_users.json")));
    let scenario = Scenario::load(&path)?;
    let out = std::env::temp_dir().join("privpower-scenario-batch");
    for file in run(&scenario, &out, None)? {
        println!("wrote {}", file.display());
    }
    println!("verified {} files", verify(&out)?.len());
    Ok(())
}
