//! Run every figure scenario with its default settings and write the CSVs,
//! per-replicate configs and manifests under one directory.
//!
//! ```text
//! cargo run --release --example reproduce_figures -- out/figures
//! ```

use std::path::PathBuf;

use fel_extortion::harness::{run_experiment, ExperimentSpec, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out/figures"));
    for scenario in Scenario::ALL {
        let mut spec = ExperimentSpec::new(scenario);
        spec.out_dir = root.join(scenario.name());
        let result = run_experiment(&spec)?;
        println!(
            "{:<7} {} files in {} ({:.2}s)",
            scenario.name(),
            result.manifest.files.len(),
            spec.out_dir.display(),
            result.manifest.runtime_secs
        );
    }
    Ok(())
}
