//! Interval coverage and shrinking estimation error as the marker count grows.

use admixlink::harness::{
    consistency_experiment, coverage_experiment, write_consistency_csv, write_coverage_csv,
    ConsistencyConfig, CoverageConfig,
};

fn main() -> admixlink::Result<()> {
    let coverage = coverage_experiment(&CoverageConfig {
        replicates: 40,
        seed: 2,
        ..Default::default()
    })?;
    write_coverage_csv(&coverage, std::io::stdout().lock())?;
    println!();
    let rows = consistency_experiment(&ConsistencyConfig {
        schedule: vec![250, 1000, 4000],
        replicates: 10,
        seed: 2,
        ..Default::default()
    })?;
    write_consistency_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
