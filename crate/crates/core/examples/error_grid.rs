//! A reduced type-I / type-II error grid written as CSV to stdout.
//!
//! Pass a replicate count as the first argument (default 20); 100 reproduces the
//! full-size experiment.

use admixlink::harness::{error_rate_experiment, write_error_grid_csv, ErrorGridConfig};

fn main() -> admixlink::Result<()> {
    let replicates = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20);
    let config = ErrorGridConfig {
        d_values: vec![0.1, 1.0, 10.0],
        replicates,
        seed: 1,
        ..Default::default()
    };
    let result = error_rate_experiment(&config)?;
    write_error_grid_csv(&result, std::io::stdout().lock())?;
    eprintln!("pooled type-I error {:.3}", result.pooled_type_one_error());
    Ok(())
}
