//! Standard errors of the Linkage MLE from the observed information.

use admixlink::simulate::{simulate_linkage, SimulationConfig};
use admixlink::{covariance_mle, fit_linkage, EmissionMode, FitOptions, Recombination};

fn main() -> admixlink::Result<()> {
    for markers in [1000, 4000] {
        let config = SimulationConfig {
            marker_counts: vec![markers],
            q: vec![0.6, 0.4],
            r: Recombination::Finite(1.0),
            seed: 3,
            ..Default::default()
        };
        let sim = simulate_linkage(&config)?;
        let fit = fit_linkage(&sim.data, &sim.freqs, &sim.map, &FitOptions::default())?;
        let cov = covariance_mle(&fit, &sim.data, &sim.freqs, &sim.map, EmissionMode::Standard)?;
        println!("M = {markers}");
        let estimates = fit.theta_hat.q.iter().copied().chain([fit.theta_hat.r.value()]);
        for ((label, est), se) in cov.labels.iter().zip(estimates).zip(cov.standard_errors()) {
            println!("  {label} = {est:.4} ± {:.4}", 1.96 * se);
        }
        if !cov.reliable {
            println!("  warnings: {:?}", cov.warnings);
        }
    }
    Ok(())
}
