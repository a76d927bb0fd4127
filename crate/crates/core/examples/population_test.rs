//! Several individuals with their own ancestry proportions and one shared `r`.

use admixlink::simulate::{simulate_panel, MapSpec, SimulationConfig};
use admixlink::{run_population_test, FitOptions, Recombination};

fn main() -> admixlink::Result<()> {
    let config = SimulationConfig {
        marker_counts: vec![400, 400],
        r: Recombination::Finite(10.0),
        map: MapSpec::Constant(0.1),
        seed: 11,
        ..Default::default()
    };
    let qs = vec![vec![0.2, 0.8], vec![0.5, 0.5], vec![0.8, 0.2], vec![0.65, 0.35]];
    let panel = simulate_panel(&config, qs.len(), Some(&qs))?;
    let data: Vec<_> = panel.iter().map(|s| s.data.clone()).collect();
    let t = run_population_test(&data, &panel[0].freqs, &panel[0].map, 0.05, &FitOptions::default())?;
    println!("shared r = {}  ({} free parameters)", t.alt_fit.r_hat, t.alt_fit.n_parameters());
    for (q_hat, q) in t.alt_fit.q_hats.iter().zip(&qs) {
        println!("  q = {q:?}  estimated {q_hat:.3?}");
    }
    println!("lambda = {:.2}  p = {:.3e}  reject = {}", t.lambda, t.p_value, t.reject);
    Ok(())
}
