//! Per-individual tests over a labelled panel, each with frequencies estimated from
//! everyone else.

use admixlink::io::{leave_one_out_frequencies, summarize_panel, Layout, PanelDataset, PopulationLabels};
use admixlink::simulate::{simulate_panel, SimulationConfig};
use admixlink::{run_test, FitOptions, Ploidy, Recombination};

fn main() -> admixlink::Result<()> {
    let k = 3;
    let n = 15;
    let config = SimulationConfig {
        marker_counts: vec![20; 5],
        q: vec![1.0 / 3.0; 3],
        r: Recombination::Infinite,
        ploidy: Ploidy::PhasedDiploid,
        seed: 8,
        ..Default::default()
    };
    // individual i mostly descends from population i mod K
    let qs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|j| if j == i % k { 0.8 } else { 0.1 }).collect())
        .collect();
    let sims = simulate_panel(&config, n, Some(&qs))?;
    let panel = PanelDataset::new(
        (0..n).map(|i| format!("ind{i}")).collect(),
        sims.iter().map(|s| s.data.clone()).collect(),
        Layout::numbered(&config.marker_counts),
    )?;
    let labels = PopulationLabels {
        populations: vec!["A".into(), "B".into(), "C".into()],
        of_individual: (0..n).map(|i| Some(i % k)).collect(),
    };
    let opts = FitOptions::default();
    let mut rejects = Vec::new();
    for i in 0..n {
        let freqs = leave_one_out_frequencies(&panel, i, &labels)?;
        let t = run_test(&panel.individuals[i], &freqs, &sims[0].map, 0.05, &opts)?;
        println!("{}: lambda = {:6.3}  q = {:.2?}", panel.ids[i], t.lambda, t.alt_fit.theta_hat.q);
        rejects.push(t.reject);
    }
    let summary = summarize_panel(&rejects, Some(&labels));
    println!("not rejected: {:.2} overall", summary.non_rejection_fraction);
    for (pop, tested, _, frac) in &summary.per_population {
        println!("  {pop}: {frac:.2} of {tested}");
    }
    Ok(())
}
