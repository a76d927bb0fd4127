//! Distribution of the test statistic on Admixture data against its two candidate limits.

use admixlink::harness::{null_calibration, NullCalibrationConfig};

fn main() -> admixlink::Result<()> {
    let cal = null_calibration(&NullCalibrationConfig {
        replicates: 200,
        seed: 9,
        ..Default::default()
    })?;
    println!("rejection rate at 0.05: {:.3}", cal.rejection_rate);
    println!("KS vs chi2(1):              D = {:.3}, p = {:.3}", cal.ks_chi2, cal.ks_chi2_p_value);
    println!("KS vs 0.5 delta0 + 0.5 chi2: D = {:.3}, p = {:.3}", cal.ks_mixture, cal.ks_mixture_p_value);
    println!("{:>6} {:>10} {:>8} {:>8}", "prob", "empirical", "chi2", "mixture");
    for (p, e, c, m) in &cal.quantiles {
        println!("{p:>6} {e:>10.3} {c:>8.3} {m:>8.3}");
    }
    Ok(())
}
