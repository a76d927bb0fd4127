//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to stdout
//! (written directly, so it survives output capture) before asserting.

mod common;

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use admixlink::harness::{
    consistency_experiment, coverage_experiment, error_rate_experiment, null_calibration,
    ConsistencyConfig, CoverageConfig, ErrorGridConfig, NullCalibrationConfig,
};
use admixlink::model::transition_matrix;
use admixlink::simulate::{simulate_admixture, simulate_linkage, SimulationConfig};
use admixlink::stats::{chi2_quantile, chi2_sf};
use admixlink::{
    admixture_loglik, brute_force_loglik, fit_admixture, fit_linkage, forward_loglik, EmissionMode,
    FitOptions, ModelKind, ParameterPoint, Recombination,
};
use rand::Rng;

fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {criterion:>2}: {status}  {detail}").unwrap();
    out.flush().unwrap();
}

#[test]
fn c01_forward_matches_path_enumeration() {
    let start = Instant::now();
    let mut rng = common::rng(1);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let k = 2 + i % 2;
        let c = 1 + (i / 2) % 2;
        let diploid = i % 5 == 0;
        // at most 10 markers in total
        let total = rng.random_range(c..=10);
        let counts: Vec<usize> = if c == 1 {
            vec![total]
        } else {
            let first = rng.random_range(1..total);
            vec![first, total - first]
        };
        let inst = common::random_instance(&mut rng, k, &counts, diploid);
        for mode in [EmissionMode::Standard, EmissionMode::PaperLiteral] {
            let f = forward_loglik(&inst.data, &inst.freqs, &inst.map, &inst.theta, mode).unwrap();
            let b = brute_force_loglik(&inst.data, &inst.freqs, &inst.map, &inst.theta, mode).unwrap();
            worst = worst.max((f.log_likelihood() - b.log_likelihood()).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-10 && secs < 10.0;
    report(1, pass, &format!("max |forward - enumeration| = {worst:.2e} over 200 instances, {secs:.2} s"));
    assert!(pass);
}

#[test]
fn c02_nesting_identity() {
    let mut rng = common::rng(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let k = 2 + i % 4;
        let counts = vec![rng.random_range(1..60), rng.random_range(1..60)];
        let inst = common::random_instance(&mut rng, k, &counts, i % 3 == 0);
        let theta = ParameterPoint::new(inst.theta.q.clone(), Recombination::Infinite).unwrap();
        let f = forward_loglik(&inst.data, &inst.freqs, &inst.map, &theta, EmissionMode::Standard).unwrap();
        let a = admixture_loglik(&inst.data, &inst.freqs, &inst.theta.q).unwrap();
        worst = worst.max((f.ell - a.ell).abs());
    }
    // fitted nesting on null and alternative data
    let mut min_gap = f64::INFINITY;
    for rep in 0..40u64 {
        let config = SimulationConfig {
            r: Recombination::Finite(if rep % 2 == 0 { 1.0 } else { 50.0 }),
            seed: 200 + rep,
            ..Default::default()
        };
        let sim = if rep % 4 < 2 {
            simulate_admixture(&config).unwrap()
        } else {
            simulate_linkage(&config).unwrap()
        };
        let opts = FitOptions {
            seed: rep,
            ..Default::default()
        };
        let null = fit_admixture(&sim.data, &sim.freqs, &opts).unwrap();
        let alt = fit_linkage(&sim.data, &sim.freqs, &sim.map, &opts).unwrap();
        min_gap = min_gap.min(alt.ell_hat - null.ell_hat);
    }
    let pass = worst <= 1e-14 && min_gap >= -1e-10;
    report(
        2,
        pass,
        &format!("max |ell(r=inf) - ell_admix| = {worst:.2e}; min ell_link - ell_admix over 40 fits = {min_gap:.2e}"),
    );
    assert!(pass);
}

/// Eigenvalues of `T` via the similar matrix `D^{1/2} T D^{-1/2}`, `D = diag(q)`, which is
/// symmetric when `T` is reversible with respect to `q`; also returns its asymmetry.
fn symmetrized_eigenvalues(t: &nalgebra::DMatrix<f64>, q: &[f64]) -> (Vec<f64>, f64) {
    let k = q.len();
    let s = nalgebra::DMatrix::from_fn(k, k, |i, j| q[i].sqrt() * t[(i, j)] / q[j].sqrt());
    let asym = (&s - s.transpose()).amax();
    (s.symmetric_eigen().eigenvalues.iter().copied().collect(), asym)
}

#[test]
fn c03_stationarity_and_spectrum() {
    let start = Instant::now();
    let mut rng = common::rng(3);
    let mut worst_stat = 0.0f64;
    let mut worst_eig = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let q = common::random_q(&mut rng, k);
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        let d = rng.random_range(0.0..10.0);
        let t = transition_matrix(&q, Recombination::Finite(r), d).unwrap();
        for j in 0..k {
            let v: f64 = (0..k).map(|i| q[i] * t[(i, j)]).sum();
            worst_stat = worst_stat.max((v - q[j]).abs());
        }
        let (mut eig, asym) = symmetrized_eigenvalues(&t, &q);
        eig.sort_by(f64::total_cmp);
        let lambda = (-d * r).exp();
        let mut expected = vec![lambda; k - 1];
        expected.push(1.0);
        expected.sort_by(f64::total_cmp);
        worst_eig = worst_eig.max(asym);
        for (a, b) in eig.iter().zip(&expected) {
            worst_eig = worst_eig.max((a - b).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_stat < 1e-12 && worst_eig < 1e-9 && secs < 5.0;
    report(
        3,
        pass,
        &format!("stationarity {worst_stat:.2e}, eigenvalues {worst_eig:.2e} over 1000 draws, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn c04_type_one_error() {
    let start = Instant::now();
    let config = ErrorGridConfig {
        d_values: vec![1.0],
        r_values: vec![],
        replicates: 300,
        seed: 4,
        ..Default::default()
    };
    let result = error_rate_experiment(&config).unwrap();
    let row = result.row(ModelKind::Admixture, 1.0, Recombination::Infinite).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = row.error_rate <= 0.07 && secs < 300.0;
    report(
        4,
        pass,
        &format!("type-I error {} / 300 = {:.4} (M=100, K=2, d=1), {secs:.1} s", row.rejections, row.error_rate),
    );
    assert!(pass);
}

#[test]
fn c05_power_and_trend() {
    let power_config = ErrorGridConfig {
        d_values: vec![1.0],
        r_values: vec![1.0],
        replicates: 100,
        seed: 5,
        ..Default::default()
    };
    let power = error_rate_experiment(&power_config).unwrap();
    let cell = power.row(ModelKind::Linkage, 1.0, Recombination::Finite(1.0)).unwrap();
    let rejection = 1.0 - cell.error_rate;

    let trend_config = ErrorGridConfig {
        d_values: vec![0.1, 10.0],
        r_values: vec![1.0, 100.0],
        replicates: 100,
        seed: 5,
        ..Default::default()
    };
    let trend = error_rate_experiment(&trend_config).unwrap();
    let low = trend.row(ModelKind::Linkage, 0.1, Recombination::Finite(1.0)).unwrap().error_rate;
    let high = trend.row(ModelKind::Linkage, 10.0, Recombination::Finite(100.0)).unwrap().error_rate;
    let pass = rejection >= 0.8 && high >= low;
    report(
        5,
        pass,
        &format!(
            "power at (r=1, d=1) = {rejection:.2}; type-II (r=1, d=0.1) = {low:.2} <= (r=100, d=10) = {high:.2}"
        ),
    );
    assert!(pass);
}

#[test]
fn c06_consistency() {
    let config = ConsistencyConfig {
        schedule: vec![5000],
        replicates: 20,
        seed: 6,
        ..Default::default()
    };
    let rows = consistency_experiment(&config).unwrap();
    let row = &rows[0];
    let pass = row.median_q1_error < 0.03 && row.median_r_error < 0.4;
    report(
        6,
        pass,
        &format!(
            "M=5000: median |q1 - 0.6| = {:.4}, median |r - 1| = {:.4}",
            row.median_q1_error, row.median_r_error
        ),
    );
    assert!(pass);
}

#[test]
fn c07_coverage_and_width_scaling() {
    let base = CoverageConfig {
        seed: 7,
        ..Default::default()
    };
    let small = coverage_experiment(&base).unwrap();
    let large = coverage_experiment(&CoverageConfig {
        markers: 2 * base.markers,
        ..base.clone()
    })
    .unwrap();
    let cov_q1 = small.coverage[0];
    let ratio = small.mean_width[0] / large.mean_width[0];
    let sqrt2 = 2f64.sqrt();
    let pass = (0.90..=0.99).contains(&cov_q1) && (ratio / sqrt2 - 1.0).abs() <= 0.15;
    report(
        7,
        pass,
        &format!(
            "coverage(q1) = {cov_q1:.3} over {} interior replicates ({} boundary); width ratio M/2M = {ratio:.3} (sqrt 2 = {sqrt2:.3})",
            small.replicates - small.boundary_replicates,
            small.boundary_replicates
        ),
    );
    assert!(pass);
}

#[test]
fn c08_null_calibration() {
    let config = NullCalibrationConfig {
        seed: 8,
        ..Default::default()
    };
    let cal = null_calibration(&config).unwrap();
    let quantiles: Vec<String> = cal
        .quantiles
        .iter()
        .map(|(p, e, c, m)| format!("p={p}: {e:.3} vs chi2 {c:.3} / mixture {m:.3}"))
        .collect();
    let pass = (0.01..=0.07).contains(&cal.rejection_rate);
    report(
        8,
        pass,
        &format!(
            "rejection rate {:.3} (500 x M=200); KS p chi2(1) = {:.3}, half-mixture = {:.3}; {}",
            cal.rejection_rate,
            cal.ks_chi2_p_value,
            cal.ks_mixture_p_value,
            quantiles.join("; ")
        ),
    );
    assert!(pass);
}

/// `x` with `P(χ²₁ ≤ x) = p`, by bisection on `erf(√(x/2))`.
fn chi2_quantile_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statrs::function::erf::erf((mid / 2.0f64).sqrt()) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn c09_chi_square_math() {
    let q95 = chi2_quantile(0.95).unwrap();
    let oracle = chi2_quantile_bisection(0.95);
    let mut worst = 0.0f64;
    for p in [0.5, 0.9, 0.95, 0.99] {
        let x = chi2_quantile(p).unwrap();
        worst = worst.max((chi2_sf(x).unwrap() - (1.0 - p)).abs());
    }
    let pass = (q95 - 3.84146).abs() <= 1e-4 && (q95 - oracle).abs() <= 1e-4 && worst <= 1e-8;
    report(
        9,
        pass,
        &format!("chi2_quantile(0.95) = {q95:.6} (bisection oracle {oracle:.6}); max |sf(quantile(p)) - (1-p)| = {worst:.2e}"),
    );
    assert!(pass);
}

fn run_bin(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_admixlink")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "admixlink {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Simulates a 20-individual, 55-marker, K=5, 20-chromosome phased-diploid panel under the
/// Admixture Model and runs `test-panel --loo`; returns (rows, rejections, schema ok).
fn loo_panel(dir: &std::path::Path, seed: u64) -> (usize, usize, bool) {
    let markers = [vec!["3"; 15], vec!["2"; 5]].concat().join(",");
    let out_dir = dir.join(format!("panel{seed}"));
    let out_dir = out_dir.to_str().unwrap();
    let seed = seed.to_string();
    run_bin(&[
        "simulate", "--out", out_dir, "--model", "admixture", "--markers", &markers, "--q",
        "0.2,0.2,0.2,0.2,0.2", "--structured", "0.8", "--individuals", "20", "--diploid", "--seed", &seed,
    ]);
    let results = format!("{out_dir}/results.csv");
    run_bin(&[
        "test-panel",
        "--genotypes",
        &format!("{out_dir}/genotypes.tsv"),
        "--map",
        &format!("{out_dir}/map.tsv"),
        "--labels",
        &format!("{out_dir}/labels.tsv"),
        "--loo",
        "--seed",
        &seed,
        "--out",
        &results,
        "--summary",
        &format!("{out_dir}/summary.csv"),
    ]);
    let text = std::fs::read_to_string(&results).unwrap();
    let mut lines = text.lines();
    let header = "id,ell_null,ell_alt,lambda,p_value,reject,q_hat_1,q_hat_2,q_hat_3,q_hat_4,q_hat_5,r_hat,boundary_flag";
    let mut schema_ok = lines.next() == Some(header);
    let mut rows = 0;
    let mut rejections = 0;
    for line in lines {
        rows += 1;
        let f: Vec<&str> = line.split(',').collect();
        schema_ok &= f.len() == 13
            && f[1..5].iter().chain(&f[6..12]).all(|v| v.parse::<f64>().is_ok())
            && ["true", "false"].contains(&f[5])
            && ["true", "false"].contains(&f[12]);
        rejections += usize::from(f.get(5) == Some(&"true"));
    }
    schema_ok &= rows == 20;
    (rows, rejections, schema_ok)
}

#[test]
fn c10_loo_panel_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (rows, rejections, schema_ok) = loo_panel(dir.path(), 0);
    let rate = rejections as f64 / rows as f64;
    // the same pipeline over further independent fixtures, pooled
    let (mut pooled_rows, mut pooled_rej) = (rows, rejections);
    let mut all_schema = schema_ok;
    for seed in 1..10 {
        let (n, rej, ok) = loo_panel(dir.path(), seed);
        pooled_rows += n;
        pooled_rej += rej;
        all_schema &= ok;
    }
    let pooled = pooled_rej as f64 / pooled_rows as f64;
    let pass = all_schema && rate <= 0.07 && pooled <= 0.07;
    report(
        10,
        pass,
        &format!(
            "test-panel --loo: schema {}, fixture rejections {rejections}/{rows} = {rate:.3}; pooled over 10 fixtures {pooled_rej}/{pooled_rows} = {pooled:.3}",
            if all_schema { "exact" } else { "MISMATCH" }
        ),
    );
    assert!(pass);
}
