//! Monte-Carlo experiments: error rates of the test over a `(d, r)` grid, null
//! calibration of `Λ`, coverage of CLT intervals and consistency of the MLE.
//!
//! Every replicate owns one RNG stream derived from the experiment seed and its
//! position, so results do not depend on scheduling. Linkage cells of the error
//! grid reuse the same streams across `(d, r)` (common random numbers).

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::inference::{covariance_mle, fit_linkage, FitOptions, ModelKind};
use crate::lrt::run_test;
use crate::model::{Ploidy, Recombination};
use crate::simulate::{simulate_admixture, simulate_linkage, FrequencySpec, MapSpec, SimulationConfig};
use crate::stats::{chi2_cdf, chi2_quantile};

/// Distances of the default grid (cM).
pub const DEFAULT_D_GRID: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
/// Recombination parameters of the default grid.
pub const DEFAULT_R_GRID: [f64; 3] = [1.0, 10.0, 100.0];

const STREAM_NULL: u64 = 1 << 48;
const STREAM_ALT: u64 = 2 << 48;
const STREAM_COVERAGE: u64 = 3 << 48;
const STREAM_CONSISTENCY: u64 = 4 << 48;
const STREAM_CALIBRATION: u64 = 5 << 48;

fn inner_fit_options(fit: &FitOptions) -> FitOptions {
    FitOptions {
        parallel: false,
        ..fit.clone()
    }
}

fn base_config(q: &[f64], markers: usize, d: f64, seed: u64, stream: u64) -> SimulationConfig {
    SimulationConfig {
        marker_counts: vec![markers],
        q: q.to_vec(),
        map: MapSpec::Constant(d),
        freqs: FrequencySpec::Uniform { lo: 0.1, hi: 0.9 },
        ploidy: Ploidy::Haploid,
        seed,
        stream,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGridConfig {
    pub d_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub markers: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub q: Vec<f64>,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for ErrorGridConfig {
    fn default() -> Self {
        Self {
            d_values: DEFAULT_D_GRID.to_vec(),
            r_values: DEFAULT_R_GRID.to_vec(),
            markers: 100,
            replicates: 100,
            alpha: 0.05,
            q: vec![0.5, 0.5],
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGridRow {
    pub d: f64,
    /// `Infinite` for Admixture-generated (null) cells.
    pub r: Recombination,
    pub generating: ModelKind,
    pub replicates: usize,
    pub rejections: usize,
    /// Type-I error for null cells, type-II error (non-rejection rate) for Linkage cells.
    pub error_rate: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub replicate: usize,
    pub lambda: f64,
    pub p_value: f64,
    pub reject: bool,
    pub r_hat: Recombination,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorGridResult {
    pub rows: Vec<ErrorGridRow>,
    pub records: Vec<ReplicateRecord>,
}

impl ErrorGridResult {
    /// Rejection rate pooled over all null cells.
    pub fn pooled_type_one_error(&self) -> f64 {
        let (rej, n) = self
            .rows
            .iter()
            .filter(|r| r.generating == ModelKind::Admixture)
            .fold((0, 0), |(a, b), r| (a + r.rejections, b + r.replicates));
        if n == 0 {
            0.0
        } else {
            rej as f64 / n as f64
        }
    }

    pub fn row(&self, generating: ModelKind, d: f64, r: Recombination) -> Option<&ErrorGridRow> {
        self.rows
            .iter()
            .find(|row| row.generating == generating && row.d == d && row.r == r)
    }
}

pub fn error_rate_experiment(config: &ErrorGridConfig) -> Result<ErrorGridResult> {
    if config.replicates == 0 {
        return Ok(ErrorGridResult::default());
    }
    let mut cells: Vec<(f64, Recombination, ModelKind)> = config
        .d_values
        .iter()
        .map(|&d| (d, Recombination::Infinite, ModelKind::Admixture))
        .collect();
    for &r in &config.r_values {
        for &d in &config.d_values {
            cells.push((d, Recombination::new(r)?, ModelKind::Linkage));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.replicates).map(move |i| (c, i)))
        .collect();
    let fit = inner_fit_options(&config.fit);
    let records = jobs
        .par_iter()
        .map(|&(cell, replicate)| {
            let (d, r, model) = cells[cell];
            let sim = match model {
                ModelKind::Admixture => {
                    let stream = STREAM_NULL + ((cell as u64) << 32) + replicate as u64;
                    simulate_admixture(&base_config(&config.q, config.markers, d, config.seed, stream))?
                }
                ModelKind::Linkage => {
                    let stream = STREAM_ALT + replicate as u64;
                    let mut c = base_config(&config.q, config.markers, d, config.seed, stream);
                    c.r = r;
                    simulate_linkage(&c)?
                }
            };
            let fit = FitOptions {
                seed: config.seed.wrapping_add(replicate as u64),
                ..fit.clone()
            };
            let t = run_test(&sim.data, &sim.freqs, &sim.map, config.alpha, &fit)?;
            Ok(ReplicateRecord {
                cell,
                replicate,
                lambda: t.lambda,
                p_value: t.p_value,
                reject: t.reject,
                r_hat: t.alt_fit.theta_hat.r,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, &(d, r, generating))| {
            let rejections = records.iter().filter(|x| x.cell == c && x.reject).count();
            let n = config.replicates;
            let rate = rejections as f64 / n as f64;
            let error_rate = match generating {
                ModelKind::Admixture => rate,
                ModelKind::Linkage => 1.0 - rate,
            };
            ErrorGridRow {
                d,
                r,
                generating,
                replicates: n,
                rejections,
                error_rate,
                mc_stderr: (error_rate * (1.0 - error_rate) / n as f64).sqrt(),
            }
        })
        .collect();
    Ok(ErrorGridResult { rows, records })
}

pub fn write_error_grid_csv<W: Write>(result: &ErrorGridResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generating_model", "d", "r", "replicates", "rejections", "error_type", "error_rate", "mc_stderr"])?;
    for row in &result.rows {
        w.write_record([
            row.generating.to_string(),
            row.d.to_string(),
            row.r.to_string(),
            row.replicates.to_string(),
            row.rejections.to_string(),
            match row.generating {
                ModelKind::Admixture => "type1".to_string(),
                ModelKind::Linkage => "type2".to_string(),
            },
            row.error_rate.to_string(),
            row.mc_stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Kolmogorov–Smirnov distance between a sample and a CDF that may jump.
///
/// `cdf_left(x)` is the left limit `F(x−)`.
pub fn ks_statistic<F, G>(samples: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d.max((upto - cdf(x)).abs()).max((below - cdf_left(x)).abs());
        i = j;
    }
    d
}

/// Asymptotic Kolmogorov p-value `P(√n D > t)`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let t = d * (n as f64).sqrt();
    if t < 1e-3 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * t * t).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullCalibrationConfig {
    pub markers: usize,
    pub replicates: usize,
    pub d: f64,
    pub q: Vec<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for NullCalibrationConfig {
    fn default() -> Self {
        Self {
            markers: 200,
            replicates: 500,
            d: 1.0,
            q: vec![0.5, 0.5],
            alpha: 0.05,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullCalibration {
    pub lambdas: Vec<f64>,
    pub rejection_rate: f64,
    pub ks_chi2: f64,
    pub ks_chi2_p_value: f64,
    pub ks_mixture: f64,
    pub ks_mixture_p_value: f64,
    /// `(probability, empirical quantile, χ²(1) quantile, ½δ₀ + ½χ²(1) quantile)`.
    pub quantiles: Vec<(f64, f64, f64, f64)>,
}

fn mixture_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        0.5 + 0.5 * chi2_cdf(x).unwrap_or(0.0)
    }
}

fn mixture_cdf_left(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        mixture_cdf(x)
    }
}

fn chi2_cdf_or_zero(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        chi2_cdf(x).unwrap_or(0.0)
    }
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

/// Distribution of `Λ` on Admixture-generated data.
pub fn null_calibration(config: &NullCalibrationConfig) -> Result<NullCalibration> {
    let fit = inner_fit_options(&config.fit);
    let lambdas = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            let c = base_config(&config.q, config.markers, config.d, config.seed, STREAM_CALIBRATION + i as u64);
            let sim = simulate_admixture(&c)?;
            let fit = FitOptions {
                seed: config.seed.wrapping_add(i as u64),
                ..fit.clone()
            };
            Ok(run_test(&sim.data, &sim.freqs, &sim.map, config.alpha, &fit)?.lambda)
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = chi2_quantile(1.0 - config.alpha)?;
    let n = lambdas.len();
    let rejection_rate = lambdas.iter().filter(|l| **l > threshold).count() as f64 / n.max(1) as f64;
    let ks_chi2 = ks_statistic(&lambdas, chi2_cdf_or_zero, chi2_cdf_or_zero);
    let ks_mixture = ks_statistic(&lambdas, mixture_cdf, mixture_cdf_left);
    let mut sorted = lambdas.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = if n == 0 {
        Vec::new()
    } else {
        [0.5, 0.75, 0.9, 0.95, 0.99]
            .iter()
            .map(|&p| {
                let mix = if p <= 0.5 { 0.0 } else { chi2_quantile(2.0 * p - 1.0)? };
                Ok((p, empirical_quantile(&sorted, p), chi2_quantile(p)?, mix))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(NullCalibration {
        rejection_rate,
        ks_chi2,
        ks_chi2_p_value: ks_p_value(ks_chi2, n),
        ks_mixture,
        ks_mixture_p_value: ks_p_value(ks_mixture, n),
        quantiles,
        lambdas,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub q0: Vec<f64>,
    pub r0: f64,
    pub d: f64,
    pub markers: usize,
    pub replicates: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            q0: vec![0.6, 0.4],
            r0: 1.0,
            d: 1.0,
            markers: 2000,
            replicates: 200,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    /// Parameter names `q1..qK, r`.
    pub labels: Vec<String>,
    /// Fraction of interior replicates whose 95% interval contains the truth.
    pub coverage: Vec<f64>,
    /// Mean interval width `2 · 1.96 · se` over interior replicates.
    pub mean_width: Vec<f64>,
    pub replicates: usize,
    pub boundary_replicates: usize,
    pub theta0: Vec<f64>,
}

/// Fraction of intervals `estimate ± 1.96 · se` containing `truth`.
pub fn interval_coverage(estimates: &[f64], std_errors: &[f64], truth: f64) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    let z = crate::stats::norm_quantile(0.975).unwrap_or(1.959_963_984_540_054);
    let hits = estimates
        .iter()
        .zip(std_errors)
        .filter(|(e, s)| (*e - truth).abs() <= z * **s)
        .count();
    hits as f64 / estimates.len() as f64
}

pub fn coverage_experiment(config: &CoverageConfig) -> Result<CoverageResult> {
    let fit_opts = inner_fit_options(&config.fit);
    let k = config.q0.len();
    let per_rep = (0..config.replicates)
        .into_par_iter()
        .map(|i| {
            let mut c = base_config(&config.q0, config.markers, config.d, config.seed, STREAM_COVERAGE + i as u64);
            c.r = Recombination::new(config.r0)?;
            let sim = simulate_linkage(&c)?;
            let fo = FitOptions {
                seed: config.seed.wrapping_add(i as u64),
                ..fit_opts.clone()
            };
            let fit = fit_linkage(&sim.data, &sim.freqs, &sim.map, &fo)?;
            if fit.is_boundary() {
                return Ok(None);
            }
            let cov = covariance_mle(&fit, &sim.data, &sim.freqs, &sim.map, fo.emission)?;
            let mut est = fit.theta_hat.q.clone();
            est.push(fit.theta_hat.r.value());
            Ok(Some((est, cov.standard_errors())))
        })
        .collect::<Result<Vec<_>>>()?;
    let interior: Vec<(Vec<f64>, Vec<f64>)> = per_rep.iter().flatten().cloned().collect();
    let mut theta0 = config.q0.clone();
    theta0.push(config.r0);
    let mut coverage = Vec::with_capacity(k + 1);
    let mut mean_width = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let est: Vec<f64> = interior.iter().map(|(e, _)| e[j]).collect();
        let se: Vec<f64> = interior.iter().map(|(_, s)| s[j]).collect();
        coverage.push(interval_coverage(&est, &se, theta0[j]));
        let z = 2.0 * 1.959_963_984_540_054;
        mean_width.push(if se.is_empty() { f64::NAN } else { z * se.iter().sum::<f64>() / se.len() as f64 });
    }
    let mut labels: Vec<String> = (1..=k).map(|i| format!("q{i}")).collect();
    labels.push("r".into());
    Ok(CoverageResult {
        labels,
        coverage,
        mean_width,
        replicates: config.replicates,
        boundary_replicates: per_rep.iter().filter(|x| x.is_none()).count(),
        theta0,
    })
}

pub fn write_coverage_csv<W: Write>(result: &CoverageResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "true_value", "coverage", "mean_width", "replicates", "boundary_replicates"])?;
    for j in 0..result.labels.len() {
        w.write_record([
            result.labels[j].clone(),
            result.theta0[j].to_string(),
            result.coverage[j].to_string(),
            result.mean_width[j].to_string(),
            result.replicates.to_string(),
            result.boundary_replicates.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyConfig {
    pub q0: Vec<f64>,
    /// `f64::INFINITY` generates Admixture data.
    pub r0: f64,
    pub d: f64,
    pub schedule: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            q0: vec![0.6, 0.4],
            r0: 1.0,
            d: 1.0,
            schedule: vec![250, 1000, 4000],
            replicates: 50,
            seed: 0,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub markers: usize,
    pub replicates: usize,
    pub median_q1_error: f64,
    /// Median `|r̂ − r⁰|`; infinite estimates count as infinite error (`NaN` when `r⁰ = ∞`).
    pub median_r_error: f64,
    /// Fraction of replicates with `r̂ = ∞` or `r̂ > 100`.
    pub fraction_r_large: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn consistency_experiment(config: &ConsistencyConfig) -> Result<Vec<ConsistencyRow>> {
    let fit_opts = inner_fit_options(&config.fit);
    let r0 = Recombination::new(config.r0)?;
    config
        .schedule
        .iter()
        .enumerate()
        .map(|(level, &markers)| {
            let fits = (0..config.replicates)
                .into_par_iter()
                .map(|i| {
                    let stream = STREAM_CONSISTENCY + ((level as u64) << 32) + i as u64;
                    let mut c = base_config(&config.q0, markers, config.d, config.seed, stream);
                    c.r = r0;
                    let sim = simulate_linkage(&c)?;
                    let fo = FitOptions {
                        seed: config.seed.wrapping_add(i as u64),
                        ..fit_opts.clone()
                    };
                    let fit = fit_linkage(&sim.data, &sim.freqs, &sim.map, &fo)?;
                    Ok((fit.theta_hat.q[0], fit.theta_hat.r.value()))
                })
                .collect::<Result<Vec<_>>>()?;
            let q_err = fits.iter().map(|(q, _)| (q - config.q0[0]).abs()).collect();
            let median_r_error = if r0.is_infinite() {
                f64::NAN
            } else {
                median(fits.iter().map(|(_, r)| (r - config.r0).abs()).collect())
            };
            let large = fits.iter().filter(|(_, r)| *r > 100.0).count();
            Ok(ConsistencyRow {
                markers,
                replicates: config.replicates,
                median_q1_error: median(q_err),
                median_r_error,
                fraction_r_large: large as f64 / config.replicates.max(1) as f64,
            })
        })
        .collect()
}

pub fn write_consistency_csv<W: Write>(rows: &[ConsistencyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["markers", "replicates", "median_abs_q1_error", "median_abs_r_error", "fraction_r_large"])?;
    for row in rows {
        w.write_record([
            row.markers.to_string(),
            row.replicates.to_string(),
            row.median_q1_error.to_string(),
            row.median_r_error.to_string(),
            row.fraction_r_large.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
