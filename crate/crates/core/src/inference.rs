//! Maximum-likelihood estimation of `(q, r)` and its asymptotic covariance.
//!
//! Optimization runs in unconstrained coordinates (see [`crate::likelihood::coords`]).
//! The Linkage fit always also scores the Admixture optimum at `r = ∞`, so the
//! alternative maximum can never fall below the null maximum.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{coords, forward_unchecked, numerical_gradient, numerical_hessian};
use crate::model::{
    check_layout, AlleleFrequencySet, EmissionMode, GeneticMap, GenotypeData, ParameterPoint,
    Recombination,
};
use crate::optim::{
    maximize_projected, minimize_bfgs, project_simplex, ProjectedGradientOptions, QuasiNewtonOptions,
};

/// `r` values paired with uniform `q` in the deterministic starts.
pub const R_START_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];

/// `q̂` components closer than this to 0 or 1 count as a boundary estimate.
pub const BOUNDARY_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    /// BFGS in log-ratio / logit coordinates.
    #[default]
    QuasiNewton,
    /// Projected gradient ascent directly on the simplex and `s = e^{-r} ∈ [0, 1]`.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub emission: EmissionMode,
    pub optimizer: OptimizerKind,
    pub quasi_newton: QuasiNewtonOptions,
    pub projected: ProjectedGradientOptions,
    /// Run independent starts on the rayon pool.
    pub parallel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            seed: 0,
            emission: EmissionMode::Standard,
            optimizer: OptimizerKind::QuasiNewton,
            quasi_newton: QuasiNewtonOptions::default(),
            projected: ProjectedGradientOptions::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Admixture,
    Linkage,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Admixture => "admixture",
            ModelKind::Linkage => "linkage",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub theta_hat: ParameterPoint,
    pub ell_hat: f64,
    pub model: ModelKind,
    pub n_starts: usize,
    pub converged: bool,
    /// Final `ℓ` of every start; for Linkage fits the last entry is the `r = ∞` candidate.
    pub start_ells: Vec<f64>,
    pub m_total: usize,
    pub warnings: Vec<String>,
}

impl ModelFit {
    pub fn log_likelihood(&self) -> f64 {
        self.ell_hat * self.m_total as f64
    }

    /// Whether `θ̂` lies on (or numerically at) the boundary of the parameter space.
    pub fn is_boundary(&self) -> bool {
        (self.model == ModelKind::Linkage && self.theta_hat.r.is_infinite())
            || self
                .theta_hat
                .q
                .iter()
                .any(|&v| v <= BOUNDARY_EPS || v >= 1.0 - BOUNDARY_EPS)
    }
}

fn check_fit_inputs(data: &GenotypeData, freqs: &AlleleFrequencySet, map: Option<&GeneticMap>) -> Result<()> {
    check_layout(data, freqs, map)?;
    if freqs.k() < 2 {
        return Err(Error::InvalidInput("at least two populations are required".into()));
    }
    if data.n_observed() == 0 {
        return Err(Error::InvalidInput("all markers are missing".into()));
    }
    Ok(())
}

fn dirichlet_ones<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1).max(1e-12)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn uniform_q(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

fn admixture_starts(k: usize, opts: &FitOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![uniform_q(k)];
    while starts.len() < opts.n_starts.max(1) {
        starts.push(dirichlet_ones(&mut rng, k));
    }
    starts
}

fn linkage_starts(k: usize, opts: &FitOptions) -> Vec<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let n = opts.n_starts.max(1);
    let mut starts: Vec<(Vec<f64>, f64)> = R_START_GRID
        .iter()
        .take(n)
        .map(|&r| (uniform_q(k), r))
        .collect();
    while starts.len() < n {
        let q = dirichlet_ones(&mut rng, k);
        let r = 10f64.powf(rng.random_range(-1.0..2.0));
        starts.push((q, r));
    }
    starts
}

fn run_starts<T, F>(starts: Vec<T>, parallel: bool, f: F) -> Result<Vec<(Vec<f64>, f64, bool)>>
where
    T: Send + Sync,
    F: Fn(usize, &T) -> Result<(Vec<f64>, f64, bool)> + Send + Sync,
{
    if parallel {
        starts.par_iter().enumerate().map(|(i, s)| f(i, s)).collect()
    } else {
        starts.iter().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}

/// Index of the largest value; ties resolve to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalized log-likelihood of the Admixture Model at free coordinates `y`.
fn admixture_ell(data: &GenotypeData, freqs: &AlleleFrequencySet, mode: EmissionMode, y: &[f64]) -> f64 {
    let q = coords::free_to_q(y);
    forward_unchecked(data, freqs, None, &q, Recombination::Infinite, mode).ell
}

fn linkage_ell(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    mode: EmissionMode,
    x: &[f64],
) -> f64 {
    let (q, r) = coords::free_to_theta(x, true);
    forward_unchecked(data, freqs, Some(map), &q, r, mode).ell
}

pub fn fit_admixture(data: &GenotypeData, freqs: &AlleleFrequencySet, opts: &FitOptions) -> Result<ModelFit> {
    check_fit_inputs(data, freqs, None)?;
    let k = freqs.k();
    let starts = admixture_starts(k, opts);
    let initial: Vec<f64> = starts
        .iter()
        .map(|q| forward_unchecked(data, freqs, None, q, Recombination::Infinite, opts.emission).ell)
        .collect();

    let results = match opts.optimizer {
        OptimizerKind::QuasiNewton => {
            let objective = |y: &[f64]| -admixture_ell(data, freqs, opts.emission, y);
            run_starts(starts.clone(), opts.parallel, |i, q0| {
                let res = minimize_bfgs(&objective, &coords::q_to_free(q0), &opts.quasi_newton)
                    .map_err(|e| Error::Numeric(format!("admixture start {i}: {e}")))?;
                Ok((coords::free_to_q(&res.x), -res.value, res.converged))
            })?
        }
        OptimizerKind::ProjectedGradient => {
            let ell = |q: &[f64]| {
                forward_unchecked(data, freqs, None, q, Recombination::Infinite, opts.emission).ell
            };
            let grad = |q: &[f64]| feasible_gradient(&ell, q, k);
            run_starts(starts.clone(), opts.parallel, |i, q0| {
                let res = maximize_projected(&ell, &grad, &project_simplex, q0, &opts.projected)
                    .map_err(|e| Error::Numeric(format!("admixture start {i}: {e}")))?;
                Ok((res.x.clone(), res.value, res.converged))
            })?
        }
    };

    let start_ells: Vec<f64> = results.iter().map(|r| r.1).collect();
    let best = argmax(&start_ells);
    let (q_hat, ell_hat, converged) = results[best].clone();
    let mut warnings = Vec::new();
    if starts.len() > 1 {
        let spread = initial.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
            - initial.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        if spread < 1e-12 {
            warnings.push("flat likelihood: log-likelihood does not depend on q".to_string());
        }
    }
    Ok(ModelFit {
        theta_hat: ParameterPoint {
            q: q_hat,
            r: Recombination::Infinite,
        },
        ell_hat,
        model: ModelKind::Admixture,
        n_starts: starts.len(),
        converged,
        start_ells,
        m_total: data.m_total(),
        warnings,
    })
}

pub fn fit_linkage(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    opts: &FitOptions,
) -> Result<ModelFit> {
    let null = fit_admixture(data, freqs, opts)?;
    fit_linkage_with_null(data, freqs, map, &null, opts)
}

/// Linkage fit reusing an Admixture fit of the same data as the `r = ∞` candidate.
pub fn fit_linkage_with_null(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    null: &ModelFit,
    opts: &FitOptions,
) -> Result<ModelFit> {
    check_fit_inputs(data, freqs, Some(map))?;
    if null.model != ModelKind::Admixture || null.m_total != data.m_total() {
        return Err(Error::InvalidComparison(
            "null fit is not an Admixture fit of the same data".into(),
        ));
    }
    let k = freqs.k();
    let starts = linkage_starts(k, opts);

    let mut results = match opts.optimizer {
        OptimizerKind::QuasiNewton => {
            let objective = |x: &[f64]| -linkage_ell(data, freqs, map, opts.emission, x);
            run_starts(starts.clone(), opts.parallel, |i, (q0, r0)| {
                let mut x0 = coords::q_to_free(q0);
                x0.push(coords::r_to_free(Recombination::Finite(*r0)));
                let res = minimize_bfgs(&objective, &x0, &opts.quasi_newton)
                    .map_err(|e| Error::Numeric(format!("linkage start {i}: {e}")))?;
                Ok((res.x, -res.value, res.converged))
            })?
            .into_iter()
            .map(|(x, v, c)| {
                let (q, r) = coords::free_to_theta(&x, true);
                (ParameterPoint { q, r }, v, c)
            })
            .collect::<Vec<_>>()
        }
        OptimizerKind::ProjectedGradient => {
            let ell = |x: &[f64]| {
                let (q, r) = natural_to_theta(x);
                forward_unchecked(data, freqs, Some(map), &q, r, opts.emission).ell
            };
            let grad = |x: &[f64]| feasible_gradient(&ell, x, k);
            let project = |x: &mut [f64]| {
                project_simplex(&mut x[..k]);
                x[k] = x[k].clamp(0.0, 1.0);
            };
            run_starts(starts.clone(), opts.parallel, |i, (q0, r0)| {
                let mut x0 = q0.clone();
                x0.push((-r0).exp());
                let res = maximize_projected(&ell, &grad, &project, &x0, &opts.projected)
                    .map_err(|e| Error::Numeric(format!("linkage start {i}: {e}")))?;
                Ok((res.x, res.value, res.converged))
            })?
            .into_iter()
            .map(|(x, v, c)| {
                let (q, r) = natural_to_theta(&x);
                (ParameterPoint { q, r }, v, c)
            })
            .collect()
        }
    };

    let boundary_ell = forward_unchecked(
        data,
        freqs,
        Some(map),
        &null.theta_hat.q,
        Recombination::Infinite,
        opts.emission,
    )
    .ell;
    results.push((
        ParameterPoint {
            q: null.theta_hat.q.clone(),
            r: Recombination::Infinite,
        },
        boundary_ell,
        null.converged,
    ));

    let start_ells: Vec<f64> = results.iter().map(|r| r.1).collect();
    // the boundary candidate wins ties
    let interior_best = argmax(&start_ells[..start_ells.len() - 1]);
    let best = if boundary_ell >= start_ells[interior_best] {
        start_ells.len() - 1
    } else {
        interior_best
    };
    let (theta_hat, ell_hat, converged) = results.swap_remove(best);
    Ok(ModelFit {
        theta_hat,
        ell_hat,
        model: ModelKind::Linkage,
        n_starts: starts.len(),
        converged,
        start_ells,
        m_total: data.m_total(),
        warnings: null.warnings.clone(),
    })
}

/// `(q_1..q_K, s)` with `s = e^{-r}` to `(q, r)`.
fn natural_to_theta(x: &[f64]) -> (Vec<f64>, Recombination) {
    let k = x.len() - 1;
    let s = x[k];
    let r = if s <= 0.0 {
        Recombination::Infinite
    } else {
        Recombination::Finite((-s.ln()).max(0.0))
    };
    (x[..k].to_vec(), r)
}

/// Finite-difference gradient that only probes inside `q ≥ 0` and `s ∈ [0, 1]`.
///
/// Coordinates `0..k` are ancestry proportions; an optional coordinate `k` is `s`.
fn feasible_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], k: usize) -> Result<Vec<f64>> {
    let h = 1e-6;
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let lo = 0.0;
        let hi = if i < k { f64::INFINITY } else { 1.0 };
        let (a, b) = (
            if x[i] - h >= lo { x[i] - h } else { x[i] },
            if x[i] + h <= hi { x[i] + h } else { x[i] },
        );
        probe[i] = b;
        let up = f(&probe);
        probe[i] = a;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numeric(format!("objective is not finite near {x:?}")));
        }
        g.push((up - down) / (b - a));
    }
    Ok(g)
}

/// Asymptotic covariance of the MLE from the observed information.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    /// Covariance of the free coordinates `(y_1..y_{K-1}[, t])`.
    pub free: DMatrix<f64>,
    /// Covariance of `(q_1..q_K[, r])`.
    pub natural: DMatrix<f64>,
    /// Row/column names of [`CovarianceEstimate::natural`].
    pub labels: Vec<String>,
    pub m_total: usize,
    pub boundary: bool,
    /// False for boundary estimates or a singular information matrix.
    pub reliable: bool,
    pub warnings: Vec<String>,
}

impl CovarianceEstimate {
    /// Standard errors of the natural coordinates.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.natural.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Inverse of the observed information `J = -∇²ℓ(x)`, divided by `m_total`.
///
/// Eigenvalues of `J` below `1e-10 · max(1, λ_max)` are dropped (pseudo-inverse), so the
/// result is always positive semidefinite; the flag reports whether that happened.
pub fn covariance_from_objective<F: Fn(&[f64]) -> f64>(
    ell: &F,
    x: &[f64],
    m_total: usize,
) -> Result<(DMatrix<f64>, bool)> {
    let hessian = numerical_hessian(ell, x)?;
    let info = -hessian;
    let eig = SymmetricEigen::new(info);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(*b));
    let tol = 1e-10 * lmax.max(1.0);
    let singular = eig.eigenvalues.iter().any(|&l| l <= tol);
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| if l > tol { 1.0 / l } else { 0.0 }));
    let inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let cov = (&inv + inv.transpose()) * (0.5 / m_total as f64);
    Ok((cov, singular))
}

pub fn covariance_mle(
    fit: &ModelFit,
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    mode: EmissionMode,
) -> Result<CovarianceEstimate> {
    check_fit_inputs(data, freqs, Some(map))?;
    if fit.m_total != data.m_total() {
        return Err(Error::InvalidComparison("fit and data differ in marker count".into()));
    }
    let k = fit.theta_hat.k();
    let mut warnings = Vec::new();
    let boundary = fit.is_boundary();
    if boundary {
        warnings.push("estimate on the parameter-space boundary; covariance is unreliable".into());
    }
    if !fit.converged {
        warnings.push("fit did not converge".into());
    }
    // keep log-ratios finite for vertex estimates
    let q_eval: Vec<f64> = {
        let mut q: Vec<f64> = fit.theta_hat.q.iter().map(|v| v.max(1e-12)).collect();
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= s);
        q
    };
    let with_r = fit.model == ModelKind::Linkage && !fit.theta_hat.r.is_infinite();
    let mut x = coords::q_to_free(&q_eval);
    let (free, singular) = if with_r {
        x.push(coords::r_to_free(fit.theta_hat.r));
        covariance_from_objective(&|z: &[f64]| linkage_ell(data, freqs, map, mode, z), &x, fit.m_total)?
    } else {
        covariance_from_objective(&|z: &[f64]| admixture_ell(data, freqs, mode, z), &x, fit.m_total)?
    };
    if singular {
        warnings.push("observed information is singular; pseudo-inverse used".into());
    }
    let jac = coords::jacobian(&x, k, with_r);
    let mut natural = &jac * &free * jac.transpose();
    let mut labels: Vec<String> = (1..=k).map(|i| format!("q{i}")).collect();
    if fit.model == ModelKind::Linkage {
        labels.push("r".into());
        if !with_r {
            // r̂ = ∞: no curvature information about r
            let mut grown = DMatrix::zeros(k + 1, k + 1);
            grown.view_mut((0, 0), (k, k)).copy_from(&natural);
            grown[(k, k)] = f64::INFINITY;
            natural = grown;
        }
    }
    let natural = if natural.iter().all(|v| v.is_finite()) {
        (&natural + natural.transpose()) * 0.5
    } else {
        natural
    };
    Ok(CovarianceEstimate {
        free,
        natural,
        labels,
        m_total: fit.m_total,
        boundary,
        reliable: !boundary && !singular,
        warnings,
    })
}

/// Joint fit of several individuals with individual `q_i` and one shared `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFit {
    pub q_hats: Vec<Vec<f64>>,
    pub r_hat: Recombination,
    /// Joint log-likelihood divided by the summed marker count.
    pub ell: f64,
    pub log_likelihood: f64,
    pub n: usize,
    pub m_total: usize,
    pub converged: bool,
}

impl PopulationFit {
    /// `N (K - 1) + 1` free parameters.
    pub fn n_parameters(&self) -> usize {
        let k = self.q_hats.first().map_or(0, Vec::len);
        self.n * (k - 1) + 1
    }
}

struct Population<'a> {
    individuals: &'a [GenotypeData],
    freqs: &'a AlleleFrequencySet,
    map: &'a GeneticMap,
    opts: &'a FitOptions,
}

impl Population<'_> {
    fn log_lik(&self, i: usize, q: &[f64], r: Recombination) -> f64 {
        forward_unchecked(&self.individuals[i], self.freqs, Some(self.map), q, r, self.opts.emission)
            .log_likelihood()
    }

    fn total(&self, qs: &[Vec<f64>], r: Recombination) -> f64 {
        (0..qs.len()).map(|i| self.log_lik(i, &qs[i], r)).sum()
    }

    /// Optimal `q_i` for every individual at fixed `r`, started from `qs`.
    fn update_q(&self, qs: &[Vec<f64>], r: Recombination) -> Result<Vec<Vec<f64>>> {
        let one = |i: usize| -> Result<Vec<f64>> {
            let m = self.individuals[i].m_total() as f64;
            let objective = |y: &[f64]| -self.log_lik(i, &coords::free_to_q(y), r) / m;
            let res = minimize_bfgs(&objective, &coords::q_to_free(&qs[i]), &self.opts.quasi_newton)
                .map_err(|e| Error::Numeric(format!("individual {i}: {e}")))?;
            Ok(coords::free_to_q(&res.x))
        };
        if self.opts.parallel {
            (0..qs.len()).into_par_iter().map(one).collect()
        } else {
            (0..qs.len()).map(one).collect()
        }
    }

    /// Golden-section search for `log r` at fixed `q`, seeded by a coarse scan.
    fn update_r(&self, qs: &[Vec<f64>]) -> (f64, f64) {
        let f = |u: f64| self.total(qs, Recombination::Finite(u.exp()));
        let (lo, hi, n) = ((1e-4f64).ln(), (1e4f64).ln(), 33);
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&u| f(u)).collect();
        let j = argmax(&values);
        let (mut a, mut b) = (grid[j.saturating_sub(1)], grid[(j + 1).min(n - 1)]);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-9 {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = f(d);
            }
        }
        let u = (a + b) / 2.0;
        let fu = f(u);
        if values[j] > fu {
            (grid[j], values[j])
        } else {
            (u, fu)
        }
    }
}

/// Largest joint problem (in free parameters) that gets a final joint quasi-Newton polish.
const JOINT_POLISH_MAX_PARAMS: usize = 64;

pub fn fit_population(
    individuals: &[GenotypeData],
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    opts: &FitOptions,
) -> Result<PopulationFit> {
    if individuals.is_empty() {
        return Err(Error::InvalidInput("no individuals".into()));
    }
    let nulls = individuals
        .iter()
        .map(|d| fit_admixture(d, freqs, opts))
        .collect::<Result<Vec<_>>>()?;
    fit_population_with_nulls(individuals, freqs, map, &nulls, opts)
}

pub fn fit_population_with_nulls(
    individuals: &[GenotypeData],
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    nulls: &[ModelFit],
    opts: &FitOptions,
) -> Result<PopulationFit> {
    if individuals.is_empty() || nulls.len() != individuals.len() {
        return Err(Error::InvalidInput("need one admixture fit per individual".into()));
    }
    for d in individuals {
        check_fit_inputs(d, freqs, Some(map))?;
    }
    let pop = Population {
        individuals,
        freqs,
        map,
        opts,
    };
    let m_total: usize = individuals.iter().map(GenotypeData::m_total).sum();
    let n = individuals.len();
    let k = freqs.k();

    let q_null: Vec<Vec<f64>> = nulls.iter().map(|f| f.theta_hat.q.clone()).collect();
    let null_total = pop.total(&q_null, Recombination::Infinite);

    // initial shared r from the start grid with q refitted at each value
    let mut best: Option<(Vec<Vec<f64>>, f64, f64)> = None;
    for &r in &R_START_GRID {
        let qs = pop.update_q(&q_null, Recombination::Finite(r))?;
        let v = pop.total(&qs, Recombination::Finite(r));
        if best.as_ref().is_none_or(|b| v > b.2) {
            best = Some((qs, r.ln(), v));
        }
    }
    let (mut qs, mut u, mut value) = best.expect("grid is not empty");
    let mut converged = false;
    for _ in 0..200 {
        let (u_new, _) = pop.update_r(&qs);
        let r = Recombination::Finite(u_new.exp());
        let qs_new = pop.update_q(&qs, r)?;
        let v = pop.total(&qs_new, r);
        let improvement = (v - value) / m_total as f64;
        if v >= value {
            qs = qs_new;
            u = u_new;
            value = v;
        }
        if improvement < 1e-9 {
            converged = true;
            break;
        }
    }

    if n * (k - 1) + 1 <= JOINT_POLISH_MAX_PARAMS {
        let unpack = |x: &[f64]| -> (Vec<Vec<f64>>, Recombination) {
            let qs = x[..n * (k - 1)].chunks(k - 1).map(coords::free_to_q).collect();
            (qs, coords::free_to_r(x[n * (k - 1)]))
        };
        let objective = |x: &[f64]| {
            let (qs, r) = unpack(x);
            -pop.total(&qs, r) / m_total as f64
        };
        let mut x0: Vec<f64> = qs.iter().flat_map(|q| coords::q_to_free(q)).collect();
        x0.push(coords::r_to_free(Recombination::Finite(u.exp())));
        let res = minimize_bfgs(&objective, &x0, &opts.quasi_newton)?;
        let (qs_new, r_new) = unpack(&res.x);
        let v = pop.total(&qs_new, r_new);
        if v > value {
            qs = qs_new;
            u = r_new.value().ln();
            value = v;
        }
        converged |= res.converged;
    }

    let (q_hats, r_hat, log_likelihood) = if null_total >= value {
        (q_null, Recombination::Infinite, null_total)
    } else {
        (qs, Recombination::Finite(u.exp()), value)
    };
    Ok(PopulationFit {
        q_hats,
        r_hat,
        ell: log_likelihood / m_total as f64,
        log_likelihood,
        n,
        m_total,
        converged,
    })
}

/// Gradient norm of the Linkage log-likelihood in free coordinates at `theta`.
pub fn linkage_gradient_norm(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    theta: &ParameterPoint,
    mode: EmissionMode,
) -> Result<f64> {
    let mut x = coords::q_to_free(&theta.q);
    x.push(coords::r_to_free(theta.r));
    let g = numerical_gradient(&|z: &[f64]| linkage_ell(data, freqs, map, mode, z), &x)?;
    Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt())
}
