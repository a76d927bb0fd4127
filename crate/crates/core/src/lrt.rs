//! Likelihood-ratio test of `H0: r = ∞` (Admixture) against `H1: r < ∞` (Linkage).
//!
//! `Λ = 2 (log L̂_alt − log L̂_null)`, compared with the `1 − α` quantile of χ²(1).
//! Fitted `ℓ` values are normalized by the marker count, so the statistic is
//! assembled as `2 · M_total · (ℓ̂_alt − ℓ̂_null)`.

use crate::error::{Error, Result};
use crate::inference::{
    fit_admixture, fit_linkage_with_null, fit_population_with_nulls, FitOptions, ModelFit,
    PopulationFit,
};
use crate::model::{AlleleFrequencySet, GeneticMap, GenotypeData};
use crate::stats::{chi2_quantile, chi2_sf};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Negative statistics down to this value are optimizer noise and clamp to 0.
pub const LAMBDA_NOISE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub lambda: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub null_fit: ModelFit,
    pub alt_fit: ModelFit,
    pub m_total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTestResult {
    pub lambda: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub null_fits: Vec<ModelFit>,
    pub alt_fit: PopulationFit,
    pub m_total: usize,
}

fn clamp_statistic(raw: f64) -> Result<f64> {
    if raw >= 0.0 {
        Ok(raw)
    } else if raw >= -LAMBDA_NOISE {
        Ok(0.0)
    } else {
        Err(Error::Numeric(format!(
            "alternative maximum below null maximum (Λ = {raw}); optimizer failure"
        )))
    }
}

pub fn lrt_statistic(null_fit: &ModelFit, alt_fit: &ModelFit, m_total: usize) -> Result<f64> {
    if null_fit.m_total != m_total || alt_fit.m_total != m_total {
        return Err(Error::InvalidComparison(format!(
            "fits cover {} and {} markers, expected {m_total}",
            null_fit.m_total, alt_fit.m_total
        )));
    }
    if alt_fit.theta_hat.r.is_infinite() {
        return Ok(0.0);
    }
    clamp_statistic(2.0 * m_total as f64 * (alt_fit.ell_hat - null_fit.ell_hat))
}

/// `(p-value, reject)` for a statistic at level `alpha`.
pub fn decide(lambda: f64, alpha: f64) -> Result<(f64, bool)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("significance level must be in (0, 1), got {alpha}")));
    }
    Ok((chi2_sf(lambda)?, lambda > chi2_quantile(1.0 - alpha)?))
}

pub fn run_test(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    alpha: f64,
    opts: &FitOptions,
) -> Result<TestResult> {
    decide(0.0, alpha)?;
    let null_fit = fit_admixture(data, freqs, opts)?;
    let alt_fit = fit_linkage_with_null(data, freqs, map, &null_fit, opts)?;
    let m_total = data.m_total();
    let lambda = lrt_statistic(&null_fit, &alt_fit, m_total)?;
    let (p_value, reject) = decide(lambda, alpha)?;
    Ok(TestResult {
        lambda,
        p_value,
        alpha,
        reject,
        null_fit,
        alt_fit,
        m_total,
    })
}

/// Test with individual `q_i` and one shared `r`; one degree of freedom.
pub fn run_population_test(
    individuals: &[GenotypeData],
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    alpha: f64,
    opts: &FitOptions,
) -> Result<PopulationTestResult> {
    decide(0.0, alpha)?;
    if individuals.is_empty() {
        return Err(Error::InvalidInput("no individuals".into()));
    }
    let null_fits = individuals
        .iter()
        .map(|d| fit_admixture(d, freqs, opts))
        .collect::<Result<Vec<_>>>()?;
    let alt_fit = fit_population_with_nulls(individuals, freqs, map, &null_fits, opts)?;
    let null_total: f64 = null_fits.iter().map(ModelFit::log_likelihood).sum();
    let lambda = if alt_fit.r_hat.is_infinite() {
        0.0
    } else {
        clamp_statistic(2.0 * (alt_fit.log_likelihood - null_total))?
    };
    let (p_value, reject) = decide(lambda, alpha)?;
    Ok(PopulationTestResult {
        lambda,
        p_value,
        alpha,
        reject,
        m_total: alt_fit.m_total,
        null_fits,
        alt_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::ModelKind;
    use crate::model::{ParameterPoint, Recombination};

    fn fit(ell: f64, m: usize, model: ModelKind, r: Recombination) -> ModelFit {
        ModelFit {
            theta_hat: ParameterPoint::new(vec![0.5, 0.5], r).unwrap(),
            ell_hat: ell,
            model,
            n_starts: 1,
            converged: true,
            start_ells: vec![ell],
            m_total: m,
            warnings: vec![],
        }
    }

    #[test]
    fn statistic_arithmetic() {
        let null = fit(-0.61, 100, ModelKind::Admixture, Recombination::Infinite);
        let alt = fit(-0.60, 100, ModelKind::Linkage, Recombination::Finite(1.0));
        assert!((lrt_statistic(&null, &alt, 100).unwrap() - 2.0).abs() < 1e-9);
        let same = fit(-0.61, 100, ModelKind::Linkage, Recombination::Finite(1.0));
        assert_eq!(lrt_statistic(&null, &same, 100).unwrap(), 0.0);
    }

    #[test]
    fn infinite_alternative_gives_zero() {
        let null = fit(-0.61, 100, ModelKind::Admixture, Recombination::Infinite);
        let alt = fit(-0.61, 100, ModelKind::Linkage, Recombination::Infinite);
        let lambda = lrt_statistic(&null, &alt, 100).unwrap();
        assert_eq!(lambda, 0.0);
        assert!(!decide(lambda, 0.05).unwrap().1);
    }

    #[test]
    fn mismatched_fits_are_rejected() {
        let null = fit(-0.61, 100, ModelKind::Admixture, Recombination::Infinite);
        let alt = fit(-0.60, 90, ModelKind::Linkage, Recombination::Finite(1.0));
        assert!(matches!(lrt_statistic(&null, &alt, 100), Err(Error::InvalidComparison(_))));
    }

    #[test]
    fn small_negative_clamps_large_negative_fails() {
        let null = fit(-0.6, 1000, ModelKind::Admixture, Recombination::Infinite);
        let alt = fit(-0.6 - 1e-13, 1000, ModelKind::Linkage, Recombination::Finite(1.0));
        assert_eq!(lrt_statistic(&null, &alt, 1000).unwrap(), 0.0);
        let bad = fit(-0.7, 1000, ModelKind::Linkage, Recombination::Finite(1.0));
        assert!(matches!(lrt_statistic(&null, &bad, 1000), Err(Error::Numeric(_))));
    }

    #[test]
    fn p_value_decreases_with_lambda() {
        let mut prev = 1.0 + 1e-12;
        for i in 0..50 {
            let (p, _) = decide(i as f64 * 0.4, 0.05).unwrap();
            assert!(p < prev);
            prev = p;
        }
        assert!(decide(1.0, 0.0).is_err());
    }
}
