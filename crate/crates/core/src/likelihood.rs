//! Normalized log-likelihood of the Linkage Model.
//!
//! The forward recursion keeps the filtered ancestry distribution normalized
//! after every marker, so the log of each normalizer is the predictive term
//! `D_{c,m} = log P(X_{c,m} | X before (c,m))` and `ℓ = Σ D_{c,m} / M_total`.
//! Because every kernel has the form `λ I + (1 - λ) 1 q^T`, one propagation
//! step is `λ α + (1 - λ) q`, which costs `O(K)` instead of `O(K²)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{
    check_layout, emission_vector, fill_emission, transition_matrix, Allele, AlleleFrequencySet,
    EmissionMode, GeneticMap, GenotypeData, ParameterPoint, Recombination,
};

/// Brute-force enumeration refuses inputs with more markers than this.
pub const BRUTE_FORCE_MAX_MARKERS: usize = 12;
/// Brute-force enumeration refuses inputs with more populations than this.
pub const BRUTE_FORCE_MAX_POPULATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodResult {
    /// Log-likelihood divided by `m_total`.
    pub ell: f64,
    /// Predictive log terms in (chromosome, marker) order; diploid data sums both tracks.
    pub per_marker: Vec<f64>,
    pub m_total: usize,
}

impl LikelihoodResult {
    fn from_terms(per_marker: Vec<f64>) -> Self {
        let m_total = per_marker.len();
        let total: f64 = per_marker.iter().sum();
        Self {
            ell: total / m_total as f64,
            per_marker,
            m_total,
        }
    }

    /// Unnormalized log-likelihood `m_total · ℓ`.
    pub fn log_likelihood(&self) -> f64 {
        self.per_marker.iter().sum()
    }
}

fn check_theta(q: &[f64], freqs: &AlleleFrequencySet) -> Result<()> {
    crate::model::check_simplex(q)?;
    if q.len() != freqs.k() {
        return Err(Error::Structural(format!(
            "ancestry vector has {} entries but frequencies have {} populations",
            q.len(),
            freqs.k()
        )));
    }
    Ok(())
}

/// `log Σ_k q_k P(x | Z = k)`: the contribution of a marker whose ancestry is drawn afresh from `q`.
#[inline]
fn independent_term(x: Allele, p_col: &[f64], q: &[f64], mode: EmissionMode, buf: &mut [f64]) -> f64 {
    if x == Allele::Missing {
        return 0.0;
    }
    fill_emission(x, p_col, q, mode, buf);
    q.iter().zip(buf.iter()).map(|(a, b)| a * b).sum::<f64>().ln()
}

/// Adds the predictive terms of one haplotype track to `out`.
fn add_track_terms(
    track: &[Vec<Allele>],
    freqs: &AlleleFrequencySet,
    map: Option<&GeneticMap>,
    q: &[f64],
    r: Recombination,
    mode: EmissionMode,
    out: &mut [f64],
) {
    let k = q.len();
    let mut emission = vec![0.0; k];
    let mut alpha = vec![0.0; k];
    let mut offset = 0;
    for (c, chrom) in track.iter().enumerate() {
        for (m, &x) in chrom.iter().enumerate() {
            let slot = &mut out[offset + m];
            let p_col = freqs.column(c, m);
            if m == 0 || r.is_infinite() {
                *slot += independent_term(x, p_col, q, mode, &mut emission);
                if !r.is_infinite() {
                    alpha.copy_from_slice(q);
                    if x != Allele::Missing {
                        normalize_with_emission(&mut alpha, &emission);
                    }
                }
                continue;
            }
            let d = map.map_or(0.0, |mp| mp.chromosome(c)[m]);
            let stay = r.stay_probability(d);
            let jump = 1.0 - stay;
            for (a, qk) in alpha.iter_mut().zip(q) {
                *a = stay * *a + jump * qk;
            }
            if x == Allele::Missing {
                continue;
            }
            fill_emission(x, p_col, q, mode, &mut emission);
            *slot += normalize_with_emission(&mut alpha, &emission);
        }
        offset += chrom.len();
    }
}

/// `alpha ← alpha ⊙ e / Σ(alpha ⊙ e)`; returns the log normalizer.
#[inline]
fn normalize_with_emission(alpha: &mut [f64], emission: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, e) in alpha.iter_mut().zip(emission) {
        *a *= e;
        s += *a;
    }
    for a in alpha.iter_mut() {
        *a /= s;
    }
    s.ln()
}

pub fn forward_loglik(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    theta: &ParameterPoint,
    mode: EmissionMode,
) -> Result<LikelihoodResult> {
    check_layout(data, freqs, Some(map))?;
    check_theta(&theta.q, freqs)?;
    Ok(forward_unchecked(data, freqs, Some(map), &theta.q, theta.r, mode))
}

/// Forward pass without validation; callers guarantee a consistent layout and a simplex `q`.
pub(crate) fn forward_unchecked(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: Option<&GeneticMap>,
    q: &[f64],
    r: Recombination,
    mode: EmissionMode,
) -> LikelihoodResult {
    let mut terms = vec![0.0; data.m_total()];
    for track in data.tracks() {
        add_track_terms(track, freqs, map, q, r, mode, &mut terms);
    }
    LikelihoodResult::from_terms(terms)
}

/// Admixture Model likelihood (`r = ∞`, standard emission).
pub fn admixture_loglik(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    q: &[f64],
) -> Result<LikelihoodResult> {
    admixture_loglik_with_mode(data, freqs, q, EmissionMode::Standard)
}

pub fn admixture_loglik_with_mode(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    q: &[f64],
    mode: EmissionMode,
) -> Result<LikelihoodResult> {
    check_layout(data, freqs, None)?;
    check_theta(q, freqs)?;
    let mut terms = vec![0.0; data.m_total()];
    let mut buf = vec![0.0; q.len()];
    for track in data.tracks() {
        let mut offset = 0;
        for (c, chrom) in track.iter().enumerate() {
            for (m, &x) in chrom.iter().enumerate() {
                terms[offset + m] += independent_term(x, freqs.column(c, m), q, mode, &mut buf);
            }
            offset += chrom.len();
        }
    }
    Ok(LikelihoodResult::from_terms(terms))
}

/// Exact likelihood by summing over every hidden ancestry path. Test oracle for small inputs.
pub fn brute_force_loglik(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    theta: &ParameterPoint,
    mode: EmissionMode,
) -> Result<LikelihoodResult> {
    check_layout(data, freqs, Some(map))?;
    check_theta(&theta.q, freqs)?;
    let k = theta.k();
    let m_total = data.m_total();
    if m_total > BRUTE_FORCE_MAX_MARKERS || k > BRUTE_FORCE_MAX_POPULATIONS {
        return Err(Error::TooLarge(format!(
            "enumeration over {k}^{m_total} paths exceeds the limit of {BRUTE_FORCE_MAX_POPULATIONS}^{BRUTE_FORCE_MAX_MARKERS}"
        )));
    }

    // Per flattened position: transition from the previous position (None at a chromosome start).
    let mut transitions: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(m_total);
    for (c, &mc) in data.marker_counts().iter().enumerate() {
        for m in 0..mc {
            transitions.push(if m == 0 {
                None
            } else {
                Some(transition_matrix(&theta.q, theta.r, map.chromosome(c)[m])?)
            });
        }
    }

    let mut terms = vec![0.0; m_total];
    for track in data.tracks() {
        let mut emissions = Vec::with_capacity(m_total);
        for (c, chrom) in track.iter().enumerate() {
            for (m, &x) in chrom.iter().enumerate() {
                emissions.push(emission_vector(x, freqs.column(c, m), &theta.q, mode));
            }
        }
        let mut prefix = vec![0.0; m_total];
        let mut path = Vec::with_capacity(m_total);
        enumerate_paths(&theta.q, &transitions, &emissions, 1.0, &mut path, &mut prefix);
        let mut prev = 0.0;
        for (term, p) in terms.iter_mut().zip(&prefix) {
            let lp = p.ln();
            *term += lp - prev;
            prev = lp;
        }
    }
    Ok(LikelihoodResult::from_terms(terms))
}

fn enumerate_paths(
    q: &[f64],
    transitions: &[Option<DMatrix<f64>>],
    emissions: &[Vec<f64>],
    weight: f64,
    path: &mut Vec<usize>,
    prefix: &mut [f64],
) {
    let depth = path.len();
    if depth == emissions.len() {
        return;
    }
    for z in 0..q.len() {
        let step = match (&transitions[depth], path.last()) {
            (Some(t), Some(&prev)) => t[(prev, z)],
            _ => q[z],
        };
        let w = weight * step * emissions[depth][z];
        prefix[depth] += w;
        path.push(z);
        enumerate_paths(q, transitions, emissions, w, path, prefix);
        path.pop();
    }
}

#[inline]
fn fd_step(x: f64) -> f64 {
    (1e-5 * x.abs()).max(1e-5)
}

fn eval_finite<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("objective is not finite at {x:?}")))
    }
}

/// Central-difference gradient with step `max(1e-5, 1e-5·|x_i|)`.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        probe[i] = x[i] + h;
        let up = eval_finite(f, &probe)?;
        probe[i] = x[i] - h;
        let down = eval_finite(f, &probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Hessian from central differences of [`numerical_gradient`], symmetrized.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let step = fd_step(x[j]);
        probe[j] = x[j] + step;
        let up = numerical_gradient(f, &probe)?;
        probe[j] = x[j] - step;
        let down = numerical_gradient(f, &probe)?;
        probe[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Unconstrained coordinates for `(q, r)`.
///
/// `q` uses log-ratios against the last population (`K - 1` values) and `r`
/// uses `t = logit(e^{-r})`, so `t → -∞` is `r = ∞` and `t → +∞` is `r = 0`.
pub mod coords {
    use nalgebra::DMatrix;

    use crate::model::Recombination;

    pub fn q_to_free(q: &[f64]) -> Vec<f64> {
        let last = q[q.len() - 1].ln();
        q[..q.len() - 1].iter().map(|v| v.ln() - last).collect()
    }

    pub fn free_to_q(y: &[f64]) -> Vec<f64> {
        let max = y.iter().copied().fold(0.0f64, f64::max);
        let mut q: Vec<f64> = y.iter().map(|v| (v - max).exp()).collect();
        q.push((-max).exp());
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= s);
        q
    }

    pub fn r_to_free(r: Recombination) -> f64 {
        match r {
            Recombination::Infinite => f64::NEG_INFINITY,
            Recombination::Finite(r) if r == 0.0 => f64::INFINITY,
            // logit(e^{-r}) = -r - log(1 - e^{-r})
            Recombination::Finite(r) => -r - (-(-r).exp_m1()).ln(),
        }
    }

    pub fn free_to_r(t: f64) -> Recombination {
        if t == f64::NEG_INFINITY {
            return Recombination::Infinite;
        }
        // r = -log(sigmoid(t)) = softplus(-t)
        let r = if t > 0.0 {
            (-t).exp().ln_1p()
        } else {
            -t + t.exp().ln_1p()
        };
        Recombination::Finite(r)
    }

    /// Splits a free vector into `q` and, when `with_r`, `r` (last entry).
    pub fn free_to_theta(x: &[f64], with_r: bool) -> (Vec<f64>, Recombination) {
        if with_r {
            let (y, t) = x.split_at(x.len() - 1);
            (free_to_q(y), free_to_r(t[0]))
        } else {
            (free_to_q(x), Recombination::Infinite)
        }
    }

    /// Jacobian of `(q_1..q_K[, r])` with respect to `(y_1..y_{K-1}[, t])`.
    pub fn jacobian(x: &[f64], k: usize, with_r: bool) -> DMatrix<f64> {
        let ny = k - 1;
        let (q, _) = free_to_theta(x, with_r);
        let rows = k + usize::from(with_r);
        let cols = ny + usize::from(with_r);
        let mut jac = DMatrix::zeros(rows, cols);
        for i in 0..k {
            for j in 0..ny {
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[(i, j)] = q[i] * (delta - q[j]);
            }
        }
        if with_r {
            let t = x[ny];
            let s = 1.0 / (1.0 + (-t).exp());
            jac[(k, ny)] = -(1.0 - s);
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Recombination::{Finite, Infinite};

    fn one_marker(x: Allele, p: Vec<f64>) -> (GenotypeData, AlleleFrequencySet, GeneticMap) {
        (
            GenotypeData::haploid(vec![vec![x]]).unwrap(),
            AlleleFrequencySet::new(vec![vec![p]]).unwrap(),
            GeneticMap::new(vec![vec![0.0]]).unwrap(),
        )
    }

    #[test]
    fn single_marker_matches_mixture() {
        let (data, f, map) = one_marker(Allele::One, vec![0.9, 0.1]);
        let theta = ParameterPoint::new(vec![0.4, 0.6], Finite(1.0)).unwrap();
        let res = forward_loglik(&data, &f, &map, &theta, EmissionMode::Standard).unwrap();
        assert!((res.ell - 0.42f64.ln()).abs() < 1e-15);
        let bf = brute_force_loglik(&data, &f, &map, &theta, EmissionMode::Standard).unwrap();
        assert!((res.ell - bf.ell).abs() < 1e-14);
    }

    #[test]
    fn degenerate_ancestry() {
        let (data, f, _) = one_marker(Allele::One, vec![0.9, 0.1]);
        let res = admixture_loglik(&data, &f, &[1.0, 0.0]).unwrap();
        assert!((res.per_marker[0] - 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn equal_frequencies_make_q_irrelevant() {
        let data = GenotypeData::haploid(vec![vec![Allele::One, Allele::Zero]]).unwrap();
        let f = AlleleFrequencySet::new(vec![vec![vec![0.5, 0.5]; 2]]).unwrap();
        for q in [[0.1, 0.9], [0.5, 0.5], [1.0, 0.0]] {
            let res = admixture_loglik(&data, &f, &q).unwrap();
            assert!((res.ell - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn chromosome_boundary_resets_chain() {
        let data = GenotypeData::haploid(vec![vec![Allele::One], vec![Allele::Zero]]).unwrap();
        let f = AlleleFrequencySet::new(vec![vec![vec![0.8, 0.3]], vec![vec![0.6, 0.1]]]).unwrap();
        let map = GeneticMap::new(vec![vec![0.0], vec![0.0]]).unwrap();
        let theta = ParameterPoint::new(vec![0.25, 0.75], Finite(0.0)).unwrap();
        let bf = brute_force_loglik(&data, &f, &map, &theta, EmissionMode::Standard).unwrap();
        let a: f64 = 0.25 * 0.8 + 0.75 * 0.3;
        let b: f64 = 0.25 * 0.4 + 0.75 * 0.9;
        assert!((bf.log_likelihood() - (a.ln() + b.ln())).abs() < 1e-14);
        let fw = forward_loglik(&data, &f, &map, &theta, EmissionMode::Standard).unwrap();
        assert!((fw.log_likelihood() - bf.log_likelihood()).abs() < 1e-14);
    }

    #[test]
    fn two_markers_against_hand_enumeration() {
        let data = GenotypeData::haploid(vec![vec![Allele::One, Allele::Zero]]).unwrap();
        let f = AlleleFrequencySet::new(vec![vec![vec![0.7, 0.2], vec![0.4, 0.9]]]).unwrap();
        let map = GeneticMap::new(vec![vec![0.0, 1.0]]).unwrap();
        let q = [0.35, 0.65];
        let theta = ParameterPoint::new(q.to_vec(), Finite(1.0)).unwrap();
        let lam = (-1.0f64).exp();
        let e1 = [0.7, 0.2];
        let e2 = [0.6, 0.1];
        let mut total = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let t = if a == b { lam + (1.0 - lam) * q[b] } else { (1.0 - lam) * q[b] };
                total += q[a] * e1[a] * t * e2[b];
            }
        }
        let fw = forward_loglik(&data, &f, &map, &theta, EmissionMode::Standard).unwrap();
        assert!((fw.log_likelihood() - total.ln()).abs() < 1e-14);
    }

    #[test]
    fn infinite_rate_is_admixture() {
        let data = GenotypeData::haploid(vec![vec![Allele::One, Allele::Zero, Allele::Missing, Allele::One]]).unwrap();
        let f = AlleleFrequencySet::new(vec![vec![
            vec![0.7, 0.2, 0.5],
            vec![0.4, 0.9, 0.1],
            vec![0.3, 0.3, 0.6],
            vec![0.2, 0.8, 0.5],
        ]])
        .unwrap();
        let map = GeneticMap::constant(&[4], 0.5).unwrap();
        let q = vec![0.2, 0.3, 0.5];
        let theta = ParameterPoint::new(q.clone(), Infinite).unwrap();
        let fw = forward_loglik(&data, &f, &map, &theta, EmissionMode::Standard).unwrap();
        let adm = admixture_loglik(&data, &f, &q).unwrap();
        assert_eq!(fw, adm);
    }

    #[test]
    fn brute_force_refuses_large_inputs() {
        let data = GenotypeData::haploid(vec![vec![Allele::One; 13]]).unwrap();
        let f = AlleleFrequencySet::new(vec![vec![vec![0.5, 0.4]; 13]]).unwrap();
        let map = GeneticMap::constant(&[13], 1.0).unwrap();
        let theta = ParameterPoint::new(vec![0.5, 0.5], Finite(1.0)).unwrap();
        assert!(matches!(
            brute_force_loglik(&data, &f, &map, &theta, EmissionMode::Standard),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let data = GenotypeData::haploid(vec![vec![Allele::One; 3]]).unwrap();
        let f = AlleleFrequencySet::new(vec![vec![vec![0.5, 0.4]; 3]]).unwrap();
        let map = GeneticMap::constant(&[2], 1.0).unwrap();
        let theta = ParameterPoint::new(vec![0.5, 0.5], Finite(1.0)).unwrap();
        assert!(matches!(
            forward_loglik(&data, &f, &map, &theta, EmissionMode::Standard),
            Err(Error::Structural(_))
        ));
        let map = GeneticMap::constant(&[3], 1.0).unwrap();
        let theta3 = ParameterPoint::new(vec![0.2, 0.3, 0.5], Finite(1.0)).unwrap();
        assert!(matches!(
            forward_loglik(&data, &f, &map, &theta3, EmissionMode::Standard),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn quadratic_derivatives() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / 2.0;
        let g = numerical_gradient(&f, &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        let h = numerical_hessian(&f, &[0.0, 0.0, 0.0]).unwrap();
        assert!((h - DMatrix::identity(3, 3)).amax() < 1e-6);
    }

    #[test]
    fn exponential_gradient() {
        let f = |x: &[f64]| x[0].exp() + 0.0 * x[1];
        let g = numerical_gradient(&f, &[0.0, 0.3]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!(g[1].abs() < 1e-8);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let f = |x: &[f64]| x[0].ln();
        assert!(matches!(numerical_gradient(&f, &[0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn coordinate_round_trips() {
        let q = [0.2, 0.5, 0.3];
        let back = coords::free_to_q(&coords::q_to_free(&q));
        for (a, b) in q.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
        for r in [1e-6, 0.3, 1.0, 7.5, 40.0] {
            let t = coords::r_to_free(Finite(r));
            let back = coords::free_to_r(t).value();
            assert!((back - r).abs() < 1e-9 * r.max(1.0), "{r} -> {back}");
        }
        assert_eq!(coords::free_to_r(f64::NEG_INFINITY), Infinite);
        assert_eq!(coords::r_to_free(Infinite), f64::NEG_INFINITY);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = [0.3, -0.4, 0.2];
        let jac = coords::jacobian(&x, 3, true);
        for row in 0..4 {
            let f = |z: &[f64]| {
                let (q, r) = coords::free_to_theta(z, true);
                if row < 3 {
                    q[row]
                } else {
                    r.value()
                }
            };
            let g = numerical_gradient(&f, &x).unwrap();
            for col in 0..3 {
                assert!((jac[(row, col)] - g[col]).abs() < 1e-8);
            }
        }
    }
}
