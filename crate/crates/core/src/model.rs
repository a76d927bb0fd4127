//! Domain types of the Linkage Model and its building blocks.
//!
//! The hidden ancestry `Z_{c,m}` of marker `m` on chromosome `c` follows a
//! time-inhomogeneous Markov chain whose transition kernel between loci at
//! genetic distance `d` (centiMorgan) is
//!
//! ```text
//! T(q, r, d) = e^{-d r} I + (1 - e^{-d r}) 1 q^T
//! ```
//!
//! so every kernel leaves `q` invariant. The first marker of each chromosome
//! is drawn from `q` directly. `r = ∞` turns every row into `q`, which is the
//! Admixture Model (independent markers).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance for `Σ q_k = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Default lower clamp for allele frequencies; the upper clamp is `1 - DEFAULT_FREQ_BOUND`.
pub const DEFAULT_FREQ_BOUND: f64 = 1e-6;

/// Recombination parameter `r`, with `r = ∞` as a distinguished value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Recombination {
    Finite(f64),
    Infinite,
}

impl Recombination {
    pub fn new(r: f64) -> Result<Self> {
        if r == f64::INFINITY {
            Ok(Recombination::Infinite)
        } else if r.is_finite() && r >= 0.0 {
            Ok(Recombination::Finite(r))
        } else {
            Err(Error::InvalidParameter(format!(
                "recombination parameter must be >= 0 or infinite, got {r}"
            )))
        }
    }

    /// Probability `e^{-d r}` of keeping the previous ancestry across distance `d`.
    #[inline]
    pub fn stay_probability(self, d: f64) -> f64 {
        match self {
            Recombination::Finite(r) => (-d * r).exp(),
            Recombination::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Recombination::Infinite)
    }

    /// `r` as a float; `Infinite` maps to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        match self {
            Recombination::Finite(r) => r,
            Recombination::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Recombination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Recombination::Finite(r) => write!(f, "{r}"),
            Recombination::Infinite => f.write_str("inf"),
        }
    }
}

/// Checks that `q` lies on the probability simplex.
pub fn check_simplex(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::InvalidParameter("empty ancestry vector".into()));
    }
    if let Some(bad) = q.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ancestry proportion {bad} is not a probability"
        )));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!(
            "ancestry proportions sum to {sum}, not 1"
        )));
    }
    Ok(())
}

/// A point `(q, r)` of the parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub q: Vec<f64>,
    pub r: Recombination,
}

impl ParameterPoint {
    pub fn new(q: Vec<f64>, r: Recombination) -> Result<Self> {
        check_simplex(&q)?;
        if let Recombination::Finite(v) = r {
            Recombination::new(v)?;
        }
        Ok(Self { q, r })
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }
}

/// Genetic distances in centiMorgan, one vector per chromosome.
///
/// Entry `m` of a chromosome is the distance between loci `m - 1` and `m`;
/// entry 0 is stored as 0 and never read.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneticMap {
    distances: Vec<Vec<f64>>,
}

impl GeneticMap {
    pub fn new(distances: Vec<Vec<f64>>) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::InvalidMap("map has no chromosomes".into()));
        }
        for (c, chrom) in distances.iter().enumerate() {
            if chrom.is_empty() {
                return Err(Error::InvalidMap(format!("chromosome {} has no markers", c + 1)));
            }
            for (m, d) in chrom.iter().enumerate().skip(1) {
                if !d.is_finite() || *d < 0.0 {
                    return Err(Error::InvalidMap(format!(
                        "distance {d} at chromosome {}, marker {} is negative or not finite",
                        c + 1,
                        m + 1
                    )));
                }
            }
        }
        let distances = distances
            .into_iter()
            .map(|mut chrom| {
                chrom[0] = 0.0;
                chrom
            })
            .collect();
        Ok(Self { distances })
    }

    /// One chromosome per entry of `marker_counts`, all inter-marker distances equal to `d`.
    pub fn constant(marker_counts: &[usize], d: f64) -> Result<Self> {
        Self::new(
            marker_counts
                .iter()
                .map(|&m| {
                    let mut v = vec![d; m];
                    if m > 0 {
                        v[0] = 0.0;
                    }
                    v
                })
                .collect(),
        )
    }

    pub fn n_chromosomes(&self) -> usize {
        self.distances.len()
    }

    pub fn marker_counts(&self) -> Vec<usize> {
        self.distances.iter().map(Vec::len).collect()
    }

    pub fn chromosome(&self, c: usize) -> &[f64] {
        &self.distances[c]
    }

    pub fn chromosomes(&self) -> &[Vec<f64>] {
        &self.distances
    }
}

/// Allele-1 frequencies `p_{c,k,m}` for `K` populations, clamped into `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlleleFrequencySet {
    k: usize,
    // per chromosome, row-major [marker][population]
    values: Vec<Vec<f64>>,
    lower: f64,
    upper: f64,
    clamped: usize,
}

impl AlleleFrequencySet {
    /// `chroms[c][m]` holds the `K` frequencies of marker `m` on chromosome `c`.
    pub fn new(chroms: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::with_bounds(chroms, DEFAULT_FREQ_BOUND, 1.0 - DEFAULT_FREQ_BOUND)
    }

    pub fn with_bounds(chroms: Vec<Vec<Vec<f64>>>, lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower < upper && upper < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "frequency bounds must satisfy 0 < lo < hi < 1, got [{lower}, {upper}]"
            )));
        }
        let k = chroms
            .iter()
            .flat_map(|c| c.first())
            .map(Vec::len)
            .next()
            .ok_or_else(|| Error::InvalidInput("frequency set has no markers".into()))?;
        if k == 0 {
            return Err(Error::InvalidInput("frequency set has zero populations".into()));
        }
        let mut clamped = 0;
        let mut values = Vec::with_capacity(chroms.len());
        for (c, chrom) in chroms.into_iter().enumerate() {
            if chrom.is_empty() {
                return Err(Error::Structural(format!("chromosome {} has no markers", c + 1)));
            }
            let mut flat = Vec::with_capacity(chrom.len() * k);
            for (m, row) in chrom.into_iter().enumerate() {
                if row.len() != k {
                    return Err(Error::Structural(format!(
                        "chromosome {}, marker {}: expected {k} populations, found {}",
                        c + 1,
                        m + 1,
                        row.len()
                    )));
                }
                for p in row {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::InvalidParameter(format!(
                            "allele frequency {p} at chromosome {}, marker {} is outside [0, 1]",
                            c + 1,
                            m + 1
                        )));
                    }
                    let v = p.clamp(lower, upper);
                    if v != p {
                        clamped += 1;
                    }
                    flat.push(v);
                }
            }
            values.push(flat);
        }
        Ok(Self {
            k,
            values,
            lower,
            upper,
            clamped,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_chromosomes(&self) -> usize {
        self.values.len()
    }

    pub fn marker_counts(&self) -> Vec<usize> {
        self.values.iter().map(|v| v.len() / self.k).collect()
    }

    /// Frequencies of all `K` populations at one marker.
    #[inline]
    pub fn column(&self, c: usize, m: usize) -> &[f64] {
        &self.values[c][m * self.k..(m + 1) * self.k]
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    /// Number of input values moved by clamping.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    /// The same frequencies with populations reordered: new population `j` is old `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let values = self
            .values
            .iter()
            .map(|flat| {
                flat.chunks(self.k)
                    .flat_map(|row| perm.iter().map(move |&j| row[j]))
                    .collect()
            })
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }
}

/// One observed allele.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Allele {
    Zero,
    One,
    Missing,
}

impl Allele {
    /// Code used in genotype files and raw arrays: 0, 1, or [`Allele::MISSING_CODE`].
    pub const MISSING_CODE: u8 = u8::MAX;

    pub fn from_bool(one: bool) -> Self {
        if one {
            Allele::One
        } else {
            Allele::Zero
        }
    }
}

impl TryFrom<u8> for Allele {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Allele::Zero),
            1 => Ok(Allele::One),
            Allele::MISSING_CODE => Ok(Allele::Missing),
            other => Err(Error::InvalidGenotype(format!(
                "allele code {other} is not 0, 1 or missing"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ploidy {
    Haploid,
    /// Two phased haplotype tracks, modelled as independent chains sharing `(q, r)`.
    PhasedDiploid,
}

/// Observed alleles of one individual, `tracks[h][c][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeData {
    tracks: Vec<Vec<Vec<Allele>>>,
}

impl GenotypeData {
    pub fn haploid(chroms: Vec<Vec<Allele>>) -> Result<Self> {
        Self::new(vec![chroms])
    }

    pub fn diploid(hap1: Vec<Vec<Allele>>, hap2: Vec<Vec<Allele>>) -> Result<Self> {
        Self::new(vec![hap1, hap2])
    }

    pub fn new(tracks: Vec<Vec<Vec<Allele>>>) -> Result<Self> {
        if tracks.is_empty() || tracks.len() > 2 {
            return Err(Error::InvalidGenotype(format!(
                "expected one or two haplotype tracks, found {}",
                tracks.len()
            )));
        }
        let shape: Vec<usize> = tracks[0].iter().map(Vec::len).collect();
        if shape.is_empty() {
            return Err(Error::InvalidInput("genotype data has no chromosomes".into()));
        }
        if shape.contains(&0) {
            return Err(Error::InvalidInput("genotype data has an empty chromosome".into()));
        }
        if tracks[1..]
            .iter()
            .any(|t| t.iter().map(Vec::len).collect::<Vec<_>>() != shape)
        {
            return Err(Error::Structural("haplotype tracks differ in shape".into()));
        }
        Ok(Self { tracks })
    }

    /// Convenience constructor from 0/1/[`Allele::MISSING_CODE`] codes.
    pub fn haploid_from_codes(chroms: &[Vec<u8>]) -> Result<Self> {
        let chroms = chroms
            .iter()
            .map(|c| c.iter().map(|&v| Allele::try_from(v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::haploid(chroms)
    }

    pub fn ploidy(&self) -> Ploidy {
        if self.tracks.len() == 2 {
            Ploidy::PhasedDiploid
        } else {
            Ploidy::Haploid
        }
    }

    pub fn tracks(&self) -> &[Vec<Vec<Allele>>] {
        &self.tracks
    }

    pub fn n_chromosomes(&self) -> usize {
        self.tracks[0].len()
    }

    pub fn marker_counts(&self) -> Vec<usize> {
        self.tracks[0].iter().map(Vec::len).collect()
    }

    /// Total marker count `Σ_c M_c`; haplotype tracks are not counted twice.
    pub fn m_total(&self) -> usize {
        self.tracks[0].iter().map(Vec::len).sum()
    }

    pub fn n_observed(&self) -> usize {
        self.tracks
            .iter()
            .flatten()
            .flatten()
            .filter(|a| **a != Allele::Missing)
            .count()
    }

    /// Only the first haplotype track.
    pub fn first_track(&self) -> Self {
        Self {
            tracks: vec![self.tracks[0].clone()],
        }
    }
}

/// Checks that genotypes, frequencies and (optionally) the map share one marker layout.
pub fn check_layout(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: Option<&GeneticMap>,
) -> Result<()> {
    let counts = data.marker_counts();
    if freqs.marker_counts() != counts {
        return Err(Error::Structural(format!(
            "genotypes have markers per chromosome {:?}, frequencies have {:?}",
            counts,
            freqs.marker_counts()
        )));
    }
    if let Some(map) = map {
        if map.marker_counts() != counts {
            return Err(Error::Structural(format!(
                "genotypes have markers per chromosome {:?}, map has {:?}",
                counts,
                map.marker_counts()
            )));
        }
    }
    Ok(())
}

/// How an observed allele depends on the hidden ancestry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmissionMode {
    /// `P(X = 1 | Z = k) = p_k`.
    #[default]
    Standard,
    /// `P(X = 1 | Z = k) = q_k p_k`.
    PaperLiteral,
}

impl std::str::FromStr for EmissionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(EmissionMode::Standard),
            "paper-literal" => Ok(EmissionMode::PaperLiteral),
            other => Err(Error::Config(format!("unknown emission mode {other:?}"))),
        }
    }
}

/// Writes `P(X = x | Z = k)` for every `k` into `out`. Missing observations give all ones.
#[inline]
pub fn fill_emission(x: Allele, p_col: &[f64], q: &[f64], mode: EmissionMode, out: &mut [f64]) {
    match x {
        Allele::Missing => out.fill(1.0),
        Allele::One | Allele::Zero => {
            for (k, o) in out.iter_mut().enumerate() {
                let success = match mode {
                    EmissionMode::Standard => p_col[k],
                    EmissionMode::PaperLiteral => q[k] * p_col[k],
                };
                *o = if x == Allele::One { success } else { 1.0 - success };
            }
        }
    }
}

pub fn emission_vector(x: Allele, p_col: &[f64], q: &[f64], mode: EmissionMode) -> Vec<f64> {
    let mut out = vec![0.0; p_col.len()];
    fill_emission(x, p_col, q, mode, &mut out);
    out
}

/// Row-stochastic `K × K` transition matrix; row = previous ancestry, column = next.
pub fn transition_matrix(q: &[f64], r: Recombination, d: f64) -> Result<DMatrix<f64>> {
    check_simplex(q)?;
    if !d.is_finite() || d < 0.0 {
        return Err(Error::InvalidMap(format!("distance {d} is negative or not finite")));
    }
    let k = q.len();
    let stay = r.stay_probability(d);
    let jump = 1.0 - stay;
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            stay + jump * q[j]
        } else {
            jump * q[j]
        }
    }))
}

/// Second largest eigenvalue of the transition matrix, which equals `e^{-d r}`.
pub fn second_eigenvalue(_q: &[f64], r: Recombination, d: f64) -> f64 {
    r.stay_probability(d)
}

/// Bounds of the compact parameter space and regularity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConfig {
    pub kappa_q: f64,
    pub kappa_q_upper: f64,
    pub kappa_p: f64,
    pub kappa_p_upper: f64,
    pub r_lower: f64,
    pub kappa_d: f64,
}

impl Default for AssumptionConfig {
    fn default() -> Self {
        Self {
            kappa_q: 1e-4,
            kappa_q_upper: 1.0 - 1e-4,
            kappa_p: DEFAULT_FREQ_BOUND,
            kappa_p_upper: 1.0 - DEFAULT_FREQ_BOUND,
            r_lower: 0.0,
            kappa_d: 0.01,
        }
    }
}

impl AssumptionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.kappa_q
            && self.kappa_q < self.kappa_q_upper
            && self.kappa_q_upper < 1.0
            && 0.0 < self.kappa_p
            && self.kappa_p < self.kappa_p_upper
            && self.kappa_p_upper < 1.0
            && self.r_lower >= 0.0
            && self.kappa_d > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent assumption bounds {self:?}")))
        }
    }
}

/// Diagnostics for the regularity conditions the asymptotic theory relies on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionReport {
    /// Frequencies outside `[kappa_p, kappa_p_upper]`.
    pub frequency_out_of_bounds: usize,
    /// Clamping performed when the frequency set was built.
    pub frequency_clamped: usize,
    /// Markers where some pair of populations has identical frequency.
    pub equal_frequency_markers: usize,
    /// `(chromosome, marker, distance)` with distance below `kappa_d` (1-based indices).
    pub short_distances: Vec<(usize, usize, f64)>,
    /// `Π e^{-d r_lower}` over all inter-marker steps.
    pub mixing_product: f64,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.frequency_out_of_bounds == 0
            && self.equal_frequency_markers == 0
            && self.short_distances.is_empty()
    }
}

pub fn validate_assumptions(
    data: &GenotypeData,
    freqs: &AlleleFrequencySet,
    map: &GeneticMap,
    config: &AssumptionConfig,
) -> AssumptionReport {
    let mut report = AssumptionReport {
        frequency_clamped: freqs.clamped_count(),
        ..Default::default()
    };
    if let Err(e) = config.validate() {
        report.warnings.push(e.to_string());
    }
    if let Err(e) = check_layout(data, freqs, Some(map)) {
        report.warnings.push(e.to_string());
        return report;
    }
    for (c, &mc) in freqs.marker_counts().iter().enumerate() {
        for m in 0..mc {
            let col = freqs.column(c, m);
            report.frequency_out_of_bounds += col
                .iter()
                .filter(|p| **p < config.kappa_p || **p > config.kappa_p_upper)
                .count();
            let has_equal_pair = col
                .iter()
                .enumerate()
                .any(|(i, a)| col[i + 1..].iter().any(|b| a == b));
            if has_equal_pair {
                report.equal_frequency_markers += 1;
            }
        }
    }
    let mut log_product = 0.0;
    for (c, chrom) in map.chromosomes().iter().enumerate() {
        for (m, &d) in chrom.iter().enumerate().skip(1) {
            if d < config.kappa_d {
                report.short_distances.push((c + 1, m + 1, d));
            }
            log_product -= d * config.r_lower;
        }
    }
    report.mixing_product = log_product.exp();
    if report.frequency_clamped > 0 {
        report
            .warnings
            .push(format!("{} allele frequencies were clamped", report.frequency_clamped));
    }
    if report.frequency_out_of_bounds > 0 {
        report.warnings.push(format!(
            "{} allele frequencies lie outside [{}, {}]",
            report.frequency_out_of_bounds, config.kappa_p, config.kappa_p_upper
        ));
    }
    if report.equal_frequency_markers > 0 {
        report.warnings.push(format!(
            "{} markers have identical frequencies in two populations",
            report.equal_frequency_markers
        ));
    }
    if !report.short_distances.is_empty() {
        report.warnings.push(format!(
            "{} inter-marker distances are below {} cM",
            report.short_distances.len(),
            config.kappa_d
        ));
    }
    report
}
