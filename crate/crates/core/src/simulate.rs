//! Sampling genotype data from the Linkage and Admixture Models.
//!
//! Randomness comes from ChaCha8 seeded with `seed`, on stream `stream`: one
//! stream per replicate keeps replicates independent and reproducible on every
//! platform. Draw order: frequencies (when generated), then for each track,
//! chromosome and marker one uniform for the ancestry and one for the allele.
//! Ancestry is drawn by inverting the CDF of the transition row, which at
//! `r = ∞` is `q` itself, so the Admixture sampler consumes the stream
//! identically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    check_simplex, Allele, AlleleFrequencySet, EmissionMode, GeneticMap, GenotypeData, Ploidy,
    Recombination,
};

#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    /// Same distance between every pair of adjacent markers.
    Constant(f64),
    Explicit(GeneticMap),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrequencySpec {
    /// i.i.d. `Uniform[lo, hi]` per population and marker.
    Uniform { lo: f64, hi: f64 },
    Explicit(AlleleFrequencySet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub marker_counts: Vec<usize>,
    pub q: Vec<f64>,
    pub r: Recombination,
    pub map: MapSpec,
    pub freqs: FrequencySpec,
    pub ploidy: Ploidy,
    pub emission: EmissionMode,
    pub seed: u64,
    pub stream: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            marker_counts: vec![100],
            q: vec![0.5, 0.5],
            r: Recombination::Finite(1.0),
            map: MapSpec::Constant(1.0),
            freqs: FrequencySpec::Uniform { lo: 0.1, hi: 0.9 },
            ploidy: Ploidy::Haploid,
            emission: EmissionMode::Standard,
            seed: 0,
            stream: 0,
        }
    }
}

impl SimulationConfig {
    pub fn k(&self) -> usize {
        self.q.len()
    }

    fn validate(&self) -> Result<()> {
        check_simplex(&self.q).map_err(|e| Error::Config(e.to_string()))?;
        if self.marker_counts.is_empty() || self.marker_counts.contains(&0) {
            return Err(Error::Config("every chromosome needs at least one marker".into()));
        }
        if let Recombination::Finite(r) = self.r {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("invalid recombination parameter {r}")));
            }
        }
        match &self.map {
            MapSpec::Constant(d) if !(d.is_finite() && *d >= 0.0) => {
                return Err(Error::Config(format!("invalid distance {d}")));
            }
            MapSpec::Explicit(m) if m.marker_counts() != self.marker_counts => {
                return Err(Error::Config("map does not match marker counts".into()));
            }
            _ => {}
        }
        match &self.freqs {
            FrequencySpec::Uniform { lo, hi } if !(0.0 < *lo && lo <= hi && *hi < 1.0) => {
                return Err(Error::Config(format!("invalid frequency range [{lo}, {hi}]")));
            }
            FrequencySpec::Explicit(f)
                if f.marker_counts() != self.marker_counts || f.k() != self.k() =>
            {
                return Err(Error::Config("frequencies do not match marker counts or K".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub data: GenotypeData,
    /// Hidden ancestry `states[track][chromosome][marker]`.
    pub states: Vec<Vec<Vec<usize>>>,
    pub freqs: AlleleFrequencySet,
    pub map: GeneticMap,
}

fn rng_for(config: &SimulationConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(config.stream);
    rng
}

fn draw_frequencies<R: Rng>(config: &SimulationConfig, rng: &mut R) -> Result<AlleleFrequencySet> {
    match &config.freqs {
        FrequencySpec::Explicit(f) => Ok(f.clone()),
        FrequencySpec::Uniform { lo, hi } => {
            let k = config.k();
            let chroms = config
                .marker_counts
                .iter()
                .map(|&m| {
                    (0..m)
                        .map(|_| (0..k).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
                        .collect()
                })
                .collect();
            AlleleFrequencySet::new(chroms)
        }
    }
}

/// Frequencies the simulator would use for `config`, drawn from the config's own stream.
pub fn resolve_frequencies(config: &SimulationConfig) -> Result<AlleleFrequencySet> {
    config.validate()?;
    draw_frequencies(config, &mut rng_for(config))
}

fn resolve_map(config: &SimulationConfig) -> Result<GeneticMap> {
    match &config.map {
        MapSpec::Constant(d) => GeneticMap::constant(&config.marker_counts, *d),
        MapSpec::Explicit(m) => Ok(m.clone()),
    }
}

/// Index `k` with `Σ_{j<k} w_j ≤ u < Σ_{j≤k} w_j`.
fn invert_cdf(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.enumerate() {
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

fn simulate(config: &SimulationConfig, r: Recombination) -> Result<Simulation> {
    config.validate()?;
    let mut rng = rng_for(config);
    let freqs = draw_frequencies(config, &mut rng)?;
    let map = resolve_map(config)?;
    let n_tracks = match config.ploidy {
        Ploidy::Haploid => 1,
        Ploidy::PhasedDiploid => 2,
    };
    let q = &config.q;
    let mut tracks = Vec::with_capacity(n_tracks);
    let mut states = Vec::with_capacity(n_tracks);
    for _ in 0..n_tracks {
        let mut track = Vec::with_capacity(config.marker_counts.len());
        let mut track_states = Vec::with_capacity(config.marker_counts.len());
        for (c, &mc) in config.marker_counts.iter().enumerate() {
            let mut alleles = Vec::with_capacity(mc);
            let mut zs: Vec<usize> = Vec::with_capacity(mc);
            for m in 0..mc {
                let u: f64 = rng.random();
                let z = match zs.last() {
                    Some(&prev) if m > 0 => {
                        let stay = r.stay_probability(map.chromosome(c)[m]);
                        let jump = 1.0 - stay;
                        let row = q
                            .iter()
                            .enumerate()
                            .map(|(k, qk)| if k == prev { stay + jump * qk } else { jump * qk });
                        invert_cdf(row, u)
                    }
                    _ => invert_cdf(q.iter().copied(), u),
                };
                let p = freqs.column(c, m)[z];
                let success = match config.emission {
                    EmissionMode::Standard => p,
                    EmissionMode::PaperLiteral => q[z] * p,
                };
                let v: f64 = rng.random();
                alleles.push(Allele::from_bool(v < success));
                zs.push(z);
            }
            track.push(alleles);
            track_states.push(zs);
        }
        tracks.push(track);
        states.push(track_states);
    }
    Ok(Simulation {
        data: GenotypeData::new(tracks)?,
        states,
        freqs,
        map,
    })
}

/// Samples under the Linkage Model with the config's `r` (which may be infinite).
pub fn simulate_linkage(config: &SimulationConfig) -> Result<Simulation> {
    simulate(config, config.r)
}

/// Samples under the Admixture Model; the config's `r` is ignored.
pub fn simulate_admixture(config: &SimulationConfig) -> Result<Simulation> {
    simulate(config, Recombination::Infinite)
}

/// `n` individuals sharing one frequency set and map, individual `i` on stream `config.stream + i`.
///
/// With `q_per_individual`, individual `i` uses that ancestry vector instead of `config.q`.
pub fn simulate_panel(
    config: &SimulationConfig,
    n: usize,
    q_per_individual: Option<&[Vec<f64>]>,
) -> Result<Vec<Simulation>> {
    let freqs = resolve_frequencies(config)?;
    (0..n)
        .map(|i| {
            let mut c = config.clone();
            c.freqs = FrequencySpec::Explicit(freqs.clone());
            c.stream = config.stream + i as u64 + 1;
            if let Some(qs) = q_per_individual {
                c.q = qs[i].clone();
            }
            simulate(&c, config.r)
        })
        .collect()
}
