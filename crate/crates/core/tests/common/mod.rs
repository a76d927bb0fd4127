#![allow(dead_code)]

use admixlink::{Allele, AlleleFrequencySet, GeneticMap, GenotypeData, ParameterPoint, Recombination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_q<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

pub struct Instance {
    pub data: GenotypeData,
    pub freqs: AlleleFrequencySet,
    pub map: GeneticMap,
    pub theta: ParameterPoint,
}

/// Random small problem: `counts` markers per chromosome, `k` populations,
/// alleles uniform with ~10% missing, `r` log-uniform on [1e-2, 1e2].
pub fn random_instance<R: Rng>(rng: &mut R, k: usize, counts: &[usize], diploid: bool) -> Instance {
    let freqs = AlleleFrequencySet::new(
        counts
            .iter()
            .map(|&m| (0..m).map(|_| (0..k).map(|_| rng.random_range(0.02..0.98)).collect()).collect())
            .collect(),
    )
    .unwrap();
    let map = GeneticMap::new(
        counts
            .iter()
            .map(|&m| (0..m).map(|_| rng.random_range(0.0..3.0)).collect())
            .collect(),
    )
    .unwrap();
    let track = |rng: &mut R| -> Vec<Vec<Allele>> {
        counts
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|_| {
                        if rng.random::<f64>() < 0.1 {
                            Allele::Missing
                        } else {
                            Allele::from_bool(rng.random::<bool>())
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let tracks = if diploid {
        vec![track(rng), track(rng)]
    } else {
        vec![track(rng)]
    };
    let r = 10f64.powf(rng.random_range(-2.0..2.0));
    let theta = ParameterPoint::new(random_q(rng, k), Recombination::Finite(r)).unwrap();
    Instance {
        data: GenotypeData::new(tracks).unwrap(),
        freqs,
        map,
        theta,
    }
}
