//! Transition matrix of the Linkage Model and the likelihood of a small haplotype,
//! computed by the forward recursion and by summing over every ancestry path.

use admixlink::model::{second_eigenvalue, transition_matrix};
use admixlink::{
    admixture_loglik, brute_force_loglik, forward_loglik, Allele, AlleleFrequencySet, EmissionMode,
    GeneticMap, GenotypeData, ParameterPoint, Recombination,
};

fn main() -> admixlink::Result<()> {
    let q = vec![0.7, 0.3];
    let r = Recombination::Finite(1.0);
    let t = transition_matrix(&q, r, 0.5)?;
    println!("T(q = {q:?}, r = 1, d = 0.5) ={t}");
    println!("second eigenvalue e^(-dr) = {:.6}", second_eigenvalue(&q, r, 0.5));

    // one chromosome with six markers, one missing
    let data = GenotypeData::haploid(vec![vec![
        Allele::One,
        Allele::One,
        Allele::Zero,
        Allele::Missing,
        Allele::One,
        Allele::Zero,
    ]])?;
    let freqs = AlleleFrequencySet::new(vec![vec![
        vec![0.9, 0.2],
        vec![0.8, 0.1],
        vec![0.3, 0.6],
        vec![0.5, 0.5],
        vec![0.7, 0.4],
        vec![0.2, 0.9],
    ]])?;
    let map = GeneticMap::new(vec![vec![0.0, 0.5, 0.5, 1.0, 2.0, 0.1]])?;

    for r in [0.1, 1.0, 10.0] {
        let theta = ParameterPoint::new(q.clone(), Recombination::Finite(r))?;
        let fwd = forward_loglik(&data, &freqs, &map, &theta, EmissionMode::Standard)?;
        let all_paths = brute_force_loglik(&data, &freqs, &map, &theta, EmissionMode::Standard)?;
        println!(
            "r = {r:>4}: log L forward {:.12}, all paths {:.12}",
            fwd.log_likelihood(),
            all_paths.log_likelihood()
        );
    }
    let theta = ParameterPoint::new(q.clone(), Recombination::Infinite)?;
    let at_inf = forward_loglik(&data, &freqs, &map, &theta, EmissionMode::Standard)?;
    let admix = admixture_loglik(&data, &freqs, &q)?;
    println!("r = inf: {:.12}  admixture model: {:.12}", at_inf.log_likelihood(), admix.log_likelihood());
    Ok(())
}
