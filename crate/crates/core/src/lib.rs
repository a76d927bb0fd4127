//! Model selection between the Admixture Model and the Linkage Model of
//! individual ancestry.
//!
//! The Linkage Model is a time-inhomogeneous hidden Markov model over the
//! ancestral population of each marker, with switching governed by the genetic
//! distance `d` and a recombination parameter `r`; `r = ∞` is the Admixture
//! Model. This crate evaluates its likelihood, fits `(q, r)` by maximum
//! likelihood, estimates the covariance of the fit from the observed
//! information, and tests `r = ∞` against `r < ∞` with a likelihood-ratio test.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod error;
pub mod harness;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod lrt;
pub mod model;
pub mod optim;
pub mod simulate;
pub mod stats;

pub mod cli;

pub use error::{Error, Result};
pub use inference::{
    covariance_mle, fit_admixture, fit_linkage, fit_population, CovarianceEstimate, FitOptions,
    ModelFit, ModelKind, PopulationFit,
};
pub use likelihood::{admixture_loglik, brute_force_loglik, forward_loglik, LikelihoodResult};
pub use lrt::{run_population_test, run_test, PopulationTestResult, TestResult};
pub use model::{
    Allele, AlleleFrequencySet, EmissionMode, GeneticMap, GenotypeData, ParameterPoint, Ploidy,
    Recombination,
};
