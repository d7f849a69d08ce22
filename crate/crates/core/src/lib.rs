//! Shared-kernel Bayesian screening for two-group differences across many
//! related variables.
//!
//! Every variable (site) is modelled as a mixture over one common dictionary
//! of truncated-normal kernels on `[0, 1]`. Two groups at a site differ only
//! through their mixture weights, and the posterior probability that the
//! weights are equal is available in closed form given kernel memberships.
//!
//! Pipeline:
//! 1. [`dictionary::fit_dictionary`] learns the kernels and the shared
//!    Dirichlet concentration from a subsample of sites.
//! 2. [`screening::screen`] runs the two-group Gibbs sampler over all sites
//!    with the dictionary held fixed.
//!
//! [`asymptotics`] and [`simulation`] hold the large-sample evaluators and
//! the simulation studies used to validate the method.

pub mod asymptotics;
pub mod dictionary;
pub mod error;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod screening;
pub mod simulation;
pub mod special;
pub mod stats;
pub mod studies;

pub use error::{Error, Result};
pub use model::{
    AllocationState, GibbsConfig, KernelDictionary, P0Mode, ScreeningDataset, ScreeningResult,
    WeightDraw,
};
pub use special::{ConcentrationVector, TruncNormalKernel};
