//! Asymptotic squared-error predictions for regularized M-estimators under Gaussian designs,
//! together with a Monte Carlo harness that solves the finite problems and checks them.
//!
//! The pipeline is: [`dist`] describes noise and signal marginals, [`moreau`] supplies the
//! proximal catalog, [`eme`] turns both into expected Moreau envelopes `L` and `F`, and
//! [`spo`] solves the resulting four-variable scalar min-max problem. [`estimator`] and
//! [`harness`] produce the empirical side.

pub mod dist;
pub mod eme;
pub mod estimator;
pub mod harness;
pub mod moreau;
mod optim;
pub mod quad;
pub mod rng;
pub mod spo;

pub use dist::{Atom, BlockSignalDist, ScalarDist};
pub use eme::EmeProvider;
pub use moreau::{LossSpec, RegSpec};
pub use spo::{saddle_violation, SpoProblem, SpoSolution};
