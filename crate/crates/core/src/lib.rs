//! Quantum state tomography from ensembles of measurement trajectories.
//!
//! Each trajectory is reduced to an effect matrix by backward filtering; the
//! initial state is then estimated by maximum likelihood over density matrices,
//! with Laplace-approximate confidence intervals for arbitrary observables.

pub mod error;
pub mod tolerances;
mod linalg;
pub mod operators;
pub mod filter;
pub mod maxlike;
pub mod confidence;
pub mod continuous;
pub mod models;
pub mod qubit;
pub mod cli;
pub mod random;

pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use tolerances::Tolerances;
