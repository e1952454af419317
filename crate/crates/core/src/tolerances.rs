//! Numerical thresholds shared by every module.

use serde::{Deserialize, Serialize};

/// One record holding every tolerance the crate uses.
///
/// Module functions take `&Tolerances` where a caller may want to override a
/// threshold; otherwise they use [`Tolerances::DEFAULT`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Maximum deviation from Hermiticity accepted before symmetrization.
    pub hermitian: f64,
    /// Eigenvalues above `-psd` count as non-negative.
    pub psd: f64,
    /// Allowed deviation of a trace from one.
    pub trace: f64,
    /// Allowed deviation of `Σ M†M` from the identity.
    pub trace_preservation: f64,
    /// Idempotence residual accepted for orthogonal projectors.
    pub projector: f64,
    /// Probabilities at or below this value are treated as zero.
    pub prob_floor: f64,
    /// KKT stopping threshold, relative to the number of trajectories.
    pub kkt: f64,
    /// Iteration cap of the maximum-likelihood optimizer.
    pub max_iterations: usize,
    /// Rank threshold, relative to the largest eigenvalue of the estimate.
    pub rank: f64,
    /// Pseudo-inverse cut, relative to the largest singular value.
    pub singular_value: f64,
    /// Null-space component (relative to the vector norm) above which an
    /// observable is reported as unidentifiable.
    pub null_component: f64,
    /// Drop tolerance of the Gram–Schmidt pass building tangent bases.
    pub gram_schmidt: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        hermitian: 1e-12,
        psd: 1e-10,
        trace: 1e-10,
        trace_preservation: 1e-9,
        projector: 1e-10,
        prob_floor: 1e-300,
        kkt: 1e-7,
        max_iterations: 10_000,
        rank: 1e-8,
        singular_value: 1e-10,
        null_component: 1e-8,
        gram_schmidt: 1e-10,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
