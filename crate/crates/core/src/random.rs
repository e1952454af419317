//! Random instances for tests and validation: Hermitian matrices, states,
//! projectors, Kraus families and POVMs.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, CMatrix};
use crate::operators::{DensityMatrix, HermitianOperator, KrausFamily, KrausStep};

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ginibre matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_complex(rng))
}

/// Hermitian matrix `(G + G†)/2` from a Ginibre `G`.
pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianOperator {
    HermitianOperator::new(ginibre(n, n, rng)).expect("square")
}

/// Traceless Hermitian matrix of unit Frobenius norm.
pub fn traceless_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianOperator {
    let h = hermitian(n, rng);
    let shifted = &h - &HermitianOperator::identity(n).scale(h.trace() / n as f64);
    let norm = shifted.norm();
    shifted.scale(1.0 / norm)
}

/// Hilbert–Schmidt distributed full-rank density matrix `G G† / tr`.
pub fn density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    density_with_rank(n, n, rng)
}

/// Density matrix of rank `rank` (Ginibre `n × rank`).
pub fn density_with_rank<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(n, rank, rng);
    let m = &g * g.adjoint();
    let tr = linalg::trace_re(&m);
    DensityMatrix::from_trusted(m / Complex64::new(tr, 0.0))
}

pub fn pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix {
    density_with_rank(n, 1, rng)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(n, n, rng).qr();
    let (q, r) = qr.unpack();
    let mut q = q;
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { linalg::ONE };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Orthogonal projector of the given rank onto a random subspace.
pub fn projector<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> HermitianOperator {
    let u = unitary(n, rng);
    let cols = u.columns(0, rank);
    HermitianOperator::from_matrix_unchecked(&cols * cols.adjoint())
}

/// Random trace-preserving step: Gaussian `G_{y,k}` normalized by `S^{-1/2}`
/// with `S = Σ G†G`.
pub fn kraus_step<R: Rng + ?Sized>(
    dim: usize,
    n_outcomes: usize,
    ops_per_outcome: usize,
    rng: &mut R,
) -> KrausStep {
    let raw: Vec<Vec<CMatrix>> = (0..n_outcomes)
        .map(|_| (0..ops_per_outcome).map(|_| ginibre(dim, dim, rng)).collect())
        .collect();
    let mut s = CMatrix::zeros(dim, dim);
    for list in &raw {
        for g in list {
            s += g.adjoint() * g;
        }
    }
    let inv_sqrt = linalg::inv_sqrt_pd(&s).expect("Gaussian Gram matrix is positive definite");
    let outcomes = raw
        .into_iter()
        .enumerate()
        .map(|(y, list)| {
            (
                format!("y{y}"),
                list.into_iter().map(|g| g * &inv_sqrt).collect(),
            )
        })
        .collect();
    KrausStep::new(dim, outcomes).expect("normalized step is trace preserving")
}

pub fn kraus_family<R: Rng + ?Sized>(
    dim: usize,
    n_steps: usize,
    n_outcomes: usize,
    ops_per_outcome: usize,
    rng: &mut R,
) -> KrausFamily {
    let steps = (0..n_steps)
        .map(|_| kraus_step(dim, n_outcomes, ops_per_outcome, rng))
        .collect();
    KrausFamily::new(dim, steps).expect("consistent dimensions")
}

/// Random POVM with `n_outcomes` full-rank elements.
pub fn povm<R: Rng + ?Sized>(dim: usize, n_outcomes: usize, rng: &mut R) -> Vec<HermitianOperator> {
    let step = kraus_step(dim, n_outcomes, 1, rng);
    (0..n_outcomes)
        .map(|y| {
            let m = &step.kraus_ops(y)[0];
            HermitianOperator::from_matrix_unchecked(m.adjoint() * m)
        })
        .collect()
}
