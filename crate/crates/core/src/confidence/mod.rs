//! Laplace-approximate Bayesian variances of observables at the
//! maximum-likelihood estimate.
//!
//! The variance of `tr(ρ A)` is `σ² = tr(A_∥ R⁻¹(A_∥))`, where `A_∥` is the
//! projection of `A` onto the tangent space at `ρ_ML` of the manifold of
//! unit-trace operators with the rank of `ρ_ML`, and
//!
//! ```text
//! R(X) = Σ_n tr(X E_∥)/tr²(ρ E) · E_∥ + G X ρ⁺ + ρ⁺ X G,    G = λ I − ∇f.
//! ```
//!
//! `R` restricted to the tangent space is the negative Riemannian Hessian of
//! the log-likelihood. The second part carries the curvature of the boundary
//! and vanishes at full rank.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::maxlike::{EffectSet, TomographyResult};
use crate::operators::{hermitian_basis, tangent_project_unchecked, HermitianOperator};
use crate::tolerances::Tolerances;

pub mod oracle;

pub use oracle::{bayesian_mc_oracle, OracleEstimate, OracleOptions, Prior};

/// Orthonormal basis of the tangent space, stored as rows of isometric
/// coordinates (Frobenius products become dot products).
#[derive(Debug, Clone)]
pub struct TangentBasis {
    dim: usize,
    rows: DMatrix<f64>,
}

impl TangentBasis {
    /// Projects the traceless Hermitian basis onto the tangent space at a state
    /// with range projector `p`, then orthonormalizes (Gram–Schmidt) and drops
    /// vectors whose residual norm is below `drop_tol`.
    pub fn new(p: &HermitianOperator, drop_tol: f64) -> Self {
        let n = p.dim();
        let d2 = n * n;
        let basis = hermitian_basis(n);
        let mut kept: Vec<DVector<f64>> = Vec::new();
        for b in basis.traceless() {
            let projected = tangent_project_unchecked(b.matrix(), p.matrix());
            let mut v = linalg::hvec(projected.matrix());
            // two passes for numerical orthogonality
            for _ in 0..2 {
                for u in &kept {
                    let c = u.dot(&v);
                    v.axpy(-c, u, 1.0);
                }
            }
            let norm = v.norm();
            if norm > drop_tol {
                kept.push(v / norm);
            }
        }
        let mut rows = DMatrix::zeros(kept.len(), d2);
        for (i, u) in kept.iter().enumerate() {
            rows.set_row(i, &u.transpose());
        }
        Self { dim: n, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn element(&self, i: usize) -> HermitianOperator {
        let v: Vec<f64> = self.rows.row(i).iter().copied().collect();
        HermitianOperator::from_matrix_unchecked(linalg::unhvec(&v, self.dim))
    }

    /// Coordinates `⟨B_i, X⟩` of the tangent projection of `X`.
    pub fn coordinates(&self, x: &HermitianOperator) -> DVector<f64> {
        &self.rows * linalg::hvec(x.matrix())
    }

    pub fn from_coordinates(&self, c: &DVector<f64>) -> HermitianOperator {
        let v = self.rows.tr_mul(c);
        HermitianOperator::from_matrix_unchecked(linalg::unhvec(v.as_slice(), self.dim))
    }

    pub(crate) fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

/// `R` restricted to the tangent space, in the tangent basis.
#[derive(Debug, Clone)]
pub struct RMatrix {
    pub basis: TangentBasis,
    pub matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl RMatrix {
    pub fn dim_tangent(&self) -> usize {
        self.basis.len()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn cut(&self, rel: f64) -> f64 {
        let largest = self
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        rel * largest
    }

    /// Quadratic form `aᵀ R⁺ a` with the null-space check; `a` are tangent
    /// coordinates.
    pub fn inverse_form(&self, a: &DVector<f64>, tol: &Tolerances) -> Result<f64> {
        let norm = a.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let cut = self.cut(tol.singular_value);
        let mut null2 = 0.0;
        let mut total = 0.0;
        for (k, &v) in self.eigenvalues.iter().enumerate() {
            let c = self.eigenvectors.column(k).dot(a);
            if v > cut {
                total += c * c / v;
            } else {
                null2 += c * c;
            }
        }
        let null = null2.sqrt() / norm;
        if null > tol.null_component {
            return Err(Error::Unidentifiable(null));
        }
        Ok(total)
    }

    /// `R⁺` as a matrix in the tangent basis.
    pub fn pseudo_inverse(&self, tol: &Tolerances) -> DMatrix<f64> {
        let cut = self.cut(tol.singular_value);
        let k = self.eigenvalues.len();
        let mut out = DMatrix::zeros(k, k);
        for (j, &v) in self.eigenvalues.iter().enumerate() {
            if v > cut {
                let u = self.eigenvectors.column(j);
                out += (u * u.transpose()) / v;
            }
        }
        out
    }
}

/// Estimate of one observable with its 95% half-width `2σ`.
#[derive(Debug, Clone)]
pub struct ObservableInterval {
    pub observable: HermitianOperator,
    pub mean: f64,
    pub variance: f64,
    pub half_width_95: f64,
}

impl ObservableInterval {
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn lo95(&self) -> f64 {
        self.mean - self.half_width_95
    }

    pub fn hi95(&self) -> f64 {
        self.mean + self.half_width_95
    }
}

pub fn build_r(result: &TomographyResult, effects: &EffectSet) -> RMatrix {
    build_r_with(result, effects, &Tolerances::DEFAULT)
}

pub fn build_r_with(result: &TomographyResult, effects: &EffectSet, tol: &Tolerances) -> RMatrix {
    let n = result.rho_ml.dim();
    let basis = TangentBasis::new(&result.range_projector, tol.gram_schmidt);
    let k = basis.len();

    // Data term: Cᵀ diag(w/p²) C with C the tangent coordinates of the effects.
    let coords = effects.coordinates() * basis.rows().transpose();
    let p = effects.traces(result.rho_ml.as_operator());
    let mut scaled = coords.clone();
    for i in 0..coords.nrows() {
        let s = effects.weight(i) / (p[i] * p[i]);
        for j in 0..k {
            scaled[(i, j)] *= s;
        }
    }
    let mut matrix = coords.tr_mul(&scaled);

    if result.rank < n && k > 0 {
        let g = linalg::identity(n) * Complex64::new(result.lambda_ml, 0.0) - result.grad_ml.matrix();
        let pinv = result.rho_pinv();
        let mut images = DMatrix::zeros(k, n * n);
        for j in 0..k {
            let b = basis.element(j);
            let x = b.matrix();
            let term: CMatrix = &g * x * &pinv + &pinv * x * &g;
            images.set_row(j, &linalg::hvec(&linalg::hermitize(&term)).transpose());
        }
        matrix += basis.rows() * images.transpose();
    }
    let sym = (&matrix + matrix.transpose()) * 0.5;
    let (eigenvalues, eigenvectors) = linalg::eigh_real(&sym);
    RMatrix {
        basis,
        matrix: sym,
        eigenvalues,
        eigenvectors,
    }
}

/// `σ²_ML(A)` and the estimate `tr(ρ_ML A)`.
pub fn variance(
    a: &HermitianOperator,
    r: &RMatrix,
    result: &TomographyResult,
) -> Result<ObservableInterval> {
    variance_with(a, r, result, &Tolerances::DEFAULT)
}

pub fn variance_with(
    a: &HermitianOperator,
    r: &RMatrix,
    result: &TomographyResult,
    tol: &Tolerances,
) -> Result<ObservableInterval> {
    if a.dim() != result.rho_ml.dim() {
        return Err(Error::DimensionMismatch {
            expected: result.rho_ml.dim(),
            found: a.dim(),
        });
    }
    let coords = r.basis.coordinates(a);
    let var = r.inverse_form(&coords, tol)?.max(0.0);
    Ok(ObservableInterval {
        observable: a.clone(),
        mean: result.rho_ml.expectation(a),
        variance: var,
        half_width_95: 2.0 * var.sqrt(),
    })
}

#[cfg(test)]
mod tests;
