//! Closed-form qubit specialization in Bloch coordinates,
//! `ρ = (I + v·σ)/2`.
//!
//! An effect `E = (e₀ I + e·σ)/2` enters only through `e/e₀`, so effects are
//! stored as trace-normalized Bloch vectors with a weight.
//!
//! Conventions relative to the generic operator path:
//! - [`gradient_bloch`] returns `Σ w e/(1 + v·e)`, which is half the Bloch
//!   image `tr(∇f σ_i)` of the operator gradient.
//! - [`variance_bloch`] uses `R = Σ w e∥e∥ᵀ/(1 + v·e)²` (plus `λ_b(I − vvᵀ)`
//!   on the sphere, with `λ_b = v·g`). In coordinates `σ_i/√2` the generic `R`
//!   is exactly twice this matrix, and for `A = a₀I + a·σ` both paths give
//!   `σ² = a∥ᵀ R⁺ a∥`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maxlike::EffectSet;
use crate::operators::{pauli, DensityMatrix, HermitianOperator};
use crate::tolerances::Tolerances;

/// `1 − |v|` below which the boundary branch is used.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Self { x, y, z };
        let r2 = v.norm_squared();
        if !(r2 <= 1.0 + 1e-10) {
            return Err(Error::InvalidState(format!(
                "Bloch vector of length {} is outside the unit ball",
                r2.sqrt()
            )));
        }
        Ok(v)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: rho.dim(),
            });
        }
        let [x, y, z] = pauli::all().map(|s| rho.expectation(&s));
        Self::new(x, y, z)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_trusted(self.operator(1.0).into_matrix())
    }

    /// Trace-normalized Bloch vector of a positive qubit operator.
    pub fn from_effect(e: &HermitianOperator) -> Result<Self> {
        if e.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: e.dim(),
            });
        }
        let tr = e.trace();
        if !(tr > 0.0) {
            return Err(Error::InvalidState("effect has non-positive trace".into()));
        }
        let [x, y, z] = pauli::all().map(|s| e.trace_with(&s) / tr);
        Self::new(x, y, z)
    }

    /// `(e₀ I + v·σ)/2`.
    fn operator(&self, e0: f64) -> HermitianOperator {
        let m = nalgebra::Matrix2::new(
            Complex64::new(e0 + self.z, 0.0),
            Complex64::new(self.x, -self.y),
            Complex64::new(self.x, self.y),
            Complex64::new(e0 - self.z, 0.0),
        ) * Complex64::new(0.5, 0.0);
        HermitianOperator::from_matrix_unchecked(crate::CMatrix::from_iterator(2, 2, m.iter().copied()))
    }
}

/// Weighted Bloch effects of a qubit effect set.
pub fn effects_from_set(set: &EffectSet) -> Result<Vec<(BlochVector, f64)>> {
    (0..set.len())
        .map(|i| Ok((BlochVector::from_effect(&set.effect(i))?, set.weight(i))))
        .collect()
}

/// Pauli coefficients `a` of `A = a₀I + a·σ`.
pub fn observable_coefficients(a: &HermitianOperator) -> Result<Vector3<f64>> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: a.dim(),
        });
    }
    let [x, y, z] = pauli::all().map(|s| 0.5 * a.trace_with(&s));
    Ok(Vector3::new(x, y, z))
}

fn denominators(v: &BlochVector, effects: &[(BlochVector, f64)]) -> Result<Vec<f64>> {
    effects
        .iter()
        .enumerate()
        .map(|(index, (e, _))| {
            let d = 1.0 + v.dot(e);
            if d > 0.0 {
                Ok(d)
            } else {
                Err(Error::DegenerateTrace { index })
            }
        })
        .collect()
}

/// `Σ w e/(1 + v·e)`.
pub fn gradient_bloch(v: &BlochVector, effects: &[(BlochVector, f64)]) -> Result<Vector3<f64>> {
    let d = denominators(v, effects)?;
    Ok(effects
        .iter()
        .zip(&d)
        .fold(Vector3::zeros(), |acc, ((e, w), d)| acc + e.to_vector() * (w / d)))
}

/// True on the sphere, where the boundary branch applies.
pub fn on_boundary(v: &BlochVector) -> bool {
    1.0 - v.norm() < BOUNDARY_TOL
}

/// The 3×3 matrix `R` of the branch selected by `v`.
pub fn r_matrix_bloch(v: &BlochVector, effects: &[(BlochVector, f64)]) -> Result<Matrix3<f64>> {
    let d = denominators(v, effects)?;
    if !on_boundary(v) {
        return Ok(effects.iter().zip(&d).fold(Matrix3::zeros(), |acc, ((e, w), d)| {
            let e = e.to_vector();
            acc + e * e.transpose() * (w / (d * d))
        }));
    }
    let u = v.to_vector() / v.norm();
    let radial = Matrix3::identity() - u * u.transpose();
    let g = gradient_bloch(v, effects)?;
    let lambda_b = g.dot(&u);
    if lambda_b <= 0.0 {
        log::warn!("boundary curvature λ = {lambda_b:e} is not positive; variance is unreliable");
    }
    let data = effects.iter().zip(&d).fold(Matrix3::zeros(), |acc, ((e, w), d)| {
        let par = radial * e.to_vector();
        acc + par * par.transpose() * (w / (d * d))
    });
    Ok(data + radial * lambda_b)
}

/// `σ²` of `A = a₀I + a·σ` at the estimate `v_ml`, with `a = (a_x, a_y, a_z)`.
pub fn variance_bloch(v_ml: &BlochVector, effects: &[(BlochVector, f64)], a: &Vector3<f64>) -> Result<f64> {
    variance_bloch_with(v_ml, effects, a, &Tolerances::DEFAULT)
}

pub fn variance_bloch_with(
    v_ml: &BlochVector,
    effects: &[(BlochVector, f64)],
    a: &Vector3<f64>,
    tol: &Tolerances,
) -> Result<f64> {
    let r = r_matrix_bloch(v_ml, effects)?;
    let a_par = if on_boundary(v_ml) {
        let u = v_ml.to_vector() / v_ml.norm();
        a - u * u.dot(a)
    } else {
        *a
    };
    let norm = a_par.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(r);
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = tol.singular_value * largest;
    let mut total = 0.0;
    let mut null2 = 0.0;
    for k in 0..3 {
        let c = eig.eigenvectors.column(k).dot(&a_par);
        let lam = eig.eigenvalues[k];
        if lam > cut {
            total += c * c / lam;
        } else {
            null2 += c * c;
        }
    }
    let null = null2.sqrt() / norm;
    if null > tol.null_component {
        return Err(Error::Unidentifiable(null));
    }
    Ok(total.max(0.0))
}
