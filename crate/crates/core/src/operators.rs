//! Hermitian operator algebra, density and effect matrices, Kraus families,
//! tangent-space projection and orthonormal Hermitian bases.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE, ZERO};
use crate::tolerances::Tolerances;

/// Dense Hermitian matrix. Construction symmetrizes to `(M + M†)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.nrows() == 0 {
            return Err(Error::InvalidParameter("empty operator".into()));
        }
        Ok(Self::from_matrix_unchecked(linalg::hermitize(&matrix)))
    }

    /// Wraps a matrix already known to be Hermitian (it is still symmetrized).
    pub(crate) fn from_matrix_unchecked(mut matrix: CMatrix) -> Self {
        linalg::hermitize_in_place(&mut matrix);
        Self { matrix }
    }

    pub fn from_real_rows(n: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: rows.len(),
            });
        }
        let data: Vec<Complex64> = rows.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        Self::new(CMatrix::from_row_slice(n, n, &data))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: linalg::identity(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(n, n),
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut matrix = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            matrix[(i, i)] = Complex64::new(v, 0.0);
        }
        Self { matrix }
    }

    /// `|ψ⟩⟨ψ|` for an (unnormalized) vector.
    pub fn outer(psi: &[Complex64]) -> Self {
        let n = psi.len();
        let mut matrix = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        Self::from_matrix_unchecked(matrix)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        linalg::trace_re(&self.matrix)
    }

    /// `tr(self · other)`.
    pub fn trace_with(&self, other: &HermitianOperator) -> f64 {
        linalg::trace_product(&self.matrix, &other.matrix)
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &HermitianOperator) -> f64 {
        linalg::frobenius(&self.matrix, &other.matrix)
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Eigenvalues (ascending) and eigenvectors as columns.
    pub fn eigh(&self) -> (Vec<f64>, CMatrix) {
        linalg::eigh(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigh().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigh().0.last().expect("non-empty operator")
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            matrix: &self.matrix * Complex64::new(c, 0.0),
        }
    }

    /// Commutator norm `‖[A, B]‖_F`.
    pub fn commutator_norm(&self, other: &HermitianOperator) -> f64 {
        (&self.matrix * &other.matrix - &other.matrix * &self.matrix).norm()
    }

    /// Max-abs distance between two operators.
    pub fn max_abs_diff(&self, other: &HermitianOperator) -> f64 {
        linalg::max_abs(&(&self.matrix - &other.matrix))
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if self.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Add<&HermitianOperator> for HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            matrix: self.matrix + &rhs.matrix,
        }
    }
}

impl Sub<&HermitianOperator> for HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: &HermitianOperator) -> HermitianOperator {
        HermitianOperator {
            matrix: self.matrix - &rhs.matrix,
        }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scale(rhs)
    }
}

/// Pauli matrices and the identity, in the basis where `σ_z = diag(1, −1)`.
pub mod pauli {
    use super::*;

    pub fn x() -> HermitianOperator {
        HermitianOperator::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn y() -> HermitianOperator {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[ZERO, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), ZERO],
        );
        HermitianOperator::from_matrix_unchecked(m)
    }

    pub fn z() -> HermitianOperator {
        HermitianOperator::diagonal(&[1.0, -1.0])
    }

    /// `σ_x, σ_y, σ_z`.
    pub fn all() -> [HermitianOperator; 3] {
        [x(), y(), z()]
    }
}

fn check_positive(op: &HermitianOperator, tol: &Tolerances, what: &str) -> Result<()> {
    let tr = op.trace();
    if (tr - 1.0).abs() > tol.trace {
        return Err(Error::InvalidState(format!("{what} trace is {tr}")));
    }
    let min = op.min_eigenvalue();
    if min < -tol.psd {
        return Err(Error::InvalidState(format!(
            "{what} has eigenvalue {min:e}"
        )));
    }
    Ok(())
}

/// Positive semidefinite Hermitian operator of unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    base: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(base: HermitianOperator) -> Result<Self> {
        check_positive(&base, &Tolerances::DEFAULT, "density matrix")?;
        Ok(Self { base })
    }

    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(matrix)?)
    }

    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self {
            base: HermitianOperator::from_matrix_unchecked(matrix),
        }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            base: HermitianOperator::identity(n).scale(1.0 / n as f64),
        }
    }

    /// Pure state from a state vector; the vector is normalized.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        Ok(Self {
            base: HermitianOperator::outer(psi).scale(1.0 / norm2),
        })
    }

    pub fn diagonal(probabilities: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::diagonal(probabilities))
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_operator(&self) -> &HermitianOperator {
        &self.base
    }

    pub fn matrix(&self) -> &CMatrix {
        self.base.matrix()
    }

    pub fn into_operator(self) -> HermitianOperator {
        self.base
    }

    /// `tr(ρ A)`.
    pub fn expectation(&self, observable: &HermitianOperator) -> f64 {
        self.base.trace_with(observable)
    }

    /// Convex combination `w·self + (1−w)·other`.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> DensityMatrix {
        DensityMatrix::from_trusted(
            self.matrix() * Complex64::new(w, 0.0) + other.matrix() * Complex64::new(1.0 - w, 0.0),
        )
    }
}

/// Positive semidefinite Hermitian operator of unit trace obtained by
/// backward filtering; plays the role of a POVM element.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectMatrix {
    base: HermitianOperator,
}

impl EffectMatrix {
    pub fn new(base: HermitianOperator) -> Result<Self> {
        check_positive(&base, &Tolerances::DEFAULT, "effect matrix")?;
        Ok(Self { base })
    }

    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self {
            base: HermitianOperator::from_matrix_unchecked(matrix),
        }
    }

    /// `I / n`.
    pub fn uninformative(n: usize) -> Self {
        Self {
            base: HermitianOperator::identity(n).scale(1.0 / n as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn as_operator(&self) -> &HermitianOperator {
        &self.base
    }

    pub fn matrix(&self) -> &CMatrix {
        self.base.matrix()
    }
}

/// Sparse superoperator `S = Σ_k M_k ⊗ conj(M_k)` acting on row-major vectorized
/// matrices; used when the Kraus operators are sparse.
#[derive(Debug, Clone)]
struct SparseSuperop {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseSuperop {
    fn build(n: usize, ops: &[CMatrix]) -> Self {
        let mut acc: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        for m in ops {
            let nz: Vec<(usize, usize, Complex64)> = (0..n)
                .flat_map(|a| (0..n).map(move |c| (a, c)))
                .filter_map(|(a, c)| {
                    let v = m[(a, c)];
                    (v != ZERO).then_some((a, c, v))
                })
                .collect();
            for &(a, c, mac) in &nz {
                for &(b, d, mbd) in &nz {
                    *acc.entry((a * n + b, c * n + d)).or_insert(ZERO) += mac * mbd.conj();
                }
            }
        }
        Self {
            entries: acc
                .into_iter()
                .filter(|(_, v)| *v != ZERO)
                .map(|((r, c), v)| (r, c, v))
                .collect(),
        }
    }

    fn apply(&self, x: &CMatrix, adjoint: bool) -> CMatrix {
        let n = x.nrows();
        let mut out = CMatrix::zeros(n, n);
        // nalgebra is column-major; index explicitly.
        for &(row, col, v) in &self.entries {
            if adjoint {
                let (a, b) = (row / n, row % n);
                let (c, d) = (col / n, col % n);
                out[(c, d)] += v.conj() * x[(a, b)];
            } else {
                let (a, b) = (row / n, row % n);
                let (c, d) = (col / n, col % n);
                out[(a, b)] += v * x[(c, d)];
            }
        }
        out
    }
}

/// One time step of a Kraus family: for every outcome `y`, the operators
/// `M_{y,k}` with `K_y(ρ) = Σ_k M_{y,k} ρ M_{y,k}†`.
#[derive(Debug, Clone)]
pub struct KrausStep {
    dim: usize,
    labels: Vec<String>,
    ops: Vec<Vec<CMatrix>>,
    ops_adjoint: Vec<Vec<CMatrix>>,
    sparse: Vec<Option<SparseSuperop>>,
}

impl KrausStep {
    /// Validates dimensions and trace preservation `Σ_y Σ_k M†M = I`.
    pub fn new(dim: usize, outcomes: Vec<(String, Vec<CMatrix>)>) -> Result<Self> {
        Self::with_tolerance(dim, outcomes, Tolerances::DEFAULT.trace_preservation)
    }

    pub fn with_tolerance(
        dim: usize,
        outcomes: Vec<(String, Vec<CMatrix>)>,
        tolerance: f64,
    ) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidParameter("step with no outcomes".into()));
        }
        let mut total = CMatrix::zeros(dim, dim);
        for (_, ops) in &outcomes {
            for m in ops {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                total += m.adjoint() * m;
            }
        }
        let deviation = linalg::max_abs(&(total - linalg::identity(dim)));
        if deviation > tolerance {
            return Err(Error::NotTracePreserving { step: 0, deviation });
        }
        let (labels, ops): (Vec<String>, Vec<Vec<CMatrix>>) = outcomes.into_iter().unzip();
        let ops_adjoint = ops
            .iter()
            .map(|list| list.iter().map(|m| m.adjoint()).collect())
            .collect();
        let sparse = ops
            .iter()
            .map(|list| {
                let nnz: usize = list
                    .iter()
                    .map(|m| m.iter().filter(|z| **z != ZERO).count().pow(2))
                    .sum();
                let dense_cost = 2 * dim.pow(3) * list.len().max(1);
                (nnz < dense_cost).then(|| SparseSuperop::build(dim, list))
            })
            .collect();
        Ok(Self {
            dim,
            labels,
            ops,
            ops_adjoint,
            sparse,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_outcomes(&self) -> usize {
        self.labels.len()
    }

    pub fn outcome_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn kraus_ops(&self, y: usize) -> &[CMatrix] {
        &self.ops[y]
    }

    /// `K_y(X)` or, with `adjoint`, `K*_y(X)`; no validation.
    pub(crate) fn apply_raw(&self, y: usize, x: &CMatrix, adjoint: bool) -> CMatrix {
        if let Some(sp) = &self.sparse[y] {
            let mut out = sp.apply(x, adjoint);
            linalg::hermitize_in_place(&mut out);
            return out;
        }
        let n = self.dim;
        let mut out = CMatrix::zeros(n, n);
        let mut tmp = CMatrix::zeros(n, n);
        let (left, right) = if adjoint {
            (&self.ops_adjoint[y], &self.ops[y])
        } else {
            (&self.ops[y], &self.ops_adjoint[y])
        };
        for (l, r) in left.iter().zip(right) {
            tmp.gemm(ONE, l, x, ZERO);
            out.gemm(ONE, &tmp, r, ONE);
        }
        linalg::hermitize_in_place(&mut out);
        out
    }
}

/// Time-indexed sequence of Kraus steps. Identical steps may be shared.
#[derive(Debug, Clone)]
pub struct KrausFamily {
    dim: usize,
    steps: Vec<Arc<KrausStep>>,
}

impl KrausFamily {
    pub fn new(dim: usize, steps: Vec<KrausStep>) -> Result<Self> {
        Self::from_shared(dim, steps.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(dim: usize, steps: Vec<Arc<KrausStep>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidParameter("family with no steps".into()));
        }
        for s in &steps {
            if s.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim,
                });
            }
        }
        Ok(Self { dim, steps })
    }

    /// The same step repeated `n_steps` times.
    pub fn stationary(step: KrausStep, n_steps: usize) -> Result<Self> {
        let dim = step.dim;
        let shared = Arc::new(step);
        Self::from_shared(dim, vec![shared; n_steps])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, t: usize) -> Result<&KrausStep> {
        self.steps
            .get(t)
            .map(|s| s.as_ref())
            .ok_or(Error::StepOutOfRange {
                step: t,
                len: self.steps.len(),
            })
    }

    pub fn outcome_index(&self, t: usize, label: &str) -> Result<usize> {
        self.step(t)?
            .outcome_index(label)
            .ok_or_else(|| Error::UnknownOutcome {
                step: t,
                outcome: label.to_string(),
            })
    }

    pub(crate) fn checked(&self, t: usize, y: usize, x: &HermitianOperator) -> Result<&KrausStep> {
        x.check_dim(self.dim)?;
        let step = self.step(t)?;
        if y >= step.n_outcomes() {
            return Err(Error::UnknownOutcome {
                step: t,
                outcome: y.to_string(),
            });
        }
        Ok(step)
    }
}

/// `K_{y,t}(X) = Σ_k M X M†`.
pub fn apply_cp_map(
    family: &KrausFamily,
    t: usize,
    y: usize,
    x: &HermitianOperator,
) -> Result<HermitianOperator> {
    let step = family.checked(t, y, x)?;
    Ok(HermitianOperator::from_matrix_unchecked(
        step.apply_raw(y, x.matrix(), false),
    ))
}

/// `K*_{y,t}(X) = Σ_k M† X M`.
pub fn apply_adjoint_cp_map(
    family: &KrausFamily,
    t: usize,
    y: usize,
    x: &HermitianOperator,
) -> Result<HermitianOperator> {
    let step = family.checked(t, y, x)?;
    Ok(HermitianOperator::from_matrix_unchecked(
        step.apply_raw(y, x.matrix(), true),
    ))
}

/// Checks that `p` is an orthogonal projector.
pub fn check_projector(p: &HermitianOperator, tol: f64) -> Result<()> {
    let m = p.matrix();
    let residual = linalg::max_abs(&(m * m - m));
    if residual > tol {
        return Err(Error::NotProjector(residual));
    }
    Ok(())
}

/// Orthogonal projection of `B` onto the tangent space at a state with range
/// projector `P`: `B − tr(BP)/tr(P)·P − (I−P) B (I−P)`.
pub fn tangent_project(b: &HermitianOperator, p: &HermitianOperator) -> Result<HermitianOperator> {
    if b.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: b.dim(),
        });
    }
    check_projector(p, Tolerances::DEFAULT.projector)?;
    Ok(tangent_project_unchecked(b.matrix(), p.matrix()))
}

pub(crate) fn tangent_project_unchecked(b: &CMatrix, p: &CMatrix) -> HermitianOperator {
    let n = b.nrows();
    let q = linalg::identity(n) - p;
    let tr_p = linalg::trace_re(p);
    let coef = if tr_p > 0.0 {
        linalg::trace_product(b, p) / tr_p
    } else {
        0.0
    };
    let out = b - p * Complex64::new(coef, 0.0) - &q * b * &q;
    HermitianOperator::from_matrix_unchecked(out)
}

/// Nearest density matrix in Frobenius norm.
pub fn project_to_density(x: &HermitianOperator) -> DensityMatrix {
    let (values, vectors) = x.eigh();
    let projected = linalg::simplex_projection(&values);
    DensityMatrix::from_trusted(linalg::recompose(&projected, &vectors))
}

/// Orthonormal basis of Hermitian matrices (Frobenius product): `I/√n` first,
/// then the traceless generalized Gell-Mann matrices (symmetric and
/// antisymmetric off-diagonal pairs, then the diagonal ones).
#[derive(Debug, Clone)]
pub struct HermitianBasis {
    dim: usize,
    elements: Vec<HermitianOperator>,
}

impl HermitianBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    /// Traceless elements `1..n²`.
    pub fn traceless(&self) -> &[HermitianOperator] {
        &self.elements[1..]
    }

    /// Coefficients `⟨B_i, X⟩`.
    pub fn coordinates(&self, x: &HermitianOperator) -> Vec<f64> {
        self.elements.iter().map(|b| b.inner(x)).collect()
    }

    pub fn from_coordinates(&self, coefficients: &[f64]) -> HermitianOperator {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (b, &c) in self.elements.iter().zip(coefficients) {
            out += b.matrix() * Complex64::new(c, 0.0);
        }
        HermitianOperator::from_matrix_unchecked(out)
    }
}

pub fn hermitian_basis(dim: usize) -> HermitianBasis {
    assert!(dim >= 1, "basis dimension must be positive");
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut elements = Vec::with_capacity(dim * dim);
    elements.push(HermitianOperator::identity(dim).scale(1.0 / (dim as f64).sqrt()));
    for j in 0..dim {
        for k in j + 1..dim {
            let mut sym = CMatrix::zeros(dim, dim);
            sym[(j, k)] = Complex64::new(s, 0.0);
            sym[(k, j)] = Complex64::new(s, 0.0);
            elements.push(HermitianOperator::from_matrix_unchecked(sym));
            let mut anti = CMatrix::zeros(dim, dim);
            anti[(j, k)] = Complex64::new(0.0, -s);
            anti[(k, j)] = Complex64::new(0.0, s);
            elements.push(HermitianOperator::from_matrix_unchecked(anti));
        }
    }
    for l in 1..dim {
        let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; dim];
        for d in diag.iter_mut().take(l) {
            *d = norm;
        }
        diag[l] = -(l as f64) * norm;
        elements.push(HermitianOperator::diagonal(&diag));
    }
    HermitianBasis { dim, elements }
}
