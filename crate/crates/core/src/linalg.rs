//! Dense Hermitian helpers: eigendecomposition, simplex projection, and the
//! real isometric vectorization used for fast trace evaluations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub(crate) fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// `(M + M†)/2`.
pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    hermitize_in_place(&mut out);
    out
}

pub(crate) fn hermitize_in_place(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in i + 1..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn trace_re(m: &CMatrix) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].re).sum()
}

/// Real part of `tr(A B)` for square matrices, without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)] * b[(j, i)];
            acc += x.re;
        }
    }
    acc
}

/// Frobenius inner product `Re tr(A† B)`.
pub(crate) fn frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending order.
pub(crate) fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 1 {
        return (vec![m[(0, 0)].re], identity(1));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Eigendecomposition of a real symmetric matrix, ascending.
pub(crate) fn eigh_real(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Smallest eigenvalue; closed form for 2×2.
pub(crate) fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 2 {
        let a = m[(0, 0)].re;
        let d = m[(1, 1)].re;
        let b = m[(0, 1)].norm();
        let mean = 0.5 * (a + d);
        let half = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return mean - half;
    }
    eigh(m).0[0]
}

/// `V diag(values) V†`.
pub(crate) fn recompose(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = vectors.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        for i in 0..n {
            let vi = v[i] * lam;
            for j in 0..n {
                out[(i, j)] += vi * v[j].conj();
            }
        }
    }
    hermitize_in_place(&mut out);
    out
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub(crate) fn simplex_projection(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate = (cumulative - 1.0) / (k as f64 + 1.0);
        if value - candidate > 0.0 {
            theta = candidate;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Isometric real vectorization of a Hermitian matrix: diagonal entries,
/// then `√2 Re` and `√2 Im` of each upper off-diagonal entry. Frobenius inner
/// products of Hermitian matrices become Euclidean dot products.
pub(crate) fn hvec(m: &CMatrix) -> DVector<f64> {
    let n = m.nrows();
    let mut out = DVector::zeros(n * n);
    hvec_into(m, out.as_mut_slice());
    out
}

pub(crate) fn hvec_into(m: &CMatrix, out: &mut [f64]) {
    let n = m.nrows();
    let s = std::f64::consts::SQRT_2;
    for i in 0..n {
        out[i] = m[(i, i)].re;
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = m[(i, j)];
            out[k] = s * z.re;
            out[k + 1] = s * z.im;
            k += 2;
        }
    }
}

pub(crate) fn unhvec(v: &[f64], n: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(v[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in i + 1..n {
            let z = Complex64::new(v[k] * s, v[k + 1] * s);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Principal square root of a PSD matrix (negative eigenvalues clipped).
pub(crate) fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let (values, vectors) = eigh(m);
    let roots: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    recompose(&roots, &vectors)
}

/// Inverse square root of a positive definite matrix.
pub(crate) fn inv_sqrt_pd(m: &CMatrix) -> Option<CMatrix> {
    let (values, vectors) = eigh(m);
    if values[0] <= 0.0 {
        return None;
    }
    let roots: Vec<f64> = values.iter().map(|&v| 1.0 / v.sqrt()).collect();
    Some(recompose(&roots, &vectors))
}
