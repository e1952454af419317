//! Maximum-likelihood estimation over the set of density matrices and the
//! first-order optimality certificate.
//!
//! The optimizer is a spectral projected gradient ascent: Barzilai–Borwein
//! step lengths, projection onto density matrices, and Armijo backtracking
//! along the projected direction. Every iterate is feasible and the objective
//! is non-decreasing.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::AdjointResult;
use crate::linalg::{self, CMatrix};
use crate::operators::{project_to_density, DensityMatrix, HermitianOperator};
use crate::tolerances::Tolerances;

/// Effect matrices stored as real isometric coordinates, with multiplicities.
///
/// Identical effects (bitwise) are merged, which makes POVM-type data sets with
/// many repeated outcomes cheap.
#[derive(Debug, Clone)]
pub struct EffectSet {
    dim: usize,
    rows: DMatrix<f64>,
    weights: DVector<f64>,
    log_c_total: f64,
}

impl EffectSet {
    pub fn from_adjoint(results: &[AdjointResult]) -> Result<Self> {
        let dim = results
            .first()
            .ok_or_else(|| Error::InvalidParameter("no effects".into()))?
            .effect
            .dim();
        let log_c_total = results.iter().map(|r| r.log_c).sum();
        let mut set = Self::from_weighted(
            dim,
            results.iter().map(|r| (r.effect.matrix(), 1.0)),
        )?;
        set.log_c_total = log_c_total;
        Ok(set)
    }

    pub fn from_operators(effects: &[HermitianOperator]) -> Result<Self> {
        let dim = effects
            .first()
            .ok_or_else(|| Error::InvalidParameter("no effects".into()))?
            .dim();
        Self::from_weighted(dim, effects.iter().map(|e| (e.matrix(), 1.0)))
    }

    /// Effects with positive multiplicities (counts).
    pub fn from_counts(effects: &[(HermitianOperator, f64)]) -> Result<Self> {
        let dim = effects
            .first()
            .ok_or_else(|| Error::InvalidParameter("no effects".into()))?
            .0
            .dim();
        Self::from_weighted(dim, effects.iter().map(|(e, w)| (e.matrix(), *w)))
    }

    fn from_weighted<'a>(
        dim: usize,
        items: impl Iterator<Item = (&'a CMatrix, f64)>,
    ) -> Result<Self> {
        let d2 = dim * dim;
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut coords: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut buf = vec![0.0; d2];
        for (m, w) in items {
            if m.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.nrows(),
                });
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            linalg::hvec_into(m, &mut buf);
            let key: Vec<u64> = buf.iter().map(|v| v.to_bits()).collect();
            match index.get(&key) {
                Some(&i) => weights[i] += w,
                None => {
                    index.insert(key, weights.len());
                    coords.extend_from_slice(&buf);
                    weights.push(w);
                }
            }
        }
        if weights.is_empty() {
            return Err(Error::InvalidParameter("no effects".into()));
        }
        let n = weights.len();
        let rows = DMatrix::from_row_slice(n, d2, &coords);
        Ok(Self {
            dim,
            rows,
            weights: DVector::from_vec(weights),
            log_c_total: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct effects.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total multiplicity `N`.
    pub fn total_weight(&self) -> f64 {
        self.weights.sum()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn effect(&self, i: usize) -> HermitianOperator {
        let v: Vec<f64> = self.rows.row(i).iter().copied().collect();
        HermitianOperator::from_matrix_unchecked(linalg::unhvec(&v, self.dim))
    }

    pub(crate) fn coordinates(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// `tr(ρ E_n)` for every distinct effect.
    pub fn traces(&self, rho: &HermitianOperator) -> DVector<f64> {
        &self.rows * linalg::hvec(rho.matrix())
    }

    /// `f(ρ) = Σ_n w_n log tr(ρ E_n) + Σ log c_n`; `−∞` outside the support.
    pub fn log_likelihood(&self, rho: &HermitianOperator) -> f64 {
        let p = self.traces(rho);
        self.log_c_total + weighted_log(&p, &self.weights)
    }

    /// `∇f(ρ) = Σ_n w_n E_n / tr(ρ E_n)`.
    pub fn gradient(&self, rho: &HermitianOperator) -> Result<HermitianOperator> {
        let p = self.traces(rho);
        self.gradient_from_traces(&p)
    }

    fn gradient_from_traces(&self, p: &DVector<f64>) -> Result<HermitianOperator> {
        let mut scale = DVector::zeros(p.len());
        for i in 0..p.len() {
            if !(p[i] > 0.0) {
                return Err(Error::DegenerateTrace { index: i });
            }
            scale[i] = self.weights[i] / p[i];
        }
        let g = self.rows.tr_mul(&scale);
        Ok(HermitianOperator::from_matrix_unchecked(linalg::unhvec(
            g.as_slice(),
            self.dim,
        )))
    }

    /// True when every effect is proportional to the identity.
    pub fn is_flat(&self) -> bool {
        let n = self.dim;
        (0..self.len()).all(|i| {
            let row = self.rows.row(i);
            let mean = row.iter().take(n).sum::<f64>() / n as f64;
            let dev: f64 = row
                .iter()
                .enumerate()
                .map(|(k, &v)| if k < n { (v - mean).powi(2) } else { v * v })
                .sum();
            dev.sqrt() <= 1e-12 * row.norm()
        })
    }
}

fn weighted_log(p: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for (pi, wi) in p.iter().zip(w.iter()) {
        if !(*pi > 0.0) {
            return f64::NEG_INFINITY;
        }
        total += wi * pi.ln();
    }
    total
}

/// The log-likelihood gradient at `ρ`.
pub fn gradient(rho: &DensityMatrix, effects: &EffectSet) -> Result<HermitianOperator> {
    effects.gradient(rho.as_operator())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxLikeOptions {
    /// Stopping threshold on the KKT residual, relative to `N`.
    pub kkt_tol: f64,
    pub max_iterations: usize,
    /// Rank threshold relative to the largest eigenvalue of the estimate.
    pub rank_tol: f64,
    /// Keep the objective value of every iterate.
    pub record_history: bool,
}

impl Default for MaxLikeOptions {
    fn default() -> Self {
        let t = Tolerances::DEFAULT;
        Self {
            kkt_tol: t.kkt,
            max_iterations: t.max_iterations,
            rank_tol: t.rank,
            record_history: false,
        }
    }
}

/// Estimate with the diagnostics of its optimality conditions.
#[derive(Debug, Clone)]
pub struct TomographyResult {
    pub rho_ml: DensityMatrix,
    pub rank: usize,
    /// Orthogonal projector onto the range of `rho_ml`.
    pub range_projector: HermitianOperator,
    /// Columns spanning the range of `rho_ml` (eigenvectors above threshold).
    pub range_basis: CMatrix,
    /// Eigenvalues of `rho_ml` on its range, matching `range_basis`.
    pub range_eigenvalues: Vec<f64>,
    /// `tr(ρ ∇f)`; equals the total multiplicity `N` at any point.
    pub lambda_ml: f64,
    pub grad_ml: HermitianOperator,
    pub log_likelihood: f64,
    pub n_effects: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub certified: bool,
    pub history: Vec<f64>,
}

impl TomographyResult {
    /// Diagnostics of an arbitrary state (no optimization).
    pub fn evaluate(rho: &DensityMatrix, effects: &EffectSet) -> Result<Self> {
        Self::evaluate_with(rho, effects, &MaxLikeOptions::default())
    }

    fn evaluate_with(rho: &DensityMatrix, effects: &EffectSet, opts: &MaxLikeOptions) -> Result<Self> {
        if rho.dim() != effects.dim() {
            return Err(Error::DimensionMismatch {
                expected: effects.dim(),
                found: rho.dim(),
            });
        }
        let p = effects.traces(rho.as_operator());
        let grad = effects.gradient_from_traces(&p)?;
        let log_likelihood = effects.log_c_total + weighted_log(&p, &effects.weights);
        Ok(Self::assemble(rho.clone(), grad, log_likelihood, effects.total_weight(), opts))
    }

    fn assemble(
        rho: DensityMatrix,
        grad: HermitianOperator,
        log_likelihood: f64,
        n_effects: f64,
        opts: &MaxLikeOptions,
    ) -> Self {
        let n = rho.dim();
        let (values, vectors) = rho.as_operator().eigh();
        let largest = values[n - 1];
        let cut = opts.rank_tol * largest;
        let keep: Vec<usize> = (0..n).filter(|&k| values[k] > cut).collect();
        let rank = keep.len();
        let mut range_basis = CMatrix::zeros(n, rank);
        for (c, &k) in keep.iter().enumerate() {
            range_basis.set_column(c, &vectors.column(k));
        }
        let range_eigenvalues = keep.iter().map(|&k| values[k]).collect();
        let range_projector =
            HermitianOperator::from_matrix_unchecked(&range_basis * range_basis.adjoint());
        let lambda_ml = rho.expectation(&grad);
        let kkt_residual = residual(&rho, &grad, lambda_ml, &range_basis);
        Self {
            rho_ml: rho,
            rank,
            range_projector,
            range_basis,
            range_eigenvalues,
            lambda_ml,
            grad_ml: grad,
            log_likelihood,
            n_effects,
            iterations: 0,
            kkt_residual,
            certified: kkt_residual <= opts.kkt_tol * n_effects,
            history: Vec::new(),
        }
    }

    /// Moore–Penrose pseudo-inverse of `rho_ml` at the rank threshold.
    pub fn rho_pinv(&self) -> CMatrix {
        let inv: Vec<f64> = self.range_eigenvalues.iter().map(|v| 1.0 / v).collect();
        let scaled = CMatrix::from_fn(self.range_basis.nrows(), self.rank, |i, j| {
            self.range_basis[(i, j)] * inv[j]
        });
        let mut out = scaled * self.range_basis.adjoint();
        linalg::hermitize_in_place(&mut out);
        out
    }
}

/// `max(‖[ρ,∇f]‖_F, λ_max(∇f) − λ, λ − λ_min(P∇fP|range))`, clipped at zero.
fn residual(rho: &DensityMatrix, grad: &HermitianOperator, lambda: f64, range: &CMatrix) -> f64 {
    let comm = rho.as_operator().commutator_norm(grad);
    let upper = (grad.max_eigenvalue() - lambda).max(0.0);
    let restricted = range.adjoint() * grad.matrix() * range;
    let lower = if restricted.nrows() > 0 {
        (lambda - linalg::eigh(&linalg::hermitize(&restricted)).0[0]).max(0.0)
    } else {
        0.0
    };
    comm.max(upper).max(lower)
}

/// Recomputes the KKT residual of a result against the effects.
pub fn kkt_certificate(result: &TomographyResult, effects: &EffectSet) -> Result<f64> {
    let grad = effects.gradient(result.rho_ml.as_operator())?;
    let lambda = result.rho_ml.expectation(&grad);
    Ok(residual(&result.rho_ml, &grad, lambda, &result.range_basis))
}

pub fn solve_maxlike(effects: &EffectSet, opts: &MaxLikeOptions) -> Result<TomographyResult> {
    let n = effects.dim();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "Hilbert space dimension must be at least 2".into(),
        ));
    }
    if effects.is_flat() {
        return Err(Error::DegenerateLikelihood);
    }
    let total = effects.total_weight();
    let tol = opts.kkt_tol * total;
    let alpha_min = 1e-12 / total;
    let alpha_max = 1e8 / total;
    let armijo = 1e-4;

    let mut rho = DensityMatrix::maximally_mixed(n);
    let mut p = effects.traces(rho.as_operator());
    let mut f = effects.log_c_total + weighted_log(&p, &effects.weights);
    let mut grad = effects.gradient_from_traces(&p)?;
    let mut alpha = 1.0 / total;
    let mut history = Vec::new();
    if opts.record_history {
        history.push(f);
    }

    for iteration in 0..=opts.max_iterations {
        let current = TomographyResult::assemble(rho.clone(), grad.clone(), f, total, opts);
        if current.kkt_residual <= tol || iteration == opts.max_iterations {
            let mut result = current;
            result.iterations = iteration;
            result.history = history;
            if result.certified {
                return Ok(result);
            }
            return Err(Error::MaxIterations(Box::new(result)));
        }

        let target = rho.as_operator() + &grad.scale(alpha);
        let projected = project_to_density(&target);
        let direction = projected.as_operator() - rho.as_operator();
        let slope = grad.inner(&direction);
        if !(slope > 0.0) {
            // No ascent available at this step length; the projection has
            // stalled on roundoff. Shrink the step and retry.
            alpha = (alpha * 0.1).max(alpha_min);
            if alpha == alpha_min {
                let mut result = current;
                result.iterations = iteration;
                result.history = history;
                return Err(Error::MaxIterations(Box::new(result)));
            }
            continue;
        }
        let mut t = 1.0;
        let (next, next_p, next_f) = loop {
            let candidate = DensityMatrix::from_trusted(
                (rho.as_operator() + &direction.scale(t)).into_matrix(),
            );
            let cp = effects.traces(candidate.as_operator());
            let cf = effects.log_c_total + weighted_log(&cp, &effects.weights);
            if cf.is_finite() && cf >= f + armijo * t * slope {
                break (candidate, cp, cf);
            }
            t *= 0.5;
            if t < 1e-20 {
                break (rho.clone(), p.clone(), f);
            }
        };
        let next_grad = effects.gradient_from_traces(&next_p)?;
        let s = next.as_operator() - rho.as_operator();
        let y = &next_grad - &grad;
        let ss = s.inner(&s);
        let sy = -s.inner(&y);
        alpha = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(alpha_min, alpha_max)
        } else {
            alpha_max
        };
        rho = next;
        p = next_p;
        f = next_f;
        grad = next_grad;
        if opts.record_history {
            history.push(f);
        }
    }
    unreachable!("loop returns at the iteration cap")
}
