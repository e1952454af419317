//! Monte-Carlo evaluation of the Bayesian mean and variance of an observable,
//! used to validate the Laplace approximation.
//!
//! Self-normalized importance sampling over traceless coordinates
//! `ρ = I/n + Σ x_i B_i`. The proposal mixes a Gaussian shaped by the local
//! curvature at `ρ_ML` with a broad Gaussian around `I/n`; samples outside the
//! set of density matrices get zero weight.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::confidence::{build_r, RMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::maxlike::{solve_maxlike, EffectSet, MaxLikeOptions, TomographyResult};
use crate::operators::{hermitian_basis, DensityMatrix, HermitianOperator};

/// Prior density with respect to the flat measure on density matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prior {
    /// Flat (Hilbert–Schmidt) measure.
    HilbertSchmidt,
    /// Bures measure: `Π λ_i^{-1/2} Π_{i<j} (λ_i + λ_j)^{-1}` in eigenvalues.
    Bures,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub prior: Prior,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            seed: 0,
            prior: Prior::HilbertSchmidt,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleEstimate {
    /// Posterior mean of `tr(ρ A)`.
    pub mean: f64,
    pub mean_stderr: f64,
    /// Posterior second moment of `tr((ρ − ρ_c) A)` about the center.
    pub variance: f64,
    pub variance_stderr: f64,
    /// `tr(ρ_c A)` where `ρ_c` is the ML estimate (or `I/n` for flat data).
    pub center: f64,
    pub effective_sample_size: f64,
}

const CHUNKS: usize = 64;
const LOCAL_WEIGHT: f64 = 0.9;
const BROAD_STD: f64 = 0.5;
const MIN_PRECISION: f64 = 4.0;

struct Gaussian {
    mean: DVector<f64>,
    /// Columns are principal axes scaled by their standard deviations.
    axes: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    fn from_precision(mean: DVector<f64>, precision: &DMatrix<f64>) -> Self {
        let d = mean.len();
        let (values, vectors) = linalg::eigh_real(precision);
        let clamped: Vec<f64> = values.iter().map(|v| v.max(MIN_PRECISION)).collect();
        let mut axes = DMatrix::zeros(d, d);
        let mut prec = DMatrix::zeros(d, d);
        let mut log_det_prec = 0.0;
        for (k, &lam) in clamped.iter().enumerate() {
            let u = vectors.column(k);
            axes.set_column(k, &(u * (1.0 / lam.sqrt())));
            prec += (u * u.transpose()) * lam;
            log_det_prec += lam.ln();
        }
        let log_norm = 0.5 * log_det_prec - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        Self {
            mean,
            axes,
            precision: prec,
            log_norm,
        }
    }

    fn isotropic(mean: DVector<f64>, std: f64) -> Self {
        let d = mean.len();
        let prec = DMatrix::identity(d, d) / (std * std);
        Self::from_precision_exact(mean, prec)
    }

    fn from_precision_exact(mean: DVector<f64>, precision: DMatrix<f64>) -> Self {
        let d = mean.len();
        let (values, vectors) = linalg::eigh_real(&precision);
        let mut axes = DMatrix::zeros(d, d);
        let mut log_det = 0.0;
        for (k, &lam) in values.iter().enumerate() {
            axes.set_column(k, &(vectors.column(k) * (1.0 / lam.sqrt())));
            log_det += lam.ln();
        }
        let log_norm = 0.5 * log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        Self {
            mean,
            axes,
            precision,
            log_norm,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(rng));
        &self.mean + &self.axes * z
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        self.log_norm - 0.5 * d.dot(&(&self.precision * &d))
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Curvature-shaped precision in traceless coordinates: `R` on the tangent
/// space, Fisher information plus the outward gradient on the normal space.
fn local_precision(
    result: &TomographyResult,
    effects: &EffectSet,
    r: &RMatrix,
    traceless: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = traceless.nrows();
    let tc = r.basis.rows() * traceless.transpose();
    let tangent = tc.transpose() * &r.matrix * &tc;
    let normal = DMatrix::identity(d, d) - tc.transpose() * &tc;

    let coords = effects.coordinates() * traceless.transpose();
    let p = effects.traces(result.rho_ml.as_operator());
    let mut fisher = DMatrix::zeros(d, d);
    for i in 0..coords.nrows() {
        let c = coords.row(i).transpose();
        fisher += (&c * c.transpose()) * (effects.weight(i) / (p[i] * p[i]));
    }
    let g = traceless * linalg::hvec(result.grad_ml.matrix());
    let outer = &g * g.transpose();
    tangent + &normal * (fisher + outer) * &normal
}

fn log_prior(prior: Prior, eig: &[f64]) -> f64 {
    match prior {
        Prior::HilbertSchmidt => 0.0,
        Prior::Bures => {
            let mut acc = 0.0;
            for (i, &a) in eig.iter().enumerate() {
                acc -= 0.5 * a.ln();
                for &b in &eig[i + 1..] {
                    acc -= (a + b).ln();
                }
            }
            acc
        }
    }
}

/// Posterior mean and variance of `tr(ρ A)` given the effects (or a flat
/// likelihood when `effects` is `None`).
pub fn bayesian_mc_oracle(
    effects: Option<&EffectSet>,
    a: &HermitianOperator,
    opts: &OracleOptions,
) -> Result<OracleEstimate> {
    let n = a.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "oracle supports dimensions 2 and 3, got {n}"
        )));
    }
    if opts.n_samples < 10_000 {
        return Err(Error::InvalidParameter(
            "oracle needs at least 10^4 samples".into(),
        ));
    }
    if let Some(e) = effects {
        if e.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: e.dim(),
            });
        }
    }
    let basis = hermitian_basis(n);
    let d = n * n - 1;
    let mut traceless = DMatrix::zeros(d, n * n);
    for (i, b) in basis.traceless().iter().enumerate() {
        traceless.set_row(i, &linalg::hvec(b.matrix()).transpose());
    }
    let h0 = linalg::hvec(DensityMatrix::maximally_mixed(n).matrix());
    let a_vec = linalg::hvec(a.matrix());
    let a0 = a_vec.dot(&h0);
    let a_coords = &traceless * &a_vec;

    // Likelihood pieces: tr(ρ E_n) = p0_n + C_n · x.
    let fitted = match effects {
        Some(e) if !e.is_flat() => Some(match solve_maxlike(e, &MaxLikeOptions::default()) {
            Ok(r) => r,
            Err(Error::MaxIterations(best)) => *best,
            Err(other) => return Err(other),
        }),
        _ => None,
    };
    let (center_rho, local) = match (&fitted, effects) {
        (Some(result), Some(e)) => {
            let r = build_r(result, e);
            let x_ml = &traceless * linalg::hvec(result.rho_ml.matrix());
            let prec = local_precision(result, e, &r, &traceless) * 0.5;
            (result.rho_ml.clone(), Some(Gaussian::from_precision(x_ml, &prec)))
        }
        _ => (DensityMatrix::maximally_mixed(n), None),
    };
    let broad = Gaussian::isotropic(DVector::zeros(d), BROAD_STD);
    let local_weight = if local.is_some() { LOCAL_WEIGHT } else { 0.0 };
    let center = center_rho.expectation(a);

    let (c_mat, p0, weights, f_ml) = match effects {
        Some(e) => {
            let c = e.coordinates() * traceless.transpose();
            let p0 = e.coordinates() * &h0;
            let w = DVector::from_column_slice(e.weights());
            let f_ml = e.traces(center_rho.as_operator());
            let f_ml: f64 = f_ml
                .iter()
                .zip(w.iter())
                .map(|(p, w)| if *p > 0.0 { w * p.ln() } else { 0.0 })
                .sum();
            (c, p0, w, f_ml)
        }
        None => (
            DMatrix::zeros(0, d),
            DVector::zeros(0),
            DVector::zeros(0),
            0.0,
        ),
    };

    let per_chunk = opts.n_samples.div_ceil(CHUNKS);
    let chunks: Vec<Vec<(f64, f64)>> = (0..CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(chunk as u64);
            let count = per_chunk.min(opts.n_samples.saturating_sub(chunk * per_chunk));
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let u: f64 = rand::Rng::random(&mut rng);
                let x = match &local {
                    Some(g) if u < local_weight => g.sample(&mut rng),
                    _ => broad.sample(&mut rng),
                };
                let value = a0 + a_coords.dot(&x);
                let hv = &h0 + traceless.tr_mul(&x);
                let m = linalg::unhvec(hv.as_slice(), n);
                let eig = linalg::eigh(&m).0;
                if eig[0] <= 0.0 {
                    out.push((f64::NEG_INFINITY, value));
                    continue;
                }
                let p = &p0 + &c_mat * &x;
                let mut f = 0.0;
                let mut inside = true;
                for (pi, wi) in p.iter().zip(weights.iter()) {
                    if *pi <= 0.0 {
                        inside = false;
                        break;
                    }
                    f += wi * pi.ln();
                }
                if !inside {
                    out.push((f64::NEG_INFINITY, value));
                    continue;
                }
                let log_q_broad = (1.0 - local_weight).ln() + broad.log_density(&x);
                let log_q = match &local {
                    Some(g) => log_sum_exp(local_weight.ln() + g.log_density(&x), log_q_broad),
                    None => log_q_broad,
                };
                out.push((f - f_ml + log_prior(opts.prior, &eig) - log_q, value));
            }
            out
        })
        .collect();

    let max_log = chunks
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, (lw, _)| m.max(*lw));
    if max_log == f64::NEG_INFINITY {
        return Err(Error::EffectiveSampleSizeTooLow(0.0));
    }
    let (mut sw, mut sw2, mut s1, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for &(lw, v) in chunks.iter().flatten() {
        let w = (lw - max_log).exp();
        sw += w;
        sw2 += w * w;
        s1 += w * v;
        s2 += w * (v - center).powi(2);
    }
    let mean = s1 / sw;
    let variance = s2 / sw;
    let (mut e1, mut e2) = (0.0, 0.0);
    for &(lw, v) in chunks.iter().flatten() {
        let w = (lw - max_log).exp() / sw;
        e1 += w * w * (v - mean).powi(2);
        e2 += w * w * ((v - center).powi(2) - variance).powi(2);
    }
    let ess = sw * sw / sw2;
    if ess < 100.0 {
        return Err(Error::EffectiveSampleSizeTooLow(ess));
    }
    Ok(OracleEstimate {
        mean,
        mean_stderr: e1.sqrt(),
        variance,
        variance_stderr: e2.sqrt(),
        center,
        effective_sample_size: ess,
    })
}
