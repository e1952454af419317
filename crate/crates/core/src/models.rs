//! Ready-made measurement models: a photon-counting QND cavity probed by a
//! stream of two-level atoms, a fluorescence (heterodyne) qubit, and
//! instantaneous POVMs.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuous::{Channel, SmeModel};
use crate::error::{Error, Result};
use crate::filter::unread_step;
use crate::linalg::{self, CMatrix, ZERO};
use crate::operators::{DensityMatrix, HermitianOperator, KrausFamily, KrausStep};

/// Outcome labels of the cavity model, in index order.
pub const QND_OUTCOMES: [&str; 3] = ["g", "e", "no-atom"];

/// Cavity field truncated to `0..=n_max` photons, measured by atoms whose
/// Ramsey phase shifts by `phase_per_photon` per photon, and relaxing toward a
/// thermal state between samples.
///
/// Each sample holds a detected atom with probability `detection_efficiency`;
/// the detector flips the result with probability `detector_error`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QndCavityModel {
    pub n_max: usize,
    /// Photon lifetime in seconds; `inf` disables relaxation.
    pub t_c: f64,
    pub n_b: f64,
    /// Sampling period in seconds.
    pub step: f64,
    pub phase_per_photon: f64,
    pub detection_efficiency: f64,
    pub detector_error: f64,
}

impl Default for QndCavityModel {
    fn default() -> Self {
        Self {
            n_max: 7,
            t_c: 65e-3,
            n_b: 0.06,
            step: 86e-6,
            phase_per_photon: PI / 7.0,
            detection_efficiency: 0.5,
            detector_error: 0.05,
        }
    }
}

impl QndCavityModel {
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.n_max < 1 {
            return bad("n_max must be at least 1");
        }
        if !(self.t_c > 0.0) || !(self.n_b >= 0.0) || !(self.step > 0.0) {
            return bad("cavity rates and step must be positive");
        }
        if !(0.0..=1.0).contains(&self.detection_efficiency) || !(0.0..=1.0).contains(&self.detector_error) {
            return bad("detection probabilities must lie in [0, 1]");
        }
        if !self.phase_per_photon.is_finite() {
            return bad("phase per photon must be finite");
        }
        Ok(())
    }

    /// Probability of reading `g` for a detected atom with `n` photons.
    pub fn p_g(&self, n: usize) -> f64 {
        let c = (0.5 * n as f64 * self.phase_per_photon).cos().powi(2);
        (1.0 - self.detector_error) * c + self.detector_error * (1.0 - c)
    }

    /// Kraus operators of one relaxation step (first order in `step / t_c`).
    pub fn relaxation_ops(&self) -> Vec<CMatrix> {
        let d = self.dim();
        let a = annihilation(self.n_max);
        let rate = if self.t_c.is_finite() { self.step / self.t_c } else { 0.0 };
        let down = &a * Complex64::new((rate * (1.0 + self.n_b)).sqrt(), 0.0);
        let up = a.adjoint() * Complex64::new((rate * self.n_b).sqrt(), 0.0);
        let rest = linalg::identity(d) - down.adjoint() * &down - up.adjoint() * &up;
        let stay = linalg::sqrt_psd(&rest);
        let mut ops = vec![stay];
        if rate > 0.0 {
            ops.push(down);
            if self.n_b > 0.0 {
                ops.push(up);
            }
        }
        ops
    }

    /// Steady state of the unread dynamics, by power iteration.
    pub fn stationary_state(&self) -> Result<DensityMatrix> {
        let family = build_qnd_family(self, 1)?;
        let mut rho = thermal_state(self.n_max, self.n_b).into_operator();
        for _ in 0..200_000 {
            let next = unread_step(&family, 0, &rho)?;
            let change = next.max_abs_diff(&rho);
            rho = next;
            if change < 1e-15 {
                break;
            }
        }
        DensityMatrix::new(rho)
    }
}

/// Stationary Kraus family of the cavity model with outcomes `g`, `e`,
/// `no-atom`; each step is detection followed by relaxation.
pub fn build_qnd_family(model: &QndCavityModel, n_steps: usize) -> Result<KrausFamily> {
    model.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be positive".into()));
    }
    let d = model.dim();
    let diag = |f: &dyn Fn(usize) -> f64| {
        let mut m = CMatrix::zeros(d, d);
        for n in 0..d {
            m[(n, n)] = Complex64::new(f(n), 0.0);
        }
        m
    };
    let phi = model.phase_per_photon;
    let cos = diag(&|n| (0.5 * n as f64 * phi).cos());
    let sin = diag(&|n| (0.5 * n as f64 * phi).sin());
    let eta = model.detection_efficiency;
    let eps = model.detector_error;
    let scale = |m: &CMatrix, c: f64| m * Complex64::new(c.sqrt(), 0.0);
    let detect = [
        vec![scale(&cos, eta * (1.0 - eps)), scale(&sin, eta * eps)],
        vec![scale(&sin, eta * (1.0 - eps)), scale(&cos, eta * eps)],
        vec![linalg::identity(d) * Complex64::new((1.0 - eta).sqrt(), 0.0)],
    ];
    let relax = model.relaxation_ops();
    let outcomes = detect
        .iter()
        .zip(QND_OUTCOMES)
        .map(|(ops, label)| {
            let composed = relax
                .iter()
                .flat_map(|r| ops.iter().map(move |m| r * m))
                .filter(|m| m.iter().any(|z| *z != ZERO))
                .collect();
            (label.to_string(), composed)
        })
        .collect();
    let step = KrausStep::new(d, outcomes)?;
    KrausFamily::stationary(step, n_steps)
}

/// `a` on the truncated Fock space `0..=n_max`.
pub fn annihilation(n_max: usize) -> CMatrix {
    let d = n_max + 1;
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn photon_number(n_max: usize) -> HermitianOperator {
    let values: Vec<f64> = (0..=n_max).map(|n| n as f64).collect();
    HermitianOperator::diagonal(&values)
}

/// Truncated, renormalized thermal state of mean occupation `n_b`.
pub fn thermal_state(n_max: usize, n_b: f64) -> DensityMatrix {
    let q = n_b / (1.0 + n_b);
    let weights: Vec<f64> = (0..=n_max).map(|n| q.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
    DensityMatrix::from_trusted(HermitianOperator::diagonal(&p).into_matrix())
}

/// Adds one photon: `|n⟩ ↦ |n+1⟩`, with the top level kept in place so the
/// map stays trace preserving on the truncated space.
pub fn inject_photon(rho: &DensityMatrix) -> DensityMatrix {
    let d = rho.dim();
    let mut shift = CMatrix::zeros(d, d);
    for n in 0..d - 1 {
        shift[(n + 1, n)] = Complex64::new(1.0, 0.0);
    }
    let mut top = CMatrix::zeros(d, d);
    top[(d - 1, d - 1)] = Complex64::new(1.0, 0.0);
    let m = rho.matrix();
    DensityMatrix::from_trusted(&shift * m * shift.adjoint() + &top * m * &top)
}

/// Heterodyne-monitored fluorescence of a qubit. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FluorescenceParams {
    pub t1: f64,
    pub t_phi: f64,
    pub eta: f64,
    pub dt: f64,
    pub duration: f64,
}

impl Default for FluorescenceParams {
    fn default() -> Self {
        Self {
            t1: 4.15e-6,
            t_phi: 35e-6,
            eta: 0.24,
            dt: 200e-9,
            duration: 9.2e-6,
        }
    }
}

impl FluorescenceParams {
    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Scale turning a raw increment into the normalized signal `√(2T₁/η)·dy/dt`.
    pub fn signal_scale(&self) -> f64 {
        (2.0 * self.t1 / self.eta).sqrt() / self.dt
    }
}

/// `H = 0`; `L₁ = √(1/2T₁)(σx − iσy)/2` and `L₂ = iL₁` monitored with
/// efficiency `eta`; `L₃ = √(1/2T_φ)σz` unmonitored.
pub fn build_fluorescence_model(params: &FluorescenceParams) -> Result<SmeModel> {
    if !(params.t1 > 0.0) || !(params.t_phi > 0.0) || !(params.dt > 0.0) || !(params.duration > 0.0) {
        return Err(Error::InvalidParameter(
            "fluorescence times must be positive".into(),
        ));
    }
    let lower = CMatrix::from_row_slice(
        2,
        2,
        &[ZERO, ZERO, Complex64::new(1.0, 0.0), ZERO],
    );
    let l1 = &lower * Complex64::new((0.5 / params.t1).sqrt(), 0.0);
    let l2 = &l1 * Complex64::new(0.0, 1.0);
    let l3 = crate::operators::pauli::z().into_matrix() * Complex64::new((0.5 / params.t_phi).sqrt(), 0.0);
    SmeModel::new(
        HermitianOperator::zeros(2),
        vec![
            Channel { l: l1, eta: params.eta },
            Channel { l: l2, eta: params.eta },
            Channel { l: l3, eta: 0.0 },
        ],
    )
}

/// Single-step family with Kraus operators `√π_y`.
pub fn povm_family(povm: &[HermitianOperator]) -> Result<KrausFamily> {
    let dim = povm
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty POVM".into()))?
        .dim();
    let mut total = HermitianOperator::zeros(dim);
    for (y, p) in povm.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        if p.min_eigenvalue() < -1e-10 {
            return Err(Error::InvalidParameter(format!("POVM element {y} is not positive")));
        }
        total = total + p;
    }
    let dev = total.max_abs_diff(&HermitianOperator::identity(dim));
    if dev > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "incomplete POVM: elements sum to identity within {dev:e}"
        )));
    }
    let outcomes = povm
        .iter()
        .enumerate()
        .map(|(y, p)| (format!("{y}"), vec![linalg::sqrt_psd(p.matrix())]))
        .collect();
    // sqrt roundoff is far below the POVM tolerance
    let step = KrausStep::with_tolerance(dim, outcomes, 1e-8)?;
    KrausFamily::stationary(step, 1)
}

/// The six-outcome Pauli POVM `{(I ± σ_i)/6}`.
pub fn pauli_povm() -> Vec<HermitianOperator> {
    let id = HermitianOperator::identity(2);
    crate::operators::pauli::all()
        .iter()
        .flat_map(|s| [(&id + s).scale(1.0 / 6.0), (&id - s).scale(1.0 / 6.0)])
        .collect()
}
