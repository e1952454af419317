//! Diffusive measurements: stochastic master equation trajectories in the Itō
//! Kraus discretization, backward propagation of effects along a measured
//! record, and the unread (Lindblad) reference evolution.
//!
//! For increments `dy` over a step `dt`,
//!
//! ```text
//! M_dy    = I + (−iH − ½ Σ L†L) dt + Σ √η dy L
//! K_dy(ρ) = M ρ M† + Σ (1 − η) L ρ L† dt
//! ```
//!
//! [`cp_map_continuous`] evaluates this map as written. Its Gaussian average
//! `S = E[K*_dy(I)] = M₀†M₀ + Σ L†L dt` differs from `I` at second order, and
//! over many trajectories that defect acts as spurious information. The
//! filters and the simulator therefore apply `K_dy(S^{-1/2} · S^{-1/2})`,
//! which agrees with `K_dy` to first order and averages to a trace-preserving
//! map exactly.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{AdjointResult, FilterTrace};
use crate::linalg::{self, CMatrix, ONE, ZERO};
use crate::operators::{project_to_density, DensityMatrix, EffectMatrix, HermitianOperator};
use crate::tolerances::Tolerances;

/// Substeps per shortest model time scale used by the simulator.
const SUBSTEP_RESOLUTION: f64 = 1000.0;

/// One decoherence channel `L` with detection efficiency `eta`.
#[derive(Debug, Clone)]
pub struct Channel {
    pub l: CMatrix,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct SmeModel {
    dim: usize,
    h: HermitianOperator,
    channels: Vec<Channel>,
    /// `−iH − ½ Σ L†L`
    drift: CMatrix,
    /// `(channel index, √η L)` for monitored channels.
    monitored: Vec<(usize, CMatrix)>,
    /// `(L, 1 − η)` for channels with `η < 1`.
    unread: Vec<(CMatrix, f64)>,
}

impl SmeModel {
    pub fn new(h: HermitianOperator, channels: Vec<Channel>) -> Result<Self> {
        let dim = h.dim();
        let mut drift = h.matrix() * Complex64::new(0.0, -1.0);
        let mut monitored = Vec::new();
        let mut unread = Vec::new();
        for (k, c) in channels.iter().enumerate() {
            if c.l.nrows() != dim || c.l.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.l.nrows().max(c.l.ncols()),
                });
            }
            if !(0.0..=1.0).contains(&c.eta) {
                return Err(Error::InvalidParameter(format!(
                    "channel {k} efficiency {} is outside [0, 1]",
                    c.eta
                )));
            }
            drift -= c.l.adjoint() * &c.l * Complex64::new(0.5, 0.0);
            if c.eta > 0.0 {
                monitored.push((k, &c.l * Complex64::new(c.eta.sqrt(), 0.0)));
            }
            if c.eta < 1.0 {
                unread.push((c.l.clone(), 1.0 - c.eta));
            }
        }
        Ok(Self {
            dim,
            h,
            channels,
            drift,
            monitored,
            unread,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Number of monitored channels (`η > 0`), the width of a record row.
    pub fn n_monitored(&self) -> usize {
        self.monitored.len()
    }

    /// Indices of the monitored channels in model order.
    pub fn monitored_channels(&self) -> Vec<usize> {
        self.monitored.iter().map(|(k, _)| *k).collect()
    }

    /// Shortest characteristic time: `1/‖L†L‖` per channel and `1/‖H‖`.
    pub fn shortest_timescale(&self) -> f64 {
        let mut t = f64::INFINITY;
        let hn = self.h.norm();
        if hn > 0.0 {
            t = t.min(1.0 / hn);
        }
        for c in &self.channels {
            let r = (c.l.adjoint() * &c.l).norm();
            if r > 0.0 {
                t = t.min(1.0 / r);
            }
        }
        t
    }

    /// Internal integration substeps per record bin of width `dt`, so that the
    /// simulated outcome law is accurate well beyond the bin resolution.
    pub fn substeps(&self, dt: f64) -> usize {
        let t = self.shortest_timescale();
        if t.is_finite() {
            ((SUBSTEP_RESOLUTION * dt / t).ceil() as usize).max(1)
        } else {
            1
        }
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
        }
        if dt > self.shortest_timescale() / 10.0 {
            log::warn!(
                "time step {dt:e} s is not small against the model time scale {:e} s",
                self.shortest_timescale()
            );
        }
        Ok(())
    }

    fn check_dy(&self, dy: &[f64]) -> Result<()> {
        if dy.len() != self.monitored.len() {
            return Err(Error::DimensionMismatch {
                expected: self.monitored.len(),
                found: dy.len(),
            });
        }
        Ok(())
    }
}

/// Measured increments of one trajectory: one row per step, one column per
/// monitored channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousRecord {
    pub id: u64,
    pub dt: f64,
    pub increments: Vec<Vec<f64>>,
}

impl ContinuousRecord {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    fn validate(&self, model: &SmeModel) -> Result<()> {
        if self.increments.is_empty() {
            return Err(Error::InvalidParameter(format!("record {} is empty", self.id)));
        }
        model.check_dt(self.dt)?;
        for row in &self.increments {
            model.check_dy(row)?;
        }
        Ok(())
    }
}

/// Scratch matrices reused across steps.
struct Workspace {
    m: CMatrix,
    tmp: CMatrix,
    out: CMatrix,
    /// `(dt, S^{-1/2})` for the normalized map.
    norm: Option<(f64, CMatrix)>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            m: CMatrix::zeros(n, n),
            tmp: CMatrix::zeros(n, n),
            out: CMatrix::zeros(n, n),
            norm: None,
        }
    }
}

fn build_m_into(model: &SmeModel, dy: &[f64], dt: f64, m: &mut CMatrix) {
    m.copy_from(&model.drift);
    *m *= Complex64::new(dt, 0.0);
    for i in 0..model.dim {
        m[(i, i)] += ONE;
    }
    for ((_, l), &d) in model.monitored.iter().zip(dy) {
        m.zip_apply(l, |a, b| *a += b * d);
    }
}

/// `S^{-1/2}` with `S = M₀†M₀ + Σ L†L dt`, the Gaussian average of `K*_dy(I)`.
fn normalizer(model: &SmeModel, dt: f64) -> Result<CMatrix> {
    let mut m0 = CMatrix::zeros(model.dim, model.dim);
    build_m_into(model, &vec![0.0; model.monitored.len()], dt, &mut m0);
    let mut s = m0.adjoint() * &m0;
    for c in &model.channels {
        s += c.l.adjoint() * &c.l * Complex64::new(dt, 0.0);
    }
    linalg::hermitize_in_place(&mut s);
    linalg::inv_sqrt_pd(&s).ok_or(Error::StepSizeTooLarge { step: 0, change: f64::NAN })
}

/// `K_dy(X)` or `K*_dy(X)` into `ws.out`.
fn apply_into(model: &SmeModel, dy: &[f64], dt: f64, x: &CMatrix, adjoint: bool, ws: &mut Workspace) {
    build_m_into(model, dy, dt, &mut ws.m);
    if adjoint {
        ws.tmp.gemm_ad(ONE, &ws.m, x, ZERO);
        ws.out.gemm(ONE, &ws.tmp, &ws.m, ZERO);
    } else {
        ws.tmp.gemm(ONE, &ws.m, x, ZERO);
        ws.out.gemm(ONE, &ws.tmp, &ws.m.adjoint(), ZERO);
    }
    for (l, w) in &model.unread {
        let c = Complex64::new(w * dt, 0.0);
        if adjoint {
            ws.tmp.gemm_ad(c, l, x, ZERO);
            ws.out.gemm(ONE, &ws.tmp, l, ONE);
        } else {
            ws.tmp.gemm(c, l, x, ZERO);
            ws.out.gemm(ONE, &ws.tmp, &l.adjoint(), ONE);
        }
    }
    linalg::hermitize_in_place(&mut ws.out);
}

/// Normalized map `K_dy(S^{-1/2} X S^{-1/2})`, or its adjoint
/// `S^{-1/2} K*_dy(X) S^{-1/2}`, into `ws.out`. Its Gaussian average is
/// exactly trace preserving.
fn apply_normalized_into(
    model: &SmeModel,
    dy: &[f64],
    dt: f64,
    x: &CMatrix,
    adjoint: bool,
    ws: &mut Workspace,
) -> Result<()> {
    if ws.norm.as_ref().is_none_or(|(h, _)| *h != dt) {
        ws.norm = Some((dt, normalizer(model, dt)?));
    }
    let (_, n) = ws.norm.take().expect("set above");
    if adjoint {
        apply_into(model, dy, dt, x, true, ws);
        ws.tmp.gemm(ONE, &n, &ws.out, ZERO);
        ws.out.gemm(ONE, &ws.tmp, &n, ZERO);
    } else {
        let y = &n * x * &n;
        apply_into(model, dy, dt, &y, false, ws);
    }
    linalg::hermitize_in_place(&mut ws.out);
    ws.norm = Some((dt, n));
    Ok(())
}

/// `M_dy = I + (−iH − ½ΣL†L)dt + Σ √η dy L`.
pub fn build_m(model: &SmeModel, dy: &[f64], dt: f64) -> Result<CMatrix> {
    model.check_dt(dt)?;
    model.check_dy(dy)?;
    let mut m = CMatrix::zeros(model.dim, model.dim);
    build_m_into(model, dy, dt, &mut m);
    Ok(m)
}

/// `K_dy(X)`, or its adjoint `K*_dy(X)` when `adjoint` is set.
pub fn cp_map_continuous(
    model: &SmeModel,
    dy: &[f64],
    dt: f64,
    x: &HermitianOperator,
    adjoint: bool,
) -> Result<HermitianOperator> {
    model.check_dt(dt)?;
    model.check_dy(dy)?;
    if x.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: x.dim(),
        });
    }
    let mut ws = Workspace::new(model.dim);
    apply_into(model, dy, dt, x.matrix(), adjoint, &mut ws);
    Ok(HermitianOperator::from_matrix_unchecked(ws.out))
}

fn steps_for(dt: f64, t_total: f64) -> Result<usize> {
    let ratio = t_total / dt;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "duration {t_total:e} is not an integer number of steps {dt:e}"
        )));
    }
    Ok(n as usize)
}

/// Normalizes `ws.out` into a density matrix, handling roundoff negativity.
fn renormalize_state(ws: &Workspace, step: usize) -> Result<CMatrix> {
    let tr = linalg::trace_re(&ws.out);
    if !(tr > Tolerances::DEFAULT.prob_floor) {
        return Err(Error::StepSizeTooLarge { step, change: tr - 1.0 });
    }
    let mut rho = &ws.out / Complex64::new(tr, 0.0);
    let min = linalg::min_eigenvalue(&rho);
    if min < -1e-6 {
        return Err(Error::PositivityLost {
            step,
            min_eigenvalue: min,
        });
    }
    if min < -Tolerances::DEFAULT.psd {
        rho = project_to_density(&HermitianOperator::from_matrix_unchecked(rho))
            .matrix()
            .clone();
    }
    Ok(rho)
}

/// Simulates one trajectory over `n_steps` record bins; states are kept when
/// requested (`ρ_0 … ρ_T`). Each bin is integrated in [`SmeModel::substeps`]
/// substeps whose increments are summed into the bin.
pub fn simulate_sme_with<R: Rng + ?Sized>(
    model: &SmeModel,
    rho0: &DensityMatrix,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
    keep_states: bool,
) -> Result<(Vec<Vec<f64>>, Vec<DensityMatrix>)> {
    model.check_dt(dt)?;
    if rho0.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: rho0.dim(),
        });
    }
    let n_sub = model.substeps(dt);
    let h = dt / n_sub as f64;
    let sqrt_h = h.sqrt();
    let mut ws = Workspace::new(model.dim);
    let mut rho = rho0.matrix().clone();
    let mut states = Vec::new();
    if keep_states {
        states.push(rho0.clone());
    }
    let mut increments = Vec::with_capacity(n_steps);
    let mut dy = vec![0.0; model.monitored.len()];
    for step in 0..n_steps {
        let mut bin = vec![0.0; model.monitored.len()];
        for _ in 0..n_sub {
            for (k, (_, l)) in model.monitored.iter().enumerate() {
                // √η tr((L + L†) ρ), with √η folded into `l`
                let mean = 2.0 * linalg::trace_product(l, &rho);
                let dw: f64 = rng.sample::<f64, _>(StandardNormal) * sqrt_h;
                dy[k] = mean * h + dw;
                bin[k] += dy[k];
            }
            apply_normalized_into(model, &dy, h, &rho, false, &mut ws)?;
            let change = linalg::trace_re(&ws.out) - 1.0;
            if change.abs() > 0.5 {
                return Err(Error::StepSizeTooLarge { step, change });
            }
            rho = renormalize_state(&ws, step)?;
        }
        increments.push(bin);
        if keep_states {
            states.push(DensityMatrix::from_trusted(rho.clone()));
        }
    }
    Ok((increments, states))
}

/// One trajectory of duration `t_total`, deterministic in `seed`.
pub fn simulate_sme(
    model: &SmeModel,
    rho0: &DensityMatrix,
    dt: f64,
    t_total: f64,
    seed: u64,
) -> Result<(ContinuousRecord, Vec<DensityMatrix>)> {
    let n = steps_for(dt, t_total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (increments, states) = simulate_sme_with(model, rho0, dt, n, &mut rng, true)?;
    Ok((
        ContinuousRecord {
            id: 0,
            dt,
            increments,
        },
        states,
    ))
}

/// Many independent trajectories; trajectory `i` uses the ChaCha stream `i`
/// of `seed`, so output does not depend on the thread count.
pub fn simulate_sme_batch(
    model: &SmeModel,
    rho0: &DensityMatrix,
    dt: f64,
    n_steps: usize,
    n_trajectories: usize,
    seed: u64,
) -> Result<Vec<ContinuousRecord>> {
    (0..n_trajectories as u64)
        .into_par_iter()
        .map(|id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            let (increments, _) = simulate_sme_with(model, rho0, dt, n_steps, &mut rng, false)?;
            Ok(ContinuousRecord { id, dt, increments })
        })
        .collect()
}

/// Forward filter along a measured record (for duality checks).
pub fn forward_continuous(
    model: &SmeModel,
    record: &ContinuousRecord,
    rho0: &DensityMatrix,
) -> Result<FilterTrace> {
    record.validate(model)?;
    let mut ws = Workspace::new(model.dim);
    let mut rho = rho0.matrix().clone();
    let mut states = vec![rho0.clone()];
    let mut step_probs = Vec::with_capacity(record.len());
    let mut log_prob = 0.0;
    for (t, dy) in record.increments.iter().enumerate() {
        apply_normalized_into(model, dy, record.dt, &rho, false, &mut ws)?;
        let p = linalg::trace_re(&ws.out);
        if !(p > Tolerances::DEFAULT.prob_floor) {
            return Err(Error::ZeroProbability {
                step: t,
                trajectory: Some(record.id),
            });
        }
        rho = &ws.out / Complex64::new(p, 0.0);
        step_probs.push(p);
        log_prob += p.ln();
        states.push(DensityMatrix::from_trusted(rho.clone()));
    }
    Ok(FilterTrace {
        states,
        step_probs,
        log_prob,
    })
}

/// Effect at `t = 0` of a measured record.
pub fn backward_continuous(model: &SmeModel, record: &ContinuousRecord) -> Result<AdjointResult> {
    let mut out = backward_continuous_at(model, record, &[0])?;
    Ok(out.pop().expect("one requested time"))
}

/// Effects `E_t` at the requested step indices `0 ≤ t ≤ len`, from one
/// backward pass.
pub fn backward_continuous_at(
    model: &SmeModel,
    record: &ContinuousRecord,
    times: &[usize],
) -> Result<Vec<AdjointResult>> {
    record.validate(model)?;
    let len = record.len();
    if let Some(&bad) = times.iter().find(|&&t| t > len) {
        return Err(Error::StepOutOfRange { step: bad, len });
    }
    let n = model.dim;
    let mut ws = Workspace::new(n);
    let mut e = linalg::identity(n) / Complex64::new(n as f64, 0.0);
    let mut log_c = (n as f64).ln();
    let mut results: Vec<Option<AdjointResult>> = vec![None; times.len()];
    let mut store = |t: usize, e: &CMatrix, log_c: f64| {
        for (slot, &want) in results.iter_mut().zip(times) {
            if want == t {
                *slot = Some(AdjointResult {
                    effect: EffectMatrix::from_trusted(e.clone()),
                    log_c,
                });
            }
        }
    };
    store(len, &e, log_c);
    for t in (0..len).rev() {
        apply_normalized_into(model, &record.increments[t], record.dt, &e, true, &mut ws)?;
        let c = linalg::trace_re(&ws.out);
        if !(c > Tolerances::DEFAULT.prob_floor) {
            return Err(Error::ZeroProbability {
                step: t,
                trajectory: Some(record.id),
            });
        }
        e.copy_from(&ws.out);
        e /= Complex64::new(c, 0.0);
        log_c += c.ln();
        store(t, &e, log_c);
    }
    Ok(results.into_iter().map(|r| r.expect("filled")).collect())
}

/// Backward passes over many records; output order follows input.
pub fn backward_continuous_batch(
    model: &SmeModel,
    records: &[ContinuousRecord],
    times: &[usize],
) -> Result<Vec<Vec<AdjointResult>>> {
    records
        .par_iter()
        .map(|r| backward_continuous_at(model, r, times))
        .collect()
}

/// `dρ/dt = −i[H,ρ] + Σ (LρL† − ½{L†L, ρ})`.
pub fn lindblad_rhs(model: &SmeModel, rho: &CMatrix) -> CMatrix {
    let mut out = &model.drift * rho + rho * model.drift.adjoint();
    for c in &model.channels {
        out += &c.l * rho * c.l.adjoint();
    }
    out
}

/// Explicit Euler integration of the unread evolution; returns `ρ_0 … ρ_T`.
pub fn lindblad_evolve(
    model: &SmeModel,
    rho0: &DensityMatrix,
    dt: f64,
    t_total: f64,
) -> Result<Vec<DensityMatrix>> {
    model.check_dt(dt)?;
    let n = steps_for(dt, t_total)?;
    let mut rho = rho0.matrix().clone();
    let mut states = Vec::with_capacity(n + 1);
    states.push(rho0.clone());
    for step in 0..n {
        let d = lindblad_rhs(model, &rho) * Complex64::new(dt, 0.0);
        rho += d;
        linalg::hermitize_in_place(&mut rho);
        let min = linalg::min_eigenvalue(&rho);
        let change = (linalg::trace_re(&rho) - 1.0).abs();
        if min < -1e-6 || change > 1e-8 {
            return Err(Error::StepSizeTooLarge { step, change: change.max(-min) });
        }
        states.push(DensityMatrix::from_trusted(rho.clone()));
    }
    Ok(states)
}
