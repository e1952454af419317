//! Forward quantum filtering, backward adjoint-state propagation and the
//! likelihood of an initial state given a batch of discrete records.
//!
//! A record with outcomes `y_s, …, y_T` (starting at step `s`) has probability
//! `P(ρ) = tr(K_{y_T} ∘ … ∘ K_{y_s}(ρ)) = c · tr(ρ E_s)`, where the effect `E_s`
//! is obtained by normalized backward propagation from `E_{T+1} = I/dim`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::operators::{DensityMatrix, EffectMatrix, HermitianOperator, KrausFamily};
use crate::tolerances::Tolerances;

/// Outcome indices of one trajectory, starting at family step `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteRecord {
    pub id: u64,
    #[serde(default)]
    pub start: usize,
    pub outcomes: Vec<usize>,
}

impl DiscreteRecord {
    pub fn new(id: u64, outcomes: Vec<usize>) -> Self {
        Self {
            id,
            start: 0,
            outcomes,
        }
    }

    /// Resolves outcome labels against the family.
    pub fn from_labels<S: AsRef<str>>(
        family: &KrausFamily,
        id: u64,
        start: usize,
        labels: &[S],
    ) -> Result<Self> {
        let outcomes = labels
            .iter()
            .enumerate()
            .map(|(i, l)| family.outcome_index(start + i, l.as_ref()))
            .collect::<Result<_>>()?;
        Ok(Self {
            id,
            start,
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Step index after the last outcome.
    pub fn end(&self) -> usize {
        self.start + self.outcomes.len()
    }

    /// The suffix of the record beginning at step `t`.
    pub fn suffix(&self, t: usize) -> Result<DiscreteRecord> {
        if t < self.start || t >= self.end() {
            return Err(Error::StepOutOfRange {
                step: t,
                len: self.end(),
            });
        }
        Ok(DiscreteRecord {
            id: self.id,
            start: t,
            outcomes: self.outcomes[t - self.start..].to_vec(),
        })
    }

    fn validate(&self, family: &KrausFamily) -> Result<()> {
        if self.outcomes.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "record {} is empty",
                self.id
            )));
        }
        if self.end() > family.len() {
            return Err(Error::StepOutOfRange {
                step: self.end() - 1,
                len: family.len(),
            });
        }
        for (i, &y) in self.outcomes.iter().enumerate() {
            let t = self.start + i;
            if y >= family.step(t)?.n_outcomes() {
                return Err(Error::UnknownOutcome {
                    step: t,
                    outcome: y.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Conditional states `ρ_s, …, ρ_{T+1}` and the per-step outcome probabilities.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub states: Vec<DensityMatrix>,
    pub step_probs: Vec<f64>,
    pub log_prob: f64,
}

/// Normalized effect and the log of its normalization constant.
#[derive(Debug, Clone)]
pub struct AdjointResult {
    pub effect: EffectMatrix,
    pub log_c: f64,
}

impl AdjointResult {
    /// `log c + log tr(ρ E)`, or `−∞` when `tr(ρ E) ≤ 0`.
    pub fn log_prob(&self, rho: &DensityMatrix) -> f64 {
        let p = rho.expectation(self.effect.as_operator());
        if p > 0.0 {
            self.log_c + p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn floor() -> f64 {
    Tolerances::DEFAULT.prob_floor
}

/// One filter update `ρ ↦ K_y(ρ)/tr K_y(ρ)`.
pub fn forward_step(
    family: &KrausFamily,
    t: usize,
    y: usize,
    rho: &DensityMatrix,
) -> Result<(DensityMatrix, f64)> {
    let step = family.checked(t, y, rho.as_operator())?;
    let out = step.apply_raw(y, rho.matrix(), false);
    normalize(out, t).map(|(m, p)| (DensityMatrix::from_trusted(m), p))
}

fn normalize(mut m: CMatrix, t: usize) -> Result<(CMatrix, f64)> {
    let p = linalg::trace_re(&m);
    if !(p > floor()) {
        return Err(Error::ZeroProbability {
            step: t,
            trajectory: None,
        });
    }
    m /= num_complex::Complex64::new(p, 0.0);
    Ok((m, p))
}

fn with_id(err: Error, id: u64) -> Error {
    match err {
        Error::ZeroProbability { step, .. } => Error::ZeroProbability {
            step,
            trajectory: Some(id),
        },
        other => other,
    }
}

pub fn forward_run(
    family: &KrausFamily,
    record: &DiscreteRecord,
    rho0: &DensityMatrix,
) -> Result<FilterTrace> {
    record.validate(family)?;
    if rho0.dim() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: family.dim(),
            found: rho0.dim(),
        });
    }
    let mut states = Vec::with_capacity(record.len() + 1);
    let mut step_probs = Vec::with_capacity(record.len());
    let mut log_prob = 0.0;
    let mut rho = rho0.clone();
    for (i, &y) in record.outcomes.iter().enumerate() {
        let t = record.start + i;
        let (next, p) = forward_step(family, t, y, &rho).map_err(|e| with_id(e, record.id))?;
        states.push(rho);
        step_probs.push(p);
        log_prob += p.ln();
        rho = next;
    }
    states.push(rho);
    Ok(FilterTrace {
        states,
        step_probs,
        log_prob,
    })
}

/// One adjoint update `E ↦ K*_y(E)/tr K*_y(E)`.
pub fn backward_step(
    family: &KrausFamily,
    t: usize,
    y: usize,
    effect: &EffectMatrix,
) -> Result<(EffectMatrix, f64)> {
    let step = family.checked(t, y, effect.as_operator())?;
    let out = step.apply_raw(y, effect.matrix(), true);
    normalize(out, t).map(|(m, c)| (EffectMatrix::from_trusted(m), c))
}

/// Backward pass returning the effect at the record's first step.
pub fn backward_run(family: &KrausFamily, record: &DiscreteRecord) -> Result<AdjointResult> {
    let mut out = backward_at(family, record, &[record.start])?;
    Ok(out.pop().expect("one requested time"))
}

/// Backward pass returning the effects `E_t` at each requested step `t`
/// (`record.start ≤ t ≤ record.end()`, the latter giving `I/dim`), in the
/// order requested. One pass serves every start time of a sweep.
pub fn backward_at(
    family: &KrausFamily,
    record: &DiscreteRecord,
    times: &[usize],
) -> Result<Vec<AdjointResult>> {
    record.validate(family)?;
    for &t in times {
        if t < record.start || t > record.end() {
            return Err(Error::StepOutOfRange {
                step: t,
                len: record.end(),
            });
        }
    }
    let n = family.dim();
    let mut results: Vec<Option<AdjointResult>> = vec![None; times.len()];
    let mut e = linalg::identity(n) / num_complex::Complex64::new(n as f64, 0.0);
    let mut log_c = (n as f64).ln();
    let store = |t: usize, e: &CMatrix, log_c: f64, results: &mut Vec<Option<AdjointResult>>| {
        for (slot, &want) in results.iter_mut().zip(times) {
            if want == t {
                *slot = Some(AdjointResult {
                    effect: EffectMatrix::from_trusted(e.clone()),
                    log_c,
                });
            }
        }
    };
    store(record.end(), &e, log_c, &mut results);
    for (i, &y) in record.outcomes.iter().enumerate().rev() {
        let t = record.start + i;
        let step = family.step(t)?;
        let raw = step.apply_raw(y, &e, true);
        let (next, c) = normalize(raw, t).map_err(|err| with_id(err, record.id))?;
        e = next;
        log_c += c.ln();
        store(t, &e, log_c, &mut results);
    }
    Ok(results.into_iter().map(|r| r.expect("filled")).collect())
}

/// Backward passes over many records in parallel; output order follows input.
pub fn backward_batch(family: &KrausFamily, records: &[DiscreteRecord]) -> Result<Vec<AdjointResult>> {
    records
        .par_iter()
        .map(|r| backward_run(family, r))
        .collect()
}

/// `f(ρ) = Σ_n [log c_n + log tr(ρ E_n)]`; `−∞` if any trace is non-positive.
pub fn log_likelihood(rho: &DensityMatrix, effects: &[AdjointResult]) -> f64 {
    let mut total = 0.0;
    for r in effects {
        let lp = r.log_prob(rho);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += lp;
    }
    total
}

/// Samples outcomes for steps `start..start + n_steps` from the family's
/// outcome law, returning the outcome indices and the final conditional state.
pub fn simulate_discrete<R: Rng + ?Sized>(
    family: &KrausFamily,
    rho0: &DensityMatrix,
    start: usize,
    n_steps: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, DensityMatrix)> {
    if start + n_steps > family.len() {
        return Err(Error::StepOutOfRange {
            step: start + n_steps,
            len: family.len(),
        });
    }
    let mut rho = rho0.matrix().clone();
    let mut outcomes = Vec::with_capacity(n_steps);
    for t in start..start + n_steps {
        let step = family.step(t)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = None;
        let mut last = None;
        for y in 0..step.n_outcomes() {
            let out = step.apply_raw(y, &rho, false);
            let p = linalg::trace_re(&out);
            if p > floor() {
                last = Some((y, out.clone(), p));
            }
            acc += p;
            if u < acc && p > floor() {
                chosen = Some((y, out, p));
                break;
            }
        }
        // Roundoff can leave `u` just above the accumulated total.
        let (y, out, p) = chosen
            .or(last)
            .ok_or(Error::ZeroProbability {
                step: t,
                trajectory: None,
            })?;
        rho = out / num_complex::Complex64::new(p, 0.0);
        linalg::hermitize_in_place(&mut rho);
        outcomes.push(y);
    }
    Ok((outcomes, DensityMatrix::from_trusted(rho)))
}

/// The unread (outcome-averaged) map `Σ_y K_{y,t}` applied to `ρ`.
pub fn unread_step(family: &KrausFamily, t: usize, rho: &HermitianOperator) -> Result<HermitianOperator> {
    let step = family.step(t)?;
    let mut out = CMatrix::zeros(family.dim(), family.dim());
    for y in 0..step.n_outcomes() {
        out += family.checked(t, y, rho)?.apply_raw(y, rho.matrix(), false);
    }
    Ok(HermitianOperator::from_matrix_unchecked(out))
}
