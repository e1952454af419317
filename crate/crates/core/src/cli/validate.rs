//! Invariant suites run by `trajtomo validate`: duality, adjoint identities,
//! optimality certificates and independent oracle comparisons.

use std::io::Write;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::confidence::{build_r, variance};
use crate::continuous::{backward_continuous, cp_map_continuous, forward_continuous, simulate_sme_batch};
use crate::error::{Error, Result};
use crate::filter::{backward_run, forward_run, DiscreteRecord};
use crate::maxlike::{solve_maxlike, EffectSet, MaxLikeOptions, TomographyResult};
use crate::models::{build_fluorescence_model, pauli_povm, FluorescenceParams};
use crate::operators::{apply_adjoint_cp_map, apply_cp_map, pauli, DensityMatrix, HermitianOperator};
use crate::qubit::{effects_from_set, observable_coefficients, variance_bloch, BlochVector};
use crate::random;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, residual: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            residual,
            threshold,
            passed: residual <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub seed: u64,
    pub checks: Vec<Check>,
}

fn solve(set: &EffectSet) -> Result<TomographyResult> {
    match solve_maxlike(set, &MaxLikeOptions::default()) {
        Err(Error::MaxIterations(r)) => Ok(*r),
        other => other,
    }
}

fn duality_discrete(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let dim = rng.random_range(2..=5);
        let len = rng.random_range(1..=30);
        let family = random::kraus_family(dim, len, rng.random_range(2..=4), 2, rng);
        let rho0 = random::density(dim, rng);
        let (outcomes, _) = crate::filter::simulate_discrete(&family, &rho0, 0, len, rng)?;
        let record = DiscreteRecord::new(0, outcomes);
        let back = backward_run(&family, &record)?;
        for _ in 0..5 {
            let rho = random::density(dim, rng);
            let fwd = forward_run(&family, &record, &rho)?;
            worst = worst.max((fwd.log_prob - back.log_prob(&rho)).abs());
        }
    }
    Ok(worst)
}

fn duality_continuous(rng: &mut ChaCha8Rng, seed: u64) -> Result<f64> {
    let p = FluorescenceParams::default();
    let model = build_fluorescence_model(&p)?;
    let plus = BlochVector::new(1.0, 0.0, 0.0)?.to_density();
    let records = simulate_sme_batch(&model, &plus, p.dt, p.n_steps(), 10, seed)?;
    let mut worst = 0.0_f64;
    for r in &records {
        let back = backward_continuous(&model, r)?;
        for _ in 0..5 {
            let rho = random::density(2, rng);
            let fwd = forward_continuous(&model, r, &rho)?;
            worst = worst.max((fwd.log_prob - back.log_prob(&rho)).abs());
        }
    }
    Ok(worst)
}

fn adjoint_discrete(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let dim = rng.random_range(2..=6);
        let family = random::kraus_family(dim, 1, 3, 2, rng);
        let a = random::hermitian(dim, rng);
        let b = random::hermitian(dim, rng);
        for y in 0..3 {
            let lhs = a.trace_with(&apply_cp_map(&family, 0, y, &b)?);
            let rhs = apply_adjoint_cp_map(&family, 0, y, &a)?.trace_with(&b);
            worst = worst.max((lhs - rhs).abs() / a.norm() / b.norm());
        }
    }
    Ok(worst)
}

fn adjoint_continuous(rng: &mut ChaCha8Rng) -> Result<f64> {
    let model = build_fluorescence_model(&FluorescenceParams::default())?;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let dy = [rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3)];
        let a = random::hermitian(2, rng);
        let b = random::hermitian(2, rng);
        let lhs = a.trace_with(&cp_map_continuous(&model, &dy, 200e-9, &b, false)?);
        let rhs = cp_map_continuous(&model, &dy, 200e-9, &a, true)?.trace_with(&b);
        worst = worst.max((lhs - rhs).abs() / a.norm() / b.norm());
    }
    Ok(worst)
}

/// Counts drawn from a random POVM and a random state.
fn random_counts(dim: usize, rank: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<EffectSet> {
    let povm = random::povm(dim, dim * dim + 1, rng);
    let rho = random::density_with_rank(dim, rank, rng);
    let p: Vec<f64> = povm.iter().map(|e| rho.expectation(e).max(0.0)).collect();
    let total: f64 = p.iter().sum();
    let mut counts = vec![0.0; povm.len()];
    for _ in 0..n {
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < p.len() && u >= p[k] {
            u -= p[k];
            k += 1;
        }
        counts[k] += 1.0;
    }
    EffectSet::from_counts(&povm.into_iter().zip(counts).collect::<Vec<_>>())
}

/// Worst `(KKT residual / N, |λ − N| / N)`.
fn kkt(rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let mut worst = (0.0_f64, 0.0_f64);
    for k in 0..12 {
        let dim = 2 + k % 3;
        let rank = if k % 2 == 0 { dim } else { 1 };
        let set = random_counts(dim, rank, 500, rng)?;
        let r = solve(&set)?;
        let n = set.total_weight();
        worst.0 = worst.0.max(r.kkt_residual / n);
        worst.1 = worst.1.max((r.lambda_ml - n).abs() / n);
    }
    Ok(worst)
}

fn binomial() -> Result<f64> {
    let set = EffectSet::from_counts(&[
        (HermitianOperator::diagonal(&[1.0, 0.0]), 30.0),
        (HermitianOperator::diagonal(&[0.0, 1.0]), 70.0),
    ])?;
    let r = solve(&set)?;
    let v = variance(&pauli::z(), &build_r(&r, &set), &r)?.variance;
    let classical = 4.0 * 0.3 * 0.7 / 100.0;
    Ok((v - classical).abs() / classical)
}

fn qubit_fast_path(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0_f64;
    for k in 0..20 {
        // interior and boundary instances alternate
        let rank = if k % 2 == 0 { 2 } else { 1 };
        let set = random_counts(2, rank, 400, rng)?;
        let r = solve(&set)?;
        let rm = build_r(&r, &set);
        let v = BlochVector::from_density(&r.rho_ml)?;
        let effects = effects_from_set(&set)?;
        let a = random::hermitian(2, rng);
        let generic = match variance(&a, &rm, &r) {
            Ok(iv) => iv.variance,
            Err(Error::Unidentifiable(_)) => continue,
            Err(e) => return Err(e),
        };
        let fast = variance_bloch(&v, &effects, &observable_coefficients(&a)?)?;
        worst = worst.max((fast - generic).abs() / generic.abs().max(1e-300));
    }
    Ok(worst)
}

/// Hradil's diluted `RρR` iteration `ρ ← (I + εR)ρ(I + εR)/tr` for
/// frequency data.
fn rrr_oracle(set: &EffectSet) -> DensityMatrix {
    let n = set.dim();
    let total = set.total_weight();
    let id = HermitianOperator::identity(n);
    let mut rho = DensityMatrix::maximally_mixed(n);
    for _ in 0..200_000 {
        let r = set.gradient(rho.as_operator()).expect("interior iterate").scale(1.0 / total);
        let m = &id + &r.scale(0.5);
        let next = m.matrix() * rho.matrix() * m.matrix();
        let tr = next.trace().re;
        let next = DensityMatrix::from_matrix(next / num_complex::Complex64::new(tr, 0.0)).expect("positive");
        let change = next.as_operator().max_abs_diff(rho.as_operator());
        rho = next;
        if change < 1e-15 {
            break;
        }
    }
    rho
}

fn povm_reduction(rng: &mut ChaCha8Rng) -> Result<f64> {
    let povm = pauli_povm();
    let mut worst = 0.0_f64;
    for _ in 0..5 {
        let v = Vector3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let truth = BlochVector::from_vector(&v)?.to_density();
        let counts: Vec<(HermitianOperator, f64)> = povm
            .iter()
            .map(|e| (e.clone(), (1000.0 * truth.expectation(e)).round() + 1.0))
            .collect();
        let set = EffectSet::from_counts(&counts)?;
        let ml = solve(&set)?;
        let oracle = rrr_oracle(&set);
        worst = worst.max((ml.rho_ml.matrix() - oracle.matrix()).norm());
    }
    Ok(worst)
}

pub fn run_validation(seed: u64) -> Result<ValidationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = vec![
        Check::new("duality-discrete", duality_discrete(&mut rng)?, 1e-8),
        Check::new("duality-continuous", duality_continuous(&mut rng, seed)?, 1e-8),
        Check::new("adjoint-identity-discrete", adjoint_discrete(&mut rng)?, 1e-11),
        Check::new("adjoint-identity-continuous", adjoint_continuous(&mut rng)?, 1e-11),
    ];
    let (kkt_res, lambda_res) = kkt(&mut rng)?;
    checks.push(Check::new("kkt-residual-per-trajectory", kkt_res, 1e-7));
    checks.push(Check::new("lambda-equals-n", lambda_res, 1e-6));
    checks.push(Check::new("binomial-variance-vs-fisher", binomial()?, 0.05));
    checks.push(Check::new("qubit-fast-path-vs-generic", qubit_fast_path(&mut rng)?, 1e-8));
    checks.push(Check::new("povm-maxlike-vs-rrr-oracle", povm_reduction(&mut rng)?, 1e-6));
    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        seed,
        checks,
    })
}

/// Runs the suites and writes the JSON report to the output path (or stdout).
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    let report = run_validation(cfg.rng_seed)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &cfg.output_path {
        Some(path) => std::fs::write(path, json)?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    Ok(report)
}
