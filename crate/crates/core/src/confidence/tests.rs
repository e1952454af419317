use super::*;
use crate::maxlike::{solve_maxlike, MaxLikeOptions};
use crate::operators::{pauli, DensityMatrix};
use crate::random;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pg() -> HermitianOperator {
    HermitianOperator::diagonal(&[1.0, 0.0])
}

fn pe() -> HermitianOperator {
    HermitianOperator::diagonal(&[0.0, 1.0])
}

fn solve(set: &EffectSet) -> TomographyResult {
    solve_maxlike(set, &MaxLikeOptions::default()).unwrap()
}

/// Central finite-difference Hessian of `f` along the tangent basis elements.
fn fd_hessian_flat(set: &EffectSet, rho: &DensityMatrix, basis: &TangentBasis, h: f64) -> DMatrix<f64> {
    let k = basis.len();
    let f = |x: &HermitianOperator| set.log_likelihood(x);
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let bi = basis.element(i).scale(h);
            let bj = basis.element(j).scale(h);
            let r = rho.as_operator();
            let pp = f(&(&(r + &bi) + &bj));
            let pm = f(&(&(r + &bi) - &bj));
            let mp = f(&(&(r - &bi) + &bj));
            let mm = f(&(&(r - &bi) - &bj));
            out[(i, j)] = (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    out
}

/// Hessian of `f` restricted to the fixed-rank manifold through `ρ_ML`,
/// computed from the chart `θ ↦ WW†/tr(WW†)` with `W = W_0 + Σ θ_k Δ_k` and
/// pulled back to tangent coordinates as `J⁺ᵀ H_θ J⁺`.
fn fd_hessian_manifold(set: &EffectSet, result: &TomographyResult, basis: &TangentBasis) -> DMatrix<f64> {
    let n = result.rho_ml.dim();
    let r = result.rank;
    let mut w0 = result.range_basis.clone();
    for j in 0..r {
        let s = result.range_eigenvalues[j].sqrt();
        for i in 0..n {
            w0[(i, j)] *= Complex64::new(s, 0.0);
        }
    }
    let mut deltas = Vec::new();
    for i in 0..n {
        for j in 0..r {
            for unit in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut d = CMatrix::zeros(n, r);
                d[(i, j)] = unit;
                deltas.push(d);
            }
        }
    }
    let m = deltas.len();
    let chart = |theta: &[f64]| -> HermitianOperator {
        let mut w = w0.clone();
        for (t, d) in theta.iter().zip(&deltas) {
            w += d * Complex64::new(*t, 0.0);
        }
        let g = &w * w.adjoint();
        let tr = linalg::trace_re(&g);
        HermitianOperator::new(g / Complex64::new(tr, 0.0)).unwrap()
    };
    let h = 1e-4;
    let f = |theta: &[f64]| set.log_likelihood(&chart(theta));
    let mut h_theta = DMatrix::zeros(m, m);
    let mut th = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            let mut eval = |si: f64, sj: f64| {
                th.iter_mut().for_each(|v| *v = 0.0);
                th[i] += si * h;
                th[j] += sj * h;
                f(&th)
            };
            h_theta[(i, j)] =
                (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
        }
    }
    let k = basis.len();
    let mut jac = DMatrix::zeros(k, m);
    let hj = 1e-6;
    for l in 0..m {
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        plus[l] = hj;
        minus[l] = -hj;
        let diff = (&chart(&plus) - &chart(&minus)).scale(1.0 / (2.0 * hj));
        jac.set_column(l, &basis.coordinates(&diff));
    }
    let jp = jac.pseudo_inverse(1e-9).unwrap();
    jp.transpose() * h_theta * jp
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm())
}

#[test]
fn identity_has_zero_variance() {
    let set = EffectSet::from_counts(&[(pg(), 30.0), (pe(), 70.0)]).unwrap();
    let result = solve(&set);
    let r = build_r(&result, &set);
    let v = variance(&HermitianOperator::identity(2), &r, &result).unwrap();
    assert_eq!(v.variance, 0.0);
    assert!((v.mean - 1.0).abs() < 1e-12);
}

#[test]
fn binomial_variance_matches_fisher() {
    let set = EffectSet::from_counts(&[(pg(), 30.0), (pe(), 70.0)]).unwrap();
    let result = solve(&set);
    let r = build_r(&result, &set);
    assert_eq!(r.dim_tangent(), 3);
    let v = variance(&pauli::z(), &r, &result).unwrap();
    let expected = 4.0 * 0.3 * 0.7 / 100.0;
    assert!((v.variance - expected).abs() <= 0.05 * expected, "{}", v.variance);
    assert!((v.half_width_95 - 2.0 * v.variance.sqrt()).abs() < 1e-15);
    // x and y carry no information
    assert!(matches!(
        variance(&pauli::x(), &r, &result),
        Err(Error::Unidentifiable(_))
    ));
}

#[test]
fn binomial_r_matches_finite_difference_hessian() {
    let set = EffectSet::from_counts(&[(pg(), 30.0), (pe(), 70.0)]).unwrap();
    let result = solve(&set);
    let r = build_r(&result, &set);
    let fd = fd_hessian_flat(&set, &result.rho_ml, &r.basis, 1e-4);
    assert!(rel_diff(&r.matrix, &(-fd)) < 1e-5);
}

#[test]
fn full_rank_r_matches_finite_difference_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 20 {
        let dim = 2 + checked % 2;
        let truth = random::density(dim, &mut rng);
        let povm = random::povm(dim, dim * dim + 2, &mut rng);
        let probs: Vec<f64> = povm.iter().map(|e| truth.expectation(e)).collect();
        let mut counts = vec![0.0; povm.len()];
        for _ in 0..500 {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc || k == probs.len() - 1 {
                    counts[k] += 1.0;
                    break;
                }
            }
        }
        let items: Vec<(HermitianOperator, f64)> = povm.into_iter().zip(counts).collect();
        let set = EffectSet::from_counts(&items).unwrap();
        let result = solve(&set);
        if result.rank < dim {
            continue;
        }
        let r = build_r(&result, &set);
        assert_eq!(r.dim_tangent(), dim * dim - 1);
        let fd = fd_hessian_flat(&set, &result.rho_ml, &r.basis, 1e-4);
        assert!(rel_diff(&r.matrix, &(-fd)) < 1e-4);
        checked += 1;
    }
}

#[test]
fn pure_state_boundary_term_is_lambda_identity() {
    let n = 40.0;
    let set = EffectSet::from_counts(&[(pg(), n)]).unwrap();
    let result = solve(&set);
    assert_eq!(result.rank, 1);
    let r = build_r(&result, &set);
    assert_eq!(r.dim_tangent(), 2);
    let expected = DMatrix::identity(2, 2) * result.lambda_ml;
    assert!((&r.matrix - expected).norm() < 1e-8 * n);
    // σ_x ↦ √2 along the off-diagonal direction: variance 2/N
    let v = variance(&pauli::x(), &r, &result).unwrap();
    assert!((v.variance - 2.0 / n).abs() < 1e-9);
    let v = variance(&pauli::z(), &r, &result).unwrap();
    assert_eq!(v.variance, 0.0);
}

fn boundary_qubit_instance() -> EffectSet {
    let s = pauli::all();
    let id = HermitianOperator::identity(2);
    let plus = |k: usize| (&id + &s[k]).scale(0.5);
    let minus = |k: usize| (&id - &s[k]).scale(0.5);
    EffectSet::from_counts(&[(plus(0), 40.0), (plus(2), 30.0), (minus(2), 2.0), (plus(1), 12.0), (minus(1), 10.0)])
        .unwrap()
}

#[test]
fn boundary_r_matches_manifold_hessian() {
    let set = boundary_qubit_instance();
    let result = solve(&set);
    assert_eq!(result.rank, 1);
    let r = build_r(&result, &set);
    let fd = fd_hessian_manifold(&set, &result, &r.basis);
    assert!(rel_diff(&r.matrix, &(-&fd)) < 1e-4, "{} vs {}", r.matrix, fd);
}

#[test]
fn rank_deficient_qutrit_r_matches_manifold_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for _ in 0..50 {
        // pure effects supported on the first two levels, plus a weak third
        // component: optima of rank 1 or 2
        let items: Vec<(HermitianOperator, f64)> = (0..4)
            .map(|_| {
                let mut psi: Vec<Complex64> = (0..3)
                    .map(|_| Complex64::new(rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)))
                    .collect();
                psi[2] *= 0.2;
                (HermitianOperator::outer(&psi), rng.random_range(5.0..40.0))
            })
            .collect();
        let set = EffectSet::from_counts(&items).unwrap();
        let result = solve(&set);
        if result.rank == 3 {
            continue;
        }
        let r = build_r(&result, &set);
        let rank = result.rank;
        assert_eq!(r.dim_tangent(), 9 - (3 - rank) * (3 - rank) - 1);
        let fd = fd_hessian_manifold(&set, &result, &r.basis);
        assert!(rel_diff(&r.matrix, &(-fd)) < 1e-4, "rank {rank}");
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} rank-deficient instances");
}

#[test]
fn flat_effects_are_unidentifiable() {
    let set = EffectSet::from_operators(&[HermitianOperator::identity(2).scale(0.5)]).unwrap();
    let result = TomographyResult::evaluate(&DensityMatrix::maximally_mixed(2), &set).unwrap();
    let r = build_r(&result, &set);
    for a in pauli::all() {
        assert!(matches!(variance(&a, &r, &result), Err(Error::Unidentifiable(_))));
    }
}

#[test]
fn tangent_dimension_matches_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 2..=5 {
        for rank in 1..=n {
            let p = random::projector(n, rank, &mut rng);
            let basis = TangentBasis::new(&p, 1e-10);
            assert_eq!(basis.len(), n * n - (n - rank) * (n - rank) - 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn variance_properties(seed in any::<u64>(), c in -3.0f64..3.0, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 2 + (seed % 2) as usize;
        let effects: Vec<HermitianOperator> = (0..30)
            .map(|_| random::density_with_rank(dim, 1, &mut rng).into_operator())
            .collect();
        let set = EffectSet::from_operators(&effects).unwrap();
        let result = solve(&set);
        let r = build_r(&result, &set);
        let sym = (&r.matrix - r.matrix.transpose()).norm();
        prop_assert!(sym < 1e-9);
        let min = r.eigenvalues()[0];
        prop_assert!(min >= -1e-8 * r.matrix.norm());
        let a = random::hermitian(dim, &mut rng);
        let base = variance(&a, &r, &result).unwrap().variance;
        prop_assert!(base >= 0.0);
        let shifted = &a + &HermitianOperator::identity(dim).scale(shift);
        let vs = variance(&shifted, &r, &result).unwrap().variance;
        prop_assert!((vs - base).abs() <= 1e-9 * base.max(1e-12));
        let vc = variance(&a.scale(c), &r, &result).unwrap().variance;
        prop_assert!((vc - c * c * base).abs() <= 1e-9 * (c * c * base).max(1e-12));
    }
}

#[test]
fn oracle_flat_prior_is_symmetric() {
    let opts = OracleOptions {
        n_samples: 100_000,
        seed: 1,
        prior: Prior::HilbertSchmidt,
    };
    let est = bayesian_mc_oracle(None, &pauli::z(), &opts).unwrap();
    assert!(est.mean.abs() <= 3.0 * est.mean_stderr);
    // second moment of z under the uniform ball is 1/5
    assert!((est.variance - 0.2).abs() <= 3.0 * est.variance_stderr + 1e-3);
}

#[test]
fn oracle_is_deterministic() {
    let set = EffectSet::from_counts(&[(pg(), 30.0), (pe(), 70.0)]).unwrap();
    let opts = OracleOptions {
        n_samples: 20_000,
        seed: 5,
        prior: Prior::HilbertSchmidt,
    };
    let a = bayesian_mc_oracle(Some(&set), &pauli::z(), &opts).unwrap();
    let b = bayesian_mc_oracle(Some(&set), &pauli::z(), &opts).unwrap();
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.variance.to_bits(), b.variance.to_bits());
}

#[test]
fn oracle_binomial_agrees_with_laplace() {
    let set = EffectSet::from_counts(&[(pg(), 30.0), (pe(), 70.0)]).unwrap();
    let result = solve(&set);
    let r = build_r(&result, &set);
    let laplace = variance(&pauli::z(), &r, &result).unwrap();
    let opts = OracleOptions {
        n_samples: 200_000,
        seed: 11,
        prior: Prior::HilbertSchmidt,
    };
    let est = bayesian_mc_oracle(Some(&set), &pauli::z(), &opts).unwrap();
    assert!(est.effective_sample_size >= 100.0);
    // O(1/N) shift of the mean is allowed on top of the Monte-Carlo error
    assert!((est.mean - laplace.mean).abs() <= 3.0 * est.mean_stderr + 2.0 / 100.0);
    assert!((est.variance - laplace.variance).abs() <= 0.15 * laplace.variance);
}

#[test]
fn oracle_prior_independence_at_large_n() {
    let set = EffectSet::from_counts(&[(pg(), 160.0), (pe(), 240.0)]).unwrap();
    let run = |prior| {
        bayesian_mc_oracle(
            Some(&set),
            &pauli::z(),
            &OracleOptions {
                n_samples: 200_000,
                seed: 3,
                prior,
            },
        )
        .unwrap()
    };
    let hs = run(Prior::HilbertSchmidt);
    let bures = run(Prior::Bures);
    let err = 3.0 * (hs.variance_stderr.powi(2) + bures.variance_stderr.powi(2)).sqrt();
    assert!((hs.variance - bures.variance).abs() <= err + 0.10 * hs.variance);
}
