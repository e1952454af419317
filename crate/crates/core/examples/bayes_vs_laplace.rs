//! Laplace-approximate variance against a Monte-Carlo Bayesian posterior,
//! for an interior and a pure-state optimum.

use trajtomo::confidence::oracle::{bayesian_mc_oracle, OracleOptions};
use trajtomo::confidence::{build_r, variance};
use trajtomo::maxlike::{solve_maxlike, EffectSet, MaxLikeOptions};
use trajtomo::models::pauli_povm;
use trajtomo::operators::pauli;

fn main() -> trajtomo::Result<()> {
    let povm = pauli_povm();
    let cases = [("interior", [0.30, 0.03, 0.20, 0.13, 0.22, 0.12], pauli::z()), ("pure", [1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0, 0.0], pauli::x())];
    for (name, freq, a) in &cases {
        for n in [25.0, 100.0, 400.0] {
            let items: Vec<_> = povm.iter().cloned().zip(freq.iter().map(|f| f * n)).collect();
            let set = EffectSet::from_counts(&items)?;
            let result = solve_maxlike(&set, &MaxLikeOptions::default())?;
            let laplace = variance(a, &build_r(&result, &set), &result)?.variance;
            let opts = OracleOptions { n_samples: 200_000, ..OracleOptions::default() };
            let mc = bayesian_mc_oracle(Some(&set), a, &opts)?;
            println!(
                "{name:8} N = {n:3}  laplace {laplace:.5}  bayes {:.5} +- {:.5}  ess {:.0}",
                mc.variance, mc.variance_stderr, mc.effective_sample_size
            );
        }
    }
    Ok(())
}
