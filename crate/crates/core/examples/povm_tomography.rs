//! Tomography from Pauli measurement counts, with 95% intervals.

use trajtomo::confidence::{build_r, variance};
use trajtomo::maxlike::{solve_maxlike, EffectSet, MaxLikeOptions};
use trajtomo::models::pauli_povm;
use trajtomo::operators::pauli;

fn main() -> trajtomo::Result<()> {
    // x+, x-, y+, y-, z+, z-
    let counts = [310.0, 20.0, 170.0, 160.0, 250.0, 90.0];
    let items: Vec<_> = pauli_povm().into_iter().zip(counts).collect();
    let set = EffectSet::from_counts(&items)?;
    let result = solve_maxlike(&set, &MaxLikeOptions::default())?;
    println!(
        "rank {}  lambda {:.3}  kkt {:.2e}  iterations {}",
        result.rank, result.lambda_ml, result.kkt_residual, result.iterations
    );
    let r = build_r(&result, &set);
    for (name, a) in ["x", "y", "z"].iter().zip(pauli::all()) {
        let iv = variance(&a, &r, &result)?;
        println!("<s{name}> = {:+.4} in [{:+.4}, {:+.4}]", iv.mean, iv.lo95(), iv.hi95());
    }
    Ok(())
}
