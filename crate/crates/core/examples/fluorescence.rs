//! Heterodyne fluorescence of a qubit prepared in |+>: simulate trajectories,
//! then estimate the initial Bloch vector with the closed-form qubit path.
//!
//! `cargo run --release --example fluorescence -- 4000`

use trajtomo::continuous::{backward_continuous, simulate_sme_batch};
use trajtomo::maxlike::{solve_maxlike, EffectSet, MaxLikeOptions};
use trajtomo::models::{build_fluorescence_model, FluorescenceParams};
use trajtomo::qubit::{effects_from_set, variance_bloch, BlochVector};

fn main() -> trajtomo::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    let p = FluorescenceParams::default();
    let model = build_fluorescence_model(&p)?;
    let plus = BlochVector::new(1.0, 0.0, 0.0)?.to_density();
    let records = simulate_sme_batch(&model, &plus, p.dt, p.n_steps(), n, 11)?;
    let effects = records.iter().map(|r| backward_continuous(&model, r)).collect::<trajtomo::Result<Vec<_>>>()?;
    let set = EffectSet::from_adjoint(&effects)?;
    let result = solve_maxlike(&set, &MaxLikeOptions::default())?;
    let v = BlochVector::from_density(&result.rho_ml)?;
    let bloch = effects_from_set(&set)?;
    println!("{n} trajectories, {} steps of {} ns", p.n_steps(), p.dt * 1e9);
    for (name, value, axis) in [("x", v.x, [1.0, 0.0, 0.0]), ("y", v.y, [0.0, 1.0, 0.0]), ("z", v.z, [0.0, 0.0, 1.0])] {
        let s2 = variance_bloch(&v, &bloch, &nalgebra::Vector3::from(axis))?;
        println!("{name} = {value:+.3} +- {:.3}", 2.0 * s2.sqrt());
    }
    Ok(())
}
