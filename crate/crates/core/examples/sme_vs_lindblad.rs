//! Averaged stochastic trajectories reproduce the Lindblad evolution.

use trajtomo::continuous::{lindblad_evolve, simulate_sme};
use trajtomo::models::{build_fluorescence_model, FluorescenceParams};
use trajtomo::operators::pauli;
use trajtomo::qubit::BlochVector;

fn main() -> trajtomo::Result<()> {
    let p = FluorescenceParams::default();
    let model = build_fluorescence_model(&p)?;
    let plus = BlochVector::new(1.0, 0.0, 0.0)?.to_density();
    let n = 2000;
    let steps = p.n_steps();
    let mut mean = vec![[0.0; 2]; steps + 1];
    for seed in 0..n {
        let (_, states) = simulate_sme(&model, &plus, p.dt, p.duration, seed)?;
        for (acc, rho) in mean.iter_mut().zip(&states) {
            acc[0] += rho.expectation(&pauli::x()) / n as f64;
            acc[1] += rho.expectation(&pauli::z()) / n as f64;
        }
    }
    let reference = lindblad_evolve(&model, &plus, p.dt, p.duration)?;
    for k in (0..=steps).step_by(5) {
        println!(
            "t = {:4.1} us  x {:+.3} ({:+.3})  z {:+.3} ({:+.3})",
            k as f64 * p.dt * 1e6,
            mean[k][0],
            reference[k].expectation(&pauli::x()),
            mean[k][1],
            reference[k].expectation(&pauli::z())
        );
    }
    Ok(())
}
