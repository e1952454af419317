//! Photon counting in a cavity with one photon injected at t = 0: mean photon
//! number estimated at several start times, against the exponential decay
//! toward the thermal background.

use trajtomo::cli::{parse_observables, simulate_records, tomography_sweep, LoadedModel, ModelFile, ModelSpec, QndScenario};
use trajtomo::Tolerances;

fn main() -> trajtomo::Result<()> {
    let scenario = QndScenario {
        t_start: -60e-3,
        t_end: 120e-3,
        injection_time: Some(0.0),
        ..QndScenario::default()
    };
    let file = ModelFile {
        spec: ModelSpec::Qnd(scenario.clone()),
        initial_state: None,
    };
    let model = LoadedModel::from_bytes(file.to_json()?.as_bytes())?;
    let records = simulate_records(&model, 500, 2)?;
    let times: Vec<f64> = [-40.0, -10.0, 0.0, 10.0, 30.0, 60.0].iter().map(|ms| ms * 1e-3).collect();
    let sweep = tomography_sweep(&model, &records, &times, &parse_observables("photon-number")?, &Tolerances::DEFAULT)?;

    let rho_ss = scenario.cavity.stationary_state()?;
    let n_ss = rho_ss.expectation(&trajtomo::models::photon_number(scenario.cavity.n_max));
    println!("stationary <n> = {n_ss:.4}");
    for point in &sweep {
        let est = &point.observables[0];
        let expected = if point.t < 0.0 { n_ss } else { n_ss + (-point.t / scenario.cavity.t_c).exp() };
        match &est.interval {
            Ok(iv) => println!("t = {:+6.1} ms  <n> = {:.3} +- {:.3}  (model {expected:.3})", point.t * 1e3, est.mean, 2.0 * iv.sigma()),
            Err(why) => println!("t = {:+6.1} ms  <n> = {:.3}  ({why})", point.t * 1e3, est.mean),
        }
    }
    Ok(())
}
