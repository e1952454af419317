//! The forward filter and the backward effect give the same record probability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajtomo::filter::{backward_run, forward_run, simulate_discrete, DiscreteRecord};
use trajtomo::random;

fn main() -> trajtomo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let family = random::kraus_family(3, 40, 3, 2, &mut rng);
    let truth = random::density(3, &mut rng);
    let (outcomes, _) = simulate_discrete(&family, &truth, 0, 40, &mut rng)?;
    let record = DiscreteRecord::new(0, outcomes);
    println!("outcomes {:?}", record.outcomes);

    let effect = backward_run(&family, &record)?;
    for k in 0..3 {
        let rho = random::density(3, &mut rng);
        let fwd = forward_run(&family, &record, &rho)?.log_prob;
        let back = effect.log_prob(&rho);
        println!("state {k}: forward {fwd:.12}  backward {back:.12}  diff {:.1e}", (fwd - back).abs());
    }
    Ok(())
}
