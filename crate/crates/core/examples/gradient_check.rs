//! Compares the analytic latent gradient with central differences for every
//! injection location and ensembling mechanism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentspace::gradient::{finite_diff_check, loss_and_grad};
use sentspace::injection::{InjectionConfig, InjectionSpec, LatentState, Locations, Mechanism};
use sentspace::model::{init_weights, ModelConfig};
use sentspace::tokenizer::TokenSeq;

fn main() -> sentspace::Result<()> {
    let w = init_weights::<f64>(&ModelConfig::desk(40), 1)?;
    let tokens = TokenSeq::new(vec![5, 9, 12, 7, 30, 22, 8, 14])?;
    let layers = Locations {
        embed: false,
        layers: true,
        head: false,
    };
    println!(
        "{:<8} {:<11} {:>10} {:>12}",
        "site", "mechanism", "|grad|", "max rel err"
    );
    for (name, loc) in [
        ("embed", Locations::EMBED),
        ("layers", layers),
        ("head", Locations::HEAD),
        ("all", Locations::ALL),
    ] {
        for mech in [Mechanism::None, Mechanism::Attention, Mechanism::Interleave] {
            let k = if mech == Mechanism::None { 1 } else { 4 };
            let spec =
                InjectionSpec::<f64>::build(InjectionConfig::new(loc, mech, k, 64), &w.config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let z = LatentState::new(
                (0..64).map(|_| rng.random_range(-0.5..0.5)).collect(),
                64,
                k,
            )?;
            let g = loss_and_grad(&w, &tokens, &spec, &z)?;
            let err = finite_diff_check(&w, &tokens, &spec, &z, 1e-5, 20, 0)?;
            println!("{name:<8} {mech:<11} {:>10.4} {err:>12.2e}", g.grad_norm());
        }
    }
    Ok(())
}
