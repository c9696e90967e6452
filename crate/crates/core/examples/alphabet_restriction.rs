//! Extra output levels between the demand levels never reduce the optimal
//! leakage.

use privpower::ba::{validate_alphabet_restriction, BaOptions};
use privpower::models::DiscreteLoadModel;

fn main() -> privpower::Result<()> {
    let model = DiscreteLoadModel::uniform(vec![0.0, 1.0, 2.0])?;
    for refinement in 0..=3 {
        let r = validate_alphabet_restriction(&model, refinement, 0.5, &BaOptions::default())?;
        println!(
            "refinement {refinement}: restricted {:.9}, refined {:.9}, difference {:+.2e}, holds {}",
            r.restricted, r.refined, r.difference, r.holds
        );
    }
    Ok(())
}
