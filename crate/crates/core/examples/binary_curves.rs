//! Privacy-power curves of a two-level load for several probabilities of the
//! low level, closed form next to Blahut-Arimoto.

use privpower::ba::{solve_power, BaOptions, BaProblem};
use privpower::closed_forms::binary_leakage;
use privpower::models::BinaryLoadModel;
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let opts = BaOptions::default();
    println!("{:>5} {:>6} {:>12} {:>12}", "p", "P", "closed form", "BA");
    for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let model = BinaryLoadModel::new(0.0, 1.0, p)?;
        let problem = BaProblem::for_model(&model.to_discrete());
        for k in 0..=10 {
            let power = 0.1 * k as f64;
            let exact = binary_leakage(&model, power, Unit::Bits);
            let (_, point) = solve_power(&problem, power, &opts)?;
            println!("{p:>5.1} {power:>6.2} {exact:>12.8} {:>12.8}", point.leakage);
        }
        println!("      perfect privacy from P = {:.2}", model.perfect_privacy_power());
    }
    Ok(())
}
