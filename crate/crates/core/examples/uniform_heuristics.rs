//! Optimal leakage of a 21-level uniform load against the time-division and
//! limit-maximum-output baselines.

use privpower::ba::{solve_power, BaOptions, BaProblem};
use privpower::heuristics::{limit_max_curve, limit_max_policy, time_division, time_division_policy};
use privpower::models::DiscreteLoadModel;
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let model = DiscreteLoadModel::uniform_grid(21, 0.1)?;
    let problem = BaProblem::for_model(&model);
    let opts = BaOptions::default();

    println!("time division (formula / exact policy) vs optimal, bits");
    for k in 0..=10 {
        let power = 0.1 * k as f64;
        let formula = time_division(&model, power, Unit::Bits)?.leakage;
        let exact = time_division_policy(&model, power)?.mutual_information(model.pmf(), Unit::Bits);
        let (_, optimal) = solve_power(&problem, power, &opts)?;
        println!("P = {power:.1}: {formula:.5} / {exact:.5} vs {:.5}", optimal.leakage);
    }

    println!("limit max output, threshold index k");
    for (k, point) in limit_max_curve(&model, Unit::Bits)?.iter().enumerate() {
        let exact = limit_max_policy(&model, k)?.mutual_information(model.pmf(), Unit::Bits);
        let (_, optimal) = solve_power(&problem, point.power, &opts)?;
        println!(
            "k = {k:>2}: P = {:.5}, formula {:.5}, exact policy {exact:.5}, optimal {:.5}",
            point.power, point.leakage, optimal.leakage
        );
    }
    Ok(())
}
