//! The general allocator on users with different kinds of curves: a
//! closed-form binary user, a tabulated Blahut-Arimoto curve and an
//! exponential user.

use privpower::allocator::{allocate_general, BinaryCurve, ExponentialCurve, LeakageCurve, TabulatedCurve};
use privpower::ba::{solve_curve, BaOptions, BaProblem};
use privpower::models::{BinaryLoadModel, DiscreteLoadModel};
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let binary = BinaryCurve(BinaryLoadModel::new(0.0, 1.0, 0.3)?);
    let three_level = DiscreteLoadModel::new(vec![0.0, 0.5, 1.5], vec![0.2, 0.5, 0.3])?;
    let pp = three_level.perfect_privacy_power();
    let grid: Vec<f64> = (0..=160).map(|k| pp * k as f64 / 160.0).collect();
    let opts = BaOptions { unit: Unit::Nats, ..BaOptions::default() };
    let tabulated = TabulatedCurve::from_curve(&solve_curve(&BaProblem::for_model(&three_level), &grid, &opts)?)?;
    let exponential = ExponentialCurve { mean: 0.4 };
    let curves: [&dyn LeakageCurve; 3] = [&binary, &tabulated, &exponential];

    for power in [0.1, 0.3, 0.6, 1.0, 1.5] {
        let a = allocate_general(&curves, power, Unit::Nats)?;
        println!(
            "P = {power:.1}: split {:.4?}, slope {:.4}, leakage {:.5} nats",
            a.per_user,
            a.level,
            a.total_leakage.to_f64()
        );
    }
    Ok(())
}
