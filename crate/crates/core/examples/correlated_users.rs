//! Two correlated two-level users solved jointly on the product alphabet,
//! compared with the same marginals treated as independent.

use privpower::allocator::allocate_binary;
use privpower::ba::{solve_curve, BaOptions, BaProblem, DiscreteSource};
use privpower::models::{BinaryLoadModel, MultiUserModel, UserModel};
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let user = BinaryLoadModel::new(0.0, 1.0, 0.5)?;
    let joint = vec![0.4, 0.1, 0.1, 0.4];
    let model = MultiUserModel::correlated(vec![UserModel::Binary(user), UserModel::Binary(user)], joint)?;
    let problem = BaProblem::new(DiscreteSource::from_multi_user(&model)?);
    let grid: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
    let curve = solve_curve(&problem, &grid, &BaOptions::default())?;
    println!("{:>5} {:>12} {:>12}", "P", "correlated", "independent");
    for point in &curve.points {
        let independent = allocate_binary(&[user, user], point.power, Unit::Bits)?;
        println!("{:>5.1} {:>12.6} {:>12.6}", point.power, point.leakage, independent.total_leakage.to_f64());
    }
    Ok(())
}
