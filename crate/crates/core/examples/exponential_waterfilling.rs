//! Reverse waterfilling over exponential users, and how the leakage of a
//! fixed total mean changes when it is spread over more users.

use privpower::allocator::waterfill_exponential;
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let a = waterfill_exponential(&[0.5, 1.0, 2.0], 2.0, Unit::Nats)?;
    println!(
        "means 0.5, 1, 2 at P = 2: level {}, split {:?}, leakage {} nats",
        a.level, a.per_user, a.total_leakage
    );

    println!("{:>5} {:>10} {:>10} {:>10}", "P", "N = 1", "N = 2", "N = 3");
    for k in 1..=10 {
        let power = 0.1 * k as f64;
        let row: Vec<String> = (1..=3)
            .map(|n| {
                let means = vec![1.0 / n as f64; n];
                waterfill_exponential(&means, power, Unit::Nats).map(|a| format!("{:>10.5}", a.total_leakage.to_f64()))
            })
            .collect::<privpower::Result<_>>()?;
        println!("{power:>5.1} {}", row.join(" "));
    }
    Ok(())
}
