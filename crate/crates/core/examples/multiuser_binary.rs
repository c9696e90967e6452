//! Splitting an AES budget among three independent two-level users. The
//! most predictable user reaches perfect privacy first.

use privpower::allocator::allocate_binary;
use privpower::models::BinaryLoadModel;
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let users = [
        BinaryLoadModel::new(0.0, 1.0, 0.9)?,
        BinaryLoadModel::new(0.0, 1.0, 0.5)?,
        BinaryLoadModel::new(0.0, 1.0, 0.1)?,
    ];
    println!("{:>5} | {:>8} {:>8} {:>8} | {:>8} {:>8} {:>8} | {:>8}", "P", "P1", "P2", "P3", "I1", "I2", "I3", "total");
    for k in 0..=16 {
        let power = 0.1 * k as f64;
        let a = allocate_binary(&users, power, Unit::Bits)?;
        let i: Vec<f64> = a.per_user_leakage.iter().map(|l| l.to_f64()).collect();
        println!(
            "{power:>5.2} | {:>8.4} {:>8.4} {:>8.4} | {:>8.4} {:>8.4} {:>8.4} | {:>8.4}",
            a.per_user[0],
            a.per_user[1],
            a.per_user[2],
            i[0],
            i[1],
            i[2],
            a.total_leakage.to_f64()
        );
    }
    Ok(())
}
