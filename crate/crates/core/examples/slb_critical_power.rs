//! Shannon lower bound for continuous loads and the critical power below
//! which it is achieved.

use privpower::closed_forms::{critical_power, exponential_leakage, slb_bound, slb_check};
use privpower::models::{ContinuousLoadModel, Segment, SegmentShape};
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let exponential = ContinuousLoadModel::exponential(1.0)?;
    for power in [0.25, 0.5, 1.0] {
        println!(
            "Exp(1), P = {power}: bound {} nats, exact {} nats",
            slb_bound(&exponential, power)?,
            exponential_leakage(1.0, power, Unit::Nats)?
        );
    }
    println!("Exp(1) critical power: {:?}", critical_power(&exponential)?);

    let uniform = ContinuousLoadModel::uniform(0.0, 2.0)?;
    println!("U[0, 2] critical power: {:?}", critical_power(&uniform)?);

    // flat on [0, 1), exponential tail afterwards
    let tail_scale = 0.5 * std::f64::consts::E;
    let mixed = ContinuousLoadModel::piecewise(vec![
        Segment::new(0.0, 1.0, SegmentShape::Polynomial(vec![0.5])),
        Segment::new(1.0, f64::INFINITY, SegmentShape::Exponential { scale: tail_scale, rate: -1.0 }),
    ])?;
    let report = slb_check(&mixed, 0.5)?;
    println!(
        "flat + tail at P = 0.5: bound {} nats, achievable {}, atoms {:?}, critical power {:?}",
        report.bound_nats, report.nonneg, report.atoms, report.critical_power
    );
    Ok(())
}
