//! Monte-Carlo check that the optimal memoryless policies deliver their
//! analytic power and leakage.

use privpower::closed_forms::{binary_leakage, binary_policy, exponential_policy};
use privpower::models::{BinaryLoadModel, ContinuousLoadModel, MultiUserModel, UserModel};
use privpower::simulator::{run, PolicySet, TraceConfig, UserPolicy};
use privpower::Unit;

fn main() -> privpower::Result<()> {
    let model = BinaryLoadModel::new(0.0, 1.0, 0.5)?;
    let config = TraceConfig {
        n: 1_000_000,
        seed: 42,
        users: MultiUserModel::independent(vec![UserModel::Binary(model)])?,
        policies: PolicySet::PerUser(vec![UserPolicy::Discrete(binary_policy(&model, 0.2)?)]),
        unit: Unit::Bits,
    };
    let report = run(&config)?;
    let mi = report.total_leakage.expect("discrete user");
    println!(
        "binary: power {:.5} +- {:.5} (target 0.2), leakage {:.5} bits (analytic {:.5}, bias {:.1e})",
        report.empirical_power,
        report.power_std_error,
        mi.value,
        binary_leakage(&model, 0.2, Unit::Bits),
        mi.bias
    );

    let config = TraceConfig {
        n: 1_000_000,
        seed: 42,
        users: MultiUserModel::independent(vec![UserModel::Continuous(ContinuousLoadModel::exponential(1.0)?)])?,
        policies: PolicySet::PerUser(vec![UserPolicy::Exponential(exponential_policy(1.0, 0.5)?)]),
        unit: Unit::Nats,
    };
    let report = run(&config)?;
    let d = report.continuous[0].expect("continuous user");
    println!(
        "exponential: mean V {:.5} +- {:.5} (target 0.5), var V {:.5} (target 0.25), corr(V, Y) {:.5}, atom share {:.5}",
        d.mean_v, d.mean_v_std_error, d.var_v, d.corr_v_y, d.atom_fraction
    );
    Ok(())
}
