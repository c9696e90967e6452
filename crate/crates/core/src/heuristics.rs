//! Two simple baseline EMU policies.
//!
//! * Time division: each slot the whole demand comes either from the AES
//!   (probability `P / E[X]`) or from the grid.
//! * Limit max output: the grid never delivers more than a threshold level;
//!   the AES covers the excess.
//!
//! [`time_division`] and [`limit_max_output`] report the textbook
//! closed-form values. [`time_division_policy`] and [`limit_max_policy`]
//! build the actual conditional distributions, whose exact leakage can be
//! evaluated or simulated.

use serde::{Deserialize, Serialize};

use crate::ba::{CurvePoint, Policy, Solver};
use crate::error::{Error, Result};
use crate::info::entropy_nats;
use crate::models::DiscreteLoadModel;
use crate::units::Unit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeuristicSpec {
    TimeDivision,
    /// Threshold is the `k`-th alphabet level.
    LimitMaxOutput { k: usize },
}

impl HeuristicSpec {
    pub fn validate(&self, model: &DiscreteLoadModel) -> Result<()> {
        match *self {
            HeuristicSpec::TimeDivision => Ok(()),
            HeuristicSpec::LimitMaxOutput { k } => check_level(model, k),
        }
    }

    /// The conditional distribution implementing this heuristic. `power` is
    /// only used by time division.
    pub fn policy(&self, model: &DiscreteLoadModel, power: f64) -> Result<Policy> {
        match *self {
            HeuristicSpec::TimeDivision => time_division_policy(model, power),
            HeuristicSpec::LimitMaxOutput { k } => limit_max_policy(model, k),
        }
    }
}

fn check_level(model: &DiscreteLoadModel, k: usize) -> Result<()> {
    if k >= model.len() {
        return Err(Error::InvalidArgument(format!(
            "threshold index {k} out of range for {} levels",
            model.len()
        )));
    }
    Ok(())
}

fn aes_share(model: &DiscreteLoadModel, power: f64) -> Result<f64> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::InvalidArgument(format!("power must be finite and >= 0, got {power}")));
    }
    let mean = model.mean();
    Ok(if mean <= 0.0 { 1.0 } else { (power / mean).min(1.0) })
}

/// `(1 - P/E[X]) H(X)`, clamped to zero for `P >= E[X]`.
pub fn time_division(model: &DiscreteLoadModel, power: f64, unit: Unit) -> Result<CurvePoint> {
    let q = aes_share(model, power)?;
    let h = model.entropy(unit);
    let mean = model.mean();
    Ok(CurvePoint {
        power,
        used_power: q * mean,
        leakage: (1.0 - q) * h,
        unit,
        solver: Solver::TimeDivision,
        multiplier: if q < 1.0 && mean > 0.0 { -h / mean } else { 0.0 },
    })
}

/// `Y = X` with probability `1 - P/E[X]`, otherwise `Y = 0`.
///
/// Because the "all from AES" reading 0 can coincide with a genuine zero
/// demand, the exact leakage of this policy is at most [`time_division`].
pub fn time_division_policy(model: &DiscreteLoadModel, power: f64) -> Result<Policy> {
    let q = aes_share(model, power)?;
    let alphabet = model.alphabet();
    let mut outputs = Vec::with_capacity(alphabet.len() + 1);
    if alphabet[0] > 0.0 {
        outputs.push(0.0);
    }
    outputs.extend_from_slice(alphabet);
    let n_out = outputs.len();
    let offset = n_out - alphabet.len();
    let mut matrix = vec![0.0; alphabet.len() * n_out];
    for x in 0..alphabet.len() {
        matrix[x * n_out] += q;
        matrix[x * n_out + x + offset] += 1.0 - q;
    }
    Policy::scalar(alphabet, &outputs, matrix)
}

/// Point for threshold index `k` on an evenly spaced uniform model:
/// `P = (N-1-k)(N-k)c/(2N)` and `I = log N - (N-k)/(2N) log(N-k)`.
pub fn limit_max_output(model: &DiscreteLoadModel, k: usize, unit: Unit) -> Result<CurvePoint> {
    check_level(model, k)?;
    let c = model.uniform_spacing().ok_or_else(|| {
        Error::Unsupported("limit-max closed form needs an evenly spaced uniform model; use limit_max_output_general".into())
    })?;
    let n = model.len() as f64;
    let k = k as f64;
    let power = (n - 1.0 - k) * (n - k) * c / (2.0 * n);
    let nats = n.ln() - (n - k) / (2.0 * n) * (n - k).ln();
    Ok(CurvePoint {
        power,
        used_power: power,
        leakage: unit.from_nats(nats),
        unit,
        solver: Solver::LimitMaxOutput,
        multiplier: f64::NAN,
    })
}

/// Extension for arbitrary pmfs: exact `P = E[(X - x_k)^+]` and
/// `I = H(min(X, x_k))`.
pub fn limit_max_output_general(model: &DiscreteLoadModel, k: usize, unit: Unit) -> Result<CurvePoint> {
    check_level(model, k)?;
    let alphabet = model.alphabet();
    let pmf = model.pmf();
    let cap = alphabet[k];
    let power: f64 = alphabet
        .iter()
        .zip(pmf)
        .map(|(&x, &p)| p * (x - cap).max(0.0))
        .sum();
    let mut clipped = pmf[..k].to_vec();
    clipped.push(pmf[k..].iter().sum());
    Ok(CurvePoint {
        power,
        used_power: power,
        leakage: unit.from_nats(entropy_nats(&clipped)),
        unit,
        solver: Solver::LimitMaxOutput,
        multiplier: f64::NAN,
    })
}

/// Deterministic clipping `Y = min(X, x_k)`.
pub fn limit_max_policy(model: &DiscreteLoadModel, k: usize) -> Result<Policy> {
    check_level(model, k)?;
    let alphabet = model.alphabet();
    let outputs = &alphabet[..=k];
    let n_out = outputs.len();
    let mut matrix = vec![0.0; alphabet.len() * n_out];
    for x in 0..alphabet.len() {
        matrix[x * n_out + x.min(k)] = 1.0;
    }
    Policy::scalar(alphabet, outputs, matrix)
}

/// All thresholds `k = 0..N`, closed form. Power decreases in `k`.
pub fn limit_max_curve(model: &DiscreteLoadModel, unit: Unit) -> Result<Vec<CurvePoint>> {
    (0..model.len()).map(|k| limit_max_output(model, k, unit)).collect()
}

/// All thresholds with the general-pmf extension.
pub fn limit_max_curve_general(model: &DiscreteLoadModel, unit: Unit) -> Result<Vec<CurvePoint>> {
    (0..model.len()).map(|k| limit_max_output_general(model, k, unit)).collect()
}
