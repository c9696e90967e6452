//! Splitting the AES budget across independent users.
//!
//! With independent loads the joint privacy-power function separates into
//! `min sum_i I_i(P_i)` subject to `sum_i P_i <= P`. Every per-user curve is
//! convex and non-increasing, so the optimum equalises the marginal slopes
//! `-I_i'(P_i) = mu` across users that are not yet fully private.

use serde::Serialize;

use crate::ba::{PrivacyCurve, Solver};
use crate::closed_forms::{binary_allocate, binary_leakage, binary_leakage_slope, exponential_leakage};
use crate::error::{Error, Result};
use crate::models::BinaryLoadModel;
use crate::units::{Leakage, Unit};

#[derive(Clone, Debug, Serialize)]
pub struct Allocation {
    /// Budget requested.
    pub power: f64,
    pub per_user: Vec<f64>,
    /// Water level (exponential users) or common slope magnitude in nats
    /// per energy unit (everything else).
    pub level: f64,
    pub per_user_leakage: Vec<Leakage>,
    pub total_leakage: Leakage,
    pub unit: Unit,
    /// User already at its perfect-privacy power.
    pub saturated: Vec<bool>,
    pub solver: Solver,
}

/// A per-user privacy-power function. Values are in nats.
pub trait LeakageCurve: Send + Sync {
    fn leakage(&self, power: f64) -> Leakage;
    /// Right-hand derivative, `<= 0`.
    fn slope(&self, power: f64) -> f64;
    /// Smallest power with zero leakage.
    fn perfect_privacy_power(&self) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct BinaryCurve(pub BinaryLoadModel);

impl LeakageCurve for BinaryCurve {
    fn leakage(&self, power: f64) -> Leakage {
        Leakage::Finite(binary_leakage(&self.0, power, Unit::Nats))
    }

    fn slope(&self, power: f64) -> f64 {
        binary_leakage_slope(&self.0, power)
    }

    fn perfect_privacy_power(&self) -> f64 {
        self.0.perfect_privacy_power()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExponentialCurve {
    pub mean: f64,
}

impl LeakageCurve for ExponentialCurve {
    fn leakage(&self, power: f64) -> Leakage {
        exponential_leakage(self.mean, power.max(0.0), Unit::Nats).unwrap_or(Leakage::Unbounded)
    }

    fn slope(&self, power: f64) -> f64 {
        if power >= self.mean {
            0.0
        } else if power <= 0.0 {
            f64::NEG_INFINITY
        } else {
            -1.0 / power
        }
    }

    fn perfect_privacy_power(&self) -> f64 {
        self.mean
    }
}

/// A curve known on a grid (typically from Blahut-Arimoto), linearly
/// interpolated. Linear interpolation keeps the tabulated points' convexity;
/// slopes come from centered differences with step `1e-6 * scale`.
#[derive(Clone, Debug)]
pub struct TabulatedCurve {
    powers: Vec<f64>,
    nats: Vec<f64>,
    step: f64,
}

impl TabulatedCurve {
    pub fn new(powers: Vec<f64>, nats: Vec<f64>) -> Result<Self> {
        if powers.len() != nats.len() || powers.len() < 2 {
            return Err(Error::InvalidArgument("tabulated curve needs >= 2 matching points".into()));
        }
        if powers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("tabulated powers must be strictly increasing".into()));
        }
        let scale = powers[powers.len() - 1] - powers[0];
        Ok(Self { powers, nats, step: 1e-6 * scale })
    }

    pub fn from_curve(curve: &PrivacyCurve) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = curve
            .points
            .iter()
            .map(|p| (p.power, curve.unit.to_nats(p.leakage)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        Self::new(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect())
    }

    fn interpolate(&self, power: f64) -> f64 {
        let n = self.powers.len();
        if power <= self.powers[0] {
            return self.nats[0];
        }
        if power >= self.powers[n - 1] {
            return self.nats[n - 1];
        }
        let k = self.powers.partition_point(|&p| p <= power) - 1;
        let t = (power - self.powers[k]) / (self.powers[k + 1] - self.powers[k]);
        self.nats[k] + t * (self.nats[k + 1] - self.nats[k])
    }
}

impl LeakageCurve for TabulatedCurve {
    fn leakage(&self, power: f64) -> Leakage {
        Leakage::Finite(self.interpolate(power))
    }

    fn slope(&self, power: f64) -> f64 {
        let h = self.step;
        let lo = (power - h).max(self.powers[0]);
        let hi = power + h;
        ((self.interpolate(hi) - self.interpolate(lo)) / (hi - lo)).min(0.0)
    }

    fn perfect_privacy_power(&self) -> f64 {
        self.powers
            .iter()
            .zip(&self.nats)
            .find(|(_, &i)| i <= 1e-12)
            .map(|(&p, _)| p)
            .unwrap_or(self.powers[self.powers.len() - 1])
    }
}

const PROBE_POINTS: usize = 65;

fn verify_curve(index: usize, curve: &dyn LeakageCurve) -> Result<()> {
    let pp = curve.perfect_privacy_power();
    if !(pp.is_finite() && pp >= 0.0) {
        return Err(Error::NonConvexCurve { index, reason: format!("perfect-privacy power {pp}") });
    }
    if pp == 0.0 {
        return Ok(());
    }
    // skip P = 0 where the exponential curve is unbounded
    let probe: Vec<(f64, f64)> = (1..=PROBE_POINTS)
        .map(|k| {
            let p = pp * k as f64 / PROBE_POINTS as f64;
            (p, curve.leakage(p).to_f64())
        })
        .collect();
    let scale = probe[0].1.abs().max(1.0);
    for w in probe.windows(2) {
        if w[1].1 > w[0].1 + 1e-9 * scale {
            return Err(Error::NonConvexCurve { index, reason: format!("increases between P = {} and {}", w[0].0, w[1].0) });
        }
    }
    for w in probe.windows(3) {
        let chord = 0.5 * (w[0].1 + w[2].1);
        if w[1].1 > chord + 1e-9 * scale {
            return Err(Error::NonConvexCurve { index, reason: format!("not convex at P = {}", w[1].0) });
        }
    }
    Ok(())
}

/// Smallest `P` in `[0, pp]` where the slope magnitude drops to `mu` or below.
fn power_at_slope(curve: &dyn LeakageCurve, mu: f64) -> f64 {
    let pp = curve.perfect_privacy_power();
    if pp <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, pp);
    if -curve.slope(0.0) <= mu {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if -curve.slope(mid) <= mu {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// KKT allocation for arbitrary convex non-increasing per-user curves.
pub fn allocate_general(curves: &[&dyn LeakageCurve], power: f64, unit: Unit) -> Result<Allocation> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::InvalidArgument(format!("power must be finite and >= 0, got {power}")));
    }
    for (i, c) in curves.iter().enumerate() {
        verify_curve(i, *c)?;
    }
    let pps: Vec<f64> = curves.iter().map(|c| c.perfect_privacy_power()).collect();
    let total_pp: f64 = pps.iter().sum();
    let target = power.min(total_pp);
    let powers_at = |mu: f64| curves.iter().map(|c| power_at_slope(*c, mu)).collect::<Vec<f64>>();
    let sum = |v: &[f64]| v.iter().sum::<f64>();

    let (per_user, level) = if target <= 0.0 {
        (vec![0.0; curves.len()], f64::INFINITY)
    } else if target >= total_pp {
        (pps.clone(), 0.0)
    } else {
        let mut mu_lo = 0.0;
        let mut mu_hi = 1.0;
        while sum(&powers_at(mu_hi)) > target {
            mu_lo = mu_hi;
            mu_hi *= 2.0;
            if mu_hi > 1e300 {
                break;
            }
        }
        for _ in 0..400 {
            let mid = 0.5 * (mu_lo + mu_hi);
            if mid <= mu_lo || mid >= mu_hi {
                break;
            }
            if sum(&powers_at(mid)) > target {
                mu_lo = mid;
            } else {
                mu_hi = mid;
            }
        }
        let at_lo = powers_at(mu_lo);
        let at_hi = powers_at(mu_hi);
        let residual = target - sum(&at_hi);
        let jumps: Vec<f64> = at_lo.iter().zip(&at_hi).map(|(a, b)| (a - b).max(0.0)).collect();
        let jump_total = sum(&jumps);
        let per_user = if jump_total > 0.0 {
            at_hi
                .iter()
                .zip(&jumps)
                .map(|(b, j)| b + residual * j / jump_total)
                .collect()
        } else {
            at_hi
        };
        (per_user, 0.5 * (mu_lo + mu_hi))
    };

    let per_user_leakage: Vec<Leakage> = curves
        .iter()
        .zip(&per_user)
        .map(|(c, &p)| c.leakage(p).convert(Unit::Nats, unit))
        .collect();
    let saturated = per_user
        .iter()
        .zip(&pps)
        .map(|(&p, &pp)| p >= pp * (1.0 - 1e-12))
        .collect();
    Ok(Allocation {
        power,
        per_user,
        level,
        total_leakage: per_user_leakage.iter().copied().sum(),
        per_user_leakage,
        unit,
        saturated,
        solver: Solver::ConvexAllocator,
    })
}

/// Reverse waterfilling for independent exponential users: every user gets
/// `min(level, mean_i)` with the level set so the total is
/// `min(power, sum of means)`.
pub fn waterfill_exponential(means: &[f64], power: f64, unit: Unit) -> Result<Allocation> {
    if means.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::InvalidArgument("exponential means must be > 0".into()));
    }
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::InvalidArgument(format!("power must be finite and >= 0, got {power}")));
    }
    let total: f64 = means.iter().sum();
    let target = power.min(total);

    let mut sorted = means.to_vec();
    sorted.sort_by(f64::total_cmp);
    // sum_i min(level, mean_i) is piecewise linear in the level; invert it
    let mut level = sorted.last().copied().unwrap_or(0.0);
    let mut below = 0.0;
    for (k, &m) in sorted.iter().enumerate() {
        let remaining = (sorted.len() - k) as f64;
        let candidate = (target - below) / remaining;
        if candidate <= m {
            level = candidate;
            break;
        }
        below += m;
    }

    let per_user: Vec<f64> = means.iter().map(|&m| level.min(m)).collect();
    let per_user_leakage = means
        .iter()
        .zip(&per_user)
        .map(|(&m, &p)| exponential_leakage(m, p, unit))
        .collect::<Result<Vec<_>>>()?;
    Ok(Allocation {
        power,
        saturated: means.iter().map(|&m| level >= m).collect(),
        per_user,
        level,
        total_leakage: per_user_leakage.iter().copied().sum(),
        per_user_leakage,
        unit,
        solver: Solver::Waterfilling,
    })
}

/// Closed-form allocation for independent binary users.
pub fn allocate_binary(models: &[BinaryLoadModel], power: f64, unit: Unit) -> Result<Allocation> {
    binary_allocate(models, power, unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin(p: f64) -> BinaryLoadModel {
        BinaryLoadModel::new(0.0, 1.0, p).unwrap()
    }

    #[test]
    fn waterfilling_example() {
        let a = waterfill_exponential(&[0.5, 1.0, 2.0], 2.0, Unit::Nats).unwrap();
        assert!((a.level - 0.75).abs() < 1e-15);
        assert_eq!(a.per_user, vec![0.5, 0.75, 0.75]);
        let expected = (4.0f64 / 3.0).ln() + (8.0f64 / 3.0).ln();
        assert!((a.total_leakage.to_f64() - expected).abs() < 1e-14);
        assert!((expected - 1.2685).abs() < 1e-4);
        assert_eq!(a.saturated, vec![true, false, false]);
    }

    #[test]
    fn waterfilling_full_and_single() {
        let a = waterfill_exponential(&[0.5, 1.0, 2.0], 5.0, Unit::Nats).unwrap();
        assert_eq!(a.per_user, vec![0.5, 1.0, 2.0]);
        assert_eq!(a.total_leakage, Leakage::Finite(0.0));

        let a = waterfill_exponential(&[1.0], 0.25, Unit::Nats).unwrap();
        assert_eq!(a.per_user, vec![0.25]);
        assert!((a.total_leakage.to_f64() - 4f64.ln()).abs() < 1e-15);

        let a = waterfill_exponential(&[1.0, 2.0], 0.0, Unit::Nats).unwrap();
        assert!(a.total_leakage.is_unbounded());
    }

    #[test]
    fn general_single_user_clamps() {
        let c = BinaryCurve(bin(0.4));
        let a = allocate_general(&[&c], 5.0, Unit::Bits).unwrap();
        assert!((a.per_user[0] - 0.6).abs() < 1e-15);
        let a = allocate_general(&[&c], 0.25, Unit::Bits).unwrap();
        assert!((a.per_user[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn general_matches_waterfilling() {
        let curves: Vec<ExponentialCurve> = [0.5, 1.0, 2.0].iter().map(|&mean| ExponentialCurve { mean }).collect();
        let refs: Vec<&dyn LeakageCurve> = curves.iter().map(|c| c as &dyn LeakageCurve).collect();
        let g = allocate_general(&refs, 2.0, Unit::Nats).unwrap();
        let w = waterfill_exponential(&[0.5, 1.0, 2.0], 2.0, Unit::Nats).unwrap();
        for (a, b) in g.per_user.iter().zip(&w.per_user) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn identical_users_split_evenly() {
        let c = BinaryCurve(bin(0.3));
        for p in [0.1, 0.5, 1.0] {
            let a = allocate_general(&[&c, &c], p, Unit::Bits).unwrap();
            assert!((a.per_user[0] - a.per_user[1]).abs() < 1e-9);
            assert!((a.per_user.iter().sum::<f64>() - p).abs() < 1e-9);
        }
    }

    #[test]
    fn general_matches_binary_closed_form() {
        let users = [bin(0.9), bin(0.5), bin(0.1)];
        let curves: Vec<BinaryCurve> = users.iter().map(|&u| BinaryCurve(u)).collect();
        let refs: Vec<&dyn LeakageCurve> = curves.iter().map(|c| c as &dyn LeakageCurve).collect();
        let g = allocate_general(&refs, 0.3, Unit::Bits).unwrap();
        let b = allocate_binary(&users, 0.3, Unit::Bits).unwrap();
        assert!((g.total_leakage.to_f64() - b.total_leakage.to_f64()).abs() < 1e-6);
        for (x, y) in g.per_user.iter().zip(&b.per_user) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    struct Concave;

    impl LeakageCurve for Concave {
        fn leakage(&self, p: f64) -> Leakage {
            Leakage::Finite((1.0 - p * p).max(0.0))
        }
        fn slope(&self, p: f64) -> f64 {
            -2.0 * p
        }
        fn perfect_privacy_power(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn non_convex_curve_is_named() {
        let good = BinaryCurve(bin(0.5));
        let err = allocate_general(&[&good, &Concave], 0.5, Unit::Bits).unwrap_err();
        assert!(matches!(err, Error::NonConvexCurve { index: 1, .. }));
    }

    #[test]
    fn tabulated_binary_curve_allocates_close_to_closed_form() {
        let users = [bin(0.8), bin(0.4)];
        let tabs: Vec<TabulatedCurve> = users
            .iter()
            .map(|u| {
                let pp = u.perfect_privacy_power();
                let powers: Vec<f64> = (0..=400).map(|k| pp * k as f64 / 400.0).collect();
                let nats = powers.iter().map(|&p| binary_leakage(u, p, Unit::Nats)).collect();
                TabulatedCurve::new(powers, nats).unwrap()
            })
            .collect();
        let refs: Vec<&dyn LeakageCurve> = tabs.iter().map(|c| c as &dyn LeakageCurve).collect();
        let g = allocate_general(&refs, 0.5, Unit::Bits).unwrap();
        let b = allocate_binary(&users, 0.5, Unit::Bits).unwrap();
        assert!((g.per_user.iter().sum::<f64>() - 0.5).abs() < 1e-9);
        assert!((g.total_leakage.to_f64() - b.total_leakage.to_f64()).abs() < 1e-3);
    }
}
