//! Exact privacy-power functions for binary and exponential loads, and the
//! Shannon lower bound (SLB) with its achievability test for piecewise
//! densities.

use serde::Serialize;

use crate::allocator::Allocation;
use crate::ba::{Policy, Solver};
use crate::error::{Error, Result};
use crate::info::binary_entropy_nats;
use crate::models::{
    poly_derivative, BinaryLoadModel, ContinuousLoadModel, PiecewiseDensity, Segment, SegmentShape,
};
use crate::units::{Leakage, Unit};

/// Binary privacy-power function `(I_B(P))^+`.
///
/// With `a = P / span`, `I_B = a log a - (p + a) log(p + a) - (1 - p) log(1 - p)`,
/// the mutual information of the joint pmf `[[p, 0], [a, 1 - p - a]]`.
pub fn binary_leakage(model: &BinaryLoadModel, power: f64, unit: Unit) -> f64 {
    unit.from_nats(binary_leakage_nats(model, power))
}

fn binary_leakage_nats(model: &BinaryLoadModel, power: f64) -> f64 {
    let p = model.p_low;
    if power <= 0.0 {
        return binary_entropy_nats(p);
    }
    if power >= model.perfect_privacy_power() {
        return 0.0;
    }
    let a = power / model.span();
    let xlnx = |v: f64| if v > 0.0 { v * v.ln() } else { 0.0 };
    (xlnx(a) - xlnx(p + a) - xlnx(1.0 - p)).max(0.0)
}

/// `dI_B/dP` in nats per energy unit; `-inf` at zero power, `0` once private.
pub fn binary_leakage_slope(model: &BinaryLoadModel, power: f64) -> f64 {
    if power >= model.perfect_privacy_power() {
        return 0.0;
    }
    if power <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let a = power / model.span();
    (a / (model.p_low + a)).ln() / model.span()
}

/// The 2x2 policy achieving [`binary_leakage`]: the AES covers a high demand
/// with probability `P / (span (1 - p))`.
pub fn binary_policy(model: &BinaryLoadModel, power: f64) -> Result<Policy> {
    if power < 0.0 {
        return Err(Error::InvalidArgument(format!("power must be >= 0, got {power}")));
    }
    let high_mass = 1.0 - model.p_low;
    let cover = if high_mass <= 0.0 {
        0.0
    } else {
        (power.min(model.span() * high_mass) / (model.span() * high_mass)).min(1.0)
    };
    Policy::scalar(
        &[model.low, model.high],
        &[model.low, model.high],
        vec![1.0, 0.0, cover, 1.0 - cover],
    )
}

/// Per-user power at multiplier `level` (nats per energy unit).
fn binary_power_at_level(model: &BinaryLoadModel, level: f64) -> f64 {
    let p = model.p_low;
    let span = model.span();
    if model.perfect_privacy_power() <= 0.0 {
        return 0.0;
    }
    if level.is_infinite() {
        return 0.0;
    }
    // p_delta = 1 - exp(-level * span)
    let p_delta = -(-level * span).exp_m1();
    if p < p_delta {
        span * p * (-level * span).exp() / p_delta
    } else {
        span * (1.0 - p)
    }
}

/// Per-user leakage at multiplier `level`, `(H_B(p) - (p / p_delta) H_B(p_delta))^+`.
pub fn binary_leakage_at_level(model: &BinaryLoadModel, level: f64, unit: Unit) -> f64 {
    let p = model.p_low;
    let p_delta = -(-level * model.span()).exp_m1();
    if p >= p_delta || model.perfect_privacy_power() <= 0.0 {
        return 0.0;
    }
    let v = binary_entropy_nats(p) - p / p_delta * binary_entropy_nats(p_delta);
    unit.from_nats(v.max(0.0))
}

/// Optimal split of `power` across independent binary users.
///
/// The multiplier `level` is the common slope magnitude `-dI_i/dP_i` in nats;
/// it is found by bisection so that the per-user powers sum to
/// `min(power, total perfect-privacy power)`.
pub fn binary_allocate(models: &[BinaryLoadModel], power: f64, unit: Unit) -> Result<Allocation> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::InvalidArgument(format!("power must be finite and >= 0, got {power}")));
    }
    let total_pp: f64 = models.iter().map(BinaryLoadModel::perfect_privacy_power).sum();
    let target = power.min(total_pp);
    let sum_at = |level: f64| models.iter().map(|m| binary_power_at_level(m, level)).sum::<f64>();

    let level = if target <= 0.0 {
        f64::INFINITY
    } else {
        // users saturate for level <= -ln(1 - p) / span
        let saturation = |m: &BinaryLoadModel| -(-m.p_low).ln_1p() / m.span();
        let lo0 = models
            .iter()
            .filter(|m| m.perfect_privacy_power() > 0.0)
            .map(saturation)
            .fold(f64::INFINITY, f64::min);
        if target >= total_pp {
            lo0
        } else {
            let mut lo = lo0;
            let mut hi = (2.0 * lo0).max(1e-300);
            while sum_at(hi) > target {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
                    break;
                }
                if sum_at(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };

    let mut per_user: Vec<f64> = models.iter().map(|m| binary_power_at_level(m, level)).collect();
    // distribute the bisection residual over the interior users
    let residual = target - per_user.iter().sum::<f64>();
    let interior: Vec<usize> = (0..models.len())
        .filter(|&i| per_user[i] < models[i].perfect_privacy_power())
        .collect();
    if !interior.is_empty() && residual != 0.0 {
        let share = residual / interior.len() as f64;
        for i in interior {
            per_user[i] = (per_user[i] + share).clamp(0.0, models[i].perfect_privacy_power());
        }
    }

    let leakages: Vec<f64> = models
        .iter()
        .zip(&per_user)
        .map(|(m, &p)| binary_leakage(m, p, unit))
        .collect();
    let saturated = models
        .iter()
        .zip(&per_user)
        .map(|(m, &p)| p >= m.perfect_privacy_power() * (1.0 - 1e-12))
        .collect();
    Ok(Allocation {
        power,
        per_user,
        level,
        per_user_leakage: leakages.iter().map(|&v| Leakage::Finite(v)).collect(),
        total_leakage: Leakage::Finite(leakages.iter().sum()),
        unit,
        saturated,
        solver: Solver::ClosedFormBinary,
    })
}

/// Exponential privacy-power function `ln(mean / P)` for `P <= mean`, else 0.
pub fn exponential_leakage(mean: f64, power: f64, unit: Unit) -> Result<Leakage> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::InvalidArgument(format!("mean must be > 0, got {mean}")));
    }
    if power.is_nan() || power < 0.0 {
        return Err(Error::InvalidArgument(format!("power must be >= 0, got {power}")));
    }
    if power == 0.0 {
        return Ok(Leakage::Unbounded);
    }
    let nats = if power <= mean { (mean / power).ln() } else { 0.0 };
    Ok(Leakage::Finite(unit.from_nats(nats)))
}

/// The SLB-achieving policy for an exponential load of mean `mean` at power
/// `power <= mean`.
///
/// The output marginal is `(1 - P/mean) Exp(mean)` plus an atom of weight
/// `P/mean` at zero, and `V = X - Y` is `Exp(P)` independent of `Y`.
/// Given `X = x`, the output is zero with probability `exp(-kappa x)`,
/// `kappa = 1/P - 1/mean`; otherwise it has density
/// `kappa exp(kappa y) / (exp(kappa x) - 1)` on `(0, x]`, sampled by
/// closed-form inversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentialPolicy {
    pub mean: f64,
    pub power: f64,
}

pub fn exponential_policy(mean: f64, power: f64) -> Result<ExponentialPolicy> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::InvalidArgument(format!("mean must be > 0, got {mean}")));
    }
    if !(power > 0.0) {
        return Err(Error::InvalidArgument(format!("power must be > 0, got {power}")));
    }
    if power > mean {
        return Err(Error::InvalidArgument(format!(
            "power {power} exceeds the mean {mean}: the atom weight would exceed 1"
        )));
    }
    Ok(ExponentialPolicy { mean, power })
}

impl ExponentialPolicy {
    fn kappa(&self) -> f64 {
        1.0 / self.power - 1.0 / self.mean
    }

    /// Weight of the atom at zero in the output marginal.
    pub fn marginal_atom_weight(&self) -> f64 {
        self.power / self.mean
    }

    /// Continuous part of the output marginal.
    pub fn marginal_density(&self, y: f64) -> f64 {
        if y < 0.0 {
            return 0.0;
        }
        (1.0 - self.power / self.mean) * (-y / self.mean).exp() / self.mean
    }

    /// `P(Y = 0 | X = x)`.
    pub fn atom_probability(&self, x: f64) -> f64 {
        (-self.kappa() * x).exp()
    }

    /// Continuous part of `f(y | x)` on `(0, x]`.
    pub fn conditional_density(&self, y: f64, x: f64) -> f64 {
        if !(y > 0.0 && y <= x) {
            return 0.0;
        }
        // (mean/P) e^{-(x-y)/P} e^{x/mean} f_Y(y)
        self.mean / self.power * (-(x - y) / self.power).exp() * (x / self.mean).exp() * self.marginal_density(y)
    }

    /// Maps two uniforms in `[0, 1)` to an output load for demand `x`.
    pub fn sample_output(&self, x: f64, u_atom: f64, u_cont: f64) -> f64 {
        let k = self.kappa();
        let atom = (-k * x).exp();
        if u_atom < atom || k <= 0.0 {
            return 0.0;
        }
        let u = 1.0 - u_cont; // (0, 1]
        let tail = (-k * x).exp();
        let y = x + (tail + u * (1.0 - tail)).ln() / k;
        y.clamp(0.0, x)
    }
}

/// Shannon lower bound `(h(X) - ln(e P))^+` in nats. `ln(e P)` is the
/// entropy of the exponential law of mean `P`, the largest among
/// nonnegative variables with that mean.
pub fn slb_bound(model: &ContinuousLoadModel, power: f64) -> Result<Leakage> {
    if power.is_nan() || power < 0.0 {
        return Err(Error::InvalidArgument(format!("power must be >= 0, got {power}")));
    }
    let h = model.differential_entropy()?;
    if power == 0.0 {
        return Ok(Leakage::Unbounded);
    }
    Ok(Leakage::Finite((h - 1.0 - power.ln()).max(0.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Sign settled in closed form on every piece.
    Analytic,
    /// At least one piece was checked by dense sampling.
    Numerical,
}

/// Sign check of `g_C(y) = f(y) + P f'(y)` on one piece.
#[derive(Clone, Debug, Serialize)]
pub struct PieceCheck {
    pub start: f64,
    pub end: Option<f64>,
    pub min_value: f64,
    pub min_at: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Atom {
    pub at: f64,
    pub weight: f64,
}

/// The candidate output law `g_Y = g_C + sum_i P * jump_i * delta(y - x_i)`
/// at power `P`, whether it is a valid density, and the critical power below
/// which the SLB is tight.
#[derive(Clone, Debug, Serialize)]
pub struct SlbReport {
    pub power: f64,
    pub bound_nats: Leakage,
    pub pieces: Vec<PieceCheck>,
    pub atoms: Vec<Atom>,
    /// `int g_C + sum of atoms`.
    pub total_mass: f64,
    pub nonneg: bool,
    pub verdict: Verdict,
    /// `None` when `g_Y >= 0` for every power tried.
    pub critical_power: Option<f64>,
    pub achieving: Option<SlbConditional>,
}

/// `f(y | x) = f_V(x - y) g_Y(y) / f_X(x)` with `V ~ Exp(mean_v)`.
#[derive(Clone, Debug, Serialize)]
pub struct SlbConditional {
    pub mean_v: f64,
    pub atoms: Vec<Atom>,
}

impl SlbConditional {
    fn f_v(&self, v: f64) -> f64 {
        if v < 0.0 {
            0.0
        } else {
            (-v / self.mean_v).exp() / self.mean_v
        }
    }

    /// Continuous part of `f(y | x)`.
    pub fn density(&self, model: &ContinuousLoadModel, y: f64, x: f64) -> f64 {
        let fx = model.density(x);
        if fx <= 0.0 || y > x || y < 0.0 {
            return 0.0;
        }
        self.f_v(x - y) * g_continuous(model, self.mean_v, y) / fx
    }

    /// `(atom location, P(Y = location | X = x))` for every atom.
    pub fn atom_masses(&self, model: &ContinuousLoadModel, x: f64) -> Vec<(f64, f64)> {
        let fx = model.density(x);
        self.atoms
            .iter()
            .map(|a| {
                let m = if fx > 0.0 { self.f_v(x - a.at) * a.weight / fx } else { 0.0 };
                (a.at, m)
            })
            .collect()
    }
}

fn g_continuous(model: &ContinuousLoadModel, power: f64, y: f64) -> f64 {
    match model {
        ContinuousLoadModel::Exponential { mean } => (1.0 - power / mean) * (-y / mean).exp() / mean,
        ContinuousLoadModel::Piecewise(d) => d
            .segments()
            .iter()
            .find(|s| y >= s.start && y < s.end)
            .map(|s| s.shape.value(y) + power * s.shape.derivative(y).unwrap_or(0.0))
            .unwrap_or(0.0),
    }
}

const SIGN_TOL: f64 = 1e-12;
const SAMPLES_PER_PIECE: usize = 4096;

fn check_piece(seg: &Segment, power: f64) -> PieceCheck {
    let end = seg.is_bounded().then_some(seg.end);
    let g = |y: f64| seg.shape.value(y) + power * seg.shape.derivative(y).unwrap_or(0.0);
    let mut candidates: Vec<f64> = vec![seg.start];
    let verdict = match &seg.shape {
        SegmentShape::Exponential { .. } => {
            // g = scale e^{rate y} (1 + P rate): sign fixed, extremes at the ends
            if let Some(b) = end {
                candidates.push(b);
            }
            Verdict::Analytic
        }
        SegmentShape::Polynomial(c) if c.len() <= 4 => {
            let d = poly_derivative(c);
            let gc: Vec<f64> = (0..c.len())
                .map(|k| c[k] + power * d.get(k).copied().unwrap_or(0.0))
                .collect();
            let gd = poly_derivative(&gc);
            candidates.extend(real_roots_upto_quadratic(&gd));
            if let Some(b) = end {
                candidates.push(b);
            }
            Verdict::Analytic
        }
        _ => {
            let hi = end.unwrap_or(seg.start + 50.0 * (1.0 + seg.start));
            for k in 0..=SAMPLES_PER_PIECE {
                candidates.push(seg.start + (hi - seg.start) * k as f64 / SAMPLES_PER_PIECE as f64);
            }
            Verdict::Numerical
        }
    };
    let (min_at, min_value) = candidates
        .into_iter()
        .filter(|&y| y >= seg.start && end.is_none_or(|b| y <= b))
        .map(|y| (y, g(y)))
        .fold((seg.start, f64::INFINITY), |acc, (y, v)| if v < acc.1 { (y, v) } else { acc });
    PieceCheck { start: seg.start, end, min_value, min_at, verdict }
}

fn real_roots_upto_quadratic(c: &[f64]) -> Vec<f64> {
    match c.len() {
        0 | 1 => vec![],
        2 => {
            if c[1] != 0.0 {
                vec![-c[0] / c[1]]
            } else {
                vec![]
            }
        }
        _ => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            if a == 0.0 {
                return real_roots_upto_quadratic(&c[..2]);
            }
            let disc = b * b - 4.0 * a * cc;
            if disc < 0.0 {
                return vec![];
            }
            let s = disc.sqrt();
            vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
        }
    }
}

fn piecewise_mass(density: &PiecewiseDensity, power: f64) -> f64 {
    // int g_C = sum_k [mass_k + P (f(end-) - f(start+))]
    let mut total = 1.0;
    for seg in density.segments() {
        let start = seg.shape.value(seg.start);
        let end = if seg.is_bounded() { seg.shape.value(seg.end) } else { 0.0 };
        total += power * (end - start);
    }
    total + density.jumps().iter().map(|j| power * j.size).sum::<f64>()
}

struct Evaluation {
    pieces: Vec<PieceCheck>,
    atoms: Vec<Atom>,
    total_mass: f64,
    nonneg: bool,
    verdict: Verdict,
}

fn evaluate(model: &ContinuousLoadModel, power: f64) -> Result<Evaluation> {
    match model {
        ContinuousLoadModel::Exponential { mean } => {
            let factor = 1.0 - power / mean;
            let atoms = vec![Atom { at: 0.0, weight: power / mean }];
            Ok(Evaluation {
                pieces: vec![PieceCheck {
                    start: 0.0,
                    end: None,
                    min_value: if factor >= 0.0 { 0.0 } else { factor / mean },
                    min_at: if factor >= 0.0 { f64::INFINITY } else { 0.0 },
                    verdict: Verdict::Analytic,
                }],
                atoms,
                total_mass: factor + power / mean,
                nonneg: power <= *mean,
                verdict: Verdict::Analytic,
            })
        }
        ContinuousLoadModel::Piecewise(density) => {
            if let Some(i) = density.segments().iter().position(|s| !s.shape.has_derivative()) {
                return Err(Error::MissingDerivative { segment: i });
            }
            let pieces: Vec<PieceCheck> = density.segments().iter().map(|s| check_piece(s, power)).collect();
            let atoms: Vec<Atom> = density
                .jumps()
                .iter()
                .map(|j| Atom { at: j.at, weight: power * j.size })
                .collect();
            let nonneg = pieces.iter().all(|p| p.min_value >= -SIGN_TOL) && atoms.iter().all(|a| a.weight >= -SIGN_TOL);
            let verdict = if pieces.iter().all(|p| p.verdict == Verdict::Analytic) {
                Verdict::Analytic
            } else {
                Verdict::Numerical
            };
            Ok(Evaluation { pieces, atoms, total_mass: piecewise_mass(density, power), nonneg, verdict })
        }
    }
}

/// Largest power at which `g_Y >= 0`; bisection to `1e-10` absolute.
pub fn critical_power(model: &ContinuousLoadModel) -> Result<Option<f64>> {
    if let ContinuousLoadModel::Exponential { mean } = model {
        return Ok(Some(*mean));
    }
    let scale = model.mean()?.max(1e-12);
    let mut lo = 0.0;
    let mut hi = scale;
    while evaluate(model, hi)?.nonneg {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 * scale {
            return Ok(None);
        }
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if evaluate(model, mid)?.nonneg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Checks whether the SLB is achieved at `power`, and reports the critical
/// power and (when achievable) the achieving conditional.
pub fn slb_check(model: &ContinuousLoadModel, power: f64) -> Result<SlbReport> {
    if power.is_nan() || power < 0.0 {
        return Err(Error::InvalidArgument(format!("power must be >= 0, got {power}")));
    }
    let eval = evaluate(model, power)?;
    let achieving = (eval.nonneg && power > 0.0).then(|| SlbConditional { mean_v: power, atoms: eval.atoms.clone() });
    Ok(SlbReport {
        power,
        bound_nats: slb_bound(model, power)?,
        pieces: eval.pieces,
        atoms: eval.atoms,
        total_mass: eval.total_mass,
        nonneg: eval.nonneg,
        verdict: eval.verdict,
        critical_power: critical_power(model)?,
        achieving,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, LN_2};
    use std::sync::Arc;

    fn bin(p: f64) -> BinaryLoadModel {
        BinaryLoadModel::new(0.0, 1.0, p).unwrap()
    }

    #[test]
    fn binary_leakage_examples() {
        assert!((binary_leakage(&bin(0.5), 0.0, Unit::Bits) - 1.0).abs() < 1e-15);
        assert_eq!(binary_leakage(&bin(0.5), 0.5, Unit::Bits), 0.0);
        let direct = 0.2 * 0.2f64.log2() - 0.7 * 0.7f64.log2() - 0.5 * 0.5f64.log2();
        assert!((binary_leakage(&bin(0.5), 0.2, Unit::Bits) - direct).abs() < 1e-14);
        assert!((direct - 0.39581).abs() < 1e-5);
    }

    #[test]
    fn binary_slope_matches_finite_difference() {
        let m = BinaryLoadModel::new(0.2, 1.7, 0.35).unwrap();
        for p in [0.05, 0.3, 0.8] {
            let h = 1e-6;
            let fd = (binary_leakage(&m, p + h, Unit::Nats) - binary_leakage(&m, p - h, Unit::Nats)) / (2.0 * h);
            assert!((fd - binary_leakage_slope(&m, p)).abs() < 1e-6);
        }
    }

    #[test]
    fn binary_policy_reproduces_curve() {
        let m = bin(0.5);
        let pol = binary_policy(&m, 0.2).unwrap();
        let pmf = [0.5, 0.5];
        assert!((pol.expected_power(&pmf) - 0.2).abs() < 1e-15);
        assert!((pol.mutual_information(&pmf, Unit::Bits) - binary_leakage(&m, 0.2, Unit::Bits)).abs() < 1e-12);
    }

    #[test]
    fn allocation_single_user_saturates() {
        let a = binary_allocate(&[bin(0.7)], 1.0, Unit::Bits).unwrap();
        assert!((a.per_user[0] - 0.3).abs() < 1e-12);
        assert_eq!(a.total_leakage, Leakage::Finite(0.0));
        assert!(a.saturated[0]);
    }

    #[test]
    fn allocation_three_users_full_budget() {
        let users = [bin(0.9), bin(0.5), bin(0.1)];
        let a = binary_allocate(&users, 1.5, Unit::Bits).unwrap();
        assert!(a.total_leakage.to_f64().abs() < 1e-12);
        assert!((a.per_user.iter().sum::<f64>() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn allocation_at_zero_power() {
        let users = [bin(0.9), bin(0.5), bin(0.1)];
        let a = binary_allocate(&users, 0.0, Unit::Bits).unwrap();
        assert!(a.per_user.iter().all(|&p| p == 0.0));
        let h: f64 = users.iter().map(|u| u.entropy(Unit::Bits)).sum();
        assert!((a.total_leakage.to_f64() - h).abs() < 1e-12);
    }

    #[test]
    fn level_form_matches_direct_form() {
        let users = [bin(0.9), bin(0.5), bin(0.1), BinaryLoadModel::new(0.0, 2.5, 0.3).unwrap()];
        let a = binary_allocate(&users, 0.6, Unit::Bits).unwrap();
        assert!((a.per_user.iter().sum::<f64>() - 0.6).abs() < 1e-10);
        for (u, &p) in users.iter().zip(&a.per_user) {
            let direct = binary_leakage(u, p, Unit::Bits);
            let level = binary_leakage_at_level(u, a.level, Unit::Bits);
            assert!((direct - level).abs() < 1e-8, "{direct} vs {level}");
        }
    }

    #[test]
    fn exponential_leakage_examples() {
        assert_eq!(exponential_leakage(1.0, 1.0, Unit::Nats).unwrap(), Leakage::Finite(0.0));
        let v = exponential_leakage(2.0, 1.0, Unit::Nats).unwrap().to_f64();
        assert!((v - LN_2).abs() < 1e-15);
        let v = exponential_leakage(E, 1.0, Unit::Nats).unwrap().to_f64();
        assert!((v - 1.0).abs() < 1e-15);
        assert!(exponential_leakage(1.0, 0.0, Unit::Nats).unwrap().is_unbounded());
        assert_eq!(exponential_leakage(1.0, 3.0, Unit::Nats).unwrap(), Leakage::Finite(0.0));
    }

    #[test]
    fn exponential_policy_descriptor() {
        let full = exponential_policy(1.0, 1.0).unwrap();
        assert_eq!(full.atom_probability(3.7), 1.0);
        assert_eq!(full.sample_output(3.7, 0.99, 0.5), 0.0);
        let half = exponential_policy(1.0, 0.5).unwrap();
        assert_eq!(half.marginal_atom_weight(), 0.5);
        assert!(exponential_policy(1.0, 1.5).is_err());
    }

    #[test]
    fn exponential_conditional_integrates_to_one() {
        let pol = exponential_policy(1.3, 0.4).unwrap();
        for x in [0.1, 1.0, 4.0] {
            let cont = crate::quadrature::integrate(|y| pol.conditional_density(y, x), 0.0, x, 400);
            assert!((cont + pol.atom_probability(x) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exponential_sampler_inverts_cdf() {
        let pol = exponential_policy(1.0, 0.25).unwrap();
        let x = 2.0;
        // the continuous branch at u_cont maps to the u-quantile of the truncated law
        for u in [0.1, 0.5, 0.9] {
            let y = pol.sample_output(x, 1.0, 1.0 - u);
            let cdf = crate::quadrature::integrate(|t| pol.conditional_density(t, x), 0.0, y, 400)
                / (1.0 - pol.atom_probability(x));
            assert!((cdf - u).abs() < 1e-10);
            assert!(y > 0.0 && y <= x);
        }
    }

    #[test]
    fn slb_bound_examples() {
        let e1 = ContinuousLoadModel::exponential(1.0).unwrap();
        assert_eq!(slb_bound(&e1, 1.0).unwrap(), Leakage::Finite(0.0));
        assert!((slb_bound(&e1, 1.0 / E).unwrap().to_f64() - 1.0).abs() < 1e-12);
        assert_eq!(slb_bound(&e1, E * E).unwrap(), Leakage::Finite(0.0));
        assert!(slb_bound(&e1, 0.0).unwrap().is_unbounded());
        let u = ContinuousLoadModel::uniform(0.0, 2.0).unwrap();
        let v = slb_bound(&u, 0.5).unwrap().to_f64();
        assert!((v - (2.0 * LN_2 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn slb_check_exponential() {
        let m = ContinuousLoadModel::exponential(2.0).unwrap();
        let r = slb_check(&m, 1.0).unwrap();
        assert!(r.nonneg);
        assert_eq!(r.critical_power, Some(2.0));
        assert!((r.total_mass - 1.0).abs() < 1e-12);
        assert!(r.achieving.is_some());
        assert!(!slb_check(&m, 2.5).unwrap().nonneg);
    }

    #[test]
    fn slb_check_uniform_has_negative_atom() {
        let m = ContinuousLoadModel::uniform(0.0, 2.0).unwrap();
        assert!(slb_check(&m, 0.0).unwrap().nonneg);
        let r = slb_check(&m, 0.1).unwrap();
        assert!(!r.nonneg);
        assert!(r.atoms.iter().any(|a| a.at == 2.0 && a.weight < 0.0));
        assert_eq!(r.critical_power, Some(0.0));
        assert_eq!(r.verdict, Verdict::Analytic);
    }

    #[test]
    fn slb_piecewise_exponential_matches_exponential() {
        let lambda = 1.5;
        let seg = Segment::new(0.0, f64::INFINITY, SegmentShape::Exponential { scale: 1.0 / lambda, rate: -1.0 / lambda });
        let m = ContinuousLoadModel::piecewise(vec![seg]).unwrap();
        let p0 = critical_power(&m).unwrap().unwrap();
        assert!((p0 - lambda).abs() < 1e-9);
        let r = slb_check(&m, 0.7).unwrap();
        assert!(r.nonneg);
        assert!((r.total_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slb_triangular_density() {
        // f = 2 - 2x on [0, 1]: g_C = 2 - 2x - 2P, negative near x = 1 for any P > 0,
        // but the end point has no jump. Hence P0 = 0.
        let seg = Segment::new(0.0, 1.0, SegmentShape::Polynomial(vec![2.0, -2.0]));
        let m = ContinuousLoadModel::piecewise(vec![seg]).unwrap();
        assert_eq!(critical_power(&m).unwrap(), Some(0.0));
    }

    #[test]
    fn slb_conditional_normalises() {
        let m = ContinuousLoadModel::exponential(1.0).unwrap();
        let r = slb_check(&m, 0.4).unwrap();
        let cond = r.achieving.unwrap();
        let x = 1.7;
        let cont = crate::quadrature::integrate(|y| cond.density(&m, y, x), 0.0, x, 400);
        let atoms: f64 = cond.atom_masses(&m, x).iter().map(|(_, w)| w).sum();
        assert!((cont + atoms - 1.0).abs() < 1e-10);
    }

    #[test]
    fn custom_density_without_derivative_is_rejected() {
        let seg = Segment::new(
            0.0,
            1.0,
            SegmentShape::Custom { density: Arc::new(|_| 1.0), derivative: None },
        );
        let m = ContinuousLoadModel::piecewise(vec![seg]).unwrap();
        assert!(matches!(slb_check(&m, 0.1), Err(Error::MissingDerivative { segment: 0 })));
    }

    #[test]
    fn custom_density_checked_numerically() {
        let seg = Segment::new(
            0.0,
            1.0,
            SegmentShape::Custom { density: Arc::new(|_| 1.0), derivative: Some(Arc::new(|_| 0.0)) },
        );
        let m = ContinuousLoadModel::piecewise(vec![seg]).unwrap();
        let r = slb_check(&m, 0.0).unwrap();
        assert_eq!(r.verdict, Verdict::Numerical);
        assert!(r.nonneg);
    }
}
