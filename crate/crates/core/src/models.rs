//! Input load distributions.
//!
//! Discrete models carry a finite alphabet of non-negative energy levels; the
//! binary model is the two-level special case parameterised by its low level,
//! high level and `P(X = low)`. Continuous models are either exponential or a
//! piecewise density whose pieces carry analytic derivatives, which the Shannon
//! lower bound check needs pointwise.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{entropy_nats, PROB_FLOOR};
use crate::quadrature::integrate;
use crate::units::Unit;

const PMF_TOL: f64 = 1e-12;
const DENSITY_MASS_TOL: f64 = 1e-9;
const QUAD_PANELS: usize = 2000;

/// Finite-alphabet demand distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteLoadModel {
    alphabet: Vec<f64>,
    pmf: Vec<f64>,
}

impl DiscreteLoadModel {
    pub fn new(alphabet: Vec<f64>, pmf: Vec<f64>) -> Result<Self> {
        if alphabet.is_empty() {
            return Err(Error::InvalidModel("empty alphabet".into()));
        }
        if alphabet.len() != pmf.len() {
            return Err(Error::InvalidModel(format!(
                "alphabet has {} levels but pmf has {} entries",
                alphabet.len(),
                pmf.len()
            )));
        }
        if alphabet.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidModel("load levels must be finite and >= 0".into()));
        }
        if alphabet.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidModel("alphabet must be strictly increasing".into()));
        }
        if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel("pmf entries must be >= 0".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidModel(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self { alphabet, pmf })
    }

    /// Uniform distribution over the given levels.
    pub fn uniform(alphabet: Vec<f64>) -> Result<Self> {
        let n = alphabet.len().max(1);
        Self::new(alphabet, vec![1.0 / n as f64; n])
    }

    /// Uniform over `{0, spacing, ..., (levels - 1) * spacing}`.
    pub fn uniform_grid(levels: usize, spacing: f64) -> Result<Self> {
        Self::uniform((0..levels).map(|k| k as f64 * spacing).collect())
    }

    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.alphabet.iter().zip(&self.pmf).map(|(x, p)| x * p).sum()
    }

    /// Smallest level carrying positive probability.
    pub fn support_min(&self) -> f64 {
        self.alphabet
            .iter()
            .zip(&self.pmf)
            .find(|(_, &p)| p > PROB_FLOOR)
            .map(|(&x, _)| x)
            .unwrap_or(self.alphabet[0])
    }

    /// AES power at which the constant output `Y = min support` becomes feasible.
    pub fn perfect_privacy_power(&self) -> f64 {
        (self.mean() - self.support_min()).max(0.0)
    }

    pub fn entropy(&self, unit: Unit) -> f64 {
        unit.from_nats(entropy_nats(&self.pmf))
    }

    /// True when the levels are equally spaced and equally likely.
    pub fn uniform_spacing(&self) -> Option<f64> {
        let n = self.len();
        if n < 2 {
            return None;
        }
        let c = self.alphabet[1] - self.alphabet[0];
        let evenly = self
            .alphabet
            .windows(2)
            .all(|w| ((w[1] - w[0]) - c).abs() <= 1e-12 * c.max(1.0));
        let flat = self.pmf.iter().all(|&p| (p - 1.0 / n as f64).abs() <= 1e-12);
        (evenly && flat).then_some(c)
    }

    /// Index of the level nearest `x`, if within `tol`.
    pub fn index_of(&self, x: f64, tol: f64) -> Option<usize> {
        self.alphabet.iter().position(|&a| (a - x).abs() <= tol)
    }
}

/// Two-level demand: `low` with probability `p_low`, otherwise `high`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryLoadModel {
    pub low: f64,
    pub high: f64,
    pub p_low: f64,
}

impl BinaryLoadModel {
    pub fn new(low: f64, high: f64, p_low: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) || low < 0.0 {
            return Err(Error::InvalidModel("binary levels must be finite, low >= 0".into()));
        }
        if high <= low {
            return Err(Error::InvalidModel(format!("high ({high}) must exceed low ({low})")));
        }
        if !(0.0..=1.0).contains(&p_low) {
            return Err(Error::InvalidModel(format!("p_low = {p_low} outside [0, 1]")));
        }
        Ok(Self { low, high, p_low })
    }

    /// `high - low`.
    pub fn span(&self) -> f64 {
        self.high - self.low
    }

    pub fn mean(&self) -> f64 {
        self.low + self.span() * (1.0 - self.p_low)
    }

    pub fn entropy(&self, unit: Unit) -> f64 {
        unit.from_nats(crate::info::binary_entropy_nats(self.p_low))
    }

    /// Smallest AES power giving zero leakage.
    pub fn perfect_privacy_power(&self) -> f64 {
        if self.p_low <= PROB_FLOOR || self.p_low >= 1.0 - PROB_FLOOR {
            0.0
        } else {
            self.span() * (1.0 - self.p_low)
        }
    }

    pub fn to_discrete(&self) -> DiscreteLoadModel {
        DiscreteLoadModel {
            alphabet: vec![self.low, self.high],
            pmf: vec![self.p_low, 1.0 - self.p_low],
        }
    }
}

/// Analytic density on one piece of a piecewise density.
#[derive(Clone)]
pub enum SegmentShape {
    /// `sum_k coeffs[k] * x^k` in absolute `x`.
    Polynomial(Vec<f64>),
    /// `scale * exp(rate * x)`.
    Exponential { scale: f64, rate: f64 },
    /// Arbitrary density with an optional derivative.
    Custom {
        density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        derivative: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    },
}

impl fmt::Debug for SegmentShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentShape::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            SegmentShape::Exponential { scale, rate } => f
                .debug_struct("Exponential")
                .field("scale", scale)
                .field("rate", rate)
                .finish(),
            SegmentShape::Custom { derivative, .. } => f
                .debug_struct("Custom")
                .field("has_derivative", &derivative.is_some())
                .finish(),
        }
    }
}

impl SegmentShape {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            SegmentShape::Polynomial(c) => horner(c, x),
            SegmentShape::Exponential { scale, rate } => scale * (rate * x).exp(),
            SegmentShape::Custom { density, .. } => density(x),
        }
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            SegmentShape::Polynomial(c) => Some(horner(&poly_derivative(c), x)),
            SegmentShape::Exponential { scale, rate } => Some(scale * rate * (rate * x).exp()),
            SegmentShape::Custom { derivative, .. } => derivative.as_ref().map(|d| d(x)),
        }
    }

    pub fn has_derivative(&self) -> bool {
        !matches!(self, SegmentShape::Custom { derivative: None, .. })
    }
}

pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

pub(crate) fn poly_derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect()
}

fn poly_antiderivative(coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend(coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
    out
}

/// One piece `[start, end)` of a piecewise density. `end` may be infinite.
#[derive(Clone, Debug)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub shape: SegmentShape,
}

impl Segment {
    pub fn new(start: f64, end: f64, shape: SegmentShape) -> Self {
        Self { start, end, shape }
    }

    pub fn is_bounded(&self) -> bool {
        self.end.is_finite()
    }

    fn mass(&self) -> Result<f64> {
        let (a, b) = (self.start, self.end);
        match &self.shape {
            SegmentShape::Polynomial(c) => {
                if !self.is_bounded() {
                    return Err(Error::DivergentIntegral("polynomial piece on an unbounded interval".into()));
                }
                let anti = poly_antiderivative(c);
                Ok(horner(&anti, b) - horner(&anti, a))
            }
            SegmentShape::Exponential { scale, rate } => exp_moment0(*scale, *rate, a, b),
            SegmentShape::Custom { density, .. } => {
                if !self.is_bounded() {
                    return Err(Error::DivergentIntegral("custom piece on an unbounded interval".into()));
                }
                Ok(integrate(|x| density(x), a, b, QUAD_PANELS))
            }
        }
    }

    fn first_moment(&self) -> Result<f64> {
        let (a, b) = (self.start, self.end);
        match &self.shape {
            SegmentShape::Polynomial(c) => {
                if !self.is_bounded() {
                    return Err(Error::DivergentIntegral("polynomial piece on an unbounded interval".into()));
                }
                let mut shifted = vec![0.0];
                shifted.extend_from_slice(c);
                let anti = poly_antiderivative(&shifted);
                Ok(horner(&anti, b) - horner(&anti, a))
            }
            SegmentShape::Exponential { scale, rate } => exp_moment1(*scale, *rate, a, b),
            SegmentShape::Custom { density, .. } => {
                if !self.is_bounded() {
                    return Err(Error::DivergentIntegral("custom piece on an unbounded interval".into()));
                }
                Ok(integrate(|x| x * density(x), a, b, QUAD_PANELS))
            }
        }
    }

    /// `-int f ln f` over the piece.
    fn entropy_contribution(&self) -> Result<f64> {
        let (a, b) = (self.start, self.end);
        let neg_flogf = |v: f64| if v > 0.0 { -v * v.ln() } else { 0.0 };
        match &self.shape {
            SegmentShape::Exponential { scale, rate } => {
                if *scale == 0.0 {
                    return Ok(0.0);
                }
                let m0 = exp_moment0(*scale, *rate, a, b)?;
                let m1 = exp_moment1(*scale, *rate, a, b)?;
                Ok(-scale.ln() * m0 - rate * m1)
            }
            SegmentShape::Polynomial(c) => {
                if !self.is_bounded() {
                    return Err(Error::DivergentIntegral("polynomial piece on an unbounded interval".into()));
                }
                if c.iter().skip(1).all(|&v| v == 0.0) {
                    return Ok(neg_flogf(c.first().copied().unwrap_or(0.0)) * (b - a));
                }
                Ok(integrate(|x| neg_flogf(horner(c, x)), a, b, QUAD_PANELS))
            }
            SegmentShape::Custom { density, .. } => {
                if !self.is_bounded() {
                    return Err(Error::DivergentIntegral("custom piece on an unbounded interval".into()));
                }
                Ok(integrate(|x| neg_flogf(density(x)), a, b, QUAD_PANELS))
            }
        }
    }
}

fn exp_moment0(scale: f64, rate: f64, a: f64, b: f64) -> Result<f64> {
    if rate == 0.0 {
        if !b.is_finite() {
            return Err(Error::DivergentIntegral("flat exponential piece on an unbounded interval".into()));
        }
        return Ok(scale * (b - a));
    }
    if !b.is_finite() {
        if rate > 0.0 {
            return Err(Error::DivergentIntegral("growing exponential piece on an unbounded interval".into()));
        }
        return Ok(-scale * (rate * a).exp() / rate);
    }
    Ok(scale * ((rate * b).exp() - (rate * a).exp()) / rate)
}

fn exp_moment1(scale: f64, rate: f64, a: f64, b: f64) -> Result<f64> {
    if rate == 0.0 {
        if !b.is_finite() {
            return Err(Error::DivergentIntegral("flat exponential piece on an unbounded interval".into()));
        }
        return Ok(scale * (b * b - a * a) / 2.0);
    }
    let anti = |x: f64| (rate * x).exp() * (x / rate - 1.0 / (rate * rate));
    if !b.is_finite() {
        if rate > 0.0 {
            return Err(Error::DivergentIntegral("growing exponential piece on an unbounded interval".into()));
        }
        return Ok(-scale * anti(a));
    }
    Ok(scale * (anti(b) - anti(a)))
}

/// A discontinuity of the density: `size = f(x+) - f(x-)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub at: f64,
    pub size: f64,
}

/// Density made of analytic pieces; zero outside them.
#[derive(Clone, Debug)]
pub struct PiecewiseDensity {
    segments: Vec<Segment>,
    jumps: Vec<Jump>,
}

impl PiecewiseDensity {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidModel("piecewise density needs at least one piece".into()));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.start.is_finite() && s.start >= 0.0 && s.end > s.start) {
                return Err(Error::InvalidModel(format!("piece {i} has invalid bounds [{}, {})", s.start, s.end)));
            }
            if let Some(next) = segments.get(i + 1) {
                if next.start < s.end {
                    return Err(Error::InvalidModel(format!("pieces {i} and {} overlap or are unsorted", i + 1)));
                }
            }
        }
        let jumps = find_jumps(&segments);
        let density = Self { segments, jumps };

        let mass: f64 = density.segments.iter().map(Segment::mass).sum::<Result<f64>>()?;
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::InvalidModel(format!("density integrates to {mass}, not 1")));
        }
        for (i, s) in density.segments.iter().enumerate() {
            let hi = if s.is_bounded() { s.end } else { s.start + 50.0 * (1.0 + s.start) };
            for k in 0..=1000 {
                let x = s.start + (hi - s.start) * k as f64 / 1000.0;
                let x = if s.is_bounded() && k == 1000 { s.end - 1e-12 * (1.0 + s.end) } else { x };
                if s.shape.value(x) < -1e-12 {
                    return Err(Error::InvalidModel(format!("piece {i} is negative at x = {x}")));
                }
            }
        }
        Ok(density)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Discontinuities, including the origin when `f(0+) > 0`.
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn value(&self, x: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| x >= s.start && x < s.end)
            .map(|s| s.shape.value(x))
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> Result<f64> {
        self.segments.iter().map(Segment::first_moment).sum()
    }

    pub fn differential_entropy(&self) -> Result<f64> {
        self.segments.iter().map(Segment::entropy_contribution).sum()
    }
}

fn find_jumps(segments: &[Segment]) -> Vec<Jump> {
    let mut points: Vec<f64> = Vec::new();
    for s in segments {
        points.push(s.start);
        if s.is_bounded() {
            points.push(s.end);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut jumps = Vec::new();
    for &t in &points {
        let right = segments
            .iter()
            .find(|s| s.start == t)
            .map(|s| s.shape.value(t))
            .unwrap_or(0.0);
        let left = segments
            .iter()
            .find(|s| s.end == t)
            .map(|s| s.shape.value(t))
            .unwrap_or(0.0);
        let size = right - left;
        if size.abs() > PROB_FLOOR {
            jumps.push(Jump { at: t, size });
        }
    }
    jumps
}

#[derive(Clone, Debug)]
pub enum ContinuousLoadModel {
    Exponential { mean: f64 },
    Piecewise(PiecewiseDensity),
}

impl ContinuousLoadModel {
    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidModel(format!("exponential mean must be > 0, got {mean}")));
        }
        Ok(ContinuousLoadModel::Exponential { mean })
    }

    /// Uniform density on `[low, high]`.
    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low >= 0.0 && high > low) {
            return Err(Error::InvalidModel(format!("uniform needs 0 <= low < high, got [{low}, {high}]")));
        }
        let seg = Segment::new(low, high, SegmentShape::Polynomial(vec![1.0 / (high - low)]));
        Ok(ContinuousLoadModel::Piecewise(PiecewiseDensity::new(vec![seg])?))
    }

    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        Ok(ContinuousLoadModel::Piecewise(PiecewiseDensity::new(segments)?))
    }

    pub fn mean(&self) -> Result<f64> {
        match self {
            ContinuousLoadModel::Exponential { mean } => Ok(*mean),
            ContinuousLoadModel::Piecewise(d) => d.mean(),
        }
    }

    /// `h(X)` in nats.
    pub fn differential_entropy(&self) -> Result<f64> {
        match self {
            ContinuousLoadModel::Exponential { mean } => Ok(1.0 + mean.ln()),
            ContinuousLoadModel::Piecewise(d) => d.differential_entropy(),
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            ContinuousLoadModel::Exponential { mean } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x / mean).exp() / mean
                }
            }
            ContinuousLoadModel::Piecewise(d) => d.value(x),
        }
    }
}

/// Any single-user load model.
#[derive(Clone, Debug)]
pub enum UserModel {
    Binary(BinaryLoadModel),
    Discrete(DiscreteLoadModel),
    Continuous(ContinuousLoadModel),
}

impl UserModel {
    /// The finite-alphabet view, when the user is discrete.
    pub fn as_discrete(&self) -> Option<DiscreteLoadModel> {
        match self {
            UserModel::Binary(b) => Some(b.to_discrete()),
            UserModel::Discrete(d) => Some(d.clone()),
            UserModel::Continuous(_) => None,
        }
    }

    pub fn mean(&self) -> Result<f64> {
        match self {
            UserModel::Binary(b) => Ok(b.mean()),
            UserModel::Discrete(d) => Ok(d.mean()),
            UserModel::Continuous(c) => c.mean(),
        }
    }
}

/// Several users sharing one AES. Users are independent unless a joint pmf over
/// the product of their (discrete) alphabets is supplied.
#[derive(Clone, Debug)]
pub struct MultiUserModel {
    users: Vec<UserModel>,
    joint: Option<Vec<f64>>,
}

impl MultiUserModel {
    pub fn independent(users: Vec<UserModel>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidModel("no users".into()));
        }
        Ok(Self { users, joint: None })
    }

    /// `joint` is row-major over the product alphabet with the first user's
    /// level varying slowest.
    pub fn correlated(users: Vec<UserModel>, joint: Vec<f64>) -> Result<Self> {
        let discrete: Vec<DiscreteLoadModel> = users
            .iter()
            .map(|u| {
                u.as_discrete()
                    .ok_or_else(|| Error::InvalidModel("joint pmf requires discrete users".into()))
            })
            .collect::<Result<_>>()?;
        let size: usize = discrete.iter().map(DiscreteLoadModel::len).product();
        if joint.len() != size {
            return Err(Error::InvalidModel(format!(
                "joint pmf has {} entries, product alphabet has {size}",
                joint.len()
            )));
        }
        if joint.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel("joint pmf entries must be >= 0".into()));
        }
        let total: f64 = joint.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidModel(format!("joint pmf sums to {total}, not 1")));
        }
        let marginals = marginals(&joint, &discrete.iter().map(DiscreteLoadModel::len).collect::<Vec<_>>());
        for (i, (m, d)) in marginals.iter().zip(&discrete).enumerate() {
            let worst = m.iter().zip(d.pmf()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if worst > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "joint pmf marginal for user {i} differs from its model by {worst:e}"
                )));
            }
        }
        Ok(Self { users, joint: Some(joint) })
    }

    pub fn users(&self) -> &[UserModel] {
        &self.users
    }

    pub fn joint(&self) -> Option<&[f64]> {
        self.joint.as_deref()
    }

    pub fn is_independent(&self) -> bool {
        self.joint.is_none()
    }
}

/// Per-user marginals of a row-major joint pmf.
pub fn marginals(joint: &[f64], sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = sizes.iter().map(|&m| vec![0.0; m]).collect();
    for (flat, &p) in joint.iter().enumerate() {
        let mut rem = flat;
        for (u, &m) in sizes.iter().enumerate().rev() {
            out[u][rem % m] += p;
            rem /= m;
        }
    }
    out
}

/// JSON form of a single user, tagged by `kind`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UserSpec {
    Binary { low: f64, high: f64, p_low: f64 },
    Exponential { mean: f64 },
    Discrete { alphabet: Vec<f64>, pmf: Vec<f64> },
    /// Equally likely levels `{0, spacing, ..., (levels - 1) * spacing}`.
    DiscreteUniform { levels: usize, spacing: f64 },
    /// Continuous uniform density on `[low, high]`.
    Uniform { low: f64, high: f64 },
    Piecewise { segments: Vec<SegmentSpec> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub start: f64,
    /// `null` for an unbounded last piece.
    pub end: Option<f64>,
    #[serde(default)]
    pub poly: Option<Vec<f64>>,
    #[serde(default)]
    pub exp: Option<ExpSpec>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExpSpec {
    pub scale: f64,
    pub rate: f64,
}

impl UserSpec {
    pub fn build(&self) -> Result<UserModel> {
        Ok(match self {
            UserSpec::Binary { low, high, p_low } => UserModel::Binary(BinaryLoadModel::new(*low, *high, *p_low)?),
            UserSpec::Exponential { mean } => UserModel::Continuous(ContinuousLoadModel::exponential(*mean)?),
            UserSpec::Discrete { alphabet, pmf } => {
                UserModel::Discrete(DiscreteLoadModel::new(alphabet.clone(), pmf.clone())?)
            }
            UserSpec::DiscreteUniform { levels, spacing } => {
                UserModel::Discrete(DiscreteLoadModel::uniform_grid(*levels, *spacing)?)
            }
            UserSpec::Uniform { low, high } => UserModel::Continuous(ContinuousLoadModel::uniform(*low, *high)?),
            UserSpec::Piecewise { segments } => {
                let segs = segments
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let shape = match (&s.poly, &s.exp) {
                            (Some(c), None) => SegmentShape::Polynomial(c.clone()),
                            (None, Some(e)) => SegmentShape::Exponential { scale: e.scale, rate: e.rate },
                            _ => {
                                return Err(Error::InvalidModel(format!(
                                    "piece {i} needs exactly one of `poly` or `exp`"
                                )))
                            }
                        };
                        Ok(Segment::new(s.start, s.end.unwrap_or(f64::INFINITY), shape))
                    })
                    .collect::<Result<Vec<_>>>()?;
                UserModel::Continuous(ContinuousLoadModel::piecewise(segs)?)
            }
        })
    }
}
