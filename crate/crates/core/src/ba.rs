//! Constrained Blahut-Arimoto for the privacy-power function of finite
//! alphabets.
//!
//! The problem is a rate-distortion problem with distortion
//! `d(x, y) = sum_i (x_i - y_i)` when `y <= x` componentwise and infinite
//! otherwise. Infinite pairs are excluded structurally through a
//! [`FeasibilityMask`]; they never enter the exponentials.
//!
//! For a Lagrange slope `s = -beta <= 0` each run minimises
//! `I(X; Y) + beta * E[d]`. Target powers are reached by bisecting `beta`
//! and time-sharing the two bracketing policies, which is exact on the
//! convex curve.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::{entropy_nats, mutual_information_nats, PROB_FLOOR};
use crate::models::{marginals, DiscreteLoadModel, MultiUserModel};
use crate::units::Unit;

/// Largest product alphabet the solver accepts.
pub const MAX_PRODUCT_ALPHABET: usize = 4096;

const ROW_SUM_TOL: f64 = 1e-10;

/// A finite source over load vectors (one component per user).
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteSource {
    points: Vec<Vec<f64>>,
    pmf: Vec<f64>,
}

impl DiscreteSource {
    pub fn single(model: &DiscreteLoadModel) -> Self {
        Self {
            points: model.alphabet().iter().map(|&x| vec![x]).collect(),
            pmf: model.pmf().to_vec(),
        }
    }

    /// Independent users on the product alphabet.
    pub fn product(models: &[DiscreteLoadModel]) -> Result<Self> {
        let points = product_points(models)?;
        let mut pmf = Vec::with_capacity(points.len());
        for_each_index(&sizes(models), |idx| {
            pmf.push(idx.iter().enumerate().map(|(u, &k)| models[u].pmf()[k]).product());
        });
        Ok(Self { points, pmf })
    }

    /// Correlated users; `joint` is row-major with the first user slowest.
    pub fn joint(models: &[DiscreteLoadModel], joint: &[f64]) -> Result<Self> {
        let points = product_points(models)?;
        if joint.len() != points.len() {
            return Err(Error::InvalidModel(format!(
                "joint pmf has {} entries, product alphabet has {}",
                joint.len(),
                points.len()
            )));
        }
        let total: f64 = joint.iter().sum();
        if joint.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("joint pmf is not a distribution".into()));
        }
        for (u, (m, model)) in marginals(joint, &sizes(models)).iter().zip(models).enumerate() {
            if m.iter().zip(model.pmf()).any(|(a, b)| (a - b).abs() > 1e-9) {
                return Err(Error::InvalidModel(format!("joint pmf marginal of user {u} does not match")));
            }
        }
        Ok(Self { points, pmf: joint.to_vec() })
    }

    pub fn from_multi_user(model: &MultiUserModel) -> Result<Self> {
        let discrete: Vec<DiscreteLoadModel> = model
            .users()
            .iter()
            .map(|u| {
                u.as_discrete()
                    .ok_or_else(|| Error::Unsupported("Blahut-Arimoto needs discrete users".into()))
            })
            .collect::<Result<_>>()?;
        match model.joint() {
            Some(joint) => Self::joint(&discrete, joint),
            None => Self::product(&discrete),
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn entropy(&self, unit: Unit) -> f64 {
        unit.from_nats(entropy_nats(&self.pmf))
    }

    /// `E[sum_i X_i]`.
    pub fn mean_total(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.pmf)
            .map(|(x, p)| p * x.iter().sum::<f64>())
            .sum()
    }

    /// Componentwise minimum over points with positive probability.
    pub fn support_min(&self) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.dims()];
        for (x, &p) in self.points.iter().zip(&self.pmf) {
            if p > PROB_FLOOR {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = o.min(v);
                }
            }
        }
        out
    }

    /// Smallest power at which zero leakage is achievable.
    pub fn perfect_privacy_power(&self) -> f64 {
        (self.mean_total() - self.support_min().iter().sum::<f64>()).max(0.0)
    }
}

fn sizes(models: &[DiscreteLoadModel]) -> Vec<usize> {
    models.iter().map(DiscreteLoadModel::len).collect()
}

fn product_points(models: &[DiscreteLoadModel]) -> Result<Vec<Vec<f64>>> {
    if models.is_empty() {
        return Err(Error::InvalidModel("no users".into()));
    }
    let size = models
        .iter()
        .try_fold(1usize, |acc, m| acc.checked_mul(m.len()))
        .unwrap_or(usize::MAX);
    if size > MAX_PRODUCT_ALPHABET {
        return Err(Error::AlphabetTooLarge { size, limit: MAX_PRODUCT_ALPHABET });
    }
    let mut points = Vec::with_capacity(size);
    for_each_index(&sizes(models), |idx| {
        points.push(idx.iter().enumerate().map(|(u, &k)| models[u].alphabet()[k]).collect());
    });
    Ok(points)
}

/// Visits every multi-index in row-major order (last position fastest).
fn for_each_index(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; sizes.len()];
    if sizes.contains(&0) {
        return;
    }
    loop {
        f(&idx);
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Allowed `(x, y)` pairs, `y <= x` componentwise, with their distortion
/// `sum_i (x_i - y_i)`.
#[derive(Clone, Debug)]
pub struct FeasibilityMask {
    n_out: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl FeasibilityMask {
    pub fn new(inputs: &[Vec<f64>], outputs: &[Vec<f64>]) -> Self {
        let rows = inputs
            .iter()
            .map(|x| {
                outputs
                    .iter()
                    .enumerate()
                    .filter(|(_, y)| y.iter().zip(x).all(|(yi, xi)| yi <= xi))
                    .map(|(j, y)| (j, x.iter().zip(y).map(|(xi, yi)| xi - yi).sum()))
                    .collect()
            })
            .collect();
        Self { n_out: outputs.len(), rows }
    }

    pub fn n_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    pub fn distortion(&self, x: usize, y: usize) -> Option<f64> {
        self.rows[x].iter().find(|(j, _)| *j == y).map(|&(_, d)| d)
    }

    pub fn allowed(&self, x: usize, y: usize) -> bool {
        self.distortion(x, y).is_some()
    }
}

/// A memoryless energy-management policy `f(y | x)`, row-major by input.
#[derive(Clone, Debug, Serialize)]
pub struct Policy {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    matrix: Vec<f64>,
}

impl Policy {
    /// Checks that rows are distributions and that no mass sits on `y > x`.
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>, matrix: Vec<f64>) -> Result<Self> {
        let n_out = outputs.len();
        if matrix.len() != inputs.len() * n_out {
            return Err(Error::PolicyMismatch(format!(
                "matrix has {} entries for {}x{} alphabets",
                matrix.len(),
                inputs.len(),
                n_out
            )));
        }
        let policy = Self { inputs, outputs, matrix };
        let mask = policy.mask();
        for x in 0..policy.inputs.len() {
            let row = policy.row(x);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&q| q < 0.0) {
                return Err(Error::PolicyMismatch(format!("row {x} sums to {sum}")));
            }
            if let Some((y, _)) = row.iter().enumerate().find(|&(y, &q)| q > 0.0 && !mask.allowed(x, y)) {
                return Err(Error::PolicyMismatch(format!("row {x} puts mass on infeasible output {y}")));
            }
        }
        Ok(policy)
    }

    /// Single-user convenience constructor.
    pub fn scalar(inputs: &[f64], outputs: &[f64], matrix: Vec<f64>) -> Result<Self> {
        Self::new(
            inputs.iter().map(|&x| vec![x]).collect(),
            outputs.iter().map(|&y| vec![y]).collect(),
            matrix,
        )
    }

    /// `Y = X`.
    pub fn identity(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            matrix[i * n + i] = 1.0;
        }
        Self { inputs: points.to_vec(), outputs: points.to_vec(), matrix }
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.outputs.len();
        &self.matrix[x * n..(x + 1) * n]
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.matrix[x * self.outputs.len() + y]
    }

    pub fn mask(&self) -> FeasibilityMask {
        FeasibilityMask::new(&self.inputs, &self.outputs)
    }

    /// `E[sum_i (X_i - Y_i)]` under input pmf `pmf`.
    pub fn expected_power(&self, pmf: &[f64]) -> f64 {
        expected_distortion(&self.mask(), pmf, &self.matrix)
    }

    pub fn mutual_information(&self, pmf: &[f64], unit: Unit) -> f64 {
        unit.from_nats(mutual_information_nats(pmf, &self.matrix, self.outputs.len()))
    }
}

fn expected_distortion(mask: &FeasibilityMask, pmf: &[f64], cond: &[f64]) -> f64 {
    let n_out = mask.n_outputs();
    pmf.iter()
        .enumerate()
        .map(|(x, &p)| p * mask.row(x).iter().map(|&(j, d)| cond[x * n_out + j] * d).sum::<f64>())
        .sum()
}

/// Which computation produced a curve point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    BlahutArimoto,
    ClosedFormBinary,
    ClosedFormExponential,
    Waterfilling,
    ConvexAllocator,
    TimeDivision,
    LimitMaxOutput,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::BlahutArimoto => "blahut-arimoto",
            Solver::ClosedFormBinary => "closed-form-binary",
            Solver::ClosedFormExponential => "closed-form-exponential",
            Solver::Waterfilling => "waterfilling",
            Solver::ConvexAllocator => "convex-allocator",
            Solver::TimeDivision => "time-division",
            Solver::LimitMaxOutput => "limit-max-output",
        }
    }
}

/// One `(P, I)` point. `power` is the budget asked for; `used_power` is what
/// the returned policy actually draws from the AES (smaller once `I` hits 0).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CurvePoint {
    pub power: f64,
    pub used_power: f64,
    pub leakage: f64,
    pub unit: Unit,
    pub solver: Solver,
    /// Lagrange slope `dI/dP <= 0` in `unit` per energy unit.
    pub multiplier: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrivacyCurve {
    pub unit: Unit,
    pub points: Vec<CurvePoint>,
}

impl PrivacyCurve {
    /// `P1 < P2` implies `I(P1) >= I(P2) - tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let mut pts: Vec<&CurvePoint> = self.points.iter().collect();
        pts.sort_by(|a, b| a.power.total_cmp(&b.power));
        pts.windows(2).all(|w| w[0].leakage >= w[1].leakage - tol)
    }

    /// Every grid point lies on or below the chord of its neighbours.
    pub fn is_convex(&self, tol: f64) -> bool {
        let mut pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.power, p.leakage)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        pts.windows(3).all(|w| {
            let (p0, i0) = w[0];
            let (p1, i1) = w[1];
            let (p2, i2) = w[2];
            let chord = ((p2 - p1) * i0 + (p1 - p0) * i2) / (p2 - p0);
            i1 <= chord + tol
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BaOptions {
    /// Stop when the Lagrangian upper and lower bounds differ by less (nats).
    pub tol: f64,
    pub max_iter: usize,
    /// Unit for reported leakage and for slopes passed to [`solve_point`].
    pub unit: Unit,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 100_000, unit: Unit::Bits }
    }
}

/// A source together with its output alphabet and feasibility structure.
#[derive(Clone, Debug)]
pub struct BaProblem {
    source: DiscreteSource,
    outputs: Vec<Vec<f64>>,
    mask: FeasibilityMask,
}

impl BaProblem {
    /// Output alphabet equal to the input alphabet.
    pub fn new(source: DiscreteSource) -> Self {
        let outputs = source.points().to_vec();
        Self::with_outputs(source, outputs)
    }

    pub fn with_outputs(source: DiscreteSource, outputs: Vec<Vec<f64>>) -> Self {
        let mask = FeasibilityMask::new(source.points(), &outputs);
        Self { source, outputs, mask }
    }

    pub fn for_model(model: &DiscreteLoadModel) -> Self {
        Self::new(DiscreteSource::single(model))
    }

    pub fn source(&self) -> &DiscreteSource {
        &self.source
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn mask(&self) -> &FeasibilityMask {
        &self.mask
    }

    fn output_index(&self, y: &[f64]) -> Result<usize> {
        self.outputs
            .iter()
            .position(|o| o.as_slice() == y)
            .ok_or_else(|| Error::InvalidArgument(format!("output alphabet lacks {y:?}")))
    }

    fn identity_cond(&self) -> Result<Vec<f64>> {
        let n_out = self.outputs.len();
        let mut cond = vec![0.0; self.source.len() * n_out];
        for (x, point) in self.source.points().iter().enumerate() {
            cond[x * n_out + self.output_index(point)?] = 1.0;
        }
        Ok(cond)
    }

    fn constant_cond(&self) -> Result<Vec<f64>> {
        let n_out = self.outputs.len();
        let j = self.output_index(&self.source.support_min())?;
        let mut cond = vec![0.0; self.source.len() * n_out];
        for x in 0..self.source.len() {
            if self.mask.allowed(x, j) {
                cond[x * n_out + j] = 1.0;
            } else {
                // zero-probability input below the support minimum: keep it feasible
                cond[x * n_out + self.mask.row(x)[0].0] = 1.0;
            }
        }
        Ok(cond)
    }

    fn policy(&self, cond: Vec<f64>) -> Policy {
        Policy {
            inputs: self.source.points().to_vec(),
            outputs: self.outputs.clone(),
            matrix: cond,
        }
    }

    fn evaluate(&self, cond: &[f64]) -> (f64, f64) {
        let power = expected_distortion(&self.mask, self.source.pmf(), cond);
        let info = mutual_information_nats(self.source.pmf(), cond, self.outputs.len());
        (power, info)
    }
}

const WARM_MIX: f64 = 1e-9;
const POLISH_EVERY: usize = 64;
const POLISH_LIMIT: usize = 512;
const POLISH_STEPS: usize = 60;
const SUPPORT_FLOOR: f64 = 1e-12;

fn marginals_at(weights: &[Vec<(usize, f64)>], pmf: &[f64], r: &[f64], z: &mut [f64], c: &mut [f64]) -> f64 {
    let mut objective = 0.0;
    c.iter_mut().for_each(|v| *v = 0.0);
    for (x, row) in weights.iter().enumerate() {
        z[x] = row.iter().map(|&(j, a)| r[j] * a).sum();
        if pmf[x] <= 0.0 {
            continue;
        }
        if z[x] <= 0.0 {
            return f64::INFINITY;
        }
        objective -= pmf[x] * z[x].ln();
        let s = pmf[x] / z[x];
        for &(j, a) in row {
            c[j] += s * a;
        }
    }
    objective
}

fn bound_gap(r: &[f64], c: &[f64]) -> f64 {
    let mut max_log_c = f64::NEG_INFINITY;
    let mut avg_log_c = 0.0;
    for (&rj, &cj) in r.iter().zip(c) {
        if cj > 0.0 {
            let l = cj.ln();
            max_log_c = max_log_c.max(l);
            avg_log_c += rj * cj * l;
        }
    }
    max_log_c - avg_log_c
}

/// Newton iterations on the output marginal restricted to its support,
/// admitting outputs whose optimality condition is violated. Plain BA
/// slows to a sublinear crawl when an output is on the verge of leaving the
/// support; this step converges quadratically there. Returns the bound gap
/// of the refined marginal.
fn polish(weights: &[Vec<(usize, f64)>], pmf: &[f64], r: &mut [f64], tol: f64) -> f64 {
    let n_out = r.len();
    let mut z = vec![0.0; weights.len()];
    let mut c = vec![0.0; n_out];
    let mut support: Vec<usize> = (0..n_out).filter(|&j| r[j] > SUPPORT_FLOOR).collect();
    if support.len() > POLISH_LIMIT {
        marginals_at(weights, pmf, r, &mut z, &mut c);
        return bound_gap(r, &c);
    }
    for rj in r.iter_mut().filter(|rj| **rj <= SUPPORT_FLOOR) {
        *rj = 0.0;
    }
    let total: f64 = r.iter().sum();
    r.iter_mut().for_each(|v| *v /= total);

    let mut objective = marginals_at(weights, pmf, r, &mut z, &mut c);
    for _ in 0..POLISH_STEPS {
        let gap = bound_gap(r, &c);
        if gap < tol || !objective.is_finite() {
            break;
        }
        let outside = (0..n_out)
            .filter(|j| !support.contains(j))
            .max_by(|&a, &b| c[a].total_cmp(&c[b]));
        if let Some(j) = outside {
            if c[j] > 1.0 + 1e-13 {
                support.push(j);
            }
        }
        let m = support.len();
        let pos: Vec<Option<usize>> = {
            let mut p = vec![None; n_out];
            for (k, &j) in support.iter().enumerate() {
                p[j] = Some(k);
            }
            p
        };
        let mut kkt = nalgebra::DMatrix::<f64>::zeros(m + 1, m + 1);
        for (x, row) in weights.iter().enumerate() {
            if pmf[x] <= 0.0 {
                continue;
            }
            let s = pmf[x] / (z[x] * z[x]);
            for &(j, a) in row {
                let Some(pj) = pos[j] else { continue };
                for &(k, b) in row {
                    if let Some(pk) = pos[k] {
                        kkt[(pj, pk)] += s * a * b;
                    }
                }
            }
        }
        let ridge = 1e-12 * (0..m).map(|k| kkt[(k, k)]).sum::<f64>() / m as f64;
        let mut rhs = nalgebra::DVector::<f64>::zeros(m + 1);
        for (k, &j) in support.iter().enumerate() {
            kkt[(k, k)] += ridge;
            kkt[(k, m)] = 1.0;
            kkt[(m, k)] = 1.0;
            rhs[k] = c[j];
        }
        let Some(step) = kkt.lu().solve(&rhs) else { break };

        // a newly admitted output must move inward
        let stuck: Vec<usize> = support
            .iter()
            .enumerate()
            .filter(|&(k, &j)| r[j] == 0.0 && step[k] <= 0.0)
            .map(|(_, &j)| j)
            .collect();
        if !stuck.is_empty() {
            support.retain(|j| !stuck.contains(j));
            continue;
        }
        let mut t_max = 1.0;
        let mut blocking = None;
        for (k, &j) in support.iter().enumerate() {
            if step[k] < 0.0 && r[j] + step[k] < 0.0 {
                let t = r[j] / -step[k];
                if t < t_max {
                    t_max = t;
                    blocking = Some(j);
                }
            }
        }
        let slope: f64 = support.iter().enumerate().map(|(k, &j)| -c[j] * step[k]).sum();
        let mut t = t_max;
        let mut accepted = false;
        let mut trial = r.to_vec();
        let mut tz = vec![0.0; z.len()];
        let mut tc = vec![0.0; n_out];
        for _ in 0..40 {
            for (k, &j) in support.iter().enumerate() {
                trial[j] = (r[j] + t * step[k]).max(0.0);
            }
            if t == t_max {
                if let Some(b) = blocking {
                    trial[b] = 0.0;
                }
            }
            let total: f64 = trial.iter().sum();
            trial.iter_mut().for_each(|v| *v /= total);
            let value = marginals_at(weights, pmf, &trial, &mut tz, &mut tc);
            if value <= objective + 1e-4 * t * slope.min(0.0) + 1e-15 * objective.abs() {
                accepted = true;
                objective = value;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        r.copy_from_slice(&trial);
        z = tz;
        c = tc;
        support.retain(|&j| r[j] > 0.0);
    }
    bound_gap(r, &c)
}

#[derive(Clone, Debug)]
struct Iterate {
    beta: f64,
    r: Vec<f64>,
    cond: Vec<f64>,
    power: f64,
}

fn run_ba(problem: &BaProblem, beta: f64, warm: Option<&[f64]>, opts: &BaOptions) -> Result<Iterate> {
    let pmf = problem.source.pmf();
    let n_in = pmf.len();
    let n_out = problem.outputs.len();
    let mask = &problem.mask;

    let weights: Vec<Vec<(usize, f64)>> = (0..n_in)
        .map(|x| mask.row(x).iter().map(|&(j, d)| (j, (-beta * d).exp())).collect())
        .collect();

    let mut r = match warm {
        // keep every output alive: multiplicative updates cannot revive a zero
        Some(w) if w.len() == n_out => w.iter().map(|&v| (1.0 - WARM_MIX) * v + WARM_MIX / n_out as f64).collect(),
        _ => vec![1.0 / n_out as f64; n_out],
    };
    let mut z = vec![0.0; n_in];
    let mut c = vec![0.0; n_out];
    let mut gap = f64::INFINITY;
    let conditional = |r: &[f64]| {
        let mut cond = vec![0.0; n_in * n_out];
        for (x, row) in weights.iter().enumerate() {
            let zx: f64 = row.iter().map(|&(j, a)| r[j] * a).sum();
            if zx > 0.0 {
                for &(j, a) in row {
                    cond[x * n_out + j] = r[j] * a / zx;
                }
            } else {
                cond[x * n_out + mask.row(x)[0].0] = 1.0;
            }
        }
        cond
    };

    for it in 0..opts.max_iter {
        if it > 0 && it % POLISH_EVERY == 0 {
            let mut trial = r.clone();
            if polish(&weights, pmf, &mut trial, opts.tol) < gap {
                r = trial;
            }
        }
        marginals_at(&weights, pmf, &r, &mut z, &mut c);
        gap = bound_gap(&r, &c);
        if gap < opts.tol {
            let cond = conditional(&r);
            let power = expected_distortion(mask, pmf, &cond);
            return Ok(Iterate { beta, r, cond, power });
        }
        let mut total = 0.0;
        for (rj, cj) in r.iter_mut().zip(&c) {
            *rj *= cj;
            total += *rj;
        }
        r.iter_mut().for_each(|v| *v /= total);
    }

    let cond = conditional(&r);
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        gap,
        last: Box::new(problem.policy(cond)),
    })
}

/// Solves the Lagrangian form at slope `slope <= 0`, given in `opts.unit` per
/// energy unit. `slope = -inf` returns `Y = X`; `slope = 0` returns the
/// constant output at the support minimum (the smallest-power zero-leakage
/// policy).
pub fn solve_point(problem: &BaProblem, slope: f64, opts: &BaOptions) -> Result<(Policy, CurvePoint)> {
    if slope.is_nan() || slope > 0.0 {
        return Err(Error::InvalidArgument(format!("slope must be <= 0, got {slope}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be > 0".into()));
    }
    let cond = if problem.source.perfect_privacy_power() <= 0.0 || slope == 0.0 {
        problem.constant_cond()?
    } else if slope == f64::NEG_INFINITY {
        problem.identity_cond()?
    } else {
        run_ba(problem, opts.unit.to_nats(-slope), None, opts)?.cond
    };
    let (power, info) = problem.evaluate(&cond);
    let point = CurvePoint {
        power,
        used_power: power,
        leakage: opts.unit.from_nats(info),
        unit: opts.unit,
        solver: Solver::BlahutArimoto,
        multiplier: slope,
    };
    Ok((problem.policy(cond), point))
}

/// The optimal policy and leakage at AES budget `target`.
pub fn solve_power(problem: &BaProblem, target: f64, opts: &BaOptions) -> Result<(Policy, CurvePoint)> {
    if !(target.is_finite() && target >= 0.0) {
        return Err(Error::InvalidArgument(format!("power must be finite and >= 0, got {target}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be > 0".into()));
    }
    let unit = opts.unit;
    let pmax = problem.source.perfect_privacy_power();
    let finish = |cond: Vec<f64>, beta: f64| {
        let (used, info) = problem.evaluate(&cond);
        let point = CurvePoint {
            power: target,
            used_power: used,
            leakage: unit.from_nats(info),
            unit,
            solver: Solver::BlahutArimoto,
            multiplier: -unit.from_nats(beta),
        };
        (problem.policy(cond), point)
    };

    if pmax <= 0.0 || target >= pmax * (1.0 - 1e-12) {
        let cond = problem.constant_cond()?;
        let (used, _) = problem.evaluate(&cond);
        let (policy, mut point) = finish(cond, 0.0);
        point.leakage = 0.0;
        point.used_power = used;
        return Ok((policy, point));
    }
    if target == 0.0 {
        return Ok(finish(problem.identity_cond()?, f64::INFINITY));
    }

    let beta_floor = 1e-12 / pmax;
    let beta_ceil = 1e12 / pmax;
    let synthetic = |cond: Vec<f64>, beta: f64| {
        let power = expected_distortion(&problem.mask, problem.source.pmf(), &cond);
        Iterate { beta, r: Vec::new(), cond, power }
    };

    // lo: power >= target (small beta); hi: power <= target (large beta)
    let first = run_ba(problem, 1.0 / pmax, None, opts)?;
    let (mut lo, mut hi) = if first.power >= target {
        let mut lo = first;
        let hi = loop {
            let beta = lo.beta * 4.0;
            if beta > beta_ceil {
                break synthetic(problem.identity_cond()?, f64::INFINITY);
            }
            let it = run_ba(problem, beta, Some(&lo.r), opts)?;
            if it.power <= target {
                break it;
            }
            lo = it;
        };
        (lo, hi)
    } else {
        let mut hi = first;
        let lo = loop {
            let beta = hi.beta / 4.0;
            if beta < beta_floor {
                break synthetic(problem.constant_cond()?, 0.0);
            }
            let it = run_ba(problem, beta, Some(&hi.r), opts)?;
            if it.power >= target {
                break it;
            }
            hi = it;
        };
        (lo, hi)
    };

    let power_eps = 1e-10 * pmax;
    for _ in 0..200 {
        if lo.power - hi.power <= power_eps {
            break;
        }
        let mid_beta = match (lo.beta > 0.0, hi.beta.is_finite()) {
            (true, true) => (lo.beta * hi.beta).sqrt(),
            (false, _) => hi.beta / 4.0,
            (true, false) => lo.beta * 4.0,
        };
        if mid_beta < beta_floor || mid_beta > beta_ceil {
            break;
        }
        if lo.beta > 0.0 && hi.beta.is_finite() && hi.beta / lo.beta < 1.0 + 1e-13 {
            break;
        }
        let warm = if lo.r.is_empty() { &hi.r } else { &lo.r };
        let it = run_ba(problem, mid_beta, Some(warm), opts)?;
        if it.power >= target {
            lo = it;
        } else {
            hi = it;
        }
    }

    let theta = if lo.power - hi.power > 0.0 {
        ((target - hi.power) / (lo.power - hi.power)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let cond: Vec<f64> = lo
        .cond
        .iter()
        .zip(&hi.cond)
        .map(|(a, b)| theta * a + (1.0 - theta) * b)
        .collect();
    let beta = match (lo.beta > 0.0, hi.beta.is_finite()) {
        (true, true) => (lo.beta * hi.beta).sqrt(),
        (true, false) => lo.beta,
        _ => hi.beta,
    };
    Ok(finish(cond, beta))
}

/// One optimal point per requested power. Powers above the perfect-privacy
/// power return zero leakage.
pub fn solve_curve(problem: &BaProblem, grid: &[f64], opts: &BaOptions) -> Result<PrivacyCurve> {
    let points = grid
        .par_iter()
        .map(|&p| solve_power(problem, p, opts).map(|(_, pt)| pt))
        .collect::<Result<Vec<_>>>()?;
    Ok(PrivacyCurve { unit: opts.unit, points })
}

/// Result of comparing the input-alphabet restriction against a refined
/// output alphabet.
#[derive(Clone, Debug, Serialize)]
pub struct RestrictionReport {
    pub power: f64,
    pub unit: Unit,
    pub refined_outputs: Vec<f64>,
    pub restricted: f64,
    pub refined: f64,
    /// `refined - restricted`; negative means the refined alphabet did better.
    pub difference: f64,
    /// `refined >= restricted - tol`.
    pub holds: bool,
    pub tol: f64,
}

/// Largest product alphabet accepted by [`validate_alphabet_restriction`].
pub const RESTRICTION_CHECK_LIMIT: usize = 12;

/// Solves at `power` with `Y` restricted to the input levels and again with
/// `refinement` extra output levels between each pair of consecutive input
/// levels, and compares.
pub fn validate_alphabet_restriction(
    model: &DiscreteLoadModel,
    refinement: usize,
    power: f64,
    opts: &BaOptions,
) -> Result<RestrictionReport> {
    let levels = model.alphabet();
    let size = levels.len() + levels.len().saturating_sub(1) * refinement;
    if size > RESTRICTION_CHECK_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "refined output alphabet has {size} levels, limit is {RESTRICTION_CHECK_LIMIT}"
        )));
    }
    let mut refined_outputs = Vec::with_capacity(size);
    for (k, &x) in levels.iter().enumerate() {
        refined_outputs.push(x);
        if let Some(&next) = levels.get(k + 1) {
            for s in 1..=refinement {
                refined_outputs.push(x + (next - x) * s as f64 / (refinement + 1) as f64);
            }
        }
    }
    let source = DiscreteSource::single(model);
    let restricted = solve_power(&BaProblem::new(source.clone()), power, opts)?.1.leakage;
    let refined_problem = BaProblem::with_outputs(source, refined_outputs.iter().map(|&y| vec![y]).collect());
    let refined = solve_power(&refined_problem, power, opts)?.1.leakage;
    let tol = opts.unit.from_nats(opts.tol).max(1e-6);
    Ok(RestrictionReport {
        power,
        unit: opts.unit,
        refined_outputs,
        restricted,
        refined,
        difference: refined - restricted,
        holds: refined >= restricted - tol,
        tol,
    })
}
