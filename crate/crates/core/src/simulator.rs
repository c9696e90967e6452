//! Monte-Carlo traces of memoryless EMU policies.
//!
//! Every slot draws i.i.d. demands, applies each user's conditional
//! distribution independently and accumulates sufficient statistics:
//! AES power, joint `(X, Y)` counts for discrete users, and moment sums of
//! `V = X - Y` for continuous users.
//!
//! Randomness is counter addressed. Stream `u` of a ChaCha8 generator keyed
//! by the seed serves user `u`; slot `t` always reads the same four 64-bit
//! words of that stream. Slots are processed in fixed-size chunks whose
//! statistics are merged in chunk order, so the report is bit-identical for
//! any number of worker threads.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ba::{DiscreteSource, Policy};
use crate::closed_forms::ExponentialPolicy;
use crate::error::{Error, Result};
use crate::heuristics::HeuristicSpec;
use crate::info::PROB_FLOOR;
use crate::models::{ContinuousLoadModel, DiscreteLoadModel, MultiUserModel, UserModel};
use crate::units::Unit;

const CHUNK: u64 = 1 << 16;
const DRAWS_PER_SLOT: u64 = 4;
const ALIGN_TOL: f64 = 1e-9;

/// Row samplers, per-user output indices and output values of a joint policy.
type JointChannel = (Vec<Categorical>, Vec<Vec<usize>>, Vec<Vec<f64>>);

#[derive(Clone, Debug)]
pub enum UserPolicy {
    /// `Y = X`.
    Identity,
    /// Conditional pmf over the user's alphabet.
    Discrete(Policy),
    /// Achieving construction for an exponential user.
    Exponential(ExponentialPolicy),
    /// Baseline heuristic at AES budget `power`.
    Heuristic { spec: HeuristicSpec, power: f64 },
}

#[derive(Clone, Debug)]
pub enum PolicySet {
    PerUser(Vec<UserPolicy>),
    /// One conditional pmf on the joint alphabet of all (discrete) users.
    Joint(Policy),
}

#[derive(Clone, Debug)]
pub struct TraceConfig {
    pub n: u64,
    pub seed: u64,
    pub users: MultiUserModel,
    pub policies: PolicySet,
    pub unit: Unit,
}

/// Plug-in mutual information with its Miller-Madow bias term
/// `(K_xy - K_x - K_y + 1) / (2n)` (in `unit`), where `K` counts occupied
/// cells. The bias is reported, not subtracted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MiEstimate {
    pub value: f64,
    pub bias: f64,
    pub unit: Unit,
    pub samples: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContinuousDiagnostics {
    /// AES budget of the simulated policy, if any.
    pub target_power: Option<f64>,
    pub mean_v: f64,
    pub mean_v_std_error: f64,
    pub var_v: f64,
    pub corr_v_y: f64,
    pub atom_fraction: f64,
    pub expected_atom_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub n: u64,
    pub seed: u64,
    pub empirical_power: f64,
    pub power_std_error: f64,
    pub per_user_power: Vec<f64>,
    /// `None` for continuous users.
    pub per_user_leakage: Vec<Option<MiEstimate>>,
    /// Leakage of the whole meter vector, when every user is discrete.
    pub total_leakage: Option<MiEstimate>,
    pub feasibility_violations: u64,
    /// `Some` for continuous users.
    pub continuous: Vec<Option<ContinuousDiagnostics>>,
}

/// Inverse-CDF categorical sampler.
#[derive(Clone, Debug)]
struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { cdf }
    }

    fn sample(&self, u: f64) -> usize {
        let k = self.cdf.partition_point(|&c| c <= u);
        // skip zero-weight cells at the top after rounding
        let mut k = k.min(self.cdf.len() - 1);
        while k > 0 && self.cdf[k] == self.cdf[k - 1] {
            k -= 1;
        }
        k
    }
}

#[derive(Clone, Debug)]
enum Source {
    Discrete { levels: Vec<f64>, dist: Categorical },
    Exponential { mean: f64 },
}

#[derive(Clone, Debug)]
enum Channel {
    Identity,
    Table { outputs: Vec<f64>, rows: Vec<Categorical> },
    Exponential(ExponentialPolicy),
}

#[derive(Clone, Debug)]
struct Prepared {
    sources: Vec<Source>,
    /// Correlated users: joint categorical over the product alphabet.
    joint_source: Option<(Categorical, Vec<Vec<usize>>)>,
    channels: Vec<Channel>,
    /// Joint policy: row samplers over the product alphabet and the
    /// per-user output index of each joint output.
    joint_channel: Option<JointChannel>,
    /// Output alphabet size per discrete user.
    out_sizes: Vec<Option<usize>>,
    in_sizes: Vec<Option<usize>>,
    targets: Vec<Option<f64>>,
}

fn discrete_of(user: &UserModel) -> Option<DiscreteLoadModel> {
    user.as_discrete()
}

fn align(model: &DiscreteLoadModel, policy: &Policy, user: usize) -> Result<()> {
    let inputs = policy.inputs();
    let ok = inputs.len() == model.len()
        && inputs
            .iter()
            .zip(model.alphabet())
            .all(|(p, &a)| p.len() == 1 && (p[0] - a).abs() <= ALIGN_TOL);
    if ok {
        Ok(())
    } else {
        Err(Error::PolicyMismatch(format!(
            "user {user}: policy rows do not match the {} alphabet levels",
            model.len()
        )))
    }
}

fn table(policy: &Policy) -> Channel {
    Channel::Table {
        outputs: policy.outputs().iter().map(|o| o[0]).collect(),
        rows: (0..policy.n_inputs()).map(|x| Categorical::new(policy.row(x))).collect(),
    }
}

fn decode(mut k: usize, sizes: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; sizes.len()];
    for u in (0..sizes.len()).rev() {
        idx[u] = k % sizes[u];
        k /= sizes[u];
    }
    idx
}

fn prepare(config: &TraceConfig) -> Result<Prepared> {
    if config.n == 0 {
        return Err(Error::InvalidArgument("trace length n must be >= 1".into()));
    }
    let users = config.users.users();
    let mut sources = Vec::with_capacity(users.len());
    for (u, user) in users.iter().enumerate() {
        sources.push(match user {
            UserModel::Continuous(ContinuousLoadModel::Exponential { mean }) => Source::Exponential { mean: *mean },
            UserModel::Continuous(_) => {
                return Err(Error::Unsupported(format!("user {u}: only exponential continuous loads can be simulated")))
            }
            _ => {
                let m = discrete_of(user).expect("discrete user");
                Source::Discrete { levels: m.alphabet().to_vec(), dist: Categorical::new(m.pmf()) }
            }
        });
    }
    let in_sizes: Vec<Option<usize>> = sources
        .iter()
        .map(|s| match s {
            Source::Discrete { levels, .. } => Some(levels.len()),
            Source::Exponential { .. } => None,
        })
        .collect();

    let joint_source = match config.users.joint() {
        Some(joint) => {
            let sizes: Vec<usize> = in_sizes.iter().map(|s| s.expect("correlated users are discrete")).collect();
            let decoded = (0..joint.len()).map(|k| decode(k, &sizes)).collect();
            Some((Categorical::new(joint), decoded))
        }
        None => None,
    };

    let mut channels = Vec::new();
    let mut joint_channel = None;
    let mut out_sizes = vec![None; users.len()];
    let mut targets = vec![None; users.len()];
    match &config.policies {
        PolicySet::PerUser(list) => {
            if list.len() != users.len() {
                return Err(Error::PolicyMismatch(format!("{} policies for {} users", list.len(), users.len())));
            }
            for (u, (user, policy)) in users.iter().zip(list).enumerate() {
                let model = discrete_of(user);
                let channel = match (policy, &model) {
                    (UserPolicy::Identity, _) => Channel::Identity,
                    (UserPolicy::Discrete(p), Some(m)) => {
                        align(m, p, u)?;
                        table(p)
                    }
                    (UserPolicy::Heuristic { spec, power }, Some(m)) => {
                        targets[u] = Some(*power);
                        table(&spec.policy(m, *power)?)
                    }
                    (UserPolicy::Exponential(p), None) => {
                        let mean = match user {
                            UserModel::Continuous(ContinuousLoadModel::Exponential { mean }) => *mean,
                            _ => unreachable!(),
                        };
                        if (p.mean - mean).abs() > ALIGN_TOL * mean {
                            return Err(Error::PolicyMismatch(format!(
                                "user {u}: policy built for mean {} but load mean is {mean}",
                                p.mean
                            )));
                        }
                        targets[u] = Some(p.power);
                        Channel::Exponential(*p)
                    }
                    _ => {
                        return Err(Error::PolicyMismatch(format!("user {u}: policy kind does not fit the load model")))
                    }
                };
                out_sizes[u] = match (&channel, in_sizes[u]) {
                    (Channel::Identity, Some(n)) => Some(n),
                    (Channel::Table { outputs, .. }, _) => Some(outputs.len()),
                    _ => None,
                };
                channels.push(channel);
            }
        }
        PolicySet::Joint(policy) => {
            let models: Vec<DiscreteLoadModel> = users
                .iter()
                .enumerate()
                .map(|(u, m)| {
                    discrete_of(m).ok_or_else(|| Error::PolicyMismatch(format!("user {u}: joint policies need discrete users")))
                })
                .collect::<Result<_>>()?;
            let source = match config.users.joint() {
                Some(j) => DiscreteSource::joint(&models, j)?,
                None => DiscreteSource::product(&models)?,
            };
            let aligned = policy.inputs().len() == source.len()
                && policy
                    .inputs()
                    .iter()
                    .zip(source.points())
                    .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= ALIGN_TOL));
            if !aligned {
                return Err(Error::PolicyMismatch("joint policy rows do not match the product alphabet".into()));
            }
            let mut per_user_values: Vec<Vec<f64>> = vec![Vec::new(); users.len()];
            for o in policy.outputs() {
                for (u, &v) in o.iter().enumerate() {
                    per_user_values[u].push(v);
                }
            }
            for vals in per_user_values.iter_mut() {
                vals.sort_by(f64::total_cmp);
                vals.dedup();
            }
            let out_index: Vec<Vec<usize>> = policy
                .outputs()
                .iter()
                .map(|o| {
                    o.iter()
                        .enumerate()
                        .map(|(u, v)| per_user_values[u].partition_point(|w| w < v))
                        .collect()
                })
                .collect();
            for (u, vals) in per_user_values.iter().enumerate() {
                out_sizes[u] = Some(vals.len());
            }
            let rows = (0..policy.n_inputs()).map(|x| Categorical::new(policy.row(x))).collect();
            joint_channel = Some((rows, out_index, policy.outputs().to_vec()));
        }
    }
    Ok(Prepared { sources, joint_source, channels, joint_channel, out_sizes, in_sizes, targets })
}

#[derive(Clone, Copy, Debug, Default)]
struct Draw {
    x: f64,
    y: f64,
    xi: usize,
    yi: usize,
}

struct Streams {
    users: Vec<ChaCha8Rng>,
    joint: ChaCha8Rng,
}

impl Streams {
    fn at(seed: u64, n_users: usize, slot: u64) -> Self {
        let make = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            rng.set_word_pos(slot as u128 * DRAWS_PER_SLOT as u128 * 2);
            rng
        };
        Self { users: (0..n_users as u64).map(make).collect(), joint: make(n_users as u64) }
    }
}

fn uniforms(rng: &mut ChaCha8Rng) -> [f64; DRAWS_PER_SLOT as usize] {
    std::array::from_fn(|_| rng.random::<f64>())
}

impl Prepared {
    fn draw_slot(&self, streams: &mut Streams, out: &mut [Draw]) {
        let joint_u = uniforms(&mut streams.joint);
        let user_u: Vec<[f64; DRAWS_PER_SLOT as usize]> = streams.users.iter_mut().map(uniforms).collect();

        let joint_x = self.joint_source.as_ref().map(|(dist, decoded)| {
            let k = dist.sample(joint_u[0]);
            (k, &decoded[k])
        });
        for (u, src) in self.sources.iter().enumerate() {
            let d = &mut out[u];
            match src {
                Source::Discrete { levels, dist } => {
                    d.xi = match &joint_x {
                        Some((_, idx)) => idx[u],
                        None => dist.sample(user_u[u][0]),
                    };
                    d.x = levels[d.xi];
                }
                Source::Exponential { mean } => {
                    d.x = -mean * (1.0 - user_u[u][0]).ln();
                }
            }
        }

        if let Some((rows, out_index, outputs)) = &self.joint_channel {
            let k = match &joint_x {
                Some((k, _)) => *k,
                None => out.iter().zip(&self.in_sizes).fold(0, |acc, (d, s)| acc * s.unwrap() + d.xi),
            };
            let j = rows[k].sample(joint_u[1]);
            for (u, d) in out.iter_mut().enumerate() {
                d.y = outputs[j][u];
                d.yi = out_index[j][u];
            }
            return;
        }
        for (u, ch) in self.channels.iter().enumerate() {
            let d = &mut out[u];
            match ch {
                Channel::Identity => {
                    d.y = d.x;
                    d.yi = d.xi;
                }
                Channel::Table { outputs, rows } => {
                    d.yi = rows[d.xi].sample(user_u[u][1]);
                    d.y = outputs[d.yi];
                }
                Channel::Exponential(p) => {
                    d.y = p.sample_output(d.x, user_u[u][1], user_u[u][2]);
                }
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    v: f64,
    vv: f64,
    y: f64,
    yy: f64,
    vy: f64,
    atoms: u64,
}

#[derive(Clone, Debug)]
struct Stats {
    n: u64,
    power: f64,
    power_sq: f64,
    per_user_power: Vec<f64>,
    counts: Vec<Option<Vec<u64>>>,
    total: BTreeMap<(u64, u64), u64>,
    moments: Vec<Moments>,
    violations: u64,
}

impl Stats {
    fn new(p: &Prepared) -> Self {
        let k = p.sources.len();
        Self {
            n: 0,
            power: 0.0,
            power_sq: 0.0,
            per_user_power: vec![0.0; k],
            counts: (0..k)
                .map(|u| match (p.in_sizes[u], p.out_sizes[u]) {
                    (Some(a), Some(b)) => Some(vec![0; a * b]),
                    _ => None,
                })
                .collect(),
            total: BTreeMap::new(),
            moments: vec![Moments::default(); k],
            violations: 0,
        }
    }

    fn push(&mut self, p: &Prepared, draws: &[Draw]) {
        self.n += 1;
        let mut slot_power = 0.0;
        let mut xcode = 0u64;
        let mut ycode = 0u64;
        let all_discrete = self.counts.iter().all(Option::is_some);
        for (u, d) in draws.iter().enumerate() {
            if d.y > d.x || d.y < 0.0 {
                self.violations += 1;
            }
            let v = d.x - d.y;
            slot_power += v;
            self.per_user_power[u] += v;
            if let Some(c) = &mut self.counts[u] {
                let cols = p.out_sizes[u].unwrap();
                c[d.xi * cols + d.yi] += 1;
                xcode = xcode * p.in_sizes[u].unwrap() as u64 + d.xi as u64;
                ycode = ycode * cols as u64 + d.yi as u64;
            } else {
                let m = &mut self.moments[u];
                m.v += v;
                m.vv += v * v;
                m.y += d.y;
                m.yy += d.y * d.y;
                m.vy += v * d.y;
                m.atoms += (d.y == 0.0) as u64;
            }
        }
        if all_discrete && draws.len() > 1 {
            *self.total.entry((xcode, ycode)).or_insert(0) += 1;
        }
        self.power += slot_power;
        self.power_sq += slot_power * slot_power;
    }

    fn merge(&mut self, other: Stats) {
        self.n += other.n;
        self.power += other.power;
        self.power_sq += other.power_sq;
        for (a, b) in self.per_user_power.iter_mut().zip(other.per_user_power) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            if let (Some(a), Some(b)) = (a, b) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        for (k, c) in other.total {
            *self.total.entry(k).or_insert(0) += c;
        }
        for (a, b) in self.moments.iter_mut().zip(other.moments) {
            a.v += b.v;
            a.vv += b.vv;
            a.y += b.y;
            a.yy += b.yy;
            a.vy += b.vy;
            a.atoms += b.atoms;
        }
        self.violations += other.violations;
    }
}

fn chunk_stats(p: &Prepared, seed: u64, start: u64, end: u64) -> Stats {
    let mut stats = Stats::new(p);
    let mut streams = Streams::at(seed, p.sources.len(), start);
    let mut draws = vec![Draw::default(); p.sources.len()];
    for _ in start..end {
        p.draw_slot(&mut streams, &mut draws);
        stats.push(p, &draws);
    }
    stats
}

fn mi_from_cells(cells: impl Iterator<Item = ((u64, u64), u64)>, n: u64, unit: Unit) -> MiEstimate {
    let mut joint = Vec::new();
    let mut row: BTreeMap<u64, u64> = BTreeMap::new();
    let mut col: BTreeMap<u64, u64> = BTreeMap::new();
    for ((x, y), c) in cells {
        if c == 0 {
            continue;
        }
        joint.push((x, y, c));
        *row.entry(x).or_insert(0) += c;
        *col.entry(y).or_insert(0) += c;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for &(x, y, c) in &joint {
        let pxy = c as f64 / nf;
        let px = row[&x] as f64 / nf;
        let py = col[&y] as f64 / nf;
        if pxy > PROB_FLOOR {
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    let dof = joint.len() as f64 - row.len() as f64 - col.len() as f64 + 1.0;
    MiEstimate {
        value: unit.from_nats(mi.max(0.0)),
        bias: unit.from_nats(dof.max(0.0) / (2.0 * nf)),
        unit,
        samples: n,
    }
}

/// Plug-in MI of paired discrete samples.
pub fn estimate_mi_plugin(pairs: &[(usize, usize)], unit: Unit) -> Result<MiEstimate> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("plug-in estimate needs at least 2 samples".into()));
    }
    let mut cells: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for &(x, y) in pairs {
        *cells.entry((x as u64, y as u64)).or_insert(0) += 1;
    }
    Ok(mi_from_cells(cells.into_iter(), pairs.len() as u64, unit))
}

/// Simulates `config.n` slots.
pub fn run(config: &TraceConfig) -> Result<SimReport> {
    let prepared = prepare(config)?;
    let n = config.n;
    let chunks: Vec<(u64, u64)> = (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect();
    let partial: Vec<Stats> = chunks
        .par_iter()
        .map(|&(a, b)| chunk_stats(&prepared, config.seed, a, b))
        .collect();
    let mut stats = Stats::new(&prepared);
    for s in partial {
        stats.merge(s);
    }
    if stats.violations > 0 {
        return Err(Error::FeasibilityViolation { count: stats.violations });
    }

    let nf = n as f64;
    let mean = stats.power / nf;
    let var = if n > 1 { ((stats.power_sq - nf * mean * mean) / (nf - 1.0)).max(0.0) } else { 0.0 };
    let unit = config.unit;

    let per_user_leakage = stats
        .counts
        .iter()
        .enumerate()
        .map(|(u, c)| {
            c.as_ref().map(|c| {
                let cols = prepared.out_sizes[u].unwrap();
                let cells = c
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| (((i / cols) as u64, (i % cols) as u64), k));
                mi_from_cells(cells, n, unit)
            })
        })
        .collect::<Vec<_>>();
    let total_leakage = if per_user_leakage.iter().all(Option::is_some) {
        if per_user_leakage.len() == 1 {
            per_user_leakage[0]
        } else {
            Some(mi_from_cells(stats.total.iter().map(|(&k, &c)| (k, c)), n, unit))
        }
    } else {
        None
    };

    let continuous = stats
        .moments
        .iter()
        .enumerate()
        .map(|(u, m)| {
            if stats.counts[u].is_some() {
                return None;
            }
            let mean_v = m.v / nf;
            let mean_y = m.y / nf;
            let var_v = (m.vv / nf - mean_v * mean_v).max(0.0);
            let var_y = (m.yy / nf - mean_y * mean_y).max(0.0);
            let cov = m.vy / nf - mean_v * mean_y;
            let corr = if var_v > 0.0 && var_y > 0.0 { cov / (var_v * var_y).sqrt() } else { 0.0 };
            let sample_var = if n > 1 { var_v * nf / (nf - 1.0) } else { 0.0 };
            let expected_atom = match &prepared.channels.get(u) {
                Some(Channel::Exponential(p)) => Some(p.marginal_atom_weight()),
                _ => None,
            };
            Some(ContinuousDiagnostics {
                target_power: prepared.targets[u],
                mean_v,
                mean_v_std_error: (sample_var / nf).sqrt(),
                var_v,
                corr_v_y: corr,
                atom_fraction: m.atoms as f64 / nf,
                expected_atom_fraction: expected_atom,
            })
        })
        .collect();

    Ok(SimReport {
        n,
        seed: config.seed,
        empirical_power: mean,
        power_std_error: (var / nf).sqrt(),
        per_user_power: stats.per_user_power.iter().map(|p| p / nf).collect(),
        per_user_leakage,
        total_leakage,
        feasibility_violations: 0,
        continuous,
    })
}

/// Writes the trace as CSV `slot,user,x,y`, using the same draws as [`run`].
pub fn write_trace<W: Write>(config: &TraceConfig, mut writer: W) -> Result<()> {
    let prepared = prepare(config)?;
    writeln!(writer, "slot,user,x,y")?;
    let mut streams = Streams::at(config.seed, prepared.sources.len(), 0);
    let mut draws = vec![Draw::default(); prepared.sources.len()];
    for slot in 0..config.n {
        prepared.draw_slot(&mut streams, &mut draws);
        for (u, d) in draws.iter().enumerate() {
            writeln!(writer, "{slot},{u},{:?},{:?}", d.x, d.y)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{binary_policy, exponential_policy};
    use crate::models::BinaryLoadModel;

    fn binary_config(n: u64, seed: u64, policy: UserPolicy) -> TraceConfig {
        let m = BinaryLoadModel::new(0.0, 1.0, 0.5).unwrap();
        TraceConfig {
            n,
            seed,
            users: MultiUserModel::independent(vec![UserModel::Binary(m)]).unwrap(),
            policies: PolicySet::PerUser(vec![policy]),
            unit: Unit::Bits,
        }
    }

    #[test]
    fn identity_policy_leaks_empirical_entropy() {
        let r = run(&binary_config(20_000, 3, UserPolicy::Identity)).unwrap();
        assert_eq!(r.empirical_power, 0.0);
        let mi = r.per_user_leakage[0].unwrap();
        let ones = r.per_user_power.len(); // one user
        assert_eq!(ones, 1);
        assert!((mi.value - 1.0).abs() < 1e-3);
    }

    #[test]
    fn binary_optimal_policy_hits_targets() {
        let m = BinaryLoadModel::new(0.0, 1.0, 0.5).unwrap();
        let pol = binary_policy(&m, 0.2).unwrap();
        let r = run(&binary_config(200_000, 11, UserPolicy::Discrete(pol))).unwrap();
        assert!((r.empirical_power - 0.2).abs() < 4.0 * r.power_std_error);
        assert!((r.total_leakage.unwrap().value - 0.39581).abs() < 0.01);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let m = BinaryLoadModel::new(0.0, 1.0, 0.5).unwrap();
        let cfg = binary_config(150_000, 5, UserPolicy::Discrete(binary_policy(&m, 0.2).unwrap()));
        let a = run(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn trace_matches_run() {
        let m = BinaryLoadModel::new(0.0, 1.0, 0.5).unwrap();
        let cfg = binary_config(1000, 9, UserPolicy::Discrete(binary_policy(&m, 0.2).unwrap()));
        let mut buf = Vec::new();
        write_trace(&cfg, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let total: f64 = text
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
                f[2] - f[3]
            })
            .sum();
        let r = run(&cfg).unwrap();
        assert!((total / 1000.0 - r.empirical_power).abs() < 1e-12);
    }

    #[test]
    fn exponential_policy_diagnostics() {
        let cfg = TraceConfig {
            n: 200_000,
            seed: 1,
            users: MultiUserModel::independent(vec![UserModel::Continuous(ContinuousLoadModel::exponential(1.0).unwrap())])
                .unwrap(),
            policies: PolicySet::PerUser(vec![UserPolicy::Exponential(exponential_policy(1.0, 0.5).unwrap())]),
            unit: Unit::Nats,
        };
        let r = run(&cfg).unwrap();
        let d = r.continuous[0].unwrap();
        assert!((d.mean_v - 0.5).abs() < 4.0 * d.mean_v_std_error);
        assert!(d.corr_v_y.abs() < 0.01);
        assert!((d.var_v - 0.25).abs() < 0.01);
        assert!((d.atom_fraction - 0.5).abs() < 0.01);
        assert!(r.per_user_leakage[0].is_none());
    }

    #[test]
    fn mismatched_policy_rejected() {
        let other = DiscreteLoadModel::uniform(vec![0.0, 1.0, 2.0]).unwrap();
        let pol = Policy::identity(&other.alphabet().iter().map(|&a| vec![a]).collect::<Vec<_>>());
        assert!(matches!(run(&binary_config(10, 0, UserPolicy::Discrete(pol))), Err(Error::PolicyMismatch(_))));
        assert!(run(&binary_config(0, 0, UserPolicy::Identity)).is_err());
    }

    #[test]
    fn plugin_estimator_extremes() {
        let pairs: Vec<(usize, usize)> = (0..10_000).map(|i| (i % 2, i % 2)).collect();
        assert!((estimate_mi_plugin(&pairs, Unit::Bits).unwrap().value - 1.0).abs() < 1e-12);
        let pairs: Vec<(usize, usize)> = (0..10_000).map(|i| (i % 2, (i / 2) % 2)).collect();
        let est = estimate_mi_plugin(&pairs, Unit::Bits).unwrap();
        assert!(est.value <= est.bias + 1e-12);
        assert!(estimate_mi_plugin(&[(0, 0)], Unit::Bits).is_err());
    }
}
