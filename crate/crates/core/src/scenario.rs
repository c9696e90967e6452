//! JSON scenarios and the batch tasks run by the `privpower` binary.
//!
//! A scenario names the users, a power grid, the reporting unit and a list of
//! tasks. Each task produces one output file:
//!
//! | task         | file              |
//! |--------------|-------------------|
//! | `curve`      | `curve.csv`       |
//! | `heuristics` | `heuristics.csv`  |
//! | `allocate`   | `allocate.json`   |
//! | `slb`        | `slb.json`        |
//! | `simulate`   | `sim.json`        |
//!
//! CSV files have the header `P,I,unit,solver` and print numbers with 17
//! significant digits; an unbounded leakage is written as `inf`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    allocate_binary, allocate_general, waterfill_exponential, Allocation, BinaryCurve, ExponentialCurve, LeakageCurve,
    TabulatedCurve,
};
use crate::ba::{solve_curve, solve_power, BaOptions, BaProblem, DiscreteSource, Policy, Solver};
use crate::closed_forms::{binary_leakage, binary_policy, exponential_leakage, exponential_policy, slb_check, SlbReport};
use crate::error::{Error, Result};
use crate::heuristics::{
    limit_max_curve, limit_max_curve_general, limit_max_output, limit_max_output_general, time_division, HeuristicSpec,
};
use crate::models::{BinaryLoadModel, ContinuousLoadModel, DiscreteLoadModel, MultiUserModel, UserModel, UserSpec};
use crate::simulator::{self, PolicySet, SimReport, TraceConfig, UserPolicy};
use crate::units::{Leakage, Unit};

/// Grid resolution for the per-user curves used when discrete users are
/// combined by the general allocator.
const TABULATED_POINTS: usize = 161;
const VERIFY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Curve,
    Allocate,
    Heuristics,
    Slb,
    Simulate,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Curve, Task::Allocate, Task::Heuristics, Task::Slb, Task::Simulate];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Curve => "curve",
            Task::Allocate => "allocate",
            Task::Heuristics => "heuristics",
            Task::Slb => "slb",
            Task::Simulate => "simulate",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Task::Curve => "curve.csv",
            Task::Allocate => "allocate.json",
            Task::Heuristics => "heuristics.csv",
            Task::Slb => "slb.json",
            Task::Simulate => "sim.json",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Scenario(format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerGrid {
    List(Vec<f64>),
    Range { min: f64, max: f64, steps: usize },
}

impl PowerGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            PowerGrid::List(v) => v.clone(),
            &PowerGrid::Range { min, max, steps } => {
                if steps == 0 {
                    return Err(Error::Scenario("power_grid.steps must be >= 1".into()));
                }
                if !(min <= max) {
                    return Err(Error::Scenario("power_grid.min must not exceed max".into()));
                }
                if steps == 1 {
                    vec![min]
                } else {
                    (0..steps).map(|k| min + (max - min) * k as f64 / (steps - 1) as f64).collect()
                }
            }
        };
        if pts.is_empty() {
            return Err(Error::Scenario("power grid is empty".into()));
        }
        if pts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Scenario("power grid values must be finite and >= 0".into()));
        }
        if pts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Scenario("power grid must be sorted".into()));
        }
        Ok(pts)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPolicy {
    /// Optimal memoryless policy at `power`.
    #[default]
    Optimal,
    Identity,
    TimeDivision,
    /// Needs `k`.
    LimitMaxOutput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub n: u64,
    pub seed: u64,
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default)]
    pub policy: SimPolicy,
    #[serde(default)]
    pub k: Option<usize>,
    /// Also write `trace.csv` with every `(slot, user, x, y)`.
    #[serde(default)]
    pub trace: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    BaOptions::default().tol
}

fn default_max_iter() -> usize {
    BaOptions::default().max_iter
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub users: Vec<UserSpec>,
    /// Row-major joint pmf (first user slowest) for correlated users.
    #[serde(default)]
    pub joint_pmf: Option<Vec<f64>>,
    pub power_grid: PowerGrid,
    #[serde(default)]
    pub unit: Unit,
    #[serde(default)]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub sim: Option<SimSpec>,
    #[serde(default)]
    pub ba: Option<BaSettings>,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(s).map_err(|e| Error::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        text.parse::<Scenario>().map_err(|e| e.context(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model()?;
        self.grid()?;
        if self.tasks.contains(&Task::Simulate) {
            let sim = self.sim.as_ref().ok_or_else(|| Error::Scenario("task simulate needs a sim section".into()))?;
            if sim.n == 0 {
                return Err(Error::Scenario("sim.n must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        self.power_grid.points()
    }

    pub fn model(&self) -> Result<MultiUserModel> {
        if self.users.is_empty() {
            return Err(Error::Scenario("no users".into()));
        }
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| u.build().map_err(|e| scenario_error(e, format!("user {i}"))))
            .collect::<Result<Vec<_>>>()?;
        match &self.joint_pmf {
            Some(j) => MultiUserModel::correlated(users, j.clone()).map_err(|e| scenario_error(e, "joint_pmf")),
            None => MultiUserModel::independent(users).map_err(|e| scenario_error(e, "users")),
        }
    }

    fn ba_options(&self) -> BaOptions {
        let mut opts = BaOptions { unit: self.unit, ..BaOptions::default() };
        if let Some(b) = self.ba {
            opts.tol = b.tol;
            opts.max_iter = b.max_iter;
        }
        opts
    }
}

fn scenario_error(e: Error, context: impl Into<String>) -> Error {
    match e {
        Error::InvalidModel(m) | Error::InvalidArgument(m) => Error::Scenario(format!("{}: {m}", context.into())),
        other => other.context(context),
    }
}

/// Process exit status for an error: 2 for scenario validation failures,
/// 3 for solver non-convergence, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Scenario(_) | Error::InvalidModel(_) | Error::Json(_) => 2,
        Error::NonConvergence { .. } => 3,
        _ => 1,
    }
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn leak(l: Leakage) -> String {
    match l {
        Leakage::Finite(v) => num(v),
        Leakage::Unbounded => "inf".into(),
    }
}

/// Collects `P,I,unit,solver` rows.
struct CsvOut {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    fn new() -> Result<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(CSV_HEADER).map_err(csv_error)?;
        Ok(Self { writer })
    }

    fn row(&mut self, power: f64, leakage: Leakage, unit: Unit, solver: &str) -> Result<()> {
        self.writer
            .write_record([num(power).as_str(), leak(leakage).as_str(), unit.as_str(), solver])
            .map_err(csv_error)
    }

    fn finish(self) -> Result<String> {
        let bytes = self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Scenario(format!("csv: {e}"))
}

const CSV_HEADER: [&str; 4] = ["P", "I", "unit", "solver"];

enum Plan {
    Binary(BinaryLoadModel),
    Exponential(f64),
    Ba(BaProblem),
    Independent(Vec<UserModel>),
}

fn plan(model: &MultiUserModel) -> Result<Plan> {
    let users = model.users();
    if !model.is_independent() {
        return Ok(Plan::Ba(BaProblem::new(DiscreteSource::from_multi_user(model)?)));
    }
    if users.len() == 1 {
        return match &users[0] {
            UserModel::Binary(b) => Ok(Plan::Binary(*b)),
            UserModel::Continuous(ContinuousLoadModel::Exponential { mean }) => Ok(Plan::Exponential(*mean)),
            UserModel::Discrete(d) => Ok(Plan::Ba(BaProblem::for_model(d))),
            UserModel::Continuous(_) => Err(Error::Unsupported(
                "no privacy-power solver for general continuous densities; the slb task reports the Shannon lower bound".into(),
            )),
        };
    }
    Ok(Plan::Independent(users.to_vec()))
}

fn user_curve(user: &UserModel, opts: &BaOptions) -> Result<Box<dyn LeakageCurve>> {
    Ok(match user {
        UserModel::Binary(b) => Box::new(BinaryCurve(*b)),
        UserModel::Continuous(ContinuousLoadModel::Exponential { mean }) => Box::new(ExponentialCurve { mean: *mean }),
        UserModel::Discrete(d) => {
            let pp = d.perfect_privacy_power();
            if pp <= 0.0 {
                // a single-level load never leaks
                return Ok(Box::new(TabulatedCurve::new(vec![0.0, 1.0], vec![0.0, 0.0])?));
            }
            let grid: Vec<f64> = (0..TABULATED_POINTS).map(|k| pp * k as f64 / (TABULATED_POINTS - 1) as f64).collect();
            let curve = solve_curve(&BaProblem::for_model(d), &grid, &BaOptions { unit: Unit::Nats, ..*opts })?;
            Box::new(TabulatedCurve::from_curve(&curve)?)
        }
        UserModel::Continuous(_) => {
            return Err(Error::Unsupported(
                "the allocator needs an exact curve for every user; general continuous densities only have the Shannon lower bound".into(),
            ))
        }
    })
}

/// Optimal allocation for independent users at each grid power.
fn allocations(users: &[UserModel], grid: &[f64], opts: &BaOptions) -> Result<Vec<Allocation>> {
    let unit = opts.unit;
    let binaries: Option<Vec<BinaryLoadModel>> = users
        .iter()
        .map(|u| match u {
            UserModel::Binary(b) => Some(*b),
            _ => None,
        })
        .collect();
    if let Some(b) = binaries {
        return grid.par_iter().map(|&p| allocate_binary(&b, p, unit)).collect();
    }
    let means: Option<Vec<f64>> = users
        .iter()
        .map(|u| match u {
            UserModel::Continuous(ContinuousLoadModel::Exponential { mean }) => Some(*mean),
            _ => None,
        })
        .collect();
    if let Some(m) = means {
        return grid.iter().map(|&p| waterfill_exponential(&m, p, unit)).collect();
    }
    let curves = users.iter().map(|u| user_curve(u, opts)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn LeakageCurve> = curves.iter().map(|c| c.as_ref()).collect();
    grid.par_iter().map(|&p| allocate_general(&refs, p, unit)).collect()
}

/// `P,I,unit,solver` rows, one per grid point.
pub fn cmd_curve(scenario: &Scenario) -> Result<String> {
    let model = scenario.model()?;
    let grid = scenario.grid()?;
    let opts = scenario.ba_options();
    let unit = scenario.unit;
    let mut out = CsvOut::new()?;
    match plan(&model)? {
        Plan::Binary(b) => {
            for &p in &grid {
                out.row(p, Leakage::Finite(binary_leakage(&b, p, unit)), unit, Solver::ClosedFormBinary.as_str())?;
            }
        }
        Plan::Exponential(mean) => {
            for &p in &grid {
                out.row(p, exponential_leakage(mean, p, unit)?, unit, Solver::ClosedFormExponential.as_str())?;
            }
        }
        Plan::Ba(problem) => {
            for pt in solve_curve(&problem, &grid, &opts)?.points {
                out.row(pt.power, Leakage::Finite(pt.leakage), unit, pt.solver.as_str())?;
            }
        }
        Plan::Independent(users) => {
            for a in allocations(&users, &grid, &opts)? {
                out.row(a.power, a.total_leakage, unit, a.solver.as_str())?;
            }
        }
    }
    out.finish()
}

fn single_discrete(model: &MultiUserModel, task: &str) -> Result<DiscreteLoadModel> {
    match model.users() {
        [u] => u
            .as_discrete()
            .ok_or_else(|| Error::Unsupported(format!("{task} needs a discrete load model"))),
        _ => Err(Error::Unsupported(format!("{task} needs exactly one user"))),
    }
}

/// Optimal, time-division and limit-max series for a single discrete user.
/// The optimal series is also evaluated at every limit-max power so each
/// heuristic point has a matched optimum. For a model that is not an evenly
/// spaced uniform one, the limit-max series uses the exact general-pmf
/// extension and is labelled `limit-max-output-extension`.
pub fn cmd_heuristics(scenario: &Scenario) -> Result<String> {
    let model = scenario.model()?;
    let d = single_discrete(&model, "heuristics")?;
    let grid = scenario.grid()?;
    let unit = scenario.unit;

    let (limit_pts, limit_label) = match limit_max_curve(&d, unit) {
        Ok(pts) => (pts, "limit-max-output"),
        Err(Error::Unsupported(_)) => (limit_max_curve_general(&d, unit)?, "limit-max-output-extension"),
        Err(e) => return Err(e),
    };
    let mut optimal_grid: Vec<f64> = grid.iter().copied().chain(limit_pts.iter().map(|p| p.power)).collect();
    optimal_grid.sort_by(f64::total_cmp);
    optimal_grid.dedup();
    let optimal = solve_curve(&BaProblem::for_model(&d), &optimal_grid, &scenario.ba_options())?;

    let mut out = CsvOut::new()?;
    for pt in &optimal.points {
        out.row(pt.power, Leakage::Finite(pt.leakage), unit, pt.solver.as_str())?;
    }
    for &p in &grid {
        let pt = time_division(&d, p, unit)?;
        out.row(p, Leakage::Finite(pt.leakage), unit, Solver::TimeDivision.as_str())?;
    }
    for pt in &limit_pts {
        out.row(pt.power, Leakage::Finite(pt.leakage), unit, limit_label)?;
    }
    out.finish()
}

#[derive(Clone, Debug, Serialize)]
pub struct AllocateReport {
    pub unit: Unit,
    pub allocations: Vec<Allocation>,
}

/// One allocation per grid power, for independent users.
pub fn cmd_allocate(scenario: &Scenario) -> Result<AllocateReport> {
    let model = scenario.model()?;
    if !model.is_independent() {
        return Err(Error::Unsupported(
            "allocation needs independent users; correlated users are solved jointly by the curve task".into(),
        ));
    }
    let grid = scenario.grid()?;
    let allocations = allocations(model.users(), &grid, &scenario.ba_options())?;
    Ok(AllocateReport { unit: scenario.unit, allocations })
}

#[derive(Clone, Debug, Serialize)]
pub struct SlbUserReport {
    pub user: usize,
    pub critical_power: Option<f64>,
    pub differential_entropy_nats: f64,
    pub points: Vec<SlbReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlbTaskReport {
    /// Bounds are always in nats.
    pub unit: Unit,
    pub users: Vec<SlbUserReport>,
}

/// Shannon lower bound check at every grid power, for each continuous user.
pub fn cmd_slb(scenario: &Scenario) -> Result<SlbTaskReport> {
    let model = scenario.model()?;
    let grid = scenario.grid()?;
    let mut users = Vec::new();
    for (i, u) in model.users().iter().enumerate() {
        let UserModel::Continuous(c) = u else { continue };
        let points = grid
            .par_iter()
            .map(|&p| slb_check(c, p))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.context(format!("user {i}")))?;
        users.push(SlbUserReport {
            user: i,
            critical_power: points.first().and_then(|p| p.critical_power),
            differential_entropy_nats: c.differential_entropy()?,
            points,
        });
    }
    if users.is_empty() {
        return Err(Error::Unsupported("the slb task needs at least one continuous user".into()));
    }
    Ok(SlbTaskReport { unit: Unit::Nats, users })
}

#[derive(Clone, Debug, Serialize)]
pub struct SimTaskReport {
    pub policy: SimPolicy,
    pub requested_power: f64,
    pub unit: Unit,
    /// Expected AES power of the simulated policy.
    pub analytic_power: f64,
    /// Exact leakage of the simulated policy.
    pub analytic_leakage: Leakage,
    /// Closed-form heuristic value, when one exists.
    pub formula_leakage: Option<f64>,
    pub report: SimReport,
}

fn sim_spec(scenario: &Scenario) -> Result<&SimSpec> {
    scenario.sim.as_ref().ok_or_else(|| Error::Scenario("task simulate needs a sim section".into()))
}

/// Builds the simulated policies and their exact `(P, I)`.
fn sim_policies(scenario: &Scenario, model: &MultiUserModel) -> Result<(PolicySet, f64, Leakage, Option<f64>, f64)> {
    let sim = sim_spec(scenario)?;
    let unit = scenario.unit;
    let opts = scenario.ba_options();
    let needs_power = || sim.power.ok_or_else(|| Error::Scenario("sim.power is required for this policy".into()));
    let users = model.users();

    match sim.policy {
        SimPolicy::Identity => {
            let mut info = Leakage::Finite(0.0);
            for u in users {
                info = info
                    + match u.as_discrete() {
                        Some(d) => Leakage::Finite(d.entropy(unit)),
                        None => Leakage::Unbounded,
                    };
            }
            if let Some(j) = model.joint() {
                let src = DiscreteSource::from_multi_user(model)?;
                debug_assert_eq!(src.len(), j.len());
                info = Leakage::Finite(src.entropy(unit));
            }
            Ok((PolicySet::PerUser(vec![UserPolicy::Identity; users.len()]), 0.0, info, None, 0.0))
        }
        SimPolicy::TimeDivision | SimPolicy::LimitMaxOutput => {
            let d = single_discrete(model, "heuristic simulation")?;
            let (spec, power, formula) = if sim.policy == SimPolicy::TimeDivision {
                let p = needs_power()?;
                (HeuristicSpec::TimeDivision, p, time_division(&d, p, unit)?.leakage)
            } else {
                let k = sim.k.ok_or_else(|| Error::Scenario("sim.k is required for limit_max_output".into()))?;
                let pt = limit_max_output(&d, k, unit).or_else(|_| limit_max_output_general(&d, k, unit))?;
                (HeuristicSpec::LimitMaxOutput { k }, pt.power, pt.leakage)
            };
            spec.validate(&d)?;
            let policy = spec.policy(&d, power)?;
            let analytic_power = policy.expected_power(d.pmf());
            let info = policy.mutual_information(d.pmf(), unit);
            Ok((
                PolicySet::PerUser(vec![UserPolicy::Heuristic { spec, power }]),
                analytic_power,
                Leakage::Finite(info),
                Some(formula),
                power,
            ))
        }
        SimPolicy::Optimal => {
            let power = needs_power()?;
            if !model.is_independent() {
                let problem = BaProblem::new(DiscreteSource::from_multi_user(model)?);
                let (policy, pt) = solve_power(&problem, power, &opts)?;
                return Ok((PolicySet::Joint(policy), pt.used_power, Leakage::Finite(pt.leakage), None, power));
            }
            let per_user: Vec<f64> = if users.len() == 1 {
                vec![power]
            } else {
                allocations(users, &[power], &opts)?.remove(0).per_user
            };
            let mut policies = Vec::new();
            let mut used = 0.0;
            let mut info = Leakage::Finite(0.0);
            for (u, &p) in users.iter().zip(&per_user) {
                let (pol, pw, leak) = optimal_user_policy(u, p, &opts)?;
                policies.push(pol);
                used += pw;
                info = info + leak;
            }
            Ok((PolicySet::PerUser(policies), used, info, None, power))
        }
    }
}

fn optimal_user_policy(user: &UserModel, power: f64, opts: &BaOptions) -> Result<(UserPolicy, f64, Leakage)> {
    let unit = opts.unit;
    match user {
        UserModel::Binary(b) => {
            let p = power.min(b.perfect_privacy_power());
            let pol = binary_policy(b, p)?;
            let pmf = [b.p_low, 1.0 - b.p_low];
            let used = pol.expected_power(&pmf);
            let info = pol.mutual_information(&pmf, unit);
            Ok((UserPolicy::Discrete(pol), used, Leakage::Finite(info)))
        }
        UserModel::Continuous(ContinuousLoadModel::Exponential { mean }) => {
            let p = power.min(*mean);
            if p <= 0.0 {
                return Ok((UserPolicy::Identity, 0.0, Leakage::Unbounded));
            }
            Ok((UserPolicy::Exponential(exponential_policy(*mean, p)?), p, exponential_leakage(*mean, p, unit)?))
        }
        UserModel::Discrete(d) => {
            let (pol, pt): (Policy, _) = solve_power(&BaProblem::for_model(d), power, opts)?;
            Ok((UserPolicy::Discrete(pol), pt.used_power, Leakage::Finite(pt.leakage)))
        }
        UserModel::Continuous(_) => Err(Error::Unsupported(
            "no achieving policy is known for general continuous densities".into(),
        )),
    }
}

fn trace_config(scenario: &Scenario) -> Result<(TraceConfig, SimPolicy, f64, f64, Leakage, Option<f64>)> {
    let sim = sim_spec(scenario)?;
    let model = scenario.model()?;
    let (policies, analytic_power, analytic_leakage, formula, requested) = sim_policies(scenario, &model)?;
    let config = TraceConfig { n: sim.n, seed: sim.seed, users: model, policies, unit: scenario.unit };
    Ok((config, sim.policy, requested, analytic_power, analytic_leakage, formula))
}

/// Simulates the configured policy and compares it with its exact `(P, I)`.
pub fn cmd_simulate(scenario: &Scenario) -> Result<SimTaskReport> {
    let (config, policy, requested_power, analytic_power, analytic_leakage, formula_leakage) = trace_config(scenario)?;
    let report = simulator::run(&config)?;
    Ok(SimTaskReport {
        policy,
        requested_power,
        unit: scenario.unit,
        analytic_power,
        analytic_leakage,
        formula_leakage,
        report,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn render(scenario: &Scenario, task: Task) -> Result<String> {
    match task {
        Task::Curve => cmd_curve(scenario),
        Task::Heuristics => cmd_heuristics(scenario),
        Task::Allocate => to_json(&cmd_allocate(scenario)?),
        Task::Slb => to_json(&cmd_slb(scenario)?),
        Task::Simulate => to_json(&cmd_simulate(scenario)?),
    }
}

/// Runs `tasks` (or the scenario's own list when `None`) and writes one
/// file per task into `out`. Tasks run in parallel; files are written
/// afterwards in task order. Returns the written paths.
pub fn run(scenario: &Scenario, out: &Path, tasks: Option<&[Task]>) -> Result<Vec<PathBuf>> {
    let tasks: Vec<Task> = tasks
        .unwrap_or(&scenario.tasks)
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if tasks.is_empty() {
        return Ok(Vec::new());
    }
    if tasks.contains(&Task::Simulate) {
        sim_spec(scenario)?;
    }
    let rendered = tasks
        .par_iter()
        .map(|&t| render(scenario, t).map_err(|e| e.context(format!("task {t}"))))
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (task, text) in tasks.iter().zip(rendered) {
        let path = out.join(task.file_name());
        fs::write(&path, text)?;
        written.push(path);
    }
    if tasks.contains(&Task::Simulate) && scenario.sim.as_ref().is_some_and(|s| s.trace) {
        let (config, ..) = trace_config(scenario)?;
        let path = out.join("trace.csv");
        let file = std::io::BufWriter::new(fs::File::create(&path)?);
        simulator::write_trace(&config, file)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct CsvRow {
    #[serde(rename = "P")]
    pub power: f64,
    #[serde(rename = "I")]
    pub leakage: f64,
    pub unit: Unit,
    pub solver: String,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    if reader.headers().map_err(csv_error)? != CSV_HEADER.as_slice() {
        return Err(Error::Scenario("missing P,I,unit,solver header".into()));
    }
    reader.deserialize().map(|r| r.map_err(csv_error)).collect()
}

fn check_series(name: &str, rows: &[&CsvRow], problems: &mut Vec<String>) {
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.power, r.leakage)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for &(p, i) in &pts {
        if i < -VERIFY_TOL || (i.is_infinite() && p > 0.0) || i.is_nan() {
            problems.push(format!("{name}: invalid leakage {i} at P = {p}"));
        }
    }
    let finite: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.1.is_finite()).collect();
    for w in finite.windows(2) {
        if w[1].1 > w[0].1 + VERIFY_TOL {
            problems.push(format!("{name}: leakage increases between P = {} and {}", w[0].0, w[1].0));
        }
    }
    for w in finite.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        if c.0 > a.0 {
            let chord = a.1 + (c.1 - a.1) * (b.0 - a.0) / (c.0 - a.0);
            if b.1 > chord + VERIFY_TOL {
                problems.push(format!("{name}: not convex at P = {}", b.0));
            }
        }
    }
}

/// Re-reads the files in `out` and checks the module invariants: curve
/// monotonicity and convexity, heuristics above the optimum, allocations
/// within budget, no feasibility violations. Returns the list of checked
/// files, or a scenario error listing every problem.
pub fn verify(out: &Path) -> Result<Vec<PathBuf>> {
    let mut problems = Vec::new();
    let mut checked = Vec::new();

    let curve = out.join(Task::Curve.file_name());
    if curve.exists() {
        let rows = parse_csv(&fs::read_to_string(&curve)?)?;
        let solvers: BTreeSet<&str> = rows.iter().map(|r| r.solver.as_str()).collect();
        for s in solvers {
            let series: Vec<&CsvRow> = rows.iter().filter(|r| r.solver == s).collect();
            check_series(&format!("curve.csv/{s}"), &series, &mut problems);
        }
        // a single family may use several solvers; check them together too
        check_series("curve.csv", &rows.iter().collect::<Vec<_>>(), &mut problems);
        checked.push(curve);
    }

    let heur = out.join(Task::Heuristics.file_name());
    if heur.exists() {
        let rows = parse_csv(&fs::read_to_string(&heur)?)?;
        let optimal: Vec<&CsvRow> = rows.iter().filter(|r| r.solver == Solver::BlahutArimoto.as_str()).collect();
        check_series("heuristics.csv/optimal", &optimal, &mut problems);
        for r in rows.iter().filter(|r| r.solver != Solver::BlahutArimoto.as_str()) {
            match optimal.iter().find(|o| (o.power - r.power).abs() <= 1e-12 * r.power.max(1.0)) {
                Some(o) if r.leakage < o.leakage - 1e-9 => problems.push(format!(
                    "heuristics.csv/{}: {} below the optimum {} at P = {}",
                    r.solver, r.leakage, o.leakage, r.power
                )),
                Some(_) => {}
                None => problems.push(format!("heuristics.csv/{}: no optimal point at P = {}", r.solver, r.power)),
            }
        }
        checked.push(heur);
    }

    let alloc = out.join(Task::Allocate.file_name());
    if alloc.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&alloc)?)?;
        let list = v["allocations"].as_array().cloned().unwrap_or_default();
        let mut last: Option<(f64, f64)> = None;
        for a in &list {
            let power = a["power"].as_f64().unwrap_or(f64::NAN);
            let per: Vec<f64> = a["per_user"].as_array().into_iter().flatten().filter_map(|x| x.as_f64()).collect();
            let total = a["total_leakage"].as_f64().unwrap_or(f64::INFINITY);
            if per.iter().any(|&p| p < -1e-12) || per.iter().sum::<f64>() > power + 1e-9 * power.max(1.0) {
                problems.push(format!("allocate.json: allocation at P = {power} exceeds the budget"));
            }
            if let Some((lp, lt)) = last {
                if power >= lp && total > lt + VERIFY_TOL {
                    problems.push(format!("allocate.json: total leakage increases at P = {power}"));
                }
            }
            last = Some((power, total));
        }
        checked.push(alloc);
    }

    let sim = out.join(Task::Simulate.file_name());
    if sim.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sim)?)?;
        if v["report"]["feasibility_violations"].as_u64() != Some(0) {
            problems.push("sim.json: feasibility violations reported".into());
        }
        checked.push(sim);
    }

    let slb = out.join(Task::Slb.file_name());
    if slb.exists() {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&slb)?)?;
        for u in v["users"].as_array().into_iter().flatten() {
            let bounds: Vec<f64> = u["points"]
                .as_array()
                .into_iter()
                .flatten()
                .map(|p| p["bound_nats"].as_f64().unwrap_or(f64::INFINITY))
                .collect();
            if bounds.windows(2).any(|w| w[1] > w[0] + VERIFY_TOL) {
                problems.push(format!("slb.json: bound increases for user {}", u["user"]));
            }
        }
        checked.push(slb);
    }

    if problems.is_empty() {
        Ok(checked)
    } else {
        Err(Error::Scenario(format!("verification failed:\n  {}", problems.join("\n  "))))
    }
}
