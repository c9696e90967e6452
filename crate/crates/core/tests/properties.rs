use privpower::allocator::{
    allocate_binary, allocate_general, waterfill_exponential, BinaryCurve, ExponentialCurve, LeakageCurve,
};
use privpower::ba::{solve_curve, solve_power, BaOptions, BaProblem, Policy};
use privpower::closed_forms::{binary_leakage, exponential_leakage, slb_bound, slb_check};
use privpower::heuristics::{limit_max_output, limit_max_policy, time_division, time_division_policy, HeuristicSpec};
use privpower::models::{BinaryLoadModel, ContinuousLoadModel, DiscreteLoadModel, MultiUserModel, UserModel};
use privpower::simulator::{run, PolicySet, TraceConfig, UserPolicy};
use privpower::Unit;
use proptest::prelude::*;

fn discrete_model(max_levels: usize) -> impl Strategy<Value = DiscreteLoadModel> {
    (2..=max_levels)
        .prop_flat_map(|n| {
            (
                prop::collection::btree_set(0u32..400, n),
                prop::collection::vec(0.05f64..1.0, n),
            )
        })
        .prop_filter_map("needs as many levels as weights", |(levels, weights)| {
            let alphabet: Vec<f64> = levels.iter().map(|&v| v as f64 / 100.0).collect();
            if alphabet.len() != weights.len() {
                return None;
            }
            let total: f64 = weights.iter().sum();
            let mut pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let head: f64 = pmf[..pmf.len() - 1].iter().sum();
            *pmf.last_mut().unwrap() = 1.0 - head;
            DiscreteLoadModel::new(alphabet, pmf).ok()
        })
}

fn binary_model() -> impl Strategy<Value = BinaryLoadModel> {
    (0.0f64..2.0, 0.1f64..3.0, 0.02f64..0.98)
        .prop_map(|(low, span, p)| BinaryLoadModel::new(low, low + span, p).unwrap())
}

fn assert_feasible(policy: &Policy, pmf: &[f64], power: f64) {
    for (x, input) in policy.inputs().iter().enumerate() {
        for (y, output) in policy.outputs().iter().enumerate() {
            if output.iter().zip(input).any(|(o, i)| o > &(i + 1e-12)) {
                assert_eq!(policy.prob(x, y), 0.0, "mass on infeasible pair ({x}, {y})");
            }
        }
    }
    assert!(policy.expected_power(pmf) <= power + 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_units_agree(model in discrete_model(8)) {
        let bits = model.entropy(Unit::Bits);
        let nats = model.entropy(Unit::Nats);
        prop_assert!(nats >= 0.0);
        prop_assert!((bits * std::f64::consts::LN_2 - nats).abs() <= 1e-12);
    }

    #[test]
    fn binary_entropy_matches_discrete(model in binary_model()) {
        prop_assert_eq!(model.entropy(Unit::Bits), model.to_discrete().entropy(Unit::Bits));
    }

    #[test]
    fn exponential_differential_entropy(mean in 0.01f64..50.0) {
        let h = ContinuousLoadModel::exponential(mean).unwrap().differential_entropy().unwrap();
        prop_assert!((h - (1.0 + mean.ln())).abs() <= 1e-12 * (1.0 + mean.ln().abs()));
    }

    #[test]
    fn ba_curve_shape_and_endpoints(model in discrete_model(6), cuts in prop::collection::vec(0.0f64..1.2, 1..8)) {
        let pp = model.perfect_privacy_power();
        let mut grid: Vec<f64> = cuts.iter().map(|c| c * pp).collect();
        grid.extend([0.0, pp]);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let curve = solve_curve(&BaProblem::for_model(&model), &grid, &BaOptions::default()).unwrap();
        prop_assert!(curve.is_monotone(1e-9));
        prop_assert!(curve.is_convex(1e-6));
        prop_assert!((curve.points[0].leakage - model.entropy(Unit::Bits)).abs() <= 1e-8);
        let at_pp = curve.points.iter().find(|p| p.power == pp).unwrap();
        prop_assert!(at_pp.leakage.abs() <= 1e-8);
    }

    #[test]
    fn ba_policies_are_feasible(model in discrete_model(6), frac in 0.0f64..1.0) {
        let power = frac * model.perfect_privacy_power();
        let (policy, point) = solve_power(&BaProblem::for_model(&model), power, &BaOptions::default()).unwrap();
        assert_feasible(&policy, model.pmf(), power);
        prop_assert!((policy.mutual_information(model.pmf(), Unit::Bits) - point.leakage).abs() <= 1e-9);
    }

    #[test]
    fn ba_matches_binary_closed_form(model in binary_model(), frac in 0.0f64..1.0) {
        let power = frac * model.perfect_privacy_power();
        let (_, point) = solve_power(&BaProblem::for_model(&model.to_discrete()), power, &BaOptions::default()).unwrap();
        prop_assert!((point.leakage - binary_leakage(&model, power, Unit::Bits)).abs() <= 1e-6);
    }

    #[test]
    fn binary_leakage_non_increasing(model in binary_model(), a in 0.0f64..1.5, b in 0.0f64..1.5) {
        let pp = model.perfect_privacy_power();
        let (lo, hi) = if a < b { (a * pp, b * pp) } else { (b * pp, a * pp) };
        prop_assert!(binary_leakage(&model, lo, Unit::Nats) >= binary_leakage(&model, hi, Unit::Nats));
        prop_assert_eq!(binary_leakage(&model, hi.max(pp), Unit::Nats), 0.0);
        if lo < pp {
            prop_assert!(binary_leakage(&model, lo, Unit::Nats) > 0.0);
        }
    }

    #[test]
    fn slb_tight_for_exponential(mean in 0.05f64..10.0, frac in 0.001f64..=1.0) {
        let model = ContinuousLoadModel::exponential(mean).unwrap();
        let power = frac * mean;
        let exact = exponential_leakage(mean, power, Unit::Nats).unwrap().to_f64();
        let bound = slb_bound(&model, power).unwrap().to_f64();
        prop_assert!((exact - bound).abs() <= 1e-12 * (1.0 + exact));
    }

    #[test]
    fn slb_verdict_monotone(mean in 0.2f64..5.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let model = ContinuousLoadModel::exponential(mean).unwrap();
        let (lo, hi) = if a < b { (a * mean, b * mean) } else { (b * mean, a * mean) };
        if slb_check(&model, hi).unwrap().nonneg {
            prop_assert!(slb_check(&model, lo).unwrap().nonneg);
        }
    }

    #[test]
    fn general_allocator_matches_binary(users in prop::collection::vec(binary_model(), 1..5), frac in 0.0f64..1.1) {
        let total_pp: f64 = users.iter().map(|u| u.perfect_privacy_power()).sum();
        let power = frac * total_pp;
        let closed = allocate_binary(&users, power, Unit::Nats).unwrap();
        let curves: Vec<BinaryCurve> = users.iter().map(|&u| BinaryCurve(u)).collect();
        let refs: Vec<&dyn LeakageCurve> = curves.iter().map(|c| c as &dyn LeakageCurve).collect();
        let general = allocate_general(&refs, power, Unit::Nats).unwrap();
        prop_assert!((closed.total_leakage.to_f64() - general.total_leakage.to_f64()).abs() <= 1e-6);
    }

    #[test]
    fn general_allocator_matches_waterfilling(means in prop::collection::vec(0.1f64..3.0, 1..6), frac in 0.01f64..1.2) {
        let power = frac * means.iter().sum::<f64>();
        let exact = waterfill_exponential(&means, power, Unit::Nats).unwrap();
        let curves: Vec<ExponentialCurve> = means.iter().map(|&mean| ExponentialCurve { mean }).collect();
        let refs: Vec<&dyn LeakageCurve> = curves.iter().map(|c| c as &dyn LeakageCurve).collect();
        let general = allocate_general(&refs, power, Unit::Nats).unwrap();
        for (a, b) in exact.per_user.iter().zip(&general.per_user) {
            prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn waterfilling_structure(means in prop::collection::vec(0.1f64..3.0, 1..6), frac in 0.01f64..0.99) {
        let power = frac * means.iter().sum::<f64>();
        let a = waterfill_exponential(&means, power, Unit::Nats).unwrap();
        prop_assert!((a.per_user.iter().sum::<f64>() - power).abs() <= 1e-9);
        for (&p, &m) in a.per_user.iter().zip(&means) {
            if m > a.level {
                prop_assert!((p - a.level).abs() <= 1e-12);
            } else {
                prop_assert!((p - m).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn allocation_beats_random_splits(
        users in prop::collection::vec(binary_model(), 2..5),
        frac in 0.05f64..0.95,
        splits in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 100),
    ) {
        let power = frac * users.iter().map(|u| u.perfect_privacy_power()).sum::<f64>();
        let best = allocate_binary(&users, power, Unit::Nats).unwrap();
        let sum: f64 = users.iter().zip(&best.per_user).map(|(u, &p)| binary_leakage(u, p, Unit::Nats)).sum();
        prop_assert!((sum - best.total_leakage.to_f64()).abs() <= 1e-12);
        for weights in &splits {
            let w = &weights[..users.len()];
            let total: f64 = w.iter().sum();
            let alt: f64 = users.iter().zip(w).map(|(u, wi)| binary_leakage(u, power * wi / total, Unit::Nats)).sum();
            prop_assert!(best.total_leakage.to_f64() <= alt + 1e-9);
        }
    }

    #[test]
    fn heuristics_dominate_optimal(levels in 2usize..12, spacing in 0.05f64..1.0, frac in 0.0f64..1.0) {
        let model = DiscreteLoadModel::uniform_grid(levels, spacing).unwrap();
        let problem = BaProblem::for_model(&model);
        let opts = BaOptions::default();
        let power = frac * model.perfect_privacy_power();
        let (_, opt) = solve_power(&problem, power, &opts).unwrap();
        let td = time_division(&model, power, Unit::Bits).unwrap();
        prop_assert!(td.leakage >= opt.leakage - 1e-9);
        let td_exact = time_division_policy(&model, power).unwrap().mutual_information(model.pmf(), Unit::Bits);
        prop_assert!(td_exact >= opt.leakage - 1e-9);
        for k in 0..levels {
            let lm = limit_max_output(&model, k, Unit::Bits).unwrap();
            let (_, opt) = solve_power(&problem, lm.power, &opts).unwrap();
            prop_assert!(lm.leakage >= opt.leakage - 1e-9);
            let exact = limit_max_policy(&model, k).unwrap().mutual_information(model.pmf(), Unit::Bits);
            prop_assert!(exact >= opt.leakage - 1e-9);
        }
    }
}

#[test]
fn heuristic_endpoints_equal_entropy() {
    for levels in [2, 5, 21] {
        let model = DiscreteLoadModel::uniform_grid(levels, 0.1).unwrap();
        let h = model.entropy(Unit::Bits);
        assert!((time_division(&model, 0.0, Unit::Bits).unwrap().leakage - h).abs() <= 1e-12);
        assert!((limit_max_output(&model, levels - 1, Unit::Bits).unwrap().leakage - h).abs() <= 1e-12);
    }
}

/// Minimum leakage over conditionals whose rows lie on a 1/`steps` simplex
/// grid, outputs restricted to the input alphabet.
fn exhaustive_minimum(model: &DiscreteLoadModel, power: f64, steps: usize) -> f64 {
    let n = model.len();
    let rows: Vec<Vec<Vec<f64>>> = (0..n).map(|x| simplex_grid(x + 1, steps)).collect();
    let alphabet = model.alphabet();
    let mut best = f64::INFINITY;
    let mut matrix = vec![0.0; n * n];
    let mut idx = vec![0usize; n];
    loop {
        matrix.iter_mut().for_each(|m| *m = 0.0);
        for x in 0..n {
            matrix[x * n..x * n + x + 1].copy_from_slice(&rows[x][idx[x]]);
        }
        let policy = Policy::scalar(alphabet, alphabet, matrix.clone()).unwrap();
        if policy.expected_power(model.pmf()) <= power + 1e-12 {
            best = best.min(policy.mutual_information(model.pmf(), Unit::Bits));
        }
        let mut d = 0;
        while d < n {
            idx[d] += 1;
            if idx[d] < rows[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == n {
            return best;
        }
    }
}

fn simplex_grid(dims: usize, steps: usize) -> Vec<Vec<f64>> {
    if dims == 1 {
        return vec![vec![1.0]];
    }
    let mut out = Vec::new();
    for k in 0..=steps {
        for mut rest in simplex_grid(dims - 1, steps - k) {
            let scale = (steps - k) as f64 / steps as f64;
            rest.iter_mut().for_each(|r| *r *= scale);
            rest.insert(0, k as f64 / steps as f64);
            out.push(rest);
        }
    }
    out
}

#[test]
fn ba_matches_exhaustive_grid_search() {
    let models = [
        DiscreteLoadModel::new(vec![0.0, 1.0], vec![0.3, 0.7]).unwrap(),
        DiscreteLoadModel::new(vec![0.0, 1.0, 2.0], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap(),
        DiscreteLoadModel::new(vec![0.5, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap(),
        DiscreteLoadModel::new(vec![0.0, 2.0, 2.5], vec![0.6, 0.1, 0.3]).unwrap(),
    ];
    let opts = BaOptions::default();
    for model in &models {
        let problem = BaProblem::for_model(model);
        for frac in [0.1, 0.35, 0.6, 0.85] {
            let power = frac * model.perfect_privacy_power();
            let (_, point) = solve_power(&problem, power, &opts).unwrap();
            let grid = exhaustive_minimum(model, power, 100);
            assert!(point.leakage <= grid + 1e-9, "BA {} above grid {grid}", point.leakage);
            assert!(grid - point.leakage <= 5e-3, "grid {grid} vs BA {}", point.leakage);
        }
    }
}

#[test]
fn plug_in_error_shrinks_with_samples() {
    let model = BinaryLoadModel::new(0.0, 1.0, 0.5).unwrap();
    let policy = privpower::closed_forms::binary_policy(&model, 0.2).unwrap();
    let exact = binary_leakage(&model, 0.2, Unit::Bits);
    let mut votes = 0;
    let mut steps = 0;
    for seed in 0..20 {
        let errors: Vec<f64> = [10_000u64, 100_000, 1_000_000]
            .iter()
            .map(|&n| {
                let config = TraceConfig {
                    n,
                    seed,
                    users: MultiUserModel::independent(vec![UserModel::Binary(model)]).unwrap(),
                    policies: PolicySet::PerUser(vec![UserPolicy::Discrete(policy.clone())]),
                    unit: Unit::Bits,
                };
                (run(&config).unwrap().total_leakage.unwrap().value - exact).abs()
            })
            .collect();
        for w in errors.windows(2) {
            steps += 1;
            votes += (w[1] <= w[0]) as usize;
        }
    }
    assert!(2 * votes >= steps, "{votes} of {steps} steps shrink");
}

#[test]
fn time_division_simulation_reproduces_policy() {
    let model = DiscreteLoadModel::uniform_grid(21, 0.1).unwrap();
    let power = 0.5;
    let exact = time_division_policy(&model, power).unwrap().mutual_information(model.pmf(), Unit::Bits);
    let mut estimates = Vec::new();
    for seed in 0..20 {
        let config = TraceConfig {
            n: 100_000,
            seed,
            users: MultiUserModel::independent(vec![UserModel::Discrete(model.clone())]).unwrap(),
            policies: PolicySet::PerUser(vec![UserPolicy::Heuristic { spec: HeuristicSpec::TimeDivision, power }]),
            unit: Unit::Bits,
        };
        let report = run(&config).unwrap();
        assert_eq!(report.feasibility_violations, 0);
        assert!((report.empirical_power - power).abs() <= 3.0 * report.power_std_error + 1e-12);
        let mi = report.total_leakage.unwrap();
        estimates.push(mi.value - mi.bias);
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - exact).abs() <= 3.0 * sd / n.sqrt(), "mean {mean} vs exact {exact}, sd {sd}");
}
