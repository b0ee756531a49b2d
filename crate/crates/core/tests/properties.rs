//! Property suites for the scenario, capacity, risk and lattice layers:
//! order and equivalence-relation laws, seminorm axioms, duality round
//! trips, attainment, and sublinearity of the worst-case expectation.

use std::sync::Arc;

use proptest::prelude::*;

use riskcap::capacity::{
    canonical_measure, canonical_measure_verified, capacity, reduce, reduced_set, TestBank,
};
use riskcap::gexp::{build_lattice, export_scenario_set, LatticeParams, PathSlice};
use riskcap::risk::{
    canonical_capacity, maximizer, member_contribution, penalty, rho, rho_min, RiskSpec,
};
use riskcap::scenario::{
    capacity_equivalent, expectation, expectation_signed, is_nonneg, mixture, Measure,
    OutcomeSpace, Payoff, ScenarioSet,
};

fn make_space(n: usize) -> Arc<OutcomeSpace> {
    OutcomeSpace::new((0..n).map(|i| format!("w{i}"))).unwrap()
}

/// Probability weights with a random subset of outcomes zeroed out, so
/// supports vary.
fn sparse_prob_weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec(0.01f64..1.0, n),
        prop::collection::vec(prop::bool::ANY, n),
        0..n,
    )
        .prop_map(|(mut raw, keep, pin)| {
            for (i, keep_i) in keep.iter().enumerate() {
                if !keep_i && i != pin {
                    raw[i] = 0.0;
                }
            }
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        })
}

fn payoff_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

/// A scenario instance: sparse probability members with penalties (first
/// penalty pinned to 0, so the spec is normalized) and two payoffs.
#[derive(Debug, Clone)]
struct Inst {
    n: usize,
    members: Vec<Vec<f64>>,
    penalties: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn instance(max_members: usize) -> impl Strategy<Value = Inst> {
    (2usize..=6).prop_flat_map(move |n| {
        prop::collection::vec(sparse_prob_weights(n), 1..=max_members).prop_flat_map(
            move |members| {
                let k = members.len();
                (
                    Just(members),
                    prop::collection::vec(0.0f64..2.0, k),
                    payoff_values(n),
                    payoff_values(n),
                )
                    .prop_map(move |(members, mut penalties, x, y)| {
                        penalties[0] = 0.0;
                        Inst { n, members, penalties, x, y }
                    })
            },
        )
    })
}

impl Inst {
    fn space(&self) -> Arc<OutcomeSpace> {
        make_space(self.n)
    }

    fn measures(&self, space: &Arc<OutcomeSpace>) -> Vec<Measure> {
        self.members
            .iter()
            .map(|w| Measure::new(Arc::clone(space), w.clone()).unwrap())
            .collect()
    }

    fn scenario_set(&self) -> ScenarioSet {
        let space = self.space();
        ScenarioSet::sublinear(self.measures(&space)).unwrap()
    }

    fn risk_spec(&self) -> RiskSpec {
        let space = self.space();
        let entries = self
            .measures(&space)
            .into_iter()
            .zip(self.penalties.iter().copied())
            .collect();
        RiskSpec::new(ScenarioSet::new(entries).unwrap())
    }

    fn payoff_x(&self, space: &Arc<OutcomeSpace>) -> Payoff {
        Payoff::new(Arc::clone(space), self.x.clone()).unwrap()
    }

    fn payoff_y(&self, space: &Arc<OutcomeSpace>) -> Payoff {
        Payoff::new(Arc::clone(space), self.y.clone()).unwrap()
    }
}

proptest! {
    #[test]
    fn expectation_is_monotone_in_abs(
        inst in instance(1),
        stretch in prop::collection::vec(0.0f64..3.0, 6),
        p in 1.0f64..4.0,
    ) {
        let space = inst.space();
        let q = Measure::new(Arc::clone(&space), inst.members[0].clone()).unwrap();
        let x = inst.payoff_x(&space);
        // |y| >= |x| pointwise by construction.
        let y = Payoff::new(
            Arc::clone(&space),
            inst.x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (1.0 + stretch[i % stretch.len()]))
                .collect(),
        )
        .unwrap();
        let ex = expectation(&q, &x, p).unwrap();
        let ey = expectation(&q, &y, p).unwrap();
        prop_assert!(ex <= ey + 1e-12);
    }

    #[test]
    fn mixture_is_linear_in_signed_expectation(
        inst in instance(4),
        lambdas in prop::collection::vec(0.05f64..1.0, 4),
    ) {
        let space = inst.space();
        let measures = inst.measures(&space);
        let raw: Vec<f64> = lambdas.iter().take(measures.len()).copied().collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let parts: Vec<(f64, &Measure)> =
            weights.iter().copied().zip(measures.iter()).collect();
        let mixed = mixture(&parts).unwrap();
        let x = inst.payoff_x(&space);
        let lhs = expectation_signed(&mixed, &x).unwrap();
        let rhs: f64 = parts
            .iter()
            .map(|(w, q)| w * expectation_signed(q, &x).unwrap())
            .sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn order_antisymmetry_on_charged_universe(inst in instance(4)) {
        let space = inst.space();
        let s = inst.scenario_set();
        let x = inst.payoff_x(&space);
        let both = is_nonneg(&x, &s).unwrap() && is_nonneg(&x.neg(), &s).unwrap();
        let zero_on_charged = s
            .charged_outcomes()
            .into_iter()
            .all(|i| x.value(i) == 0.0);
        prop_assert_eq!(both, zero_on_charged);
    }

    #[test]
    fn capacity_equivalence_is_an_equivalence_relation(
        inst in instance(4),
        masks in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 3),
    ) {
        let space = inst.space();
        let s = inst.scenario_set();
        let charged = s.charged_outcomes();
        // Dominated measures: weights only on charged outcomes.
        let dominated: Vec<Measure> = masks
            .iter()
            .map(|mask| {
                let mut w = vec![0.0; inst.n];
                let mut any = false;
                for (slot, &i) in charged.iter().enumerate() {
                    let v = mask[slot % mask.len()];
                    if v > 0.3 {
                        w[i] = v;
                        any = true;
                    }
                }
                if !any {
                    w[charged[0]] = 1.0;
                }
                Measure::new(Arc::clone(&space), w).unwrap()
            })
            .collect();
        let (mu, nu, kappa) = (&dominated[0], &dominated[1], &dominated[2]);
        prop_assert!(capacity_equivalent(mu, mu, &s, 1.0).unwrap());
        let mu_nu = capacity_equivalent(mu, nu, &s, 1.0).unwrap();
        let nu_mu = capacity_equivalent(nu, mu, &s, 1.0).unwrap();
        prop_assert_eq!(mu_nu, nu_mu);
        let nu_kappa = capacity_equivalent(nu, kappa, &s, 1.0).unwrap();
        let mu_kappa = capacity_equivalent(mu, kappa, &s, 1.0).unwrap();
        if mu_nu && nu_kappa {
            prop_assert!(mu_kappa);
        }
    }

    #[test]
    fn capacity_is_a_monotone_seminorm(
        inst in instance(4),
        lambda in -3.0f64..3.0,
        p in 1.0f64..3.0,
    ) {
        let space = inst.space();
        let s = inst.scenario_set();
        let x = inst.payoff_x(&space);
        let y = inst.payoff_y(&space);

        // Absolute homogeneity.
        let cx = capacity(&x, &s, p).unwrap();
        let cs = capacity(&x.scale(lambda), &s, p).unwrap();
        prop_assert!((cs - lambda.abs() * cx).abs() <= 1e-10 * (1.0 + cx));

        // Triangle inequality (p = 1 keeps the finite-sum norm exact).
        let cy = capacity(&y, &s, 1.0).unwrap();
        let cxy = capacity(&x.add(&y).unwrap(), &s, 1.0).unwrap();
        let cx1 = capacity(&x, &s, 1.0).unwrap();
        prop_assert!(cxy <= cx1 + cy + 1e-12);

        // Monotonicity in |X|: |X| <= |X| + |Y| pointwise.
        let dominating = x.zip(&y, |a, b| a.abs() + b.abs()).unwrap();
        let cd = capacity(&dominating, &s, p).unwrap();
        prop_assert!(cx <= cd + 1e-12);

        // Regularity along sequences: X_k = |X| / 2^k decreases to 0.
        let mut prev = capacity(&x.abs(), &s, p).unwrap();
        for k in 1..=12 {
            let xk = x.abs().scale((0.5f64).powi(k));
            let ck = capacity(&xk, &s, p).unwrap();
            prop_assert!(ck <= prev + 1e-12);
            prev = ck;
        }
        prop_assert!(prev <= 1e-3 * (1.0 + cx));

        // Member expectations never exceed the capacity.
        for member in s.members() {
            let e = expectation(&member.measure, &x, p).unwrap();
            prop_assert!(e <= cx + 1e-12);
        }
    }

    #[test]
    fn canonical_measure_characterizes_null_payoffs(inst in instance(4)) {
        let space = inst.space();
        let s = inst.scenario_set();
        let p = canonical_measure_verified(&s, None).unwrap();
        // All outcome indicators.
        for id in space.outcomes() {
            let ind = Payoff::indicator(Arc::clone(&space), id).unwrap();
            let ep = expectation_signed(&p, &ind).unwrap();
            let c = capacity(&ind, &s, 1.0).unwrap();
            prop_assert_eq!(ep == 0.0, c == 0.0);
        }
        // Random non-negative payoff.
        let x = inst.payoff_x(&space).abs();
        let ep = expectation_signed(&p, &x).unwrap();
        let c = capacity(&x, &s, 1.0).unwrap();
        prop_assert_eq!(ep == 0.0, c == 0.0);
    }

    #[test]
    fn reduction_preserves_capacity_on_bank(
        n in 2usize..=5,
        seed_members in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 5), 3..=12),
        eps in 0.01f64..0.5,
    ) {
        let space = make_space(n);
        let measures: Vec<Measure> = seed_members
            .iter()
            .map(|w| {
                let trimmed: Vec<f64> = w.iter().take(n).copied().collect();
                let total: f64 = trimmed.iter().sum();
                Measure::new(Arc::clone(&space), trimmed.iter().map(|v| v / total).collect())
                    .unwrap()
            })
            .collect();
        let s = ScenarioSet::sublinear(measures).unwrap();
        let bank = TestBank::new(
            space
                .outcomes()
                .iter()
                .map(|id| Payoff::indicator(Arc::clone(&space), id).unwrap())
                .collect(),
        )
        .unwrap();
        let result = reduce(&s, &bank, eps).unwrap();
        prop_assert!(result.achieved_error <= eps);
        prop_assert!(!result.indices.is_empty());
        let smaller = reduced_set(&s, &result).unwrap();
        for f in bank.payoffs() {
            let full = capacity(f, &s, 1.0).unwrap();
            let red = capacity(f, &smaller, 1.0).unwrap();
            prop_assert!((full - red).abs() <= eps + 1e-12);
        }
    }

    #[test]
    fn penalty_never_exceeds_declared(inst in instance(5)) {
        let spec = inst.risk_spec();
        for member in spec.scenarios().members() {
            let value = penalty(&spec, &member.measure).unwrap();
            prop_assert!(value.value <= member.penalty + 1e-9);
        }
    }

    #[test]
    fn re_representation_is_a_fixed_point(inst in instance(5)) {
        let spec = inst.risk_spec();
        let minimal: Vec<f64> = spec
            .scenarios()
            .members()
            .iter()
            .map(|m| penalty(&spec, &m.measure).unwrap().value)
            .collect();
        let remembered: Vec<(Measure, f64)> = spec
            .scenarios()
            .members()
            .iter()
            .zip(&minimal)
            .map(|(m, &alpha)| (m.measure.clone(), alpha))
            .collect();
        let respec = RiskSpec::new(ScenarioSet::new(remembered).unwrap());
        let space = inst.space();
        for values in [&inst.x, &inst.y] {
            let x = Payoff::new(Arc::clone(&space), values.clone()).unwrap();
            let a = rho(&spec, &x).unwrap();
            let b = rho(&respec, &x).unwrap();
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn rho_min_majorizes_and_is_sublinear(
        inst in instance(5),
        lambda in 0.0f64..4.0,
    ) {
        let spec = inst.risk_spec();
        let space = inst.space();
        let x = inst.payoff_x(&space);
        let y = inst.payoff_y(&space);

        let rm_x = rho_min(&spec, &x).unwrap();
        prop_assert!(rm_x >= rho(&spec, &x).unwrap() - 1e-12);
        let rm_scaled = rho_min(&spec, &x.scale(lambda)).unwrap();
        prop_assert!((rm_scaled - lambda * rm_x).abs() <= 1e-10 * (1.0 + rm_x.abs()));
        let rm_sum = rho_min(&spec, &x.add(&y).unwrap()).unwrap();
        prop_assert!(rm_sum <= rm_x + rho_min(&spec, &y).unwrap() + 1e-12);

        // Normalized specs are 1-majorized by their canonical capacity.
        let c = canonical_capacity(&spec, &x).unwrap();
        prop_assert!(rho(&spec, &x).unwrap().abs() <= c + 1e-12);

        // Lipschitz estimate through the canonical capacity.
        let diff_cap = canonical_capacity(&spec, &x.sub(&y).unwrap()).unwrap();
        let gap = (rho(&spec, &x).unwrap() - rho(&spec, &y).unwrap()).abs();
        prop_assert!(gap <= diff_cap + 1e-12);
    }

    #[test]
    fn attainment_is_exact(inst in instance(5)) {
        let spec = inst.risk_spec();
        let space = inst.space();
        let x = inst.payoff_x(&space);
        let (index, _q) = maximizer(&spec, &x).unwrap();
        let attained = member_contribution(&spec, index, &x).unwrap();
        prop_assert_eq!(rho(&spec, &x).unwrap(), attained);
    }

    #[test]
    fn countable_representation_mixture_dominates_members(inst in instance(5)) {
        let s = inst.scenario_set();
        let p = canonical_measure(&s, None).unwrap();
        let mut parts: Vec<(f64, &Measure)> = vec![(0.5, &p)];
        for (k, member) in s.members().iter().enumerate() {
            parts.push(((0.5f64).powi(k as i32 + 2), &member.measure));
        }
        let q = mixture(&parts).unwrap();
        let q_support: Vec<bool> = (0..inst.n).map(|i| q.weight(i) > 0.0).collect();
        for member in s.members() {
            for idx in member.measure.support() {
                prop_assert!(q_support[idx]);
            }
        }
    }
}

#[test]
fn sublinear_penalty_is_zero_on_hull_infinite_outside() {
    // Small deterministic instance plus a simplex-grid brute force at 1/64.
    let space = make_space(3);
    let q1 = Measure::new(Arc::clone(&space), vec![0.7, 0.2, 0.1]).unwrap();
    let q2 = Measure::new(Arc::clone(&space), vec![0.1, 0.6, 0.3]).unwrap();
    let q3 = Measure::new(Arc::clone(&space), vec![0.2, 0.2, 0.6]).unwrap();
    let spec = RiskSpec::new(ScenarioSet::sublinear(vec![q1, q2, q3]).unwrap());

    let grid_feasible = |target: &Measure| -> bool {
        let step = 64usize;
        let members = spec.scenarios().members();
        for a in 0..=step {
            for b in 0..=(step - a) {
                let c = step - a - b;
                let mut ok = true;
                for i in 0..3 {
                    let mixed = (a as f64 * members[0].measure.weight(i)
                        + b as f64 * members[1].measure.weight(i)
                        + c as f64 * members[2].measure.weight(i))
                        / step as f64;
                    if (mixed - target.weight(i)).abs() > 1e-2 {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    return true;
                }
            }
        }
        false
    };

    let inside = Measure::new(
        Arc::clone(&space),
        vec![
            0.25 * 0.7 + 0.5 * 0.1 + 0.25 * 0.2,
            0.25 * 0.2 + 0.5 * 0.6 + 0.25 * 0.2,
            0.25 * 0.1 + 0.5 * 0.3 + 0.25 * 0.6,
        ],
    )
    .unwrap();
    assert!(grid_feasible(&inside));
    assert!(penalty(&spec, &inside).unwrap().value.abs() <= 1e-10);

    let outside = Measure::new(Arc::clone(&space), vec![0.98, 0.01, 0.01]).unwrap();
    assert!(!grid_feasible(&outside));
    assert!(penalty(&spec, &outside).unwrap().value.is_infinite());
}

#[test]
fn gexp_is_a_sublinear_expectation() {
    let lattice =
        build_lattice(LatticeParams::two_point(3, 1.0, &[0.1], &[0.3])).unwrap();
    let base = |p: &PathSlice<'_>| (p.terminal(0)).abs() + 0.3 * p.value(0, 1);
    let other = |p: &PathSlice<'_>| p.terminal(0) * p.terminal(0) - p.value(0, 2);

    let ex = lattice.gexp(&base).unwrap();
    let ey = lattice.gexp(&other).unwrap();
    let sum = |p: &PathSlice<'_>| base(p) + other(p);
    let exy = lattice.gexp(&sum).unwrap();
    assert!(exy <= ex + ey + 1e-12);

    for lambda in [0.0, 0.5, 2.0, 7.5] {
        let scaled = |p: &PathSlice<'_>| lambda * base(p);
        let es = lattice.gexp(&scaled).unwrap();
        assert!((es - lambda * ex).abs() <= 1e-12 * (1.0 + lambda));
    }

    for a in [-2.0, 0.25, 3.0] {
        let shifted = |p: &PathSlice<'_>| base(p) + a;
        let es = lattice.gexp(&shifted).unwrap();
        assert!((es - (ex + a)).abs() <= 1e-12);
    }
}

#[test]
fn convex_payoffs_collapse_to_extreme_volatilities() {
    let lattice =
        build_lattice(LatticeParams::two_point(4, 2.0, &[0.1], &[0.3])).unwrap();
    let high_only =
        build_lattice(LatticeParams::two_point(4, 2.0, &[0.3], &[0.3])).unwrap();
    let low_only =
        build_lattice(LatticeParams::two_point(4, 2.0, &[0.1], &[0.1])).unwrap();

    let convex: Vec<Box<dyn Fn(&PathSlice<'_>) -> f64>> = vec![
        Box::new(|p| p.terminal(0) * p.terminal(0)),
        Box::new(|p| p.terminal(0).abs()),
        Box::new(|p| (p.terminal(0) - 0.1).max(0.0)),
        Box::new(|p| (0.5 * p.terminal(0)).exp()),
    ];
    for phi in &convex {
        let f = |p: &PathSlice<'_>| phi(p);
        let worst = lattice.gexp(&f).unwrap();
        let high = high_only.gexp(&f).unwrap();
        assert!((worst - high).abs() <= 1e-12, "{worst} vs {high}");

        let neg = |p: &PathSlice<'_>| -phi(p);
        let worst_neg = lattice.gexp(&neg).unwrap();
        let low_neg = low_only.gexp(&neg).unwrap();
        assert!((worst_neg - low_neg).abs() <= 1e-12);
    }
}

#[test]
fn exported_worst_scenarios_bridge_to_capacity() {
    let lattice =
        build_lattice(LatticeParams::two_point(2, 1.0, &[0.1], &[0.3])).unwrap();
    let bank: Vec<Box<dyn Fn(&PathSlice<'_>) -> f64>> = vec![
        Box::new(|p| p.terminal(0)),
        Box::new(|p| p.terminal(0) * p.terminal(0) - 0.05),
        Box::new(|p| p.value(0, 1).abs() - p.terminal(0)),
    ];
    // Export the worst measures of the absolute payoffs.
    let measures: Vec<_> = bank
        .iter()
        .map(|f| {
            let abs = |p: &PathSlice<'_>| f(p).abs();
            lattice.worst_measure(&abs).unwrap()
        })
        .collect();
    let (space, set) = export_scenario_set(&lattice, &measures).unwrap();
    for f in &bank {
        let g = |p: &PathSlice<'_>| f(p);
        let abs = |p: &PathSlice<'_>| g(p).abs();
        let on_space = lattice.payoff_on_space(&space, &g).unwrap();
        let cap = capacity(&on_space, &set, 1.0).unwrap();
        let ge = lattice.gexp(&abs).unwrap();
        assert!(cap <= ge + 1e-12);
        assert!((cap - ge).abs() <= 1e-12, "equality on the bank: {cap} vs {ge}");
    }
    // Off-bank payoffs stay below the worst-case expectation.
    let extra = |p: &PathSlice<'_>| (p.terminal(0) - 0.07).abs();
    let on_space = lattice.payoff_on_space(&space, &extra).unwrap();
    let cap = capacity(&on_space, &set, 1.0).unwrap();
    assert!(cap <= lattice.gexp(&extra).unwrap() + 1e-12);
}
