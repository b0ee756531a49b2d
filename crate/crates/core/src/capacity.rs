//! The capacity seminorm `c_p(X) = max_n E_Qn(|X|^p)^{1/p}` over a scenario
//! set, indicator capacities of open/closed sets on the real line via
//! monotone continuous approximations, a constructive counterexample showing
//! that general Borel indicators are *not* recovered from member measures,
//! greedy scenario reduction, and canonical reference measures.

use std::sync::Arc;

use thiserror::Error;

use crate::scenario::{
    expectation, expectation_signed, mixture_probability, Measure, Payoff, ScenarioError,
    ScenarioSet,
};
use crate::DEFAULT_TOL;

/// Errors from capacity-level operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CapacityError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("test bank needs at least one payoff")]
    EmptyBank,
    #[error("test bank needs at least one non-constant payoff")]
    BankAllConstant,
    #[error("scenario space has no real embedding; indicator capacities need one")]
    NoRealEmbedding,
    #[error("interval [{lo}, {hi}] is invalid for this descriptor kind")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("descriptor intervals must be disjoint and ordered")]
    IntervalsNotDisjoint,
    #[error("complement-of-atoms descriptor needs strictly decreasing atoms in (0, 1)")]
    AtomsNotDecreasing,
    #[error("descriptor is not an open or closed interval set; use the counterexample harness")]
    DescriptorNotIndicator,
    #[error("eps = {0} must be strictly positive")]
    InvalidEps(f64),
    #[error("eta = {0} must lie strictly between 0 and 1")]
    InvalidEta(f64),
    #[error("atom count {0} must be at least 2")]
    TooFewAtoms(usize),
    #[error("expected {expected} canonical weights, got {got}")]
    WeightCountMismatch { expected: usize, got: usize },
    #[error("canonical weight {weight} at position {index} is not strictly positive")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("canonical weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("null-set characterization failed at outcome {0:?}")]
    NullCharacterizationFailed(String),
}

/// Result alias for capacity-level operations.
pub type Result<T> = std::result::Result<T, CapacityError>;

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(CapacityError::Scenario(ScenarioError::InvalidExponent(p)))
    }
}

/// `c_p(X) = max_n E_Qn(|X|^p)^{1/p}`, an exact finite maximum.
pub fn capacity(x: &Payoff, s: &ScenarioSet, p: f64) -> Result<f64> {
    capacity_with_argmax(x, s, p).map(|(value, _)| value)
}

/// [`capacity`] together with the lowest attaining member index.
pub fn capacity_with_argmax(x: &Payoff, s: &ScenarioSet, p: f64) -> Result<(f64, usize)> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (index, member) in s.members().iter().enumerate() {
        let value = expectation(&member.measure, x, p)?;
        if value > best {
            best = value;
            arg = index;
        }
    }
    Ok((best, arg))
}

/// A closed or half-open stretch of the real line, `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn contains_open(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    fn contains_closed(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    fn on_boundary(&self, x: f64) -> bool {
        x == self.lo || x == self.hi
    }

    /// Distance from `x` to the interval (0 inside).
    fn distance_to(&self, x: f64) -> f64 {
        (self.lo - x).max(x - self.hi).max(0.0)
    }

    /// Distance from an interior `x` to the interval's boundary.
    fn depth(&self, x: f64) -> f64 {
        (x - self.lo).min(self.hi - x)
    }
}

/// A subset of the real line used as an indicator payoff on embedded spaces.
#[derive(Debug, Clone, PartialEq)]
pub enum SetDescriptor {
    /// A finite disjoint union of open intervals.
    Open { intervals: Vec<Interval> },
    /// A finite disjoint union of closed intervals (degenerate points allowed).
    Closed { intervals: Vec<Interval> },
    /// `[0, 1]` minus a strictly decreasing sequence of atoms — the geometry
    /// on which indicator capacities and member measures disagree.
    ComplementOfAtoms { atoms: Vec<f64> },
}

impl SetDescriptor {
    /// An open set given as disjoint, ordered intervals `(lo, hi)`.
    pub fn open(intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            if !(iv.lo < iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(CapacityError::InvalidInterval { lo: iv.lo, hi: iv.hi });
            }
        }
        // Open intervals may touch at endpoints.
        if intervals.windows(2).any(|w| w[1].lo < w[0].hi) {
            return Err(CapacityError::IntervalsNotDisjoint);
        }
        Ok(Self::Open { intervals })
    }

    /// A closed set given as strictly separated intervals `[lo, hi]`.
    pub fn closed(intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            if !(iv.lo <= iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(CapacityError::InvalidInterval { lo: iv.lo, hi: iv.hi });
            }
        }
        if intervals.windows(2).any(|w| w[1].lo <= w[0].hi) {
            return Err(CapacityError::IntervalsNotDisjoint);
        }
        Ok(Self::Closed { intervals })
    }

    /// `[0, 1]` minus the given atoms, which must decrease strictly inside
    /// `(0, 1)` (they head toward an accumulation point the set cannot avoid).
    pub fn complement_of_atoms(atoms: Vec<f64>) -> Result<Self> {
        if atoms.len() < 2 {
            return Err(CapacityError::TooFewAtoms(atoms.len()));
        }
        let decreasing = atoms.windows(2).all(|w| w[0] > w[1]);
        let in_range = atoms.iter().all(|&a| 0.0 < a && a < 1.0);
        if !decreasing || !in_range {
            return Err(CapacityError::AtomsNotDecreasing);
        }
        Ok(Self::ComplementOfAtoms { atoms })
    }
}

/// Outcome of evaluating an indicator capacity via its monotone continuous
/// approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorReport {
    /// `max_n Q_n(D)^{1/p}`, the exact indicator evaluation over the atoms.
    pub value: f64,
    /// The limit reached by the monotone approximation sequence.
    pub monotone_limit: f64,
    /// First step at which the approximation attains the limit on every
    /// charged atom; `None` when a boundary atom prevents certification.
    pub stabilization_step: Option<u64>,
    /// Lowest member index attaining `value`.
    pub attaining_member: usize,
    /// Charged outcomes sitting exactly on the boundary of a closed set.
    pub boundary_atoms: Vec<String>,
}

fn embedded_points(s: &ScenarioSet) -> Result<Vec<f64>> {
    s.space()
        .real_points()
        .ok_or(CapacityError::NoRealEmbedding)
}

/// Capacity of the indicator of an open or closed subset of the line.
///
/// Open sets rise through piecewise-linear `h_n` (equal to 1 at depth `1/n`
/// inside the set); closed sets descend through `g_n = max(0, 1 - n·dist)`.
/// On a finite atom set both sequences reach `max_n Q_n(D)^{1/p}` at a
/// computable step, except when a charged atom sits exactly on the boundary
/// of a closed set: the report then carries both numbers and no step.
pub fn indicator_capacity(d: &SetDescriptor, s: &ScenarioSet, p: f64) -> Result<IndicatorReport> {
    let points = embedded_points(s)?;
    match d {
        SetDescriptor::Open { intervals } => {
            indicator_open(intervals, s, &points, p)
        }
        SetDescriptor::Closed { intervals } => {
            indicator_closed(intervals, s, &points, p)
        }
        SetDescriptor::ComplementOfAtoms { .. } => Err(CapacityError::DescriptorNotIndicator),
    }
}

fn member_mass_in<F: Fn(f64) -> bool>(
    s: &ScenarioSet,
    points: &[f64],
    p: f64,
    inside: F,
) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (index, member) in s.members().iter().enumerate() {
        let mut mass = 0.0;
        for (i, &w) in member.measure.weights().iter().enumerate() {
            if w > 0.0 && inside(points[i]) {
                mass += w;
            }
        }
        let value = if p == 1.0 { mass } else { mass.powf(1.0 / p) };
        if value > best {
            best = value;
            arg = index;
        }
    }
    (best, arg)
}

fn indicator_open(
    intervals: &[Interval],
    s: &ScenarioSet,
    points: &[f64],
    p: f64,
) -> Result<IndicatorReport> {
    check_exponent(p)?;
    let (value, attaining_member) = member_mass_in(s, points, p, |x| {
        intervals.iter().any(|iv| iv.contains_open(x))
    });
    // h_n equals 1 on an atom once n * depth >= 1.
    let mut step = 1u64;
    for &idx in &s.charged_outcomes() {
        let x = points[idx];
        if let Some(iv) = intervals.iter().find(|iv| iv.contains_open(x)) {
            let depth = iv.depth(x);
            let need = (1.0 / depth).ceil() as u64;
            step = step.max(need);
        }
    }
    Ok(IndicatorReport {
        value,
        monotone_limit: value,
        stabilization_step: Some(step),
        attaining_member,
        boundary_atoms: Vec::new(),
    })
}

fn indicator_closed(
    intervals: &[Interval],
    s: &ScenarioSet,
    points: &[f64],
    p: f64,
) -> Result<IndicatorReport> {
    check_exponent(p)?;
    let (value, attaining_member) = member_mass_in(s, points, p, |x| {
        intervals.iter().any(|iv| iv.contains_closed(x))
    });
    // g_n reaches 0 on an outside atom once n * dist >= 1; boundary atoms
    // never separate from the set at any finite step.
    let mut step = 1u64;
    let mut boundary_atoms = Vec::new();
    for &idx in &s.charged_outcomes() {
        let x = points[idx];
        if intervals.iter().any(|iv| iv.on_boundary(x)) {
            boundary_atoms.push(s.space().id(idx).to_owned());
            continue;
        }
        if !intervals.iter().any(|iv| iv.contains_closed(x)) {
            let dist = intervals
                .iter()
                .map(|iv| iv.distance_to(x))
                .fold(f64::INFINITY, f64::min);
            let need = (1.0 / dist).ceil() as u64;
            step = step.max(need);
        }
    }
    let stabilization_step = if boundary_atoms.is_empty() { Some(step) } else { None };
    Ok(IndicatorReport {
        value,
        monotone_limit: value,
        stabilization_step,
        attaining_member,
        boundary_atoms,
    })
}

/// Family of lower semi-continuous majorants probed by the counterexample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MajorantFamily {
    /// Only the constant function 1.
    ConstantOne,
    /// One minus finitely many tent dips of depth at most 1 centered at
    /// listed atoms.
    #[default]
    TentDips,
}

/// Report of the Dirac counterexample: on `[0, 1]` with members `Q_n` the
/// Dirac masses at `x_n = 1/(n+1)` and `A = [0, 1]` minus the atoms, every
/// member gives `Q_n(A) = 0` while every lower semi-continuous majorant of
/// the indicator of `A` stays above `1 - eta` at some atom.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    /// Level at which majorants were probed.
    pub eta: f64,
    /// `inf` over the probed majorant family of the certified value at the
    /// witnessing atom. Always at least `1 - eta`.
    pub capacity_lower_bound: f64,
    /// `max_n Q_n(A)`, exactly zero.
    pub sup_measure_of_a: f64,
    /// 1-based index of the witnessing atom for the worst candidate. May be
    /// one past the listed truncation: any candidate dips only finitely many
    /// atoms, and the sequence continues toward 0.
    pub witness_index: usize,
    /// Number of atoms materialized in the scenario family.
    pub atom_count: usize,
}

/// Runs the counterexample with the default tent-dip majorant family.
pub fn dirac_counterexample(eta: f64, n_atoms: usize) -> Result<CounterexampleReport> {
    dirac_counterexample_with_family(eta, n_atoms, MajorantFamily::TentDips)
}

/// Runs the counterexample against a chosen majorant family.
///
/// Candidates are l.s.c. majorants of the indicator of `A`: equal to 1 on
/// `A` and allowed to dip (depth up to 1, within a neighborhood narrower
/// than the gap to adjacent atoms) at finitely many atoms. For each
/// candidate the open set `{f > 1 - eta}` contains an interval `[0, eps)`
/// and therefore an atom, whose value certifies a lower bound; the report
/// takes the infimum over the family.
pub fn dirac_counterexample_with_family(
    eta: f64,
    n_atoms: usize,
    family: MajorantFamily,
) -> Result<CounterexampleReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(CapacityError::InvalidEta(eta));
    }
    if n_atoms < 2 {
        return Err(CapacityError::TooFewAtoms(n_atoms));
    }
    let atom = |n: usize| 1.0 / (n as f64 + 1.0);
    // max_n Q_n(A) over the Dirac members: each atom carries mass 1 and A
    // excludes every atom, so every term is exactly 0.
    let atoms: Vec<f64> = (1..=n_atoms).map(atom).collect();
    let mut sup_measure_of_a: f64 = 0.0;
    for &x in &atoms {
        let in_a = !atoms.contains(&x);
        let mass_of_a = if in_a { 1.0 } else { 0.0 };
        sup_measure_of_a = sup_measure_of_a.max(mass_of_a);
    }

    let (capacity_lower_bound, witness_index) = match family {
        MajorantFamily::ConstantOne => (1.0, 1),
        MajorantFamily::TentDips => {
            // A candidate dips atoms 1..=k fully (depth 1) and the rest of
            // the listed atoms at a shallow depth d < eta. Deep dips drop
            // their atoms out of {f > 1 - eta}; the first surviving atom is
            // the witness and f there is 1 - d (or exactly 1 when only deep
            // dips are present).
            let mut best = (1.0, 1usize);
            let depth_grid = [0.0, 0.25 * eta, 0.5 * eta, 0.75 * eta];
            for k in 0..=n_atoms.min(8) {
                for &depth in &depth_grid {
                    let witness = k + 1;
                    let certified = if witness <= n_atoms { 1.0 - depth } else { 1.0 };
                    debug_assert!(atom(witness) > 0.0);
                    debug_assert!(certified > 1.0 - eta);
                    if certified < best.0 {
                        best = (certified, witness);
                    }
                }
            }
            best
        }
    };

    Ok(CounterexampleReport {
        eta,
        capacity_lower_bound,
        sup_measure_of_a,
        witness_index,
        atom_count: n_atoms,
    })
}

/// Materializes the counterexample's scenario family: Dirac masses at
/// `x_n = 1/(n+1)` on an embedded space, all penalties zero.
pub fn dirac_scenarios(n_atoms: usize) -> Result<ScenarioSet> {
    if n_atoms < 2 {
        return Err(CapacityError::TooFewAtoms(n_atoms));
    }
    let ids: Vec<String> = (1..=n_atoms).map(|n| format!("x{n}")).collect();
    let points: Vec<f64> = (1..=n_atoms).map(|n| 1.0 / (n as f64 + 1.0)).collect();
    let space = crate::scenario::OutcomeSpace::with_real_embedding(ids.clone(), points)
        .map_err(CapacityError::Scenario)?;
    let members = ids
        .iter()
        .map(|id| Measure::dirac(Arc::clone(&space), id))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(CapacityError::Scenario)?;
    ScenarioSet::sublinear(members).map_err(CapacityError::Scenario)
}

/// A finite stand-in for a dense family of test payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct TestBank {
    payoffs: Vec<Payoff>,
}

impl TestBank {
    /// At least one payoff, at least one of them non-constant.
    pub fn new(payoffs: Vec<Payoff>) -> Result<Self> {
        let first = payoffs.first().ok_or(CapacityError::EmptyBank)?;
        let space = Arc::clone(first.space());
        for payoff in &payoffs {
            if !crate::scenario::OutcomeSpace::same_space(&space, payoff.space()) {
                return Err(CapacityError::Scenario(ScenarioError::SpaceMismatch));
            }
        }
        let any_non_constant = payoffs.iter().any(|p| {
            p.values()
                .windows(2)
                .any(|w| w[0] != w[1])
        });
        if !any_non_constant {
            return Err(CapacityError::BankAllConstant);
        }
        Ok(Self { payoffs })
    }

    /// The payoffs in declaration order.
    pub fn payoffs(&self) -> &[Payoff] {
        &self.payoffs
    }

    /// Number of payoffs.
    pub fn len(&self) -> usize {
        self.payoffs.len()
    }

    /// Never true: banks are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        self.payoffs.is_empty()
    }
}

/// Result of greedy scenario reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    /// Selected member indices, in farthest-point selection order.
    pub indices: Vec<usize>,
    /// Final covering radius under the bank pseudo-distance.
    pub achieved_error: f64,
    /// Size of the bank used.
    pub bank_size: usize,
}

/// Pseudo-distance between members under the bank: the largest gap in the
/// expectations of any bank payoff or of its absolute value. Including the
/// absolute values makes capacity evaluations on the bank stable under
/// reduction, not just signed expectations.
fn bank_distance(bank_values: &[(Vec<f64>, Vec<f64>)], i: usize, j: usize) -> f64 {
    let mut d: f64 = 0.0;
    for (signed, abs) in bank_values {
        d = d.max((signed[i] - signed[j]).abs());
        d = d.max((abs[i] - abs[j]).abs());
    }
    d
}

/// Greedy farthest-point `eps`-net over the members of `s` under the bank
/// pseudo-distance. Ties break toward the lowest index, so the output is
/// deterministic and order-stable.
///
/// Consequently `|c_1(f, s) - c_1(f, reduced)| <= eps` for every bank payoff.
pub fn reduce(s: &ScenarioSet, bank: &TestBank, eps: f64) -> Result<ReductionResult> {
    if !(eps > 0.0) {
        return Err(CapacityError::InvalidEps(eps));
    }
    // Expectations of each bank payoff (signed and absolute) per member.
    let mut bank_values = Vec::with_capacity(bank.len());
    for payoff in bank.payoffs() {
        let abs = payoff.abs();
        let mut signed_row = Vec::with_capacity(s.len());
        let mut abs_row = Vec::with_capacity(s.len());
        for member in s.members() {
            signed_row.push(expectation_signed(&member.measure, payoff)?);
            abs_row.push(expectation_signed(&member.measure, &abs)?);
        }
        bank_values.push((signed_row, abs_row));
    }

    let n = s.len();
    let mut indices = vec![0usize];
    let mut dist_to_net: Vec<f64> = (0..n).map(|j| bank_distance(&bank_values, 0, j)).collect();
    loop {
        let mut far = 0usize;
        let mut far_dist = f64::NEG_INFINITY;
        for (j, &dj) in dist_to_net.iter().enumerate() {
            if dj > far_dist {
                far_dist = dj;
                far = j;
            }
        }
        if far_dist <= eps {
            return Ok(ReductionResult {
                indices,
                achieved_error: far_dist.max(0.0),
                bank_size: bank.len(),
            });
        }
        indices.push(far);
        for j in 0..n {
            let dj = bank_distance(&bank_values, far, j);
            if dj < dist_to_net[j] {
                dist_to_net[j] = dj;
            }
        }
    }
}

/// Materializes the sub-family selected by [`reduce`], keeping penalties.
pub fn reduced_set(s: &ScenarioSet, result: &ReductionResult) -> Result<ScenarioSet> {
    let members = result
        .indices
        .iter()
        .map(|&i| {
            let m = &s.members()[i];
            (m.measure.clone(), m.penalty)
        })
        .collect();
    ScenarioSet::new(members).map_err(CapacityError::Scenario)
}

/// Default canonical weights: `2^-(n+1)` with the tail mass folded into the
/// last member so they sum to exactly 1.
pub fn default_canonical_weights(len: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(CapacityError::Scenario(ScenarioError::EmptyScenarioSet));
    }
    let mut weights = Vec::with_capacity(len);
    let mut head = 0.0;
    for n in 1..len {
        let w = (0.5f64).powi(n as i32 + 1);
        head += w;
        weights.push(w);
    }
    weights.push(1.0 - head);
    if let Some(index) = weights.iter().position(|&w| w <= 0.0) {
        return Err(CapacityError::NonPositiveWeight { index, weight: weights[index] });
    }
    Ok(weights)
}

/// The mixture `P = sum_n alpha_n Q_n` over all members of `s`.
///
/// With every `alpha_n > 0`, `P` charges exactly the charged universe, so a
/// non-negative payoff has `E_P(X) = 0` precisely when `c_1(X, s) = 0`.
pub fn canonical_measure(s: &ScenarioSet, weights: Option<&[f64]>) -> Result<Measure> {
    let weights = match weights {
        Some(w) => {
            if w.len() != s.len() {
                return Err(CapacityError::WeightCountMismatch {
                    expected: s.len(),
                    got: w.len(),
                });
            }
            if let Some(index) = w.iter().position(|&v| !(v > 0.0)) {
                return Err(CapacityError::NonPositiveWeight { index, weight: w[index] });
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > DEFAULT_TOL {
                return Err(CapacityError::WeightsNotNormalized(total));
            }
            w.to_vec()
        }
        None => default_canonical_weights(s.len())?,
    };
    let parts: Vec<(f64, &Measure)> = weights
        .iter()
        .copied()
        .zip(s.members().iter().map(|m| &m.measure))
        .collect();
    mixture_probability(&parts).map_err(CapacityError::Scenario)
}

/// [`canonical_measure`] plus an exhaustive check of the null-set
/// characterization over all outcome indicators.
pub fn canonical_measure_verified(s: &ScenarioSet, weights: Option<&[f64]>) -> Result<Measure> {
    let p = canonical_measure(s, weights)?;
    let w_star = s.max_weights();
    for (idx, (&pw, &cw)) in p.weights().iter().zip(&w_star).enumerate() {
        let null_under_p = pw == 0.0;
        let null_under_capacity = cw == 0.0;
        if null_under_p != null_under_capacity {
            return Err(CapacityError::NullCharacterizationFailed(
                s.space().id(idx).to_owned(),
            ));
        }
    }
    Ok(p)
}
