//! Convex risk measures in dual (penalty) form over a finite scenario set:
//! `rho(X) = max_n (E_Qn(-X) - alpha_n)` over the members with finite
//! penalty, penalty recovery by convex conjugation (an exact linear program),
//! the minimal sublinear majorant and its canonical capacity, an axiom
//! verifier for arbitrary functional handles, the riskless characterization
//! for non-positive payoffs, and an entropic closed form used as an
//! independent duality oracle.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::capacity::CapacityError;
use crate::scenario::{
    expectation, expectation_signed, Measure, OutcomeSpace, Payoff, ScenarioError, ScenarioSet,
};
use crate::DEFAULT_TOL;

/// Errors from risk-level operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RiskError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error("risk specification is not normalized: smallest finite penalty is {0}, expected 0")]
    NotNormalized(f64),
    #[error("target has total mass {0}, expected a probability measure")]
    TargetNotProbability(f64),
    #[error("payoff is positive at charged outcome {0:?}; riskless applies to non-positive payoffs")]
    PayoffPositiveOnCharged(String),
    #[error("theta = {0} must be strictly positive")]
    NonPositiveTheta(f64),
    #[error("grid resolution {0} must be at least 1")]
    BadResolution(usize),
    #[error("risk handle failed on payoff {values:?}: {message}")]
    Handle { values: Vec<f64>, message: String },
}

/// Result alias for risk-level operations.
pub type Result<T> = std::result::Result<T, RiskError>;

/// Geometric lambda grid `2^k, k = -10..=20`, used by diagnostic scans.
pub fn lambda_grid() -> impl Iterator<Item = f64> {
    (-10..=20).map(|k| (2.0f64).powi(k))
}

/// A scenario family read as a convex risk measure in dual form.
///
/// `normalized` is derived, not declared: it holds exactly when the smallest
/// finite penalty is zero, which forces `rho(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSpec {
    scenarios: ScenarioSet,
    normalized: bool,
}

impl RiskSpec {
    pub fn new(scenarios: ScenarioSet) -> Self {
        let min_penalty = scenarios
            .members()
            .iter()
            .filter(|m| m.penalty.is_finite())
            .map(|m| m.penalty)
            .fold(f64::INFINITY, f64::min);
        Self { scenarios, normalized: min_penalty == 0.0 }
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn space(&self) -> &Arc<OutcomeSpace> {
        self.scenarios.space()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Smallest finite penalty (the amount by which `rho(0)` undershoots 0).
    pub fn min_finite_penalty(&self) -> f64 {
        self.scenarios
            .members()
            .iter()
            .filter(|m| m.penalty.is_finite())
            .map(|m| m.penalty)
            .fold(f64::INFINITY, f64::min)
    }

    /// The members with finite penalty, as a scenario set of their own.
    pub fn finite_subfamily(&self) -> ScenarioSet {
        let members = self
            .scenarios
            .members()
            .iter()
            .filter(|m| m.penalty.is_finite())
            .map(|m| (m.measure.clone(), m.penalty))
            .collect();
        ScenarioSet::new(members).expect("scenario sets always carry a finite-penalty member")
    }
}

/// Value of the conjugate penalty program: finite exactly when the target is
/// a mixture of the members.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValue {
    pub value: f64,
}

impl PenaltyValue {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `E_Q(-X) - alpha` for one member; the quantity `rho` maximizes.
///
/// Members with infinite penalty contribute negative infinity.
pub fn member_contribution(spec: &RiskSpec, index: usize, x: &Payoff) -> Result<f64> {
    let member = &spec.scenarios.members()[index];
    if !member.penalty.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let neg_expectation = -expectation_signed(&member.measure, x)?;
    Ok(neg_expectation - member.penalty)
}

fn scan_members(spec: &RiskSpec, x: &Payoff) -> Result<(f64, usize)> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for index in spec.scenarios.finite_penalty_indices() {
        let value = member_contribution(spec, index, x)?;
        if value > best {
            best = value;
            arg = index;
        }
    }
    Ok((best, arg))
}

/// `rho(X) = max_n (E_Qn(-X) - alpha_n)` over finite-penalty members.
pub fn rho(spec: &RiskSpec, x: &Payoff) -> Result<f64> {
    scan_members(spec, x).map(|(value, _)| value)
}

/// The lowest member index attaining [`rho`], with its measure.
///
/// The returned member satisfies `rho(X) = E_Q(-X) - alpha` exactly: both
/// sides run through the same member scan.
pub fn maximizer(spec: &RiskSpec, x: &Payoff) -> Result<(usize, Measure)> {
    let (_, index) = scan_members(spec, x)?;
    Ok((index, spec.scenarios.members()[index].measure.clone()))
}

// ---------------------------------------------------------------------------
// Conjugate penalty program
// ---------------------------------------------------------------------------

const LP_TOL: f64 = 1e-9;

/// Number of finite-penalty members up to which the conjugate program is
/// solved by exact vertex enumeration; larger programs go through the
/// iterative simplex route.
pub const VERTEX_ENUMERATION_LIMIT: usize = 12;

struct ConjugateProgram {
    /// Rows: one per outcome, plus the unit-mass row.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    costs: Vec<f64>,
}

fn conjugate_program(spec: &RiskSpec, q: &Measure) -> ConjugateProgram {
    let finite: Vec<usize> = spec.scenarios.finite_penalty_indices().collect();
    let m = spec.space().len();
    let mut a = vec![vec![0.0; finite.len()]; m + 1];
    for (col, &member_index) in finite.iter().enumerate() {
        let weights = spec.scenarios.members()[member_index].measure.weights();
        for (row, &w) in weights.iter().enumerate() {
            a[row][col] = w;
        }
        a[m][col] = 1.0;
    }
    let mut b: Vec<f64> = q.weights().to_vec();
    b.push(1.0);
    let costs = finite
        .iter()
        .map(|&i| spec.scenarios.members()[i].penalty)
        .collect();
    ConjugateProgram { a, b, costs }
}

/// `penalty(Q) = min { sum_k lambda_k alpha_k : lambda in the simplex,
/// sum_k lambda_k Q_k = Q }`, the minimal convex penalty representing the
/// same risk measure; infinity when `Q` is not a mixture of the members.
pub fn penalty(spec: &RiskSpec, q: &Measure) -> Result<PenaltyValue> {
    if !OutcomeSpace::same_space(spec.space(), q.space()) {
        return Err(RiskError::Scenario(ScenarioError::SpaceMismatch));
    }
    if !q.is_probability(crate::MASS_TOL) {
        return Err(RiskError::TargetNotProbability(q.mass()));
    }
    let program = conjugate_program(spec, q);
    let value = if program.costs.len() <= VERTEX_ENUMERATION_LIMIT {
        min_cost_by_vertices(&program.a, &program.b, &program.costs, LP_TOL)
    } else {
        simplex_min(&program.a, &program.b, &program.costs, LP_TOL).map(|(v, _)| v)
    };
    Ok(PenaltyValue { value: value.unwrap_or(f64::INFINITY) })
}

/// Solves a small dense system `m x = rhs` in place. Returns `None` when the
/// matrix is numerically singular.
fn solve_square(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())?;
        if m[pivot_row][col].abs() <= tol {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = m[col][col];
        for row in (col + 1)..n {
            let factor = m[row][col] / pivot;
            if factor != 0.0 {
                for k in col..n {
                    m[row][k] -= factor * m[col][k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Row indices forming a row basis of `a`, found by Gaussian elimination.
fn row_basis(a: &[Vec<f64>], tol: f64) -> Vec<usize> {
    let rows = a.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = a[0].len();
    let mut work: Vec<Vec<f64>> = a.to_vec();
    let mut order: Vec<usize> = (0..rows).collect();
    let mut basis = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let pivot = (row..rows).max_by(|&i, &j| {
            work[i][col].abs().partial_cmp(&work[j][col].abs()).unwrap()
        });
        let pivot = match pivot {
            Some(p) if work[p][col].abs() > tol => p,
            _ => continue,
        };
        work.swap(row, pivot);
        order.swap(row, pivot);
        basis.push(order[row]);
        let lead = work[row][col];
        for r in (row + 1)..rows {
            let factor = work[r][col] / lead;
            if factor != 0.0 {
                for k in col..cols {
                    work[r][k] -= factor * work[row][k];
                }
            }
        }
        row += 1;
    }
    basis
}

fn combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // Advance to the next combination in lexicographic order.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Minimum cost over the basic feasible solutions of `{a x = b, x >= 0}`.
///
/// Every extreme point of the (compact) feasible set is a basic solution on
/// some column subset of size `rank(a)`, so enumerating subsets is exact.
fn min_cost_by_vertices(a: &[Vec<f64>], b: &[f64], costs: &[f64], tol: f64) -> Option<f64> {
    let n = costs.len();
    if n == 0 {
        return None;
    }
    let rows = row_basis(a, tol);
    let r = rows.len();
    let mut best: Option<f64> = None;
    combinations(n, r, |subset| {
        let m: Vec<Vec<f64>> = rows
            .iter()
            .map(|&row| subset.iter().map(|&col| a[row][col]).collect())
            .collect();
        let rhs: Vec<f64> = rows.iter().map(|&row| b[row]).collect();
        let Some(solution) = solve_square(m, rhs, 1e-12) else {
            return;
        };
        if solution.iter().any(|&x| x < -tol) {
            return;
        }
        // The row basis determined the solution; verify every row.
        for (row_index, row) in a.iter().enumerate() {
            let mut acc = 0.0;
            for (&col, &x) in subset.iter().zip(&solution) {
                acc += row[col] * x;
            }
            if (acc - b[row_index]).abs() > tol {
                return;
            }
        }
        let cost: f64 = subset
            .iter()
            .zip(&solution)
            .map(|(&col, &x)| costs[col] * x.max(0.0))
            .sum();
        best = Some(best.map_or(cost, |b0: f64| b0.min(cost)));
    });
    best
}

/// Two-phase dense simplex with Bland's rule for `min c x, a x = b, x >= 0`.
/// Returns the optimum and a solution, or `None` when infeasible. The
/// feasible sets handled here are sub-simplices, so unboundedness cannot
/// occur; it is treated as infeasible defensively.
fn simplex_min(a: &[Vec<f64>], b: &[f64], costs: &[f64], tol: f64) -> Option<(f64, Vec<f64>)> {
    let m = a.len();
    let n = costs.len();
    // Tableau columns: n structural + m artificial + rhs.
    let total = n + m;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for row in 0..m {
        let mut line = vec![0.0; total + 1];
        let flip = if b[row] < 0.0 { -1.0 } else { 1.0 };
        for col in 0..n {
            line[col] = flip * a[row][col];
        }
        line[n + row] = 1.0;
        line[total] = flip * b[row];
        t.push(line);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, obj: &[f64], allowed: &dyn Fn(usize) -> bool| -> bool {
        loop {
            // Reduced costs from scratch; stable and simple at these sizes.
            let mut reduced = vec![0.0; total];
            let mut entering = None;
            for col in 0..total {
                if !allowed(col) || basis.contains(&col) {
                    continue;
                }
                let mut rc = obj[col];
                for (row, &bv) in basis.iter().enumerate() {
                    rc -= obj[bv] * t[row][col];
                }
                reduced[col] = rc;
                if rc < -tol && entering.is_none() {
                    entering = Some(col); // Bland: lowest index
                }
            }
            let Some(col) = entering else { return true };
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for row in 0..t.len() {
                if t[row][col] > tol {
                    let ratio = t[row][total] / t[row][col];
                    let better = ratio < best_ratio - 1e-15
                        || ((ratio - best_ratio).abs() <= 1e-15
                            && leave.is_some_and(|l| basis[row] < basis[l]));
                    if leave.is_none() || better {
                        best_ratio = ratio;
                        leave = Some(row);
                    }
                }
            }
            let Some(row) = leave else { return false }; // unbounded
            let pivot = t[row][col];
            for k in 0..=total {
                t[row][k] /= pivot;
            }
            for r in 0..t.len() {
                if r != row && t[r][col] != 0.0 {
                    let factor = t[r][col];
                    for k in 0..=total {
                        t[r][k] -= factor * t[row][k];
                    }
                }
            }
            basis[row] = col;
        }
    };

    // Phase 1: minimize the artificial mass.
    let mut phase1 = vec![0.0; total];
    for item in phase1.iter_mut().take(total).skip(n) {
        *item = 1.0;
    }
    if !run(&mut t, &mut basis, &phase1, &|_| true) {
        return None;
    }
    let infeasibility: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= n)
        .map(|(row, _)| t[row][total])
        .sum();
    if infeasibility > tol {
        return None;
    }
    // Drive leftover artificial basics out where possible; rows that cannot
    // pivot are redundant and harmless with a zero rhs.
    for row in 0..m {
        if basis[row] >= n {
            if let Some(col) = (0..n).find(|&c| t[row][c].abs() > tol) {
                let pivot = t[row][col];
                for k in 0..=total {
                    t[row][k] /= pivot;
                }
                for r in 0..m {
                    if r != row && t[r][col] != 0.0 {
                        let factor = t[r][col];
                        for k in 0..=total {
                            t[r][k] -= factor * t[row][k];
                        }
                    }
                }
                basis[row] = col;
            }
        }
    }

    // Phase 2 over structural columns only.
    let mut phase2 = vec![0.0; total];
    phase2[..n].copy_from_slice(costs);
    if !run(&mut t, &mut basis, &phase2, &|col| col < n) {
        return None;
    }
    let mut solution = vec![0.0; n];
    for (row, &bv) in basis.iter().enumerate() {
        if bv < n {
            solution[bv] = t[row][total].max(0.0);
        }
    }
    let value = solution
        .iter()
        .zip(costs)
        .map(|(&x, &c)| x * c)
        .sum();
    Some((value, solution))
}

// ---------------------------------------------------------------------------
// Minimal sublinear majorant and canonical capacity
// ---------------------------------------------------------------------------

fn require_normalized(spec: &RiskSpec) -> Result<()> {
    if spec.is_normalized() {
        Ok(())
    } else {
        Err(RiskError::NotNormalized(spec.min_finite_penalty()))
    }
}

/// `rho_min(X) = sup_{lambda > 0} rho(lambda X) / lambda`, which for the dual
/// form collapses to `max_n E_Qn(-X)` over finite-penalty members.
pub fn rho_min(spec: &RiskSpec, x: &Payoff) -> Result<f64> {
    require_normalized(spec)?;
    let mut best = f64::NEG_INFINITY;
    for index in spec.scenarios.finite_penalty_indices() {
        let member = &spec.scenarios.members()[index];
        let value = -expectation_signed(&member.measure, x)?;
        if value > best {
            best = value;
        }
    }
    Ok(best)
}

/// Diagnostic companion of [`rho_min`]: the lambda-grid scan and its
/// relation to the closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoMinDiagnostic {
    /// Closed-form value.
    pub value: f64,
    /// `(lambda, rho(lambda X) / lambda)` over the geometric grid.
    pub grid: Vec<(f64, f64)>,
    /// Whether the grid values increase monotonically (they must).
    pub monotone: bool,
    /// `value` minus the last grid entry; non-negative and shrinking in the
    /// grid ceiling.
    pub residual_gap: f64,
}

/// Evaluates `rho(lambda X)/lambda` along [`lambda_grid`] and checks monotone
/// convergence to the closed form.
pub fn rho_min_diagnostic(spec: &RiskSpec, x: &Payoff) -> Result<RhoMinDiagnostic> {
    let value = rho_min(spec, x)?;
    let mut grid = Vec::new();
    for lambda in lambda_grid() {
        let scaled = x.scale(lambda);
        grid.push((lambda, rho(spec, &scaled)? / lambda));
    }
    let monotone = grid.windows(2).all(|w| w[1].1 >= w[0].1 - DEFAULT_TOL);
    let residual_gap = value - grid.last().map_or(f64::NEG_INFINITY, |g| g.1);
    Ok(RhoMinDiagnostic { value, grid, monotone, residual_gap })
}

/// The capacity canonically associated with the risk measure:
/// `c_rho(X) = rho_min(-|X|) = max_n E_Qn(|X|)`.
pub fn canonical_capacity(spec: &RiskSpec, x: &Payoff) -> Result<f64> {
    require_normalized(spec)?;
    let abs = x.abs();
    let mut best = f64::NEG_INFINITY;
    for index in spec.scenarios.finite_penalty_indices() {
        let member = &spec.scenarios.members()[index];
        let value = expectation(&member.measure, &abs, 1.0)?;
        if value > best {
            best = value;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Axiom verification
// ---------------------------------------------------------------------------

/// A functional that can be probed like a risk measure.
pub trait RhoLike {
    fn rho(&self, x: &Payoff) -> Result<f64>;

    /// Capacity of the associated seminorm, used in the Lipschitz check.
    ///
    /// The default estimates `rho_min(-|X|)` along the lambda grid, which
    /// under-approaches the true value from below; implementations with an
    /// exact closed form should override it.
    fn capacity(&self, x: &Payoff) -> Result<f64> {
        let abs_neg = x.abs().neg();
        let mut best = f64::NEG_INFINITY;
        for lambda in lambda_grid() {
            let value = self.rho(&abs_neg.scale(lambda))? / lambda;
            if value > best {
                best = value;
            }
        }
        Ok(best)
    }
}

impl RhoLike for RiskSpec {
    fn rho(&self, x: &Payoff) -> Result<f64> {
        rho(self, x)
    }

    fn capacity(&self, x: &Payoff) -> Result<f64> {
        canonical_capacity(self, x)
    }
}

/// Any closure over payoffs is a probe-able handle (with the grid-based
/// capacity default).
impl<F> RhoLike for F
where
    F: Fn(&Payoff) -> Result<f64>,
{
    fn rho(&self, x: &Payoff) -> Result<f64> {
        self(x)
    }
}

/// A reproducible axiom violation: the payoff(s) and scalar that witnessed it.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomWitness {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub violation: f64,
}

/// Verdict for one axiom.
#[derive(Debug, Clone, PartialEq)]
pub enum AxiomVerdict {
    Pass,
    Fail(Box<AxiomWitness>),
}

impl AxiomVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, AxiomVerdict::Pass)
    }

    fn record(&mut self, witness: AxiomWitness) {
        if self.passed() {
            *self = AxiomVerdict::Fail(Box::new(witness));
        }
    }
}

/// Outcome of randomized plus corner-case axiom checking.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub trials: usize,
    pub tol: f64,
    pub monotonicity: AxiomVerdict,
    pub translation_invariance: AxiomVerdict,
    pub convexity: AxiomVerdict,
    pub normalization: AxiomVerdict,
    pub lipschitz: AxiomVerdict,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.monotonicity.passed()
            && self.translation_invariance.passed()
            && self.convexity.passed()
            && self.normalization.passed()
            && self.lipschitz.passed()
    }
}

fn eval(handle: &dyn RhoLike, x: &Payoff) -> Result<f64> {
    handle.rho(x).map_err(|e| RiskError::Handle {
        values: x.values().to_vec(),
        message: e.to_string(),
    })
}

/// Checks monotonicity, translation invariance, convexity, normalization and
/// the Lipschitz estimate `|rho(X) - rho(Y)| <= c_rho(X - Y)` on corner cases
/// and `trials` seeded random draws. Any violation beyond `tol` is reported
/// with its witnessing payoffs.
pub fn verify_axioms(
    handle: &dyn RhoLike,
    space: &Arc<OutcomeSpace>,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<AxiomReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AxiomReport {
        trials,
        tol,
        monotonicity: AxiomVerdict::Pass,
        translation_invariance: AxiomVerdict::Pass,
        convexity: AxiomVerdict::Pass,
        normalization: AxiomVerdict::Pass,
        lipschitz: AxiomVerdict::Pass,
    };

    let zero = Payoff::constant(Arc::clone(space), 0.0)?;
    let rho_zero = eval(handle, &zero)?;
    if rho_zero.abs() > tol {
        report.normalization.record(AxiomWitness {
            x: zero.values().to_vec(),
            y: None,
            lambda: None,
            violation: rho_zero.abs(),
        });
    }

    // Corner payoffs: constants, signed indicators, a ramp.
    let mut corners = vec![
        zero.clone(),
        Payoff::constant(Arc::clone(space), 1.0)?,
        Payoff::constant(Arc::clone(space), -1.0)?,
    ];
    for id in space.outcomes().iter().take(16) {
        let ind = Payoff::indicator(Arc::clone(space), id)?;
        corners.push(ind.neg());
        corners.push(ind);
    }
    let ramp: Vec<f64> = (0..space.len()).map(|i| i as f64 - 1.0).collect();
    corners.push(Payoff::new(Arc::clone(space), ramp)?);

    let check_pair = |report: &mut AxiomReport,
                          rng: &mut ChaCha8Rng,
                          x: &Payoff,
                          y: &Payoff|
     -> Result<()> {
        let rho_x = eval(handle, x)?;
        let rho_y = eval(handle, y)?;

        // Monotonicity against a dominating payoff.
        let bump: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let above = x.zip(&Payoff::new(Arc::clone(space), bump)?, |a, b| a + b)?;
        let rho_above = eval(handle, &above)?;
        if rho_above - rho_x > tol {
            report.monotonicity.record(AxiomWitness {
                x: x.values().to_vec(),
                y: Some(above.values().to_vec()),
                lambda: None,
                violation: rho_above - rho_x,
            });
        }

        // Translation invariance.
        let a = rng.gen_range(-2.0..2.0);
        let rho_shift = eval(handle, &x.shift(a))?;
        let ti_violation = (rho_shift - (rho_x - a)).abs();
        if ti_violation > tol {
            report.translation_invariance.record(AxiomWitness {
                x: x.values().to_vec(),
                y: None,
                lambda: Some(a),
                violation: ti_violation,
            });
        }

        // Convexity.
        let lambda = rng.gen_range(0.0..1.0);
        let blend = x.zip(y, |xv, yv| lambda * xv + (1.0 - lambda) * yv)?;
        let rho_blend = eval(handle, &blend)?;
        let cv_violation = rho_blend - (lambda * rho_x + (1.0 - lambda) * rho_y);
        if cv_violation > tol {
            report.convexity.record(AxiomWitness {
                x: x.values().to_vec(),
                y: Some(y.values().to_vec()),
                lambda: Some(lambda),
                violation: cv_violation,
            });
        }

        // Lipschitz bound through the associated capacity.
        let diff = x.sub(y)?;
        let cap = handle.capacity(&diff).map_err(|e| RiskError::Handle {
            values: diff.values().to_vec(),
            message: e.to_string(),
        })?;
        let lip_violation = (rho_x - rho_y).abs() - cap;
        if lip_violation > tol {
            report.lipschitz.record(AxiomWitness {
                x: x.values().to_vec(),
                y: Some(y.values().to_vec()),
                lambda: None,
                violation: lip_violation,
            });
        }
        Ok(())
    };

    for i in 0..corners.len() {
        let x = corners[i].clone();
        let y = corners[(i + 1) % corners.len()].clone();
        check_pair(&mut report, &mut rng, &x, &y)?;
    }

    for _ in 0..trials {
        let xv: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let yv: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = Payoff::new(Arc::clone(space), xv)?;
        let y = Payoff::new(Arc::clone(space), yv)?;
        check_pair(&mut report, &mut rng, &x, &y)?;
    }

    Ok(report)
}

// ---------------------------------------------------------------------------
// Riskless payoffs
// ---------------------------------------------------------------------------

/// Scale and member exhibiting positive risk for a non-riskless payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisklessWitness {
    pub lambda: f64,
    pub member: usize,
    pub rho_value: f64,
}

/// Whether a non-positive payoff carries zero risk at every scale:
/// equivalently, whether every finite-penalty member integrates it to zero,
/// i.e. the payoff vanishes a.s. under the canonical measure.
pub fn riskless(spec: &RiskSpec, x: &Payoff) -> Result<(bool, Option<RisklessWitness>)> {
    riskless_with_tol(spec, x, DEFAULT_TOL)
}

/// [`riskless`] with an explicit zero tolerance.
pub fn riskless_with_tol(
    spec: &RiskSpec,
    x: &Payoff,
    tol: f64,
) -> Result<(bool, Option<RisklessWitness>)> {
    require_normalized(spec)?;
    if !OutcomeSpace::same_space(spec.space(), x.space()) {
        return Err(RiskError::Scenario(ScenarioError::SpaceMismatch));
    }
    for idx in spec.scenarios.charged_outcomes() {
        if x.value(idx) > 0.0 {
            return Err(RiskError::PayoffPositiveOnCharged(
                spec.space().id(idx).to_owned(),
            ));
        }
    }
    let mut vanish = true;
    for index in spec.scenarios.finite_penalty_indices() {
        let member = &spec.scenarios.members()[index];
        if expectation_signed(&member.measure, x)?.abs() > tol {
            vanish = false;
            break;
        }
    }
    if vanish {
        return Ok((true, None));
    }
    // Scan the lambda grid upward for the first scale with positive risk.
    for lambda in lambda_grid() {
        let scaled = x.scale(lambda);
        let (value, member) = scan_members(spec, &scaled)?;
        if value > tol {
            return Ok((false, Some(RisklessWitness { lambda, member, rho_value: value })));
        }
    }
    // Penalties can outgrow the grid ceiling; jump straight past them.
    let worst = spec
        .scenarios
        .finite_penalty_indices()
        .map(|i| {
            let m = &spec.scenarios.members()[i];
            let e = expectation_signed(&m.measure, x).unwrap_or(0.0);
            (i, -e, m.penalty)
        })
        .filter(|&(_, gain, _)| gain > 0.0)
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    if let Some((member, gain, alpha)) = worst {
        let lambda = (2.0 * (alpha + 1.0) / gain).max(1.0);
        let (value, arg) = scan_members(spec, &x.scale(lambda))?;
        if value > tol {
            return Ok((false, Some(RisklessWitness { lambda, member: arg, rho_value: value })));
        }
        let _ = member;
    }
    Ok((true, None))
}

// ---------------------------------------------------------------------------
// Entropic oracle
// ---------------------------------------------------------------------------

/// Closed-form entropic risk `rho_theta(X) = ln(E_P[exp(-theta X)]) / theta`.
pub fn entropic_oracle(p: &Measure, theta: f64, x: &Payoff) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(RiskError::NonPositiveTheta(theta));
    }
    if !OutcomeSpace::same_space(p.space(), x.space()) {
        return Err(RiskError::Scenario(ScenarioError::SpaceMismatch));
    }
    if !p.is_probability(crate::MASS_TOL) {
        return Err(RiskError::TargetNotProbability(p.mass()));
    }
    // Log-sum-exp over the support, shifted for stability.
    let mut shift = f64::NEG_INFINITY;
    for (w, v) in p.weights().iter().zip(x.values()) {
        if *w > 0.0 {
            shift = shift.max(-theta * v);
        }
    }
    let mut acc = 0.0;
    for (w, v) in p.weights().iter().zip(x.values()) {
        if *w > 0.0 {
            acc += w * (-theta * v - shift).exp();
        }
    }
    Ok((shift + acc.ln()) / theta)
}

/// Relative entropy `H(Q | P) = sum_w Q(w) ln(Q(w)/P(w))`, infinite when `Q`
/// charges an outcome `P` does not.
pub fn relative_entropy(q: &Measure, p: &Measure) -> Result<f64> {
    if !OutcomeSpace::same_space(p.space(), q.space()) {
        return Err(RiskError::Scenario(ScenarioError::SpaceMismatch));
    }
    let mut h = 0.0;
    for (qw, pw) in q.weights().iter().zip(p.weights()) {
        if *qw > 0.0 {
            if *pw == 0.0 {
                return Ok(f64::INFINITY);
            }
            h += qw * (qw / pw).ln();
        }
    }
    Ok(h)
}

/// Companion constructor for the entropic oracle: a dual spec whose members
/// are a simplex grid over the support of `P` (denominator `resolution`),
/// penalized by `H(Q|P)/theta`.
///
/// Its [`rho`] never exceeds [`entropic_oracle`] and converges to it as the
/// grid refines.
pub fn entropic_spec(p: &Measure, theta: f64, resolution: usize) -> Result<RiskSpec> {
    if !(theta > 0.0) {
        return Err(RiskError::NonPositiveTheta(theta));
    }
    if resolution == 0 {
        return Err(RiskError::BadResolution(resolution));
    }
    if !p.is_probability(crate::MASS_TOL) {
        return Err(RiskError::TargetNotProbability(p.mass()));
    }
    let support: Vec<usize> = p.support().collect();
    let space = Arc::clone(p.space());
    let mut members = Vec::new();
    let mut counts = vec![0usize; support.len()];
    enumerate_compositions(resolution, support.len(), &mut counts, 0, &mut |counts| {
        let mut weights = vec![0.0; space.len()];
        for (slot, &count) in support.iter().zip(counts) {
            weights[*slot] = count as f64 / resolution as f64;
        }
        let q = Measure::new(Arc::clone(&space), weights)
            .expect("grid weights are non-negative");
        let h = relative_entropy(&q, p).expect("same space");
        members.push((q, h / theta));
    });
    Ok(RiskSpec::new(ScenarioSet::new(members)?))
}

fn enumerate_compositions(
    remaining: usize,
    slots: usize,
    counts: &mut Vec<usize>,
    slot: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if slot + 1 == slots {
        counts[slot] = remaining;
        visit(counts);
        return;
    }
    for take in 0..=remaining {
        counts[slot] = take;
        enumerate_compositions(remaining - take, slots, counts, slot + 1, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_member_spec() -> RiskSpec {
        let space = OutcomeSpace::new(["a", "b"]).unwrap();
        let q1 = Measure::new(Arc::clone(&space), vec![1.0, 0.0]).unwrap();
        let q2 = Measure::new(Arc::clone(&space), vec![0.0, 1.0]).unwrap();
        RiskSpec::new(ScenarioSet::new(vec![(q1, 0.0), (q2, 1.0)]).unwrap())
    }

    fn payoff(spec: &RiskSpec, values: &[f64]) -> Payoff {
        Payoff::new(Arc::clone(spec.space()), values.to_vec()).unwrap()
    }

    #[test]
    fn rho_normalized_at_zero() {
        let spec = two_member_spec();
        assert!(spec.is_normalized());
        assert_eq!(rho(&spec, &payoff(&spec, &[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn rho_enumerates_members() {
        let spec = two_member_spec();
        let x = payoff(&spec, &[2.0, -2.0]);
        assert_eq!(rho(&spec, &x).unwrap(), 1.0);
    }

    #[test]
    fn rho_translation_invariant() {
        let spec = two_member_spec();
        let x = payoff(&spec, &[3.0, -1.0]);
        let shifted = x.shift(1.0);
        let lhs = rho(&spec, &shifted).unwrap();
        let rhs = rho(&spec, &x).unwrap() - 1.0;
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn maximizer_attains_exactly() {
        let spec = two_member_spec();
        let x = payoff(&spec, &[2.0, -2.0]);
        let (index, _measure) = maximizer(&spec, &x).unwrap();
        assert_eq!(index, 1);
        let value = member_contribution(&spec, index, &x).unwrap();
        assert_eq!(value, rho(&spec, &x).unwrap());
    }

    #[test]
    fn maximizer_tie_breaks_low() {
        let spec = two_member_spec();
        let (index, _) = maximizer(&spec, &payoff(&spec, &[0.0, 0.0])).unwrap();
        assert_eq!(index, 0);

        let space = OutcomeSpace::new(["a"]).unwrap();
        let single = RiskSpec::new(
            ScenarioSet::sublinear(vec![Measure::dirac(space, "a").unwrap()]).unwrap(),
        );
        let x = Payoff::new(Arc::clone(single.space()), vec![5.0]).unwrap();
        assert_eq!(maximizer(&single, &x).unwrap().0, 0);
    }

    #[test]
    fn penalty_zero_at_zero_cost_member() {
        let spec = two_member_spec();
        let q1 = spec.scenarios().members()[0].measure.clone();
        let value = penalty(&spec, &q1).unwrap();
        assert!(value.value.abs() <= 1e-10);
    }

    #[test]
    fn penalty_interpolates_costs() {
        let spec = two_member_spec();
        let q = Measure::new(Arc::clone(spec.space()), vec![0.5, 0.5]).unwrap();
        let value = penalty(&spec, &q).unwrap();
        assert!((value.value - 0.5).abs() <= 1e-10);
    }

    #[test]
    fn penalty_infinite_outside_hull() {
        let space = OutcomeSpace::new(["a", "b", "c"]).unwrap();
        let q1 = Measure::dirac(Arc::clone(&space), "a").unwrap();
        let q2 = Measure::dirac(Arc::clone(&space), "b").unwrap();
        let spec = RiskSpec::new(ScenarioSet::sublinear(vec![q1, q2]).unwrap());
        let target = Measure::dirac(Arc::clone(&space), "c").unwrap();
        let value = penalty(&spec, &target).unwrap();
        assert!(value.value.is_infinite());
        assert!(!value.is_finite());
    }

    #[test]
    fn vertex_and_simplex_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n_outcomes = rng.gen_range(2..5);
            let ids: Vec<String> = (0..n_outcomes).map(|i| format!("w{i}")).collect();
            let space = OutcomeSpace::new(ids).unwrap();
            let n_members = rng.gen_range(2..6);
            let mut members = Vec::new();
            for _ in 0..n_members {
                let raw: Vec<f64> = (0..n_outcomes).map(|_| rng.gen_range(0.01..1.0)).collect();
                let mass: f64 = raw.iter().sum();
                let weights = raw.iter().map(|w| w / mass).collect();
                let q = Measure::new(Arc::clone(&space), weights).unwrap();
                members.push((q, rng.gen_range(0.0..2.0)));
            }
            let spec = RiskSpec::new(ScenarioSet::new(members).unwrap());
            // Target: random mixture of the members, always feasible.
            let lambdas: Vec<f64> = {
                let raw: Vec<f64> = (0..n_members).map(|_| rng.gen_range(0.0..1.0)).collect();
                let mass: f64 = raw.iter().sum();
                raw.iter().map(|w| w / mass).collect()
            };
            let parts: Vec<(f64, &Measure)> = lambdas
                .iter()
                .copied()
                .zip(spec.scenarios().members().iter().map(|m| &m.measure))
                .filter(|(w, _)| *w > 0.0)
                .collect();
            let target = crate::scenario::mixture(&parts).unwrap();
            let program = conjugate_program(&spec, &target);
            let by_vertices =
                min_cost_by_vertices(&program.a, &program.b, &program.costs, LP_TOL);
            let by_simplex =
                simplex_min(&program.a, &program.b, &program.costs, LP_TOL).map(|(v, _)| v);
            match (by_vertices, by_simplex) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-10, "{a} vs {b}"),
                (a, b) => panic!("route disagreement: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn rho_min_closed_form() {
        let spec = two_member_spec();
        let x = payoff(&spec, &[2.0, -2.0]);
        assert_eq!(rho_min(&spec, &x).unwrap(), 2.0);
        assert_eq!(rho_min(&spec, &payoff(&spec, &[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn rho_min_diagnostic_monotone() {
        let spec = two_member_spec();
        let x = payoff(&spec, &[2.0, -2.0]);
        let diag = rho_min_diagnostic(&spec, &x).unwrap();
        assert!(diag.monotone);
        assert!(diag.residual_gap >= -1e-12);
        assert!(diag.residual_gap <= 1.0 / (2.0f64).powi(20) + 1e-12);
    }

    #[test]
    fn rho_min_equals_rho_for_sublinear() {
        let space = OutcomeSpace::new(["a", "b", "c"]).unwrap();
        let measures = vec![
            Measure::new(Arc::clone(&space), vec![0.2, 0.3, 0.5]).unwrap(),
            Measure::new(Arc::clone(&space), vec![0.6, 0.4, 0.0]).unwrap(),
        ];
        let spec = RiskSpec::new(ScenarioSet::sublinear(measures).unwrap());
        let x = Payoff::new(Arc::clone(spec.space()), vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(rho_min(&spec, &x).unwrap(), rho(&spec, &x).unwrap());
    }

    #[test]
    fn rho_min_requires_normalization() {
        let space = OutcomeSpace::new(["a"]).unwrap();
        let q = Measure::dirac(Arc::clone(&space), "a").unwrap();
        let spec = RiskSpec::new(ScenarioSet::new(vec![(q, 0.5)]).unwrap());
        let x = Payoff::new(Arc::clone(spec.space()), vec![1.0]).unwrap();
        assert!(matches!(
            rho_min(&spec, &x).unwrap_err(),
            RiskError::NotNormalized(_)
        ));
    }

    #[test]
    fn canonical_capacity_is_max_abs_expectation() {
        let spec = two_member_spec();
        assert_eq!(canonical_capacity(&spec, &payoff(&spec, &[2.0, -2.0])).unwrap(), 2.0);
        assert_eq!(canonical_capacity(&spec, &payoff(&spec, &[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(canonical_capacity(&spec, &payoff(&spec, &[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn canonical_capacity_matches_capacity_module() {
        let spec = two_member_spec();
        let x = payoff(&spec, &[1.5, -0.5]);
        let via_risk = canonical_capacity(&spec, &x).unwrap();
        let via_capacity =
            crate::capacity::capacity(&x, &spec.finite_subfamily(), 1.0).unwrap();
        assert_eq!(via_risk, via_capacity);
    }

    #[test]
    fn axioms_pass_for_dual_form() {
        let spec = two_member_spec();
        let report = verify_axioms(&spec, spec.space(), 200, 1e-10, 42).unwrap();
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn quadratic_perturbation_breaks_monotonicity_and_translation() {
        let spec = two_member_spec();
        let q1 = spec.scenarios().members()[0].measure.clone();
        let handle = move |x: &Payoff| -> Result<f64> {
            let base = rho(&two_member_spec(), x)?;
            let e = expectation_signed(&q1, x)?;
            Ok(base + 0.1 * e * e)
        };
        let report = verify_axioms(&handle, spec.space(), 300, 1e-10, 42).unwrap();
        assert!(!report.monotonicity.passed());
        assert!(!report.translation_invariance.passed());
        if let AxiomVerdict::Fail(witness) = &report.monotonicity {
            assert!(witness.violation > 1e-10);
        }
    }

    #[test]
    fn concave_perturbation_breaks_convexity() {
        let spec = two_member_spec();
        let q1 = spec.scenarios().members()[0].measure.clone();
        let handle = move |x: &Payoff| -> Result<f64> {
            let base = rho(&two_member_spec(), x)?;
            let e = expectation_signed(&q1, x)?;
            Ok(base - 0.5 * e * e)
        };
        let report = verify_axioms(&handle, spec.space(), 300, 1e-10, 42).unwrap();
        assert!(!report.convexity.passed());
    }

    #[test]
    fn signed_weights_break_monotonicity() {
        let spec = two_member_spec();
        let handle = |x: &Payoff| -> Result<f64> {
            // A "measure" with a negative weight, mass still 1.
            Ok(-(1.5 * x.value(0) - 0.5 * x.value(1)))
        };
        let report = verify_axioms(&handle, spec.space(), 200, 1e-10, 1).unwrap();
        assert!(!report.monotonicity.passed());
        assert!(report.translation_invariance.passed());
    }

    #[test]
    fn riskless_zero_payoff() {
        let spec = two_member_spec();
        let (ok, witness) = riskless(&spec, &payoff(&spec, &[0.0, 0.0])).unwrap();
        assert!(ok);
        assert!(witness.is_none());
    }

    #[test]
    fn riskless_detects_charged_loss() {
        let spec = two_member_spec();
        let (ok, witness) = riskless(&spec, &payoff(&spec, &[0.0, -1.0])).unwrap();
        assert!(!ok);
        let witness = witness.unwrap();
        assert_eq!(witness.member, 1);
        assert_eq!(witness.lambda, 2.0);
        assert!((witness.rho_value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn riskless_ignores_uncharged_outcomes() {
        let space = OutcomeSpace::new(["a", "b"]).unwrap();
        let q1 = Measure::dirac(Arc::clone(&space), "a").unwrap();
        let spec = RiskSpec::new(ScenarioSet::sublinear(vec![q1]).unwrap());
        let x = Payoff::new(Arc::clone(spec.space()), vec![0.0, -1.0]).unwrap();
        let (ok, _) = riskless(&spec, &x).unwrap();
        assert!(ok);
    }

    #[test]
    fn riskless_rejects_positive_part() {
        let spec = two_member_spec();
        let err = riskless(&spec, &payoff(&spec, &[0.5, -1.0])).unwrap_err();
        assert!(matches!(err, RiskError::PayoffPositiveOnCharged(_)));
    }

    #[test]
    fn entropic_closed_form() {
        let space = OutcomeSpace::new(["a", "b"]).unwrap();
        let p = Measure::new(Arc::clone(&space), vec![0.5, 0.5]).unwrap();
        let x = Payoff::new(Arc::clone(&space), vec![1.0, -1.0]).unwrap();
        let got = entropic_oracle(&p, 1.0, &x).unwrap();
        let expected = 1.0f64.cosh().ln();
        assert!((got - expected).abs() <= 1e-12);
        assert!((got - 0.433_780_830_483_026_9).abs() <= 1e-12);
    }

    #[test]
    fn entropic_constants() {
        let space = OutcomeSpace::new(["a", "b", "c"]).unwrap();
        let p = Measure::uniform(Arc::clone(&space)).unwrap();
        let zero = Payoff::constant(Arc::clone(&space), 0.0).unwrap();
        assert!(entropic_oracle(&p, 2.0, &zero).unwrap().abs() <= 1e-12);
        let c = Payoff::constant(Arc::clone(&space), 1.7).unwrap();
        assert!((entropic_oracle(&p, 0.5, &c).unwrap() + 1.7).abs() <= 1e-12);
    }

    #[test]
    fn entropic_rejects_bad_theta() {
        let space = OutcomeSpace::new(["a"]).unwrap();
        let p = Measure::dirac(Arc::clone(&space), "a").unwrap();
        let x = Payoff::constant(space, 0.0).unwrap();
        assert!(matches!(
            entropic_oracle(&p, 0.0, &x).unwrap_err(),
            RiskError::NonPositiveTheta(_)
        ));
    }

    #[test]
    fn entropic_spec_bounds_oracle_and_refines() {
        let space = OutcomeSpace::new(["a", "b"]).unwrap();
        let p = Measure::new(Arc::clone(&space), vec![0.5, 0.5]).unwrap();
        let theta = 1.0;
        let x = Payoff::new(Arc::clone(&space), vec![1.0, -1.0]).unwrap();
        let oracle = entropic_oracle(&p, theta, &x).unwrap();
        let mut gaps = Vec::new();
        // Nested grids (8 divides 32), so the gap cannot grow.
        for resolution in [8, 32] {
            let spec = entropic_spec(&p, theta, resolution).unwrap();
            let dual = rho(&spec, &x).unwrap();
            assert!(dual <= oracle + 1e-12);
            gaps.push(oracle - dual);
        }
        assert!(gaps[1] <= gaps[0] + 1e-15, "refinement widened the gap: {gaps:?}");
        assert!(gaps[1] <= 2e-3, "gap {}", gaps[1]);
    }
}
