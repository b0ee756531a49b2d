//! Finite outcome spaces, finitely supported measures, payoffs and scenario
//! sets, plus the partial order and measure-equivalence relation they induce.
//!
//! A [`ScenarioSet`] is an ordered family of probability measures `{Q_n}`
//! with optional penalties; it stands in for a (possibly non-dominated)
//! family of models. The union of its members' supports — the *charged
//! universe* — is what "almost surely" means at this scale: payoffs are
//! compared, and measures are classified, only on charged outcomes.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::{DEFAULT_TOL, MASS_TOL};

/// Errors from constructing or combining scenario-level objects.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScenarioError {
    #[error("duplicate outcome identifier {0:?}")]
    DuplicateOutcome(String),
    #[error("unknown outcome identifier {0:?}")]
    UnknownOutcome(String),
    #[error("payoff is missing a value for outcome {0:?}; payoffs must be total")]
    MissingValue(String),
    #[error("embedding is missing a point for outcome {0:?}; embeddings must be total")]
    PartialEmbedding(String),
    #[error("embedding for outcome {0:?} mixes point kinds or has inconsistent path shape")]
    EmbeddingShape(String),
    #[error("non-finite value {value} for outcome {outcome:?}")]
    NonFiniteValue { outcome: String, value: f64 },
    #[error("negative weight {weight} for outcome {outcome:?}")]
    NegativeWeight { outcome: String, weight: f64 },
    #[error("operands live on different outcome spaces")]
    SpaceMismatch,
    #[error("exponent p = {0} is out of range; p >= 1 is required")]
    InvalidExponent(f64),
    #[error("mixture needs at least one part")]
    EmptyMixture,
    #[error("mixture weight {weight} at position {index} is not strictly positive")]
    NonPositiveMixtureWeight { index: usize, weight: f64 },
    #[error("mixture weights sum to {0}, expected 1")]
    MixtureNotNormalized(f64),
    #[error("measure {id:?} has total mass {mass}, expected 1")]
    NotProbability { id: String, mass: f64 },
    #[error("scenario set needs at least one member")]
    EmptyScenarioSet,
    #[error("penalty {penalty} of member {index} is negative")]
    NegativePenalty { index: usize, penalty: f64 },
    #[error("every member carries an infinite penalty; at least one must be finite")]
    NoFinitePenalty,
    #[error(
        "measure is not in the dual cone of the scenario set: outcome {0:?} \
         carries weight but no scenario member charges it"
    )]
    NotDominated(String),
}

/// Result alias for scenario-level operations.
pub type Result<T> = std::result::Result<T, ScenarioError>;

/// Optional geometric datum attached to an outcome: a point on the real line
/// or a discrete path (`steps x dims` cumulative coordinates).
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Real(f64),
    Path(Vec<Vec<f64>>),
}

/// A finite universe of outcomes, each optionally embedded as a real number
/// or a discrete path.
///
/// Spaces are shared via [`Arc`]; two measures interoperate when they hold
/// the same space (pointer or structural equality).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpace {
    outcomes: Vec<String>,
    embedding: Option<Vec<Point>>,
}

impl OutcomeSpace {
    /// Builds a space from unique outcome identifiers, without embedding.
    pub fn new<I, S>(outcomes: I) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let outcomes: Vec<String> = outcomes.into_iter().map(Into::into).collect();
        Self::check_unique(&outcomes)?;
        Ok(Arc::new(Self { outcomes, embedding: None }))
    }

    /// Builds a space whose outcomes are embedded on the real line.
    pub fn with_real_embedding<I, S>(outcomes: I, points: Vec<f64>) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let outcomes: Vec<String> = outcomes.into_iter().map(Into::into).collect();
        Self::check_unique(&outcomes)?;
        if points.len() != outcomes.len() {
            let missing = outcomes.get(points.len()).cloned().unwrap_or_default();
            return Err(ScenarioError::PartialEmbedding(missing));
        }
        for (id, &p) in outcomes.iter().zip(&points) {
            if !p.is_finite() {
                return Err(ScenarioError::NonFiniteValue { outcome: id.clone(), value: p });
            }
        }
        let embedding = Some(points.into_iter().map(Point::Real).collect());
        Ok(Arc::new(Self { outcomes, embedding }))
    }

    /// Builds a space whose outcomes are embedded as discrete paths.
    ///
    /// Every path must have the same `steps x dims` shape.
    pub fn with_path_embedding<I, S>(outcomes: I, paths: Vec<Vec<Vec<f64>>>) -> Result<Arc<Self>>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let outcomes: Vec<String> = outcomes.into_iter().map(Into::into).collect();
        Self::check_unique(&outcomes)?;
        if paths.len() != outcomes.len() {
            let missing = outcomes.get(paths.len()).cloned().unwrap_or_default();
            return Err(ScenarioError::PartialEmbedding(missing));
        }
        let shape = paths.first().map(|p| (p.len(), p.first().map_or(0, Vec::len)));
        for (id, path) in outcomes.iter().zip(&paths) {
            let this = (path.len(), path.first().map_or(0, Vec::len));
            if Some(this) != shape || path.iter().any(|row| row.len() != this.1) {
                return Err(ScenarioError::EmbeddingShape(id.clone()));
            }
            for row in path {
                for &v in row {
                    if !v.is_finite() {
                        return Err(ScenarioError::NonFiniteValue {
                            outcome: id.clone(),
                            value: v,
                        });
                    }
                }
            }
        }
        let embedding = Some(paths.into_iter().map(Point::Path).collect());
        Ok(Arc::new(Self { outcomes, embedding }))
    }

    fn check_unique(outcomes: &[String]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in outcomes {
            if !seen.insert(id.as_str()) {
                return Err(ScenarioError::DuplicateOutcome(id.clone()));
            }
        }
        Ok(())
    }

    /// Number of outcomes.
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    /// True when the space has no outcomes.
    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Outcome identifiers, in declaration order.
    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    /// Identifier of the outcome at `index`.
    pub fn id(&self, index: usize) -> &str {
        &self.outcomes[index]
    }

    /// Index of the outcome named `id`, if present.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.outcomes.iter().position(|o| o == id)
    }

    /// Embedded point of the outcome at `index`, if the space is embedded.
    pub fn point(&self, index: usize) -> Option<&Point> {
        self.embedding.as_ref().map(|e| &e[index])
    }

    /// Real coordinates of all outcomes, when the embedding is real-valued.
    pub fn real_points(&self) -> Option<Vec<f64>> {
        let embedding = self.embedding.as_ref()?;
        let mut points = Vec::with_capacity(embedding.len());
        for point in embedding {
            match point {
                Point::Real(x) => points.push(*x),
                Point::Path(_) => return None,
            }
        }
        Some(points)
    }

    /// True when both handles denote the same space.
    pub fn same_space(a: &Arc<OutcomeSpace>, b: &Arc<OutcomeSpace>) -> bool {
        Arc::ptr_eq(a, b) || a == b
    }
}

impl fmt::Display for OutcomeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OutcomeSpace({} outcomes)", self.outcomes.len())
    }
}

/// A finitely supported non-negative measure: one weight per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    space: Arc<OutcomeSpace>,
    weights: Vec<f64>,
}

impl Measure {
    /// Builds a measure from a dense weight vector (one entry per outcome).
    pub fn new(space: Arc<OutcomeSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            let missing = space
                .outcomes()
                .get(weights.len())
                .cloned()
                .unwrap_or_default();
            return Err(ScenarioError::MissingValue(missing));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(ScenarioError::NonFiniteValue {
                    outcome: space.id(i).to_owned(),
                    value: w,
                });
            }
            if w < 0.0 {
                return Err(ScenarioError::NegativeWeight {
                    outcome: space.id(i).to_owned(),
                    weight: w,
                });
            }
        }
        Ok(Self { space, weights })
    }

    /// Builds a measure from `(outcome id, weight)` pairs; absent outcomes get
    /// weight zero.
    pub fn from_weights<'a, I>(space: Arc<OutcomeSpace>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut weights = vec![0.0; space.len()];
        for (id, w) in entries {
            let idx = space
                .index_of(id)
                .ok_or_else(|| ScenarioError::UnknownOutcome(id.to_owned()))?;
            weights[idx] = w;
        }
        Self::new(space, weights)
    }

    /// The Dirac mass at `id`.
    pub fn dirac(space: Arc<OutcomeSpace>, id: &str) -> Result<Self> {
        let idx = space
            .index_of(id)
            .ok_or_else(|| ScenarioError::UnknownOutcome(id.to_owned()))?;
        let mut weights = vec![0.0; space.len()];
        weights[idx] = 1.0;
        Ok(Self { space, weights })
    }

    /// The uniform probability measure.
    pub fn uniform(space: Arc<OutcomeSpace>) -> Result<Self> {
        if space.is_empty() {
            return Err(ScenarioError::EmptyScenarioSet);
        }
        let w = 1.0 / space.len() as f64;
        let weights = vec![w; space.len()];
        Ok(Self { space, weights })
    }

    /// The shared outcome space.
    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    /// Dense weights, one per outcome.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of the outcome at `index`.
    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    /// Total mass.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Indices of outcomes with strictly positive weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
    }

    /// True when the total mass is 1 within `tol`.
    pub fn is_probability(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    /// Rescales all weights by `factor >= 0`.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(ScenarioError::NegativeWeight {
                outcome: String::new(),
                weight: factor,
            });
        }
        let weights = self.weights.iter().map(|w| w * factor).collect();
        Ok(Self { space: Arc::clone(&self.space), weights })
    }
}

/// A total real-valued function on an outcome space.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    space: Arc<OutcomeSpace>,
    values: Vec<f64>,
}

impl Payoff {
    /// Builds a payoff from a dense value vector (one entry per outcome).
    pub fn new(space: Arc<OutcomeSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            let missing = space
                .outcomes()
                .get(values.len())
                .cloned()
                .unwrap_or_default();
            return Err(ScenarioError::MissingValue(missing));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ScenarioError::NonFiniteValue {
                    outcome: space.id(i).to_owned(),
                    value: v,
                });
            }
        }
        Ok(Self { space, values })
    }

    /// Builds a payoff from `(outcome id, value)` pairs.
    ///
    /// Payoffs are total maps: every outcome of the space must appear.
    pub fn from_values<'a, I>(space: Arc<OutcomeSpace>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut values = vec![f64::NAN; space.len()];
        let mut filled = vec![false; space.len()];
        for (id, v) in entries {
            let idx = space
                .index_of(id)
                .ok_or_else(|| ScenarioError::UnknownOutcome(id.to_owned()))?;
            values[idx] = v;
            filled[idx] = true;
        }
        if let Some(idx) = filled.iter().position(|&f| !f) {
            return Err(ScenarioError::MissingValue(space.id(idx).to_owned()));
        }
        Self::new(space, values)
    }

    /// The constant payoff `c`.
    pub fn constant(space: Arc<OutcomeSpace>, c: f64) -> Result<Self> {
        let values = vec![c; space.len()];
        Self::new(space, values)
    }

    /// The indicator of the outcome named `id`.
    pub fn indicator(space: Arc<OutcomeSpace>, id: &str) -> Result<Self> {
        let idx = space
            .index_of(id)
            .ok_or_else(|| ScenarioError::UnknownOutcome(id.to_owned()))?;
        let mut values = vec![0.0; space.len()];
        values[idx] = 1.0;
        Self::new(space, values)
    }

    /// The shared outcome space.
    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    /// Dense values, one per outcome.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the outcome with index `index`.
    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Pointwise absolute value.
    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    /// Pointwise negation.
    pub fn neg(&self) -> Self {
        self.map(|v| -v)
    }

    /// Pointwise scaling by `factor`.
    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Pointwise shift by the constant `a`.
    pub fn shift(&self, a: f64) -> Self {
        self.map(|v| v + a)
    }

    /// Applies `f` to every value. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Self { space: Arc::clone(&self.space), values }
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Payoff) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    /// Pointwise difference.
    pub fn sub(&self, other: &Payoff) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// Pointwise combination of two payoffs on the same space.
    pub fn zip(&self, other: &Payoff, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !OutcomeSpace::same_space(&self.space, &other.space) {
            return Err(ScenarioError::SpaceMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self { space: Arc::clone(&self.space), values })
    }
}

/// One member of a scenario set: a probability measure plus a penalty in
/// `[0, +inf]` (`f64::INFINITY` marks an excluded member).
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMember {
    pub measure: Measure,
    pub penalty: f64,
}

/// An ordered family of probability measures with penalties on one space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    space: Arc<OutcomeSpace>,
    members: Vec<ScenarioMember>,
}

impl ScenarioSet {
    /// Builds a scenario set, validating each member against [`MASS_TOL`].
    pub fn new(members: Vec<(Measure, f64)>) -> Result<Self> {
        Self::with_mass_tol(members, MASS_TOL)
    }

    /// Builds a scenario set with an explicit probability-mass tolerance.
    pub fn with_mass_tol(members: Vec<(Measure, f64)>, mass_tol: f64) -> Result<Self> {
        let space = members
            .first()
            .map(|(m, _)| Arc::clone(m.space()))
            .ok_or(ScenarioError::EmptyScenarioSet)?;
        let mut out = Vec::with_capacity(members.len());
        let mut any_finite = false;
        for (index, (measure, penalty)) in members.into_iter().enumerate() {
            if !OutcomeSpace::same_space(&space, measure.space()) {
                return Err(ScenarioError::SpaceMismatch);
            }
            if !measure.is_probability(mass_tol) {
                return Err(ScenarioError::NotProbability {
                    id: format!("member {index}"),
                    mass: measure.mass(),
                });
            }
            if penalty.is_nan() || penalty < 0.0 {
                return Err(ScenarioError::NegativePenalty { index, penalty });
            }
            any_finite |= penalty.is_finite();
            out.push(ScenarioMember { measure, penalty });
        }
        if !any_finite {
            return Err(ScenarioError::NoFinitePenalty);
        }
        Ok(Self { space, members: out })
    }

    /// Builds a sublinear family: every penalty is zero.
    pub fn sublinear(measures: Vec<Measure>) -> Result<Self> {
        Self::new(measures.into_iter().map(|m| (m, 0.0)).collect())
    }

    /// The shared outcome space.
    pub fn space(&self) -> &Arc<OutcomeSpace> {
        &self.space
    }

    /// Members in declaration order.
    pub fn members(&self) -> &[ScenarioMember] {
        &self.members
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// True when the set has no members (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Indices of members with finite penalty.
    pub fn finite_penalty_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| m.penalty.is_finite())
            .map(|(i, _)| i)
    }

    /// Outcome indices charged by at least one member (the charged universe).
    pub fn charged_outcomes(&self) -> Vec<usize> {
        let mut charged = vec![false; self.space.len()];
        for member in &self.members {
            for idx in member.measure.support() {
                charged[idx] = true;
            }
        }
        charged
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-outcome maximum weight over the members, `w*(omega) = max_n Q_n(omega)`.
    pub fn max_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.space.len()];
        for member in &self.members {
            for (i, &q) in member.measure.weights().iter().enumerate() {
                if q > w[i] {
                    w[i] = q;
                }
            }
        }
        w
    }
}

fn check_same_space(a: &Arc<OutcomeSpace>, b: &Arc<OutcomeSpace>) -> Result<()> {
    if OutcomeSpace::same_space(a, b) {
        Ok(())
    } else {
        Err(ScenarioError::SpaceMismatch)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(ScenarioError::InvalidExponent(p))
    }
}

/// `E_Q(|X|^p)^{1/p}` as an exact finite sum.
pub fn expectation(q: &Measure, x: &Payoff, p: f64) -> Result<f64> {
    check_same_space(q.space(), x.space())?;
    check_exponent(p)?;
    let mut sum = 0.0;
    if p == 1.0 {
        for (w, v) in q.weights().iter().zip(x.values()) {
            sum += w * v.abs();
        }
        Ok(sum)
    } else {
        for (w, v) in q.weights().iter().zip(x.values()) {
            sum += w * v.abs().powf(p);
        }
        Ok(sum.powf(1.0 / p))
    }
}

/// The signed expectation `E_Q(X)`.
pub fn expectation_signed(q: &Measure, x: &Payoff) -> Result<f64> {
    check_same_space(q.space(), x.space())?;
    let mut sum = 0.0;
    for (w, v) in q.weights().iter().zip(x.values()) {
        sum += w * v;
    }
    Ok(sum)
}

/// Pointwise convex combination `sum_k weight_k * Q_k` of measures.
///
/// Weights must be strictly positive; the output mass is the weighted sum of
/// the input masses.
pub fn mixture(parts: &[(f64, &Measure)]) -> Result<Measure> {
    let (first_weight, first) = parts.first().ok_or(ScenarioError::EmptyMixture)?;
    let space = Arc::clone(first.space());
    let _ = first_weight;
    let mut weights = vec![0.0; space.len()];
    for (index, (w, q)) in parts.iter().enumerate() {
        if !w.is_finite() || *w <= 0.0 {
            return Err(ScenarioError::NonPositiveMixtureWeight { index, weight: *w });
        }
        check_same_space(&space, q.space())?;
        for (slot, &qi) in weights.iter_mut().zip(q.weights()) {
            *slot += w * qi;
        }
    }
    Measure::new(space, weights)
}

/// [`mixture`] with the additional check that the weights sum to one.
pub fn mixture_probability(parts: &[(f64, &Measure)]) -> Result<Measure> {
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    if (total - 1.0).abs() > DEFAULT_TOL {
        return Err(ScenarioError::MixtureNotNormalized(total));
    }
    mixture(parts)
}

/// True when `X >= 0` on the charged universe of `s` — the finite reading of
/// non-negativity almost surely under every scenario member.
pub fn is_nonneg(x: &Payoff, s: &ScenarioSet) -> Result<bool> {
    check_same_space(x.space(), s.space())?;
    Ok(s.charged_outcomes().into_iter().all(|i| x.value(i) >= 0.0))
}

/// Checks that `mu`'s support lies inside the charged universe, returning the
/// offending outcome otherwise.
fn check_dominated(mu: &Measure, charged: &[bool]) -> Result<()> {
    for idx in mu.support() {
        if !charged[idx] {
            return Err(ScenarioError::NotDominated(mu.space().id(idx).to_owned()));
        }
    }
    Ok(())
}

/// Whether `mu` and `nu` annihilate the same non-negative payoffs relative to
/// the capacity of `s` — at finite scale, whether they share a support inside
/// the charged universe.
///
/// Both measures must be dominated: their supports must lie in the union of
/// the members' supports. The exponent `p` is validated for interface parity
/// but null sets do not depend on it.
pub fn capacity_equivalent(mu: &Measure, nu: &Measure, s: &ScenarioSet, p: f64) -> Result<bool> {
    check_same_space(mu.space(), s.space())?;
    check_same_space(nu.space(), s.space())?;
    check_exponent(p)?;
    let mut charged = vec![false; s.space().len()];
    for idx in s.charged_outcomes() {
        charged[idx] = true;
    }
    check_dominated(mu, &charged)?;
    check_dominated(nu, &charged)?;
    let sup_mu: BTreeSet<usize> = mu.support().collect();
    let sup_nu: BTreeSet<usize> = nu.support().collect();
    Ok(sup_mu == sup_nu)
}

/// The dominance constant `K = sum_omega mu(omega) / w*(omega)` over the
/// charged universe, with `w*(omega) = max_n Q_n(omega)`.
///
/// On a finite space, `|mu(f)| <= K * c_1(f)` holds for every payoff with this
/// `K`, so membership in the dual cone is quantitative, not just boolean.
pub fn dominance_constant(mu: &Measure, s: &ScenarioSet) -> Result<f64> {
    check_same_space(mu.space(), s.space())?;
    let mut charged = vec![false; s.space().len()];
    for idx in s.charged_outcomes() {
        charged[idx] = true;
    }
    check_dominated(mu, &charged)?;
    let w_star = s.max_weights();
    let mut k = 0.0;
    for idx in mu.support() {
        k += mu.weight(idx) / w_star[idx];
    }
    Ok(k)
}
