//! Worst-case expectations over finite scenario sets.
//!
//! Everything here works on a finite [`OutcomeSpace`](scenario::OutcomeSpace):
//! finitely supported measures, scenario families with penalties, capacity
//! seminorms `c_p(X) = max_n E_Qn(|X|^p)^{1/p}`, convex risk measures in dual
//! (penalty) form `rho(X) = max_n (E_Qn(-X) - alpha_n)` together with penalty
//! recovery by conjugation, and a discrete G-expectation for uncertain
//! volatility built on adversarial binomial lattices.
//!
//! Suprema over infinite families become exact finite maxima, so every
//! identity (duality round trips, attainment, canonical-measure null sets,
//! worst-case collapse for convex payoffs) is checkable to floating-point
//! accuracy rather than approximated.
//!
//! All types are immutable after construction and all operations are pure;
//! concurrent reads are safe everywhere.

pub mod capacity;
pub mod gexp;
pub mod risk;
pub mod scenario;

/// Default absolute tolerance for numeric equality tests.
///
/// Every quantity in this crate is a short sum or maximum of `f64` terms, so
/// 1e-12 leaves ample headroom. Operations that compare against zero accept
/// an explicit tolerance where it matters.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Default tolerance on total mass when validating probability measures.
pub const MASS_TOL: f64 = 1e-9;
