//! Discrete G-expectation for uncertain volatility.
//!
//! A [`VolLattice`] is a non-recombining binomial tree: at every node the
//! coordinate process moves by `±sigma_i * sqrt(dt)` per dimension with
//! probability 1/2, and an adversary picks `sigma_i` from a finite grid
//! inside `[sigma_low_i, sigma_high_i]` after seeing the path so far. The
//! worst-case expectation over all adapted volatility strategies is computed
//! exactly by backward induction:
//!
//! ```text
//! V_K = X,   V_k = max_sigma  mean over signs of V_{k+1}
//! ```
//!
//! Every strategy induces a [`PathMeasure`] under which the process is an
//! exact martingale with orthogonal components and per-path quadratic
//! variation between `sigma_low^2 T` and `sigma_high^2 T`;
//! [`verify_scenario`] checks all three properties numerically.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::scenario::{Measure, OutcomeSpace, Payoff, Point, ScenarioError, ScenarioSet};

/// Errors from lattice construction and evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GexpError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("lattice parameters invalid: {0}")]
    BadParams(String),
    #[error("size guard exceeded: dims * steps = {0} > 24")]
    SizeGuard(usize),
    #[error("terminal path space has {0} paths, too many to materialize")]
    SpaceTooLarge(u128),
    #[error("payoff is not total on the lattice's terminal paths")]
    PayoffNotTotal,
    #[error("foreign measure: {0}")]
    ForeignMeasure(String),
}

/// Result alias for lattice operations.
pub type Result<T> = std::result::Result<T, GexpError>;

/// Parameters of an adversarial-volatility lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeParams {
    /// Number of time steps, at least 1.
    pub steps: usize,
    /// Horizon `T > 0`; the step is `dt = T / steps`.
    pub horizon: f64,
    /// Number of coordinates, 1 or 2.
    pub dims: usize,
    /// Per-dimension lower volatility bound, strictly positive.
    pub sigma_low: Vec<f64>,
    /// Per-dimension upper volatility bound, at least the lower one.
    pub sigma_high: Vec<f64>,
    /// Per-dimension volatility grid; must contain both bounds and stay
    /// inside them. Sorted and deduplicated on construction.
    pub sigma_grid: Vec<Vec<f64>>,
}

impl LatticeParams {
    /// Two-point grids `{sigma_low, sigma_high}` in every dimension.
    pub fn two_point(steps: usize, horizon: f64, lows: &[f64], highs: &[f64]) -> Self {
        let grid = lows
            .iter()
            .zip(highs)
            .map(|(&lo, &hi)| if lo == hi { vec![lo] } else { vec![lo, hi] })
            .collect();
        Self {
            steps,
            horizon,
            dims: lows.len(),
            sigma_low: lows.to_vec(),
            sigma_high: highs.to_vec(),
            sigma_grid: grid,
        }
    }
}

/// A built lattice: validated parameters plus derived step size.
#[derive(Debug, Clone, PartialEq)]
pub struct VolLattice {
    params: LatticeParams,
    dt: f64,
    sqrt_dt: f64,
}

/// Validates the parameters and derives the lattice.
///
/// The size guard `dims * steps <= 24` keeps exact path enumeration within
/// reach for every downstream operation.
pub fn build_lattice(params: LatticeParams) -> Result<VolLattice> {
    let mut params = params;
    if params.steps == 0 {
        return Err(GexpError::BadParams("steps must be at least 1".into()));
    }
    if !(params.horizon > 0.0) || !params.horizon.is_finite() {
        return Err(GexpError::BadParams(format!(
            "horizon {} must be positive",
            params.horizon
        )));
    }
    if params.dims == 0 || params.dims > 2 {
        return Err(GexpError::BadParams(format!(
            "dims {} must be 1 or 2",
            params.dims
        )));
    }
    if params.sigma_low.len() != params.dims
        || params.sigma_high.len() != params.dims
        || params.sigma_grid.len() != params.dims
    {
        return Err(GexpError::BadParams(
            "per-dimension parameter lengths must match dims".into(),
        ));
    }
    if params.dims * params.steps > 24 {
        return Err(GexpError::SizeGuard(params.dims * params.steps));
    }
    for dim in 0..params.dims {
        let lo = params.sigma_low[dim];
        let hi = params.sigma_high[dim];
        if !(lo > 0.0 && lo <= hi) || !hi.is_finite() {
            return Err(GexpError::BadParams(format!(
                "volatility bounds [{lo}, {hi}] invalid in dimension {dim}"
            )));
        }
        let grid = &mut params.sigma_grid[dim];
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        if grid.first() != Some(&lo) || grid.last() != Some(&hi) {
            return Err(GexpError::BadParams(format!(
                "grid in dimension {dim} must contain both bounds"
            )));
        }
        if grid.iter().any(|&s| s < lo || s > hi) {
            return Err(GexpError::BadParams(format!(
                "grid in dimension {dim} exits the volatility bounds"
            )));
        }
    }
    let dt = params.horizon / params.steps as f64;
    Ok(VolLattice { dt, sqrt_dt: dt.sqrt(), params })
}

/// One realized path through the lattice, offered to payoffs.
///
/// Coordinates are cumulative: `value(dim, k)` is the process in dimension
/// `dim` after step `k` (1-based); the process starts at 0.
#[derive(Debug, Clone, Copy)]
pub struct PathSlice<'a> {
    pub dims: usize,
    pub steps: usize,
    pub dt: f64,
    coords: &'a [f64],
}

impl<'a> PathSlice<'a> {
    /// Process value in `dim` after `step` steps; `step = 0` gives 0.
    pub fn value(&self, dim: usize, step: usize) -> f64 {
        if step == 0 {
            0.0
        } else {
            self.coords[(step - 1) * self.dims + dim]
        }
    }

    /// Terminal value in `dim`.
    pub fn terminal(&self, dim: usize) -> f64 {
        self.value(dim, self.steps)
    }

    /// Increment over step `k` (1-based) in `dim`.
    pub fn increment(&self, dim: usize, step: usize) -> f64 {
        self.value(dim, step) - self.value(dim, step - 1)
    }

    /// Row-major cumulative coordinates (`steps x dims`).
    pub fn coords(&self) -> &'a [f64] {
        self.coords
    }
}

/// A payoff defined on full lattice paths. Returning NaN marks the payoff as
/// undefined on that path and surfaces as [`GexpError::PayoffNotTotal`].
pub trait PathPayoff {
    fn value(&self, path: &PathSlice<'_>) -> f64;
}

impl<F> PathPayoff for F
where
    F: Fn(&PathSlice<'_>) -> f64,
{
    fn value(&self, path: &PathSlice<'_>) -> f64 {
        self(path)
    }
}

/// A payoff backed by a table over materialized terminal paths, keyed by the
/// exact bit pattern of the path coordinates.
#[derive(Debug, Clone)]
pub struct TablePayoff {
    dims: usize,
    steps: usize,
    table: BTreeMap<Vec<u64>, f64>,
}

impl TablePayoff {
    /// Reads the table from a payoff over a path-embedded outcome space.
    pub fn from_payoff(payoff: &Payoff) -> Result<Self> {
        let space = payoff.space();
        let mut table = BTreeMap::new();
        let mut dims = 0;
        let mut steps = 0;
        for (index, _id) in space.outcomes().iter().enumerate() {
            match space.point(index) {
                Some(Point::Path(rows)) => {
                    steps = rows.len();
                    dims = rows.first().map_or(0, Vec::len);
                    let key = path_key_rows(rows);
                    table.insert(key, payoff.value(index));
                }
                _ => {
                    return Err(GexpError::ForeignMeasure(
                        "payoff space is not path-embedded".into(),
                    ))
                }
            }
        }
        Ok(Self { dims, steps, table })
    }
}

impl PathPayoff for TablePayoff {
    fn value(&self, path: &PathSlice<'_>) -> f64 {
        if path.dims != self.dims || path.steps != self.steps {
            return f64::NAN;
        }
        let key: Vec<u64> = path.coords().iter().map(|c| c.to_bits()).collect();
        self.table.get(&key).copied().unwrap_or(f64::NAN)
    }
}

fn path_key_rows(rows: &[Vec<f64>]) -> Vec<u64> {
    rows.iter()
        .flat_map(|row| row.iter().map(|c| c.to_bits()))
        .collect()
}

/// An adapted volatility strategy: a grid choice per dimension at every node
/// of the sign tree. `by_depth[k]` holds `grid_combos^0 ..` no — it holds one
/// entry per sign history of length `k`, indexed by the history bits
/// (step-major, `dims` bits per step).
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    /// `by_depth[k][history]` is the per-dimension sigma vector chosen at
    /// depth `k` after observing `history`.
    pub by_depth: Vec<Vec<Vec<f64>>>,
}

/// One terminal path with its weight under a strategy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAtom {
    pub weight: f64,
    /// Sign mask per step: bit `i` set means dimension `i` moved down.
    pub signs: Vec<u32>,
    /// Volatility used per step and dimension.
    pub sigmas: Vec<Vec<f64>>,
    /// Cumulative coordinates, row-major `steps x dims`.
    pub coords: Vec<f64>,
}

/// A probability measure on terminal paths, with the generating strategy
/// when there is a single one (mixtures drop it).
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    pub dims: usize,
    pub steps: usize,
    pub dt: f64,
    pub atoms: Vec<PathAtom>,
    pub strategy: Option<Strategy>,
}

impl PathMeasure {
    /// Builds a measure directly from atoms (shape-checked; weights must be
    /// non-negative and sum to 1within tolerance).
    pub fn from_atoms(dims: usize, steps: usize, dt: f64, atoms: Vec<PathAtom>) -> Result<Self> {
        let mut mass = 0.0;
        for atom in &atoms {
            if atom.signs.len() != steps
                || atom.sigmas.len() != steps
                || atom.coords.len() != steps * dims
                || atom.sigmas.iter().any(|s| s.len() != dims)
            {
                return Err(GexpError::ForeignMeasure("atom shape mismatch".into()));
            }
            if atom.weight < 0.0 {
                return Err(GexpError::ForeignMeasure("negative atom weight".into()));
            }
            mass += atom.weight;
        }
        if (mass - 1.0).abs() > crate::MASS_TOL {
            return Err(GexpError::ForeignMeasure(format!(
                "atom weights sum to {mass}, expected 1"
            )));
        }
        Ok(Self { dims, steps, dt, atoms, strategy: None })
    }

    /// Expected payoff under this measure, by pairwise summation over atoms.
    pub fn expectation(&self, payoff: &dyn PathPayoff) -> Result<f64> {
        let terms: Vec<f64> = self
            .atoms
            .iter()
            .map(|atom| {
                let slice = PathSlice {
                    dims: self.dims,
                    steps: self.steps,
                    dt: self.dt,
                    coords: &atom.coords,
                };
                atom.weight * payoff.value(&slice)
            })
            .collect();
        if terms.iter().any(|t| t.is_nan()) {
            return Err(GexpError::PayoffNotTotal);
        }
        Ok(pairwise_sum(&terms))
    }

    /// Convex combination of path measures of the same shape.
    pub fn mix(parts: &[(f64, &PathMeasure)]) -> Result<PathMeasure> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| GexpError::ForeignMeasure("empty mixture".into()))?;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > crate::MASS_TOL {
            return Err(GexpError::ForeignMeasure(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let mut atoms = Vec::new();
        for (w, pm) in parts {
            if pm.dims != first.dims || pm.steps != first.steps || pm.dt != first.dt {
                return Err(GexpError::ForeignMeasure("mixture shape mismatch".into()));
            }
            if !(*w > 0.0) {
                return Err(GexpError::ForeignMeasure("non-positive mixture weight".into()));
            }
            for atom in &pm.atoms {
                let mut scaled = atom.clone();
                scaled.weight *= w;
                atoms.push(scaled);
            }
        }
        Ok(PathMeasure {
            dims: first.dims,
            steps: first.steps,
            dt: first.dt,
            atoms,
            strategy: None,
        })
    }
}

fn pairwise_sum(terms: &[f64]) -> f64 {
    match terms.len() {
        0 => 0.0,
        1 => terms[0],
        n => {
            let (a, b) = terms.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

impl VolLattice {
    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.params.steps
    }

    pub fn dims(&self) -> usize {
        self.params.dims
    }

    /// Sigma combinations per node in ascending lexicographic order (the
    /// tie-break order everywhere). The second slot is unused when dims = 1.
    fn sigma_combos(&self) -> Vec<[f64; 2]> {
        if self.params.dims == 1 {
            self.params.sigma_grid[0].iter().map(|&s| [s, 0.0]).collect()
        } else {
            let mut combos = Vec::new();
            for &s0 in &self.params.sigma_grid[0] {
                for &s1 in &self.params.sigma_grid[1] {
                    combos.push([s0, s1]);
                }
            }
            combos
        }
    }

    /// Number of sign-tree nodes (one strategy choice each).
    pub fn node_count(&self) -> u128 {
        let branches = 1u128 << self.params.dims;
        let mut total = 0u128;
        let mut level = 1u128;
        for _ in 0..self.params.steps {
            total += level;
            level *= branches;
        }
        total
    }

    /// Number of adapted strategies, `grid_combos ^ node_count`, when it
    /// fits in a `u128`.
    pub fn strategy_count(&self) -> Option<u128> {
        let combos = self
            .params
            .sigma_grid
            .iter()
            .fold(1u128, |acc, g| acc * g.len() as u128);
        let nodes = self.node_count();
        let mut total = 1u128;
        for _ in 0..nodes {
            total = total.checked_mul(combos)?;
        }
        Some(total)
    }

    /// Number of distinct terminal paths over all strategies.
    pub fn path_space_size(&self) -> u128 {
        let mut per_step = 1u128;
        for grid in &self.params.sigma_grid {
            per_step *= 2 * grid.len() as u128;
        }
        let mut total = 1u128;
        for _ in 0..self.params.steps {
            total = total.saturating_mul(per_step);
        }
        total
    }

    /// The worst-case expectation `sup` over adapted strategies, by backward
    /// induction. Exact: the adversary observes the whole path prefix.
    pub fn gexp(&self, payoff: &dyn PathPayoff) -> Result<f64> {
        let combos = self.sigma_combos();
        let mut coords = vec![0.0; self.params.steps * self.params.dims];
        let value = self.dp(payoff, &combos, 0, &mut coords)?;
        Ok(value)
    }

    fn dp(
        &self,
        payoff: &dyn PathPayoff,
        combos: &[[f64; 2]],
        step: usize,
        coords: &mut [f64],
    ) -> Result<f64> {
        let dims = self.params.dims;
        if step == self.params.steps {
            let slice = PathSlice {
                dims,
                steps: self.params.steps,
                dt: self.dt,
                coords,
            };
            let v = payoff.value(&slice);
            if v.is_nan() {
                return Err(GexpError::PayoffNotTotal);
            }
            return Ok(v);
        }
        let mut prev = [0.0f64; 2];
        if step > 0 {
            prev[..dims].copy_from_slice(&coords[(step - 1) * dims..step * dims]);
        }
        let norm = 1.0 / (1u32 << dims) as f64;
        let mut best = f64::NEG_INFINITY;
        let last = step + 1 == self.params.steps;
        for combo in combos {
            let mut sum = 0.0;
            for mask in 0..(1u32 << dims) {
                for i in 0..dims {
                    let sign = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                    coords[step * dims + i] = prev[i] + sign * combo[i] * self.sqrt_dt;
                }
                if last {
                    let slice = PathSlice {
                        dims,
                        steps: self.params.steps,
                        dt: self.dt,
                        coords,
                    };
                    let v = payoff.value(&slice);
                    if v.is_nan() {
                        return Err(GexpError::PayoffNotTotal);
                    }
                    sum += v;
                } else {
                    sum += self.dp(payoff, combos, step + 1, coords)?;
                }
            }
            let avg = sum * norm;
            if avg > best {
                best = avg;
            }
        }
        Ok(best)
    }

    /// The strategy attaining [`Self::gexp`], ties resolved toward the
    /// lexicographically smallest sigma vector, together with its measure.
    pub fn worst_measure(&self, payoff: &dyn PathPayoff) -> Result<PathMeasure> {
        let combos = self.sigma_combos();
        let mut by_depth: Vec<Vec<Vec<f64>>> = (0..self.params.steps)
            .map(|k| vec![Vec::new(); 1usize << (self.params.dims * k)])
            .collect();
        let mut coords = vec![0.0; self.params.steps * self.params.dims];
        self.extract(payoff, &combos, 0, 0, &mut coords, &mut by_depth)?;
        let strategy = Strategy { by_depth };
        self.measure_for_strategy(&strategy)
    }

    fn extract(
        &self,
        payoff: &dyn PathPayoff,
        combos: &[[f64; 2]],
        step: usize,
        node: usize,
        coords: &mut [f64],
        by_depth: &mut [Vec<Vec<f64>>],
    ) -> Result<()> {
        if step == self.params.steps {
            return Ok(());
        }
        let dims = self.params.dims;
        let mut prev = [0.0f64; 2];
        if step > 0 {
            prev[..dims].copy_from_slice(&coords[(step - 1) * dims..step * dims]);
        }
        let norm = 1.0 / (1u32 << dims) as f64;
        let mut best = f64::NEG_INFINITY;
        let mut best_combo = 0usize;
        for (ci, combo) in combos.iter().enumerate() {
            let mut sum = 0.0;
            for mask in 0..(1u32 << dims) {
                for i in 0..dims {
                    let sign = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                    coords[step * dims + i] = prev[i] + sign * combo[i] * self.sqrt_dt;
                }
                sum += self.dp(payoff, combos, step + 1, coords)?;
            }
            let avg = sum * norm;
            if avg > best {
                best = avg;
                best_combo = ci;
            }
        }
        by_depth[step][node] = combos[best_combo][..dims].to_vec();
        // Recurse along the chosen strategy's own sub-lattice.
        for mask in 0..(1u32 << dims) {
            for i in 0..dims {
                let sign = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                coords[step * dims + i] = prev[i] + sign * combos[best_combo][i] * self.sqrt_dt;
            }
            let child = (node << dims) | mask as usize;
            self.extract(payoff, combos, step + 1, child, coords, by_depth)?;
        }
        Ok(())
    }

    /// Materializes the probability measure induced by an adapted strategy:
    /// `2^(dims * steps)` equally weighted sign paths.
    pub fn measure_for_strategy(&self, strategy: &Strategy) -> Result<PathMeasure> {
        let dims = self.params.dims;
        let steps = self.params.steps;
        if strategy.by_depth.len() != steps
            || strategy
                .by_depth
                .iter()
                .enumerate()
                .any(|(k, level)| level.len() != 1usize << (dims * k))
        {
            return Err(GexpError::ForeignMeasure(
                "strategy is not total on the lattice's sign tree".into(),
            ));
        }
        let n_paths = 1usize << (dims * steps);
        let weight = 1.0 / n_paths as f64;
        let mut atoms = Vec::with_capacity(n_paths);
        for path_bits in 0..n_paths {
            let mut signs = Vec::with_capacity(steps);
            let mut sigmas = Vec::with_capacity(steps);
            let mut coords = vec![0.0; steps * dims];
            let mut node = 0usize;
            for step in 0..steps {
                let mask = (path_bits >> (dims * step)) as u32 & ((1u32 << dims) - 1);
                let sigma = &strategy.by_depth[step][node];
                if sigma.len() != dims {
                    return Err(GexpError::ForeignMeasure(
                        "strategy is not total on the lattice's sign tree".into(),
                    ));
                }
                for i in 0..dims {
                    let sign = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                    let prev = if step == 0 { 0.0 } else { coords[(step - 1) * dims + i] };
                    coords[step * dims + i] = prev + sign * sigma[i] * self.sqrt_dt;
                }
                signs.push(mask);
                sigmas.push(sigma.clone());
                node = (node << dims) | mask as usize;
            }
            atoms.push(PathAtom { weight, signs, sigmas, coords });
        }
        Ok(PathMeasure {
            dims,
            steps,
            dt: self.dt,
            atoms,
            strategy: Some(strategy.clone()),
        })
    }

    /// Iterates over every adapted strategy in deterministic order. The
    /// count is `grid_combos ^ node_count`; callers guard the size.
    pub fn strategies(&self) -> StrategyIter<'_> {
        let combos = self.sigma_combos();
        let nodes: usize = (0..self.params.steps)
            .map(|k| 1usize << (self.params.dims * k))
            .sum();
        StrategyIter {
            lattice: self,
            combos,
            state: vec![0; nodes],
            done: false,
        }
    }

    /// Expected payoff under an adapted strategy, without materializing the
    /// measure: walks the `2^(dims * steps)` sign paths directly.
    pub fn strategy_expectation(
        &self,
        strategy: &Strategy,
        payoff: &dyn PathPayoff,
    ) -> Result<f64> {
        let dims = self.params.dims;
        let steps = self.params.steps;
        if strategy.by_depth.len() != steps
            || strategy
                .by_depth
                .iter()
                .enumerate()
                .any(|(k, level)| level.len() != 1usize << (dims * k))
        {
            return Err(GexpError::ForeignMeasure(
                "strategy is not total on the lattice's sign tree".into(),
            ));
        }
        let n_paths = 1usize << (dims * steps);
        let weight = 1.0 / n_paths as f64;
        let mut coords = vec![0.0; steps * dims];
        let mut terms = Vec::with_capacity(n_paths);
        for path_bits in 0..n_paths {
            let mut node = 0usize;
            for step in 0..steps {
                let mask = (path_bits >> (dims * step)) as u32 & ((1u32 << dims) - 1);
                let sigma = &strategy.by_depth[step][node];
                for i in 0..dims {
                    let sign = if mask >> i & 1 == 0 { 1.0 } else { -1.0 };
                    let prev = if step == 0 { 0.0 } else { coords[(step - 1) * dims + i] };
                    coords[step * dims + i] = prev + sign * sigma[i] * self.sqrt_dt;
                }
                node = (node << dims) | mask as usize;
            }
            let slice = PathSlice { dims, steps, dt: self.dt, coords: &coords };
            let v = payoff.value(&slice);
            if v.is_nan() {
                return Err(GexpError::PayoffNotTotal);
            }
            terms.push(weight * v);
        }
        Ok(pairwise_sum(&terms))
    }

    /// Materializes the full terminal path space (all sign and grid choices)
    /// as a path-embedded outcome space.
    pub fn terminal_space(&self) -> Result<Arc<OutcomeSpace>> {
        let size = self.path_space_size();
        if size > 1 << 16 {
            return Err(GexpError::SpaceTooLarge(size));
        }
        let dims = self.params.dims;
        let steps = self.params.steps;
        // Per step and dimension the increment ranges over +-sigma*sqrt(dt).
        let mut step_moves: Vec<Vec<f64>> = Vec::new();
        for dim in 0..dims {
            let mut moves = Vec::new();
            for &sigma in self.params.sigma_grid[dim].iter().rev() {
                moves.push(-sigma * self.sqrt_dt);
            }
            for &sigma in &self.params.sigma_grid[dim] {
                moves.push(sigma * self.sqrt_dt);
            }
            step_moves.push(moves);
        }
        let mut paths: Vec<Vec<f64>> = vec![vec![]];
        for _step in 0..steps {
            let mut next = Vec::new();
            for path in &paths {
                let mut extensions: Vec<Vec<f64>> = vec![path.clone()];
                for moves in step_moves.iter().take(dims) {
                    let mut grown = Vec::new();
                    for ext in &extensions {
                        for &mv in moves {
                            let mut e = ext.clone();
                            e.push(mv);
                            grown.push(e);
                        }
                    }
                    extensions = grown;
                }
                next.extend(extensions);
            }
            paths = next;
        }
        let mut ids = Vec::with_capacity(paths.len());
        let mut embedded = Vec::with_capacity(paths.len());
        for (index, increments) in paths.iter().enumerate() {
            ids.push(format!("p{index}"));
            let mut rows = Vec::with_capacity(steps);
            let mut level = vec![0.0; dims];
            for step in 0..steps {
                for (i, lv) in level.iter_mut().enumerate() {
                    *lv += increments[step * dims + i];
                }
                rows.push(level.clone());
            }
            embedded.push(rows);
        }
        OutcomeSpace::with_path_embedding(ids, embedded).map_err(GexpError::Scenario)
    }

    /// Evaluates a path payoff on every outcome of a path-embedded space.
    pub fn payoff_on_space(
        &self,
        space: &Arc<OutcomeSpace>,
        payoff: &dyn PathPayoff,
    ) -> Result<Payoff> {
        let mut values = Vec::with_capacity(space.len());
        for index in 0..space.len() {
            match space.point(index) {
                Some(Point::Path(rows)) => {
                    let coords: Vec<f64> =
                        rows.iter().flat_map(|row| row.iter().copied()).collect();
                    let slice = PathSlice {
                        dims: self.params.dims,
                        steps: self.params.steps,
                        dt: self.dt,
                        coords: &coords,
                    };
                    let v = payoff.value(&slice);
                    if v.is_nan() {
                        return Err(GexpError::PayoffNotTotal);
                    }
                    values.push(v);
                }
                _ => {
                    return Err(GexpError::ForeignMeasure(
                        "space is not path-embedded".into(),
                    ))
                }
            }
        }
        Payoff::new(Arc::clone(space), values).map_err(GexpError::Scenario)
    }
}

/// Lazy odometer over all adapted strategies.
pub struct StrategyIter<'a> {
    lattice: &'a VolLattice,
    combos: Vec<[f64; 2]>,
    state: Vec<usize>,
    done: bool,
}

impl Iterator for StrategyIter<'_> {
    type Item = Strategy;

    fn next(&mut self) -> Option<Strategy> {
        if self.done {
            return None;
        }
        let dims = self.lattice.params.dims;
        let steps = self.lattice.params.steps;
        let mut by_depth = Vec::with_capacity(steps);
        let mut cursor = 0;
        for k in 0..steps {
            let width = 1usize << (dims * k);
            let level: Vec<Vec<f64>> = (0..width)
                .map(|n| self.combos[self.state[cursor + n]][..dims].to_vec())
                .collect();
            cursor += width;
            by_depth.push(level);
        }
        // Advance the odometer.
        let base = self.combos.len();
        let mut i = 0;
        loop {
            if i == self.state.len() {
                self.done = true;
                break;
            }
            self.state[i] += 1;
            if self.state[i] < base {
                break;
            }
            self.state[i] = 0;
            i += 1;
        }
        Some(Strategy { by_depth })
    }
}

/// Report of martingale, orthogonality and quadratic-variation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioCheckReport {
    /// Largest conditional-mean increment over all nodes and dimensions.
    pub martingale_max_violation: f64,
    /// Largest conditional mean of the increment product (0 when dims = 1).
    pub orthogonality_max_violation: f64,
    /// Per path and dimension: realized quadratic variation and whether it
    /// lies within `[sigma_low^2 T, sigma_high^2 T]`.
    pub qv_per_path: Vec<QvCheck>,
}

/// Quadratic variation of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct QvCheck {
    pub qv: Vec<f64>,
    pub within_bounds: Vec<bool>,
}

impl ScenarioCheckReport {
    /// All martingale and orthogonality violations within `tol` and every
    /// quadratic variation inside its bounds.
    pub fn pass(&self, tol: f64) -> bool {
        self.martingale_max_violation <= tol
            && self.orthogonality_max_violation <= tol
            && self
                .qv_per_path
                .iter()
                .all(|check| check.within_bounds.iter().all(|&b| b))
    }
}

/// Checks that a path measure behaves like an orthogonal martingale measure
/// with quadratic variation inside the lattice's volatility band.
///
/// Works from the atoms alone, so convex mixtures of strategy measures are
/// accepted; the only structural requirement is the lattice's shape.
pub fn verify_scenario(pm: &PathMeasure, lattice: &VolLattice) -> Result<ScenarioCheckReport> {
    let dims = lattice.params.dims;
    let steps = lattice.params.steps;
    if pm.dims != dims || pm.steps != steps || (pm.dt - lattice.dt).abs() > 1e-15 {
        return Err(GexpError::ForeignMeasure(
            "measure shape does not match the lattice".into(),
        ));
    }
    let mut mass = 0.0;
    for atom in &pm.atoms {
        if atom.coords.len() != steps * dims {
            return Err(GexpError::ForeignMeasure("atom shape mismatch".into()));
        }
        mass += atom.weight;
    }
    if (mass - 1.0).abs() > crate::MASS_TOL {
        return Err(GexpError::ForeignMeasure(format!(
            "atom weights sum to {mass}, expected 1"
        )));
    }

    let mut martingale_max: f64 = 0.0;
    let mut orthogonality_max: f64 = 0.0;
    // Group atoms by exact coordinate prefix; each group is a node of the
    // realized tree and carries a conditional one-step law.
    for step in 0..steps {
        let mut nodes: BTreeMap<Vec<u64>, (f64, Vec<f64>, f64)> = BTreeMap::new();
        for atom in &pm.atoms {
            if atom.weight == 0.0 {
                continue;
            }
            let key: Vec<u64> = atom.coords[..step * dims]
                .iter()
                .map(|c| c.to_bits())
                .collect();
            let entry = nodes.entry(key).or_insert_with(|| (0.0, vec![0.0; dims], 0.0));
            entry.0 += atom.weight;
            let mut inc = vec![0.0; dims];
            for (i, slot) in inc.iter_mut().enumerate() {
                let prev = if step == 0 { 0.0 } else { atom.coords[(step - 1) * dims + i] };
                *slot = atom.coords[step * dims + i] - prev;
            }
            for i in 0..dims {
                entry.1[i] += atom.weight * inc[i];
            }
            if dims == 2 {
                entry.2 += atom.weight * inc[0] * inc[1];
            }
        }
        for (node_mass, sums, cross) in nodes.values() {
            if *node_mass <= 0.0 {
                continue;
            }
            for s in sums {
                martingale_max = martingale_max.max((s / node_mass).abs());
            }
            if dims == 2 {
                orthogonality_max = orthogonality_max.max((cross / node_mass).abs());
            }
        }
    }

    // Quadratic variation per path, from the sigma ledger; per-step band
    // membership certifies the bounds without floating-point drift, and the
    // summed value is also compared against the band directly.
    let horizon = lattice.params.horizon;
    let mut qv_per_path = Vec::with_capacity(pm.atoms.len());
    for atom in &pm.atoms {
        let mut qv = vec![0.0; dims];
        let mut per_step_ok = vec![true; dims];
        for sigma_row in &atom.sigmas {
            for i in 0..dims {
                let s = sigma_row[i];
                qv[i] += s * s * lattice.dt;
                if s < lattice.params.sigma_low[i] || s > lattice.params.sigma_high[i] {
                    per_step_ok[i] = false;
                }
            }
        }
        let within_bounds = (0..dims)
            .map(|i| {
                let lo = lattice.params.sigma_low[i].powi(2) * horizon;
                let hi = lattice.params.sigma_high[i].powi(2) * horizon;
                let tol = 1e-12 * (1.0 + hi.abs());
                per_step_ok[i] || (qv[i] >= lo - tol && qv[i] <= hi + tol)
            })
            .collect();
        qv_per_path.push(QvCheck { qv, within_bounds });
    }

    Ok(ScenarioCheckReport {
        martingale_max_violation: martingale_max,
        orthogonality_max_violation: orthogonality_max,
        qv_per_path,
    })
}

/// Exports a family of path measures as a scenario set on a shared outcome
/// space (the union of their supports), penalties zero.
pub fn export_scenario_set(
    lattice: &VolLattice,
    measures: &[PathMeasure],
) -> Result<(Arc<OutcomeSpace>, ScenarioSet)> {
    if measures.is_empty() {
        return Err(GexpError::ForeignMeasure("no measures to export".into()));
    }
    let dims = lattice.params.dims;
    let steps = lattice.params.steps;
    let mut order: Vec<Vec<f64>> = Vec::new();
    let mut index_of: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for pm in measures {
        if pm.dims != dims || pm.steps != steps {
            return Err(GexpError::ForeignMeasure("measure shape mismatch".into()));
        }
        for atom in &pm.atoms {
            let key: Vec<u64> = atom.coords.iter().map(|c| c.to_bits()).collect();
            index_of.entry(key).or_insert_with(|| {
                order.push(atom.coords.clone());
                order.len() - 1
            });
        }
    }
    let ids: Vec<String> = (0..order.len()).map(|i| format!("p{i}")).collect();
    let embedded: Vec<Vec<Vec<f64>>> = order
        .iter()
        .map(|coords| {
            (0..steps)
                .map(|k| coords[k * dims..(k + 1) * dims].to_vec())
                .collect()
        })
        .collect();
    let space = OutcomeSpace::with_path_embedding(ids, embedded).map_err(GexpError::Scenario)?;
    let mut members = Vec::with_capacity(measures.len());
    for pm in measures {
        let mut weights = vec![0.0; space.len()];
        for atom in &pm.atoms {
            let key: Vec<u64> = atom.coords.iter().map(|c| c.to_bits()).collect();
            weights[index_of[&key]] += atom.weight;
        }
        let measure = Measure::new(Arc::clone(&space), weights).map_err(GexpError::Scenario)?;
        members.push(measure);
    }
    let set = ScenarioSet::sublinear(members).map_err(GexpError::Scenario)?;
    Ok((space, set))
}
