//! JSON file schemas: scenario files (outcomes plus weighted, penalized
//! measures) and payoff files (explicit values, an expression, or a bank of
//! either). Parsing is strict; every semantic problem names the offending
//! field.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};

use riskcap::gexp::{PathPayoff, PathSlice};
use riskcap::scenario::{Measure, OutcomeSpace, Payoff, Point, ScenarioSet};

use crate::expr;
use crate::CliError;

/// An outcome is either a bare identifier or an identifier with an embedded
/// point (a real number or a steps-by-dims path).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutcomeEntry {
    Bare(String),
    Embedded { id: String, point: PointValue },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointValue {
    Real(f64),
    Path(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureEntry {
    pub id: String,
    pub weights: BTreeMap<String, f64>,
    /// Absent means 0 (the sublinear default); `null` means excluded
    /// (infinite penalty). Serialization keeps that convention: infinity
    /// round-trips as `null`.
    #[serde(default = "zero_penalty", deserialize_with = "null_is_infinite")]
    pub penalty: f64,
}

fn zero_penalty() -> f64 {
    0.0
}

fn null_is_infinite<'de, D>(deserializer: D) -> Result<f64, D::Error>
where
    D: Deserializer<'de>,
{
    let raw: Option<f64> = Option::deserialize(deserializer)?;
    Ok(raw.unwrap_or(f64::INFINITY))
}

/// The scenario file: a shared outcome space and a family of measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub outcomes: Vec<OutcomeEntry>,
    pub measures: Vec<MeasureEntry>,
}

/// A parsed scenario file, with the member ids kept for reporting.
#[derive(Debug, Clone)]
pub struct LoadedScenarios {
    pub set: ScenarioSet,
    pub member_ids: Vec<String>,
}

impl ScenarioFile {
    pub fn parse(source: &str) -> Result<Self, CliError> {
        serde_json::from_str(source)
            .map_err(|e| CliError::validation(format!("scenario file: {e}")))
    }

    pub fn load(&self) -> Result<LoadedScenarios, CliError> {
        let space = self.build_space()?;
        let mut members = Vec::with_capacity(self.measures.len());
        let mut member_ids = Vec::with_capacity(self.measures.len());
        for entry in &self.measures {
            for (id, &w) in &entry.weights {
                if space.index_of(id).is_none() {
                    return Err(CliError::validation(format!(
                        "measure {:?}: unknown outcome {id:?} in weights",
                        entry.id
                    )));
                }
                if !(w >= 0.0) {
                    return Err(CliError::validation(format!(
                        "measure {:?}: weight {w} for outcome {id:?} is negative",
                        entry.id
                    )));
                }
            }
            let measure = Measure::from_weights(
                Arc::clone(&space),
                entry.weights.iter().map(|(k, v)| (k.as_str(), *v)),
            )
            .map_err(|e| CliError::validation(format!("measure {:?}: {e}", entry.id)))?;
            if !measure.is_probability(1e-9) {
                return Err(CliError::validation(format!(
                    "measure {:?}: total mass {} is not within 1e-9 of 1",
                    entry.id,
                    measure.mass()
                )));
            }
            if entry.penalty.is_nan() || entry.penalty < 0.0 {
                return Err(CliError::validation(format!(
                    "measure {:?}: penalty {} is invalid",
                    entry.id, entry.penalty
                )));
            }
            members.push((measure, entry.penalty));
            member_ids.push(entry.id.clone());
        }
        let set = ScenarioSet::new(members)
            .map_err(|e| CliError::validation(format!("scenario file: {e}")))?;
        Ok(LoadedScenarios { set, member_ids })
    }

    fn build_space(&self) -> Result<Arc<OutcomeSpace>, CliError> {
        let ids: Vec<String> = self
            .outcomes
            .iter()
            .map(|o| match o {
                OutcomeEntry::Bare(id) => id.clone(),
                OutcomeEntry::Embedded { id, .. } => id.clone(),
            })
            .collect();
        let embedded = self
            .outcomes
            .iter()
            .any(|o| matches!(o, OutcomeEntry::Embedded { .. }));
        if !embedded {
            return OutcomeSpace::new(ids)
                .map_err(|e| CliError::validation(format!("outcomes: {e}")));
        }
        let mut reals = Vec::new();
        let mut paths = Vec::new();
        for entry in &self.outcomes {
            match entry {
                OutcomeEntry::Embedded { point: PointValue::Real(x), .. } => reals.push(*x),
                OutcomeEntry::Embedded { point: PointValue::Path(rows), .. } => {
                    paths.push(rows.clone())
                }
                OutcomeEntry::Bare(id) => {
                    return Err(CliError::validation(format!(
                        "outcome {id:?} has no point but other outcomes are embedded; \
                         embeddings must be total"
                    )))
                }
            }
        }
        if !reals.is_empty() && !paths.is_empty() {
            return Err(CliError::validation(
                "outcomes mix real points and path points".into(),
            ));
        }
        if paths.is_empty() {
            OutcomeSpace::with_real_embedding(ids, reals)
                .map_err(|e| CliError::validation(format!("outcomes: {e}")))
        } else {
            OutcomeSpace::with_path_embedding(ids, paths)
                .map_err(|e| CliError::validation(format!("outcomes: {e}")))
        }
    }

    /// Serializes a scenario set back into the file schema.
    pub fn from_loaded(loaded: &LoadedScenarios) -> Self {
        let space = loaded.set.space();
        let outcomes = space
            .outcomes()
            .iter()
            .enumerate()
            .map(|(index, id)| match space.point(index) {
                None => OutcomeEntry::Bare(id.clone()),
                Some(Point::Real(x)) => OutcomeEntry::Embedded {
                    id: id.clone(),
                    point: PointValue::Real(*x),
                },
                Some(Point::Path(rows)) => OutcomeEntry::Embedded {
                    id: id.clone(),
                    point: PointValue::Path(rows.clone()),
                },
            })
            .collect();
        let measures = loaded
            .set
            .members()
            .iter()
            .zip(&loaded.member_ids)
            .map(|(member, id)| {
                let weights = member
                    .measure
                    .support()
                    .map(|i| (space.id(i).to_owned(), member.measure.weight(i)))
                    .collect();
                MeasureEntry { id: id.clone(), weights, penalty: member.penalty }
            })
            .collect();
        Self { outcomes, measures }
    }
}

/// The payoff file: explicit values, an expression over the embedding, or a
/// bank of payoffs (accepted only where a bank is meaningful).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PayoffFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<Vec<PayoffFile>>,
}

impl PayoffFile {
    pub fn parse(source: &str) -> Result<Self, CliError> {
        serde_json::from_str(source)
            .map_err(|e| CliError::validation(format!("payoff file: {e}")))
    }

    fn single_form(&self) -> Result<(), CliError> {
        let set = self.values.is_some() as u8 + self.expr.is_some() as u8 + self.bank.is_some() as u8;
        if set != 1 {
            return Err(CliError::validation(
                "payoff file must set exactly one of \"values\", \"expr\", \"bank\"".into(),
            ));
        }
        Ok(())
    }

    /// Realizes the payoff on an outcome space.
    pub fn to_payoff(&self, space: &Arc<OutcomeSpace>) -> Result<Payoff, CliError> {
        self.single_form()?;
        if let Some(values) = &self.values {
            return Payoff::from_values(
                Arc::clone(space),
                values.iter().map(|(k, v)| (k.as_str(), *v)),
            )
            .map_err(|e| CliError::validation(format!("payoff values: {e}")));
        }
        if let Some(source) = &self.expr {
            let ast = expr::parse(source)
                .map_err(|e| CliError::validation(format!("payoff expr: {e}")))?;
            let mut out = Vec::with_capacity(space.len());
            for index in 0..space.len() {
                let point = space.point(index);
                let resolver = |name: &str| resolve_point_var(name, point);
                let value = expr::eval(&ast, &resolver).map_err(|e| {
                    CliError::validation(format!(
                        "payoff expr at outcome {:?}: {e}",
                        space.id(index)
                    ))
                })?;
                out.push(value);
            }
            return Payoff::new(Arc::clone(space), out)
                .map_err(|e| CliError::validation(format!("payoff expr: {e}")));
        }
        Err(CliError::validation(
            "a payoff bank is not accepted here; provide \"values\" or \"expr\"".into(),
        ))
    }

    /// Reads the `values` map as measure weights (absent outcomes are 0).
    pub fn to_measure(&self, space: &Arc<OutcomeSpace>) -> Result<Measure, CliError> {
        self.single_form()?;
        let values = self.values.as_ref().ok_or_else(|| {
            CliError::validation(
                "a target measure needs explicit \"values\" weights".into(),
            )
        })?;
        Measure::from_weights(
            Arc::clone(space),
            values.iter().map(|(k, v)| (k.as_str(), *v)),
        )
        .map_err(|e| CliError::validation(format!("target measure: {e}")))
    }

    /// Realizes a bank of payoffs (a single payoff file is a bank of one).
    pub fn to_bank(&self, space: &Arc<OutcomeSpace>) -> Result<Vec<Payoff>, CliError> {
        self.single_form()?;
        match &self.bank {
            Some(entries) => {
                if entries.is_empty() {
                    return Err(CliError::validation("payoff bank is empty".into()));
                }
                entries.iter().map(|e| e.to_payoff(space)).collect()
            }
            None => Ok(vec![self.to_payoff(space)?]),
        }
    }

    /// Compiles the expression form into a lazily evaluated path payoff.
    pub fn to_path_payoff(&self) -> Result<ExprPathPayoff, CliError> {
        self.single_form()?;
        let source = self.expr.as_ref().ok_or_else(|| {
            CliError::validation(
                "lattice payoffs must use \"expr\" over path variables b1, b2, b1_k".into(),
            )
        })?;
        let ast = expr::parse(source)
            .map_err(|e| CliError::validation(format!("payoff expr: {e}")))?;
        Ok(ExprPathPayoff { ast })
    }
}

fn resolve_point_var(name: &str, point: Option<&Point>) -> Option<f64> {
    match point? {
        Point::Real(x) => {
            if name == "x" || name == "b1" {
                Some(*x)
            } else {
                None
            }
        }
        Point::Path(rows) => {
            let (dim, step) = parse_path_var(name)?;
            let dims = rows.first().map_or(0, Vec::len);
            if dim == 0 || dim > dims {
                return None;
            }
            match step {
                Some(0) => Some(0.0),
                Some(k) if k <= rows.len() => Some(rows[k - 1][dim - 1]),
                Some(_) => None,
                None => rows.last().map(|row| row[dim - 1]),
            }
        }
    }
}

/// `b<dim>` resolves to the terminal value, `b<dim>_<step>` to the value
/// after `step` steps (`_0` is the start, always 0).
fn parse_path_var(name: &str) -> Option<(usize, Option<usize>)> {
    let rest = name.strip_prefix('b')?;
    match rest.split_once('_') {
        Some((dim, step)) => Some((dim.parse().ok()?, Some(step.parse().ok()?))),
        None => Some((rest.parse().ok()?, None)),
    }
}

/// An expression payoff evaluated directly on lattice paths.
pub struct ExprPathPayoff {
    ast: expr::Expr,
}

impl PathPayoff for ExprPathPayoff {
    fn value(&self, path: &PathSlice<'_>) -> f64 {
        let resolver = |name: &str| {
            let (dim, step) = parse_path_var(name)?;
            if dim == 0 || dim > path.dims {
                return None;
            }
            match step {
                Some(k) if k <= path.steps => Some(path.value(dim - 1, k)),
                Some(_) => None,
                None => Some(path.terminal(dim - 1)),
            }
        };
        // NaN marks the payoff as undefined on this path; the lattice turns
        // that into a totality error.
        expr::eval(&self.ast, &resolver).unwrap_or(f64::NAN)
    }
}
