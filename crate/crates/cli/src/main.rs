//! `riskcap` command line: loads scenario and payoff files, dispatches to
//! the library, and emits deterministic JSON/CSV/text reports.
//!
//! Exit codes: 0 success, 2 validation error (malformed files, bad flags,
//! domain errors), 3 property-check failure (an axiom verification found a
//! violation).

mod expr;
mod files;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use riskcap::capacity::{
    canonical_measure_verified, capacity_with_argmax, default_canonical_weights,
    dirac_counterexample, reduce, CapacityError, TestBank,
};
use riskcap::gexp::{build_lattice, verify_scenario, LatticeParams};
use riskcap::risk::{
    entropic_oracle, maximizer, member_contribution, penalty, rho, rho_min, rho_min_diagnostic,
    riskless_with_tol, verify_axioms, AxiomVerdict, RiskSpec,
};
use riskcap::scenario::{expectation, expectation_signed, Payoff};

use files::{LoadedScenarios, PayoffFile, ScenarioFile};
use report::{fmt_sig, num, Format, Report};

/// CLI failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Property(String),
}

impl CliError {
    fn validation(message: String) -> Self {
        CliError::Validation(message)
    }

    fn property(message: String) -> Self {
        CliError::Property(message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Property(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
enum FormatArg {
    #[default]
    Json,
    Csv,
    Text,
}

impl From<FormatArg> for Format {
    fn from(value: FormatArg) -> Format {
        match value {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "riskcap",
    version,
    about = "Worst-case expectations, capacities and convex risk measures over scenario files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case L^p norm of a payoff over the scenario members
    Capacity {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        payoff: PathBuf,
        /// Norm exponent, at least 1
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Dual-form risk measure and its attaining member
    Risk {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Minimal penalty of a target measure (the convex conjugate program)
    Penalty {
        #[arg(long)]
        scenarios: PathBuf,
        /// Payoff file whose "values" map is read as the target weights
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Member attaining the risk measure
    Maximizer {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Minimal sublinear majorant, with the lambda-grid diagnostic
    Rhomin {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Greedy scenario reduction to an eps-net under a payoff bank
    Reduce {
        #[arg(long)]
        scenarios: PathBuf,
        /// Covering radius for the net
        #[arg(long)]
        eps: f64,
        /// Optional bank file ("bank": [...]); outcome indicators otherwise
        #[arg(long)]
        payoff: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Canonical reference measure with the verified null-set property
    Canonical {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Whether a non-positive payoff carries zero risk at every scale
    Riskless {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        payoff: PathBuf,
        /// Zero tolerance for member expectations
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Worst-case expectation on an adversarial-volatility lattice
    Gexp {
        /// K,T,d,lo,hi (or K,T,2,lo1,hi1,lo2,hi2 for two dimensions)
        #[arg(long)]
        lattice: String,
        /// Payoff file with an "expr" over b1[, b2] and b1_k step values
        #[arg(long)]
        payoff: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// Axiom verification of the scenario risk measure (exit 3 on failure)
    Verify {
        #[arg(long)]
        scenarios: PathBuf,
        /// Verify the entropic risk with this theta around the canonical
        /// measure instead of the dual-form risk measure
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
    /// The Dirac counterexample separating capacity from member measures
    Counterexample {
        /// Level in (0, 1) at which majorants are probed
        #[arg(long)]
        eta: f64,
        #[arg(long, value_enum, default_value_t)]
        format: FormatArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((output, property_ok)) => {
            print!("{output}");
            if property_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(CliError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Property(message)) => {
            eprintln!("property check failed: {message}");
            ExitCode::from(3)
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

fn load_scenarios(path: &Path) -> Result<LoadedScenarios, CliError> {
    ScenarioFile::parse(&read_file(path)?)?.load()
}

fn load_payoff_file(path: &Path) -> Result<PayoffFile, CliError> {
    PayoffFile::parse(&read_file(path)?)
}

fn validation<E: fmt::Display>(e: E) -> CliError {
    CliError::validation(e.to_string())
}

/// Per-member CSV rows: expectation of the payoff, penalty, and the dual
/// contribution `E_Q(-X) - alpha`.
fn member_table(
    loaded: &LoadedScenarios,
    spec: &RiskSpec,
    x: &Payoff,
) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::with_capacity(loaded.set.len());
    for (i, member) in loaded.set.members().iter().enumerate() {
        let e = expectation_signed(&member.measure, x).map_err(validation)?;
        let contribution = member_contribution(spec, i, x).map_err(validation)?;
        rows.push(vec![
            (i + 1).to_string(),
            fmt_sig(e),
            fmt_sig(member.penalty),
            fmt_sig(contribution),
        ]);
    }
    Ok(rows)
}

fn run(command: Command) -> Result<(String, bool), CliError> {
    match command {
        Command::Capacity { scenarios, payoff, p, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let x = load_payoff_file(&payoff)?.to_payoff(loaded.set.space())?;
            let (value, index) = capacity_with_argmax(&x, &loaded.set, p).map_err(validation)?;
            let mut rows = Vec::with_capacity(loaded.set.len());
            for (i, member) in loaded.set.members().iter().enumerate() {
                let e = expectation(&member.measure, &x, p).map_err(validation)?;
                rows.push(vec![
                    (i + 1).to_string(),
                    fmt_sig(e),
                    fmt_sig(member.penalty),
                    fmt_sig(e),
                ]);
            }
            let mut report = Report::new("capacity");
            report
                .number("p", p)
                .number("value", value)
                .field("attaining_index", Value::from(index + 1))
                .field("attaining_member", Value::from(loaded.member_ids[index].clone()))
                .table(&["index", "expectation", "penalty", "contribution"], rows);
            Ok((report.render(format.into()), true))
        }

        Command::Risk { scenarios, payoff, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let x = load_payoff_file(&payoff)?.to_payoff(loaded.set.space())?;
            let spec = RiskSpec::new(loaded.set.clone());
            let value = rho(&spec, &x).map_err(validation)?;
            let (index, _measure) = maximizer(&spec, &x).map_err(validation)?;
            let rows = member_table(&loaded, &spec, &x)?;
            let mut report = Report::new("risk");
            report
                .number("rho", value)
                .field("maximizer_index", Value::from(index + 1))
                .field("maximizer_member", Value::from(loaded.member_ids[index].clone()))
                .field("normalized", Value::from(spec.is_normalized()))
                .table(&["index", "expectation", "penalty", "contribution"], rows);
            Ok((report.render(format.into()), true))
        }

        Command::Penalty { scenarios, payoff, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let target = load_payoff_file(&payoff)?.to_measure(loaded.set.space())?;
            let spec = RiskSpec::new(loaded.set.clone());
            let value = penalty(&spec, &target).map_err(validation)?;
            let mut report = Report::new("penalty");
            report
                .field("penalty", num(value.value))
                .field("feasible", Value::from(value.is_finite()));
            Ok((report.render(format.into()), true))
        }

        Command::Maximizer { scenarios, payoff, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let x = load_payoff_file(&payoff)?.to_payoff(loaded.set.space())?;
            let spec = RiskSpec::new(loaded.set.clone());
            let (index, measure) = maximizer(&spec, &x).map_err(validation)?;
            let contribution = member_contribution(&spec, index, &x).map_err(validation)?;
            let e = expectation_signed(&measure, &x).map_err(validation)?;
            let rows = member_table(&loaded, &spec, &x)?;
            let mut report = Report::new("maximizer");
            report
                .field("index", Value::from(index + 1))
                .field("member", Value::from(loaded.member_ids[index].clone()))
                .number("expectation", e)
                .number("penalty", loaded.set.members()[index].penalty)
                .number("contribution", contribution)
                .table(&["index", "expectation", "penalty", "contribution"], rows);
            Ok((report.render(format.into()), true))
        }

        Command::Rhomin { scenarios, payoff, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let x = load_payoff_file(&payoff)?.to_payoff(loaded.set.space())?;
            let spec = RiskSpec::new(loaded.set.clone());
            let value = rho_min(&spec, &x).map_err(validation)?;
            let diagnostic = rho_min_diagnostic(&spec, &x).map_err(validation)?;
            let grid: Vec<Value> = diagnostic
                .grid
                .iter()
                .map(|(lambda, v)| json!([num(*lambda), num(*v)]))
                .collect();
            let rows = member_table(&loaded, &spec, &x)?;
            let mut report = Report::new("rhomin");
            report
                .number("rho_min", value)
                .object(
                    "diagnostic",
                    json!({
                        "monotone": diagnostic.monotone,
                        "residual_gap": num(diagnostic.residual_gap),
                    }),
                )
                .field("grid", Value::from(grid))
                .table(&["index", "expectation", "penalty", "contribution"], rows);
            Ok((report.render(format.into()), true))
        }

        Command::Reduce { scenarios, eps, payoff, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let space = loaded.set.space();
            let payoffs = match payoff {
                Some(path) => load_payoff_file(&path)?.to_bank(space)?,
                None => space
                    .outcomes()
                    .iter()
                    .map(|id| Payoff::indicator(Arc::clone(space), id))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(validation)?,
            };
            let bank = TestBank::new(payoffs).map_err(validation)?;
            let result = reduce(&loaded.set, &bank, eps).map_err(validation)?;
            let kept_set =
                riskcap::capacity::reduced_set(&loaded.set, &result).map_err(validation)?;
            let kept_ids = result
                .indices
                .iter()
                .map(|&i| loaded.member_ids[i].clone())
                .collect();
            let reduced_file = ScenarioFile::from_loaded(&LoadedScenarios {
                set: kept_set,
                member_ids: kept_ids,
            });
            let rows = result
                .indices
                .iter()
                .enumerate()
                .map(|(rank, &i)| {
                    vec![
                        (rank + 1).to_string(),
                        (i + 1).to_string(),
                        loaded.member_ids[i].clone(),
                    ]
                })
                .collect();
            let indices: Vec<Value> =
                result.indices.iter().map(|&i| Value::from(i + 1)).collect();
            let mut report = Report::new("reduce");
            report
                .number("eps", eps)
                .field("kept", Value::from(result.indices.len()))
                .field("original", Value::from(loaded.set.len()))
                .number("achieved_error", result.achieved_error)
                .field("bank_size", Value::from(result.bank_size))
                .field("indices", Value::from(indices))
                .field(
                    "reduced",
                    serde_json::to_value(&reduced_file).map_err(validation)?,
                )
                .table(&["rank", "index", "member"], rows);
            Ok((report.render(format.into()), true))
        }

        Command::Canonical { scenarios, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let p = canonical_measure_verified(&loaded.set, None).map_err(|e| match e {
                CapacityError::NullCharacterizationFailed(_) => {
                    CliError::property(e.to_string())
                }
                other => validation(other),
            })?;
            let alphas = default_canonical_weights(loaded.set.len()).map_err(validation)?;
            let space = loaded.set.space();
            let mut weights = serde_json::Map::new();
            for idx in p.support() {
                weights.insert(space.id(idx).to_owned(), num(p.weight(idx)));
            }
            let alpha_values: Vec<Value> = alphas.iter().map(|&a| num(a)).collect();
            let rows = loaded
                .member_ids
                .iter()
                .zip(&alphas)
                .enumerate()
                .map(|(i, (id, &a))| vec![(i + 1).to_string(), id.clone(), fmt_sig(a)])
                .collect();
            let mut report = Report::new("canonical");
            report
                .field("alpha", Value::from(alpha_values))
                .object("measure", Value::Object(weights))
                .field("verified", Value::from(true))
                .table(&["index", "member", "alpha"], rows);
            Ok((report.render(format.into()), true))
        }

        Command::Riskless { scenarios, payoff, tol, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let x = load_payoff_file(&payoff)?.to_payoff(loaded.set.space())?;
            let spec = RiskSpec::new(loaded.set.clone());
            let (ok, witness) = riskless_with_tol(&spec, &x, tol).map_err(validation)?;
            let witness_value = match witness {
                Some(w) => json!({
                    "lambda": num(w.lambda),
                    "member_index": w.member + 1,
                    "member": loaded.member_ids[w.member],
                    "rho_value": num(w.rho_value),
                }),
                None => Value::Null,
            };
            let mut report = Report::new("riskless");
            report
                .field("riskless", Value::from(ok))
                .number("tol", tol)
                .object("witness", witness_value);
            Ok((report.render(format.into()), true))
        }

        Command::Gexp { lattice, payoff, format } => {
            let params = parse_lattice(&lattice)?;
            let lattice = build_lattice(params).map_err(validation)?;
            let compiled = load_payoff_file(&payoff)?.to_path_payoff()?;
            let value = lattice.gexp(&compiled).map_err(validation)?;
            let mut report = Report::new("gexp");
            report
                .number("value", value)
                .field("steps", Value::from(lattice.steps()))
                .field("dims", Value::from(lattice.dims()))
                .number("dt", lattice.dt());
            if lattice.dims() * lattice.steps() <= 16 {
                let worst = lattice.worst_measure(&compiled).map_err(validation)?;
                let root_sigma: Vec<Value> = worst
                    .strategy
                    .as_ref()
                    .map(|s| s.by_depth[0][0].iter().map(|&v| num(v)).collect())
                    .unwrap_or_default();
                let checks = verify_scenario(&worst, &lattice).map_err(validation)?;
                report.field("root_sigma", Value::from(root_sigma)).object(
                    "scenario_checks",
                    json!({
                        "martingale_max_violation": num(checks.martingale_max_violation),
                        "orthogonality_max_violation": num(checks.orthogonality_max_violation),
                        "qv_within_bounds": checks
                            .qv_per_path
                            .iter()
                            .all(|c| c.within_bounds.iter().all(|&b| b)),
                    }),
                );
            } else {
                report.field("scenario_checks", Value::from("skipped: lattice too large"));
            }
            Ok((report.render(format.into()), true))
        }

        Command::Verify { scenarios, theta, tol, seed, format } => {
            let loaded = load_scenarios(&scenarios)?;
            let spec = RiskSpec::new(loaded.set.clone());
            let space = Arc::clone(loaded.set.space());
            let trials = 500;
            let (subject, axioms) = match theta {
                Some(theta) => {
                    if !(theta > 0.0) {
                        return Err(CliError::validation(format!(
                            "theta = {theta} must be strictly positive"
                        )));
                    }
                    let base = riskcap::capacity::canonical_measure(&loaded.set, None)
                        .map_err(validation)?;
                    let handle = move |x: &Payoff| entropic_oracle(&base, theta, x);
                    let report =
                        verify_axioms(&handle, &space, trials, tol, seed).map_err(validation)?;
                    (format!("entropic(theta={})", fmt_sig(theta)), report)
                }
                None => {
                    let report =
                        verify_axioms(&spec, &space, trials, tol, seed).map_err(validation)?;
                    ("dual-form".to_string(), report)
                }
            };
            let mut all_pass = true;
            let mut verdicts = serde_json::Map::new();
            let mut rows = Vec::new();
            for (name, verdict) in [
                ("monotonicity", &axioms.monotonicity),
                ("translation_invariance", &axioms.translation_invariance),
                ("convexity", &axioms.convexity),
                ("normalization", &axioms.normalization),
                ("lipschitz", &axioms.lipschitz),
            ] {
                let entry = match verdict {
                    AxiomVerdict::Pass => {
                        rows.push(vec![name.to_string(), "pass".to_string(), String::new()]);
                        json!({"pass": true})
                    }
                    AxiomVerdict::Fail(witness) => {
                        all_pass = false;
                        rows.push(vec![
                            name.to_string(),
                            "fail".to_string(),
                            fmt_sig(witness.violation),
                        ]);
                        json!({
                            "pass": false,
                            "witness": {
                                "x": witness.x.iter().map(|&v| num(v)).collect::<Vec<_>>(),
                                "y": witness.y.as_ref().map(|y| {
                                    y.iter().map(|&v| num(v)).collect::<Vec<_>>()
                                }),
                                "lambda": witness.lambda.map(num),
                                "violation": num(witness.violation),
                            }
                        })
                    }
                };
                verdicts.insert(name.to_string(), entry);
            }
            let mut report = Report::new("verify");
            report
                .field("subject", Value::from(subject))
                .field("trials", Value::from(trials))
                .number("tol", tol)
                .field("seed", Value::from(seed))
                .field("all_pass", Value::from(all_pass))
                .object("axioms", Value::Object(verdicts))
                .table(&["axiom", "verdict", "violation"], rows);
            Ok((report.render(format.into()), all_pass))
        }

        Command::Counterexample { eta, format } => {
            let result = dirac_counterexample(eta, 500).map_err(validation)?;
            let mut report = Report::new("counterexample");
            report
                .number("eta", result.eta)
                .number("capacity_lower_bound", result.capacity_lower_bound)
                .number("sup_measure_of_A", result.sup_measure_of_a)
                .field("witness_index", Value::from(result.witness_index))
                .field("atom_count", Value::from(result.atom_count));
            Ok((report.render(format.into()), true))
        }
    }
}

/// `K,T,d,lo,hi` with a shared band, or `K,T,2,lo1,hi1,lo2,hi2`.
fn parse_lattice(spec: &str) -> Result<LatticeParams, CliError> {
    let fields: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = |msg: &str| CliError::validation(format!("--lattice {spec:?}: {msg}"));
    if fields.len() != 5 && fields.len() != 7 {
        return Err(bad("expected K,T,d,lo,hi or K,T,2,lo1,hi1,lo2,hi2"));
    }
    let steps: usize = fields[0].parse().map_err(|_| bad("K must be an integer"))?;
    let horizon: f64 = fields[1].parse().map_err(|_| bad("T must be a number"))?;
    let dims: usize = fields[2].parse().map_err(|_| bad("d must be 1 or 2"))?;
    let numbers: Vec<f64> = fields[3..]
        .iter()
        .map(|f| f.parse().map_err(|_| bad("volatilities must be numbers")))
        .collect::<Result<_, _>>()?;
    let (lows, highs) = if fields.len() == 5 {
        (vec![numbers[0]; dims], vec![numbers[1]; dims])
    } else {
        if dims != 2 {
            return Err(bad("seven fields imply d = 2"));
        }
        (vec![numbers[0], numbers[2]], vec![numbers[1], numbers[3]])
    };
    Ok(LatticeParams::two_point(steps, horizon, &lows, &highs))
}
