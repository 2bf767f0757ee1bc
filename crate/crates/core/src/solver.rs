//! Solver adapter contract and the bundled adapters.
//!
//! `submit(model, limits) -> SolveResult` is the whole contract. The
//! default adapter drives the bundled HiGHS library; the external adapter
//! exports fixed-format MPS and runs any solver binary that can read it,
//! selected through the case's solver section or the `TRIMARKET_SOLVER` /
//! `TRIMARKET_SOLVER_BIN` / `TRIMARKET_SOLVER_ARGS` environment variables.

use std::collections::BTreeMap;
use std::ffi::CString;
use std::ops::Bound;
use std::time::Instant;

use crate::case::SolverConfig;
use crate::error::Error;
use crate::export;
use crate::lp::{LinearProgram, Sense, Symbol};
use crate::milp::MilpModel;
use crate::Result;

/// Wall-clock and search limits passed to an adapter.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveLimits {
    pub time_limit_s: Option<f64>,
    pub threads: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub wall_ms: u128,
    pub simplex_iterations: i64,
    pub nodes: i64,
}

/// Outcome of one solve; the assignment is present exactly for `Optimal`
/// and `Feasible`.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Option<BTreeMap<Symbol, f64>>,
    pub stats: SolveStats,
}

/// A MILP solver behind the adapter contract.
pub trait MilpSolver: Send + Sync {
    fn name(&self) -> &str;
    fn submit(&self, model: &MilpModel, limits: &SolveLimits) -> Result<SolveResult>;
}

/// Solve a model through an adapter.
pub fn solve(
    model: &MilpModel,
    adapter: &dyn MilpSolver,
    limits: &SolveLimits,
) -> Result<SolveResult> {
    adapter.submit(model, limits)
}

/// Pick the adapter from the solver config, honoring environment overrides.
pub fn adapter_from_config(cfg: &SolverConfig) -> Result<Box<dyn MilpSolver>> {
    let name = std::env::var("TRIMARKET_SOLVER").unwrap_or_else(|_| cfg.adapter.clone());
    match name.as_str() {
        "highs" => Ok(Box::new(HighsAdapter)),
        "external" => {
            let binary = std::env::var("TRIMARKET_SOLVER_BIN")
                .ok()
                .or_else(|| cfg.binary_path.clone())
                .ok_or_else(|| Error::Adapter {
                    adapter: "external".into(),
                    message: "no binary path configured".into(),
                })?;
            let args = std::env::var("TRIMARKET_SOLVER_ARGS")
                .ok()
                .map(|s| s.split_whitespace().map(str::to_string).collect())
                .or_else(|| cfg.args.clone());
            Ok(Box::new(ExternalCommandAdapter { binary, args }))
        }
        other => Err(Error::Adapter {
            adapter: other.to_string(),
            message: "unknown adapter (expected `highs` or `external`)".into(),
        }),
    }
}

fn range_of(lower: f64, upper: f64) -> (Bound<f64>, Bound<f64>) {
    let lo = if lower.is_finite() { Bound::Included(lower) } else { Bound::Unbounded };
    let hi = if upper.is_finite() { Bound::Included(upper) } else { Bound::Unbounded };
    (lo, hi)
}

fn row_range(sense: Sense, rhs: f64) -> (Bound<f64>, Bound<f64>) {
    match sense {
        Sense::Le => (Bound::Unbounded, Bound::Included(rhs)),
        Sense::Ge => (Bound::Included(rhs), Bound::Unbounded),
        Sense::Eq => (Bound::Included(rhs), Bound::Included(rhs)),
    }
}

/// Bundled HiGHS adapter; the default.
pub struct HighsAdapter;

impl MilpSolver for HighsAdapter {
    fn name(&self) -> &str {
        "highs"
    }

    fn submit(&self, model: &MilpModel, limits: &SolveLimits) -> Result<SolveResult> {
        let mut pb = highs::RowProblem::default();
        let cols: Vec<highs::Col> = model
            .vars
            .iter()
            .map(|v| {
                if v.binary {
                    pb.add_integer_column(v.obj, 0.0..=1.0)
                } else {
                    pb.add_column(v.obj, range_of(v.lower, v.upper))
                }
            })
            .collect();
        for row in &model.rows {
            let factors: Vec<(highs::Col, f64)> =
                row.terms.iter().map(|(i, c)| (cols[*i], *c)).collect();
            pb.add_row(row_range(row.sense, row.rhs), &factors);
        }

        let mut solver = pb.optimise(highs::Sense::Minimise);
        solver.make_quiet();
        solver.set_option("threads", limits.threads.unwrap_or(1) as i32);
        if let Some(t) = limits.time_limit_s {
            solver.set_option("time_limit", t);
        }
        if let Some(start) = &model.warm_start {
            // A rejected start is not an error; the search proceeds cold.
            let _ = solver.try_set_solution(Some(start), None, None, None);
        }

        let start = Instant::now();
        let solved = solver.try_solve().map_err(|status| Error::Adapter {
            adapter: "highs".into(),
            message: format!("solve failed with status {status:?}"),
        })?;
        let wall_ms = start.elapsed().as_millis();

        let nodes = CString::new("mip_node_count")
            .ok()
            .and_then(|name| solved.int_info_value(&name).ok())
            .unwrap_or(0);
        let stats = SolveStats {
            wall_ms,
            simplex_iterations: solved.simplex_iteration_count(),
            nodes,
        };

        use highs::HighsModelStatus as H;
        let has_solution = solved.primal_solution_status() == highs::HighsSolutionStatus::Feasible;
        let status = match solved.status() {
            H::Optimal => SolveStatus::Optimal,
            H::Infeasible => SolveStatus::Infeasible,
            H::UnboundedOrInfeasible | H::Unbounded => SolveStatus::Infeasible,
            H::ReachedTimeLimit | H::ReachedIterationLimit => {
                if has_solution {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Timeout
                }
            }
            other => {
                return Err(Error::Adapter {
                    adapter: "highs".into(),
                    message: format!("unexpected model status {other:?}"),
                })
            }
        };
        let assignment = match status {
            SolveStatus::Optimal | SolveStatus::Feasible => {
                let values = solved.get_solution().columns().to_vec();
                Some(model.assignment_by_symbol(&values))
            }
            _ => None,
        };
        Ok(SolveResult { status, assignment, stats })
    }
}

/// Runs an external solver binary on an exported MPS file.
///
/// The argument template expands `{model}` and `{solution}`; without a
/// template, CBC- and HiGHS-style command lines are inferred from the
/// binary name. The solution file parser accepts both solvers' formats.
pub struct ExternalCommandAdapter {
    pub binary: String,
    pub args: Option<Vec<String>>,
}

impl ExternalCommandAdapter {
    fn arg_template(&self) -> Result<Vec<String>> {
        if let Some(args) = &self.args {
            return Ok(args.clone());
        }
        let base = std::path::Path::new(&self.binary)
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if base.contains("cbc") {
            Ok(vec!["{model}".into(), "solve".into(), "-solution".into(), "{solution}".into()])
        } else if base.contains("highs") {
            Ok(vec!["--solution_file".into(), "{solution}".into(), "{model}".into()])
        } else {
            Err(Error::Adapter {
                adapter: "external".into(),
                message: format!("no argument template known for binary `{base}`; set solver.args"),
            })
        }
    }
}

impl MilpSolver for ExternalCommandAdapter {
    fn name(&self) -> &str {
        "external"
    }

    fn submit(&self, model: &MilpModel, _limits: &SolveLimits) -> Result<SolveResult> {
        let dir = tempfile::tempdir().map_err(|e| Error::Adapter {
            adapter: "external".into(),
            message: format!("temp dir: {e}"),
        })?;
        let model_path = dir.path().join("model.mps");
        let solution_path = dir.path().join("model.sol");
        let artifact = export::write_mps(model, "trimarket");
        std::fs::write(&model_path, &artifact.mps)?;
        if let Some(map) = &artifact.name_map {
            std::fs::write(dir.path().join("model.names.tsv"), map)?;
        }

        let args: Vec<String> = self
            .arg_template()?
            .into_iter()
            .map(|a| {
                a.replace("{model}", &model_path.to_string_lossy())
                    .replace("{solution}", &solution_path.to_string_lossy())
            })
            .collect();
        let start = Instant::now();
        let output = std::process::Command::new(&self.binary)
            .args(&args)
            .output()
            .map_err(|e| Error::Adapter {
                adapter: "external".into(),
                message: format!("failed to run `{}`: {e}", self.binary),
            })?;
        let wall_ms = start.elapsed().as_millis();
        let stdout = String::from_utf8_lossy(&output.stdout).to_string();

        let solution_text = std::fs::read_to_string(&solution_path).unwrap_or_default();
        let (status, by_name) = parse_solution_text(&solution_text, &stdout)?;

        // Map solver names (possibly mangled) back to structured symbols.
        let unmangle: BTreeMap<&str, &str> = artifact
            .mangled
            .iter()
            .map(|(code, original)| (code.as_str(), original.as_str()))
            .collect();
        let assignment = match status {
            SolveStatus::Optimal | SolveStatus::Feasible => {
                let mut values: BTreeMap<Symbol, f64> = BTreeMap::new();
                for v in &model.vars {
                    values.insert(v.name.clone(), 0.0);
                }
                let by_original: BTreeMap<String, f64> = by_name
                    .into_iter()
                    .map(|(n, v)| {
                        let original =
                            unmangle.get(n.as_str()).map(|s| s.to_string()).unwrap_or(n);
                        (original, v)
                    })
                    .collect();
                for v in model.vars.iter() {
                    if let Some(x) = by_original.get(&v.name.to_string()) {
                        values.insert(v.name.clone(), *x);
                    }
                }
                Some(values)
            }
            _ => None,
        };
        Ok(SolveResult {
            status,
            assignment,
            stats: SolveStats { wall_ms, ..Default::default() },
        })
    }
}

/// Parse a HiGHS- or CBC-style solution file, falling back to stdout for
/// the status line.
fn parse_solution_text(
    text: &str,
    stdout: &str,
) -> Result<(SolveStatus, BTreeMap<String, f64>)> {
    let corpus = if text.trim().is_empty() { stdout } else { text };
    let lower = format!("{}\n{}", corpus.to_lowercase(), stdout.to_lowercase());
    let status = if lower.contains("infeasible") {
        SolveStatus::Infeasible
    } else if lower.contains("optimal") {
        SolveStatus::Optimal
    } else if lower.contains("time limit") || lower.contains("stopped on time") {
        SolveStatus::Timeout
    } else if lower.contains("feasible") {
        SolveStatus::Feasible
    } else {
        return Err(Error::Adapter {
            adapter: "external".into(),
            message: "could not determine solver status from output".into(),
        });
    };
    if status == SolveStatus::Infeasible || status == SolveStatus::Timeout {
        return Ok((status, BTreeMap::new()));
    }

    let mut values = BTreeMap::new();
    if text.contains("Model status") || text.contains("# Columns") {
        // HiGHS .sol: name/value pairs inside the Columns section.
        let mut in_columns = false;
        for line in text.lines() {
            if line.starts_with("# Columns") {
                in_columns = true;
                continue;
            }
            if in_columns {
                if line.starts_with('#') {
                    break;
                }
                let mut it = line.split_whitespace();
                if let (Some(name), Some(value)) = (it.next(), it.next()) {
                    if let Ok(v) = value.parse::<f64>() {
                        values.insert(name.to_string(), v);
                    }
                }
            }
        }
    } else {
        // CBC style: `index name value [reduced cost]`, possibly prefixed
        // with `**` on infeasibilities.
        for line in text.lines() {
            let line = line.trim_start_matches("**").trim();
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() >= 3 && fields[0].parse::<usize>().is_ok() {
                if let Ok(v) = fields[2].parse::<f64>() {
                    values.insert(fields[1].to_string(), v);
                }
            }
        }
    }
    Ok((status, values))
}

/// Primal and dual solution of a single LP, keyed by structured names.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub primal: BTreeMap<Symbol, f64>,
    pub duals: BTreeMap<Symbol, f64>,
    pub objective: f64,
}

/// Solve one canonical LP with the bundled HiGHS and return primal values
/// and row duals. Duals follow the `c - A'y - E'lambda = 0` convention of
/// the KKT derivation.
pub fn solve_lp_with_duals(lp: &LinearProgram) -> Result<LpSolution> {
    let mut pb = highs::RowProblem::default();
    let cols: Vec<highs::Col> = lp
        .variables()
        .iter()
        .map(|v| pb.add_column(v.obj, range_of(v.lower, v.upper)))
        .collect();
    for row in lp.rows() {
        let factors: Vec<(highs::Col, f64)> =
            row.terms.iter().map(|(v, c)| (cols[v.0], *c)).collect();
        pb.add_row(row_range(row.sense, row.rhs), &factors);
    }
    let mut solver = pb.optimise(highs::Sense::Minimise);
    solver.make_quiet();
    solver.set_option("threads", 1_i32);

    let solved = solver.try_solve().map_err(|status| Error::Adapter {
        adapter: "highs".into(),
        message: format!("LP solve failed with status {status:?}"),
    })?;
    use highs::HighsModelStatus as H;
    let status = match solved.status() {
        H::Optimal => SolveStatus::Optimal,
        H::Infeasible => SolveStatus::Infeasible,
        H::UnboundedOrInfeasible | H::Unbounded => {
            return Err(Error::Adapter {
                adapter: "highs".into(),
                message: "LP is unbounded".into(),
            })
        }
        other => {
            return Err(Error::Adapter {
                adapter: "highs".into(),
                message: format!("unexpected LP status {other:?}"),
            })
        }
    };
    if status != SolveStatus::Optimal {
        return Ok(LpSolution {
            status,
            primal: BTreeMap::new(),
            duals: BTreeMap::new(),
            objective: f64::NAN,
        });
    }
    let solution = solved.get_solution();
    let primal: BTreeMap<Symbol, f64> = lp
        .variables()
        .iter()
        .zip(solution.columns())
        .map(|(v, x)| (v.name.clone(), *x))
        .collect();
    let duals: BTreeMap<Symbol, f64> = lp
        .rows()
        .iter()
        .zip(solution.dual_rows())
        .map(|(r, y)| (r.dual.clone(), *y))
        .collect();
    let objective = lp.objective_value(solution.columns());
    Ok(LpSolution { status, primal, duals, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;
    use crate::kkt::{build_coupled_system, Mode};
    use crate::markets::{build_gas_lp, sym, zero_dispatch};
    use crate::milp::{assemble_milp, estimate_big_m, MilpObjective};

    #[test]
    fn gas_toy_marginal_supplier_sets_price() {
        // Single node, one supplier at 2090 $/Mm3, demand 0.5: the supplier
        // is interior at the optimum, so mu = 2090 by stationarity.
        let doc = r#"{
            "power": {
                "buses": ["B1"], "reference_bus": "B1", "lines": [],
                "demand": {}, "generators": []
            },
            "gas": {
                "nodes": ["1"], "pipelines": [],
                "suppliers": [{"id": "W1", "node": "1", "min": 0.0, "max": 1.0, "cost": 2090.0}],
                "demand": {"1": [0.5]}
            },
            "carbon": {"offers": [{"id": "S1", "amount": 1.0, "cost": 1.0}]},
            "time": {"horizon": 1}
        }"#;
        let case = parse_case(doc).unwrap();
        let gas = build_gas_lp(&case, &zero_dispatch(&case)).unwrap();
        let sol = solve_lp_with_duals(&gas.lp).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal[&sym::f_s("W1", 1)] - 0.5).abs() < 1e-9);
        assert!((sol.duals[&sym::mu("1", 1)] - 2090.0).abs() < 1e-6);
        assert!((sol.objective - 0.5 * 2090.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_adapter_is_rejected() {
        let cfg = SolverConfig { adapter: "cplex".into(), ..Default::default() };
        assert!(adapter_from_config(&cfg).is_err());
    }

    #[test]
    fn external_adapter_requires_binary() {
        let cfg = SolverConfig { adapter: "external".into(), ..Default::default() };
        assert!(adapter_from_config(&cfg).is_err());
    }

    #[test]
    fn highs_adapter_reports_infeasible() {
        // Cap-and-trade with a zero cap and a must-run emitting unit.
        let mut case = parse_case(include_str!("../fixtures/micro1.json")).unwrap();
        case.carbon.cap = Some(0.0);
        case.power.generators[1].p_min = 1.0; // GB must run and emits
        let sys = build_coupled_system(&case, Mode::CapAndTrade).unwrap();
        let cfg = estimate_big_m(&sys, &case).unwrap();
        let model = assemble_milp(&sys, &cfg, MilpObjective::Constant).unwrap();
        let result = HighsAdapter.submit(&model, &SolveLimits::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Infeasible);
        assert!(result.assignment.is_none());
    }
}
