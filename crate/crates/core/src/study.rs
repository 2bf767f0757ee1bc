//! Scenario harness: the end-to-end pipeline and the four study sweeps
//! behind the CLI (demand growth, retrofitting, clearing time, allowance
//! cap), emitting table rows as CSV or JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::case::MarketCase;
use crate::error::Error;
use crate::kkt::{build_coupled_system, EquilibriumSystem, Mode};
use crate::milp::{assemble_milp, estimate_big_m, BigMConfig, MilpObjective, MilpModel};
use crate::solver::{
    adapter_from_config, solve_lp_with_duals, MilpSolver, SolveLimits, SolveStatus,
};
use crate::verify::{
    fixed_point_check, merit_order_for_case, residual_report, welfare_lp, EquilibriumSolution,
    FixedPointReport, ResidualSummary,
};
use crate::Result;

/// One emitted table row; the column set is fixed and documented in the
/// CSV writer.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub label: String,
    pub status: String,
    /// Load-weighted average electricity price [$/MWh].
    pub avg_electricity_price: f64,
    /// Served-volume-weighted average gas price [$/Mm3].
    pub avg_gas_price: f64,
    /// Mean carbon price over clearing periods [$/ton].
    pub carbon_price: f64,
    pub total_emission: f64,
    pub avg_hourly_emission: f64,
    /// Energy over the horizon per generator id [MWh].
    pub generator_energy: Vec<(String, f64)>,
    pub verified: bool,
    pub solve_ms: u128,
    pub nodes: i64,
}

impl StudyRow {
    fn failed(label: String, status: String) -> StudyRow {
        StudyRow {
            label,
            status,
            avg_electricity_price: f64::NAN,
            avg_gas_price: f64::NAN,
            carbon_price: f64::NAN,
            total_emission: f64::NAN,
            avg_hourly_emission: f64::NAN,
            generator_energy: Vec::new(),
            verified: false,
            solve_ms: 0,
            nodes: 0,
        }
    }
}

/// Verification outcome attached to a run.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub residuals: ResidualSummary,
    pub fixed_point: FixedPointReport,
    /// Carbon price per period against the merit-order oracle, when the
    /// solution serves all exogenous demand and is off ladder breakpoints.
    pub merit_order_checked: bool,
    pub merit_order_max_gap: f64,
    pub pass: bool,
}

/// Everything produced by one end-to-end run.
#[derive(Debug)]
pub struct RunOutcome {
    pub solution: EquilibriumSolution,
    pub row: StudyRow,
    pub verification: VerificationReport,
    pub system: EquilibriumSystem,
    pub big_m: BigMConfig,
    pub model: MilpModel,
}

/// Tolerances of the post-solve verification gates.
#[derive(Debug, Clone, Copy)]
pub struct VerifyTolerances {
    pub residual: f64,
    pub fixed_point_rel: f64,
    pub merit_order: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances { residual: 1e-6, fixed_point_rel: 1e-4, merit_order: 1e-6 }
    }
}

/// Run the full pipeline on one case: build, couple, linearize, solve,
/// extract, verify.
pub fn run_single(case: &MarketCase, mode: Mode, adapter: &dyn MilpSolver) -> Result<RunOutcome> {
    run_single_with(case, mode, adapter, VerifyTolerances::default())
}

pub fn run_single_with(
    case: &MarketCase,
    mode: Mode,
    adapter: &dyn MilpSolver,
    tol: VerifyTolerances,
) -> Result<RunOutcome> {
    let report = crate::case::validate(case);
    if !report.is_ok() {
        return Err(Error::Validation(report.errors));
    }
    let sys = build_coupled_system(case, mode)?;
    let big_m = estimate_big_m(&sys, case)?;
    let objective = if case.solver.secondary_objective {
        MilpObjective::Welfare
    } else {
        MilpObjective::Constant
    };
    let mut model = assemble_milp(&sys, &big_m, objective)?;
    if case.solver.warm_start {
        model.warm_start = welfare_warm_start(&sys, &model).ok();
    }
    let limits = SolveLimits {
        time_limit_s: Some(case.solver.time_limit_s),
        threads: None,
    };
    let result = adapter.submit(&model, &limits)?;
    let assignment = match result.status {
        SolveStatus::Optimal | SolveStatus::Feasible => result.assignment.unwrap(),
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible("equilibrium MILP is infeasible".into()))
        }
        SolveStatus::Timeout => {
            return Err(Error::Infeasible(
                "solver hit the time limit without an incumbent".into(),
            ))
        }
    };
    let solution = EquilibriumSolution::from_assignment(case, mode, &assignment)?;

    let residuals = residual_report(&assignment, &sys, &big_m)?;
    let fixed_point = fixed_point_check(&solution, case, tol.fixed_point_rel, adapter)?;
    let (merit_order_checked, merit_order_max_gap) = match mode {
        Mode::Proposed => merit_order_gap(case, &solution)?,
        Mode::CapAndTrade => (false, 0.0),
    };
    let pass = residuals.pass(tol.residual)
        && fixed_point.pass
        && (!merit_order_checked || merit_order_max_gap <= tol.merit_order);

    let verification = VerificationReport {
        residuals,
        fixed_point,
        merit_order_checked,
        merit_order_max_gap,
        pass,
    };

    let status = match result.status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Feasible => "feasible",
        _ => unreachable!(),
    };
    let row = StudyRow {
        label: "single".into(),
        status: status.into(),
        avg_electricity_price: solution.average_electricity_price(),
        avg_gas_price: solution.average_gas_price(),
        carbon_price: solution.average_carbon_price(),
        total_emission: solution.total_emission(),
        avg_hourly_emission: solution.total_emission() / case.time.horizon as f64,
        generator_energy: case
            .dispatchable()
            .map(|g| (g.id.clone(), solution.energy_of(&g.id)))
            .collect(),
        verified: pass,
        solve_ms: result.stats.wall_ms,
        nodes: result.stats.nodes,
    };
    Ok(RunOutcome { solution, row, verification, system: sys, big_m, model })
}

/// MIP start for the equilibrium MILP from the combined-welfare LP.
///
/// The coupled KKT system is the optimality system of the welfare LP, so
/// the LP's basic primal-dual point satisfies every continuous row; the
/// binaries follow from its complementarity pattern. The adapter still
/// verifies the start row by row, so a wrong start costs nothing.
pub fn welfare_warm_start(
    sys: &EquilibriumSystem,
    model: &crate::milp::MilpModel,
) -> Result<Vec<f64>> {
    let lp = welfare_lp(sys)?;
    let lp_sol = solve_lp_with_duals(&lp)?;
    if lp_sol.status != SolveStatus::Optimal {
        return Err(Error::Infeasible("welfare LP not optimal".into()));
    }
    let mut start = vec![0.0; model.vars.len()];
    let mut primal_values = std::collections::BTreeMap::new();
    for (symbol, value) in &lp_sol.primal {
        if let Some(idx) = model.var_index(symbol) {
            start[idx] = *value;
        }
        primal_values.insert(symbol.clone(), *value);
    }
    for (symbol, value) in &lp_sol.duals {
        if let Some(idx) = model.var_index(symbol) {
            start[idx] = *value;
        }
    }
    for (pair, binding) in sys.pairs.iter().zip(&model.bindings) {
        let slack = pair.slack.eval(&primal_values)?;
        let dual = lp_sol.duals.get(&pair.dual).copied().unwrap_or(0.0);
        start[binding.binary_col] = if slack > dual.max(1e-9) { 1.0 } else { 0.0 };
    }
    Ok(start)
}

/// Compare per-period carbon prices against the merit-order oracle wherever
/// the comparison is well-posed (all demand served, off breakpoints).
fn merit_order_gap(case: &MarketCase, sol: &EquilibriumSolution) -> Result<(bool, f64)> {
    let clearing = merit_order_for_case(case, &sol.emissions_per_period)?;
    let k = case.time.clearing_scalar as f64;
    let full_demand = case.carbon.total_demand() * k;
    let mut checked = false;
    let mut max_gap = 0.0f64;
    for (tc, period) in clearing.iter().enumerate() {
        let served: f64 = case
            .carbon
            .demands
            .iter()
            .map(|o| sol.served_carbon[&(o.id.clone(), tc + 1)])
            .sum();
        if period.at_breakpoint || (served - full_demand).abs() > 1e-9 {
            continue;
        }
        checked = true;
        max_gap = max_gap.max((sol.carbon_price[tc] - period.price).abs());
    }
    Ok((checked, max_gap))
}

/// Kind of sweep to run over a base case.
#[derive(Debug, Clone)]
pub enum SweepKind {
    /// Multiplicative electricity demand growth, in percent.
    DemandGrowth(Vec<f64>),
    /// Allowance totals: offers scaled proportionally in proposed mode, the
    /// cap set directly in cap-and-trade mode.
    AllowanceCap(Vec<f64>),
    Retrofit(Vec<RetrofitStrategy>),
    /// Carbon-market clearing scalars (hours per period).
    ClearingTime(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrofitChange {
    pub generator: String,
    pub cost: f64,
    pub emission_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrofitStrategy {
    pub label: String,
    pub changes: Vec<RetrofitChange>,
}

/// Apply a retrofit strategy to a copy of the case.
pub fn apply_retrofit(case: &MarketCase, strategy: &RetrofitStrategy) -> Result<MarketCase> {
    let mut out = case.clone();
    for change in &strategy.changes {
        let generator = out
            .power
            .generators
            .iter_mut()
            .find(|g| g.id == change.generator)
            .ok_or_else(|| Error::model(format!("unknown generator id {}", change.generator)))?;
        generator.cost = change.cost;
        generator.emission_rate = change.emission_rate;
    }
    Ok(out)
}

/// Scale every bus's hourly demand by `1 + growth_percent / 100`.
pub fn apply_demand_growth(case: &MarketCase, growth_percent: f64) -> MarketCase {
    let mut out = case.clone();
    let factor = 1.0 + growth_percent / 100.0;
    for profile in out.power.demand.values_mut() {
        for v in profile.iter_mut() {
            *v *= factor;
        }
    }
    out
}

/// Set the allowance total: proposed mode scales the offer ladder
/// proportionally, cap-and-trade sets the cap directly.
pub fn apply_allowance_total(case: &MarketCase, total: f64, mode: Mode) -> MarketCase {
    let mut out = case.clone();
    match mode {
        Mode::Proposed => {
            let current = out.carbon.total_offered();
            if current > 0.0 {
                let factor = total / current;
                for offer in &mut out.carbon.offers {
                    offer.amount *= factor;
                }
            }
            out.carbon.cap = Some(total);
        }
        Mode::CapAndTrade => {
            out.carbon.cap = Some(total);
        }
    }
    out
}

fn scenario_cases(
    case: &MarketCase,
    kind: &SweepKind,
    mode: Mode,
) -> Result<Vec<(String, MarketCase)>> {
    match kind {
        SweepKind::DemandGrowth(growths) => Ok(growths
            .iter()
            .map(|g| (format!("{g}%"), apply_demand_growth(case, *g)))
            .collect()),
        SweepKind::AllowanceCap(totals) => Ok(totals
            .iter()
            .map(|c| (format!("{c}"), apply_allowance_total(case, *c, mode)))
            .collect()),
        SweepKind::Retrofit(strategies) => {
            let mut cases = vec![("baseline".to_string(), case.clone())];
            for strategy in strategies {
                cases.push((strategy.label.clone(), apply_retrofit(case, strategy)?));
            }
            Ok(cases)
        }
        SweepKind::ClearingTime(scalars) => {
            let mut cases = Vec::new();
            for k in scalars {
                if *k == 0 || case.time.horizon % k != 0 {
                    return Err(Error::InvalidCase(format!(
                        "clearing scalar {k} does not divide horizon {}",
                        case.time.horizon
                    )));
                }
                let mut scenario = case.clone();
                scenario.time.clearing_scalar = *k;
                cases.push((format!("per-{k}-hour"), scenario));
            }
            Ok(cases)
        }
    }
}

/// Run a sweep; infeasible points produce marked rows instead of aborting.
/// Scenarios run concurrently up to `solver.sweep_workers`, and rows come
/// back in sweep order.
pub fn run_sweep(case: &MarketCase, kind: &SweepKind, mode: Mode) -> Result<Vec<StudyRow>> {
    let scenarios = scenario_cases(case, kind, mode)?;
    let workers = case
        .solver
        .sweep_workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
        .clamp(1, scenarios.len().max(1));

    let mut rows: Vec<Option<StudyRow>> = (0..scenarios.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let scenarios_ref = &scenarios;
    let next_ref = &next;
    let results: std::sync::Mutex<BTreeMap<usize, StudyRow>> =
        std::sync::Mutex::new(BTreeMap::new());
    let results_ref = &results;

    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            handles.push(scope.spawn(move || -> Result<()> {
                loop {
                    let i = next_ref.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= scenarios_ref.len() {
                        return Ok(());
                    }
                    let (label, scenario) = &scenarios_ref[i];
                    let adapter = adapter_from_config(&scenario.solver)?;
                    let row = match run_single(scenario, mode, adapter.as_ref()) {
                        Ok(outcome) => StudyRow { label: label.clone(), ..outcome.row },
                        Err(Error::Infeasible(_)) => {
                            StudyRow::failed(label.clone(), "infeasible".into())
                        }
                        Err(e) => return Err(e),
                    };
                    results_ref.lock().unwrap().insert(i, row);
                }
            }));
        }
        for handle in handles {
            handle.join().expect("sweep worker panicked")?;
        }
        Ok(())
    })?;

    for (i, row) in results.into_inner().unwrap() {
        rows[i] = Some(row);
    }
    Ok(rows.into_iter().map(|r| r.expect("row computed")).collect())
}

/// Demand-growth sweep (percent values).
pub fn sweep_demand(case: &MarketCase, growths: &[f64], mode: Mode) -> Result<Vec<StudyRow>> {
    run_sweep(case, &SweepKind::DemandGrowth(growths.to_vec()), mode)
}

/// Retrofit study; the baseline row comes first.
pub fn study_retrofit(
    case: &MarketCase,
    strategies: &[RetrofitStrategy],
    mode: Mode,
) -> Result<Vec<StudyRow>> {
    run_sweep(case, &SweepKind::Retrofit(strategies.to_vec()), mode)
}

/// Clearing-time study over divisor scalars.
pub fn study_clearing_time(
    case: &MarketCase,
    scalars: &[usize],
    mode: Mode,
) -> Result<Vec<StudyRow>> {
    run_sweep(case, &SweepKind::ClearingTime(scalars.to_vec()), mode)
}

/// Allowance-total sweep.
pub fn study_cap_sweep(case: &MarketCase, totals: &[f64], mode: Mode) -> Result<Vec<StudyRow>> {
    run_sweep(case, &SweepKind::AllowanceCap(totals.to_vec()), mode)
}

/// Fixed CSV columns followed by one energy column per generator.
pub fn write_csv<W: std::io::Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = out;
    let gen_ids: Vec<String> = rows
        .iter()
        .find(|r| !r.generator_energy.is_empty())
        .map(|r| r.generator_energy.iter().map(|(id, _)| id.clone()).collect())
        .unwrap_or_default();
    let mut header = vec![
        "label".to_string(),
        "status".to_string(),
        "avg_electricity_price".to_string(),
        "avg_gas_price".to_string(),
        "carbon_price".to_string(),
        "total_emission".to_string(),
        "avg_hourly_emission".to_string(),
    ];
    header.extend(gen_ids.iter().map(|id| format!("energy_{id}")));
    header.extend(["verified".to_string(), "solve_ms".to_string(), "nodes".to_string()]);
    writeln!(w, "{}", header.join(","))?;

    for row in rows {
        let mut fields = vec![
            row.label.clone(),
            row.status.clone(),
            fmt_cell(row.avg_electricity_price),
            fmt_cell(row.avg_gas_price),
            fmt_cell(row.carbon_price),
            fmt_cell(row.total_emission),
            fmt_cell(row.avg_hourly_emission),
        ];
        for id in &gen_ids {
            let v = row
                .generator_energy
                .iter()
                .find(|(g, _)| g == id)
                .map(|(_, v)| *v)
                .unwrap_or(f64::NAN);
            fields.push(fmt_cell(v));
        }
        fields.push(row.verified.to_string());
        fields.push(row.solve_ms.to_string());
        fields.push(row.nodes.to_string());
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        "".to_string()
    } else {
        // Normalize negative zero so output stays byte-deterministic
        // across solvers.
        format!("{:.6}", if v == 0.0 { 0.0 } else { v })
    }
}

/// JSON report mirroring the CSV plus solver diagnostics.
pub fn rows_to_json(rows: &[StudyRow]) -> serde_json::Value {
    serde_json::json!({ "rows": rows })
}

/// Structured JSON view of a solution, prices and dispatch by entity.
pub fn solution_to_json(case: &MarketCase, sol: &EquilibriumSolution) -> serde_json::Value {
    let horizon = case.time.horizon;
    let per_hour = |map: &BTreeMap<(String, usize), f64>, id: &str| -> Vec<f64> {
        (1..=horizon).map(|t| map[&(id.to_string(), t)]).collect()
    };
    let dispatch: BTreeMap<String, Vec<f64>> = case
        .dispatchable()
        .map(|g| (g.id.clone(), per_hour(&sol.dispatch, &g.id)))
        .collect();
    let lambda: BTreeMap<String, Vec<f64>> = case
        .power
        .buses
        .iter()
        .map(|b| (b.clone(), per_hour(&sol.lambda, b)))
        .collect();
    let mu: BTreeMap<String, Vec<f64>> = case
        .gas
        .nodes
        .iter()
        .map(|n| (n.clone(), per_hour(&sol.mu, n)))
        .collect();
    serde_json::json!({
        "mode": format!("{:?}", sol.mode),
        "dispatch": dispatch,
        "lambda": lambda,
        "mu": mu,
        "carbon_price": sol.carbon_price,
        "emissions_per_hour": sol.emissions_per_hour,
        "avg_electricity_price": sol.average_electricity_price(),
        "avg_gas_price": sol.average_gas_price(),
        "avg_carbon_price": sol.average_carbon_price(),
        "total_emission": sol.total_emission(),
        "electricity_objective": sol.electricity_objective,
        "gas_objective": sol.gas_objective,
        "carbon_objective": sol.carbon_objective,
    })
}
