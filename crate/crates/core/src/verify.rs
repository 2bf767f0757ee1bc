//! Independent checks that a claimed equilibrium is genuine.
//!
//! Four routes, none of which reuses the MILP path it is checking: residual
//! evaluation of the KKT system, per-market fixed-point re-solves through
//! the solver adapter, a merit-order clearing oracle for the carbon market,
//! and brute-force active-set enumeration for micro cases.

use std::collections::BTreeMap;

use crate::case::MarketCase;
use crate::error::Error;
use crate::kkt::{
    assemble_equilibrium_problem, build_coupled_system, EquilibriumSystem, Mode,
};
use crate::lp::{LinearProgram, Sense, Symbol};
use crate::markets::{
    build_cem_lp, build_electricity_lp, build_gas_lp, sym, GasDispatch, GasPrices,
};
use crate::milp::{BigMConfig, MilpModel};
use crate::solver::{MilpSolver, SolveLimits, SolveStatus};
use crate::Result;

/// Primal dispatch, prices, and per-market objectives of one equilibrium.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub mode: Mode,
    /// Every primal and dual value by structured name.
    pub assignment: BTreeMap<Symbol, f64>,
    pub dispatch: BTreeMap<(String, usize), f64>,
    pub served_load: BTreeMap<(String, usize), f64>,
    pub gas_supply: BTreeMap<(String, usize), f64>,
    pub served_gas: BTreeMap<(String, usize), f64>,
    pub allowance_sales: BTreeMap<(String, usize), f64>,
    pub served_carbon: BTreeMap<(String, usize), f64>,
    pub lambda: BTreeMap<(String, usize), f64>,
    pub mu: BTreeMap<(String, usize), f64>,
    /// Carbon price per clearing period (single entry in cap-and-trade mode).
    pub carbon_price: Vec<f64>,
    /// Carbon price seen by each hour.
    pub hourly_carbon_price: Vec<f64>,
    pub emissions_per_hour: Vec<f64>,
    pub emissions_per_period: Vec<f64>,
    pub electricity_objective: f64,
    pub gas_objective: f64,
    /// Carbon-market objective; absent in cap-and-trade mode.
    pub carbon_objective: Option<f64>,
}

impl EquilibriumSolution {
    /// Assemble the structured view of a solver assignment and recompute
    /// emissions and objectives from the case data.
    pub fn from_assignment(
        case: &MarketCase,
        mode: Mode,
        assignment: &BTreeMap<Symbol, f64>,
    ) -> Result<Self> {
        let horizon = case.time.horizon;
        let periods = case.time.periods();
        let get = |s: &Symbol| -> Result<f64> {
            assignment
                .get(s)
                .copied()
                .ok_or_else(|| Error::model(format!("assignment missing {s}")))
        };

        let mut dispatch = BTreeMap::new();
        let mut emissions_per_hour = vec![0.0; horizon];
        for g in case.dispatchable() {
            for t in 1..=horizon {
                let p = get(&sym::p_g(&g.id, t))?;
                emissions_per_hour[t - 1] += g.emission_rate * p;
                dispatch.insert((g.id.clone(), t), p);
            }
        }
        let mut emissions_per_period = vec![0.0; periods];
        for t in 1..=horizon {
            emissions_per_period[case.time.period_of(t) - 1] += emissions_per_hour[t - 1];
        }

        let mut served_load = BTreeMap::new();
        let mut lambda = BTreeMap::new();
        for bus in &case.power.buses {
            for t in 1..=horizon {
                served_load.insert((bus.clone(), t), get(&sym::p_ld(bus, t))?);
                lambda.insert((bus.clone(), t), get(&sym::lambda(bus, t))?);
            }
        }
        let mut gas_supply = BTreeMap::new();
        for w in &case.gas.suppliers {
            for t in 1..=horizon {
                gas_supply.insert((w.id.clone(), t), get(&sym::f_s(&w.id, t))?);
            }
        }
        let mut served_gas = BTreeMap::new();
        let mut mu = BTreeMap::new();
        for node in &case.gas.nodes {
            for t in 1..=horizon {
                served_gas.insert((node.clone(), t), get(&sym::f_ld(node, t))?);
                mu.insert((node.clone(), t), get(&sym::mu(node, t))?);
            }
        }

        let mut allowance_sales = BTreeMap::new();
        let mut served_carbon = BTreeMap::new();
        let carbon_price: Vec<f64>;
        match mode {
            Mode::Proposed => {
                for r in &case.carbon.offers {
                    for tc in 1..=periods {
                        allowance_sales.insert((r.id.clone(), tc), get(&sym::q_c(&r.id, tc))?);
                    }
                }
                for o in &case.carbon.demands {
                    for tc in 1..=periods {
                        served_carbon.insert((o.id.clone(), tc), get(&sym::q_ld(&o.id, tc))?);
                    }
                }
                carbon_price = (1..=periods)
                    .map(|tc| get(&sym::p_co2(tc)))
                    .collect::<Result<_>>()?;
                // Allowance balance must reproduce the recomputed emissions.
                for tc in 1..=periods {
                    let sold: f64 = case
                        .carbon
                        .offers
                        .iter()
                        .map(|r| allowance_sales[&(r.id.clone(), tc)])
                        .sum();
                    let served: f64 = case
                        .carbon
                        .demands
                        .iter()
                        .map(|o| served_carbon[&(o.id.clone(), tc)])
                        .sum();
                    let implied = sold - served;
                    if (implied - emissions_per_period[tc - 1]).abs() > 1e-6 {
                        return Err(Error::VerificationFailed(format!(
                            "allowance balance of period {tc} implies {implied} t, dispatch emits {} t",
                            emissions_per_period[tc - 1]
                        )));
                    }
                }
            }
            Mode::CapAndTrade => {
                carbon_price = vec![get(&sym::p_cap())?];
            }
        }
        let hourly_carbon_price: Vec<f64> = (1..=horizon)
            .map(|t| match mode {
                Mode::Proposed => carbon_price[case.time.period_of(t) - 1],
                Mode::CapAndTrade => carbon_price[0],
            })
            .collect();

        // Per-market objectives at the solution's own prices.
        let mut electricity_objective = 0.0;
        for g in case.dispatchable() {
            for t in 1..=horizon {
                let mut cost = g.cost + g.emission_rate * hourly_carbon_price[t - 1];
                if let (Some(zeta), Some(node)) = (g.heat_rate, g.gas_node.as_ref()) {
                    cost += zeta * mu[&(node.clone(), t)];
                }
                electricity_objective += cost * dispatch[&(g.id.clone(), t)];
            }
        }
        for bus in &case.power.buses {
            for t in 1..=horizon {
                electricity_objective += case.penalties.lost_electric_load
                    * (case.power.demand_at(bus, t - 1) - served_load[&(bus.clone(), t)]);
            }
        }
        let mut gas_objective = 0.0;
        for w in &case.gas.suppliers {
            for t in 1..=horizon {
                gas_objective += w.cost * gas_supply[&(w.id.clone(), t)];
            }
        }
        for node in &case.gas.nodes {
            for t in 1..=horizon {
                gas_objective += case.penalties.lost_gas_load
                    * (case.gas.demand_at(node, t - 1) - served_gas[&(node.clone(), t)]);
            }
        }
        let carbon_objective = match mode {
            Mode::Proposed => {
                let k = case.time.clearing_scalar as f64;
                let mut obj = 0.0;
                for r in &case.carbon.offers {
                    for tc in 1..=periods {
                        obj += r.cost * allowance_sales[&(r.id.clone(), tc)];
                    }
                }
                for o in &case.carbon.demands {
                    for tc in 1..=periods {
                        obj += case.penalties.unmet_carbon_demand
                            * (o.amount * k - served_carbon[&(o.id.clone(), tc)]);
                    }
                }
                Some(obj)
            }
            Mode::CapAndTrade => None,
        };

        Ok(EquilibriumSolution {
            mode,
            assignment: assignment.clone(),
            dispatch,
            served_load,
            gas_supply,
            served_gas,
            allowance_sales,
            served_carbon,
            lambda,
            mu,
            carbon_price,
            hourly_carbon_price,
            emissions_per_hour,
            emissions_per_period,
            electricity_objective,
            gas_objective,
            carbon_objective,
        })
    }

    pub fn total_emission(&self) -> f64 {
        self.emissions_per_hour.iter().sum()
    }

    /// Served-load-weighted average electricity price [$/MWh].
    pub fn average_electricity_price(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (key, load) in &self.served_load {
            num += load * self.lambda[key];
            den += load;
        }
        if den > 0.0 {
            normalize_zero(num / den)
        } else {
            0.0
        }
    }

    /// Served-gas-weighted average gas price [$/Mm3], generation burn
    /// included through the nodal totals.
    pub fn average_gas_price(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (key, served) in &self.served_gas {
            num += served * self.mu[key];
            den += served;
        }
        if den > 0.0 {
            normalize_zero(num / den)
        } else {
            0.0
        }
    }

    /// Unweighted mean carbon price over clearing periods.
    pub fn average_carbon_price(&self) -> f64 {
        if self.carbon_price.is_empty() {
            return 0.0;
        }
        normalize_zero(self.carbon_price.iter().sum::<f64>() / self.carbon_price.len() as f64)
    }

    pub fn energy_of(&self, gen: &str) -> f64 {
        self.dispatch
            .iter()
            .filter(|((id, _), _)| id == gen)
            .map(|(_, p)| *p)
            .sum()
    }
}

fn normalize_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// KKT residual maxima and the big-M audit of one solution.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualSummary {
    pub max_stationarity_residual: f64,
    pub max_complementarity_product: f64,
    /// Largest min(slack, dual) over all pairs.
    pub max_min_slack_dual: f64,
    pub max_primal_violation: f64,
    pub big_m_flags: Vec<String>,
}

impl ResidualSummary {
    pub fn pass(&self, tol: f64) -> bool {
        self.max_stationarity_residual <= tol
            && self.max_complementarity_product <= tol
            && self.max_primal_violation <= tol
            && self.big_m_flags.is_empty()
    }
}

/// Relative headroom below a big-M bound that triggers an audit flag.
pub const BIG_M_HEADROOM: f64 = 1e-3;

/// Evaluate stationarity residuals, complementarity products, primal
/// violations, and the big-M audit at a full assignment.
pub fn residual_report(
    assignment: &BTreeMap<Symbol, f64>,
    sys: &EquilibriumSystem,
    cfg: &BigMConfig,
) -> Result<ResidualSummary> {
    let mut max_st = 0.0f64;
    for st in &sys.stationarity {
        max_st = max_st.max(st.expr.eval(assignment)?.abs());
    }
    let mut max_primal = 0.0f64;
    for eq in &sys.equalities {
        let mut acc = -eq.rhs;
        for (s, c) in &eq.terms {
            acc += c * assignment
                .get(s)
                .ok_or_else(|| Error::model(format!("assignment missing {s}")))?;
        }
        max_primal = max_primal.max(acc.abs());
    }
    let mut max_product = 0.0f64;
    let mut max_min = 0.0f64;
    let mut flags = Vec::new();
    for pair in &sys.pairs {
        let slack = pair.slack.eval(assignment)?;
        let dual = *assignment
            .get(&pair.dual)
            .ok_or_else(|| Error::model(format!("assignment missing {}", pair.dual)))?;
        max_primal = max_primal.max((-slack).max(0.0)).max((-dual).max(0.0));
        max_product = max_product.max((slack.max(0.0)) * (dual.max(0.0)));
        max_min = max_min.max(slack.max(0.0).min(dual.max(0.0)));
        let m = cfg.for_family(&pair.family);
        let m_slack = m.slack * crate::milp::SLACK_M_MARGIN;
        if slack >= m_slack * (1.0 - BIG_M_HEADROOM) {
            flags.push(format!(
                "slack of {} at {slack:.6} within headroom of M={m_slack}",
                pair.dual
            ));
        }
        if dual >= m.dual * (1.0 - BIG_M_HEADROOM) {
            flags.push(format!(
                "dual {} at {dual:.6} within headroom of M={}",
                pair.dual, m.dual
            ));
        }
    }
    Ok(ResidualSummary {
        max_stationarity_residual: max_st,
        max_complementarity_product: max_product,
        max_min_slack_dual: max_min,
        max_primal_violation: max_primal,
        big_m_flags: flags,
    })
}

/// Clearing of one carbon period by the merit-order oracle.
#[derive(Debug, Clone)]
pub struct PeriodClearing {
    pub price: f64,
    /// Quantity sold per offer id, ladder order.
    pub allocations: Vec<(String, f64)>,
    pub served_demand: f64,
    pub requirement: f64,
    /// Requirement sits on a cumulative-supply breakpoint; the LP price is
    /// an interval there and equality comparisons should be skipped.
    pub at_breakpoint: bool,
}

/// Merit-order clearing: fill the ascending offer ladder with generation
/// emissions plus exogenous demand; the marginal offer prices the period.
///
/// `offers` are (id, amount, cost) with amounts already scaled to the
/// period length, `demand` likewise. When the ladder cannot cover
/// everything, demand is curtailed and priced at `c_n`; emissions beyond
/// the whole ladder are infeasible.
pub fn merit_order_cem(
    emissions: &[f64],
    offers: &[(String, f64, f64)],
    demand: f64,
    c_n: f64,
) -> Result<Vec<PeriodClearing>> {
    let mut ladder: Vec<&(String, f64, f64)> = offers.iter().collect();
    ladder.sort_by(|a, b| a.2.total_cmp(&b.2));
    let total: f64 = ladder.iter().map(|o| o.1).sum();

    let mut result = Vec::with_capacity(emissions.len());
    for (tc, &e) in emissions.iter().enumerate() {
        if e < -1e-9 {
            return Err(Error::model(format!("negative emissions in period {}", tc + 1)));
        }
        if e > total + 1e-9 {
            return Err(Error::Infeasible(format!(
                "period {}: generation emissions {e} exceed the offer ladder total {total}",
                tc + 1
            )));
        }
        let served_demand = demand.min(total - e);
        let requirement = e + served_demand;
        let curtailed = served_demand < demand - 1e-12;

        let mut allocations = Vec::with_capacity(ladder.len());
        let mut remaining = requirement;
        let mut price = 0.0;
        for (id, amount, cost) in ladder.iter() {
            let take = remaining.min(*amount);
            allocations.push((id.clone(), take));
            if take > 1e-12 {
                price = *cost;
            }
            remaining -= take;
        }
        if requirement <= 1e-12 {
            price = 0.0;
        }
        if curtailed {
            price = c_n;
        }
        let mut cumulative = 0.0;
        let mut at_breakpoint = requirement <= 1e-9;
        for (_, amount, _) in ladder.iter() {
            cumulative += amount;
            if (requirement - cumulative).abs() <= 1e-9 {
                at_breakpoint = true;
            }
        }
        result.push(PeriodClearing {
            price,
            allocations,
            served_demand,
            requirement,
            at_breakpoint,
        });
    }
    Ok(result)
}

/// Merit-order clearing for a case, scaling the hourly ladder to periods.
pub fn merit_order_for_case(
    case: &MarketCase,
    emissions_per_period: &[f64],
) -> Result<Vec<PeriodClearing>> {
    let k = case.time.clearing_scalar as f64;
    let offers: Vec<(String, f64, f64)> = case
        .carbon
        .offers
        .iter()
        .map(|r| (r.id.clone(), r.amount * k, r.cost))
        .collect();
    merit_order_cem(
        emissions_per_period,
        &offers,
        case.carbon.total_demand() * k,
        case.penalties.unmet_carbon_demand,
    )
}

/// One market's standalone re-solve against the equilibrium claim.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MarketFixedPoint {
    pub market: String,
    pub standalone_objective: f64,
    pub equilibrium_objective: f64,
    pub relative_gap: f64,
    pub max_primal_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FixedPointReport {
    pub markets: Vec<MarketFixedPoint>,
    pub pass: bool,
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn solve_market_lp(
    lp: &LinearProgram,
    adapter: &dyn MilpSolver,
    limits: &SolveLimits,
) -> Result<(f64, BTreeMap<Symbol, f64>)> {
    let model = MilpModel::from_lp(lp);
    let result = adapter.submit(&model, limits)?;
    let assignment = match result.status {
        SolveStatus::Optimal | SolveStatus::Feasible => result.assignment.unwrap(),
        other => {
            return Err(Error::VerificationFailed(format!(
                "standalone {} LP returned {other:?}",
                lp.market
            )))
        }
    };
    let dense = lp.dense_assignment(&assignment)?;
    Ok((lp.objective_value(&dense), assignment))
}

fn max_deviation(
    claimed: &BTreeMap<Symbol, f64>,
    standalone: &BTreeMap<Symbol, f64>,
) -> f64 {
    standalone
        .iter()
        .filter_map(|(s, v)| claimed.get(s).map(|c| (c - v).abs()))
        .fold(0.0, f64::max)
}

/// Re-solve each market's LP with the other markets' coupled quantities
/// frozen at the claimed solution and compare objectives.
///
/// No operator may be able to reduce its cost by deviating, so each
/// standalone optimum must match the equilibrium objective within `tol`
/// (relative).
pub fn fixed_point_check(
    sol: &EquilibriumSolution,
    case: &MarketCase,
    tol: f64,
    adapter: &dyn MilpSolver,
) -> Result<FixedPointReport> {
    let limits = SolveLimits {
        time_limit_s: Some(case.solver.time_limit_s),
        threads: None,
    };
    let mut markets = Vec::new();

    let mut gas_prices = GasPrices::new();
    for ((node, t), price) in &sol.mu {
        gas_prices.insert((node.clone(), *t), *price);
    }
    let elec = build_electricity_lp(case, &gas_prices, &sol.hourly_carbon_price)?;
    let (obj, assignment) = solve_market_lp(&elec.lp, adapter, &limits)?;
    markets.push(MarketFixedPoint {
        market: "electricity".into(),
        standalone_objective: obj,
        equilibrium_objective: sol.electricity_objective,
        relative_gap: relative_gap(obj, sol.electricity_objective),
        max_primal_deviation: max_deviation(&sol.assignment, &assignment),
        pass: relative_gap(obj, sol.electricity_objective) <= tol,
    });

    let mut dispatch = GasDispatch::new();
    for g in case.gas_fired() {
        for t in 1..=case.time.horizon {
            dispatch.insert((g.id.clone(), t), sol.dispatch[&(g.id.clone(), t)]);
        }
    }
    let gas = build_gas_lp(case, &dispatch)?;
    let (obj, assignment) = solve_market_lp(&gas.lp, adapter, &limits)?;
    markets.push(MarketFixedPoint {
        market: "gas".into(),
        standalone_objective: obj,
        equilibrium_objective: sol.gas_objective,
        relative_gap: relative_gap(obj, sol.gas_objective),
        max_primal_deviation: max_deviation(&sol.assignment, &assignment),
        pass: relative_gap(obj, sol.gas_objective) <= tol,
    });

    if let Some(carbon_objective) = sol.carbon_objective {
        let cem = build_cem_lp(case, &sol.emissions_per_period)?;
        let (obj, assignment) = solve_market_lp(&cem.lp, adapter, &limits)?;
        markets.push(MarketFixedPoint {
            market: "carbon".into(),
            standalone_objective: obj,
            equilibrium_objective: carbon_objective,
            relative_gap: relative_gap(obj, carbon_objective),
            max_primal_deviation: max_deviation(&sol.assignment, &assignment),
            pass: relative_gap(obj, carbon_objective) <= tol,
        });
    }

    let pass = markets.iter().all(|m| m.pass);
    Ok(FixedPointReport { markets, pass })
}

/// Pair count above which brute-force enumeration refuses to run.
pub const ENUMERATION_BOUND: usize = 24;

/// Enumerate all complementarity active-set patterns of a micro case and
/// keep every sign-feasible solution of the resulting linear systems,
/// deduplicated by primal values.
pub fn brute_force_equilibrium(
    case: &MarketCase,
    mode: Mode,
) -> Result<Vec<EquilibriumSolution>> {
    let sys = build_coupled_system(case, mode)?;
    assemble_equilibrium_problem(&sys)?;
    let pairs = sys.pairs.len();
    if pairs > ENUMERATION_BOUND {
        return Err(Error::EnumerationBound { pairs, bound: ENUMERATION_BOUND });
    }

    // Unknown ordering: primal variables then duals.
    let mut index: BTreeMap<&Symbol, usize> = BTreeMap::new();
    for (i, s) in sys.primal.iter().chain(sys.duals.iter()).enumerate() {
        index.insert(s, i);
    }
    let n = index.len();
    let m_fixed = sys.equalities.len() + sys.stationarity.len();
    if m_fixed + pairs != n {
        return Err(Error::model(format!(
            "KKT system is not square: {} equations vs {} unknowns",
            m_fixed + pairs,
            n
        )));
    }

    // Dense row-major base system (equalities + stationarity), with the
    // last `pairs` rows rewritten per active-set pattern.
    let mut base = vec![0.0f64; n * n];
    let mut rhs_base = vec![0.0f64; n];
    for (r, eq) in sys.equalities.iter().enumerate() {
        for (s, c) in &eq.terms {
            base[r * n + index[s]] += c;
        }
        rhs_base[r] = eq.rhs;
    }
    for (j, st) in sys.stationarity.iter().enumerate() {
        let r = sys.equalities.len() + j;
        for (s, c) in &st.expr.terms {
            base[r * n + index[s]] += c;
        }
        rhs_base[r] = -st.expr.constant;
    }

    // Per pair: the slack expression in index form and the dual column.
    let mut slack_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::with_capacity(pairs);
    let mut dual_cols: Vec<usize> = Vec::with_capacity(pairs);
    for pair in &sys.pairs {
        let mut terms: BTreeMap<usize, f64> = BTreeMap::new();
        for (s, c) in &pair.slack.terms {
            *terms.entry(index[s]).or_default() += c;
        }
        slack_rows.push((terms.into_iter().collect(), pair.slack.constant));
        dual_cols.push(index[&pair.dual]);
    }

    let n_primal = sys.primal.len();
    let scan = PatternScan {
        n,
        m_fixed,
        pairs,
        base: &base,
        rhs_base: &rhs_base,
        slack_rows: &slack_rows,
        dual_cols: &dual_cols,
    };

    // Patterns are independent; scan contiguous chunks concurrently and
    // merge by pattern index so the result is deterministic.
    let total: u64 = 1u64 << pairs;
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(8)
        .min(total.max(1) as usize);
    let mut found: Vec<(u64, Vec<f64>)> = if workers <= 1 || total < 1024 {
        scan.run(0, total)
    } else {
        let chunk = total.div_ceil(workers as u64);
        let mut parts: Vec<Vec<(u64, Vec<f64>)>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let scan = &scan;
                    let lo = w as u64 * chunk;
                    let hi = (lo + chunk).min(total);
                    scope.spawn(move || scan.run(lo, hi))
                })
                .collect();
            for handle in handles {
                parts.push(handle.join().expect("pattern scan panicked"));
            }
        });
        let mut all: Vec<(u64, Vec<f64>)> = parts.into_iter().flatten().collect();
        all.sort_by_key(|(pattern, _)| *pattern);
        all
    };

    // Deduplicate by primal values in pattern order.
    let mut kept: Vec<Vec<f64>> = Vec::new();
    found.retain(|(_, x)| {
        let duplicate = kept.iter().any(|p| {
            p.iter()
                .zip(&x[..n_primal])
                .all(|(a, b)| (a - b).abs() <= 1e-8)
        });
        if !duplicate {
            kept.push(x[..n_primal].to_vec());
        }
        !duplicate
    });

    found
        .into_iter()
        .map(|(_, solution)| {
            let assignment: BTreeMap<Symbol, f64> = index
                .iter()
                .map(|(s, i)| ((*s).clone(), solution[*i]))
                .collect();
            EquilibriumSolution::from_assignment(case, mode, &assignment)
        })
        .collect()
}

/// Shared inputs of the active-set pattern scan.
struct PatternScan<'a> {
    n: usize,
    m_fixed: usize,
    pairs: usize,
    base: &'a [f64],
    rhs_base: &'a [f64],
    slack_rows: &'a [(Vec<(usize, f64)>, f64)],
    dual_cols: &'a [usize],
}

enum Elimination {
    Unique,
    Inconsistent,
    Underdetermined,
}

impl<'a> PatternScan<'a> {
    fn run(&self, lo: u64, hi: u64) -> Vec<(u64, Vec<f64>)> {
        let n = self.n;
        let sign_tol = 1e-7;
        let mut scratch = vec![0.0f64; n * n];
        let mut rhs = vec![0.0f64; n];
        let mut x = vec![0.0f64; n];
        let mut out = Vec::new();

        for pattern in lo..hi {
            scratch.copy_from_slice(self.base);
            rhs.copy_from_slice(self.rhs_base);
            for k in 0..self.pairs {
                let r = self.m_fixed + k;
                if pattern & (1 << k) == 0 {
                    // Active slack: the primal constraint binds.
                    for (col, c) in &self.slack_rows[k].0 {
                        scratch[r * n + col] = *c;
                    }
                    rhs[r] = -self.slack_rows[k].1;
                } else {
                    scratch[r * n + self.dual_cols[k]] = 1.0;
                    rhs[r] = 0.0;
                }
            }

            match eliminate(&mut scratch, &mut rhs, &mut x, n) {
                Elimination::Unique => {}
                Elimination::Inconsistent => continue,
                Elimination::Underdetermined => {
                    // Rare: a consistent singular pattern. Take the
                    // minimum-norm point if it really solves the system.
                    if !self.solve_min_norm(pattern, &mut x) {
                        continue;
                    }
                }
            }

            let feasible = (0..self.pairs).all(|k| {
                let slack: f64 = self.slack_rows[k]
                    .0
                    .iter()
                    .map(|(i, c)| c * x[*i])
                    .sum::<f64>()
                    + self.slack_rows[k].1;
                slack >= -sign_tol && x[self.dual_cols[k]] >= -sign_tol
            });
            if feasible {
                out.push((pattern, x.clone()));
            }
        }
        out
    }

    fn solve_min_norm(&self, pattern: u64, x: &mut [f64]) -> bool {
        let n = self.n;
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        for r in 0..n {
            b[r] = self.rhs_base[r];
            for c in 0..n {
                a[(r, c)] = self.base[r * n + c];
            }
        }
        for k in 0..self.pairs {
            let r = self.m_fixed + k;
            for c in 0..n {
                a[(r, c)] = 0.0;
            }
            if pattern & (1 << k) == 0 {
                for (col, coeff) in &self.slack_rows[k].0 {
                    a[(r, *col)] = *coeff;
                }
                b[r] = -self.slack_rows[k].1;
            } else {
                a[(r, self.dual_cols[k])] = 1.0;
                b[r] = 0.0;
            }
        }
        let svd = a.clone().svd(true, true);
        match svd.solve(&b, 1e-10) {
            Ok(sol) => {
                if (&a * &sol - &b).amax() > 1e-8 {
                    return false;
                }
                x.copy_from_slice(sol.as_slice());
                true
            }
            Err(_) => false,
        }
    }
}

/// Row-echelon elimination with partial pivoting that classifies the
/// system. On `Unique`, `x` holds the solution.
fn eliminate(a: &mut [f64], b: &mut [f64], x: &mut [f64], n: usize) -> Elimination {
    let mut scale = 0.0f64;
    for v in a.iter() {
        scale = scale.max(v.abs());
    }
    let tiny = 1e-11 * scale.max(1.0);

    let mut pivot_col_of_row = vec![usize::MAX; n];
    let mut row = 0usize;
    for col in 0..n {
        let mut pivot_row = row;
        let mut pivot_val = 0.0;
        for r in row..n {
            let v = a[r * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val <= tiny {
            continue; // rank-deficient column
        }
        if pivot_row != row {
            for k in 0..n {
                a.swap(row * n + k, pivot_row * n + k);
            }
            b.swap(row, pivot_row);
        }
        let inv = 1.0 / a[row * n + col];
        for r in row + 1..n {
            let factor = a[r * n + col] * inv;
            if factor != 0.0 {
                a[r * n + col] = 0.0;
                let (top, bottom) = a.split_at_mut(r * n);
                let pivot_slice = &top[row * n + col + 1..row * n + n];
                let target = &mut bottom[col + 1..n];
                for (t, p) in target.iter_mut().zip(pivot_slice) {
                    *t -= factor * p;
                }
                b[r] -= factor * b[row];
            }
        }
        pivot_col_of_row[row] = col;
        row += 1;
        if row == n {
            break;
        }
    }

    if row < n {
        // Zero rows remain; any nonzero right-hand side is a contradiction.
        let tol = 1e-8 * scale.max(1.0);
        for r in row..n {
            if b[r].abs() > tol {
                return Elimination::Inconsistent;
            }
        }
        return Elimination::Underdetermined;
    }

    // Full rank: pivot columns are 0..n in order, back-substitute.
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Elimination::Unique
}

/// The combined welfare LP of a coupled system: primal feasibility rows
/// with the raw-cost objective. Its optimum is a third, independent route
/// to an equilibrium point (prices are its balance duals).
pub fn welfare_lp(sys: &EquilibriumSystem) -> Result<LinearProgram> {
    let mut lp = LinearProgram::new("welfare");
    let obj: BTreeMap<&Symbol, f64> = sys.welfare.iter().map(|(s, c)| (s, *c)).collect();
    const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut ids = BTreeMap::new();
    for p in &sys.primal {
        let id = lp.add_variable(p.clone(), FREE, obj.get(p).copied().unwrap_or(0.0))?;
        ids.insert(p.clone(), id);
    }
    lp.objective_constant = sys.welfare_constant;
    for eq in &sys.equalities {
        let terms = eq.terms.iter().map(|(s, c)| (ids[s], *c)).collect();
        lp.add_row(terms, Sense::Eq, eq.rhs, eq.dual.clone())?;
    }
    for pair in &sys.pairs {
        let terms = pair.slack.terms.iter().map(|(s, c)| (ids[s], *c)).collect();
        lp.add_row(terms, Sense::Ge, -pair.slack.constant, pair.dual.clone())?;
    }
    Ok(lp)
}
