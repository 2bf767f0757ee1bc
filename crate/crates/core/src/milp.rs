//! Big-M linearization of the complementarity pairs and assembly of the
//! joint MILP.
//!
//! Every pair `0 <= a perp b >= 0` becomes four rows over a fresh binary:
//! `a >= 0`, `b >= 0`, `a <= phi * M_a`, `b <= (1 - phi) * M_b`. Slack-side
//! constants come from case data, dual-side constants from cost-coefficient
//! bounds times a configurable scale. Per-family constants keep the
//! relaxation tight where the case data allows it.

use std::collections::BTreeMap;

use crate::case::MarketCase;
use crate::error::Error;
use crate::kkt::{assemble_equilibrium_problem, ComplementarityPair, EquilibriumSystem, Mode, CAP_FAMILY};
use crate::lp::{Sense, Symbol};
use crate::Result;

/// Big-M constants of one complementarity family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairBigM {
    /// Bound on the slack expression `a`.
    pub slack: f64,
    /// Bound on the dual multiplier `b`.
    pub dual: f64,
}

/// Per-family big-M constants plus the complementarity tolerance used by
/// audits and reports.
#[derive(Debug, Clone)]
pub struct BigMConfig {
    pub families: BTreeMap<String, PairBigM>,
    pub fallback: PairBigM,
    pub comp_tolerance: f64,
}

impl BigMConfig {
    pub fn for_family(&self, family: &str) -> PairBigM {
        self.families.get(family).copied().unwrap_or(self.fallback)
    }
}

fn finite_or(name: &str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::BigM(format!("unbounded symbol: {name} has no finite bound")));
    }
    // A zero bound means the slack is identically zero; keep M positive.
    Ok(value.max(1.0))
}

/// Derive per-family big-M constants from the case data.
///
/// Slack-side bounds are sharp ranges of the primal constraint slacks.
/// Dual-side bounds cap each multiplier family by the largest price it can
/// reflect (curtailment penalties plus marginal-cost ceilings), scaled by
/// `solver.big_m_scale`. The post-solve audit flags any value that comes
/// close to its bound.
pub fn estimate_big_m(sys: &EquilibriumSystem, case: &MarketCase) -> Result<BigMConfig> {
    let scale = case.solver.big_m_scale;
    let horizon = case.time.horizon as f64;
    let k = case.time.clearing_scalar as f64;
    let pen = &case.penalties;

    let max_supplier_cost =
        case.gas.suppliers.iter().map(|w| w.cost).fold(0.0, f64::max);
    let max_offer_cost = case.carbon.offers.iter().map(|r| r.cost).fold(0.0, f64::max);
    // Price ceilings: the marginal unit of gas or allowance is a supplier or
    // the curtailment penalty.
    let gas_price_bound = pen.lost_gas_load.max(max_supplier_cost);
    let carbon_price_bound = match sys.mode {
        Mode::Proposed => pen.unmet_carbon_demand.max(max_offer_cost),
        // The cap shadow price is bounded by the cost of backing out one ton
        // via the least emission-intensive marginal technology.
        Mode::CapAndTrade => {
            let min_eta = case
                .dispatchable()
                .filter(|g| g.emission_rate > 0.0)
                .map(|g| g.emission_rate)
                .fold(f64::INFINITY, f64::min);
            let max_cost = case.dispatchable().map(|g| g.cost).fold(0.0, f64::max);
            (pen.lost_electric_load + max_cost + gas_price_bound * max_heat_rate(case))
                / min_eta.max(1e-9)
        }
    };
    let mc_ceiling = case
        .dispatchable()
        .map(|g| {
            g.cost
                + g.heat_rate.unwrap_or(0.0) * gas_price_bound
                + g.emission_rate * carbon_price_bound
        })
        .fold(0.0, f64::max);
    let lambda_bound = pen.lost_electric_load.max(mc_ceiling);

    let max_gen_range = case
        .dispatchable()
        .map(|g| g.p_max - g.p_min)
        .fold(0.0, f64::max);
    let max_ramp_slack = case
        .dispatchable()
        .map(|g| g.ramp_limit() + (g.p_max - g.p_min))
        .fold(0.0, f64::max);
    let max_line_cap = case.power.lines.iter().map(|l| l.capacity).fold(0.0, f64::max);
    let max_load = case
        .power
        .demand
        .values()
        .flat_map(|p| p.iter().copied())
        .fold(0.0, f64::max);
    let max_supply_range = case
        .gas
        .suppliers
        .iter()
        .map(|w| w.max - w.min)
        .fold(0.0, f64::max);
    let max_pipe_cap = case.gas.pipelines.iter().map(|p| p.capacity).fold(0.0, f64::max);
    let max_gas_load = case
        .gas
        .demand
        .values()
        .flat_map(|p| p.iter().copied())
        .fold(0.0, f64::max);
    let max_offer = case.carbon.offers.iter().map(|r| r.amount).fold(0.0, f64::max);
    let max_carbon_demand =
        case.carbon.demands.iter().map(|o| o.amount).fold(0.0, f64::max);

    let mut families = BTreeMap::new();
    let mut insert = |family: &str, slack: f64, dual: f64| -> Result<()> {
        families.insert(
            family.to_string(),
            PairBigM {
                slack: finite_or(family, slack)?,
                dual: finite_or(family, dual * scale)?,
            },
        );
        Ok(())
    };

    insert("rho1_min", max_gen_range, lambda_bound + mc_ceiling)?;
    insert("rho1_max", max_gen_range, lambda_bound + mc_ceiling)?;
    // Ramp multipliers can telescope across the horizon.
    insert("rho2_min", max_ramp_slack, horizon * (lambda_bound + mc_ceiling))?;
    insert("rho2_max", max_ramp_slack, horizon * (lambda_bound + mc_ceiling))?;
    insert("rho3_min", 2.0 * max_line_cap, 2.0 * lambda_bound)?;
    insert("rho3_max", 2.0 * max_line_cap, 2.0 * lambda_bound)?;
    insert("rho5_min", max_load, pen.lost_electric_load + lambda_bound)?;
    insert("rho5_max", max_load, pen.lost_electric_load + lambda_bound)?;
    insert("phi1_min", max_supply_range, gas_price_bound + max_supplier_cost)?;
    insert("phi1_max", max_supply_range, gas_price_bound + max_supplier_cost)?;
    insert("phi2_min", 2.0 * max_pipe_cap, 2.0 * gas_price_bound)?;
    insert("phi2_max", 2.0 * max_pipe_cap, 2.0 * gas_price_bound)?;
    insert("phi3_min", max_gas_load, pen.lost_gas_load + gas_price_bound)?;
    insert("phi3_max", max_gas_load, pen.lost_gas_load + gas_price_bound)?;
    insert("nu1_min", k * max_carbon_demand, pen.unmet_carbon_demand + carbon_price_bound)?;
    insert("nu1_max", k * max_carbon_demand, pen.unmet_carbon_demand + carbon_price_bound)?;
    insert("nu2_min", k * max_offer, carbon_price_bound + max_offer_cost)?;
    insert("nu2_max", k * max_offer, carbon_price_bound + max_offer_cost)?;
    if sys.mode == Mode::CapAndTrade {
        let cap_total = case.carbon.cap.unwrap_or(0.0) * horizon;
        let demand_total = if case.solver.cap_includes_demands {
            case.carbon.total_demand() * horizon
        } else {
            0.0
        };
        insert(CAP_FAMILY, cap_total - demand_total, carbon_price_bound)?;
    }

    let fallback_slack = families.values().map(|m| m.slack).fold(1.0, f64::max);
    let fallback_dual = families.values().map(|m| m.dual).fold(1.0, f64::max);
    Ok(BigMConfig {
        families,
        fallback: PairBigM { slack: fallback_slack, dual: fallback_dual },
        comp_tolerance: case.solver.comp_tolerance,
    })
}

fn max_heat_rate(case: &MarketCase) -> f64 {
    case.gas_fired()
        .filter_map(|g| g.heat_rate)
        .fold(0.0, f64::max)
}

/// Margin applied above the sharp slack-side bounds at linearization time.
///
/// Slacks routinely sit exactly at their structural range (a generator at
/// `p_max` puts the lower-cap slack at `p_max - p_min`); the margin keeps
/// such points clear of the big-M audit window, which exists to catch
/// genuine truncation.
pub const SLACK_M_MARGIN: f64 = 1.05;

/// A row over named symbols, before index mapping.
#[derive(Debug, Clone)]
pub struct SymbolicRow {
    pub name: String,
    pub terms: Vec<(Symbol, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// The four linearization rows of one pair plus its fresh binary symbol.
///
/// Rows, in order: `a >= 0`, `b >= 0`, `a - M_a phi <= 0`,
/// `b + M_b phi <= M_b`.
pub fn linearize_pair(
    pair: &ComplementarityPair,
    m_slack: f64,
    m_dual: f64,
) -> Result<(Vec<SymbolicRow>, Symbol)> {
    if m_slack <= 0.0 || m_dual <= 0.0 {
        return Err(Error::BigM(format!(
            "pair {}: big-M constants must be positive (got {m_slack}, {m_dual})",
            pair.dual
        )));
    }
    let binary = Symbol::new(
        format!("bin_{}", pair.dual.family),
        pair.dual.entity.clone(),
        pair.dual.t,
    );
    let mut slack_terms = pair.slack.terms.clone();
    let rows = vec![
        SymbolicRow {
            name: format!("sl:{}", pair.dual),
            terms: slack_terms.clone(),
            sense: Sense::Ge,
            rhs: -pair.slack.constant,
        },
        SymbolicRow {
            name: format!("dl:{}", pair.dual),
            terms: vec![(pair.dual.clone(), 1.0)],
            sense: Sense::Ge,
            rhs: 0.0,
        },
        SymbolicRow {
            name: format!("mb:{}", pair.dual),
            terms: {
                slack_terms.push((binary.clone(), -m_slack));
                slack_terms
            },
            sense: Sense::Le,
            rhs: -pair.slack.constant,
        },
        SymbolicRow {
            name: format!("md:{}", pair.dual),
            terms: vec![(pair.dual.clone(), 1.0), (binary.clone(), m_dual)],
            sense: Sense::Le,
            rhs: m_dual,
        },
    ];
    Ok((rows, binary))
}

/// One continuous or binary column of the assembled MILP.
#[derive(Debug, Clone)]
pub struct MilpVar {
    pub name: Symbol,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
    pub binary: bool,
}

#[derive(Debug, Clone)]
pub struct MilpRow {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl MilpRow {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * values[*v]).sum()
    }

    /// Positive violation of the row at a point.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let activity = self.activity(values);
        match self.sense {
            Sense::Eq => (activity - self.rhs).abs(),
            Sense::Le => (activity - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - activity).max(0.0),
        }
    }
}

/// Links one binary to its pair's slack row and dual column for audits.
#[derive(Debug, Clone)]
pub struct PairBinding {
    pub family: String,
    pub dual: Symbol,
    pub binary_col: usize,
    pub dual_col: usize,
    pub slack_row: usize,
    pub m_slack: f64,
    pub m_dual: f64,
}

/// Objective of the assembled MILP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MilpObjective {
    /// The feasibility problem: a constant objective.
    #[default]
    Constant,
    /// Minimize raw production and curtailment cost across the markets.
    Welfare,
}

/// The linearized joint system.
#[derive(Debug, Clone)]
pub struct MilpModel {
    pub vars: Vec<MilpVar>,
    pub rows: Vec<MilpRow>,
    pub objective_constant: f64,
    pub bindings: Vec<PairBinding>,
    /// Optional MIP start (dense column values). Adapters that support
    /// user solutions verify it against the rows and take it as the
    /// incumbent; others ignore it.
    pub warm_start: Option<Vec<f64>>,
    var_index: BTreeMap<Symbol, usize>,
}

impl MilpModel {
    /// Wrap a plain LP (no binaries) so it can go through a solver adapter.
    pub fn from_lp(lp: &crate::lp::LinearProgram) -> MilpModel {
        let mut vars = Vec::new();
        let mut var_index = BTreeMap::new();
        for v in lp.variables() {
            var_index.insert(v.name.clone(), vars.len());
            vars.push(MilpVar {
                name: v.name.clone(),
                lower: v.lower,
                upper: v.upper,
                obj: v.obj,
                binary: false,
            });
        }
        let rows = lp
            .rows()
            .iter()
            .map(|row| MilpRow {
                name: format!("lp:{}", row.dual),
                terms: row.terms.iter().map(|(v, c)| (v.0, *c)).collect(),
                sense: row.sense,
                rhs: row.rhs,
            })
            .collect();
        MilpModel {
            vars,
            rows,
            objective_constant: lp.objective_constant,
            bindings: Vec::new(),
            warm_start: None,
            var_index,
        }
    }

    pub fn var_index(&self, name: &Symbol) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn binary_count(&self) -> usize {
        self.vars.iter().filter(|v| v.binary).count()
    }

    pub fn continuous_count(&self) -> usize {
        self.vars.len() - self.binary_count()
    }

    /// Largest row violation at a dense point.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.violation(values))
            .fold(0.0, f64::max)
    }

    pub fn assignment_by_symbol(&self, values: &[f64]) -> BTreeMap<Symbol, f64> {
        self.vars
            .iter()
            .zip(values)
            .map(|(v, x)| (v.name.clone(), *x))
            .collect()
    }
}

/// Assemble the MILP for a closed equilibrium system.
pub fn assemble_milp(
    sys: &EquilibriumSystem,
    cfg: &BigMConfig,
    objective: MilpObjective,
) -> Result<MilpModel> {
    if sys.equalities.is_empty() && sys.stationarity.is_empty() && sys.pairs.is_empty() {
        return Err(Error::model("no constraints: equilibrium system is empty"));
    }
    assemble_equilibrium_problem(sys)?;

    const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut vars: Vec<MilpVar> = Vec::new();
    let mut var_index: BTreeMap<Symbol, usize> = BTreeMap::new();
    fn add_var(
        vars: &mut Vec<MilpVar>,
        var_index: &mut BTreeMap<Symbol, usize>,
        name: &Symbol,
        bounds: (f64, f64),
        binary: bool,
    ) -> usize {
        let idx = vars.len();
        var_index.insert(name.clone(), idx);
        vars.push(MilpVar {
            name: name.clone(),
            lower: bounds.0,
            upper: bounds.1,
            obj: 0.0,
            binary,
        });
        idx
    }

    for p in &sys.primal {
        add_var(&mut vars, &mut var_index, p, FREE, false);
    }
    for d in &sys.duals {
        add_var(&mut vars, &mut var_index, d, FREE, false);
    }

    let mut rows: Vec<MilpRow> = Vec::new();
    let mut bindings: Vec<PairBinding> = Vec::new();

    let map_terms = |terms: &[(Symbol, f64)],
                     var_index: &BTreeMap<Symbol, usize>|
     -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (s, c) in terms {
            *acc.entry(var_index[s]).or_default() += c;
        }
        acc.into_iter().filter(|(_, c)| *c != 0.0).collect()
    };

    for eq in &sys.equalities {
        rows.push(MilpRow {
            name: format!("eq:{}", eq.dual),
            terms: map_terms(&eq.terms, &var_index),
            sense: Sense::Eq,
            rhs: eq.rhs,
        });
    }
    for st in &sys.stationarity {
        rows.push(MilpRow {
            name: format!("st:{}", st.variable),
            terms: map_terms(&st.expr.terms, &var_index),
            sense: Sense::Eq,
            rhs: -st.expr.constant,
        });
    }
    for pair in &sys.pairs {
        let m = cfg.for_family(&pair.family);
        let m_slack = m.slack * SLACK_M_MARGIN;
        let (sym_rows, binary) = linearize_pair(pair, m_slack, m.dual)?;
        let binary_col = add_var(&mut vars, &mut var_index, &binary, (0.0, 1.0), true);
        let slack_row = rows.len();
        for row in sym_rows {
            rows.push(MilpRow {
                name: row.name,
                terms: map_terms(&row.terms, &var_index),
                sense: row.sense,
                rhs: row.rhs,
            });
        }
        bindings.push(PairBinding {
            family: pair.family.clone(),
            dual: pair.dual.clone(),
            binary_col,
            dual_col: var_index[&pair.dual],
            slack_row,
            m_slack,
            m_dual: m.dual,
        });
    }

    let mut objective_constant = 1.0;
    if objective == MilpObjective::Welfare {
        objective_constant = sys.welfare_constant;
        for (s, c) in &sys.welfare {
            let idx = var_index[s];
            vars[idx].obj += c;
        }
    }

    Ok(MilpModel { vars, rows, objective_constant, bindings, warm_start: None, var_index })
}
