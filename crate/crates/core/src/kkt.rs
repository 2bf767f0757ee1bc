//! KKT systems of the market LPs and their coupling into one equilibrium
//! feasibility problem.
//!
//! Sign convention: for `min c'x` subject to `Ax >= b` (dual `y >= 0`) and
//! `Ex = d` (dual free), stationarity is `c - A'y - E'lambda = 0`. Rows
//! stored as `<=` are normalized to `>=` before derivation, keeping their
//! dual tag.
//!
//! Coupling makes the gas-fired dispatch a single shared variable in the
//! power balance, the gas balance, and the allowance balance, and replaces
//! the fixed price parameters in the electricity stationarity equations with
//! the dual variables of the other two markets. The carbon price of an hour
//! is the price of its clearing period.

use std::collections::{BTreeMap, BTreeSet};

use crate::case::MarketCase;
use crate::error::Error;
use crate::lp::{LinearProgram, Sense, Symbol};
use crate::markets::{
    build_cem_lp, build_electricity_lp, build_gas_lp, sym, zero_dispatch, zero_gas_prices,
    CemModel, ElectricityModel, GasModel,
};
use crate::Result;

/// Affine expression over named symbols.
#[derive(Debug, Clone, Default)]
pub struct AffineExpr {
    pub terms: Vec<(Symbol, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn coeff(&self, symbol: &Symbol) -> f64 {
        self.terms
            .iter()
            .filter(|(s, _)| s == symbol)
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn eval(&self, values: &BTreeMap<Symbol, f64>) -> Result<f64> {
        let mut acc = self.constant;
        for (s, c) in &self.terms {
            let v = values
                .get(s)
                .ok_or_else(|| Error::model(format!("expression references unknown symbol {s}")))?;
            acc += c * v;
        }
        Ok(acc)
    }
}

/// `expr = 0`, the derivative of the Lagrangian in one primal variable.
#[derive(Debug, Clone)]
pub struct StationarityEquation {
    pub variable: Symbol,
    pub expr: AffineExpr,
}

/// `slack >= 0`, `dual >= 0`, `slack * dual = 0`.
#[derive(Debug, Clone)]
pub struct ComplementarityPair {
    /// Multiplier family, e.g. `rho1_max`.
    pub family: String,
    /// Affine in primal symbols; the normalized `>=` row activity minus rhs.
    pub slack: AffineExpr,
    pub dual: Symbol,
}

/// Primal equality row kept verbatim in the feasibility system.
#[derive(Debug, Clone)]
pub struct EqualityRow {
    pub terms: Vec<(Symbol, f64)>,
    pub rhs: f64,
    pub dual: Symbol,
}

/// KKT conditions of a single LP.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub primal: Vec<Symbol>,
    pub stationarity: Vec<StationarityEquation>,
    pub equalities: Vec<EqualityRow>,
    pub pairs: Vec<ComplementarityPair>,
}

/// Derive the KKT conditions of a dual-tagged minimization LP.
///
/// Variables must be free; simple bounds that need multipliers are expected
/// as explicit rows.
pub fn derive_kkt(lp: &LinearProgram) -> Result<KktSystem> {
    for v in lp.variables() {
        if v.lower.is_finite() || v.upper.is_finite() {
            return Err(Error::model(format!(
                "variable {} carries finite bounds; represent them as dual-tagged rows",
                v.name
            )));
        }
    }

    let mut stationarity: Vec<StationarityEquation> = lp
        .variables()
        .iter()
        .map(|v| StationarityEquation {
            variable: v.name.clone(),
            expr: AffineExpr { terms: Vec::new(), constant: v.obj },
        })
        .collect();
    let mut equalities = Vec::new();
    let mut pairs = Vec::new();

    for row in lp.rows() {
        // Normalize to >= keeping the dual tag.
        let flip = match row.sense {
            Sense::Le => -1.0,
            Sense::Eq | Sense::Ge => 1.0,
        };
        let terms: Vec<(Symbol, f64)> = row
            .terms
            .iter()
            .map(|(v, c)| (lp.variable(*v).name.clone(), flip * c))
            .collect();
        let rhs = flip * row.rhs;

        for (v, c) in &row.terms {
            stationarity[v.0]
                .expr
                .terms
                .push((row.dual.clone(), -flip * c));
        }

        match row.sense {
            Sense::Eq => equalities.push(EqualityRow { terms, rhs, dual: row.dual.clone() }),
            _ => pairs.push(ComplementarityPair {
                family: row.dual.family.clone(),
                slack: AffineExpr { terms, constant: -rhs },
                dual: row.dual.clone(),
            }),
        }
    }

    Ok(KktSystem {
        primal: lp.variables().iter().map(|v| v.name.clone()).collect(),
        stationarity,
        equalities,
        pairs,
    })
}

/// Which market cleared the equilibrium's carbon side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Centralized carbon market cleared per period by its own LP.
    Proposed,
    /// Single horizon-wide cap with the carbon price as its shadow price.
    CapAndTrade,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    SharedPrimal,
    PriceIntoObjective,
    PriceTimeExpansion,
}

/// One cross-market dependency, kept for audit and counting.
#[derive(Debug, Clone)]
pub struct CouplingLink {
    pub kind: LinkKind,
    pub source: Symbol,
    pub target: Symbol,
    /// Market owning the target equation ("electricity", "gas", "carbon").
    pub target_market: &'static str,
}

/// The joint feasibility system: primal rows, stationarity equations, and
/// complementarity pairs of all coupled markets.
#[derive(Debug, Clone)]
pub struct EquilibriumSystem {
    pub mode: Mode,
    pub primal: Vec<Symbol>,
    /// Equality duals followed by pair duals.
    pub duals: Vec<Symbol>,
    pub equalities: Vec<EqualityRow>,
    pub stationarity: Vec<StationarityEquation>,
    pub pairs: Vec<ComplementarityPair>,
    pub links: Vec<CouplingLink>,
    /// Raw production and curtailment cost, linear in the primals; used as
    /// the optional secondary objective and by the welfare cross-check.
    pub welfare: Vec<(Symbol, f64)>,
    pub welfare_constant: f64,
}

impl EquilibriumSystem {
    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn links_of(&self, kind: LinkKind, target_market: &str) -> usize {
        self.links
            .iter()
            .filter(|l| l.kind == kind && l.target_market == target_market)
            .count()
    }

    /// One equation per line with the market multiplier names.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "# equilibrium system ({:?}), {} primal / {} dual variables",
            self.mode, self.primal.len(), self.duals.len());
        let _ = writeln!(out, "# primal feasibility (equalities)");
        for eq in &self.equalities {
            let lhs: Vec<String> =
                eq.terms.iter().map(|(s, c)| format!("{c:+} {s}")).collect();
            let _ = writeln!(out, "{} = {}  : {}", lhs.join(" "), eq.rhs, eq.dual);
        }
        let _ = writeln!(out, "# stationarity");
        for st in &self.stationarity {
            let lhs: Vec<String> =
                st.expr.terms.iter().map(|(s, c)| format!("{c:+} {s}")).collect();
            let _ = writeln!(out, "d/d{}: {:+} {} = 0", st.variable, st.expr.constant, lhs.join(" "));
        }
        let _ = writeln!(out, "# complementarity");
        for pair in &self.pairs {
            let lhs: Vec<String> =
                pair.slack.terms.iter().map(|(s, c)| format!("{c:+} {s}")).collect();
            let _ = writeln!(out, "0 <= {} {:+}  perp  {} >= 0", lhs.join(" "), pair.slack.constant, pair.dual);
        }
        out
    }
}

fn merge_kkt(
    sys: &mut EquilibriumSystem,
    kkt: KktSystem,
) {
    sys.primal.extend(kkt.primal);
    sys.duals.extend(kkt.equalities.iter().map(|e| e.dual.clone()));
    sys.duals.extend(kkt.pairs.iter().map(|p| p.dual.clone()));
    sys.equalities.extend(kkt.equalities);
    sys.stationarity.extend(kkt.stationarity);
    sys.pairs.extend(kkt.pairs);
}

fn add_welfare(sys: &mut EquilibriumSystem, lp: &LinearProgram) {
    for v in lp.variables() {
        if v.obj != 0.0 {
            sys.welfare.push((v.name.clone(), v.obj));
        }
    }
    sys.welfare_constant += lp.objective_constant;
}

/// Couple the three markets' KKT systems into the joint equilibrium system.
///
/// The three models must share one case and must have been built with zero
/// gas prices, zero carbon prices, zero dispatch, and zero emissions, so
/// that their cost constants are the raw costs; the price and dispatch
/// coupling is installed here symbolically.
pub fn couple_markets(
    elec: &ElectricityModel,
    gas: &GasModel,
    cem: &CemModel,
    case: &MarketCase,
) -> Result<EquilibriumSystem> {
    let horizon = case.time.horizon;
    if elec.horizon != horizon || gas.horizon != horizon {
        return Err(Error::model(format!(
            "time structures inconsistent: electricity {} h, gas {} h, case {} h",
            elec.horizon, gas.horizon, horizon
        )));
    }
    if cem.periods != case.time.periods() {
        return Err(Error::model(format!(
            "time structures inconsistent: carbon model has {} periods, case has {}",
            cem.periods,
            case.time.periods()
        )));
    }

    let mut sys = EquilibriumSystem {
        mode: Mode::Proposed,
        primal: Vec::new(),
        duals: Vec::new(),
        equalities: Vec::new(),
        stationarity: Vec::new(),
        pairs: Vec::new(),
        links: Vec::new(),
        welfare: Vec::new(),
        welfare_constant: 0.0,
    };
    merge_kkt(&mut sys, derive_kkt(&elec.lp)?);
    merge_kkt(&mut sys, derive_kkt(&gas.lp)?);
    merge_kkt(&mut sys, derive_kkt(&cem.lp)?);
    add_welfare(&mut sys, &elec.lp);
    add_welfare(&mut sys, &gas.lp);
    add_welfare(&mut sys, &cem.lp);

    let mut eq_index: BTreeMap<Symbol, usize> = BTreeMap::new();
    for (i, eq) in sys.equalities.iter().enumerate() {
        eq_index.insert(eq.dual.clone(), i);
    }
    let mut st_index: BTreeMap<Symbol, usize> = BTreeMap::new();
    for (i, st) in sys.stationarity.iter().enumerate() {
        st_index.insert(st.variable.clone(), i);
    }

    // Shared dispatch into the gas balance; fuel price into the electricity
    // stationarity.
    for g in case.gas_fired() {
        let node = g.gas_node.as_deref().expect("validated gas node");
        let zeta = g.heat_rate.expect("validated heat rate");
        for t in 1..=horizon {
            let p_g = sym::p_g(&g.id, t);
            let mu = sym::mu(node, t);
            let eq = eq_index
                .get(&mu)
                .ok_or_else(|| Error::model(format!("gas balance row {mu} not found")))?;
            sys.equalities[*eq].terms.push((p_g.clone(), -zeta));
            sys.links.push(CouplingLink {
                kind: LinkKind::SharedPrimal,
                source: p_g.clone(),
                target: mu.clone(),
                target_market: "gas",
            });
            let st = st_index
                .get(&p_g)
                .ok_or_else(|| Error::model(format!("stationarity for {p_g} not found")))?;
            sys.stationarity[*st].expr.terms.push((mu.clone(), zeta));
            sys.links.push(CouplingLink {
                kind: LinkKind::PriceIntoObjective,
                source: mu,
                target: p_g,
                target_market: "electricity",
            });
        }
    }

    // Shared dispatch into the allowance balance; carbon price into the
    // electricity stationarity, expanded from periods to hours.
    for g in case.dispatchable() {
        if g.emission_rate == 0.0 {
            continue;
        }
        for t in 1..=horizon {
            let tc = case.time.period_of(t);
            let p_g = sym::p_g(&g.id, t);
            let price = sym::p_co2(tc);
            let eq = eq_index
                .get(&price)
                .ok_or_else(|| Error::model(format!("allowance balance row {price} not found")))?;
            sys.equalities[*eq].terms.push((p_g.clone(), -g.emission_rate));
            sys.links.push(CouplingLink {
                kind: LinkKind::SharedPrimal,
                source: p_g.clone(),
                target: price.clone(),
                target_market: "carbon",
            });
            let st = st_index
                .get(&p_g)
                .ok_or_else(|| Error::model(format!("stationarity for {p_g} not found")))?;
            sys.stationarity[*st].expr.terms.push((price.clone(), g.emission_rate));
            sys.links.push(CouplingLink {
                kind: LinkKind::PriceIntoObjective,
                source: price,
                target: p_g,
                target_market: "electricity",
            });
        }
    }

    // Hour-to-period price identification.
    for t in 1..=horizon {
        let tc = case.time.period_of(t);
        sys.links.push(CouplingLink {
            kind: LinkKind::PriceTimeExpansion,
            source: Symbol::new("p_co2", "", t),
            target: sym::p_co2(tc),
            target_market: "carbon",
        });
    }

    Ok(sys)
}

/// Dual tag family of the horizon-wide cap complementarity pair.
pub const CAP_FAMILY: &str = "p_co2_cap";

/// Build the cap-and-trade comparison system.
///
/// The carbon market is replaced by the single complementarity condition
/// `0 <= (Cap - allowance use) perp p_co2 >= 0` over the whole horizon,
/// with one price feeding every hour's generation cost. The cap and the
/// exogenous demand rates are scaled by the horizon length.
pub fn build_cap_and_trade_system(
    elec: &ElectricityModel,
    gas: &GasModel,
    case: &MarketCase,
) -> Result<EquilibriumSystem> {
    let horizon = case.time.horizon;
    if elec.horizon != horizon || gas.horizon != horizon {
        return Err(Error::model("time structures inconsistent between handles"));
    }
    let cap_rate = case
        .carbon
        .cap
        .ok_or_else(|| Error::model("cap-and-trade mode requires carbon.cap"))?;

    let mut sys = EquilibriumSystem {
        mode: Mode::CapAndTrade,
        primal: Vec::new(),
        duals: Vec::new(),
        equalities: Vec::new(),
        stationarity: Vec::new(),
        pairs: Vec::new(),
        links: Vec::new(),
        welfare: Vec::new(),
        welfare_constant: 0.0,
    };
    merge_kkt(&mut sys, derive_kkt(&elec.lp)?);
    merge_kkt(&mut sys, derive_kkt(&gas.lp)?);
    add_welfare(&mut sys, &elec.lp);
    add_welfare(&mut sys, &gas.lp);

    let mut eq_index: BTreeMap<Symbol, usize> = BTreeMap::new();
    for (i, eq) in sys.equalities.iter().enumerate() {
        eq_index.insert(eq.dual.clone(), i);
    }
    let mut st_index: BTreeMap<Symbol, usize> = BTreeMap::new();
    for (i, st) in sys.stationarity.iter().enumerate() {
        st_index.insert(st.variable.clone(), i);
    }

    for g in case.gas_fired() {
        let node = g.gas_node.as_deref().expect("validated gas node");
        let zeta = g.heat_rate.expect("validated heat rate");
        for t in 1..=horizon {
            let p_g = sym::p_g(&g.id, t);
            let mu = sym::mu(node, t);
            let eq = eq_index
                .get(&mu)
                .ok_or_else(|| Error::model(format!("gas balance row {mu} not found")))?;
            sys.equalities[*eq].terms.push((p_g.clone(), -zeta));
            sys.links.push(CouplingLink {
                kind: LinkKind::SharedPrimal,
                source: p_g.clone(),
                target: mu.clone(),
                target_market: "gas",
            });
            let st = st_index[&p_g];
            sys.stationarity[st].expr.terms.push((mu.clone(), zeta));
            sys.links.push(CouplingLink {
                kind: LinkKind::PriceIntoObjective,
                source: mu,
                target: p_g,
                target_market: "electricity",
            });
        }
    }

    // Horizon-wide budget: cap minus generation emissions minus (optionally)
    // the exogenous allowance demands.
    let price = sym::p_cap();
    let mut slack = AffineExpr {
        terms: Vec::new(),
        constant: cap_rate * horizon as f64,
    };
    if case.solver.cap_includes_demands {
        slack.constant -= case.carbon.total_demand() * horizon as f64;
    }
    for g in case.dispatchable() {
        if g.emission_rate == 0.0 {
            continue;
        }
        for t in 1..=horizon {
            let p_g = sym::p_g(&g.id, t);
            slack.terms.push((p_g.clone(), -g.emission_rate));
            let st = st_index[&p_g];
            sys.stationarity[st].expr.terms.push((price.clone(), g.emission_rate));
            sys.links.push(CouplingLink {
                kind: LinkKind::SharedPrimal,
                source: p_g.clone(),
                target: price.clone(),
                target_market: "carbon",
            });
            sys.links.push(CouplingLink {
                kind: LinkKind::PriceIntoObjective,
                source: price.clone(),
                target: p_g,
                target_market: "electricity",
            });
        }
    }
    sys.pairs.push(ComplementarityPair {
        family: CAP_FAMILY.into(),
        slack,
        dual: price.clone(),
    });
    sys.duals.push(price);

    Ok(sys)
}

/// Convenience entry: build the three market models with zero coupling
/// inputs and assemble the equilibrium system for `mode`.
pub fn build_coupled_system(case: &MarketCase, mode: Mode) -> Result<EquilibriumSystem> {
    let elec = build_electricity_lp(
        case,
        &zero_gas_prices(case),
        &vec![0.0; case.time.horizon],
    )?;
    let gas = build_gas_lp(case, &zero_dispatch(case))?;
    match mode {
        Mode::Proposed => {
            let cem = build_cem_lp(case, &vec![0.0; case.time.periods()])?;
            couple_markets(&elec, &gas, &cem, case)
        }
        Mode::CapAndTrade => build_cap_and_trade_system(&elec, &gas, case),
    }
}

/// Size summary of a closed equilibrium system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleCounts {
    pub primal: usize,
    pub dual: usize,
    pub equalities: usize,
    pub stationarity: usize,
    pub pairs: usize,
}

/// Check the system for dangling symbols and return its constraint bundle
/// sizes. Every symbol referenced by an equality, stationarity equation, or
/// pair must be a declared primal or dual variable.
pub fn assemble_equilibrium_problem(sys: &EquilibriumSystem) -> Result<BundleCounts> {
    let primal: BTreeSet<&Symbol> = sys.primal.iter().collect();
    let dual: BTreeSet<&Symbol> = sys.duals.iter().collect();
    let mut dangling = Vec::new();

    for eq in &sys.equalities {
        for (s, _) in &eq.terms {
            if !primal.contains(s) {
                dangling.push(format!("{s} (primal, equality {})", eq.dual));
            }
        }
        if !dual.contains(&eq.dual) {
            dangling.push(format!("{} (dual, equality)", eq.dual));
        }
    }
    for st in &sys.stationarity {
        if !primal.contains(&st.variable) {
            dangling.push(format!("{} (primal, stationarity)", st.variable));
        }
        for (s, _) in &st.expr.terms {
            if !dual.contains(s) {
                dangling.push(format!("{s} (dual, stationarity of {})", st.variable));
            }
        }
    }
    for pair in &sys.pairs {
        for (s, _) in &pair.slack.terms {
            if !primal.contains(s) {
                dangling.push(format!("{s} (primal, pair {})", pair.dual));
            }
        }
        if !dual.contains(&pair.dual) {
            dangling.push(format!("{} (dual, pair)", pair.dual));
        }
    }

    if !dangling.is_empty() {
        dangling.sort();
        dangling.dedup();
        return Err(Error::DanglingSymbols(dangling));
    }
    Ok(BundleCounts {
        primal: sys.primal.len(),
        dual: sys.duals.len(),
        equalities: sys.equalities.len(),
        stationarity: sys.stationarity.len(),
        pairs: sys.pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;
    use crate::lp::LinearProgram;

    fn fixture() -> MarketCase {
        parse_case(include_str!("../fixtures/case14g8.json")).unwrap()
    }

    fn micro1() -> MarketCase {
        parse_case(include_str!("../fixtures/micro1.json")).unwrap()
    }

    const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    #[test]
    fn cem_kkt_counts_from_table_cardinalities() {
        // One period, 2 demands, 7 offers: 9 stationarity equations and
        // 2*2 + 2*7 = 18 complementarity pairs.
        let mut case = fixture();
        case.time.clearing_scalar = 24;
        let cem = build_cem_lp(&case, &[0.0]).unwrap();
        let kkt = derive_kkt(&cem.lp).unwrap();
        assert_eq!(kkt.stationarity.len(), 9);
        assert_eq!(kkt.pairs.len(), 18);
        assert_eq!(kkt.equalities.len(), 1);
    }

    #[test]
    fn single_free_variable_single_equality() {
        let mut lp = LinearProgram::new("toy");
        let x = lp.add_variable(Symbol::new("x", "", 1), FREE, 3.0).unwrap();
        lp.add_row(vec![(x, 2.0)], Sense::Eq, 4.0, Symbol::new("lam", "", 1)).unwrap();
        let kkt = derive_kkt(&lp).unwrap();
        assert_eq!(kkt.stationarity.len(), 1);
        assert_eq!(kkt.pairs.len(), 0);
        // c - E'lam: 3 - 2 lam = 0.
        assert_eq!(kkt.stationarity[0].expr.constant, 3.0);
        assert_eq!(kkt.stationarity[0].expr.coeff(&Symbol::new("lam", "", 1)), -2.0);
    }

    #[test]
    fn bounded_variable_rejected() {
        let mut lp = LinearProgram::new("toy");
        lp.add_variable(Symbol::new("x", "", 1), (0.0, 1.0), 1.0).unwrap();
        assert!(derive_kkt(&lp).is_err());
    }

    #[test]
    fn le_rows_are_normalized_with_same_tag() {
        let mut lp = LinearProgram::new("toy");
        let x = lp.add_variable(Symbol::new("x", "", 1), FREE, 1.0).unwrap();
        lp.add_row(vec![(x, 2.0)], Sense::Le, 6.0, Symbol::new("cap", "", 1)).unwrap();
        let kkt = derive_kkt(&lp).unwrap();
        let pair = &kkt.pairs[0];
        // 2x <= 6 becomes -2x >= -6, slack = 6 - 2x.
        assert_eq!(pair.slack.coeff(&Symbol::new("x", "", 1)), -2.0);
        assert_eq!(pair.slack.constant, 6.0);
        assert_eq!(pair.dual, Symbol::new("cap", "", 1));
        assert_eq!(kkt.stationarity[0].expr.coeff(&pair.dual), 2.0);
    }

    #[test]
    fn stationarity_transpose_property_on_fixture_electricity() {
        let case = fixture();
        let model = build_electricity_lp(
            &case,
            &crate::markets::zero_gas_prices(&case),
            &vec![0.0; 24],
        )
        .unwrap();
        let kkt = derive_kkt(&model.lp).unwrap();
        let mut st_by_var: BTreeMap<&Symbol, &StationarityEquation> = BTreeMap::new();
        for st in &kkt.stationarity {
            st_by_var.insert(&st.variable, st);
        }
        for eq in &kkt.equalities {
            for (var, coeff) in &eq.terms {
                assert_eq!(st_by_var[var].expr.coeff(&eq.dual), -coeff);
            }
        }
        for pair in &kkt.pairs {
            for (var, coeff) in &pair.slack.terms {
                assert_eq!(st_by_var[var].expr.coeff(&pair.dual), -coeff);
            }
        }
    }

    #[test]
    fn coupling_link_counts_on_fixture() {
        let case = fixture();
        let sys = build_coupled_system(&case, Mode::Proposed).unwrap();
        // 3 gas-fired units, 24 hours.
        assert_eq!(sys.links_of(LinkKind::SharedPrimal, "gas"), 72);
        // 5 emitting units shared into the allowance balance.
        assert_eq!(sys.links_of(LinkKind::SharedPrimal, "carbon"), 120);
        // Per-hour clearing: 24 identity expansions.
        let expansions: Vec<&CouplingLink> = sys
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::PriceTimeExpansion)
            .collect();
        assert_eq!(expansions.len(), 24);
        assert!(expansions.iter().all(|l| l.source.t == l.target.t));
    }

    #[test]
    fn coupling_single_period_expands_to_one_price() {
        let mut case = fixture();
        case.time.clearing_scalar = 24;
        let sys = build_coupled_system(&case, Mode::Proposed).unwrap();
        let expansions: Vec<&CouplingLink> = sys
            .links
            .iter()
            .filter(|l| l.kind == LinkKind::PriceTimeExpansion)
            .collect();
        assert_eq!(expansions.len(), 24);
        assert!(expansions.iter().all(|l| l.target == sym::p_co2(1)));
    }

    #[test]
    fn coupled_stationarity_carries_symbolic_prices() {
        let case = fixture();
        let sys = build_coupled_system(&case, Mode::Proposed).unwrap();
        let st = sys
            .stationarity
            .iter()
            .find(|s| s.variable == sym::p_g("G2", 5))
            .unwrap();
        // Raw cost constant plus zeta * mu and eta * p_co2 terms.
        assert_eq!(st.expr.constant, 3.5);
        assert_eq!(st.expr.coeff(&sym::mu("4", 5)), 0.006);
        assert_eq!(st.expr.coeff(&sym::p_co2(5)), 0.425);
        assert_eq!(st.expr.coeff(&sym::lambda("3", 5)), -1.0);
    }

    #[test]
    fn coupled_system_is_closed() {
        let sys = build_coupled_system(&fixture(), Mode::Proposed).unwrap();
        let counts = assemble_equilibrium_problem(&sys).unwrap();
        assert_eq!(counts.pairs, sys.pair_count());
    }

    #[test]
    fn dangling_symbol_is_reported_with_location() {
        let mut sys = build_coupled_system(&micro1(), Mode::Proposed).unwrap();
        sys.stationarity[0]
            .expr
            .terms
            .push((Symbol::new("mu", "ghost", 1), 1.0));
        match assemble_equilibrium_problem(&sys) {
            Err(Error::DanglingSymbols(list)) => {
                assert!(list.iter().any(|d| d.contains("mu[ghost,1]")));
            }
            other => panic!("expected dangling symbols, got {other:?}"),
        }
    }

    #[test]
    fn micro1_bundle_sizes_match_hand_count() {
        let sys = build_coupled_system(&micro1(), Mode::Proposed).unwrap();
        let counts = assemble_equilibrium_problem(&sys).unwrap();
        // See fixtures/README.md for the enumeration.
        assert_eq!(
            counts,
            BundleCounts { primal: 9, dual: 20, equalities: 4, stationarity: 9, pairs: 16 }
        );
    }

    #[test]
    fn cap_and_trade_replaces_cem_with_one_pair() {
        let case = fixture();
        let sys = build_coupled_system(&case, Mode::CapAndTrade).unwrap();
        assert!(sys.primal.iter().all(|s| s.family != "Q_C"));
        let cap_pairs: Vec<&ComplementarityPair> =
            sys.pairs.iter().filter(|p| p.family == CAP_FAMILY).collect();
        assert_eq!(cap_pairs.len(), 1);
        let slack = &cap_pairs[0].slack;
        // 225 t/h cap over 24 h minus 30 t/h of exogenous demand.
        assert!((slack.constant - (225.0 - 30.0) * 24.0).abs() < 1e-9);
        assert_eq!(slack.coeff(&sym::p_g("G1", 3)), -0.825);
        assemble_equilibrium_problem(&sys).unwrap();
    }

    #[test]
    fn cap_and_trade_requires_cap() {
        let mut case = fixture();
        case.carbon.cap = None;
        assert!(build_coupled_system(&case, Mode::CapAndTrade).is_err());
    }
}
