//! Builders for the three market LPs with the multiplier families of the
//! coupled formulation: `lambda`/`rho1..rho5` for electricity, `mu`/`phi1..phi3`
//! for gas, and `p_co2`/`nu1..nu2` for the carbon market.
//!
//! Inequalities are emitted in `>=` form so the KKT derivation uses a single
//! sign convention. Two-sided constraints become a `*_min`/`*_max` row pair,
//! each with its own dual tag.

use std::collections::BTreeMap;

use crate::case::{FuelKind, MarketCase};
use crate::error::Error;
use crate::lp::{LinearProgram, Sense, Symbol, VarId};
use crate::Result;

/// Gas price per (node, hour), hours 1-indexed.
pub type GasPrices = BTreeMap<(String, usize), f64>;
/// Dispatch of gas-fired units per (generator, hour), hours 1-indexed.
pub type GasDispatch = BTreeMap<(String, usize), f64>;

/// Symbol constructors shared by builders, KKT derivation, and verification.
pub mod sym {
    use super::Symbol;

    pub fn p_g(gen: &str, t: usize) -> Symbol {
        Symbol::new("P_G", gen, t)
    }
    pub fn theta(bus: &str, t: usize) -> Symbol {
        Symbol::new("theta", bus, t)
    }
    pub fn p_ld(bus: &str, t: usize) -> Symbol {
        Symbol::new("P_L_D", bus, t)
    }
    pub fn lambda(bus: &str, t: usize) -> Symbol {
        Symbol::new("lambda", bus, t)
    }
    pub fn rho(family: u8, side: &str, entity: &str, t: usize) -> Symbol {
        Symbol::new(format!("rho{family}_{side}"), entity, t)
    }
    pub fn rho4(bus: &str, t: usize) -> Symbol {
        Symbol::new("rho4", bus, t)
    }
    pub fn f_s(supplier: &str, t: usize) -> Symbol {
        Symbol::new("F_S", supplier, t)
    }
    pub fn f_ld(node: &str, t: usize) -> Symbol {
        Symbol::new("F_L_D", node, t)
    }
    pub fn flow(pipe: &str, t: usize) -> Symbol {
        Symbol::new("F", pipe, t)
    }
    pub fn mu(node: &str, t: usize) -> Symbol {
        Symbol::new("mu", node, t)
    }
    pub fn phi(family: u8, side: &str, entity: &str, t: usize) -> Symbol {
        Symbol::new(format!("phi{family}_{side}"), entity, t)
    }
    pub fn q_c(offer: &str, tc: usize) -> Symbol {
        Symbol::new("Q_C", offer, tc)
    }
    pub fn q_ld(demand: &str, tc: usize) -> Symbol {
        Symbol::new("Q_L_D", demand, tc)
    }
    pub fn p_co2(tc: usize) -> Symbol {
        Symbol::new("p_co2", "", tc)
    }
    pub fn nu(family: u8, side: &str, entity: &str, tc: usize) -> Symbol {
        Symbol::new(format!("nu{family}_{side}"), entity, tc)
    }
    /// Single horizon-wide carbon price of the cap-and-trade comparison.
    pub fn p_cap() -> Symbol {
        Symbol::new("p_co2_cap", "", 0)
    }

    pub fn edge(from: &str, to: &str) -> String {
        format!("{from}-{to}")
    }
}

const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

/// Electricity LP plus the index sets needed to walk its symbols.
#[derive(Debug, Clone)]
pub struct ElectricityModel {
    pub lp: LinearProgram,
    pub dispatchable: Vec<String>,
    pub buses: Vec<String>,
    /// Line entities as `from-to` strings, in case order.
    pub lines: Vec<String>,
    pub horizon: usize,
}

/// Gas LP plus its index sets.
#[derive(Debug, Clone)]
pub struct GasModel {
    pub lp: LinearProgram,
    pub suppliers: Vec<String>,
    pub nodes: Vec<String>,
    pub pipes: Vec<String>,
    pub horizon: usize,
}

/// Carbon-market LP plus its index sets.
#[derive(Debug, Clone)]
pub struct CemModel {
    pub lp: LinearProgram,
    pub offers: Vec<String>,
    pub demands: Vec<String>,
    pub periods: usize,
}

/// Build the electricity operational LP for fixed gas and carbon prices.
///
/// Cost coefficients are `cost + eta * p_co2[t]` for non-gas units and
/// `cost + zeta * mu[m(v),t] + eta * p_co2[t]` for gas-fired units; unserved
/// load is priced at the lost-load penalty. Wind enters each bus balance as
/// a fixed injection.
pub fn build_electricity_lp(
    case: &MarketCase,
    gas_price: &GasPrices,
    carbon_price: &[f64],
) -> Result<ElectricityModel> {
    let horizon = case.time.horizon;
    if carbon_price.len() != horizon {
        return Err(Error::model(format!(
            "carbon price vector has {} entries, horizon is {horizon}",
            carbon_price.len()
        )));
    }
    let mut lp = LinearProgram::new("electricity");
    let penalty = case.penalties.lost_electric_load;

    let mut p_g: BTreeMap<(String, usize), VarId> = BTreeMap::new();
    let mut theta: BTreeMap<(String, usize), VarId> = BTreeMap::new();
    let mut p_ld: BTreeMap<(String, usize), VarId> = BTreeMap::new();

    for g in case.dispatchable() {
        for t in 1..=horizon {
            let mut cost = g.cost + g.emission_rate * carbon_price[t - 1];
            if g.fuel == FuelKind::GasFired {
                let node = g
                    .gas_node
                    .clone()
                    .ok_or_else(|| Error::model(format!("generator {} has no gas node", g.id)))?;
                let zeta = g
                    .heat_rate
                    .ok_or_else(|| Error::model(format!("generator {} has no heat rate", g.id)))?;
                let mu = gas_price.get(&(node.clone(), t)).ok_or_else(|| {
                    Error::model(format!("missing gas price for node {node}, hour {t}"))
                })?;
                cost += zeta * mu;
            }
            p_g.insert((g.id.clone(), t), lp.add_variable(sym::p_g(&g.id, t), FREE, cost)?);
        }
    }
    for bus in &case.power.buses {
        for t in 1..=horizon {
            theta.insert((bus.clone(), t), lp.add_variable(sym::theta(bus, t), FREE, 0.0)?);
            p_ld.insert((bus.clone(), t), lp.add_variable(sym::p_ld(bus, t), FREE, -penalty)?);
            lp.objective_constant += penalty * case.power.demand_at(bus, t - 1);
        }
    }

    // Nodal balance: generation + wind = served load + net flow out.
    for bus in &case.power.buses {
        for t in 1..=horizon {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for g in case.dispatchable() {
                if g.bus == *bus {
                    terms.push((p_g[&(g.id.clone(), t)], 1.0));
                }
            }
            terms.push((p_ld[&(bus.clone(), t)], -1.0));
            let mut theta_coeff: BTreeMap<VarId, f64> = BTreeMap::new();
            for line in &case.power.lines {
                let s = line.susceptance;
                if line.from == *bus {
                    *theta_coeff.entry(theta[&(line.from.clone(), t)]).or_default() -= s;
                    *theta_coeff.entry(theta[&(line.to.clone(), t)]).or_default() += s;
                } else if line.to == *bus {
                    *theta_coeff.entry(theta[&(line.to.clone(), t)]).or_default() -= s;
                    *theta_coeff.entry(theta[&(line.from.clone(), t)]).or_default() += s;
                }
            }
            terms.extend(theta_coeff);
            lp.add_row(terms, Sense::Eq, -case.wind_at(bus, t - 1), sym::lambda(bus, t))?;
        }
    }

    // Reference angle.
    let ref_bus = &case.power.reference_bus;
    for t in 1..=horizon {
        lp.add_row(
            vec![(theta[&(ref_bus.clone(), t)], 1.0)],
            Sense::Eq,
            0.0,
            sym::rho4(ref_bus, t),
        )?;
    }

    // Generation capacity and ramping.
    for g in case.dispatchable() {
        for t in 1..=horizon {
            let var = p_g[&(g.id.clone(), t)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, g.p_min, sym::rho(1, "min", &g.id, t))?;
            lp.add_row(vec![(var, -1.0)], Sense::Ge, -g.p_max, sym::rho(1, "max", &g.id, t))?;
            if t >= 2 {
                let prev = p_g[&(g.id.clone(), t - 1)];
                let ramp = g.ramp_limit();
                lp.add_row(
                    vec![(var, 1.0), (prev, -1.0)],
                    Sense::Ge,
                    -ramp,
                    sym::rho(2, "min", &g.id, t),
                )?;
                lp.add_row(
                    vec![(var, -1.0), (prev, 1.0)],
                    Sense::Ge,
                    -ramp,
                    sym::rho(2, "max", &g.id, t),
                )?;
            }
        }
    }

    // Line capacity, one min/max pair per line and hour.
    for line in &case.power.lines {
        let entity = sym::edge(&line.from, &line.to);
        for t in 1..=horizon {
            let from = theta[&(line.from.clone(), t)];
            let to = theta[&(line.to.clone(), t)];
            let s = line.susceptance;
            lp.add_row(
                vec![(from, s), (to, -s)],
                Sense::Ge,
                -line.capacity,
                sym::rho(3, "min", &entity, t),
            )?;
            lp.add_row(
                vec![(from, -s), (to, s)],
                Sense::Ge,
                -line.capacity,
                sym::rho(3, "max", &entity, t),
            )?;
        }
    }

    // Served load bounds.
    for bus in &case.power.buses {
        for t in 1..=horizon {
            let var = p_ld[&(bus.clone(), t)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, 0.0, sym::rho(5, "min", bus, t))?;
            lp.add_row(
                vec![(var, -1.0)],
                Sense::Ge,
                -case.power.demand_at(bus, t - 1),
                sym::rho(5, "max", bus, t),
            )?;
        }
    }

    Ok(ElectricityModel {
        lp,
        dispatchable: case.dispatchable().map(|g| g.id.clone()).collect(),
        buses: case.power.buses.clone(),
        lines: case
            .power
            .lines
            .iter()
            .map(|l| sym::edge(&l.from, &l.to))
            .collect(),
        horizon,
    })
}

/// Build the gas operational LP for a fixed gas-fired power dispatch.
///
/// Generation-related demand `zeta * P_G` enters the nodal balance at the
/// unit's gas node as a constant.
pub fn build_gas_lp(case: &MarketCase, dispatch: &GasDispatch) -> Result<GasModel> {
    let horizon = case.time.horizon;
    let mut lp = LinearProgram::new("gas");
    let penalty = case.penalties.lost_gas_load;

    let mut f_s: BTreeMap<(String, usize), VarId> = BTreeMap::new();
    let mut f_ld: BTreeMap<(String, usize), VarId> = BTreeMap::new();
    let mut flow: BTreeMap<(String, usize), VarId> = BTreeMap::new();

    for w in &case.gas.suppliers {
        for t in 1..=horizon {
            f_s.insert((w.id.clone(), t), lp.add_variable(sym::f_s(&w.id, t), FREE, w.cost)?);
        }
    }
    for node in &case.gas.nodes {
        for t in 1..=horizon {
            f_ld.insert((node.clone(), t), lp.add_variable(sym::f_ld(node, t), FREE, -penalty)?);
            lp.objective_constant += penalty * case.gas.demand_at(node, t - 1);
        }
    }
    for pipe in &case.gas.pipelines {
        let entity = sym::edge(&pipe.from, &pipe.to);
        for t in 1..=horizon {
            flow.insert((entity.clone(), t), lp.add_variable(sym::flow(&entity, t), FREE, 0.0)?);
        }
    }

    // Nodal balance: supply + net inflow - served demand = generation burn.
    for node in &case.gas.nodes {
        for t in 1..=horizon {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            for w in &case.gas.suppliers {
                if w.node == *node {
                    terms.push((f_s[&(w.id.clone(), t)], 1.0));
                }
            }
            for pipe in &case.gas.pipelines {
                let entity = sym::edge(&pipe.from, &pipe.to);
                if pipe.to == *node {
                    terms.push((flow[&(entity.clone(), t)], 1.0));
                } else if pipe.from == *node {
                    terms.push((flow[&(entity.clone(), t)], -1.0));
                }
            }
            terms.push((f_ld[&(node.clone(), t)], -1.0));

            let mut burn = 0.0;
            for g in case.gas_fired() {
                if g.gas_node.as_deref() == Some(node.as_str()) {
                    let p = dispatch.get(&(g.id.clone(), t)).ok_or_else(|| {
                        Error::model(format!("missing dispatch for {} hour {t}", g.id))
                    })?;
                    burn += g.heat_rate.unwrap_or(0.0) * p;
                }
            }
            lp.add_row(terms, Sense::Eq, burn, sym::mu(node, t))?;
        }
    }

    // Supplier limits.
    for w in &case.gas.suppliers {
        for t in 1..=horizon {
            let var = f_s[&(w.id.clone(), t)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, w.min, sym::phi(1, "min", &w.id, t))?;
            lp.add_row(vec![(var, -1.0)], Sense::Ge, -w.max, sym::phi(1, "max", &w.id, t))?;
        }
    }

    // Pipeline limits on the signed flow.
    for pipe in &case.gas.pipelines {
        let entity = sym::edge(&pipe.from, &pipe.to);
        for t in 1..=horizon {
            let var = flow[&(entity.clone(), t)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, -pipe.capacity, sym::phi(2, "min", &entity, t))?;
            lp.add_row(vec![(var, -1.0)], Sense::Ge, -pipe.capacity, sym::phi(2, "max", &entity, t))?;
        }
    }

    // Served demand bounds.
    for node in &case.gas.nodes {
        for t in 1..=horizon {
            let var = f_ld[&(node.clone(), t)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, 0.0, sym::phi(3, "min", node, t))?;
            lp.add_row(
                vec![(var, -1.0)],
                Sense::Ge,
                -case.gas.demand_at(node, t - 1),
                sym::phi(3, "max", node, t),
            )?;
        }
    }

    Ok(GasModel {
        lp,
        suppliers: case.gas.suppliers.iter().map(|w| w.id.clone()).collect(),
        nodes: case.gas.nodes.clone(),
        pipes: case
            .gas
            .pipelines
            .iter()
            .map(|p| sym::edge(&p.from, &p.to))
            .collect(),
        horizon,
    })
}

/// Build the carbon-market LP for fixed per-period generation emissions.
///
/// Offer and demand amounts are per-hour rates, so a period of `k` hours
/// offers `k` times the hourly ladder. The balance row equates allowances
/// sold with generation emissions plus served exogenous demand; its dual is
/// the carbon price of the period.
pub fn build_cem_lp(case: &MarketCase, emissions: &[f64]) -> Result<CemModel> {
    let periods = case.time.periods();
    if emissions.len() != periods {
        return Err(Error::model(format!(
            "emissions vector has {} entries, expected {periods} periods",
            emissions.len()
        )));
    }
    let k = case.time.clearing_scalar as f64;
    let mut lp = LinearProgram::new("carbon");
    let penalty = case.penalties.unmet_carbon_demand;

    let mut q_c: BTreeMap<(String, usize), VarId> = BTreeMap::new();
    let mut q_ld: BTreeMap<(String, usize), VarId> = BTreeMap::new();

    for r in &case.carbon.offers {
        for tc in 1..=periods {
            q_c.insert((r.id.clone(), tc), lp.add_variable(sym::q_c(&r.id, tc), FREE, r.cost)?);
        }
    }
    for o in &case.carbon.demands {
        for tc in 1..=periods {
            q_ld.insert((o.id.clone(), tc), lp.add_variable(sym::q_ld(&o.id, tc), FREE, -penalty)?);
            lp.objective_constant += penalty * o.amount * k;
        }
    }

    for tc in 1..=periods {
        let mut terms: Vec<(VarId, f64)> = Vec::new();
        for r in &case.carbon.offers {
            terms.push((q_c[&(r.id.clone(), tc)], 1.0));
        }
        for o in &case.carbon.demands {
            terms.push((q_ld[&(o.id.clone(), tc)], -1.0));
        }
        lp.add_row(terms, Sense::Eq, emissions[tc - 1], sym::p_co2(tc))?;
    }

    for r in &case.carbon.offers {
        for tc in 1..=periods {
            let var = q_c[&(r.id.clone(), tc)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, 0.0, sym::nu(2, "min", &r.id, tc))?;
            lp.add_row(vec![(var, -1.0)], Sense::Ge, -r.amount * k, sym::nu(2, "max", &r.id, tc))?;
        }
    }
    for o in &case.carbon.demands {
        for tc in 1..=periods {
            let var = q_ld[&(o.id.clone(), tc)];
            lp.add_row(vec![(var, 1.0)], Sense::Ge, 0.0, sym::nu(1, "min", &o.id, tc))?;
            lp.add_row(vec![(var, -1.0)], Sense::Ge, -o.amount * k, sym::nu(1, "max", &o.id, tc))?;
        }
    }

    Ok(CemModel {
        lp,
        offers: case.carbon.offers.iter().map(|r| r.id.clone()).collect(),
        demands: case.carbon.demands.iter().map(|o| o.id.clone()).collect(),
        periods,
    })
}

/// Zero gas prices for every (node, hour); the coupled system builder uses
/// this so raw costs stay in the stationarity constants.
pub fn zero_gas_prices(case: &MarketCase) -> GasPrices {
    let mut prices = GasPrices::new();
    for node in &case.gas.nodes {
        for t in 1..=case.time.horizon {
            prices.insert((node.clone(), t), 0.0);
        }
    }
    prices
}

/// Zero dispatch for every gas-fired unit and hour.
pub fn zero_dispatch(case: &MarketCase) -> GasDispatch {
    let mut dispatch = GasDispatch::new();
    for g in case.gas_fired() {
        for t in 1..=case.time.horizon {
            dispatch.insert((g.id.clone(), t), 0.0);
        }
    }
    dispatch
}
