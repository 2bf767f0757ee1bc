//! Domain model of the tri-market system and case-file ingestion.
//!
//! A case document is a single JSON tree with sections `power`, `gas`,
//! `carbon`, `time`, `penalties`, and `solver`. All quantities are in the
//! native units of the market data: MW/MWh for power, Mm3 for gas, tons for
//! allowances, dollars for costs. Carbon offer and demand amounts are
//! per-hour rates; the builders scale them by the clearing scalar so a
//! period of `k` hours carries `k` times the hourly ladder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Fuel technology of a generating unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FuelKind {
    Coal,
    GasFired,
    CleanFuel,
    Wind,
}

impl FuelKind {
    /// Dispatchable units get a decision variable; wind enters the power
    /// balance as a fixed forecast.
    pub fn is_dispatchable(self) -> bool {
        self != FuelKind::Wind
    }
}

/// One generating unit.
///
/// `cost` is the variable production cost for coal and clean-fuel units and
/// the non-fuel operating cost for gas-fired units, whose fuel is priced by
/// the gas market through `heat_rate` at `gas_node`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub id: String,
    pub bus: String,
    pub fuel: FuelKind,
    #[serde(default)]
    pub p_min: f64,
    #[serde(default)]
    pub p_max: f64,
    /// Hourly ramp limit [MW/h]; defaults to `p_max - p_min` (unconstrained).
    #[serde(default)]
    pub ramp: Option<f64>,
    /// $/MWh variable cost (non-fuel cost for gas-fired units).
    #[serde(default)]
    pub cost: f64,
    /// Gas volume per unit of energy [Mm3/MWh], gas-fired only.
    #[serde(default)]
    pub heat_rate: Option<f64>,
    /// Gas node supplying the unit, gas-fired only.
    #[serde(default)]
    pub gas_node: Option<String>,
    /// CO2 emitted per unit of energy [ton/MWh].
    #[serde(default)]
    pub emission_rate: f64,
    /// Hourly forecast [MW], wind only; defaults to all zeros.
    #[serde(default)]
    pub wind_profile: Option<Vec<f64>>,
}

impl GeneratorSpec {
    pub fn ramp_limit(&self) -> f64 {
        self.ramp.unwrap_or(self.p_max - self.p_min)
    }
}

/// A transmission line between two buses.
///
/// `susceptance` is pre-scaled so that the DC flow is
/// `susceptance * (theta_from - theta_to)` in MW.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// MW per radian of angle difference.
    pub susceptance: f64,
    /// Thermal limit [MW], applied to flow in both directions.
    pub capacity: f64,
}

/// Electric network, loads, and generator fleet.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerNetwork {
    pub buses: Vec<String>,
    pub reference_bus: String,
    pub lines: Vec<Line>,
    /// Per-bus hourly demand [MW]; buses not listed have zero demand.
    #[serde(default)]
    pub demand: BTreeMap<String, Vec<f64>>,
    pub generators: Vec<GeneratorSpec>,
}

impl PowerNetwork {
    pub fn demand_at(&self, bus: &str, hour_idx: usize) -> f64 {
        self.demand
            .get(bus)
            .map(|profile| profile[hour_idx])
            .unwrap_or(0.0)
    }

    /// Total system demand in one hour.
    pub fn total_demand(&self, hour_idx: usize) -> f64 {
        self.demand.values().map(|p| p[hour_idx]).sum()
    }
}

/// A gas pipeline; flow is signed, positive from `from` to `to`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    pub from: String,
    pub to: String,
    /// Flow limit [Mm3/h] in either direction.
    pub capacity: f64,
}

/// A natural gas source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSupplier {
    pub id: String,
    pub node: String,
    #[serde(default)]
    pub min: f64,
    pub max: f64,
    /// $/Mm3.
    pub cost: f64,
}

/// Gas transport network, sources, and non-generation demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasNetwork {
    pub nodes: Vec<String>,
    pub pipelines: Vec<Pipeline>,
    pub suppliers: Vec<GasSupplier>,
    /// Per-node hourly non-generation demand [Mm3]; omitted nodes are zero.
    #[serde(default)]
    pub demand: BTreeMap<String, Vec<f64>>,
}

impl GasNetwork {
    pub fn demand_at(&self, node: &str, hour_idx: usize) -> f64 {
        self.demand
            .get(node)
            .map(|profile| profile[hour_idx])
            .unwrap_or(0.0)
    }
}

/// An allowance supply offer in the carbon market ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllowanceOffer {
    pub id: String,
    /// Per-hour amount [ton]; scaled by the clearing scalar per period.
    pub amount: f64,
    /// $/ton.
    pub cost: f64,
}

/// An exogenous (non-generation) allowance demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllowanceDemand {
    pub id: String,
    /// Per-hour amount [ton]; scaled by the clearing scalar per period.
    pub amount: f64,
}

/// Centralized carbon-emission market data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarbonMarket {
    pub offers: Vec<AllowanceOffer>,
    #[serde(default)]
    pub demands: Vec<AllowanceDemand>,
    /// Regional cap [ton per hour]; only used in cap-and-trade mode.
    #[serde(default)]
    pub cap: Option<f64>,
}

impl CarbonMarket {
    pub fn total_offered(&self) -> f64 {
        self.offers.iter().map(|o| o.amount).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.demands.iter().map(|d| d.amount).sum()
    }
}

/// Hourly horizon and the electricity-to-carbon clearing-time coupling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeStructure {
    /// Number of hourly steps.
    pub horizon: usize,
    /// Hours per carbon-market clearing period; must divide `horizon`.
    #[serde(default = "default_clearing_scalar")]
    pub clearing_scalar: usize,
}

fn default_clearing_scalar() -> usize {
    1
}

impl TimeStructure {
    pub fn periods(&self) -> usize {
        self.horizon / self.clearing_scalar
    }

    /// Period (1-indexed) containing hour `t` (1-indexed).
    pub fn period_of(&self, t: usize) -> usize {
        t.div_ceil(self.clearing_scalar)
    }

    /// Hours (1-indexed) making up period `tc` (1-indexed).
    pub fn hours_of(&self, tc: usize) -> std::ops::RangeInclusive<usize> {
        let k = self.clearing_scalar;
        (tc - 1) * k + 1..=tc * k
    }
}

/// Hour-to-period map for the carbon clearing time.
///
/// Hour `t` (1-indexed, position `t-1` in the result) belongs to period
/// `ceil(t / k)`. Fails when the clearing scalar does not divide the horizon.
pub fn coupling_map(ts: &TimeStructure) -> Result<Vec<usize>> {
    if ts.clearing_scalar == 0 || ts.horizon == 0 {
        return Err(Error::InvalidCase(
            "time structure requires horizon >= 1 and clearing_scalar >= 1".into(),
        ));
    }
    if ts.horizon % ts.clearing_scalar != 0 {
        return Err(Error::InvalidCase(format!(
            "clearing scalar {} does not divide horizon {}",
            ts.clearing_scalar, ts.horizon
        )));
    }
    Ok((1..=ts.horizon).map(|t| ts.period_of(t)).collect())
}

/// Curtailment penalties; defaults dominate every marginal cost so that
/// shedding is a last resort.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Penalties {
    /// Value of lost electric load [$/MWh].
    pub lost_electric_load: f64,
    /// Value of lost gas load [$/Mm3].
    pub lost_gas_load: f64,
    /// Value of unmet carbon demand [$/ton].
    pub unmet_carbon_demand: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties {
            lost_electric_load: 1_000.0,
            lost_gas_load: 1_000_000.0,
            unmet_carbon_demand: 1_000.0,
        }
    }
}

/// Solver and tolerance configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Adapter name: `highs` (bundled) or `external` (MPS + child process).
    pub adapter: String,
    /// Binary path for the external adapter.
    pub binary_path: Option<String>,
    /// Argument template for the external adapter; `{model}` and
    /// `{solution}` expand to file paths.
    pub args: Option<Vec<String>>,
    pub time_limit_s: f64,
    /// Complementarity tolerance used by linearization audits and reports.
    pub comp_tolerance: f64,
    /// Multiplier applied to the derived dual-side big-M bounds.
    pub big_m_scale: f64,
    /// Minimize total production and curtailment cost instead of a constant
    /// objective; selects the welfare-optimal equilibrium when several exist.
    pub secondary_objective: bool,
    /// Seed the MILP with the combined-welfare LP point as a MIP start.
    pub warm_start: bool,
    /// Count exogenous allowance demands against the cap-and-trade budget.
    pub cap_includes_demands: bool,
    /// Worker threads for scenario sweeps; defaults to available parallelism.
    pub sweep_workers: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            adapter: "highs".into(),
            binary_path: None,
            args: None,
            time_limit_s: 60.0,
            comp_tolerance: 1e-6,
            big_m_scale: 4.0,
            secondary_objective: false,
            warm_start: true,
            cap_includes_demands: true,
            sweep_workers: None,
        }
    }
}

/// Full static description of the tri-market system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketCase {
    pub power: PowerNetwork,
    pub gas: GasNetwork,
    pub carbon: CarbonMarket,
    pub time: TimeStructure,
    #[serde(default)]
    pub penalties: Penalties,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl MarketCase {
    pub fn generators(&self) -> &[GeneratorSpec] {
        &self.power.generators
    }

    pub fn dispatchable(&self) -> impl Iterator<Item = &GeneratorSpec> {
        self.power.generators.iter().filter(|g| g.fuel.is_dispatchable())
    }

    pub fn gas_fired(&self) -> impl Iterator<Item = &GeneratorSpec> {
        self.power
            .generators
            .iter()
            .filter(|g| g.fuel == FuelKind::GasFired)
    }

    pub fn generator(&self, id: &str) -> Option<&GeneratorSpec> {
        self.power.generators.iter().find(|g| g.id == id)
    }

    /// Wind injection at a bus in one hour.
    pub fn wind_at(&self, bus: &str, hour_idx: usize) -> f64 {
        self.power
            .generators
            .iter()
            .filter(|g| g.fuel == FuelKind::Wind && g.bus == bus)
            .filter_map(|g| g.wind_profile.as_ref().map(|p| p[hour_idx]))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serialization cannot fail")
    }
}

/// Parse a case document.
///
/// Missing optional fields take their documented defaults: zero wind
/// profiles, unconstrained ramps, penalty values from [`Penalties`], and the
/// bundled HiGHS adapter. Structural emptiness (no buses, no gas nodes) is
/// rejected here; everything else is left to [`validate`].
pub fn parse_case(text: &str) -> Result<MarketCase> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut case: MarketCase =
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    if case.power.buses.is_empty() {
        return Err(Error::InvalidCase("empty power network".into()));
    }
    if case.gas.nodes.is_empty() {
        return Err(Error::InvalidCase("empty gas network".into()));
    }
    normalize(&mut case);
    Ok(case)
}

/// Fill documented defaults so the parsed case is fully populated and
/// serialization round-trips exactly.
fn normalize(case: &mut MarketCase) {
    let horizon = case.time.horizon;
    for g in &mut case.power.generators {
        if g.fuel == FuelKind::Wind && g.wind_profile.is_none() {
            g.wind_profile = Some(vec![0.0; horizon]);
        }
        if g.fuel.is_dispatchable() && g.ramp.is_none() {
            g.ramp = Some(g.p_max - g.p_min);
        }
    }
}

/// Validation outcome; an empty error list means every invariant holds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

/// Check every domain invariant and cross-reference of a parsed case.
pub fn validate(case: &MarketCase) -> ValidationReport {
    let mut report = ValidationReport::default();
    let horizon = case.time.horizon;

    if horizon == 0 {
        report.error("time: horizon must be at least 1");
    } else if case.time.clearing_scalar == 0 {
        report.error("time: clearing scalar must be at least 1");
    } else if horizon % case.time.clearing_scalar != 0 {
        report.error(format!(
            "time: clearing scalar {} does not divide horizon {}",
            case.time.clearing_scalar, horizon
        ));
    }

    validate_power(case, horizon, &mut report);
    validate_gas(case, horizon, &mut report);
    validate_carbon(case, &mut report);
    report
}

fn validate_power(case: &MarketCase, horizon: usize, report: &mut ValidationReport) {
    let power = &case.power;
    let has_bus = |b: &str| power.buses.iter().any(|x| x == b);

    if !has_bus(&power.reference_bus) {
        report.error(format!("power: reference bus {} does not exist", power.reference_bus));
    }
    for line in &power.lines {
        if !has_bus(&line.from) || !has_bus(&line.to) {
            report.error(format!("power: line {}-{} references a missing bus", line.from, line.to));
        }
        if line.capacity < 0.0 || line.susceptance <= 0.0 {
            report.error(format!(
                "power: line {}-{} needs positive susceptance and nonnegative capacity",
                line.from, line.to
            ));
        }
    }
    for (bus, profile) in &power.demand {
        if !has_bus(bus) {
            report.error(format!("power: demand given for missing bus {bus}"));
        }
        if profile.len() != horizon {
            report.error(format!(
                "power: demand profile at bus {bus} has {} entries, horizon is {horizon}",
                profile.len()
            ));
        }
        if profile.iter().any(|d| *d < 0.0) {
            report.error(format!("power: negative demand at bus {bus}"));
        }
    }

    for g in &power.generators {
        if !has_bus(&g.bus) {
            report.error(format!("generator {}: bus {} does not exist", g.id, g.bus));
        }
        if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
            report.error(format!(
                "generator {}: requires 0 <= p_min <= p_max, got [{}, {}]",
                g.id, g.p_min, g.p_max
            ));
        }
        if g.ramp_limit() < 0.0 {
            report.error(format!("generator {}: negative ramp limit", g.id));
        }
        if g.emission_rate < 0.0 {
            report.error(format!("generator {}: negative emission rate", g.id));
        }
        match g.fuel {
            FuelKind::GasFired => {
                if g.heat_rate.is_none() {
                    report.error(format!("generator {}: gas-fired unit without heat rate", g.id));
                }
                match &g.gas_node {
                    None => {
                        report.error(format!("generator {}: gas-fired unit without gas node", g.id))
                    }
                    Some(node) if !case.gas.nodes.iter().any(|n| n == node) => {
                        report.error(format!("generator {}: gas node {node} does not exist", g.id))
                    }
                    _ => {}
                }
            }
            FuelKind::Wind => match &g.wind_profile {
                None => report.error(format!("generator {}: wind unit without profile", g.id)),
                Some(p) if p.len() != horizon => report.error(format!(
                    "generator {}: wind profile has {} entries, horizon is {horizon}",
                    g.id,
                    p.len()
                )),
                _ => {}
            },
            _ => {
                if g.heat_rate.is_some() || g.gas_node.is_some() {
                    report.warn(format!(
                        "generator {}: gas fields on a non-gas-fired unit are ignored",
                        g.id
                    ));
                }
            }
        }
    }

    if !connected(&power.buses, power.lines.iter().map(|l| (&l.from, &l.to))) {
        report.warn("power: network is not connected");
    }
}

fn validate_gas(case: &MarketCase, horizon: usize, report: &mut ValidationReport) {
    let gas = &case.gas;
    let has_node = |n: &str| gas.nodes.iter().any(|x| x == n);

    for pipe in &gas.pipelines {
        if !has_node(&pipe.from) || !has_node(&pipe.to) {
            report.error(format!(
                "gas: pipeline {}-{} references a missing node",
                pipe.from, pipe.to
            ));
        }
        if pipe.capacity < 0.0 {
            report.error(format!("gas: pipeline {}-{} has negative capacity", pipe.from, pipe.to));
        }
    }
    for s in &gas.suppliers {
        if !(0.0 <= s.min && s.min <= s.max) {
            report.error(format!(
                "gas supplier {}: requires 0 <= min <= max, got [{}, {}]",
                s.id, s.min, s.max
            ));
        }
        if !has_node(&s.node) {
            report.error(format!("gas supplier {}: node {} does not exist", s.id, s.node));
        }
    }
    for (node, profile) in &gas.demand {
        if !has_node(node) {
            report.error(format!("gas: demand given for missing node {node}"));
        }
        if profile.len() != horizon {
            report.error(format!(
                "gas: demand profile at node {node} has {} entries, horizon is {horizon}",
                profile.len()
            ));
        }
        if profile.iter().any(|d| *d < 0.0) {
            report.error(format!("gas: negative demand at node {node}"));
        }
    }
}

fn validate_carbon(case: &MarketCase, report: &mut ValidationReport) {
    let carbon = &case.carbon;
    for offer in &carbon.offers {
        if offer.amount < 0.0 || offer.cost < 0.0 {
            report.error(format!("carbon offer {}: negative amount or cost", offer.id));
        }
    }
    for demand in &carbon.demands {
        if demand.amount < 0.0 {
            report.error(format!("carbon demand {}: negative amount", demand.id));
        }
    }
    if carbon.offers.is_empty()
        && case.power.generators.iter().any(|g| g.emission_rate > 0.0)
    {
        report.error("carbon: emitting generators but no allowance offers");
    }
    if let Some(cap) = carbon.cap {
        if cap < 0.0 {
            report.error("carbon: negative cap");
        }
        let offered = carbon.total_offered();
        if (offered - cap).abs() > 1e-9 {
            report.warn(format!(
                "carbon: offer total {offered} differs from cap {cap}; cap-and-trade comparison will not be like-for-like"
            ));
        }
    }
}

fn connected<'a>(
    buses: &[String],
    edges: impl Iterator<Item = (&'a String, &'a String)>,
) -> bool {
    if buses.len() <= 1 {
        return true;
    }
    let index: BTreeMap<&str, usize> =
        buses.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
    let mut adjacency = vec![Vec::new(); buses.len()];
    for (a, b) in edges {
        if let (Some(&i), Some(&j)) = (index.get(a.as_str()), index.get(b.as_str())) {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
    }
    let mut seen = vec![false; buses.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
