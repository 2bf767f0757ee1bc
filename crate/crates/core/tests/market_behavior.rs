//! Behavioral examples on the bundled fixtures: parsed table values,
//! standalone-LP price formation, curtailment pricing, and study edge
//! cases.

use trimarket::case::{parse_case, validate, FuelKind, MarketCase};
use trimarket::kkt::Mode;
use trimarket::markets::{
    build_cem_lp, build_electricity_lp, build_gas_lp, sym, zero_dispatch, zero_gas_prices,
};
use trimarket::solver::{solve_lp_with_duals, HighsAdapter, SolveStatus};
use trimarket::study::{
    apply_demand_growth, run_single, study_cap_sweep, study_clearing_time, study_retrofit,
    sweep_demand, RetrofitStrategy,
};

fn fixture() -> MarketCase {
    parse_case(include_str!("../fixtures/case14g8.json")).unwrap()
}

#[test]
fn fixture_parses_expected_values() {
    let case = fixture();
    let g1 = case.generator("G1").unwrap();
    assert_eq!(g1.p_max, 80.0);
    assert_eq!(g1.cost, 8.95);
    assert_eq!(g1.emission_rate, 0.825);
    assert_eq!(g1.fuel, FuelKind::Coal);

    let w5 = case.gas.suppliers.iter().find(|w| w.id == "W5").unwrap();
    assert_eq!((w5.min, w5.max), (0.0, 0.9));
    assert_eq!(w5.cost, 2300.0);
    assert_eq!(w5.node, "8");

    // Offer ladder totals the 225 t/h cap, so no validation warning.
    assert_eq!(case.carbon.total_offered(), 225.0);
    let report = validate(&case);
    assert!(report.is_ok() && report.warnings.is_empty(), "{report:?}");
}

#[test]
fn electricity_lp_balance_residuals_vanish_at_optimum() {
    let case = fixture();
    let model =
        build_electricity_lp(&case, &zero_gas_prices(&case), &vec![0.0; 24]).unwrap();
    let sol = solve_lp_with_duals(&model.lp).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let report = model.lp.primal_residuals(&sol.primal).unwrap();
    for (dual, residual) in &report.rows {
        if dual.family == "lambda" {
            assert!(residual.abs() <= 1e-9, "balance {dual} residual {residual}");
        }
    }
}

#[test]
fn interior_clean_unit_sets_lmp_at_its_cost() {
    // Scale demand so the clean-fuel unit is strictly interior at the peak
    // hour; with zero gas and carbon prices and no congestion its cost is
    // the system price: lambda = 21.90.
    let case = apply_demand_growth(&fixture(), 30.0);
    let model =
        build_electricity_lp(&case, &zero_gas_prices(&case), &vec![0.0; 24]).unwrap();
    let sol = solve_lp_with_duals(&model.lp).unwrap();
    let g5 = sol.primal[&sym::p_g("G5", 20)];
    assert!(g5 > 1.0 && g5 < 29.0, "G5 should be interior at the peak, got {g5}");
    let lambda = sol.duals[&sym::lambda("6", 20)];
    assert!((lambda - 21.90).abs() <= 1e-6, "lambda {lambda}");
}

#[test]
fn marginal_unit_prices_every_uncongested_hour() {
    // At the fixture equilibrium, any strictly interior unit's full
    // marginal cost (fuel + carbon) equals the LMP at its bus.
    let case = fixture();
    let outcome = run_single(&case, Mode::Proposed, &HighsAdapter).unwrap();
    let sol = &outcome.solution;
    let mut checked = 0;
    for g in case.dispatchable() {
        for t in 1..=case.time.horizon {
            let p = sol.dispatch[&(g.id.clone(), t)];
            if p <= g.p_min + 1e-6 || p >= g.p_max - 1e-6 {
                continue;
            }
            let mut cost = g.cost + g.emission_rate * sol.hourly_carbon_price[t - 1];
            if let (Some(zeta), Some(node)) = (g.heat_rate, g.gas_node.as_ref()) {
                cost += zeta * sol.mu[&(node.clone(), t)];
            }
            let lambda = sol.lambda[&(g.bus.clone(), t)];
            assert!(
                (lambda - cost).abs() <= 1e-6,
                "hour {t}: interior {} cost {cost} vs lambda {lambda}",
                g.id
            );
            checked += 1;
        }
    }
    assert!(checked > 10, "expected many interior marginal hours, got {checked}");
}

#[test]
fn gas_curtailment_prices_at_penalty() {
    // Inject more gas burn than the system can deliver: demand is shed at
    // the lost-gas penalty and the node price hits it.
    let doc = r#"{
        "power": {"buses": ["B1"], "reference_bus": "B1", "lines": [],
                   "demand": {}, "generators": []},
        "gas": {
            "nodes": ["N1"], "pipelines": [],
            "suppliers": [{"id": "W1", "node": "N1", "min": 0.0, "max": 1.0, "cost": 2090.0}],
            "demand": {"N1": [0.5]}
        },
        "carbon": {"offers": [{"id": "S1", "amount": 1.0, "cost": 1.0}]},
        "time": {"horizon": 1}
    }"#;
    let mut case = parse_case(doc).unwrap();
    case.power.generators.push(trimarket::case::GeneratorSpec {
        id: "GX".into(),
        bus: "B1".into(),
        fuel: FuelKind::GasFired,
        p_min: 0.0,
        p_max: 100.0,
        ramp: Some(100.0),
        cost: 1.0,
        heat_rate: Some(0.02),
        gas_node: Some("N1".into()),
        emission_rate: 0.1,
        wind_profile: None,
    });
    // Burn 0.8 of the 1.0 Mm3 deliverable, leaving 0.2 for the 0.5 Mm3
    // demand: 0.3 Mm3 is shed and the node prices at the penalty.
    let mut dispatch = zero_dispatch(&case);
    dispatch.insert(("GX".into(), 1), 40.0);
    let gas = build_gas_lp(&case, &dispatch).unwrap();
    let sol = solve_lp_with_duals(&gas.lp).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.primal[&sym::f_ld("N1", 1)] - 0.2).abs() <= 1e-9);
    assert!((sol.duals[&sym::mu("N1", 1)] - 1_000_000.0).abs() <= 1e-3);
    assert!((sol.objective - (2090.0 + 1_000_000.0 * 0.3)).abs() <= 1e-3);
}

#[test]
fn gas_lp_zero_dispatch_zero_demand_is_all_zero() {
    let mut case = fixture();
    case.gas.demand.clear();
    let gas = build_gas_lp(&case, &zero_dispatch(&case)).unwrap();
    let sol = solve_lp_with_duals(&gas.lp).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.objective.abs() <= 1e-9);
    for (symbol, value) in &sol.primal {
        if symbol.family == "F_S" {
            assert!(value.abs() <= 1e-9);
        }
    }
}

#[test]
fn cem_lp_zero_requirement_zero_price() {
    let mut case = fixture();
    case.carbon.demands.clear();
    let cem = build_cem_lp(&case, &vec![0.0; 24]).unwrap();
    let sol = solve_lp_with_duals(&cem.lp).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(sol.objective.abs() <= 1e-9);
    for tc in 1..=24 {
        assert!(sol.duals[&sym::p_co2(tc)].abs() <= 1e-9);
    }
}

#[test]
fn demand_collapse_zeroes_dispatch_and_floors_prices() {
    // Growth of -100% removes all electric load: zero dispatch, zero
    // emission, and the allowance price drops to the first rung (the 30
    // t/h exogenous demand clears inside the cheapest offer).
    let case = fixture();
    let rows = sweep_demand(&case, &[-100.0], Mode::Proposed).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert!(row.verified, "row failed verification");
    assert!(row.total_emission.abs() <= 1e-9);
    for (_, energy) in &row.generator_energy {
        assert!(energy.abs() <= 1e-9);
    }
    assert!((row.carbon_price - 12.0).abs() <= 1e-6, "price {}", row.carbon_price);
}

#[test]
fn empty_retrofit_strategy_equals_baseline() {
    let case = fixture();
    let strategies = vec![RetrofitStrategy { label: "noop".into(), changes: vec![] }];
    let rows = study_retrofit(&case, &strategies, Mode::Proposed).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].total_emission, rows[1].total_emission);
    assert_eq!(rows[0].avg_electricity_price, rows[1].avg_electricity_price);
    assert_eq!(rows[0].carbon_price, rows[1].carbon_price);
    assert_eq!(rows[0].generator_energy, rows[1].generator_energy);
}

#[test]
fn clearing_time_rejects_non_divisor() {
    let case = fixture();
    assert!(study_clearing_time(&case, &[5], Mode::Proposed).is_err());
}

#[test]
fn cap_sweep_far_above_emissions_keeps_price_zero() {
    let case = parse_case(include_str!("../fixtures/micro1.json")).unwrap();
    let rows = study_cap_sweep(&case, &[100.0, 50.0], Mode::CapAndTrade).unwrap();
    for row in &rows {
        assert_eq!(row.carbon_price, 0.0, "row {}", row.label);
        assert!(row.verified);
    }
}
