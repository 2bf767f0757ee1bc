//! Property tests: KKT round-trip soundness against directly solved LPs,
//! residual linearity, stationarity transposition, and gas-market
//! monotonicity.

use std::collections::BTreeMap;

use proptest::prelude::*;

use trimarket::case::parse_case;
use trimarket::kkt::{derive_kkt, EquilibriumSystem, Mode};
use trimarket::lp::{LinearProgram, Sense, Symbol};
use trimarket::markets::{build_gas_lp, zero_dispatch, GasDispatch};
use trimarket::milp::{assemble_milp, BigMConfig, MilpObjective, PairBigM};
use trimarket::solver::{solve_lp_with_duals, HighsAdapter, MilpSolver, SolveLimits, SolveStatus};

const FREE: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

#[derive(Debug, Clone)]
struct RandomLp {
    n_vars: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
    feasible_point: Vec<f64>,
}

/// LPs built around a known feasible point, with box rows keeping them
/// bounded. Every inequality carries its own dual tag.
fn random_lp() -> impl Strategy<Value = RandomLp> {
    (2usize..5)
        .prop_flat_map(|n_vars| {
            let coeffs = proptest::collection::vec(-3.0..3.0f64, n_vars);
            let point = proptest::collection::vec(-2.0..2.0f64, n_vars);
            let objective = proptest::collection::vec(0.1..4.0f64, n_vars);
            let rows = proptest::collection::vec(
                (coeffs.clone(), 0u8..3, 0.0..2.0f64),
                1..5,
            );
            (Just(n_vars), objective, rows, point)
        })
        .prop_map(|(n_vars, objective, raw_rows, feasible_point)| {
            let mut rows = Vec::new();
            for (coeffs, sense, slack) in raw_rows {
                let activity: f64 =
                    coeffs.iter().zip(&feasible_point).map(|(c, x)| c * x).sum();
                let (sense, rhs) = match sense % 3 {
                    0 => (Sense::Ge, activity - slack),
                    1 => (Sense::Le, activity + slack),
                    _ => (Sense::Eq, activity),
                };
                rows.push((coeffs, sense, rhs));
            }
            // Box rows keep the LP bounded whatever the objective.
            for v in 0..n_vars {
                let mut lo = vec![0.0; n_vars];
                lo[v] = 1.0;
                rows.push((lo, Sense::Ge, -10.0));
                let mut hi = vec![0.0; n_vars];
                hi[v] = 1.0;
                rows.push((hi, Sense::Le, 10.0));
            }
            RandomLp { n_vars, objective, rows, feasible_point }
        })
}

fn build(lp_spec: &RandomLp) -> LinearProgram {
    let mut lp = LinearProgram::new("random");
    let vars: Vec<_> = (0..lp_spec.n_vars)
        .map(|v| {
            lp.add_variable(Symbol::new("x", format!("{v}"), 1), FREE, lp_spec.objective[v])
                .unwrap()
        })
        .collect();
    for (r, (coeffs, sense, rhs)) in lp_spec.rows.iter().enumerate() {
        let terms: Vec<_> = vars
            .iter()
            .zip(coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(v, c)| (*v, *c))
            .collect();
        if terms.is_empty() {
            continue;
        }
        lp.add_row(terms, *sense, *rhs, Symbol::new("row", format!("{r}"), 1))
            .unwrap();
    }
    lp
}

/// Wrap a single LP's KKT conditions as a standalone equilibrium system.
fn system_of(lp: &LinearProgram) -> EquilibriumSystem {
    let kkt = derive_kkt(lp).unwrap();
    let mut duals: Vec<Symbol> = kkt.equalities.iter().map(|e| e.dual.clone()).collect();
    duals.extend(kkt.pairs.iter().map(|p| p.dual.clone()));
    EquilibriumSystem {
        mode: Mode::Proposed,
        primal: kkt.primal,
        duals,
        equalities: kkt.equalities,
        stationarity: kkt.stationarity,
        pairs: kkt.pairs,
        links: Vec::new(),
        welfare: lp
            .variables()
            .iter()
            .filter(|v| v.obj != 0.0)
            .map(|v| (v.name.clone(), v.obj))
            .collect(),
        welfare_constant: lp.objective_constant,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A point satisfying the derived KKT system is LP-optimal: solving the
    /// KKT feasibility MILP and the LP directly give the same objective.
    #[test]
    fn kkt_round_trip_soundness(spec in random_lp()) {
        let lp = build(&spec);
        let direct = solve_lp_with_duals(&lp).unwrap();
        prop_assume!(direct.status == SolveStatus::Optimal);

        let sys = system_of(&lp);
        let cfg = BigMConfig {
            families: BTreeMap::new(),
            fallback: PairBigM { slack: 1e4, dual: 1e4 },
            comp_tolerance: 1e-6,
        };
        let model = assemble_milp(&sys, &cfg, MilpObjective::Constant).unwrap();
        let result = HighsAdapter.submit(&model, &SolveLimits::default()).unwrap();
        prop_assert!(
            matches!(result.status, SolveStatus::Optimal | SolveStatus::Feasible),
            "KKT MILP status {:?}", result.status
        );
        let assignment = result.assignment.unwrap();
        let dense = lp.dense_assignment(&assignment).unwrap();
        let kkt_objective = lp.objective_value(&dense);
        let gap = (kkt_objective - direct.objective).abs()
            / direct.objective.abs().max(1.0);
        prop_assert!(gap <= 1e-6, "objective gap {gap}: {} vs {}", kkt_objective, direct.objective);
    }

    /// Equality-row residuals are affine in the assignment.
    #[test]
    fn residual_linearity_on_equality_rows(
        spec in random_lp(),
        other in proptest::collection::vec(-5.0..5.0f64, 2..5),
        alpha in 0.0..1.0f64,
    ) {
        let lp = build(&spec);
        let x: Vec<f64> = spec.feasible_point.clone();
        let y: Vec<f64> = (0..spec.n_vars)
            .map(|i| other.get(i).copied().unwrap_or(1.0))
            .collect();
        let name = |i: usize| Symbol::new("x", format!("{i}"), 1);
        let to_map = |v: &[f64]| -> BTreeMap<Symbol, f64> {
            v.iter().enumerate().map(|(i, val)| (name(i), *val)).collect()
        };
        let blend: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        let rx = lp.primal_residuals(&to_map(&x)).unwrap();
        let ry = lp.primal_residuals(&to_map(&y)).unwrap();
        let rb = lp.primal_residuals(&to_map(&blend)).unwrap();
        for ((dual, blended), ((_, rxv), (_, ryv))) in
            rb.rows.iter().zip(rx.rows.iter().zip(ry.rows.iter()))
        {
            let row_sense = lp.row(lp.dual(dual).unwrap()).sense;
            if row_sense == Sense::Eq {
                let expected = alpha * rxv + (1.0 - alpha) * ryv;
                prop_assert!((blended - expected).abs() <= 1e-9);
            }
        }
    }

    /// The stationarity coefficient of dual d on variable x is the negated
    /// normalized row coefficient of x in d's row, exactly.
    #[test]
    fn stationarity_transposition(spec in random_lp()) {
        let lp = build(&spec);
        let kkt = derive_kkt(&lp).unwrap();
        let mut st: BTreeMap<&Symbol, &trimarket::kkt::StationarityEquation> = BTreeMap::new();
        for eq in &kkt.stationarity {
            st.insert(&eq.variable, eq);
        }
        for eq in &kkt.equalities {
            for (var, coeff) in &eq.terms {
                prop_assert_eq!(st[var].expr.coeff(&eq.dual), -coeff);
            }
        }
        for pair in &kkt.pairs {
            for (var, coeff) in &pair.slack.terms {
                prop_assert_eq!(st[var].expr.coeff(&pair.dual), -coeff);
            }
        }
    }

    /// More gas burn cannot cheapen the gas market: the optimal objective
    /// is nondecreasing in the injected dispatch.
    #[test]
    fn gas_objective_monotone_in_dispatch(
        base in 0.0..8.0f64,
        extra in 0.0..4.0f64,
    ) {
        let case = parse_case(include_str!("../fixtures/micro1.json")).unwrap();
        let mut low = zero_dispatch(&case);
        low.insert(("GA".into(), 1), base);
        let mut high = GasDispatch::new();
        high.insert(("GA".into(), 1), (base + extra).min(12.0));

        let lp_low = build_gas_lp(&case, &low).unwrap();
        let lp_high = build_gas_lp(&case, &high).unwrap();
        let sol_low = solve_lp_with_duals(&lp_low.lp).unwrap();
        let sol_high = solve_lp_with_duals(&lp_high.lp).unwrap();
        prop_assume!(sol_low.status == SolveStatus::Optimal);
        prop_assume!(sol_high.status == SolveStatus::Optimal);
        prop_assert!(sol_high.objective >= sol_low.objective - 1e-9);
    }
}

#[test]
fn case_round_trip_is_stable_under_field_edits() {
    // Parse/serialize/parse stays identity after arbitrary numeric edits.
    let mut case = parse_case(include_str!("../fixtures/micro1.json")).unwrap();
    case.power.generators[0].p_max = 13.25;
    case.gas.suppliers[0].cost = 123.456;
    case.carbon.offers[1].amount = 9.875;
    let json = case.to_json();
    let reparsed = parse_case(&json).unwrap();
    assert_eq!(json, reparsed.to_json());
}
