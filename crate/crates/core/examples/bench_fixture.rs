//! Timing probe for the full fixture: assembly and MILP solve.

use std::time::Instant;

use trimarket::case::parse_case;
use trimarket::kkt::{build_coupled_system, Mode};
use trimarket::milp::{assemble_milp, estimate_big_m, MilpObjective};
use trimarket::solver::{HighsAdapter, MilpSolver, SolveLimits};

fn main() {
    let case = parse_case(include_str!("../fixtures/case14g8.json")).unwrap();
    let t0 = Instant::now();
    let sys = build_coupled_system(&case, Mode::Proposed).unwrap();
    let cfg = estimate_big_m(&sys, &case).unwrap();
    let mut model = assemble_milp(&sys, &cfg, MilpObjective::Constant).unwrap();
    let assembly = t0.elapsed();
    println!(
        "assembled in {assembly:?}: {} vars ({} bin), {} rows",
        model.vars.len(),
        model.binary_count(),
        model.rows.len()
    );
    let t_ws = Instant::now();
    model.warm_start = trimarket::study::welfare_warm_start(&sys, &model).ok();
    println!(
        "warm start in {:?} (present: {})",
        t_ws.elapsed(),
        model.warm_start.is_some()
    );

    let t1 = Instant::now();
    let result = HighsAdapter
        .submit(&model, &SolveLimits { time_limit_s: Some(120.0), threads: None })
        .unwrap();
    println!(
        "solve: {:?} in {:?} ({} nodes, {} simplex iters)",
        result.status,
        t1.elapsed(),
        result.stats.nodes,
        result.stats.simplex_iterations
    );
    if let Some(assignment) = &result.assignment {
        let sol = trimarket::verify::EquilibriumSolution::from_assignment(
            &case,
            Mode::Proposed,
            assignment,
        )
        .unwrap();
        println!(
            "avg elec {:.4} gas {:.4} carbon {:.4} emission/h {:.4}",
            sol.average_electricity_price(),
            sol.average_gas_price(),
            sol.average_carbon_price(),
            sol.total_emission() / 24.0
        );
        println!("carbon prices: {:?}", sol.carbon_price);
    }
}
