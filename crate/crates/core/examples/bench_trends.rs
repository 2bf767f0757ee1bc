//! Trend probe: demand sweep, retrofit study, clearing-time study, and the
//! cap-and-trade comparison on the bundled fixture.

use std::time::Instant;

use trimarket::case::parse_case;
use trimarket::kkt::Mode;
use trimarket::study::{
    study_cap_sweep, study_clearing_time, study_retrofit, sweep_demand, write_csv,
    RetrofitChange, RetrofitStrategy,
};

fn main() {
    let case = parse_case(include_str!("../fixtures/case14g8.json")).unwrap();
    let t = Instant::now();

    println!("== demand sweep (proposed) ==");
    let rows = sweep_demand(&case, &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0], Mode::Proposed)
        .unwrap();
    write_csv(&rows, std::io::stdout()).unwrap();

    println!("== demand sweep (cap-and-trade) ==");
    let rows = sweep_demand(&case, &[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0], Mode::CapAndTrade)
        .unwrap();
    write_csv(&rows, std::io::stdout()).unwrap();

    println!("== retrofit (proposed) ==");
    let strategies: Vec<RetrofitStrategy> = vec![
        ("G1", vec![("G1", 15.0, 0.1)]),
        ("G2", vec![("G2", 7.0, 0.1)]),
        ("G3", vec![("G3", 7.0, 0.1)]),
        ("G1+G2", vec![("G1", 15.0, 0.1), ("G2", 7.0, 0.1)]),
        ("G2+G3", vec![("G2", 7.0, 0.1), ("G3", 7.0, 0.1)]),
        ("G1+G3", vec![("G1", 15.0, 0.1), ("G3", 7.0, 0.1)]),
        ("G1+G2+G3", vec![("G1", 15.0, 0.1), ("G2", 7.0, 0.1), ("G3", 7.0, 0.1)]),
    ]
    .into_iter()
    .map(|(label, changes)| RetrofitStrategy {
        label: label.into(),
        changes: changes
            .into_iter()
            .map(|(g, c, e)| RetrofitChange {
                generator: g.into(),
                cost: c,
                emission_rate: e,
            })
            .collect(),
    })
    .collect();
    let rows = study_retrofit(&case, &strategies, Mode::Proposed).unwrap();
    write_csv(&rows, std::io::stdout()).unwrap();

    println!("== clearing time (proposed) ==");
    let rows = study_clearing_time(&case, &[1, 3, 12, 24], Mode::Proposed).unwrap();
    write_csv(&rows, std::io::stdout()).unwrap();

    println!("== cap sweep (proposed, totals) ==");
    let rows =
        study_cap_sweep(&case, &[225.0, 200.0, 180.0, 160.0, 140.0], Mode::Proposed).unwrap();
    write_csv(&rows, std::io::stdout()).unwrap();

    println!("total {:?}", t.elapsed());
}
