//! Timing probe for the micro1 oracle path.

use std::time::Instant;

use trimarket::case::parse_case;
use trimarket::kkt::Mode;
use trimarket::solver::HighsAdapter;
use trimarket::study::run_single;
use trimarket::verify::brute_force_equilibrium;

fn main() {
    let case = parse_case(include_str!("../fixtures/micro1.json")).unwrap();
    let t = Instant::now();
    let outcome = run_single(&case, Mode::Proposed, &HighsAdapter).unwrap();
    println!("run_single: {:?} (verified {})", t.elapsed(), outcome.verification.pass);
    let t = Instant::now();
    let solutions = brute_force_equilibrium(&case, Mode::Proposed).unwrap();
    println!("brute force: {:?} ({} solutions)", t.elapsed(), solutions.len());
}
