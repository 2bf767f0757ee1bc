//! Joint operational equilibrium of an electricity market, a natural gas
//! market, and a centralized regional carbon-emission market.
//!
//! The three markets are modeled as linear programs that are coupled through
//! shared gas-fired dispatch and through the gas and carbon prices that enter
//! the electricity market's cost coefficients. An equilibrium is a point that
//! is simultaneously optimal for all three operators. It is computed by
//! assembling the markets' KKT conditions into one system, linearizing the
//! complementarity conditions with big-M binaries, and solving the resulting
//! MILP through a pluggable solver adapter.
//!
//! Pipeline:
//!
//! ```text
//! case file -> MarketCase -> market LPs -> KKT systems -> coupled system
//!           -> big-M MILP -> solve -> EquilibriumSolution -> verification
//! ```
//!
//! [`case`] holds the domain model and case-file ingestion, [`lp`] the
//! canonical LP substrate, [`markets`] the three LP builders, [`kkt`] the
//! KKT derivation and market coupling, [`milp`] the big-M reformulation,
//! [`solver`] the adapter contract, [`verify`] the independent equilibrium
//! oracles, and [`study`] the scenario harness behind the CLI.

pub mod case;
pub mod export;
pub mod kkt;
pub mod lp;
pub mod markets;
pub mod milp;
pub mod solver;
pub mod study;
pub mod verify;

mod error;

pub use case::{parse_case, validate, MarketCase};
pub use error::Error;
pub use kkt::{EquilibriumSystem, Mode};
pub use milp::MilpModel;
pub use solver::{SolveResult, SolveStatus};
pub use study::{run_single, RunOutcome, StudyRow};
pub use verify::EquilibriumSolution;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
