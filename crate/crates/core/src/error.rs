use thiserror::Error;

/// Errors surfaced by the equilibrium pipeline.
///
/// Variants carry enough context to point at the offending case entity,
/// model symbol, or solver stage without keeping a backtrace of the
/// construction path.
#[derive(Debug, Error)]
pub enum Error {
    /// Case document could not be deserialized. The path is the JSON field
    /// path reported by the deserializer, e.g. `power.lines[3].capacity`.
    #[error("case parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    /// Structurally empty or unusable case sections detected at parse time.
    #[error("invalid case: {0}")]
    InvalidCase(String),

    /// Case failed validation; the report lists every violated invariant.
    #[error("case validation failed: {0:?}")]
    Validation(Vec<String>),

    /// Model construction error (duplicate names, unknown references, missing
    /// price or dispatch inputs).
    #[error("model error: {0}")]
    Model(String),

    /// The coupled system references symbols that no market declares.
    #[error("dangling symbols in equilibrium system: {0:?}")]
    DanglingSymbols(Vec<String>),

    /// Big-M estimation failed for a symbol (unbounded or malformed family).
    #[error("big-M estimation: {0}")]
    BigM(String),

    /// Solver adapter failed to run (missing binary, crash, unparsable
    /// output). Distinct from an infeasible model, which is a status.
    #[error("solver adapter `{adapter}`: {message}")]
    Adapter { adapter: String, message: String },

    /// Equilibrium system admits no solution.
    #[error("equilibrium problem infeasible: {0}")]
    Infeasible(String),

    /// An independent verification check rejected a claimed solution.
    #[error("verification failed: {0}")]
    VerificationFailed(String),

    /// Brute-force enumeration refused: too many complementarity pairs.
    #[error("brute force enumeration bound exceeded: {pairs} pairs > {bound}")]
    EnumerationBound { pairs: usize, bound: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
