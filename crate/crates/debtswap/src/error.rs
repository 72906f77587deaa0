use thiserror::Error;

use crate::network::Violation;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed network file: {0}")]
    Parse(String),

    #[error("unknown bank id `{0}`")]
    UnknownBank(String),

    #[error("duplicate bank id `{0}`")]
    DuplicateBank(String),

    #[error("network is invalid: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("no contract from `{debtor}` to `{creditor}`")]
    MissingContract { debtor: String, creditor: String },

    #[error("invalid shock: {0}")]
    BadShock(String),

    #[error("invalid operation spec: {0}")]
    BadSpec(String),

    #[error("clearing did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("enumeration budget exceeded: {needed} configurations needed, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("network is not a tree: undirected cycle through {}", .0.join(" - "))]
    NotATree(Vec<String>),

    #[error("singular linear system while solving regime for default set of size {0}")]
    Singular(usize),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
