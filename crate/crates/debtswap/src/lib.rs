//! Deterministic clearing, shock analysis and debt-swap search for networks
//! of interbank liabilities.
//!
//! The library computes the maximal clearing vector of a liability network
//! (by Picard iteration and by the fictitious-default algorithm, with an
//! optional default-cost factor), evaluates a bank's exposure under three
//! shock models (proportional, worst-set, worst-sum), applies and classifies
//! debt swaps, portfolio swaps and multi-party debt reorganizations, and
//! searches networks for swaps that improve both acting banks. Brute-force
//! oracles and randomized harnesses cross-check every solver at desk scale.

#![forbid(unsafe_code)]

pub mod clearing;
pub mod error;
pub mod gadgets;
mod linalg;
pub mod network;
pub mod oracle;
pub mod shock;
pub mod swap;
pub mod tree;

pub use clearing::{
    solve, solve_fictitious_default, solve_picard, solve_with_default_costs, ClearingSolution,
};
pub use error::{Error, Result};
pub use gadgets::{paper_fixture, Fixture, FixtureName};
pub use network::{
    apply_shock, ensure_valid, load, open_variant, proportional_shock, save, validate, Bank,
    BankId, Contract, FinancialNetwork, ShockVector, Violation,
};
pub use shock::{
    proportional_shock_function, worst_set_function, worst_set_value, worst_sum_function,
    worst_sum_value, DiscreteShockFunction, Exactness, PwlShockFunction, Refinement, ShockOptions,
};
pub use swap::{
    apply_portfolio_swap, apply_reorg, apply_swap, classify_portfolio_swap, classify_reorg,
    classify_swap, search_positive_swaps, PortfolioSwapSpec, ReorgSpec, SearchScope, ShockModel,
    SwapSpec, SwapVerdict, VerdictClass,
};
pub use tree::{is_tree, tree_worst_set, TreeCertificate};
