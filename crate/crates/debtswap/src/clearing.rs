//! Maximal-clearing-vector computation: Picard iteration from above, the
//! fictitious-default algorithm, and the default-cost (beta) extension.
//!
//! All solvers are pure functions of an immutable network and are safe to
//! call concurrently; results are bit-identical across schedules.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{ensure_valid, BankId, FinancialNetwork};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Which algorithm produced a solution, and whether a fallback was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Picard,
    FictitiousDefault,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveMeta {
    pub method: SolveMethod,
    /// Set when the fictitious-default solver hit a singular system and the
    /// result was produced by Picard instead.
    pub fell_back: bool,
    pub iterations: usize,
}

/// The maximal clearing vector together with the payments and assets it
/// induces.
#[derive(Debug, Clone)]
pub struct ClearingSolution {
    pub recovery: BTreeMap<BankId, f64>,
    pub payments: BTreeMap<(BankId, BankId), f64>,
    pub assets: BTreeMap<BankId, f64>,
    pub equity: BTreeMap<BankId, f64>,
    pub defaulting: BTreeSet<BankId>,
    /// Maximum fixed-point violation over banks, in recovery-rate units.
    pub residual: f64,
    pub meta: SolveMeta,
}

impl ClearingSolution {
    pub fn assets_of(&self, id: &BankId) -> f64 {
        self.assets.get(id).copied().unwrap_or(0.0)
    }

    pub fn recovery_of(&self, id: &BankId) -> f64 {
        self.recovery.get(id).copied().unwrap_or(1.0)
    }

    pub fn payment(&self, debtor: &BankId, creditor: &BankId) -> f64 {
        self.payments
            .get(&(debtor.clone(), creditor.clone()))
            .copied()
            .unwrap_or(0.0)
    }
}

// ---------------------------------------------------------------------------
// Compiled problem: index-based view reused across many shocked solves
// ---------------------------------------------------------------------------

/// Index-based view of a network, built once and reused across the many
/// clearing solves of a shock enumeration.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub n: usize,
    pub ids: Vec<BankId>,
    pub funds: Vec<f64>,
    /// Outgoing contracts per bank as (creditor, weight).
    pub out: Vec<Vec<(usize, f64)>>,
    /// Incoming contracts per bank as (debtor, weight).
    pub incoming: Vec<Vec<(usize, f64)>>,
    /// Total liability per bank.
    pub liab: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub recovery: Vec<f64>,
    pub assets: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl Problem {
    pub fn build(network: &FinancialNetwork) -> Result<Problem> {
        ensure_valid(network)?;
        Ok(Self::build_unchecked(network, network.beta()))
    }

    pub fn build_unchecked(network: &FinancialNetwork, beta: f64) -> Problem {
        let n = network.len();
        let ids: Vec<BankId> = network.banks().iter().map(|b| b.id.clone()).collect();
        let funds: Vec<f64> = network.banks().iter().map(|b| b.funds).collect();
        let mut out = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        let mut liab = vec![0.0; n];
        for c in network.contracts() {
            let d = network.bank_index(&c.debtor).expect("validated");
            let cr = network.bank_index(&c.creditor).expect("validated");
            out[d].push((cr, c.weight));
            incoming[cr].push((d, c.weight));
            liab[d] += c.weight;
        }
        Problem {
            n,
            ids,
            funds,
            out,
            incoming,
            liab,
            beta,
        }
    }

    /// Recovery-rate update target for a given asset level.
    fn target_rate(&self, bank: usize, assets: f64) -> f64 {
        let l = self.liab[bank];
        if l == 0.0 || assets >= l {
            // Banks without liabilities never default.
            1.0
        } else {
            (self.beta * assets / l).min(1.0)
        }
    }

    fn assets_for(&self, funds: &[f64], rates: &[f64]) -> Vec<f64> {
        let mut assets = funds.to_vec();
        for (debtor, outs) in self.out.iter().enumerate() {
            let r = rates[debtor];
            if r == 0.0 {
                continue;
            }
            for &(creditor, weight) in outs {
                assets[creditor] += r * weight;
            }
        }
        assets
    }

    /// Picard iteration from r == 1. The iterate sequence is componentwise
    /// nonincreasing and converges to the maximal clearing vector.
    pub fn picard(&self, funds: &[f64], tol: f64, max_iter: usize) -> Result<RawSolution> {
        let mut rates = vec![1.0; self.n];
        let mut residual = f64::INFINITY;
        for iteration in 1..=max_iter {
            let assets = self.assets_for(funds, &rates);
            let mut worst: f64 = 0.0;
            for u in 0..self.n {
                let target = self.target_rate(u, assets[u]);
                worst = worst.max((rates[u] - target).abs());
                rates[u] = target;
            }
            residual = worst;
            if residual <= tol {
                let assets = self.assets_for(funds, &rates);
                return Ok(RawSolution {
                    recovery: rates,
                    assets,
                    residual,
                    iterations: iteration,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
            residual,
        })
    }

    /// Fixed-point violation of a candidate rate vector, in rate units.
    fn residual_of(&self, funds: &[f64], rates: &[f64]) -> f64 {
        let assets = self.assets_for(funds, rates);
        (0..self.n)
            .map(|u| (rates[u] - self.target_rate(u, assets[u])).abs())
            .fold(0.0, f64::max)
    }

    /// Fictitious-default: guesses the default set starting from the empty
    /// set and enlarges it until consistent, solving one linear system per
    /// round. Only meaningful for beta == 1. Returns `None` on a singular
    /// system so the caller can fall back to Picard.
    pub fn fictitious_default(&self, funds: &[f64], tol: f64) -> Option<RawSolution> {
        let mut in_default = vec![false; self.n];
        for round in 0..=self.n {
            // Solve rates for the current default set.
            let defaulters: Vec<usize> = (0..self.n).filter(|&u| in_default[u]).collect();
            let mut rates = vec![1.0; self.n];
            if !defaulters.is_empty() {
                let pos: BTreeMap<usize, usize> = defaulters
                    .iter()
                    .enumerate()
                    .map(|(slot, &u)| (u, slot))
                    .collect();
                let m = defaulters.len();
                let mut matrix = vec![vec![0.0; m]; m];
                let mut rhs = vec![0.0; m];
                for (slot, &u) in defaulters.iter().enumerate() {
                    matrix[slot][slot] = self.liab[u];
                    rhs[slot] = funds[u];
                    for &(debtor, weight) in &self.incoming[u] {
                        if let Some(&dslot) = pos.get(&debtor) {
                            matrix[slot][dslot] -= weight;
                        } else {
                            rhs[slot] += weight;
                        }
                    }
                }
                let solution = linalg::solve(matrix, rhs)?;
                for (slot, &u) in defaulters.iter().enumerate() {
                    rates[u] = solution[slot].clamp(0.0, 1.0);
                }
            }
            // Enlarge by every newly insolvent bank at once.
            let assets = self.assets_for(funds, &rates);
            let mut grew = false;
            for u in 0..self.n {
                if !in_default[u] && self.liab[u] > 0.0 && assets[u] < self.liab[u] - tol {
                    in_default[u] = true;
                    grew = true;
                }
            }
            if !grew {
                let residual = self.residual_of(funds, &rates);
                if residual > tol.max(1e-7) {
                    // Clamping masked an inconsistent system; let the caller
                    // fall back.
                    return None;
                }
                return Some(RawSolution {
                    recovery: rates,
                    assets,
                    residual,
                    iterations: round + 1,
                });
            }
        }
        None
    }

    pub fn to_solution(&self, raw: RawSolution, method: SolveMethod, fell_back: bool) -> ClearingSolution {
        let mut payments = BTreeMap::new();
        for (debtor, outs) in self.out.iter().enumerate() {
            for &(creditor, weight) in outs {
                payments.insert(
                    (self.ids[debtor].clone(), self.ids[creditor].clone()),
                    raw.recovery[debtor] * weight,
                );
            }
        }
        let mut recovery = BTreeMap::new();
        let mut assets = BTreeMap::new();
        let mut equity = BTreeMap::new();
        let mut defaulting = BTreeSet::new();
        for u in 0..self.n {
            let id = self.ids[u].clone();
            recovery.insert(id.clone(), raw.recovery[u]);
            assets.insert(id.clone(), raw.assets[u]);
            equity.insert(id.clone(), (raw.assets[u] - self.liab[u]).max(0.0));
            if raw.recovery[u] + 1e-9 < 1.0 {
                defaulting.insert(id);
            }
        }
        ClearingSolution {
            recovery,
            payments,
            assets,
            equity,
            defaulting,
            residual: raw.residual,
            meta: SolveMeta {
                method,
                fell_back,
                iterations: raw.iterations,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Public solver entry points
// ---------------------------------------------------------------------------

/// Computes the maximal clearing vector by Picard iteration from r == 1,
/// honouring the network's default-cost factor if present.
pub fn solve_picard(
    network: &FinancialNetwork,
    tol: f64,
    max_iter: usize,
) -> Result<ClearingSolution> {
    if tol <= 0.0 {
        return Err(Error::OutOfRange(format!("tolerance {tol} must be > 0")));
    }
    let problem = Problem::build(network)?;
    let raw = problem.picard(&problem.funds.clone(), tol, max_iter)?;
    Ok(problem.to_solution(raw, SolveMethod::Picard, false))
}

/// Computes the same maximal clearing vector with the fictitious-default
/// algorithm (beta = 1 semantics). Falls back to Picard on a singular
/// system and flags the fallback in the solution metadata.
pub fn solve_fictitious_default(network: &FinancialNetwork, tol: f64) -> Result<ClearingSolution> {
    if tol <= 0.0 {
        return Err(Error::OutOfRange(format!("tolerance {tol} must be > 0")));
    }
    ensure_valid(network)?;
    let problem = Problem::build_unchecked(network, 1.0);
    match problem.fictitious_default(&problem.funds.clone(), tol) {
        Some(raw) => Ok(problem.to_solution(raw, SolveMethod::FictitiousDefault, false)),
        None => {
            let raw = problem.picard(&problem.funds.clone(), tol, DEFAULT_MAX_ITER)?;
            Ok(problem.to_solution(raw, SolveMethod::FictitiousDefault, true))
        }
    }
}

/// Clearing with explicit default costs: a defaulting bank distributes only
/// `beta * assets`, split proportionally. `beta = 1` reproduces
/// [`solve_picard`] exactly.
pub fn solve_with_default_costs(
    network: &FinancialNetwork,
    beta: f64,
    tol: f64,
) -> Result<ClearingSolution> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::OutOfRange(format!("beta {beta} outside (0, 1]")));
    }
    solve_picard(&network.with_beta(Some(beta)), tol, DEFAULT_MAX_ITER)
}

/// Default solve used throughout the crate: Picard with standard tolerances,
/// honouring the network's beta field.
pub fn solve(network: &FinancialNetwork) -> Result<ClearingSolution> {
    solve_picard(network, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadgets::{paper_fixture, FixtureName};
    use crate::network::FinancialNetwork;
    use crate::oracle::{random_network, RandomNetworkParams};
    use crate::swap::apply_swap;

    fn id(s: &str) -> BankId {
        BankId::from(s)
    }

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }

    #[test]
    fn fig1_assets_by_both_solvers() {
        let fig1 = paper_fixture(FixtureName::Fig1).network;
        let expected = [("v1", 5.0), ("v2", 4.0), ("v3", 6.0), ("v4", 2.0), ("v5", 5.0)];
        for solution in [
            solve_picard(&fig1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap(),
            solve_fictitious_default(&fig1, DEFAULT_TOL).unwrap(),
        ] {
            for (bank, assets) in expected {
                assert_close(solution.assets_of(&id(bank)), assets);
            }
        }
    }

    #[test]
    fn fig1_defaulting_set() {
        let fig1 = paper_fixture(FixtureName::Fig1).network;
        let solution = solve_fictitious_default(&fig1, DEFAULT_TOL).unwrap();
        let expected: BTreeSet<BankId> = ["v2", "v3", "v4"].into_iter().map(id).collect();
        assert_eq!(solution.defaulting, expected);
        assert!(!solution.meta.fell_back);
    }

    #[test]
    fn two_bank_cycle_sustains_full_payment() {
        let net = FinancialNetwork::new(
            [(id("a"), 0.0), (id("b"), 0.0)],
            [(id("a"), id("b"), 1.0), (id("b"), id("a"), 1.0)],
            None,
        );
        let solution = solve_picard(&net, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_close(solution.recovery_of(&id("a")), 1.0);
        assert_close(solution.recovery_of(&id("b")), 1.0);
        assert_close(solution.assets_of(&id("a")), 1.0);
        assert_close(solution.assets_of(&id("b")), 1.0);
        assert!(solution.defaulting.is_empty());
    }

    #[test]
    fn expansive_network_payments_at_x() {
        let net = paper_fixture(FixtureName::Expansive).network;
        // Fixture ships with e_s = 0.3.
        let solution = solve(&net).unwrap();
        assert_close(solution.payment(&id("u1"), &id("u2")), 0.6);
        for (d, c) in [("s", "u1"), ("u2", "u1"), ("u2", "t")] {
            assert_close(solution.payment(&id(d), &id(c)), 0.3);
        }
    }

    #[test]
    fn no_contracts_means_no_defaults() {
        let net = FinancialNetwork::new([(id("a"), 2.0), (id("b"), 0.0)], [], None);
        let solution = solve_fictitious_default(&net, DEFAULT_TOL).unwrap();
        assert!(solution.defaulting.is_empty());
        assert_close(solution.assets_of(&id("a")), 2.0);
        assert_close(solution.assets_of(&id("b")), 0.0);
    }

    #[test]
    fn fig5_assets_before_swap() {
        let net = paper_fixture(FixtureName::Invariants).network;
        let solution = solve_fictitious_default(&net, DEFAULT_TOL).unwrap();
        assert_close(solution.assets_of(&id("v1")), 0.5);
        assert_close(solution.assets_of(&id("v2")), 1.0);
    }

    #[test]
    fn semipos_with_default_costs_before_and_after() {
        let fixture = paper_fixture(FixtureName::Semipos);
        let before = solve_with_default_costs(&fixture.network, 0.5, DEFAULT_TOL).unwrap();
        assert_close(before.assets_of(&id("v1")), 0.25);
        assert_close(before.assets_of(&id("v2")), 1.125);
        let swapped = apply_swap(&fixture.network, fixture.swap.as_ref().unwrap()).unwrap();
        let after = solve_with_default_costs(&swapped, 0.5, DEFAULT_TOL).unwrap();
        assert_close(after.assets_of(&id("v1")), 1.0);
        assert_close(after.assets_of(&id("v2")), 1.25);
    }

    #[test]
    fn beta_one_matches_plain_picard() {
        let fig1 = paper_fixture(FixtureName::Fig1).network;
        let plain = solve_picard(&fig1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let with_costs = solve_with_default_costs(&fig1, 1.0, DEFAULT_TOL).unwrap();
        for bank in fig1.banks() {
            assert_eq!(
                plain.assets_of(&bank.id),
                with_costs.assets_of(&bank.id),
                "beta=1 must be bit-identical"
            );
        }
    }

    #[test]
    fn nonconvergence_reports_error() {
        let net = paper_fixture(FixtureName::Fig1).network;
        let err = solve_picard(&net, 1e-12, 2).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn solvers_agree_on_random_networks() {
        for seed in 0..500u64 {
            let net = random_network(&RandomNetworkParams {
                seed,
                n: 2 + (seed as usize % 11),
                edge_probability: 0.4,
                funds_range: (0.0, 4.0),
                weight_range: (1, 3),
                cyclic: seed % 2 == 0,
            });
            let a = solve_picard(&net, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let b = solve_fictitious_default(&net, DEFAULT_TOL).unwrap();
            for bank in net.banks() {
                assert!(
                    (a.assets_of(&bank.id) - b.assets_of(&bank.id)).abs() < 1e-7,
                    "seed {seed} bank {} picard {} fd {}",
                    bank.id,
                    a.assets_of(&bank.id),
                    b.assets_of(&bank.id)
                );
                assert!(
                    (a.recovery_of(&bank.id) - b.recovery_of(&bank.id)).abs() < 1e-7,
                    "seed {seed} bank {}",
                    bank.id
                );
            }
            for c in net.contracts() {
                assert!(
                    (a.payment(&c.debtor, &c.creditor) - b.payment(&c.debtor, &c.creditor)).abs()
                        < 1e-7
                );
            }
        }
    }

    #[test]
    fn flow_conservation_on_random_networks() {
        for seed in 500..560u64 {
            let net = random_network(&RandomNetworkParams {
                seed,
                n: 2 + (seed as usize % 9),
                edge_probability: 0.5,
                funds_range: (0.0, 3.0),
                weight_range: (1, 3),
                cyclic: true,
            });
            let solution = solve(&net).unwrap();
            for bank in net.banks() {
                let outgoing: f64 = net
                    .contracts()
                    .iter()
                    .filter(|c| c.debtor == bank.id)
                    .map(|c| solution.payment(&c.debtor, &c.creditor))
                    .sum();
                let assets = solution.assets_of(&bank.id);
                let liability = net.total_liability(&bank.id);
                assert!(outgoing <= assets + 1e-7, "paid more than assets");
                if solution.defaulting.contains(&bank.id) {
                    assert!((outgoing - assets).abs() < 1e-6, "default must pay all");
                } else if (assets - liability).abs() > 1e-7 {
                    assert!(outgoing <= assets, "solvent bank overpaid");
                }
            }
        }
    }
}
