//! Debt swaps, portfolio swaps and multi-party debt reorganizations, plus
//! classification of an operation as positive / semi-positive / neutral /
//! not-dominant under a chosen shock model, and the search for positive
//! swaps.

use rayon::prelude::*;
use serde::Serialize;

use crate::clearing::solve;
use crate::error::{Error, Result};
use crate::network::{BankId, FinancialNetwork};
use crate::shock::{
    proportional_shock_function_opt, worst_set_function_opt, worst_sum_function_opt, Exactness,
    Refinement, ShockOptions,
};
use crate::tree::{is_tree, tree_worst_set};

/// Strict improvement must exceed this margin; float noise below it never
/// counts as a strict inequality.
pub const STRICT_TOL: f64 = 1e-7;

fn weights_equal(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

// ---------------------------------------------------------------------------
// Operation specs
// ---------------------------------------------------------------------------

/// Two equal-weight contracts whose creditors exchange them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwapSpec {
    pub debtor1: BankId,
    pub creditor1: BankId,
    pub debtor2: BankId,
    pub creditor2: BankId,
    pub weight: f64,
}

impl SwapSpec {
    pub fn acting(&self) -> [&BankId; 2] {
        [&self.creditor1, &self.creditor2]
    }
}

/// Two disjoint debtor sets whose contracts switch creditors wholesale; the
/// exchanged totals must match.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioSwapSpec {
    pub creditor1: BankId,
    pub creditor2: BankId,
    pub debtors1: Vec<BankId>,
    pub debtors2: Vec<BankId>,
}

/// A set of equal-weight contracts (u_i, v_i) whose recipients are permuted:
/// u_i's debt goes to v_{permutation[i]}. The permutation must move every
/// index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReorgSpec {
    pub contracts: Vec<(BankId, BankId)>,
    pub permutation: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Applying operations
// ---------------------------------------------------------------------------

fn require_distinct(ids: &[&BankId]) -> Result<()> {
    for (i, a) in ids.iter().enumerate() {
        for b in ids.iter().skip(i + 1) {
            if a == b {
                return Err(Error::BadSpec(format!(
                    "endpoints must be pairwise distinct; `{a}` repeats"
                )));
            }
        }
    }
    Ok(())
}

fn require_bank(network: &FinancialNetwork, id: &BankId) -> Result<()> {
    if network.bank_index(id).is_none() {
        return Err(Error::UnknownBank(id.to_string()));
    }
    Ok(())
}

/// Exchanges the creditors of the two contracts; exactly four liabilities
/// change and every bank's incoming and outgoing totals are preserved.
pub fn apply_swap(network: &FinancialNetwork, spec: &SwapSpec) -> Result<FinancialNetwork> {
    let SwapSpec {
        debtor1: u1,
        creditor1: v1,
        debtor2: u2,
        creditor2: v2,
        weight,
    } = spec;
    require_distinct(&[u1, v1, u2, v2])?;
    for id in [u1, v1, u2, v2] {
        require_bank(network, id)?;
    }
    let w1 = network.weight(u1, v1);
    let w2 = network.weight(u2, v2);
    if w1 == 0.0 {
        return Err(Error::MissingContract {
            debtor: u1.to_string(),
            creditor: v1.to_string(),
        });
    }
    if w2 == 0.0 {
        return Err(Error::MissingContract {
            debtor: u2.to_string(),
            creditor: v2.to_string(),
        });
    }
    if !weights_equal(w1, w2) {
        return Err(Error::BadSpec(format!(
            "swapped contracts must have equal weight: {w1} vs {w2}"
        )));
    }
    if !weights_equal(w1, *weight) {
        return Err(Error::BadSpec(format!(
            "spec weight {weight} does not match contract weight {w1}"
        )));
    }
    if network.weight(u1, v2) != 0.0 || network.weight(u2, v1) != 0.0 {
        return Err(Error::BadSpec(format!(
            "cross contract already exists between {{`{u1}`,`{u2}`}} and {{`{v1}`,`{v2}`}}"
        )));
    }
    let banks = network
        .banks()
        .iter()
        .map(|b| (b.id.clone(), b.funds));
    let contracts = network.contracts().iter().map(|c| {
        if &c.debtor == u1 && &c.creditor == v1 {
            (c.debtor.clone(), v2.clone(), c.weight)
        } else if &c.debtor == u2 && &c.creditor == v2 {
            (c.debtor.clone(), v1.clone(), c.weight)
        } else {
            (c.debtor.clone(), c.creditor.clone(), c.weight)
        }
    });
    Ok(FinancialNetwork::new(
        banks,
        contracts,
        network.default_cost_beta(),
    ))
}

/// Portfolio swap: all of U1's debts towards v1 move to v2 and vice versa.
pub fn apply_portfolio_swap(
    network: &FinancialNetwork,
    spec: &PortfolioSwapSpec,
) -> Result<FinancialNetwork> {
    let v1 = &spec.creditor1;
    let v2 = &spec.creditor2;
    if v1 == v2 {
        return Err(Error::BadSpec("acting banks must differ".into()));
    }
    let mut all: Vec<&BankId> = vec![v1, v2];
    all.extend(spec.debtors1.iter());
    all.extend(spec.debtors2.iter());
    require_distinct(&all)?;
    for id in &all {
        require_bank(network, id)?;
    }
    let mut total1 = 0.0;
    for u in &spec.debtors1 {
        let w = network.weight(u, v1);
        if w == 0.0 {
            return Err(Error::MissingContract {
                debtor: u.to_string(),
                creditor: v1.to_string(),
            });
        }
        if network.weight(u, v2) != 0.0 {
            return Err(Error::BadSpec(format!(
                "pre-existing cross contract `{u}` -> `{v2}`"
            )));
        }
        total1 += w;
    }
    let mut total2 = 0.0;
    for u in &spec.debtors2 {
        let w = network.weight(u, v2);
        if w == 0.0 {
            return Err(Error::MissingContract {
                debtor: u.to_string(),
                creditor: v2.to_string(),
            });
        }
        if network.weight(u, v1) != 0.0 {
            return Err(Error::BadSpec(format!(
                "pre-existing cross contract `{u}` -> `{v1}`"
            )));
        }
        total2 += w;
    }
    if !weights_equal(total1, total2) {
        return Err(Error::BadSpec(format!(
            "exchanged portfolio totals differ: {total1} vs {total2}"
        )));
    }
    let in1: std::collections::BTreeSet<&BankId> = spec.debtors1.iter().collect();
    let in2: std::collections::BTreeSet<&BankId> = spec.debtors2.iter().collect();
    let contracts = network.contracts().iter().map(|c| {
        if in1.contains(&c.debtor) && &c.creditor == v1 {
            (c.debtor.clone(), v2.clone(), c.weight)
        } else if in2.contains(&c.debtor) && &c.creditor == v2 {
            (c.debtor.clone(), v1.clone(), c.weight)
        } else {
            (c.debtor.clone(), c.creditor.clone(), c.weight)
        }
    });
    Ok(FinancialNetwork::new(
        network.banks().iter().map(|b| (b.id.clone(), b.funds)),
        contracts,
        network.default_cost_beta(),
    ))
}

/// Debt reorganization: contract i's creditor becomes v_{permutation[i]}.
pub fn apply_reorg(network: &FinancialNetwork, spec: &ReorgSpec) -> Result<FinancialNetwork> {
    let m = spec.contracts.len();
    if spec.permutation.len() != m {
        return Err(Error::BadSpec(format!(
            "permutation length {} does not match {m} contracts",
            spec.permutation.len()
        )));
    }
    let mut seen = vec![false; m];
    for (i, &p) in spec.permutation.iter().enumerate() {
        if p >= m || seen[p] {
            return Err(Error::BadSpec("not a permutation".into()));
        }
        if p == i {
            return Err(Error::BadSpec(
                "permutation must be fixed-point free".into(),
            ));
        }
        seen[p] = true;
    }
    let all: Vec<&BankId> = spec
        .contracts
        .iter()
        .flat_map(|(u, v)| [u, v])
        .collect();
    require_distinct(&all)?;
    let mut weight = None;
    for (u, v) in &spec.contracts {
        require_bank(network, u)?;
        require_bank(network, v)?;
        let w = network.weight(u, v);
        if w == 0.0 {
            return Err(Error::MissingContract {
                debtor: u.to_string(),
                creditor: v.to_string(),
            });
        }
        match weight {
            None => weight = Some(w),
            Some(expect) => {
                if !weights_equal(w, expect) {
                    return Err(Error::BadSpec(format!(
                        "reorganized contracts must share one weight: {expect} vs {w}"
                    )));
                }
            }
        }
    }
    for (i, (u, _)) in spec.contracts.iter().enumerate() {
        for (j, (_, v)) in spec.contracts.iter().enumerate() {
            if i != j && network.weight(u, v) != 0.0 {
                return Err(Error::BadSpec(format!(
                    "pre-existing cross contract `{u}` -> `{v}`"
                )));
            }
        }
    }
    let contracts = network.contracts().iter().map(|c| {
        for (i, (u, v)) in spec.contracts.iter().enumerate() {
            if &c.debtor == u && &c.creditor == v {
                let new_creditor = spec.contracts[spec.permutation[i]].1.clone();
                return (c.debtor.clone(), new_creditor, c.weight);
            }
        }
        (c.debtor.clone(), c.creditor.clone(), c.weight)
    });
    Ok(FinancialNetwork::new(
        network.banks().iter().map(|b| (b.id.clone(), b.funds)),
        contracts,
        network.default_cost_beta(),
    ))
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// The shock model a dominance comparison runs under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShockModel {
    /// No shock: compare the single unshocked asset value.
    Base,
    Proportional,
    WorstSet { k_max: usize },
    WorstSum { refinement: Refinement },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictClass {
    Positive,
    SemiPositive,
    Neutral,
    /// Some comparison point is strictly worse for an acting bank.
    NotDominant,
}

/// One sampled comparison between the shock functions before and after.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonPoint {
    pub x: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BankDominance {
    pub bank: BankId,
    pub improved: bool,
    pub worsened: bool,
    pub max_gain: f64,
    pub max_loss: f64,
    pub points: Vec<ComparisonPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SwapVerdict {
    pub class: VerdictClass,
    pub banks: Vec<BankDominance>,
    /// True when an inexact (refined-approximation) shock function entered
    /// the comparison, so the verdict is numeric rather than exact.
    pub numeric_only: bool,
}

/// Samples an acting bank's shock function before/after under the model.
/// Returns the comparison points and whether any side was inexact.
fn compare_bank(
    before: &FinancialNetwork,
    after: &FinancialNetwork,
    bank: &BankId,
    model: &ShockModel,
    opts: &ShockOptions,
) -> Result<(Vec<ComparisonPoint>, bool)> {
    match model {
        ShockModel::Base => {
            let b = solve(before)?.assets_of(bank);
            let a = solve(after)?.assets_of(bank);
            Ok((
                vec![ComparisonPoint {
                    x: 0.0,
                    before: b,
                    after: a,
                }],
                false,
            ))
        }
        ShockModel::WorstSet { k_max } => {
            // Trees get the polynomial DP; everything else is enumerated.
            let use_tree =
                is_tree(before)?.is_tree && is_tree(after)?.is_tree && before.beta() == 1.0;
            let (fb, fa) = if use_tree {
                (
                    tree_worst_set(before, bank, *k_max)?,
                    tree_worst_set(after, bank, *k_max)?,
                )
            } else {
                (
                    worst_set_function_opt(before, bank, *k_max, opts)?,
                    worst_set_function_opt(after, bank, *k_max, opts)?,
                )
            };
            let points = (0..=*k_max)
                .map(|k| ComparisonPoint {
                    x: k as f64,
                    before: fb.values[k],
                    after: fa.values[k],
                })
                .collect();
            Ok((points, false))
        }
        ShockModel::Proportional => {
            let fb = proportional_shock_function_opt(before, bank, opts)?;
            let fa = proportional_shock_function_opt(after, bank, opts)?;
            let numeric = fb.exactness == Exactness::RefinedApproximation
                || fa.exactness == Exactness::RefinedApproximation;
            Ok((pwl_comparison_points(&fb, &fa), numeric))
        }
        ShockModel::WorstSum { refinement } => {
            let fb = worst_sum_function_opt(before, bank, refinement, opts)?;
            let fa = worst_sum_function_opt(after, bank, refinement, opts)?;
            let numeric = fb.exactness == Exactness::RefinedApproximation
                || fa.exactness == Exactness::RefinedApproximation;
            Ok((pwl_comparison_points(&fb, &fa), numeric))
        }
    }
}

/// Dominance over piecewise-linear functions is decided on the union of
/// both breakpoint sets plus the midpoints of the merged partition: two
/// linear pieces that agree there agree everywhere.
fn pwl_comparison_points(
    before: &crate::shock::PwlShockFunction,
    after: &crate::shock::PwlShockFunction,
) -> Vec<ComparisonPoint> {
    let mut xs: Vec<f64> = before
        .breakpoints
        .iter()
        .chain(after.breakpoints.iter())
        .map(|p| p.0)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut grid = Vec::with_capacity(xs.len() * 2);
    for (i, &x) in xs.iter().enumerate() {
        grid.push(x);
        if i + 1 < xs.len() {
            grid.push(0.5 * (x + xs[i + 1]));
        }
    }
    grid.into_iter()
        .map(|x| ComparisonPoint {
            x,
            before: before.eval(x),
            after: after.eval(x),
        })
        .collect()
}

fn verdict_for(
    before: &FinancialNetwork,
    after: &FinancialNetwork,
    acting: &[BankId],
    model: &ShockModel,
    opts: &ShockOptions,
) -> Result<SwapVerdict> {
    let mut banks = Vec::with_capacity(acting.len());
    let mut numeric_only = false;
    for bank in acting {
        let (points, numeric) = compare_bank(before, after, bank, model, opts)?;
        numeric_only |= numeric;
        let mut max_gain: f64 = 0.0;
        let mut max_loss: f64 = 0.0;
        for p in &points {
            max_gain = max_gain.max(p.after - p.before);
            max_loss = max_loss.max(p.before - p.after);
        }
        banks.push(BankDominance {
            bank: bank.clone(),
            improved: max_gain > STRICT_TOL,
            worsened: max_loss > STRICT_TOL,
            max_gain,
            max_loss,
            points,
        });
    }
    let class = if banks.iter().any(|b| b.worsened) {
        VerdictClass::NotDominant
    } else if !banks.is_empty() && banks.iter().all(|b| b.improved) {
        VerdictClass::Positive
    } else if banks.iter().any(|b| b.improved) {
        VerdictClass::SemiPositive
    } else {
        VerdictClass::Neutral
    };
    Ok(SwapVerdict {
        class,
        banks,
        numeric_only,
    })
}

/// Classifies a swap by comparing both acting banks' shock functions in the
/// network before and after the operation.
pub fn classify_swap(
    network: &FinancialNetwork,
    spec: &SwapSpec,
    model: &ShockModel,
) -> Result<SwapVerdict> {
    classify_swap_opt(network, spec, model, &ShockOptions::default())
}

pub fn classify_swap_opt(
    network: &FinancialNetwork,
    spec: &SwapSpec,
    model: &ShockModel,
    opts: &ShockOptions,
) -> Result<SwapVerdict> {
    let after = apply_swap(network, spec)?;
    let acting = [spec.creditor1.clone(), spec.creditor2.clone()];
    verdict_for(network, &after, &acting, model, opts)
}

pub fn classify_portfolio_swap(
    network: &FinancialNetwork,
    spec: &PortfolioSwapSpec,
    model: &ShockModel,
) -> Result<SwapVerdict> {
    let after = apply_portfolio_swap(network, spec)?;
    let acting = [spec.creditor1.clone(), spec.creditor2.clone()];
    verdict_for(network, &after, &acting, model, &ShockOptions::default())
}

pub fn classify_reorg(
    network: &FinancialNetwork,
    spec: &ReorgSpec,
    model: &ShockModel,
) -> Result<SwapVerdict> {
    let after = apply_reorg(network, spec)?;
    let acting: Vec<BankId> = spec.contracts.iter().map(|(_, v)| v.clone()).collect();
    verdict_for(network, &after, &acting, model, &ShockOptions::default())
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SearchScope {
    /// All valid contract pairs in the network.
    All,
    /// Only pairs of incoming contracts of the two given acting banks.
    Pair(BankId, BankId),
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Maximum number of candidate specs evaluated; beyond it the result is
    /// returned partially with the truncation marker set.
    pub limit: usize,
    pub shock: ShockOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            limit: 20_000,
            shock: ShockOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Positive and semi-positive hits, deterministically sorted: positive
    /// first, then by contract ids.
    pub hits: Vec<(SwapSpec, SwapVerdict)>,
    pub candidates: usize,
    pub truncated: bool,
}

/// Whether two contracts form a valid swap candidate.
fn valid_pair(
    network: &FinancialNetwork,
    c1: &crate::network::Contract,
    c2: &crate::network::Contract,
) -> bool {
    weights_equal(c1.weight, c2.weight)
        && require_distinct(&[&c1.debtor, &c1.creditor, &c2.debtor, &c2.creditor]).is_ok()
        && network.weight(&c1.debtor, &c2.creditor) == 0.0
        && network.weight(&c2.debtor, &c1.creditor) == 0.0
}

/// Enumerates candidate swaps and returns every positive or semi-positive
/// one. Symmetric duplicates ((c1,c2) vs (c2,c1)) are generated once.
pub fn search_positive_swaps(
    network: &FinancialNetwork,
    model: &ShockModel,
    scope: &SearchScope,
) -> Result<SearchResult> {
    search_positive_swaps_opt(network, model, scope, &SearchOptions::default())
}

pub fn search_positive_swaps_opt(
    network: &FinancialNetwork,
    model: &ShockModel,
    scope: &SearchScope,
    opts: &SearchOptions,
) -> Result<SearchResult> {
    let mut contracts: Vec<&crate::network::Contract> = network.contracts().iter().collect();
    contracts.sort_by(|a, b| (&a.debtor, &a.creditor).cmp(&(&b.debtor, &b.creditor)));

    let mut candidates: Vec<SwapSpec> = Vec::new();
    match scope {
        SearchScope::All => {
            for i in 0..contracts.len() {
                for j in i + 1..contracts.len() {
                    if valid_pair(network, contracts[i], contracts[j]) {
                        candidates.push(SwapSpec {
                            debtor1: contracts[i].debtor.clone(),
                            creditor1: contracts[i].creditor.clone(),
                            debtor2: contracts[j].debtor.clone(),
                            creditor2: contracts[j].creditor.clone(),
                            weight: contracts[i].weight,
                        });
                    }
                }
            }
        }
        SearchScope::Pair(v1, v2) => {
            if v1 == v2 {
                return Err(Error::BadSpec("acting banks must differ".into()));
            }
            for id in [v1, v2] {
                require_bank(network, id)?;
            }
            let incoming1: Vec<&&crate::network::Contract> =
                contracts.iter().filter(|c| &c.creditor == v1).collect();
            let incoming2: Vec<&&crate::network::Contract> =
                contracts.iter().filter(|c| &c.creditor == v2).collect();
            for c1 in &incoming1 {
                for c2 in &incoming2 {
                    if valid_pair(network, c1, c2) {
                        candidates.push(SwapSpec {
                            debtor1: c1.debtor.clone(),
                            creditor1: c1.creditor.clone(),
                            debtor2: c2.debtor.clone(),
                            creditor2: c2.creditor.clone(),
                            weight: c1.weight,
                        });
                    }
                }
            }
        }
    }

    let truncated = candidates.len() > opts.limit;
    let examined = candidates.len().min(opts.limit);
    candidates.truncate(examined);

    let evaluated: Result<Vec<(SwapSpec, SwapVerdict)>> = candidates
        .into_par_iter()
        .map(|spec| {
            let verdict = classify_swap_opt(network, &spec, model, &opts.shock)?;
            Ok((spec, verdict))
        })
        .collect();
    let mut hits: Vec<(SwapSpec, SwapVerdict)> = evaluated?
        .into_iter()
        .filter(|(_, v)| matches!(v.class, VerdictClass::Positive | VerdictClass::SemiPositive))
        .collect();
    hits.sort_by(|a, b| {
        let rank = |v: &SwapVerdict| match v.class {
            VerdictClass::Positive => 0,
            _ => 1,
        };
        rank(&a.1).cmp(&rank(&b.1)).then_with(|| {
            (
                &a.0.debtor1,
                &a.0.creditor1,
                &a.0.debtor2,
                &a.0.creditor2,
            )
                .cmp(&(&b.0.debtor1, &b.0.creditor1, &b.0.debtor2, &b.0.creditor2))
        })
    });
    Ok(SearchResult {
        hits,
        candidates: examined,
        truncated,
    })
}
