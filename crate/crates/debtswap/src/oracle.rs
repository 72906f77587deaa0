//! Independent brute-force implementations and randomized harnesses that
//! cross-check the main solvers and numerically exercise the model's
//! structural results. The oracles deliberately use their own traversal
//! logic (and the fictitious-default solver instead of Picard) so they do
//! not share code paths with what they check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clearing::solve_fictitious_default;
use crate::error::{Error, Result};
use crate::network::{BankId, FinancialNetwork};
use crate::swap::{
    classify_portfolio_swap, classify_swap, PortfolioSwapSpec,
    SearchScope, ShockModel, SwapSpec, SwapVerdict, VerdictClass,
};

// ---------------------------------------------------------------------------
// Random networks
// ---------------------------------------------------------------------------

/// Reproducible random-network recipe: same parameters, same network.
#[derive(Debug, Clone)]
pub struct RandomNetworkParams {
    pub seed: u64,
    pub n: usize,
    pub edge_probability: f64,
    /// Funds are drawn in quarter-unit steps inside this range, so zero-fund
    /// banks occur when the range starts at zero.
    pub funds_range: (f64, f64),
    /// Weights are drawn as integers inside this range; small integer
    /// weights make equal-weight contract pairs (swap candidates) common.
    pub weight_range: (u32, u32),
    /// Allow back-edges (and thus directed cycles).
    pub cyclic: bool,
}

pub fn random_network(params: &RandomNetworkParams) -> FinancialNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (flo, fhi) = params.funds_range;
    let steps = (((fhi - flo) / 0.25).round() as u32).max(1);
    let banks: Vec<(BankId, f64)> = (0..params.n)
        .map(|i| {
            let funds = flo + 0.25 * rng.gen_range(0..=steps) as f64;
            (BankId(format!("b{i}")), funds.min(fhi))
        })
        .collect();
    let (wlo, whi) = params.weight_range;
    let mut contracts = Vec::new();
    for i in 0..params.n {
        for j in 0..params.n {
            if i == j || (!params.cyclic && j <= i) {
                continue;
            }
            if rng.gen_bool(params.edge_probability.clamp(0.0, 1.0)) {
                let weight = rng.gen_range(wlo.max(1)..=whi.max(wlo.max(1))) as f64;
                contracts.push((banks[i].0.clone(), banks[j].0.clone(), weight));
            }
        }
    }
    FinancialNetwork::new(banks, contracts, None)
}

/// A random network whose undirected contract graph is a tree: a random
/// parent for every node, random edge directions, and a mix of funded and
/// unfunded banks.
pub fn random_tree_network(seed: u64, n: usize) -> FinancialNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e3a_91b5_02c4_d6f8);
    let banks: Vec<(BankId, f64)> = (0..n)
        .map(|i| {
            let funds = if rng.gen_bool(0.3) {
                0.0
            } else {
                0.5 * rng.gen_range(1..=8) as f64
            };
            (BankId(format!("b{i}")), funds)
        })
        .collect();
    let mut contracts = Vec::new();
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let weight = rng.gen_range(1..=3) as f64;
        if rng.gen_bool(0.5) {
            contracts.push((banks[i].0.clone(), banks[parent].0.clone(), weight));
        } else {
            contracts.push((banks[parent].0.clone(), banks[i].0.clone(), weight));
        }
    }
    FinancialNetwork::new(banks, contracts, None)
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

fn assets_under_wipe(network: &FinancialNetwork, wiped: &[BankId], v: &BankId) -> Result<f64> {
    let shocked = FinancialNetwork::new(
        network.banks().iter().map(|b| {
            let funds = if wiped.contains(&b.id) { 0.0 } else { b.funds };
            (b.id.clone(), funds)
        }),
        network
            .contracts()
            .iter()
            .map(|c| (c.debtor.clone(), c.creditor.clone(), c.weight)),
        network.default_cost_beta(),
    );
    Ok(solve_fictitious_default(&shocked, 1e-9)?.assets_of(v))
}

/// Worst-set value by plain enumeration of every k-subset of all banks,
/// with no pruning.
pub fn brute_worst_set(network: &FinancialNetwork, v: &BankId, k: usize) -> Result<f64> {
    let n = network.len();
    if k > n {
        return Err(Error::OutOfRange(format!("k = {k} exceeds n = {n}")));
    }
    let ids: Vec<BankId> = network.banks().iter().map(|b| b.id.clone()).collect();
    let mut best = f64::INFINITY;
    let mut choice: Vec<usize> = (0..k).collect();
    loop {
        let wiped: Vec<BankId> = choice.iter().map(|&i| ids[i].clone()).collect();
        best = best.min(assets_under_wipe(network, &wiped, v)?);
        // next combination
        let mut i = k;
        let mut advanced = false;
        while i > 0 {
            i -= 1;
            if choice[i] < n - k + i {
                choice[i] += 1;
                for j in i + 1..k {
                    choice[j] = choice[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    Ok(best)
}

/// Worst-sum upper bound over a discretized grid of arbitrary allocations:
/// every composition of rho across the banks in multiples of `step` (each
/// bank may also be wiped entirely). Enforced small n.
pub fn brute_worst_sum_grid(
    network: &FinancialNetwork,
    v: &BankId,
    rho: f64,
    step: f64,
) -> Result<f64> {
    let n = network.len();
    if n > 5 {
        return Err(Error::OutOfRange(format!(
            "grid oracle only supports n <= 5, got {n}"
        )));
    }
    if step <= 0.0 {
        return Err(Error::OutOfRange("step must be positive".into()));
    }
    let funds: Vec<f64> = network.banks().iter().map(|b| b.funds).collect();
    let mut best = f64::INFINITY;
    let mut allocation = vec![0.0; n];

    fn recurse(
        network: &FinancialNetwork,
        v: &BankId,
        funds: &[f64],
        step: f64,
        bank: usize,
        remaining: f64,
        allocation: &mut Vec<f64>,
        best: &mut f64,
    ) -> Result<()> {
        let n = funds.len();
        if bank == n {
            if remaining.abs() <= 1e-9 {
                let shocked = FinancialNetwork::new(
                    network
                        .banks()
                        .iter()
                        .enumerate()
                        .map(|(i, b)| (b.id.clone(), (b.funds - allocation[i]).max(0.0))),
                    network
                        .contracts()
                        .iter()
                        .map(|c| (c.debtor.clone(), c.creditor.clone(), c.weight)),
                    network.default_cost_beta(),
                );
                let value = solve_fictitious_default(&shocked, 1e-9)?.assets_of(v);
                if value < *best {
                    *best = value;
                }
            }
            return Ok(());
        }
        let cap = funds[bank].min(remaining);
        let mut candidates: Vec<f64> = Vec::new();
        let mut x = 0.0;
        while x <= cap + 1e-9 {
            candidates.push(x.min(cap));
            x += step;
        }
        // Full wipe and exact remainder, which the grid may miss.
        candidates.push(cap);
        candidates.sort_by(f64::total_cmp);
        candidates.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        for x in candidates {
            allocation[bank] = x;
            recurse(network, v, funds, step, bank + 1, remaining - x, allocation, best)?;
        }
        allocation[bank] = 0.0;
        Ok(())
    }

    recurse(network, v, &funds, step, 0, rho, &mut allocation, &mut best)?;
    if best.is_infinite() {
        return Err(Error::OutOfRange(format!(
            "no grid allocation of rho = {rho} is feasible"
        )));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Structural-property probes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FundsProbe {
    pub source: BankId,
    pub target: BankId,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct ConcavityProbe {
    pub source: BankId,
    pub target: BankId,
    pub base: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub source: BankId,
    pub target: BankId,
    /// Asset change at the target divided by the funds change at the
    /// source, where that ratio is meaningful.
    pub expansion: f64,
    pub note: String,
}

/// Report of a probe run: empty `violations` means every asserted
/// inequality held within tolerance.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub probes: usize,
    pub violations: Vec<String>,
    pub observations: Vec<Observation>,
}

impl CheckReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

const PROBE_TOL: f64 = 1e-7;

fn all_assets(network: &FinancialNetwork) -> Result<Vec<(BankId, f64)>> {
    let solution = solve_fictitious_default(network, 1e-9)?;
    Ok(network
        .banks()
        .iter()
        .map(|b| (b.id.clone(), solution.assets_of(&b.id)))
        .collect())
}

/// Increasing a bank's funds must never decrease any bank's assets.
pub fn check_monotonicity(network: &FinancialNetwork, probes: &[FundsProbe]) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    let baseline = all_assets(network)?;
    for probe in probes {
        report.probes += 1;
        let funds = network
            .funds_of(&probe.source)
            .ok_or_else(|| Error::UnknownBank(probe.source.to_string()))?;
        let increased = network.with_funds(&probe.source, funds + probe.delta)?;
        let after = all_assets(&increased)?;
        for ((bank, before), (_, now)) in baseline.iter().zip(after.iter()) {
            if *now < before - PROBE_TOL {
                report.violations.push(format!(
                    "monotonicity: +{} at {} dropped {bank} from {before} to {now}",
                    probe.delta, probe.source
                ));
            }
        }
        let target_gain = lookup(&after, &probe.target) - lookup(&baseline, &probe.target);
        report.observations.push(Observation {
            source: probe.source.clone(),
            target: probe.target.clone(),
            expansion: if probe.delta > 0.0 {
                target_gain / probe.delta
            } else {
                0.0
            },
            note: "monotonicity".into(),
        });
    }
    Ok(report)
}

fn lookup(assets: &[(BankId, f64)], id: &BankId) -> f64 {
    assets
        .iter()
        .find(|(b, _)| b == id)
        .map(|(_, a)| *a)
        .unwrap_or(0.0)
}

/// At a sink, the asset gain from +delta funds elsewhere is at most delta.
/// Non-sink targets are measured but reported as expected expansions, not
/// violations (they are the counterexample the model predicts).
pub fn check_nonexpansivity(
    network: &FinancialNetwork,
    probes: &[FundsProbe],
) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    let baseline = all_assets(network)?;
    for probe in probes {
        report.probes += 1;
        let funds = network
            .funds_of(&probe.source)
            .ok_or_else(|| Error::UnknownBank(probe.source.to_string()))?;
        let increased = network.with_funds(&probe.source, funds + probe.delta)?;
        let after = all_assets(&increased)?;
        let gain = lookup(&after, &probe.target) - lookup(&baseline, &probe.target);
        let is_sink = network.total_liability(&probe.target) == 0.0;
        let expansion = if probe.delta > 0.0 { gain / probe.delta } else { 0.0 };
        if is_sink {
            if gain > probe.delta + PROBE_TOL {
                report.violations.push(format!(
                    "non-expansivity: sink {} gained {gain} from a {} increase at {}",
                    probe.target, probe.delta, probe.source
                ));
            }
            report.observations.push(Observation {
                source: probe.source.clone(),
                target: probe.target.clone(),
                expansion,
                note: "sink".into(),
            });
        } else {
            report.observations.push(Observation {
                source: probe.source.clone(),
                target: probe.target.clone(),
                expansion,
                note: "non-sink (expansion expected)".into(),
            });
        }
    }
    Ok(report)
}

/// Midpoint concavity of the target's assets as a function of the source's
/// funds: a(base + delta) >= (a(base) + a(base + 2 delta)) / 2.
pub fn check_concavity(
    network: &FinancialNetwork,
    probes: &[ConcavityProbe],
) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    for probe in probes {
        report.probes += 1;
        let mut samples = [0.0; 3];
        for (i, funds) in [probe.base, probe.base + probe.delta, probe.base + 2.0 * probe.delta]
            .into_iter()
            .enumerate()
        {
            let adjusted = network.with_funds(&probe.source, funds)?;
            samples[i] = solve_fictitious_default(&adjusted, 1e-9)?.assets_of(&probe.target);
        }
        if samples[1] < 0.5 * (samples[0] + samples[2]) - PROBE_TOL {
            report.violations.push(format!(
                "concavity: a_{}({}) = {:?} violates the midpoint inequality",
                probe.target, probe.source, samples
            ));
        }
        report.observations.push(Observation {
            source: probe.source.clone(),
            target: probe.target.clone(),
            expansion: if probe.delta > 0.0 {
                (samples[1] - samples[0]) / probe.delta
            } else {
                0.0
            },
            note: "concavity".into(),
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Theorem harnesses
// ---------------------------------------------------------------------------

/// The structural impossibility statements exercised by randomized search:
/// no positive swap without shocks, no positive portfolio swap without
/// shocks, no positive swap under proportional shocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremKind {
    NoposBase,
    NoportBase,
    NoposProp,
}

impl std::str::FromStr for TheoremKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nopos-base" => Ok(TheoremKind::NoposBase),
            "noport-base" => Ok(TheoremKind::NoportBase),
            "nopos-prop" => Ok(TheoremKind::NoposProp),
            other => Err(Error::OutOfRange(format!("unknown theorem `{other}`"))),
        }
    }
}

/// A positive finding: it would falsify the implementation, not the
/// theorem, and ships minimized for debugging.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub network: FinancialNetwork,
    pub description: String,
}

#[derive(Debug, Clone)]
pub struct HarnessReport {
    pub theorem: TheoremKind,
    pub trials: usize,
    pub candidates_checked: usize,
    pub positives: Vec<Counterexample>,
}

impl HarnessReport {
    pub fn ok(&self) -> bool {
        self.positives.is_empty()
    }
}

fn trial_network(kind: TheoremKind, master_seed: u64, trial: u64) -> FinancialNetwork {
    // Per-trial derived seed keeps trials independently reproducible.
    let seed = master_seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(trial.wrapping_mul(0xbf58476d1ce4e5b9));
    let n = 3 + (seed % 6) as usize; // 3..=8
    random_network(&RandomNetworkParams {
        seed,
        n,
        edge_probability: if kind == TheoremKind::NoposProp { 0.45 } else { 0.5 },
        funds_range: (0.0, 3.0),
        weight_range: (1, 3),
        cyclic: true,
    })
}

/// Every valid swap candidate in the network, in deterministic order.
fn all_swap_candidates(network: &FinancialNetwork) -> Vec<SwapSpec> {
    let mut contracts: Vec<&crate::network::Contract> = network.contracts().iter().collect();
    contracts.sort_by(|a, b| (&a.debtor, &a.creditor).cmp(&(&b.debtor, &b.creditor)));
    let mut out = Vec::new();
    for i in 0..contracts.len() {
        for j in i + 1..contracts.len() {
            let (c1, c2) = (contracts[i], contracts[j]);
            let distinct = {
                let ids = [&c1.debtor, &c1.creditor, &c2.debtor, &c2.creditor];
                ids.iter()
                    .enumerate()
                    .all(|(k, a)| ids.iter().skip(k + 1).all(|b| a != b))
            };
            if c1.weight == c2.weight
                && distinct
                && network.weight(&c1.debtor, &c2.creditor) == 0.0
                && network.weight(&c2.debtor, &c1.creditor) == 0.0
            {
                out.push(SwapSpec {
                    debtor1: c1.debtor.clone(),
                    creditor1: c1.creditor.clone(),
                    debtor2: c2.debtor.clone(),
                    creditor2: c2.creditor.clone(),
                    weight: c1.weight,
                });
            }
        }
    }
    out
}

/// Every valid portfolio-swap candidate with debtor sets of size <= 3.
fn portfolio_candidates(network: &FinancialNetwork) -> Vec<PortfolioSwapSpec> {
    let banks: Vec<&BankId> = network.banks().iter().map(|b| &b.id).collect();
    let mut out = Vec::new();
    for v1 in &banks {
        for v2 in &banks {
            if v2 <= v1 {
                continue;
            }
            let debtors = |v: &BankId, other: &BankId| -> Vec<BankId> {
                network
                    .contracts()
                    .iter()
                    .filter(|c| &c.creditor == v && &c.debtor != other)
                    .map(|c| c.debtor.clone())
                    .filter(|u| network.weight(u, if v == *v1 { v2 } else { v1 }) == 0.0)
                    .collect()
            };
            let d1 = debtors(v1, v2);
            let d2 = debtors(v2, v1);
            let subsets = |list: &[BankId]| -> Vec<Vec<BankId>> {
                let mut subs = Vec::new();
                for mask in 1u32..(1u32 << list.len().min(12)) {
                    if mask.count_ones() > 3 {
                        continue;
                    }
                    subs.push(
                        (0..list.len().min(12))
                            .filter(|&i| mask >> i & 1 == 1)
                            .map(|i| list[i].clone())
                            .collect(),
                    );
                }
                subs
            };
            for u1 in subsets(&d1) {
                for u2 in subsets(&d2) {
                    if u1.iter().any(|u| u2.contains(u)) {
                        continue;
                    }
                    if u1.contains(v2) || u2.contains(v1) {
                        continue;
                    }
                    let t1: f64 = u1.iter().map(|u| network.weight(u, v1)).sum();
                    let t2: f64 = u2.iter().map(|u| network.weight(u, v2)).sum();
                    if t1 == t2 {
                        out.push(PortfolioSwapSpec {
                            creditor1: (*v1).clone(),
                            creditor2: (*v2).clone(),
                            debtors1: u1.clone(),
                            debtors2: u2,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Runs `trials` random networks through an exhaustive candidate sweep and
/// collects any Positive verdicts (there must be none).
pub fn theorem_harness(kind: TheoremKind, trials: usize, seed: u64) -> Result<HarnessReport> {
    if trials < 1 {
        return Err(Error::OutOfRange("trials must be >= 1".into()));
    }
    let mut report = HarnessReport {
        theorem: kind,
        trials,
        candidates_checked: 0,
        positives: Vec::new(),
    };
    let model = match kind {
        TheoremKind::NoposBase | TheoremKind::NoportBase => ShockModel::Base,
        TheoremKind::NoposProp => ShockModel::Proportional,
    };
    for trial in 0..trials {
        let network = trial_network(kind, seed, trial as u64);
        match kind {
            TheoremKind::NoposBase | TheoremKind::NoposProp => {
                for spec in all_swap_candidates(&network) {
                    report.candidates_checked += 1;
                    let verdict = classify_swap(&network, &spec, &model)?;
                    if verdict.class == VerdictClass::Positive {
                        let (minimized, spec) = minimize_swap_counterexample(
                            &network, &spec, &model,
                        );
                        report.positives.push(Counterexample {
                            network: minimized,
                            description: format!(
                                "trial {trial}: positive swap {spec:?} under {kind:?}"
                            ),
                        });
                    }
                }
            }
            TheoremKind::NoportBase => {
                for spec in portfolio_candidates(&network) {
                    report.candidates_checked += 1;
                    let verdict = classify_portfolio_swap(&network, &spec, &model)?;
                    if verdict.class == VerdictClass::Positive {
                        report.positives.push(Counterexample {
                            network: network.clone(),
                            description: format!(
                                "trial {trial}: positive portfolio swap {spec:?}"
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Greedily removes banks and contracts while the swap stays Positive,
/// leaving a small reproducer.
pub fn minimize_swap_counterexample(
    network: &FinancialNetwork,
    spec: &SwapSpec,
    model: &ShockModel,
) -> (FinancialNetwork, SwapSpec) {
    let still_positive = |net: &FinancialNetwork| -> bool {
        matches!(
            classify_swap(net, spec, model),
            Ok(SwapVerdict {
                class: VerdictClass::Positive,
                ..
            })
        )
    };
    let protected = [
        spec.debtor1.clone(),
        spec.creditor1.clone(),
        spec.debtor2.clone(),
        spec.creditor2.clone(),
    ];
    let mut current = network.clone();
    let mut progress = true;
    while progress {
        progress = false;
        // Banks first (dropping one removes its contracts too).
        let ids: Vec<BankId> = current.banks().iter().map(|b| b.id.clone()).collect();
        for id in ids {
            if protected.contains(&id) {
                continue;
            }
            let candidate = FinancialNetwork::new(
                current
                    .banks()
                    .iter()
                    .filter(|b| b.id != id)
                    .map(|b| (b.id.clone(), b.funds)),
                current
                    .contracts()
                    .iter()
                    .filter(|c| c.debtor != id && c.creditor != id)
                    .map(|c| (c.debtor.clone(), c.creditor.clone(), c.weight)),
                current.default_cost_beta(),
            );
            if still_positive(&candidate) {
                current = candidate;
                progress = true;
            }
        }
        // Then individual contracts, keeping the swapped pair.
        let contracts: Vec<(BankId, BankId)> = current
            .contracts()
            .iter()
            .map(|c| (c.debtor.clone(), c.creditor.clone()))
            .collect();
        for (debtor, creditor) in contracts {
            if (debtor == spec.debtor1 && creditor == spec.creditor1)
                || (debtor == spec.debtor2 && creditor == spec.creditor2)
            {
                continue;
            }
            let candidate = current.with_weight(&debtor, &creditor, 0.0);
            if still_positive(&candidate) {
                current = candidate;
                progress = true;
            }
        }
    }
    (current, spec.clone())
}

/// Convenience wrapper matching the search surface: asserts a scope's
/// candidate sweep finds no positive swap.
pub fn assert_no_positive_swaps(
    network: &FinancialNetwork,
    model: &ShockModel,
    scope: &SearchScope,
) -> Result<bool> {
    let result = crate::swap::search_positive_swaps(network, model, scope)?;
    Ok(result
        .hits
        .iter()
        .all(|(_, v)| v.class != VerdictClass::Positive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gadgets::{paper_fixture, FixtureName};
    use crate::network::validate;
    use crate::shock::worst_set_value;

    fn id(s: &str) -> BankId {
        BankId::from(s)
    }

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }

    #[test]
    fn brute_worst_set_examples() {
        let badforu = paper_fixture(FixtureName::Badforu).network;
        assert_close(brute_worst_set(&badforu, &id("u2"), 1).unwrap(), 1.0 / 3.0);
        let motive = paper_fixture(FixtureName::Motive).network;
        assert_close(brute_worst_set(&motive, &id("v1"), 0).unwrap(), 2.0);
    }

    #[test]
    fn brute_matches_pruned_solver() {
        for seed in 0..50u64 {
            let net = random_network(&RandomNetworkParams {
                seed: 4000 + seed,
                n: 3 + (seed as usize % 6),
                edge_probability: 0.5,
                funds_range: (0.0, 3.0),
                weight_range: (1, 3),
                cyclic: true,
            });
            for bank in net.banks() {
                for k in 0..=2.min(net.len()) {
                    let brute = brute_worst_set(&net, &bank.id, k).unwrap();
                    let (pruned, _) = worst_set_value(&net, &bank.id, k).unwrap();
                    assert!(
                        (brute - pruned).abs() < 1e-7,
                        "seed {seed} bank {} k {k}: brute {brute} pruned {pruned}",
                        bank.id
                    );
                }
            }
        }
    }

    #[test]
    fn grid_oracle_examples() {
        // The motivating example has 8 banks, so probe its 4-bank core:
        // a source with slack feeding a relay into a sink.
        let net = FinancialNetwork::new(
            [
                (id("s"), 4.0),
                (id("u"), 0.0),
                (id("w"), 0.0),
                (id("v"), 0.0),
            ],
            [
                (id("s"), id("u"), 1.0),
                (id("s"), id("w"), 1.0),
                (id("u"), id("v"), 1.0),
                (id("w"), id("v"), 1.0),
            ],
            None,
        );
        // rho = 3 lands mid-descent: f(3) = 4 - 3 = 1.
        let grid = brute_worst_sum_grid(&net, &id("v"), 3.0, 0.25).unwrap();
        assert_close(grid, 1.0);
        let grid = brute_worst_sum_grid(&net, &id("v"), 0.0, 0.25).unwrap();
        assert_close(grid, 2.0);
        assert!(brute_worst_sum_grid(&paper_fixture(FixtureName::Motive).network, &id("v1"), 1.0, 0.5).is_err());
    }

    #[test]
    fn fig3_expansion_factor_two() {
        let expansive = paper_fixture(FixtureName::Expansive).network;
        let report = check_nonexpansivity(
            &expansive,
            &[FundsProbe {
                source: id("s"),
                target: id("u1"),
                delta: 0.1,
            }],
        )
        .unwrap();
        assert!(report.ok(), "non-sink expansion is observed, not a violation");
        assert_close(report.observations[0].expansion, 2.0);
        assert!(report.observations[0].note.contains("non-sink"));
        // At the true sink the increase is within delta.
        let report = check_nonexpansivity(
            &expansive,
            &[FundsProbe {
                source: id("s"),
                target: id("t"),
                delta: 0.1,
            }],
        )
        .unwrap();
        assert!(report.ok());
        assert!(report.observations[0].expansion <= 1.0 + 1e-7);
    }

    #[test]
    fn zero_delta_changes_nothing() {
        let motive = paper_fixture(FixtureName::Motive).network;
        let report = check_monotonicity(
            &motive,
            &[FundsProbe {
                source: id("s1"),
                target: id("v1"),
                delta: 0.0,
            }],
        )
        .unwrap();
        assert!(report.ok());
        assert_close(report.observations[0].expansion, 0.0);
    }

    #[test]
    fn random_probes_hold_on_random_networks() {
        let mut probes_run = 0;
        for seed in 0..100u64 {
            let net = random_network(&RandomNetworkParams {
                seed: 7000 + seed,
                n: 3 + (seed as usize % 6),
                edge_probability: 0.5,
                funds_range: (0.0, 3.0),
                weight_range: (1, 3),
                cyclic: seed % 2 == 0,
            });
            let banks: Vec<BankId> = net.banks().iter().map(|b| b.id.clone()).collect();
            let source = banks[seed as usize % banks.len()].clone();
            let target = banks[(seed as usize / 2) % banks.len()].clone();
            let mono = check_monotonicity(
                &net,
                &[FundsProbe {
                    source: source.clone(),
                    target: target.clone(),
                    delta: 0.3,
                }],
            )
            .unwrap();
            assert!(mono.ok(), "seed {seed}: {:?}", mono.violations);
            let conc = check_concavity(
                &net,
                &[ConcavityProbe {
                    source: source.clone(),
                    target: target.clone(),
                    base: 0.5,
                    delta: 0.4,
                }],
            )
            .unwrap();
            assert!(conc.ok(), "seed {seed}: {:?}", conc.violations);
            // Non-expansivity asserted on an actual sink, when one exists.
            if let Some(sink) = banks
                .iter()
                .find(|b| net.total_liability(b) == 0.0)
            {
                let nonexp = check_nonexpansivity(
                    &net,
                    &[FundsProbe {
                        source: source.clone(),
                        target: sink.clone(),
                        delta: 0.3,
                    }],
                )
                .unwrap();
                assert!(nonexp.ok(), "seed {seed}: {:?}", nonexp.violations);
            }
            probes_run += 1;
        }
        assert_eq!(probes_run, 100);
    }

    #[test]
    fn random_networks_are_reproducible_and_valid() {
        let params = RandomNetworkParams {
            seed: 1,
            n: 5,
            edge_probability: 0.5,
            funds_range: (0.0, 3.0),
            weight_range: (1, 3),
            cyclic: true,
        };
        let a = random_network(&params);
        let b = random_network(&params);
        assert!(a.structurally_eq(&b, 0.0));
        for seed in 0..1000u64 {
            let net = random_network(&RandomNetworkParams {
                seed,
                n: 1 + (seed as usize % 10),
                edge_probability: (seed % 10) as f64 / 10.0,
                funds_range: (0.0, 4.0),
                weight_range: (1, 3),
                cyclic: seed % 3 != 0,
            });
            assert!(validate(&net).is_empty(), "seed {seed}");
        }
        let empty = random_network(&RandomNetworkParams {
            seed: 3,
            n: 6,
            edge_probability: 0.0,
            funds_range: (0.0, 2.0),
            weight_range: (1, 2),
            cyclic: true,
        });
        assert!(empty.contracts().is_empty());
    }

    #[test]
    fn harness_is_deterministic() {
        let a = theorem_harness(TheoremKind::NoposBase, 5, 42).unwrap();
        let b = theorem_harness(TheoremKind::NoposBase, 5, 42).unwrap();
        assert_eq!(a.candidates_checked, b.candidates_checked);
        assert!(a.ok());
    }

    #[test]
    fn harness_examples_from_fixtures() {
        // The semi-positive example is not positive in the base model.
        let fixture = paper_fixture(FixtureName::Semipos);
        let verdict = classify_swap(
            &fixture.network,
            fixture.swap.as_ref().unwrap(),
            &ShockModel::Base,
        )
        .unwrap();
        assert_eq!(verdict.class, VerdictClass::SemiPositive);
        // The portfolio construction's swap moves nothing at k=0.
        let p = paper_fixture(FixtureName::Portfolio76);
        let verdict =
            classify_portfolio_swap(&p.network, p.portfolio.as_ref().unwrap(), &ShockModel::Base)
                .unwrap();
        assert_ne!(verdict.class, VerdictClass::Positive);
        let point = &verdict.banks[0].points[0];
        assert_close(point.before, 76.0);
        assert_close(point.after, 76.0);
    }

    #[test]
    fn minimizer_shrinks_a_positive_example() {
        // Default costs beta = 1/2 make the semi-positive example genuinely
        // positive, giving the minimizer something real to chew on.
        let fixture = paper_fixture(FixtureName::Semipos);
        let mut banks: Vec<(BankId, f64)> = fixture
            .network
            .banks()
            .iter()
            .map(|b| (b.id.clone(), b.funds))
            .collect();
        // Irrelevant decoration the minimizer should strip.
        banks.push((id("junk1"), 1.0));
        banks.push((id("junk2"), 0.5));
        let mut contracts: Vec<(BankId, BankId, f64)> = fixture
            .network
            .contracts()
            .iter()
            .map(|c| (c.debtor.clone(), c.creditor.clone(), c.weight))
            .collect();
        contracts.push((id("junk1"), id("junk2"), 1.0));
        let decorated = FinancialNetwork::new(banks, contracts, Some(0.5));
        let spec = fixture.swap.as_ref().unwrap();
        assert_eq!(
            classify_swap(&decorated, spec, &ShockModel::Base).unwrap().class,
            VerdictClass::Positive
        );
        let (minimized, _) = minimize_swap_counterexample(&decorated, spec, &ShockModel::Base);
        assert!(minimized.len() < decorated.len());
        assert!(minimized.bank_index(&id("junk1")).is_none());
        assert_eq!(
            classify_swap(&minimized, spec, &ShockModel::Base).unwrap().class,
            VerdictClass::Positive
        );
    }
}
