//! The three shock functions of a bank: proportional (exact piecewise-linear
//! regime tracing), worst-set (exhaustive subset enumeration) and worst-sum
//! (one-partial-bank enumeration with adaptive chord refinement).

use std::collections::BTreeSet;

use crate::clearing::{Problem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::{BankId, FinancialNetwork, ShockVector};

/// Tuning knobs shared by the shock solvers.
#[derive(Debug, Clone)]
pub struct ShockOptions {
    /// Clearing tolerance per pointwise solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Cap on the number of shock configurations a single query may clear.
    /// Exceeding it is an explicit error, never a silent approximation.
    pub budget: u64,
}

impl Default for ShockOptions {
    fn default() -> Self {
        ShockOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            budget: 1 << 22,
        }
    }
}

/// Adaptive-refinement parameters for piecewise-linear reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub max_depth: u32,
    pub chord_tol: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            max_depth: 40,
            chord_tol: 1e-9,
        }
    }
}

/// Worst-set shock function on the integer domain 0..=K.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteShockFunction {
    /// values[k] = f_v(k).
    pub values: Vec<f64>,
    /// Lexicographically smallest minimizing subset per k. Witnesses only
    /// name banks whose funds can reach the target; hitting any other bank
    /// is a no-op. `None` when produced by a solver that does not track
    /// witnesses (the tree DP).
    pub witnesses: Option<Vec<Vec<BankId>>>,
}

impl DiscreteShockFunction {
    pub fn k_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwlDomain {
    /// lambda in [0, 1].
    Proportional,
    /// rho in [0, total funds].
    WorstSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    Exact,
    RefinedApproximation,
}

/// Piecewise-linear nonincreasing shock function.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlShockFunction {
    /// (x, y) pairs with strictly increasing x and nonincreasing y.
    pub breakpoints: Vec<(f64, f64)>,
    pub domain: PwlDomain,
    pub exactness: Exactness,
}

impl PwlShockFunction {
    /// Linear interpolation; clamps outside the sampled range.
    pub fn eval(&self, x: f64) -> f64 {
        let points = &self.breakpoints;
        if points.is_empty() {
            return 0.0;
        }
        if x <= points[0].0 {
            return points[0].1;
        }
        if x >= points[points.len() - 1].0 {
            return points[points.len() - 1].1;
        }
        let mut hi = points.partition_point(|p| p.0 <= x);
        hi = hi.clamp(1, points.len() - 1);
        let (x0, y0) = points[hi - 1];
        let (x1, y1) = points[hi];
        if x1 == x0 {
            return y1;
        }
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn x_max(&self) -> f64 {
        self.breakpoints.last().map(|p| p.0).unwrap_or(0.0)
    }

    /// Validates the type invariants within a tolerance.
    pub fn check_invariants(&self, unshocked: f64, tol: f64) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(Error::OutOfRange("empty shock function".into()));
        }
        if self.breakpoints[0].0 != 0.0 {
            return Err(Error::OutOfRange("first breakpoint must be at x=0".into()));
        }
        if (self.breakpoints[0].1 - unshocked).abs() > tol {
            return Err(Error::OutOfRange(format!(
                "f(0) = {} but unshocked assets are {unshocked}",
                self.breakpoints[0].1
            )));
        }
        for w in self.breakpoints.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::OutOfRange("x not strictly increasing".into()));
            }
            if w[1].1 > w[0].1 + tol {
                return Err(Error::OutOfRange("y not nonincreasing".into()));
            }
        }
        Ok(())
    }
}

/// Drops interior points that are collinear with their neighbours.
fn simplify(points: &mut Vec<(f64, f64)>, tol: f64) {
    if points.len() < 3 {
        return;
    }
    let mut kept: Vec<(f64, f64)> = vec![points[0]];
    for i in 1..points.len() - 1 {
        let (x0, y0) = *kept.last().unwrap();
        let (x1, y1) = points[i];
        let (x2, y2) = points[i + 1];
        let chord = if x2 == x0 {
            y0
        } else {
            y0 + (y2 - y0) * (x1 - x0) / (x2 - x0)
        };
        if (chord - y1).abs() > tol {
            kept.push(points[i]);
        }
    }
    kept.push(points[points.len() - 1]);
    *points = kept;
}

// ---------------------------------------------------------------------------
// Reachability pruning
// ---------------------------------------------------------------------------

/// Banks with a directed payment path to `target` (including the target).
/// Funds of any other bank cannot influence the target's assets, so shock
/// enumeration is restricted to this set.
fn ancestors(problem: &Problem, target: usize) -> Vec<bool> {
    let mut seen = vec![false; problem.n];
    let mut stack = vec![target];
    seen[target] = true;
    while let Some(u) = stack.pop() {
        for &(debtor, _) in &problem.incoming[u] {
            if !seen[debtor] {
                seen[debtor] = true;
                stack.push(debtor);
            }
        }
    }
    seen
}

fn target_index(problem: &Problem, v: &BankId) -> Result<usize> {
    problem
        .ids
        .iter()
        .position(|id| id == v)
        .ok_or_else(|| Error::UnknownBank(v.to_string()))
}

/// Advances `choice` to the next k-combination of 0..m in lexicographic
/// order; returns false after the last one.
fn next_combination(choice: &mut [usize], m: usize) -> bool {
    let k = choice.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if choice[i] < m - k + i {
            choice[i] += 1;
            for j in i + 1..k {
                choice[j] = choice[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

// ---------------------------------------------------------------------------
// Worst-set model
// ---------------------------------------------------------------------------

struct WorstSetSearch<'a> {
    problem: &'a Problem,
    target: usize,
    /// Indices of funded banks that can reach the target, sorted by id.
    eligible: Vec<usize>,
    opts: &'a ShockOptions,
}

impl<'a> WorstSetSearch<'a> {
    fn new(problem: &'a Problem, target: usize, opts: &'a ShockOptions) -> Self {
        let reach = ancestors(problem, target);
        let mut eligible: Vec<usize> = (0..problem.n)
            .filter(|&u| problem.funds[u] > 0.0 && reach[u])
            .collect();
        eligible.sort_by(|&a, &b| problem.ids[a].cmp(&problem.ids[b]));
        WorstSetSearch {
            problem,
            target,
            eligible,
            opts,
        }
    }

    /// Exact minimum of the target's assets over all subsets of `k` banks
    /// being wiped, with the lexicographically smallest witness.
    fn value(&self, k: usize) -> Result<(f64, Vec<BankId>)> {
        let k_eff = k.min(self.eligible.len());
        let configs = binomial(self.eligible.len(), k_eff);
        if configs > self.opts.budget as u128 {
            return Err(Error::BudgetExceeded {
                needed: configs,
                budget: self.opts.budget,
            });
        }
        let mut funds = self.problem.funds.clone();
        let mut best_value = f64::INFINITY;
        let mut best_witness: Vec<usize> = Vec::new();
        let mut found = false;

        // Enumerate k_eff-subsets of `eligible` in lexicographic order. The
        // first minimizer encountered is the lexicographically smallest
        // witness; later ties (within 1e-12) never replace it.
        let m = self.eligible.len();
        let mut choice: Vec<usize> = (0..k_eff).collect();
        loop {
            for &slot in &choice {
                funds[self.eligible[slot]] = 0.0;
            }
            let raw = self
                .problem
                .picard(&funds, self.opts.tol, self.opts.max_iter)?;
            let value = raw.assets[self.target];
            for &slot in &choice {
                funds[self.eligible[slot]] = self.problem.funds[self.eligible[slot]];
            }
            if !found || value < best_value - 1e-12 {
                best_value = value;
                best_witness = choice.clone();
                found = true;
            }
            if !next_combination(&mut choice, m) {
                break;
            }
        }
        let witness = best_witness
            .into_iter()
            .map(|slot| self.problem.ids[self.eligible[slot]].clone())
            .collect();
        Ok((best_value, witness))
    }
}

/// f_v(k): exact minimum of v's assets over all ways of wiping the funds of
/// k banks, together with the witness subset.
pub fn worst_set_value(
    network: &FinancialNetwork,
    v: &BankId,
    k: usize,
) -> Result<(f64, Vec<BankId>)> {
    worst_set_value_opt(network, v, k, &ShockOptions::default())
}

pub fn worst_set_value_opt(
    network: &FinancialNetwork,
    v: &BankId,
    k: usize,
    opts: &ShockOptions,
) -> Result<(f64, Vec<BankId>)> {
    if k > network.len() {
        return Err(Error::OutOfRange(format!(
            "k = {k} exceeds the number of banks {}",
            network.len()
        )));
    }
    let problem = Problem::build(network)?;
    let target = target_index(&problem, v)?;
    WorstSetSearch::new(&problem, target, opts).value(k)
}

/// The worst-set shock function on 0..=K.
pub fn worst_set_function(
    network: &FinancialNetwork,
    v: &BankId,
    k_max: usize,
) -> Result<DiscreteShockFunction> {
    worst_set_function_opt(network, v, k_max, &ShockOptions::default())
}

pub fn worst_set_function_opt(
    network: &FinancialNetwork,
    v: &BankId,
    k_max: usize,
    opts: &ShockOptions,
) -> Result<DiscreteShockFunction> {
    if k_max > network.len() {
        return Err(Error::OutOfRange(format!(
            "K = {k_max} exceeds the number of banks {}",
            network.len()
        )));
    }
    let problem = Problem::build(network)?;
    let target = target_index(&problem, v)?;
    let search = WorstSetSearch::new(&problem, target, opts);
    let total: u128 = (0..=k_max)
        .map(|k| binomial(search.eligible.len(), k.min(search.eligible.len())))
        .sum();
    if total > opts.budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: total,
            budget: opts.budget,
        });
    }
    let mut values: Vec<f64> = Vec::with_capacity(k_max + 1);
    let mut witnesses: Vec<Vec<BankId>> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k > search.eligible.len() {
            // Wiping more banks than have reachable funds changes nothing.
            let value = values[search.eligible.len()];
            let witness: Vec<BankId> = witnesses[search.eligible.len()].clone();
            values.push(value);
            witnesses.push(witness);
            continue;
        }
        let (value, witness) = search.value(k)?;
        values.push(value);
        witnesses.push(witness);
    }
    Ok(DiscreteShockFunction {
        values,
        witnesses: Some(witnesses),
    })
}

// ---------------------------------------------------------------------------
// Worst-sum model
// ---------------------------------------------------------------------------

/// f_v(rho): exact minimum of v's assets over all fund-loss allocations of
/// total size rho. Only configurations with at most one partially hit bank
/// are enumerated; some worst allocation always has this shape because the
/// loss at v is a convex function of each bank's reduction.
pub fn worst_sum_value(
    network: &FinancialNetwork,
    v: &BankId,
    rho: f64,
) -> Result<(f64, ShockVector)> {
    worst_sum_value_opt(network, v, rho, &ShockOptions::default())
}

pub fn worst_sum_value_opt(
    network: &FinancialNetwork,
    v: &BankId,
    rho: f64,
    opts: &ShockOptions,
) -> Result<(f64, ShockVector)> {
    let total = network.total_funds();
    if !(0.0..=total + 1e-9).contains(&rho) {
        return Err(Error::OutOfRange(format!(
            "rho = {rho} outside [0, {total}]"
        )));
    }
    let problem = Problem::build(network)?;
    let target = target_index(&problem, v)?;
    let reach = ancestors(&problem, target);

    let mut eligible: Vec<usize> = (0..problem.n)
        .filter(|&u| problem.funds[u] > 0.0 && reach[u])
        .collect();
    eligible.sort_by(|&a, &b| problem.ids[a].cmp(&problem.ids[b]));
    let mut spill: Vec<usize> = (0..problem.n)
        .filter(|&u| problem.funds[u] > 0.0 && !reach[u])
        .collect();
    spill.sort_by(|&a, &b| problem.ids[a].cmp(&problem.ids[b]));
    let spill_total: f64 = spill.iter().map(|&u| problem.funds[u]).sum();

    let m = eligible.len();
    if m >= 63 {
        return Err(Error::BudgetExceeded {
            needed: u128::MAX,
            budget: opts.budget,
        });
    }
    let configs = (1u128 << m).saturating_mul(m as u128 + 2);
    if configs > opts.budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: configs,
            budget: opts.budget,
        });
    }

    let mut funds = problem.funds.clone();
    let mut best: Option<(f64, Vec<usize>, Option<(usize, f64)>)> = None;

    for mask in 0u64..(1u64 << m) {
        let subset: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
        let wiped: f64 = subset.iter().map(|&i| problem.funds[eligible[i]]).sum();
        if wiped > rho + 1e-9 {
            continue;
        }
        let leftover = (rho - wiped).max(0.0);

        // One clearing solve per (subset, partial) configuration.
        let consider =
            |partial: Option<(usize, f64)>,
             funds: &mut Vec<f64>,
             best: &mut Option<(f64, Vec<usize>, Option<(usize, f64)>)>|
             -> Result<()> {
                for &i in &subset {
                    funds[eligible[i]] = 0.0;
                }
                if let Some((u, amount)) = partial {
                    funds[u] = (problem.funds[u] - amount).max(0.0);
                }
                let raw = problem.picard(funds, opts.tol, opts.max_iter)?;
                let value = raw.assets[target];
                for &i in &subset {
                    funds[eligible[i]] = problem.funds[eligible[i]];
                }
                if let Some((u, _)) = partial {
                    funds[u] = problem.funds[u];
                }
                let better = match best {
                    None => true,
                    Some((v0, _, _)) => value < *v0 - 1e-12,
                };
                if better {
                    *best = Some((value, subset.clone(), partial));
                }
                Ok(())
            };

        if leftover <= spill_total + 1e-9 {
            // Remaining loss is absorbed by banks that cannot reach the
            // target.
            consider(None, &mut funds, &mut best)?;
        }
        if leftover > 1e-12 {
            for (i, &u) in eligible.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    continue;
                }
                if leftover <= problem.funds[u] + 1e-9 {
                    consider(Some((u, leftover.min(problem.funds[u]))), &mut funds, &mut best)?;
                }
            }
        }
    }

    let (value, subset, partial) = best.ok_or_else(|| {
        Error::OutOfRange(format!(
            "no feasible allocation of rho = {rho}; reachable funds {} plus unreachable {}",
            eligible
                .iter()
                .map(|&u| problem.funds[u])
                .sum::<f64>(),
            spill_total
        ))
    })?;

    // Materialize the witness, spilling any unallocated loss onto the
    // lexicographically smallest unreachable banks.
    let mut shock = ShockVector::new();
    let mut used = 0.0;
    for &i in &subset {
        let u = eligible[i];
        shock
            .reductions
            .insert(problem.ids[u].clone(), problem.funds[u]);
        used += problem.funds[u];
    }
    if let Some((u, amount)) = partial {
        shock.reductions.insert(problem.ids[u].clone(), amount);
        used += amount;
    }
    let mut remaining = (rho - used).max(0.0);
    for &u in &spill {
        if remaining <= 1e-12 {
            break;
        }
        let take = remaining.min(problem.funds[u]);
        shock.reductions.insert(problem.ids[u].clone(), take);
        remaining -= take;
    }
    Ok((value, shock))
}

/// Reconstructs the worst-sum shock function as a piecewise-linear curve:
/// seeds at every subset-sum of bank funds, then adaptive bisection wherever
/// a midpoint deviates from the chord.
pub fn worst_sum_function(
    network: &FinancialNetwork,
    v: &BankId,
    refinement: &Refinement,
) -> Result<PwlShockFunction> {
    worst_sum_function_opt(network, v, refinement, &ShockOptions::default())
}

pub fn worst_sum_function_opt(
    network: &FinancialNetwork,
    v: &BankId,
    refinement: &Refinement,
    opts: &ShockOptions,
) -> Result<PwlShockFunction> {
    let total = network.total_funds();
    let funded: Vec<f64> = network
        .banks()
        .iter()
        .map(|b| b.funds)
        .filter(|&f| f > 0.0)
        .collect();
    if funded.len() >= 22 {
        return Err(Error::BudgetExceeded {
            needed: 1u128 << funded.len(),
            budget: opts.budget,
        });
    }
    let mut seeds: BTreeSet<u64> = BTreeSet::new();
    let quantize = |x: f64| (x.clamp(0.0, total) * 1e12 / total.max(1e-300)).round() as u64;
    seeds.insert(0);
    for mask in 0u64..(1u64 << funded.len()) {
        let sum: f64 = (0..funded.len())
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| funded[i])
            .sum();
        if sum <= total + 1e-9 {
            seeds.insert(quantize(sum));
        }
    }
    seeds.insert(quantize(total));
    let seed_xs: Vec<f64> = seeds
        .into_iter()
        .map(|q| q as f64 * total / 1e12)
        .collect();

    let eval = |x: f64| -> Result<f64> {
        Ok(worst_sum_value_opt(network, v, x.clamp(0.0, total), opts)?.0)
    };
    let (mut points, refined) = adaptive_pwl(&eval, &seed_xs, refinement)?;
    simplify(&mut points, 1e-9);
    Ok(PwlShockFunction {
        breakpoints: points,
        domain: PwlDomain::WorstSum,
        exactness: if refined {
            Exactness::RefinedApproximation
        } else {
            Exactness::Exact
        },
    })
}

/// Evaluates `eval` at the seeds and bisects every interval whose midpoint
/// deviates from the chord by more than the tolerance. Returns the sampled
/// points and whether any interval needed refinement.
fn adaptive_pwl(
    eval: &dyn Fn(f64) -> Result<f64>,
    seed_xs: &[f64],
    refinement: &Refinement,
) -> Result<(Vec<(f64, f64)>, bool)> {
    let mut points: Vec<(f64, f64)> = Vec::new();
    for &x in seed_xs {
        points.push((x, eval(x)?));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
    let mut refined = false;

    fn split(
        eval: &dyn Fn(f64) -> Result<f64>,
        left: (f64, f64),
        right: (f64, f64),
        depth: u32,
        chord_tol: f64,
        out: &mut Vec<(f64, f64)>,
        refined: &mut bool,
    ) -> Result<()> {
        if depth == 0 || (right.0 - left.0) < 1e-12 {
            return Ok(());
        }
        let mid_x = 0.5 * (left.0 + right.0);
        let mid_y = eval(mid_x)?;
        let chord = 0.5 * (left.1 + right.1);
        if (mid_y - chord).abs() > chord_tol {
            *refined = true;
            split(eval, left, (mid_x, mid_y), depth - 1, chord_tol, out, refined)?;
            out.push((mid_x, mid_y));
            split(eval, (mid_x, mid_y), right, depth - 1, chord_tol, out, refined)?;
        }
        Ok(())
    }

    let mut all: Vec<(f64, f64)> = Vec::new();
    for i in 0..points.len() {
        all.push(points[i]);
        if i + 1 < points.len() {
            let mut inserted = Vec::new();
            split(
                eval,
                points[i],
                points[i + 1],
                refinement.max_depth,
                refinement.chord_tol,
                &mut inserted,
                &mut refined,
            )?;
            all.extend(inserted);
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-15);
    Ok((all, refined))
}

// ---------------------------------------------------------------------------
// Proportional model: exact default-regime tracing
// ---------------------------------------------------------------------------

/// f_v(lambda): the proportional shock function, traced exactly through
/// default regimes. Within a fixed default set the clearing vector is affine
/// in lambda; the tracer advances lambda to the next regime-exit event (a
/// solvent bank's assets hitting its liabilities). The default set can only
/// grow with lambda, so there are at most n+1 regimes. Every breakpoint and
/// regime midpoint is cross-validated by a pointwise Picard solve; on any
/// mismatch or singular regime system the tracer falls back to an adaptively
/// refined sampled curve and flags the result.
pub fn proportional_shock_function(
    network: &FinancialNetwork,
    v: &BankId,
) -> Result<PwlShockFunction> {
    proportional_shock_function_opt(network, v, &ShockOptions::default())
}

pub fn proportional_shock_function_opt(
    network: &FinancialNetwork,
    v: &BankId,
    opts: &ShockOptions,
) -> Result<PwlShockFunction> {
    let problem = Problem::build(network)?;
    let target = target_index(&problem, v)?;
    match trace_regimes(&problem, target, opts) {
        Ok(mut points) => {
            simplify(&mut points, 1e-9);
            Ok(PwlShockFunction {
                breakpoints: points,
                domain: PwlDomain::Proportional,
                exactness: Exactness::Exact,
            })
        }
        Err(_) => {
            // Sampled fallback, honestly flagged.
            let eval = |lambda: f64| -> Result<f64> {
                let funds: Vec<f64> = problem
                    .funds
                    .iter()
                    .map(|&e| (1.0 - lambda) * e)
                    .collect();
                Ok(problem.picard(&funds, opts.tol, opts.max_iter)?.assets[target])
            };
            let seeds: Vec<f64> = (0..=16).map(|i| i as f64 / 16.0).collect();
            let (mut points, _) = adaptive_pwl(&eval, &seeds, &Refinement::default())?;
            simplify(&mut points, 1e-9);
            Ok(PwlShockFunction {
                breakpoints: points,
                domain: PwlDomain::Proportional,
                exactness: Exactness::RefinedApproximation,
            })
        }
    }
}

struct Regime {
    /// r(lambda) = base + slope * lambda for defaulting banks; 1 elsewhere.
    asset_base: Vec<f64>,
    asset_slope: Vec<f64>,
}

/// Solves the affine clearing within a fixed default set.
fn solve_regime(problem: &Problem, in_default: &[bool], beta: f64) -> Result<Regime> {
    let defaulters: Vec<usize> = (0..problem.n).filter(|&u| in_default[u]).collect();
    let m = defaulters.len();
    let slot_of = |u: usize| defaulters.iter().position(|&x| x == u);

    let mut rate_base = vec![0.0; m];
    let mut rate_slope = vec![0.0; m];
    if m > 0 {
        let mut matrix = vec![vec![0.0; m]; m];
        let mut rhs0 = vec![0.0; m];
        let mut rhs1 = vec![0.0; m];
        for (slot, &u) in defaulters.iter().enumerate() {
            matrix[slot][slot] = problem.liab[u] / beta;
            rhs0[slot] = problem.funds[u];
            rhs1[slot] = -problem.funds[u];
            for &(debtor, weight) in &problem.incoming[u] {
                if in_default[debtor] {
                    let dslot = slot_of(debtor).expect("defaulter indexed");
                    matrix[slot][dslot] -= weight;
                } else {
                    rhs0[slot] += weight;
                }
            }
        }
        rate_base = linalg::solve(matrix.clone(), rhs0).ok_or(Error::Singular(m))?;
        rate_slope = linalg::solve(matrix, rhs1).ok_or(Error::Singular(m))?;
    }

    let mut asset_base = problem.funds.clone();
    let mut asset_slope: Vec<f64> = problem.funds.iter().map(|&e| -e).collect();
    for (debtor, outs) in problem.out.iter().enumerate() {
        let (rb, rs) = if in_default[debtor] {
            let slot = slot_of(debtor).expect("defaulter indexed");
            (rate_base[slot], rate_slope[slot])
        } else {
            (1.0, 0.0)
        };
        for &(creditor, weight) in outs {
            asset_base[creditor] += rb * weight;
            asset_slope[creditor] += rs * weight;
        }
    }
    Ok(Regime {
        asset_base,
        asset_slope,
    })
}

fn trace_regimes(problem: &Problem, target: usize, opts: &ShockOptions) -> Result<Vec<(f64, f64)>> {
    let beta = problem.beta;
    let solve_at = |lambda: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let funds: Vec<f64> = problem.funds.iter().map(|&e| (1.0 - lambda) * e).collect();
        let raw = problem.picard(&funds, opts.tol, opts.max_iter)?;
        Ok((raw.recovery, raw.assets))
    };
    let validate = |lambda: f64, predicted: f64| -> Result<()> {
        let (_, assets) = solve_at(lambda)?;
        let scale = assets[target].abs().max(1.0);
        if (assets[target] - predicted).abs() > 1e-7 * scale {
            return Err(Error::OutOfRange(format!(
                "regime trace mismatch at lambda={lambda}: {predicted} vs {}",
                assets[target]
            )));
        }
        Ok(())
    };

    let mut points: Vec<(f64, f64)> = Vec::new();
    let (_, assets0) = solve_at(0.0)?;
    points.push((0.0, assets0[target]));

    let mut lambda = 0.0;
    let mut guard = 0;
    loop {
        guard += 1;
        if guard > 4 * problem.n + 8 {
            return Err(Error::OutOfRange("regime tracing did not terminate".into()));
        }
        // Default set at the current lambda, from an exact pointwise solve.
        let (_, assets) = solve_at(lambda)?;
        let mut in_default: Vec<bool> = (0..problem.n)
            .map(|u| problem.liab[u] > 0.0 && assets[u] < problem.liab[u] - 1e-9)
            .collect();

        // Grow by boundary banks whose assets fall just beyond lambda.
        let regime = loop {
            let regime = solve_regime(problem, &in_default, beta)?;
            let mut grew = false;
            for u in 0..problem.n {
                if in_default[u] || problem.liab[u] == 0.0 {
                    continue;
                }
                let a0 = regime.asset_base[u] + regime.asset_slope[u] * lambda;
                let falling = regime.asset_slope[u] < -1e-12;
                if a0 < problem.liab[u] - 1e-9 || (a0 <= problem.liab[u] + 1e-9 && falling) {
                    in_default[u] = true;
                    grew = true;
                }
            }
            if !grew {
                break regime;
            }
        };

        // Earliest regime exit: a solvent bank's assets reaching its
        // liabilities from above.
        let mut next = 1.0f64;
        for u in 0..problem.n {
            if in_default[u] || problem.liab[u] == 0.0 || regime.asset_slope[u] >= -1e-12 {
                continue;
            }
            let hit = (problem.liab[u] - regime.asset_base[u]) / regime.asset_slope[u];
            if hit > lambda + 1e-12 && hit < next {
                next = hit;
            }
        }

        let value_at = |x: f64| regime.asset_base[target] + regime.asset_slope[target] * x;
        let mid = 0.5 * (lambda + next);
        validate(mid, value_at(mid))?;
        validate(next, value_at(next))?;
        points.push((next, value_at(next)));
        if next >= 1.0 - 1e-12 {
            break;
        }
        lambda = next;
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clearing::solve;
    use crate::gadgets::{paper_fixture, FixtureName};
    use crate::network::{apply_shock, FinancialNetwork};
    use crate::oracle::{brute_worst_sum_grid, random_network, RandomNetworkParams};
    use crate::swap::apply_swap;

    fn id(s: &str) -> BankId {
        BankId::from(s)
    }

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }

    fn assert_points(f: &PwlShockFunction, expected: &[(f64, f64)]) {
        assert_eq!(
            f.breakpoints.len(),
            expected.len(),
            "breakpoints {:?} vs {:?}",
            f.breakpoints,
            expected
        );
        for ((x, y), (ex, ey)) in f.breakpoints.iter().zip(expected) {
            assert!((x - ex).abs() < 1e-7, "{:?} vs {:?}", f.breakpoints, expected);
            assert!((y - ey).abs() < 1e-7, "{:?} vs {:?}", f.breakpoints, expected);
        }
    }

    #[test]
    fn motive_proportional_before_swap() {
        let motive = paper_fixture(FixtureName::Motive).network;
        let f = proportional_shock_function(&motive, &id("v1")).unwrap();
        assert_eq!(f.exactness, Exactness::Exact);
        assert_points(&f, &[(0.0, 2.0), (0.5, 2.0), (1.0, 0.0)]);
        f.check_invariants(2.0, 1e-7).unwrap();
    }

    #[test]
    fn motive_proportional_unchanged_by_swap() {
        let fixture = paper_fixture(FixtureName::Motive);
        let swapped = apply_swap(&fixture.network, fixture.swap.as_ref().unwrap()).unwrap();
        let f = proportional_shock_function(&swapped, &id("v1")).unwrap();
        assert_points(&f, &[(0.0, 2.0), (0.5, 2.0), (1.0, 0.0)]);
        assert_close(f.eval(1.0), 0.0);
    }

    #[test]
    fn proportional_without_contracts_scales_funds() {
        let net = FinancialNetwork::new([(id("a"), 3.0)], [], None);
        let f = proportional_shock_function(&net, &id("a")).unwrap();
        assert_points(&f, &[(0.0, 3.0), (1.0, 0.0)]);
    }

    #[test]
    fn proportional_matches_picard_samples() {
        for seed in 0..24u64 {
            let net = random_network(&RandomNetworkParams {
                seed: 9000 + seed,
                n: 2 + (seed as usize % 7),
                edge_probability: 0.5,
                funds_range: (0.0, 3.0),
                weight_range: (1, 3),
                cyclic: seed % 2 == 0,
            });
            for bank in net.banks() {
                let f = proportional_shock_function(&net, &bank.id).unwrap();
                for i in 0..64 {
                    let lambda = i as f64 / 63.0;
                    let shocked =
                        apply_shock(&net, &crate::network::proportional_shock(&net, lambda).unwrap())
                            .unwrap();
                    let expect = solve(&shocked).unwrap().assets_of(&bank.id);
                    assert!(
                        (f.eval(lambda) - expect).abs() < 1e-7 * expect.abs().max(1.0),
                        "seed {seed} bank {} lambda {lambda}: {} vs {expect}",
                        bank.id,
                        f.eval(lambda)
                    );
                }
            }
        }
    }

    #[test]
    fn motive_worst_set_values() {
        let fixture = paper_fixture(FixtureName::Motive);
        let (value, witness) = worst_set_value(&fixture.network, &id("v1"), 1).unwrap();
        assert_close(value, 0.0);
        assert_eq!(witness, vec![id("s1")]);

        let swapped = apply_swap(&fixture.network, fixture.swap.as_ref().unwrap()).unwrap();
        let (value, _) = worst_set_value(&swapped, &id("v1"), 1).unwrap();
        assert_close(value, 1.0);

        let (value, witness) = worst_set_value(&fixture.network, &id("v1"), 0).unwrap();
        assert_close(value, 2.0);
        assert!(witness.is_empty());
    }

    #[test]
    fn badforu_worst_set_values() {
        let badforu = paper_fixture(FixtureName::Badforu).network;
        let (value, witness) = worst_set_value(&badforu, &id("v2"), 1).unwrap();
        assert_close(value, 2.0 / 3.0);
        assert_eq!(witness, vec![id("s2")]);
    }

    #[test]
    fn badforw_worst_set_functions() {
        let fixture = paper_fixture(FixtureName::Badforw);
        let before = worst_set_function(&fixture.network, &id("w"), 2).unwrap();
        assert_close(before.values[0], 4.0);
        assert_close(before.values[1], 2.0);
        assert_close(before.values[2], 0.0);

        let swapped = apply_swap(&fixture.network, fixture.swap.as_ref().unwrap()).unwrap();
        let after = worst_set_function(&swapped, &id("w"), 2).unwrap();
        assert_close(after.values[0], 4.0);
        assert_close(after.values[1], 1.0);
        assert_close(after.values[2], 0.0);
    }

    #[test]
    fn treepos_worst_set_function_by_enumeration() {
        let treepos = paper_fixture(FixtureName::Treepos).network;
        let f = worst_set_function(&treepos, &id("v1"), 10).unwrap();
        let expected = [18.0, 18.0, 18.0, 15.0, 14.0, 13.0, 12.0, 11.0, 10.0, 9.0, 8.0];
        for (k, e) in expected.iter().enumerate() {
            assert_close(f.values[k], *e);
        }
    }

    #[test]
    fn worst_set_at_n_equals_zero_funds_clearing() {
        for seed in 60..75u64 {
            let net = random_network(&RandomNetworkParams {
                seed,
                n: 2 + (seed as usize % 5),
                edge_probability: 0.5,
                funds_range: (0.0, 3.0),
                weight_range: (1, 2),
                cyclic: true,
            });
            let zeroed = FinancialNetwork::new(
                net.banks().iter().map(|b| (b.id.clone(), 0.0)),
                net.contracts()
                    .iter()
                    .map(|c| (c.debtor.clone(), c.creditor.clone(), c.weight)),
                None,
            );
            for bank in net.banks() {
                let (value, _) = worst_set_value(&net, &bank.id, net.len()).unwrap();
                let expect = solve(&zeroed).unwrap().assets_of(&bank.id);
                assert_close(value, expect);
            }
        }
    }

    #[test]
    fn worst_set_values_invariant_under_relabeling() {
        let net = random_network(&RandomNetworkParams {
            seed: 77,
            n: 6,
            edge_probability: 0.5,
            funds_range: (0.0, 3.0),
            weight_range: (1, 3),
            cyclic: true,
        });
        // Relabel by reversing ids: b0 <-> zz5, etc.
        let rename = |b: &BankId| BankId(format!("zz{}", b.as_str().trim_start_matches('b')));
        let relabeled = FinancialNetwork::new(
            net.banks().iter().map(|b| (rename(&b.id), b.funds)),
            net.contracts()
                .iter()
                .map(|c| (rename(&c.debtor), rename(&c.creditor), c.weight)),
            None,
        );
        for bank in net.banks() {
            for k in 0..=3 {
                let (a, _) = worst_set_value(&net, &bank.id, k).unwrap();
                let (b, _) = worst_set_value(&relabeled, &rename(&bank.id), k).unwrap();
                assert_close(a, b);
            }
        }
    }

    #[test]
    fn budget_exceeded_is_explicit() {
        let net = random_network(&RandomNetworkParams {
            seed: 5,
            n: 12,
            edge_probability: 0.4,
            funds_range: (1.0, 2.0),
            weight_range: (1, 2),
            cyclic: true,
        });
        let opts = ShockOptions {
            budget: 4,
            ..Default::default()
        };
        let err = worst_set_value_opt(&net, &net.banks()[0].id, 4, &opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn motive_worst_sum_values() {
        let fixture = paper_fixture(FixtureName::Motive);
        let (v, _) = worst_sum_value(&fixture.network, &id("v1"), 2.0).unwrap();
        assert_close(v, 2.0);
        let (v, _) = worst_sum_value(&fixture.network, &id("v1"), 4.0).unwrap();
        assert_close(v, 0.0);
        let (v, _) = worst_sum_value(&fixture.network, &id("v1"), 0.0).unwrap();
        assert_close(v, 2.0);

        let swapped = apply_swap(&fixture.network, fixture.swap.as_ref().unwrap()).unwrap();
        let (v, _) = worst_sum_value(&swapped, &id("v1"), 6.0).unwrap();
        assert_close(v, 1.0);
        let (v, _) = worst_sum_value(&swapped, &id("v1"), 4.0).unwrap();
        assert_close(v, 1.0);
    }

    #[test]
    fn worst_sum_rejects_out_of_range() {
        let motive = paper_fixture(FixtureName::Motive).network;
        assert!(worst_sum_value(&motive, &id("v1"), 100.0).is_err());
        assert!(worst_sum_value(&motive, &id("v1"), -1.0).is_err());
    }

    #[test]
    fn single_bank_worst_sum_function() {
        let net = FinancialNetwork::new([(id("a"), 5.0)], [], None);
        let f = worst_sum_function(&net, &id("a"), &Refinement::default()).unwrap();
        assert_points(&f, &[(0.0, 5.0), (5.0, 0.0)]);
        assert_eq!(f.exactness, Exactness::Exact);
    }

    #[test]
    fn badforw_sum_function_after_swap() {
        let fixture = paper_fixture(FixtureName::BadforwSum);
        let swapped = apply_swap(&fixture.network, fixture.swap.as_ref().unwrap()).unwrap();
        let f = worst_sum_function(&swapped, &id("w"), &Refinement::default()).unwrap();
        assert_points(
            &f,
            &[(0.0, 4.0), (4.0, 4.0), (8.0, 1.0), (12.0, 1.0), (16.0, 0.0)],
        );
    }

    #[test]
    fn badforu_sum_function_before_swap() {
        let fixture = paper_fixture(FixtureName::BadforuSum);
        let f = worst_sum_function(&fixture.network, &id("v2"), &Refinement::default()).unwrap();
        let third = 1.0 / 3.0;
        for (x, y) in [
            (0.0, 2.0),
            (2.0 * third, 2.0),
            (2.0, 2.0 * third),
            (2.0 + 2.0 * third, 2.0 * third),
            (4.0 + 2.0 * third, 0.0),
        ] {
            assert!(
                (f.eval(x) - y).abs() < 1e-6,
                "f({x}) = {} expected {y}; {:?}",
                f.eval(x),
                f.breakpoints
            );
        }
    }

    #[test]
    fn worst_sum_never_beats_grid_oracle() {
        for seed in 200..250u64 {
            let net = random_network(&RandomNetworkParams {
                seed,
                n: 4,
                edge_probability: 0.5,
                funds_range: (0.5, 3.0),
                weight_range: (1, 3),
                cyclic: true,
            });
            let total = net.total_funds();
            let rho = total * (0.2 + 0.6 * ((seed % 7) as f64 / 7.0));
            for bank in net.banks() {
                let (value, witness) = worst_sum_value(&net, &bank.id, rho).unwrap();
                let grid = brute_worst_sum_grid(&net, &bank.id, rho, rho / 20.0).unwrap();
                assert!(
                    value <= grid + 1e-7,
                    "seed {seed} bank {}: exact {value} grid {grid}",
                    bank.id
                );
                // The witness must be a feasible shock realizing the value.
                let shocked = apply_shock(&net, &witness).unwrap();
                let realized = solve(&shocked).unwrap().assets_of(&bank.id);
                assert_close(realized, value);
            }
        }
    }

    #[test]
    fn shock_functions_nonincreasing_and_anchored() {
        for seed in 300..320u64 {
            let net = random_network(&RandomNetworkParams {
                seed,
                n: 2 + (seed as usize % 6),
                edge_probability: 0.5,
                funds_range: (0.0, 3.0),
                weight_range: (1, 3),
                cyclic: true,
            });
            let bank = &net.banks()[0].id;
            let unshocked = solve(&net).unwrap().assets_of(bank);
            let ws = worst_set_function(&net, bank, net.len()).unwrap();
            assert_close(ws.values[0], unshocked);
            for w in ws.values.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
            let prop = proportional_shock_function(&net, bank).unwrap();
            prop.check_invariants(unshocked, 1e-6).unwrap();
        }
    }
}
