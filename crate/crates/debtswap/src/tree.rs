//! Polynomial-time worst-set shock functions on tree networks: a bottom-up
//! (min,+) convolution over the subtrees feeding the target bank.

use std::collections::{BTreeMap, BTreeSet};

use crate::clearing::Problem;
use crate::error::{Error, Result};
use crate::network::{ensure_valid, BankId, FinancialNetwork};
use crate::shock::DiscreteShockFunction;

/// Evidence that the undirected contract graph is a forest, plus the order
/// the DP uses.
#[derive(Debug, Clone)]
pub struct TreeCertificate {
    /// Directed topological order: debtors before creditors.
    pub topo_order: Vec<BankId>,
    /// Undirected parent per bank; roots (smallest id per component) map to
    /// `None`.
    pub parents: BTreeMap<BankId, Option<BankId>>,
    pub components: usize,
}

#[derive(Debug, Clone)]
pub struct TreeCheck {
    pub is_tree: bool,
    pub certificate: Option<TreeCertificate>,
    /// An undirected cycle witnessing the failure, when not a tree.
    pub cycle: Option<Vec<BankId>>,
}

/// Work counters for the DP, exposed so tests can observe the O(n * K^2)
/// bound and the node-count inflation of the reduction.
#[derive(Debug, Clone, Copy, Default)]
pub struct TreeDpStats {
    /// Number of pairwise (min,+) convolutions performed.
    pub merge_steps: usize,
    /// Total convolution cell updates, bounded by 2 n (K+1)^2.
    pub cell_ops: usize,
    /// Fictitious sources standing in for banks' own funds.
    pub aux_sources: usize,
    /// Fictitious intermediates reducing indegree to two.
    pub aux_intermediates: usize,
}

/// Tests whether the undirected version of the contract graph is acyclic
/// (a forest). Opposite contracts between the same two banks count as a
/// cycle of length two.
pub fn is_tree(network: &FinancialNetwork) -> Result<TreeCheck> {
    ensure_valid(network)?;
    let n = network.len();
    let mut parent_uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut Vec<usize>, x: usize) -> usize {
        if uf[x] != x {
            let root = find(uf, uf[x]);
            uf[x] = root;
        }
        uf[x]
    }
    // Undirected adjacency over accepted edges, for cycle extraction.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in network.contracts() {
        let a = network.bank_index(&c.debtor).expect("validated");
        let b = network.bank_index(&c.creditor).expect("validated");
        let (ra, rb) = (find(&mut parent_uf, a), find(&mut parent_uf, b));
        if ra == rb {
            // Closing edge: find the path a..b through accepted edges.
            let cycle = undirected_path(&adjacency, b, a)
                .into_iter()
                .map(|i| network.banks()[i].id.clone())
                .collect();
            return Ok(TreeCheck {
                is_tree: false,
                certificate: None,
                cycle: Some(cycle),
            });
        }
        parent_uf[ra] = rb;
        adjacency[a].push(b);
        adjacency[b].push(a);
    }

    // Rooted undirected structure, one root per component (smallest id).
    let mut parents: BTreeMap<BankId, Option<BankId>> = BTreeMap::new();
    let mut visited = vec![false; n];
    let mut components = 0;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| network.banks()[a].id.cmp(&network.banks()[b].id));
    for &root in &order {
        if visited[root] {
            continue;
        }
        components += 1;
        visited[root] = true;
        parents.insert(network.banks()[root].id.clone(), None);
        let mut queue = vec![root];
        while let Some(u) = queue.pop() {
            let mut next: Vec<usize> = adjacency[u].iter().copied().collect();
            next.sort_by(|&a, &b| network.banks()[a].id.cmp(&network.banks()[b].id));
            for w in next {
                if !visited[w] {
                    visited[w] = true;
                    parents.insert(
                        network.banks()[w].id.clone(),
                        Some(network.banks()[u].id.clone()),
                    );
                    queue.push(w);
                }
            }
        }
    }

    // Directed topological order (always exists on a forest).
    let mut indegree = vec![0usize; n];
    for c in network.contracts() {
        let cr = network.bank_index(&c.creditor).expect("validated");
        indegree[cr] += 1;
    }
    let mut ready: BTreeSet<(BankId, usize)> = (0..n)
        .filter(|&u| indegree[u] == 0)
        .map(|u| (network.banks()[u].id.clone(), u))
        .collect();
    let mut topo_order = Vec::with_capacity(n);
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in network.contracts() {
        let d = network.bank_index(&c.debtor).expect("validated");
        let cr = network.bank_index(&c.creditor).expect("validated");
        out_edges[d].push(cr);
    }
    while let Some(entry) = ready.iter().next().cloned() {
        ready.remove(&entry);
        let (id, u) = entry;
        topo_order.push(id);
        for &w in &out_edges[u] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.insert((network.banks()[w].id.clone(), w));
            }
        }
    }
    debug_assert_eq!(topo_order.len(), n, "forests always admit a topo order");

    Ok(TreeCheck {
        is_tree: true,
        certificate: Some(TreeCertificate {
            topo_order,
            parents,
            components,
        }),
        cycle: None,
    })
}

fn undirected_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let n = adjacency.len();
    let mut previous = vec![usize::MAX; n];
    let mut visited = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    visited[from] = true;
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &w in &adjacency[u] {
            if !visited[w] {
                visited[w] = true;
                previous[w] = u;
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![to];
    let mut cursor = to;
    while cursor != from && previous[cursor] != usize::MAX {
        cursor = previous[cursor];
        path.push(cursor);
    }
    path.reverse();
    path
}

/// Worst-set shock function of `v` on a tree network, for k = 0..=K.
///
/// Banks are processed with all payment inputs resolved first. A bank's own
/// funds act as one more shockable input (the fictitious source with an
/// unbounded liability); banks with more than two inputs are folded by
/// repeated pairwise convolution, which is associative, so the fold order
/// does not matter. On forests the function is evaluated on the target's
/// component; shocks elsewhere cannot move the target's assets.
pub fn tree_worst_set(
    network: &FinancialNetwork,
    v: &BankId,
    k_max: usize,
) -> Result<DiscreteShockFunction> {
    Ok(tree_worst_set_with_stats(network, v, k_max)?.0)
}

pub fn tree_worst_set_with_stats(
    network: &FinancialNetwork,
    v: &BankId,
    k_max: usize,
) -> Result<(DiscreteShockFunction, TreeDpStats)> {
    let check = is_tree(network)?;
    if !check.is_tree {
        return Err(Error::NotATree(
            check
                .cycle
                .unwrap_or_default()
                .iter()
                .map(|b| b.to_string())
                .collect(),
        ));
    }
    if k_max > network.len() {
        return Err(Error::OutOfRange(format!(
            "K = {k_max} exceeds the number of banks {}",
            network.len()
        )));
    }
    let problem = Problem::build_unchecked(network, network.beta());
    let target = problem
        .ids
        .iter()
        .position(|id| id == v)
        .ok_or_else(|| Error::UnknownBank(v.to_string()))?;

    // Banks whose payments can reach the target.
    let mut relevant = vec![false; problem.n];
    let mut stack = vec![target];
    relevant[target] = true;
    while let Some(u) = stack.pop() {
        for &(debtor, _) in &problem.incoming[u] {
            if !relevant[debtor] {
                relevant[debtor] = true;
                stack.push(debtor);
            }
        }
    }

    let mut stats = TreeDpStats::default();
    let width = k_max + 1;
    let mut table: Vec<Option<Vec<f64>>> = vec![None; problem.n];
    let certificate = check.certificate.expect("tree checked");

    for id in &certificate.topo_order {
        let u = problem.ids.iter().position(|x| x == id).expect("indexed");
        if !relevant[u] {
            continue;
        }
        // Input terms: the clamped function of each debtor subtree, plus a
        // fictitious source for the bank's own funds.
        let mut terms: Vec<Vec<f64>> = Vec::new();
        let mut debtors: Vec<(usize, f64)> = problem.incoming[u].clone();
        debtors.sort_by(|a, b| problem.ids[a.0].cmp(&problem.ids[b.0]));
        for (w, weight) in debtors {
            let child = table[w].as_ref().expect("topological order");
            let ratio = weight / problem.liab[w];
            let clamped: Vec<f64> = child
                .iter()
                .map(|&a| {
                    if a >= problem.liab[w] {
                        weight
                    } else {
                        problem.beta * a * ratio
                    }
                })
                .collect();
            terms.push(clamped);
        }
        if problem.funds[u] > 0.0 {
            let mut own = vec![0.0; width];
            own[0] = problem.funds[u];
            terms.push(own);
            if !problem.incoming[u].is_empty() {
                stats.aux_sources += 1;
            }
        }
        stats.aux_intermediates += terms.len().saturating_sub(2);

        let combined = match terms.len() {
            0 => vec![0.0; width],
            _ => {
                let mut acc = terms[0].clone();
                for term in &terms[1..] {
                    acc = min_plus_convolve(&acc, term, &mut stats);
                }
                acc
            }
        };
        table[u] = Some(combined);
    }

    let values = table[target].take().expect("target processed");
    Ok((
        DiscreteShockFunction {
            values,
            witnesses: None,
        },
        stats,
    ))
}

/// (min,+) convolution: out[k] = min over k1 + k2 = k of a[k1] + b[k2].
/// Both inputs are nonincreasing, so the output is too.
fn min_plus_convolve(a: &[f64], b: &[f64], stats: &mut TreeDpStats) -> Vec<f64> {
    let width = a.len();
    debug_assert_eq!(width, b.len());
    stats.merge_steps += 1;
    let mut out = vec![f64::INFINITY; width];
    for k in 0..width {
        for k1 in 0..=k {
            stats.cell_ops += 1;
            let candidate = a[k1] + b[k - k1];
            if candidate < out[k] {
                out[k] = candidate;
            }
        }
    }
    out
}
