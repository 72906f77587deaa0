//! Financial-network data model: banks, debt contracts, shocks, and the
//! elementary transformations used by the solvers.
//!
//! Networks are immutable after construction; every transformation returns a
//! new value, so values can be shared freely across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a bank. Ordered lexicographically; all deterministic
/// tie-breaking in the crate relies on this ordering.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BankId(pub String);

impl BankId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BankId {
    fn from(s: &str) -> Self {
        BankId(s.to_owned())
    }
}

impl From<String> for BankId {
    fn from(s: String) -> Self {
        BankId(s)
    }
}

/// A bank with its external funds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bank {
    pub id: BankId,
    pub funds: f64,
}

/// A debt contract obliging `debtor` to pay `weight` to `creditor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    pub debtor: BankId,
    pub creditor: BankId,
    pub weight: f64,
}

/// A network of banks and debt contracts, with an optional default-cost
/// factor beta in (0, 1]. Absent beta means the plain model (beta = 1).
#[derive(Debug, Clone)]
pub struct FinancialNetwork {
    banks: Vec<Bank>,
    contracts: Vec<Contract>,
    default_cost_beta: Option<f64>,
    index: BTreeMap<BankId, usize>,
}

/// A single validation failure, naming the offending bank or contract.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SelfLoop { bank: BankId },
    NegativeFunds { bank: BankId },
    NonPositiveWeight { debtor: BankId, creditor: BankId },
    UnknownBank { id: BankId },
    DuplicateBank { id: BankId },
    DuplicateContract { debtor: BankId, creditor: BankId },
    BadBeta { beta: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { bank } => write!(f, "self-loop contract at bank `{bank}`"),
            Violation::NegativeFunds { bank } => write!(f, "negative funds at bank `{bank}`"),
            Violation::NonPositiveWeight { debtor, creditor } => {
                write!(f, "non-positive weight on contract `{debtor}` -> `{creditor}`")
            }
            Violation::UnknownBank { id } => write!(f, "contract references unknown bank `{id}`"),
            Violation::DuplicateBank { id } => write!(f, "duplicate bank id `{id}`"),
            Violation::DuplicateContract { debtor, creditor } => {
                write!(f, "duplicate contract `{debtor}` -> `{creditor}`")
            }
            Violation::BadBeta { beta } => {
                write!(f, "default cost beta {beta} outside (0, 1]")
            }
        }
    }
}

impl FinancialNetwork {
    /// Builds a network from bank and contract lists. Parallel contracts on
    /// the same ordered (debtor, creditor) pair are merged by summing their
    /// weights. Other invariant violations are kept as-is and reported by
    /// [`validate`].
    pub fn new<B, C>(banks: B, contracts: C, default_cost_beta: Option<f64>) -> Self
    where
        B: IntoIterator<Item = (BankId, f64)>,
        C: IntoIterator<Item = (BankId, BankId, f64)>,
    {
        let banks: Vec<Bank> = banks
            .into_iter()
            .map(|(id, funds)| Bank { id, funds })
            .collect();
        let mut merged: BTreeMap<(BankId, BankId), f64> = BTreeMap::new();
        for (debtor, creditor, weight) in contracts {
            *merged.entry((debtor, creditor)).or_insert(0.0) += weight;
        }
        let contracts = merged
            .into_iter()
            .map(|((debtor, creditor), weight)| Contract {
                debtor,
                creditor,
                weight,
            })
            .collect();
        Self::from_parts(banks, contracts, default_cost_beta)
    }

    /// Builds a network without merging parallel contracts. Used by tests
    /// that exercise validation of raw inputs.
    pub fn from_parts(
        banks: Vec<Bank>,
        contracts: Vec<Contract>,
        default_cost_beta: Option<f64>,
    ) -> Self {
        let index = banks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        FinancialNetwork {
            banks,
            contracts,
            default_cost_beta,
            index,
        }
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn contracts(&self) -> &[Contract] {
        &self.contracts
    }

    pub fn default_cost_beta(&self) -> Option<f64> {
        self.default_cost_beta
    }

    /// Effective default-cost factor: 1 when the field is absent.
    pub fn beta(&self) -> f64 {
        self.default_cost_beta.unwrap_or(1.0)
    }

    pub fn len(&self) -> usize {
        self.banks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.banks.is_empty()
    }

    pub fn bank_index(&self, id: &BankId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn funds_of(&self, id: &BankId) -> Option<f64> {
        self.bank_index(id).map(|i| self.banks[i].funds)
    }

    /// Liability weight from `debtor` to `creditor`; 0 when no contract exists.
    pub fn weight(&self, debtor: &BankId, creditor: &BankId) -> f64 {
        self.contracts
            .iter()
            .find(|c| &c.debtor == debtor && &c.creditor == creditor)
            .map(|c| c.weight)
            .unwrap_or(0.0)
    }

    /// Total outgoing liability of a bank.
    pub fn total_liability(&self, id: &BankId) -> f64 {
        self.contracts
            .iter()
            .filter(|c| &c.debtor == id)
            .map(|c| c.weight)
            .sum()
    }

    /// Total incoming liability of a bank.
    pub fn total_incoming(&self, id: &BankId) -> f64 {
        self.contracts
            .iter()
            .filter(|c| &c.creditor == id)
            .map(|c| c.weight)
            .sum()
    }

    /// Sum of all funds in the network.
    pub fn total_funds(&self) -> f64 {
        self.banks.iter().map(|b| b.funds).sum()
    }

    /// Returns a copy with one bank's funds replaced.
    pub fn with_funds(&self, id: &BankId, funds: f64) -> Result<FinancialNetwork> {
        let i = self
            .bank_index(id)
            .ok_or_else(|| Error::UnknownBank(id.to_string()))?;
        let mut out = self.clone();
        out.banks[i].funds = funds;
        Ok(out)
    }

    /// Returns a copy with the default-cost factor replaced.
    pub fn with_beta(&self, beta: Option<f64>) -> FinancialNetwork {
        let mut out = self.clone();
        out.default_cost_beta = beta;
        out
    }

    /// Returns a copy with one contract's weight replaced (or the contract
    /// removed when `weight` is zero, or added when missing).
    pub fn with_weight(&self, debtor: &BankId, creditor: &BankId, weight: f64) -> FinancialNetwork {
        let mut contracts: Vec<Contract> = self
            .contracts
            .iter()
            .filter(|c| !(&c.debtor == debtor && &c.creditor == creditor))
            .cloned()
            .collect();
        if weight != 0.0 {
            contracts.push(Contract {
                debtor: debtor.clone(),
                creditor: creditor.clone(),
                weight,
            });
        }
        contracts.sort_by(|a, b| (&a.debtor, &a.creditor).cmp(&(&b.debtor, &b.creditor)));
        FinancialNetwork::from_parts(self.banks.clone(), contracts, self.default_cost_beta)
    }

    /// Structural equality with a per-number tolerance, ignoring contract
    /// order. Bank order matters (it is part of the value).
    pub fn structurally_eq(&self, other: &FinancialNetwork, eps: f64) -> bool {
        if self.banks.len() != other.banks.len() || self.contracts.len() != other.contracts.len() {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= eps * a.abs().max(b.abs()).max(1.0);
        for (a, b) in self.banks.iter().zip(&other.banks) {
            if a.id != b.id || !close(a.funds, b.funds) {
                return false;
            }
        }
        let key = |c: &Contract| (c.debtor.clone(), c.creditor.clone());
        let mut mine: Vec<&Contract> = self.contracts.iter().collect();
        let mut theirs: Vec<&Contract> = other.contracts.iter().collect();
        mine.sort_by_key(|c| key(c));
        theirs.sort_by_key(|c| key(c));
        for (a, b) in mine.iter().zip(&theirs) {
            if a.debtor != b.debtor || a.creditor != b.creditor || !close(a.weight, b.weight) {
                return false;
            }
        }
        match (self.default_cost_beta, other.default_cost_beta) {
            (None, None) => true,
            (Some(a), Some(b)) => close(a, b),
            _ => false,
        }
    }
}

/// Checks every type invariant and returns all violations found. Reports
/// instead of failing so that callers can surface every problem at once.
pub fn validate(network: &FinancialNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for bank in &network.banks {
        if seen.insert(bank.id.clone(), ()).is_some() {
            out.push(Violation::DuplicateBank {
                id: bank.id.clone(),
            });
        }
        if bank.funds < 0.0 {
            out.push(Violation::NegativeFunds {
                bank: bank.id.clone(),
            });
        }
    }
    let mut pairs = BTreeMap::new();
    for c in &network.contracts {
        if c.debtor == c.creditor {
            out.push(Violation::SelfLoop {
                bank: c.debtor.clone(),
            });
        }
        if c.weight <= 0.0 {
            out.push(Violation::NonPositiveWeight {
                debtor: c.debtor.clone(),
                creditor: c.creditor.clone(),
            });
        }
        for id in [&c.debtor, &c.creditor] {
            if !seen.contains_key(id) {
                out.push(Violation::UnknownBank { id: id.clone() });
            }
        }
        if pairs
            .insert((c.debtor.clone(), c.creditor.clone()), ())
            .is_some()
        {
            out.push(Violation::DuplicateContract {
                debtor: c.debtor.clone(),
                creditor: c.creditor.clone(),
            });
        }
    }
    if let Some(beta) = network.default_cost_beta {
        if !(beta > 0.0 && beta <= 1.0) {
            out.push(Violation::BadBeta { beta });
        }
    }
    out
}

/// Returns `Ok(())` when the network has no violations.
pub fn ensure_valid(network: &FinancialNetwork) -> Result<()> {
    let violations = validate(network);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(violations))
    }
}

/// Per-bank fund reductions. Every reduction must lie in [0, e_u].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShockVector {
    pub reductions: BTreeMap<BankId, f64>,
}

impl ShockVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(bank: impl Into<BankId>, amount: f64) -> Self {
        let mut reductions = BTreeMap::new();
        reductions.insert(bank.into(), amount);
        ShockVector { reductions }
    }

    /// Total funds removed by the shock.
    pub fn total(&self) -> f64 {
        self.reductions.values().sum()
    }

    /// A shock wiping the full funds of every bank in `banks`.
    pub fn wipe<'a>(network: &FinancialNetwork, banks: impl IntoIterator<Item = &'a BankId>) -> Result<Self> {
        let mut reductions = BTreeMap::new();
        for id in banks {
            let funds = network
                .funds_of(id)
                .ok_or_else(|| Error::UnknownBank(id.to_string()))?;
            reductions.insert(id.clone(), funds);
        }
        Ok(ShockVector { reductions })
    }
}

/// A proportional shock removing a `lambda` portion of every bank's funds.
pub fn proportional_shock(network: &FinancialNetwork, lambda: f64) -> Result<ShockVector> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::OutOfRange(format!(
            "proportional shock parameter {lambda} outside [0, 1]"
        )));
    }
    let reductions = network
        .banks
        .iter()
        .filter(|b| b.funds > 0.0)
        .map(|b| (b.id.clone(), lambda * b.funds))
        .collect();
    Ok(ShockVector { reductions })
}

/// Applies a shock, returning the reduced network. The original is untouched;
/// liabilities never change, only funds.
pub fn apply_shock(network: &FinancialNetwork, shock: &ShockVector) -> Result<FinancialNetwork> {
    let mut out = network.clone();
    for (id, reduction) in &shock.reductions {
        let i = out
            .bank_index(id)
            .ok_or_else(|| Error::UnknownBank(id.to_string()))?;
        let funds = out.banks[i].funds;
        if *reduction < 0.0 {
            return Err(Error::BadShock(format!(
                "negative reduction {reduction} at bank `{id}`"
            )));
        }
        // Small slack for reductions computed from the funds themselves.
        if *reduction > funds + 1e-9 {
            return Err(Error::BadShock(format!(
                "reduction {reduction} exceeds funds {funds} at bank `{id}`"
            )));
        }
        out.banks[i].funds = (funds - reduction).max(0.0);
    }
    Ok(out)
}

/// Result of [`open_variant`]: the transformed network and the ids of the
/// four nodes that were added.
#[derive(Debug, Clone)]
pub struct OpenVariant {
    pub network: FinancialNetwork,
    pub source1: BankId,
    pub source2: BankId,
    pub sink1: BankId,
    pub sink2: BankId,
    /// The finite stand-in for the unbounded source liabilities.
    pub big_liability: f64,
}

/// Builds the open variant of a network with respect to two contracts
/// `c1 = (u1, v1)` and `c2 = (u2, v2)`: both contracts are removed, fresh
/// sources feed v1 and v2 with a liability larger than anything the system
/// can pay, and fresh sinks absorb the old outgoing side with the original
/// weights. All four contract endpoints must be distinct.
pub fn open_variant(
    network: &FinancialNetwork,
    c1: (&BankId, &BankId),
    c2: (&BankId, &BankId),
) -> Result<OpenVariant> {
    let (u1, v1) = c1;
    let (u2, v2) = c2;
    let endpoints = [u1, v1, u2, v2];
    for (i, a) in endpoints.iter().enumerate() {
        for b in endpoints.iter().skip(i + 1) {
            if a == b {
                return Err(Error::BadSpec(format!(
                    "open variant endpoints must be distinct; `{a}` repeats"
                )));
            }
        }
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

    // Big enough that no bank can ever pay it in full: total funds plus all
    // circulating debt, plus one.
    let big: f64 = network.total_funds()
        + network.contracts.iter().map(|c| c.weight).sum::<f64>()
        + 1.0;

    let fresh = |base: &str| -> BankId {
        let mut candidate = base.to_owned();
        let mut n = 1;
        while network.index.contains_key(&BankId(candidate.clone())) {
            n += 1;
            candidate = format!("{base}{n}");
        }
        BankId(candidate)
    };
    let s1 = fresh("open_s1");
    let s2 = fresh("open_s2");
    let t1 = fresh("open_t1");
    let t2 = fresh("open_t2");

    let mut banks: Vec<Bank> = network.banks.clone();
    for id in [&s1, &s2, &t1, &t2] {
        banks.push(Bank {
            id: id.clone(),
            funds: 0.0,
        });
    }
    let mut contracts: Vec<Contract> = network
        .contracts
        .iter()
        .filter(|c| {
            !(&c.debtor == u1 && &c.creditor == v1) && !(&c.debtor == u2 && &c.creditor == v2)
        })
        .cloned()
        .collect();
    contracts.push(Contract {
        debtor: s1.clone(),
        creditor: v1.clone(),
        weight: big,
    });
    contracts.push(Contract {
        debtor: s2.clone(),
        creditor: v2.clone(),
        weight: big,
    });
    contracts.push(Contract {
        debtor: u1.clone(),
        creditor: t1.clone(),
        weight: w1,
    });
    contracts.push(Contract {
        debtor: u2.clone(),
        creditor: t2.clone(),
        weight: w2,
    });
    contracts.sort_by(|a, b| (&a.debtor, &a.creditor).cmp(&(&b.debtor, &b.creditor)));

    Ok(OpenVariant {
        network: FinancialNetwork::from_parts(banks, contracts, network.default_cost_beta),
        source1: s1,
        source2: s2,
        sink1: t1,
        sink2: t2,
        big_liability: big,
    })
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// A number that may be written either as a JSON number or as a string
/// holding a decimal or a "p/q" rational. Paper examples use fractions like
/// 2/3, which have no exact decimal form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrRational {
    Number(f64),
    Text(String),
}

impl NumberOrRational {
    fn value(&self) -> Result<f64> {
        match self {
            NumberOrRational::Number(x) => Ok(*x),
            NumberOrRational::Text(s) => parse_rational(s),
        }
    }
}

fn parse_rational(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: f64 = p
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rational numerator in `{s}`")))?;
        let q: f64 = q
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad rational denominator in `{s}`")))?;
        if q == 0.0 {
            return Err(Error::Parse(format!("zero denominator in `{s}`")));
        }
        Ok(p / q)
    } else {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad number `{s}`")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    id: String,
    funds: NumberOrRational,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractFile {
    debtor: String,
    creditor: String,
    weight: NumberOrRational,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    banks: Vec<BankFile>,
    contracts: Vec<ContractFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    default_cost_beta: Option<NumberOrRational>,
}

/// Parses a network from its textual file form. Parallel contracts are
/// merged; unknown bank references and duplicate bank ids are rejected.
pub fn from_json(text: &str) -> Result<FinancialNetwork> {
    let file: NetworkFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut banks = Vec::new();
    let mut seen = BTreeMap::new();
    for b in &file.banks {
        let id = BankId(b.id.clone());
        if seen.insert(id.clone(), ()).is_some() {
            return Err(Error::DuplicateBank(b.id.clone()));
        }
        banks.push((id, b.funds.value()?));
    }
    let mut contracts = Vec::new();
    for c in &file.contracts {
        let debtor = BankId(c.debtor.clone());
        let creditor = BankId(c.creditor.clone());
        for id in [&debtor, &creditor] {
            if !seen.contains_key(id) {
                return Err(Error::UnknownBank(id.to_string()));
            }
        }
        contracts.push((debtor, creditor, c.weight.value()?));
    }
    let beta = match &file.default_cost_beta {
        Some(b) => Some(b.value()?),
        None => None,
    };
    Ok(FinancialNetwork::new(banks, contracts, beta))
}

/// Serializes a network to its textual file form.
pub fn to_json(network: &FinancialNetwork) -> String {
    let file = NetworkFile {
        banks: network
            .banks
            .iter()
            .map(|b| BankFile {
                id: b.id.to_string(),
                funds: NumberOrRational::Number(b.funds),
            })
            .collect(),
        contracts: network
            .contracts
            .iter()
            .map(|c| ContractFile {
                debtor: c.debtor.to_string(),
                creditor: c.creditor.to_string(),
                weight: NumberOrRational::Number(c.weight),
            })
            .collect(),
        default_cost_beta: network.default_cost_beta.map(NumberOrRational::Number),
    };
    serde_json::to_string_pretty(&file).expect("network serialization cannot fail")
}

pub fn load(path: impl AsRef<Path>) -> Result<FinancialNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text)
}

pub fn save(network: &FinancialNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(network)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
