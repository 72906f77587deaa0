//! Command-line front end: clearing, shock functions, swap checking and
//! search, the tree DP, gadget builders and the randomized verifiers.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numeric failure
//! (non-convergence, singular system), 4 enumeration budget exceeded.
//! Identical invocations produce byte-identical output.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use debtswap::error::Error;
use debtswap::gadgets::{
    d_boolean, densest_k_reduction, one_fix, paper_fixture, FixtureName, GadgetModel,
    ReductionModel, SimpleGraph,
};
use debtswap::network::{ensure_valid, load, save, to_json, BankId, FinancialNetwork};
use debtswap::oracle::{theorem_harness, TheoremKind};
use debtswap::shock::{
    proportional_shock_function_opt, worst_set_function_opt, worst_sum_function_opt,
    DiscreteShockFunction, Exactness, PwlShockFunction, Refinement, ShockOptions,
};
use debtswap::swap::{
    classify_swap_opt, search_positive_swaps_opt, SearchOptions, SearchScope, ShockModel,
    SwapSpec, SwapVerdict,
};
use debtswap::tree::tree_worst_set;
use debtswap::{solve_fictitious_default, solve_picard, solve_with_default_costs, ClearingSolution};

#[derive(Parser)]
#[command(name = "debtswap", version, about = "Clearing, shocks and debt swaps in liability networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallel search (1 keeps runs fully sequential).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Object,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Base,
    Proportional,
    WorstSet,
    WorstSum,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Picard,
    Fictitious,
}

#[derive(Args)]
struct ModelFlags {
    /// Shock model.
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Shock-size limit K for the worst-set model.
    #[arg(long = "K", default_value_t = 2)]
    k: usize,
    /// Adaptive refinement depth for worst-sum reconstruction.
    #[arg(long, default_value_t = 40)]
    depth: u32,
    /// Chord tolerance for worst-sum reconstruction.
    #[arg(long, default_value_t = 1e-9)]
    chord_tol: f64,
}

impl ModelFlags {
    fn to_model(&self) -> ShockModel {
        match self.model {
            ModelArg::Base => ShockModel::Base,
            ModelArg::Proportional => ShockModel::Proportional,
            ModelArg::WorstSet => ShockModel::WorstSet { k_max: self.k },
            ModelArg::WorstSum => ShockModel::WorstSum {
                refinement: Refinement {
                    max_depth: self.depth,
                    chord_tol: self.chord_tol,
                },
            },
        }
    }
}

#[derive(Args)]
struct SolverFlags {
    /// Clearing tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Subset-enumeration budget.
    #[arg(long, default_value_t = 1 << 22)]
    budget: u64,
}

impl SolverFlags {
    fn to_options(&self) -> ShockOptions {
        ShockOptions {
            tol: self.tol,
            max_iter: 100_000,
            budget: self.budget,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute the maximal clearing vector of a network file.
    Clear {
        path: PathBuf,
        /// Default-cost factor in (0, 1]; defaults to the file's value.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, value_enum, default_value_t = MethodArg::Picard)]
        method: MethodArg,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Evaluate a bank's shock function.
    Shock {
        path: PathBuf,
        /// The bank whose shock function is computed.
        #[arg(long)]
        target: String,
        #[command(flatten)]
        model: ModelFlags,
        /// Emit N+1 uniform samples over the domain instead of breakpoints
        /// (continuous models only).
        #[arg(long, alias = "lambda-grid", alias = "rho-grid")]
        grid: Option<usize>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Classify one swap under a shock model.
    SwapCheck {
        path: PathBuf,
        #[arg(long)]
        c1_debtor: String,
        #[arg(long)]
        c1_creditor: String,
        #[arg(long)]
        c2_debtor: String,
        #[arg(long)]
        c2_creditor: String,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Search a network for positive and semi-positive swaps.
    SwapSearch {
        path: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        /// Restrict the search to the incoming contracts of this pair.
        #[arg(long, requires = "v2")]
        v1: Option<String>,
        #[arg(long, requires = "v1")]
        v2: Option<String>,
        /// Candidate-evaluation cap; beyond it the result is truncated.
        #[arg(long, default_value_t = 20_000)]
        limit: usize,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Worst-set shock function on a tree network, by dynamic programming.
    TreeDp {
        path: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long = "K", default_value_t = 10)]
        k: usize,
    },
    /// Build gadgets, reductions and named example networks.
    Gadget {
        #[command(subcommand)]
        which: GadgetCommand,
    },
    /// Run a randomized theorem harness; exits nonzero on any violation.
    Verify {
        /// One of: nopos-base, noport-base, nopos-prop.
        #[arg(long)]
        theorem: String,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Where to write a minimized counterexample, should one appear.
        #[arg(long)]
        counterexample_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GadgetCommand {
    /// Write one of the named example networks.
    Build {
        /// fig1, motive, expansive, semipos, invariants, badforw, badforu,
        /// treepos, portfolio76, reorg3, badforw_sum, badforu_sum.
        #[arg(long)]
        name: String,
    },
    /// Threshold gadget paying d until d of its sources are wiped.
    Boolean {
        #[arg(long)]
        d: u32,
        /// Build the single-node worst-sum variant with this loss unit.
        #[arg(long)]
        big_d: Option<f64>,
        /// Wire the gadget into a fresh sink before writing.
        #[arg(long, default_value_t = false)]
        attach_sink: bool,
    },
    /// Gadget guaranteeing a unit payment under any shock of size <= K.
    OneFix {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = false)]
        worst_sum: bool,
        #[arg(long, default_value_t = false)]
        attach_sink: bool,
    },
    /// Densest-k-subgraph reduction from a graph file
    /// {"vertices": [...], "edges": [["a","b"], ...]}.
    DensestK {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = false)]
        worst_sum: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();
    match run(&cli) {
        Ok(output) => {
            match &cli.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, output) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => print!("{output}"),
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::Singular(_) => 3,
            Error::BudgetExceeded { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn violation(message: String) -> Self {
        Failure { code: 1, message }
    }
}

/// Shortest decimal representation within 1e-9 of the value.
fn fmt_num(value: f64) -> String {
    let value = if value == 0.0 { 0.0 } else { value };
    for precision in 0..=9 {
        let candidate = format!("{value:.precision$}");
        if let Ok(parsed) = candidate.parse::<f64>() {
            if (parsed - value).abs() <= 1e-9 {
                return candidate;
            }
        }
    }
    format!("{value:.9}")
}

fn load_valid(path: &PathBuf) -> Result<FinancialNetwork, Failure> {
    let network = load(path)?;
    ensure_valid(&network)?;
    Ok(network)
}

fn bank(network: &FinancialNetwork, name: &str) -> Result<BankId, Failure> {
    let id = BankId::from(name);
    if network.bank_index(&id).is_none() {
        return Err(Error::UnknownBank(name.to_owned()).into());
    }
    Ok(id)
}

fn run(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Clear {
            path,
            beta,
            method,
            solver,
        } => {
            let network = load_valid(path)?;
            let solution = match (beta, method) {
                (Some(b), _) => solve_with_default_costs(&network, *b, solver.tol)?,
                (None, MethodArg::Picard) => solve_picard(&network, solver.tol, 100_000)?,
                (None, MethodArg::Fictitious) => solve_fictitious_default(&network, solver.tol)?,
            };
            Ok(render_clearing(&network, &solution, cli.format))
        }
        Command::Shock {
            path,
            target,
            model,
            grid,
            solver,
        } => {
            let network = load_valid(path)?;
            let target = bank(&network, target)?;
            let opts = solver.to_options();
            match model.to_model() {
                ShockModel::Base => Err(Failure::violation(
                    "the base model has no shock function; use `clear`".into(),
                )),
                ShockModel::WorstSet { k_max } => {
                    let f = worst_set_function_opt(&network, &target, k_max, &opts)?;
                    Ok(render_discrete(&f, cli.format))
                }
                ShockModel::Proportional => {
                    let f = proportional_shock_function_opt(&network, &target, &opts)?;
                    Ok(render_pwl(&f, *grid, cli.format))
                }
                ShockModel::WorstSum { refinement } => {
                    let f = worst_sum_function_opt(&network, &target, &refinement, &opts)?;
                    Ok(render_pwl(&f, *grid, cli.format))
                }
            }
        }
        Command::SwapCheck {
            path,
            c1_debtor,
            c1_creditor,
            c2_debtor,
            c2_creditor,
            model,
            solver,
        } => {
            let network = load_valid(path)?;
            let spec = SwapSpec {
                debtor1: bank(&network, c1_debtor)?,
                creditor1: bank(&network, c1_creditor)?,
                debtor2: bank(&network, c2_debtor)?,
                creditor2: bank(&network, c2_creditor)?,
                weight: network.weight(&BankId::from(c1_debtor.as_str()), &BankId::from(c1_creditor.as_str())),
            };
            let verdict =
                classify_swap_opt(&network, &spec, &model.to_model(), &solver.to_options())?;
            Ok(render_verdict(&verdict, cli.format))
        }
        Command::SwapSearch {
            path,
            model,
            v1,
            v2,
            limit,
            solver,
        } => {
            let network = load_valid(path)?;
            let scope = match (v1, v2) {
                (Some(a), Some(b)) => SearchScope::Pair(bank(&network, a)?, bank(&network, b)?),
                _ => SearchScope::All,
            };
            let options = SearchOptions {
                limit: *limit,
                shock: solver.to_options(),
            };
            let result =
                search_positive_swaps_opt(&network, &model.to_model(), &scope, &options)?;
            Ok(render_search(&result, cli.format))
        }
        Command::TreeDp { path, target, k } => {
            let network = load_valid(path)?;
            let target = bank(&network, target)?;
            let f = tree_worst_set(&network, &target, *k)?;
            Ok(render_discrete(&f, cli.format))
        }
        Command::Gadget { which } => run_gadget(which, cli.format),
        Command::Verify {
            theorem,
            trials,
            seed,
            counterexample_out,
        } => {
            let kind: TheoremKind = theorem.parse()?;
            let report = theorem_harness(kind, *trials, *seed)?;
            let mut out = String::new();
            out.push_str(&format!(
                "theorem,{theorem}\ntrials,{}\ncandidates,{}\npositives,{}\n",
                report.trials,
                report.candidates_checked,
                report.positives.len()
            ));
            if let Some(first) = report.positives.first() {
                out.push_str(&format!("counterexample,{}\n", first.description));
                if let Some(path) = counterexample_out {
                    save(&first.network, path)?;
                }
                return Err(Failure::violation(format!(
                    "{theorem}: found {} positive verdicts; first: {}",
                    report.positives.len(),
                    first.description
                )));
            }
            Ok(out)
        }
    }
}

fn run_gadget(which: &GadgetCommand, format: Format) -> Result<String, Failure> {
    let render = |network: &FinancialNetwork, note: Option<String>| -> String {
        let mut out = to_json(network);
        out.push('\n');
        if let Some(note) = note {
            // Notes go to stderr so the payload stays machine-readable.
            eprintln!("{note}");
        }
        out
    };
    let _ = format;
    match which {
        GadgetCommand::Build { name } => {
            let fixture = paper_fixture(name.parse::<FixtureName>()?);
            Ok(render(&fixture.network, None))
        }
        GadgetCommand::Boolean { d, big_d, attach_sink } => {
            let model = match big_d {
                Some(big) => GadgetModel::WorstSum { big_d: *big },
                None => GadgetModel::WorstSet,
            };
            let gadget = d_boolean(*d, model)?;
            if *attach_sink {
                let (network, sink) = gadget.attached_to_sink();
                Ok(render(&network, Some(format!("sink: {sink}"))))
            } else {
                Ok(render(
                    &gadget.network,
                    Some(format!(
                        "attach: {} weight {}",
                        gadget.attach_from,
                        fmt_num(gadget.attach_weight)
                    )),
                ))
            }
        }
        GadgetCommand::OneFix { k, worst_sum, attach_sink } => {
            let model = if *worst_sum {
                GadgetModel::WorstSum { big_d: 0.0 }
            } else {
                GadgetModel::WorstSet
            };
            let gadget = one_fix(*k, model);
            if *attach_sink {
                let (network, sink) = gadget.attached_to_sink();
                Ok(render(&network, Some(format!("sink: {sink}"))))
            } else {
                Ok(render(
                    &gadget.network,
                    Some(format!(
                        "attach: {} weight {}",
                        gadget.attach_from,
                        fmt_num(gadget.attach_weight)
                    )),
                ))
            }
        }
        GadgetCommand::DensestK { graph, worst_sum } => {
            let text = std::fs::read_to_string(graph).map_err(|e| Failure {
                code: 2,
                message: format!("cannot read {}: {e}", graph.display()),
            })?;
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct GraphFile {
                vertices: Vec<String>,
                edges: Vec<(String, String)>,
            }
            let parsed: GraphFile =
                serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
            let index: BTreeMap<&str, usize> = parsed
                .vertices
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i))
                .collect();
            let mut edges = Vec::new();
            for (a, b) in &parsed.edges {
                let a = *index
                    .get(a.as_str())
                    .ok_or_else(|| Error::UnknownBank(a.clone()))?;
                let b = *index
                    .get(b.as_str())
                    .ok_or_else(|| Error::UnknownBank(b.clone()))?;
                edges.push((a, b));
            }
            let graph = SimpleGraph::new(parsed.vertices, edges)?;
            let model = if *worst_sum {
                ReductionModel::WorstSum
            } else {
                ReductionModel::WorstSet
            };
            let (network, target) = densest_k_reduction(&graph, model)?;
            Ok(render(&network, Some(format!("target: {target}"))))
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn render_clearing(
    network: &FinancialNetwork,
    solution: &ClearingSolution,
    format: Format,
) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from("bank,recovery,assets,equity,defaulting\n");
            for bank in network.banks() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    bank.id,
                    fmt_num(solution.recovery_of(&bank.id)),
                    fmt_num(solution.assets_of(&bank.id)),
                    fmt_num(solution.equity.get(&bank.id).copied().unwrap_or(0.0)),
                    solution.defaulting.contains(&bank.id)
                ));
            }
            out.push_str("\ndebtor,creditor,payment\n");
            for ((debtor, creditor), payment) in &solution.payments {
                out.push_str(&format!("{debtor},{creditor},{}\n", fmt_num(*payment)));
            }
            out
        }
        Format::Object => {
            let payments: Vec<serde_json::Value> = solution
                .payments
                .iter()
                .map(|((d, c), p)| {
                    serde_json::json!({"debtor": d, "creditor": c, "payment": p})
                })
                .collect();
            let value = serde_json::json!({
                "recovery": solution.recovery,
                "assets": solution.assets,
                "equity": solution.equity,
                "defaulting": solution.defaulting,
                "payments": payments,
                "residual": solution.residual,
                "meta": solution.meta,
            });
            format!("{}\n", serde_json::to_string_pretty(&value).expect("json"))
        }
    }
}

fn render_discrete(f: &DiscreteShockFunction, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from("k,value,witness\n");
            for (k, value) in f.values.iter().enumerate() {
                let witness = f
                    .witnesses
                    .as_ref()
                    .map(|w| {
                        w[k].iter()
                            .map(|b| b.to_string())
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                out.push_str(&format!("{k},{},{witness}\n", fmt_num(*value)));
            }
            out
        }
        Format::Object => {
            let value = serde_json::json!({
                "values": f.values,
                "witnesses": f.witnesses,
            });
            format!("{}\n", serde_json::to_string_pretty(&value).expect("json"))
        }
    }
}

fn render_pwl(f: &PwlShockFunction, grid: Option<usize>, format: Format) -> String {
    let points: Vec<(f64, f64)> = match grid {
        Some(n) if n > 0 => {
            let hi = f.x_max();
            (0..=n)
                .map(|i| {
                    let x = hi * i as f64 / n as f64;
                    (x, f.eval(x))
                })
                .collect()
        }
        _ => f.breakpoints.clone(),
    };
    match format {
        Format::Csv => {
            let mut out = String::from("x,value\n");
            for (x, y) in &points {
                out.push_str(&format!("{},{}\n", fmt_num(*x), fmt_num(*y)));
            }
            out
        }
        Format::Object => {
            let value = serde_json::json!({
                "breakpoints": points,
                "exact": f.exactness == Exactness::Exact,
            });
            format!("{}\n", serde_json::to_string_pretty(&value).expect("json"))
        }
    }
}

fn render_verdict(verdict: &SwapVerdict, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = format!("{:?}\n", verdict.class);
            out.push_str("bank,improved,worsened,max_gain,max_loss\n");
            for bank in &verdict.banks {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    bank.bank,
                    bank.improved,
                    bank.worsened,
                    fmt_num(bank.max_gain),
                    fmt_num(bank.max_loss)
                ));
            }
            out
        }
        Format::Object => format!(
            "{}\n",
            serde_json::to_string_pretty(verdict).expect("json")
        ),
    }
}

fn render_search(result: &debtswap::swap::SearchResult, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = format!(
                "candidates,{}\ntruncated,{}\n\nclass,debtor1,creditor1,debtor2,creditor2,weight\n",
                result.candidates, result.truncated
            );
            for (spec, verdict) in &result.hits {
                out.push_str(&format!(
                    "{:?},{},{},{},{},{}\n",
                    verdict.class,
                    spec.debtor1,
                    spec.creditor1,
                    spec.debtor2,
                    spec.creditor2,
                    fmt_num(spec.weight)
                ));
            }
            out
        }
        Format::Object => {
            let hits: Vec<serde_json::Value> = result
                .hits
                .iter()
                .map(|(spec, verdict)| {
                    serde_json::json!({"spec": spec, "class": verdict.class})
                })
                .collect();
            let value = serde_json::json!({
                "candidates": result.candidates,
                "truncated": result.truncated,
                "hits": hits,
            });
            format!("{}\n", serde_json::to_string_pretty(&value).expect("json"))
        }
    }
}
