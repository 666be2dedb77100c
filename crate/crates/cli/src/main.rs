//! `surrogate-id`: causal effect identification from observational data and
//! surrogate experiments.
//!
//! Exit codes: 0 success, 1 input error, 2 not determined / structural
//! failure, 3 search bounds exhausted.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use surrogate_core::formula::{expr_to_json, parse_atom};
use surrogate_core::oracle::{
    docalc_search, verify, Derivation, Exhaustion, Move, SearchBounds, SearchOutcome, VerifyReport,
};
use surrogate_core::simstudy::{run_study, StudyParams};
use surrogate_core::transport::TrsoOutcome;
use surrogate_core::{
    identify_plain, information_set, render, surrogate_pipeline, validate_query, Atom, Expr, InfoSet, SemiMarkovGraph,
    Style, SurrogateOutcome, SurrogateQuery, TrsoFailure, VertexSet,
};

#[derive(Parser)]
#[command(name = "surrogate-id", version, about = "Identify causal effects from observations and surrogate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify P(y | do(x)) from the observational distribution alone.
    Identify {
        /// Graph file in the edge-list DSL.
        graph: PathBuf,
        /// Treatment variables, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<String>,
        /// Outcome variables, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Identify a surrogate outcome query through its transport formulation.
    Surrogate {
        graph: PathBuf,
        /// Query JSON: {"x": [..], "y": [..], "surrogates": [{"z": [..], "w": [..]}]}.
        query: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Print the recursion trace (and the derivation when `--search` is used).
        #[arg(long)]
        trace: bool,
        /// Check the formula numerically on this many random models.
        #[arg(long, value_name = "N")]
        verify: Option<usize>,
        /// Fall back to the derivation search when the recursion fails.
        #[arg(long)]
        search: bool,
        #[command(flatten)]
        bounds: BoundsArgs,
    },
    /// Search for a do-calculus derivation of a term.
    Search {
        graph: PathBuf,
        /// Target term, e.g. "P(y|do(x))".
        #[arg(long)]
        target: String,
        /// An available distribution, e.g. "P(x,y,w|do(z))"; repeatable.
        #[arg(long)]
        info: Vec<String>,
        /// Take the available distributions from a surrogate query instead.
        #[arg(long, conflicts_with = "info")]
        query: Option<PathBuf>,
        /// With `--query`: leave out the observational distribution.
        #[arg(long, requires = "query")]
        no_observational: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[command(flatten)]
        bounds: BoundsArgs,
    },
    /// Run the random-instance coverage study.
    Simulate {
        /// Number of instances.
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Master seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        vertices: usize,
        #[arg(long, default_value_t = 0.5)]
        p_dir: f64,
        #[arg(long, default_value_t = 0.25)]
        p_bi: f64,
        #[arg(long, default_value_t = 2)]
        max_pairs: usize,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-instance JSON-lines log here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args, Clone, Copy)]
struct BoundsArgs {
    #[arg(long, default_value_t = SearchBounds::default().max_depth)]
    max_depth: usize,
    #[arg(long, default_value_t = SearchBounds::default().max_terms)]
    max_terms: usize,
    #[arg(long, default_value_t = SearchBounds::default().max_queue)]
    max_queue: usize,
}

impl From<BoundsArgs> for SearchBounds {
    fn from(b: BoundsArgs) -> Self {
        SearchBounds { max_depth: b.max_depth, max_terms: b.max_terms, max_queue: b.max_queue }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Latex,
    Causaleffect,
    Json,
}

impl Format {
    fn style(self) -> Style {
        match self {
            Format::Latex => Style::Latex,
            Format::Causaleffect => Style::CausalEffect,
            Format::Text | Format::Json => Style::Text,
        }
    }
}

/// How a command ended, mapped onto the exit-code contract.
enum Outcome {
    Success,
    NotDetermined,
    Exhausted,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotDetermined) => ExitCode::from(2),
        Ok(Outcome::Exhausted) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Identify { graph, x, y, format } => identify(&graph, &x, &y, format),
        Command::Surrogate { graph, query, format, trace, verify, search, bounds } => {
            surrogate(&graph, &query, format, trace, verify, search.then(|| bounds.into()))
        }
        Command::Search { graph, target, info, query, no_observational, format, bounds } => {
            let g = load_graph(&graph)?;
            let info = match query {
                Some(path) => {
                    let q = load_query(&g, &path)?;
                    let mut info = information_set(&q)?;
                    if no_observational {
                        info.members.remove(0);
                    }
                    info
                }
                None => InfoSet {
                    members: info.iter().map(|t| parse_term(&g, t)).collect::<anyhow::Result<_>>()?,
                },
            };
            search(&g, &parse_term(&g, &target)?, &info, bounds.into(), format)
        }
        Command::Simulate { n, seed, vertices, p_dir, p_bi, max_pairs, out, log, format } => {
            let params = StudyParams { n_vertices: vertices, p_dir, p_bi, max_pairs, ..StudyParams::default() };
            simulate(n, seed, &params, out.as_deref(), log.as_deref(), format)
        }
    }
}

fn load_graph(path: &Path) -> anyhow::Result<SemiMarkovGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    SemiMarkovGraph::parse(&text).with_context(|| format!("{}", path.display()))
}

fn load_query(g: &SemiMarkovGraph, path: &Path) -> anyhow::Result<SurrogateQuery> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let q = SurrogateQuery::from_json(g.clone(), &text).with_context(|| format!("{}", path.display()))?;
    let violations = validate_query(&q);
    if !violations.is_empty() {
        let lines: Vec<String> = violations
            .iter()
            .map(|v| match v.pair {
                Some(i) => format!("  pair {i}: {}", v.message),
                None => format!("  query: {}", v.message),
            })
            .collect();
        bail!("invalid surrogate query:\n{}", lines.join("\n"));
    }
    Ok(q)
}

fn parse_term(g: &SemiMarkovGraph, text: &str) -> anyhow::Result<Atom> {
    parse_atom(text, g).with_context(|| format!("cannot parse term `{text}`"))
}

fn names(g: &SemiMarkovGraph, s: VertexSet) -> String {
    g.order().sorted(s).into_iter().map(|v| g.name(v)).collect::<Vec<_>>().join(",")
}

fn failure_text(g: &SemiMarkovGraph, f: &TrsoFailure) -> String {
    format!("line {}, witness {{{}}}", f.line, names(g, f.witness))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn identify(path: &Path, x: &[String], y: &[String], format: Format) -> anyhow::Result<Outcome> {
    let g = load_graph(path)?;
    let (xs, ys) = (g.set_of(x)?, g.set_of(y)?);
    if xs.is_empty() || ys.is_empty() || !xs.is_disjoint(ys) {
        bail!("x and y must be nonempty and disjoint");
    }
    let outcome = identify_plain(&g, xs, ys)?;
    let query = json!({ "x": g.names_of(xs), "y": g.names_of(ys) });
    match outcome {
        TrsoOutcome::Identified(e) => {
            if format == Format::Json {
                print_json(&json!({
                    "query": query,
                    "verdict": "identified",
                    "formula": render(&e, &g, Style::Text),
                    "expr": expr_to_json(&e, &g),
                }));
            } else {
                println!("{}", render(&e, &g, format.style()));
            }
            Ok(Outcome::Success)
        }
        TrsoOutcome::Failed(f) => {
            if format == Format::Json {
                print_json(&json!({
                    "query": query,
                    "verdict": "not identifiable",
                    "failure": { "line": f.line, "witness": g.names_of(f.witness) },
                }));
            } else {
                println!("NOT IDENTIFIABLE ({})", failure_text(&g, &f));
            }
            Ok(Outcome::NotDetermined)
        }
    }
}

fn report_json(r: &VerifyReport) -> Value {
    json!({
        "n_models": r.n_models,
        "max_abs_err": r.max_abs_err,
        "pass": r.pass,
        "zero_denominators": r.zero_denominators,
    })
}

fn surrogate(
    graph: &Path,
    query: &Path,
    format: Format,
    trace: bool,
    n_verify: Option<usize>,
    fallback: Option<SearchBounds>,
) -> anyhow::Result<Outcome> {
    let g = load_graph(graph)?;
    let q = load_query(&g, query)?;
    let report = surrogate_pipeline(&q, trace)?;
    let trace_lines: Vec<String> = report.trace.iter().map(|s| s.describe(&g)).collect();

    let (formula, method, derivation, failure): (Option<Expr>, &str, Option<Derivation>, Option<TrsoFailure>) =
        match &report.outcome {
            SurrogateOutcome::Identified(e) => (Some(e.clone()), "trso", None, None),
            SurrogateOutcome::NotDetermined(f) => match fallback {
                Some(bounds) => {
                    let target = Atom::new(0, q.y, q.x, VertexSet::EMPTY);
                    match docalc_search(&g, &target, &report.info, bounds) {
                        SearchOutcome::Found(d) => (Some(d.result.clone()), "search", Some(d), Some(*f)),
                        SearchOutcome::NotFound { .. } => (None, "search", None, Some(*f)),
                    }
                }
                None => (None, "trso", None, Some(*f)),
            },
        };
    let verification = match (&formula, n_verify) {
        (Some(e), Some(n)) => Some(verify(&g, q.x, q.y, &report.info, e, n, 1e-9)?),
        _ => None,
    };

    if format == Format::Json {
        let mut out = json!({
            "query": q.to_json(),
            "verdict": if formula.is_some() { "identified" } else { "not determined" },
            "method": method,
        });
        if let Some(e) = &formula {
            out["formula"] = json!(render(e, &g, Style::Text));
            out["expr"] = expr_to_json(e, &g);
        }
        if let Some(f) = &failure {
            out["trso_failure"] = json!({ "line": f.line, "witness": g.names_of(f.witness) });
        }
        if trace {
            out["trace"] = json!(trace_lines);
            if let Some(d) = &derivation {
                out["derivation"] = d.to_json(&g);
            }
        }
        if let Some(r) = &verification {
            out["verification"] = report_json(r);
        }
        print_json(&out);
    } else {
        match (&formula, &failure) {
            (Some(e), _) => println!("{}", render(e, &g, format.style())),
            (None, Some(f)) => println!("NOT DETERMINED by TRSO ({})", failure_text(&g, f)),
            (None, None) => unreachable!("a formula or a failure is always present"),
        }
        if trace {
            println!("\ntrace:");
            for line in &trace_lines {
                println!("  {line}");
            }
            if let Some(d) = &derivation {
                println!("\nderivation:");
                print!("{}", step_table(&g, d, format.style()));
            }
        }
        if let Some(r) = &verification {
            println!(
                "\nverification: {} ({} models, max abs error {:.3e})",
                if r.pass { "PASS" } else { "FAIL" },
                r.n_models,
                r.max_abs_err
            );
        }
    }
    Ok(match (&formula, &verification) {
        (Some(_), Some(r)) if !r.pass => Outcome::NotDetermined,
        (Some(_), _) => Outcome::Success,
        (None, _) => Outcome::NotDetermined,
    })
}

fn set_text(g: &SemiMarkovGraph, s: VertexSet) -> String {
    match s.len() {
        0 => "∅".to_string(),
        1 => names(g, s),
        _ => format!("{{{}}}", names(g, s)),
    }
}

/// The derivation as a table of `i`, `p_i`, `R_i`.
fn step_table(g: &SemiMarkovGraph, d: &Derivation, style: Style) -> String {
    let mut rows = vec![(String::new(), render(&Expr::atom(d.target.clone()), g, style), String::new())];
    for (i, s) in d.steps.iter().enumerate() {
        let r = match &s.mv {
            Move::Rule { rule, y, z, x, w, .. } => format!(
                "({}, {}, {}, {}, {})",
                set_text(g, *y),
                set_text(g, *z),
                set_text(g, *x),
                set_text(g, *w),
                rule.number()
            ),
            Move::Marginalize { .. } => "m".to_string(),
            Move::Condition { .. } => "c".to_string(),
            Move::ChainSplit { .. } => "r".to_string(),
        };
        rows.push(((i + 1).to_string(), render(&s.result, g, style), r));
    }
    rows[0].0 = "0".to_string();
    let width = rows.iter().map(|r| r.1.chars().count()).max().unwrap_or(0);
    let mut out = format!("{:>3}  {:<width$}  R_i\n", "i", "p_i");
    for (i, p, r) in rows {
        out.push_str(&format!("{i:>3}  {p:<width$}  {r}\n"));
    }
    out
}

fn search(g: &SemiMarkovGraph, target: &Atom, info: &InfoSet, bounds: SearchBounds, format: Format) -> anyhow::Result<Outcome> {
    if info.members.is_empty() {
        bail!("no available distributions given");
    }
    match docalc_search(g, target, info, bounds) {
        SearchOutcome::Found(d) => {
            if format == Format::Json {
                print_json(&d.to_json(g));
            } else {
                print!("{}", step_table(g, &d, format.style()));
            }
            Ok(Outcome::Success)
        }
        SearchOutcome::NotFound { reason, terms_explored } => {
            let why = match reason {
                Exhaustion::Space => "no derivation exists in the search space",
                Exhaustion::Queue => "term limit reached",
                Exhaustion::Depth => "every derivation found is longer than the depth bound",
                Exhaustion::Terms => "the derived expression exceeds the term bound",
            };
            if format == Format::Json {
                print_json(&json!({ "found": false, "reason": why, "terms_explored": terms_explored }));
            } else {
                println!("NOT FOUND: {why} ({terms_explored} terms explored)");
            }
            Ok(if reason == Exhaustion::Space { Outcome::NotDetermined } else { Outcome::Exhausted })
        }
    }
}

fn simulate(
    n: usize,
    seed: u64,
    params: &StudyParams,
    out: Option<&Path>,
    log: Option<&Path>,
    format: Format,
) -> anyhow::Result<Outcome> {
    if let Ok(threads) = std::env::var("SURROGATE_ID_THREADS") {
        let threads: usize = threads.parse().map_err(|_| anyhow!("SURROGATE_ID_THREADS must be a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let report = run_study(n, params, seed).context("study aborted")?;
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report.to_json())?;
        fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = log {
        fs::write(path, report.instance_log()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if format == Format::Json {
        print_json(&report.to_json());
    } else {
        print!("{}", report.summary());
    }
    Ok(Outcome::Success)
}
