//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a time or size
//! limit was hit.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bdd::Budget;
use crate::benchgen::{self, BenchSpec, Family};
use crate::error::{Error, Result};
use crate::grounder::{format_ground, ground, GroundProgram};
use crate::infer::{self, InferOptions, InferStats, InferenceResult, Task};
use crate::model::{fmt_prob, Assignment, Literal, Program};
use crate::oracle::{Oracle, DEFAULT_WORLD_CAP};
use crate::par::ExecMode;
use crate::parser::parse_program_with_diagnostics;

#[derive(Debug, Parser)]
#[command(name = "lpadc", version, about = "Exact inference for logic programs with annotated disjunctions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Marginal probability of query atoms given the evidence
    Prob(ProbArgs),
    /// Most probable world entailing the evidence
    Mpe(InputArgs),
    /// Most probable assignment of the query clauses given the evidence
    Map(MapArgs),
    /// Answer by enumerating worlds
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run generated benchmarks and write CSV rows
    Bench(BenchArgs),
    /// Write the diagram of a query or of the evidence in DOT format
    Dot(DotArgs),
    /// Print the ground program
    Ground(GroundArgs),
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    Prob(OracleProbArgs),
    Mpe(OracleArgs),
    Map(OracleMapArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Program file
    pub file: PathBuf,
    /// Extra evidence literal, e.g. `a` or `\+ a`; repeatable
    #[arg(long = "evidence", value_name = "LITERAL")]
    pub evidence: Vec<String>,
    /// Divide the value by the probability of the evidence
    #[arg(long)]
    pub normalize: bool,
    /// Print the result as one JSON object
    #[arg(long)]
    pub json: bool,
    /// Write the final diagram to FILE
    #[arg(long, value_name = "FILE")]
    pub dot: Option<PathBuf>,
    /// Print statistics to stderr
    #[arg(long)]
    pub stats: bool,
    /// Time limit in seconds
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<f64>,
    /// Maximum number of diagram nodes
    #[arg(long = "node-cap", value_name = "N")]
    pub node_cap: Option<usize>,
    /// Write the ground program to FILE
    #[arg(long = "dump-ground", value_name = "FILE")]
    pub dump_ground: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Query atom; repeatable, defaults to the `query/1` directives
    #[arg(long = "query", value_name = "ATOM")]
    pub query: Vec<String>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated clause numbers to query instead of the `map_query`
    /// clauses
    #[arg(long, value_delimiter = ',', value_name = "N,..")]
    pub clauses: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub file: PathBuf,
    #[arg(long = "evidence", value_name = "LITERAL")]
    pub evidence: Vec<String>,
    #[arg(long)]
    pub normalize: bool,
    /// Print the result as one JSON object
    #[arg(long)]
    pub json: bool,
    /// Maximum number of worlds
    #[arg(long, default_value_t = DEFAULT_WORLD_CAP as u64)]
    pub cap: u64,
}

#[derive(Debug, Args)]
pub struct OracleProbArgs {
    #[command(flatten)]
    pub common: OracleArgs,
    #[arg(long = "query", value_name = "ATOM")]
    pub query: Vec<String>,
}

#[derive(Debug, Args)]
pub struct OracleMapArgs {
    #[command(flatten)]
    pub common: OracleArgs,
    #[arg(long, value_delimiter = ',', value_name = "N,..")]
    pub clauses: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// gh, gnb, blood or graph
    #[arg(long, default_value = "graph")]
    pub family: Family,
    /// Comma-separated problem sizes
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub sizes: Vec<usize>,
    /// Number of seeds, starting at `--first-seed`
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long = "first-seed", default_value_t = 0)]
    pub first_seed: u64,
    /// prob, mpe or map
    #[arg(long, default_value = "mpe")]
    pub task: String,
    /// Queried fractions of the choice variables for `map`
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub fractions: Vec<f64>,
    /// Per-run time limit in seconds
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    /// Per-run node cap; exceeding it records `memcap`
    #[arg(long = "node-cap")]
    pub node_cap: Option<usize>,
    /// Run one benchmark at a time
    #[arg(long)]
    pub sequential: bool,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DotArgs {
    pub file: PathBuf,
    /// Atom whose diagram is drawn; the evidence when absent
    #[arg(long, value_name = "ATOM")]
    pub query: Option<String>,
    #[arg(long = "evidence", value_name = "LITERAL")]
    pub evidence: Vec<String>,
    /// Write the DOT text here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    pub file: PathBuf,
    /// Write the ground program here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command. Returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_resource_limit() {
                2
            } else {
                1
            }
        }
    }
}

fn read_program(file: &Path, extra_evidence: &[String]) -> Result<(Program, Vec<String>)> {
    let text = std::fs::read_to_string(file)?;
    let parsed = parse_program_with_diagnostics(&text, &file.display().to_string())?;
    let mut program = parsed.program;
    let mut warnings: Vec<String> = parsed.diagnostics.iter().map(|d| d.to_string()).collect();
    for lit in extra_evidence {
        let l = parse_literal(lit)?;
        if program.evidence.contains(&l) {
            warnings.push(format!("duplicate evidence({l}) ignored"));
        } else {
            program.evidence.push(l);
        }
    }
    Ok((program, warnings))
}

fn parse_literal(text: &str) -> Result<Literal> {
    let p = parse_program_with_diagnostics(&format!("evidence({text})."), "<evidence>")?;
    p.program
        .evidence
        .into_iter()
        .next()
        .ok_or_else(|| Error::Internal(format!("no literal in {text}")))
}

fn parse_atom(text: &str) -> Result<crate::model::Atom> {
    let p = parse_program_with_diagnostics(&format!("query({text})."), "<query>")?;
    p.program
        .queries
        .into_iter()
        .next()
        .ok_or_else(|| Error::Internal(format!("no atom in {text}")))
}

fn load(input: &InputArgs, err: &mut dyn Write) -> Result<GroundProgram> {
    let (program, warnings) = read_program(&input.file, &input.evidence)?;
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let gp = ground(&program)?;
    if let Some(path) = &input.dump_ground {
        std::fs::write(path, format_ground(&gp))?;
    }
    Ok(gp)
}

fn options(input: &InputArgs) -> InferOptions {
    InferOptions {
        normalize: input.normalize,
        budget: Budget {
            deadline: input
                .timeout
                .map(|s| Instant::now() + Duration::from_secs_f64(s.max(0.0))),
            node_limit: input.node_cap,
        },
        ..Default::default()
    }
}

/// Choice variables of the clauses numbered `clauses`, or the `map_query`
/// ones.
fn query_vars(gp: &GroundProgram, clauses: &Option<Vec<usize>>) -> Vec<usize> {
    match clauses {
        Some(list) => (0..gp.choice_vars.len())
            .filter(|&i| list.contains(&gp.choice_vars[i].rule_number))
            .collect(),
        None => gp.query_vars(),
    }
}

fn emit(results: &[InferenceResult], json: bool, stats: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    for r in results {
        if json {
            writeln!(out, "{}", r.to_json())?;
        } else {
            write!(out, "{}", r.to_text())?;
        }
        if stats {
            writeln!(err, "{}", format_stats(&r.stats))?;
        }
    }
    Ok(())
}

fn format_stats(s: &InferStats) -> String {
    format!(
        "choice variables: {}, boolean variables: {}, diagram nodes: {}, peak nodes: {}, \
         cache hits: {}/{}, swaps: {}, fixpoint iterations: {}, time: {:.3} ms",
        s.choice_vars,
        s.bool_vars,
        s.bdd_nodes,
        s.peak_nodes,
        s.cache_hits,
        s.cache_lookups,
        s.swaps,
        s.fixpoint_iterations,
        s.time_ms
    )
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Prob(args) => {
            let gp = load(&args.input, err)?;
            let queries = if args.query.is_empty() {
                gp.queries.clone()
            } else {
                args.query.iter().map(|q| parse_atom(q)).collect::<Result<_>>()?
            };
            if queries.is_empty() {
                return Err(Error::Invalid(vec![crate::model::Diagnostic {
                    clause: None,
                    message: "no query atom: pass --query or add a query/1 directive".into(),
                }]));
            }
            let opts = options(&args.input);
            let mut results = Vec::new();
            for q in &queries {
                results.push(infer::marginal(&gp, q, &gp.evidence, &opts)?);
            }
            if let Some(path) = &args.input.dot {
                let lits = vec![Literal::pos(queries[0].clone())];
                let (cq, root) = infer::compile_order(&gp, &lits, &opts)?;
                std::fs::write(path, cq.manager.to_dot(root))?;
            }
            emit(&results, args.input.json, args.input.stats, out, err)
        }
        Command::Mpe(input) => {
            let gp = load(&input, err)?;
            let opts = options(&input);
            let r = infer::mpe(&gp, &gp.evidence, &opts)?;
            if let Some(path) = &input.dot {
                let all: Vec<usize> = (0..gp.choice_vars.len()).collect();
                let (cq, root) = infer::compile_map(&gp, &gp.evidence, &all, &opts)?;
                std::fs::write(path, cq.manager.to_dot(root))?;
            }
            emit(&[r], input.json, input.stats, out, err)
        }
        Command::Map(args) => {
            let gp = load(&args.input, err)?;
            let opts = options(&args.input);
            let q = query_vars(&gp, &args.clauses);
            let r = infer::map(&gp, &gp.evidence, &q, &opts)?;
            if let Some(path) = &args.input.dot {
                let (cq, root) = infer::compile_map(&gp, &gp.evidence, &q, &opts)?;
                std::fs::write(path, cq.manager.to_dot(root))?;
            }
            emit(&[r], args.input.json, args.input.stats, out, err)
        }
        Command::Oracle(cmd) => run_oracle(cmd, out, err),
        Command::Bench(args) => run_bench_cmd(args, out),
        Command::Dot(args) => {
            let (program, _) = read_program(&args.file, &args.evidence)?;
            let gp = ground(&program)?;
            let lits = match &args.query {
                Some(q) => vec![Literal::pos(parse_atom(q)?)],
                None => gp.evidence.clone(),
            };
            let (cq, root) = infer::compile_order(&gp, &lits, &InferOptions::default())?;
            write_or_print(args.out.as_deref(), &cq.manager.to_dot(root), out)
        }
        Command::Ground(args) => {
            let (program, _) = read_program(&args.file, &[])?;
            let gp = ground(&program)?;
            write_or_print(args.out.as_deref(), &format_ground(&gp), out)
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleStats {
    worlds: u128,
}

#[derive(Serialize)]
struct OracleResult {
    task: Task,
    value: f64,
    normalized: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    assignment: Option<Vec<crate::model::Rule4>>,
    stats: OracleStats,
}

fn run_oracle(cmd: OracleCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let common = match &cmd {
        OracleCommand::Prob(a) => &a.common,
        OracleCommand::Mpe(a) => a,
        OracleCommand::Map(a) => &a.common,
    };
    let (program, warnings) = read_program(&common.file, &common.evidence)?;
    for w in warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let gp = ground(&program)?;
    let oracle = Oracle::new(&gp).with_cap(common.cap as u128);
    let stats = || OracleStats {
        worlds: gp.num_worlds(),
    };
    let mut results = Vec::new();
    match &cmd {
        OracleCommand::Prob(a) => {
            let queries = if a.query.is_empty() {
                gp.queries.clone()
            } else {
                a.query.iter().map(|q| parse_atom(q)).collect::<Result<_>>()?
            };
            for q in queries {
                let value = oracle.cond_prob(&[Literal::pos(q)], &gp.evidence)?;
                results.push(OracleResult {
                    task: Task::Prob,
                    value,
                    normalized: !gp.evidence.is_empty(),
                    assignment: None,
                    stats: stats(),
                });
            }
        }
        OracleCommand::Mpe(_) | OracleCommand::Map(_) => {
            let (task, q) = match &cmd {
                OracleCommand::Map(a) => (Task::Map, query_vars(&gp, &a.clauses)),
                _ => (Task::Mpe, (0..gp.choice_vars.len()).collect()),
            };
            if q.is_empty() {
                return Err(Error::NoQueryVariables);
            }
            let sol = oracle.map(&gp.evidence, &q)?;
            let entries = q.iter().copied().zip(sol.argmax[0].iter().copied()).collect();
            let mut value = sol.value;
            if common.normalize {
                value /= oracle.prob(&gp.evidence)?;
            }
            results.push(OracleResult {
                task,
                value,
                normalized: common.normalize,
                assignment: Some(Assignment { entries }.to_rule4(&gp.choice_vars)),
                stats: stats(),
            });
        }
    }
    for r in results {
        if common.json {
            writeln!(out, "{}", serde_json::to_string(&r).expect("result serializes"))?;
        } else {
            writeln!(out, "value: {}", fmt_prob(r.value))?;
            for rule in r.assignment.iter().flatten() {
                writeln!(out, "{rule}")?;
            }
        }
    }
    Ok(())
}

fn run_bench_cmd(args: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let task = match args.task.as_str() {
        "prob" => Task::Prob,
        "mpe" => Task::Mpe,
        "map" => Task::Map,
        t => {
            return Err(Error::Invalid(vec![crate::model::Diagnostic {
                clause: None,
                message: format!("unknown task {t}"),
            }]))
        }
    };
    let fractions: Vec<Option<f64>> = if task == Task::Map {
        args.fractions.iter().map(|&f| Some(f)).collect()
    } else {
        vec![None]
    };
    let mut specs = Vec::new();
    for &size in &args.sizes {
        for &fraction in &fractions {
            for seed in args.first_seed..args.first_seed + args.seeds {
                let mut spec = BenchSpec::new(args.family, size, seed, task);
                spec.map_fraction = fraction;
                spec.timeout = Duration::from_secs_f64(args.timeout.max(0.0));
                spec.node_cap = args.node_cap;
                specs.push(spec);
            }
        }
    }
    let exec = if args.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    };
    let rows = benchgen::run_batch(&specs, exec);
    write_or_print(args.out.as_deref(), &benchgen::to_csv(&rows), out)
}
