//! Benchmark program generators, a random program generator for oracle
//! cross-checks, and a timing harness producing CSV rows.
//!
//! Program shapes:
//!
//! * `graph(n)`: Barabási–Albert graph with two initial unconnected nodes,
//!   every later node linking to two distinct earlier nodes chosen with
//!   probability proportional to their degree. Edges point from the older
//!   to the newer node, so `path(0, n-1)` is derivable in some world.
//! * `gh(s)`: for `k = 2..=s+1` the clause
//!   `a0:1/k; ..; a(k-1):1/k :- a(k).` and the fact `a(s+1).`
//! * `gnb(s)`: `a0:0.5 :- \+a1, .., \+a(s).` and facts `ai:0.5.`
//! * `blood(s)`: a binary ancestor tree of depth `s` rooted at person `p`;
//!   founders draw both chromosomes from the allele prior, every other
//!   person inherits each chromosome from a random chromosome of the
//!   corresponding parent.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bdd::Budget;
use crate::error::{Error, Result};
use crate::grounder::ground;
use crate::infer::{self, InferOptions, Task};
use crate::model::Literal;
use crate::par::ExecMode;
use crate::parser::parse_program;

/// Source text of a Barabási–Albert graph program with `n >= 3` nodes.
pub fn gen_graph(n: usize, seed: u64) -> String {
    assert!(n >= 3, "graph needs at least three nodes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0usize; n];
    let mut out = String::new();
    for v in 2..n {
        let mut targets: Vec<usize> = Vec::with_capacity(2);
        while targets.len() < 2 {
            let candidates: Vec<usize> = (0..v).filter(|u| !targets.contains(u)).collect();
            let total: usize = candidates.iter().map(|&u| degree[u]).sum();
            let pick = if total == 0 {
                *candidates.choose(&mut rng).unwrap()
            } else {
                let mut r = rng.gen_range(0..total);
                let mut chosen = candidates[candidates.len() - 1];
                for &u in &candidates {
                    if r < degree[u] {
                        chosen = u;
                        break;
                    }
                    r -= degree[u];
                }
                chosen
            };
            targets.push(pick);
        }
        targets.sort_unstable();
        for u in targets {
            degree[u] += 1;
            degree[v] += 1;
            let p = rng.gen_range(1..1000) as f64 / 1000.0;
            writeln!(out, "edge({u},{v}):{p}.").unwrap();
        }
    }
    out.push_str("path(X,X).\n");
    out.push_str("path(X,Y) :- path(X,Z), edge(Z,Y).\n");
    writeln!(out, "evidence(path(0,{})).", n - 1).unwrap();
    out
}

pub fn gen_gh(size: usize) -> String {
    assert!(size >= 1);
    let mut out = String::new();
    for k in 2..=size + 1 {
        let p = 1.0 / k as f64;
        let heads: Vec<String> = (0..k).map(|i| format!("a{i}:{p}")).collect();
        writeln!(out, "{} :- a{k}.", heads.join("; ")).unwrap();
    }
    writeln!(out, "a{}.", size + 1).unwrap();
    out.push_str("evidence(a0).\n");
    out
}

pub fn gen_gnb(size: usize) -> String {
    assert!(size >= 1);
    let body: Vec<String> = (1..=size).map(|i| format!("\\+a{i}")).collect();
    let mut out = format!("a0:0.5 :- {}.\n", body.join(", "));
    for i in 1..=size {
        writeln!(out, "a{i}:0.5.").unwrap();
    }
    out.push_str("evidence(a0).\n");
    out
}

pub fn gen_blood(size: usize) -> String {
    assert!(size >= 1);
    let persons = (1usize << (size + 1)) - 1;
    let name = |i: usize| if i == 0 { "p".to_string() } else { format!("n{i}") };
    let mut out = String::new();
    for i in 0..persons {
        let (m, f) = (2 * i + 1, 2 * i + 2);
        if m < persons {
            writeln!(out, "mother({},{}).", name(m), name(i)).unwrap();
            writeln!(out, "father({},{}).", name(f), name(i)).unwrap();
        } else {
            writeln!(out, "founder({}).", name(i)).unwrap();
        }
    }
    out.push_str(
        "mc(X,a):0.3; mc(X,b):0.15; mc(X,o):0.55 :- founder(X).\n\
         pc(X,a):0.3; pc(X,b):0.15; pc(X,o):0.55 :- founder(X).\n\
         mc_first(C):0.5 :- mother(M,C).\n\
         mc(C,A) :- mother(M,C), mc_first(C), mc(M,A).\n\
         mc(C,A) :- mother(M,C), \\+ mc_first(C), pc(M,A).\n\
         pc_first(C):0.5 :- father(F,C).\n\
         pc(C,A) :- father(F,C), pc_first(C), mc(F,A).\n\
         pc(C,A) :- father(F,C), \\+ pc_first(C), pc(F,A).\n\
         bloodtype(X,a) :- mc(X,a), pc(X,a).\n\
         bloodtype(X,a) :- mc(X,a), pc(X,o).\n\
         bloodtype(X,a) :- mc(X,o), pc(X,a).\n\
         bloodtype(X,b) :- mc(X,b), pc(X,b).\n\
         bloodtype(X,b) :- mc(X,b), pc(X,o).\n\
         bloodtype(X,b) :- mc(X,o), pc(X,b).\n\
         bloodtype(X,ab) :- mc(X,a), pc(X,b).\n\
         bloodtype(X,ab) :- mc(X,b), pc(X,a).\n\
         bloodtype(X,o) :- mc(X,o), pc(X,o).\n\
         evidence(bloodtype(p,a)).\n",
    );
    out
}

/// Shape limits of [`random_program`].
#[derive(Clone, Copy, Debug)]
pub struct RandomConfig {
    pub max_choice_vars: usize,
    /// Values per choice variable, the null head included.
    pub max_values: usize,
    pub recursion: bool,
    pub negation: bool,
}

impl Default for RandomConfig {
    fn default() -> Self {
        RandomConfig {
            max_choice_vars: 6,
            max_values: 3,
            recursion: true,
            negation: true,
        }
    }
}

/// Splits one thousand thousandths into `parts` positive shares.
fn split_mass(rng: &mut ChaCha8Rng, parts: usize) -> Vec<u32> {
    let mut cuts: Vec<u32> = Vec::with_capacity(parts + 1);
    while cuts.len() < parts - 1 {
        let c = rng.gen_range(1..1000);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.push(0);
    cuts.push(1000);
    cuts.sort_unstable();
    cuts.windows(2).map(|w| w[1] - w[0]).collect()
}

/// A random propositional program of at most two strata: probabilistic and
/// deterministic clauses over the atoms `a0..a3, b0..b2` with positive
/// bodies (optionally positively recursive), and clauses for `c0..c2`
/// whose bodies may negate lower atoms. Includes one `query/1` directive,
/// up to two evidence literals and `map_query` on a random nonempty subset
/// of the probabilistic clauses.
pub fn random_program(seed: u64, config: &RandomConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lower = ["a0", "a1", "a2", "a3", "b0", "b1", "b2"];
    let upper = ["c0", "c1", "c2"];
    let n_cv = rng.gen_range(1..=config.max_choice_vars);
    let upper_probabilistic = if config.negation { rng.gen_range(0..=n_cv.min(2)) } else { 0 };
    let mut clauses: Vec<(bool, String)> = Vec::new();

    let random_heads = |rng: &mut ChaCha8Rng, pool: &[&str]| -> String {
        let n_values = rng.gen_range(2..=config.max_values);
        let with_null = rng.gen_bool(0.5);
        let n_heads = if with_null { n_values - 1 } else { n_values };
        let mut atoms: Vec<&str> = pool.to_vec();
        atoms.shuffle(rng);
        let shares = split_mass(rng, n_values);
        atoms
            .iter()
            .take(n_heads)
            .zip(&shares)
            .map(|(a, &s)| format!("{a}:{}", s as f64 / 1000.0))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let positive_body = |rng: &mut ChaCha8Rng, pool: &[&str], max: usize| -> Vec<String> {
        let k = rng.gen_range(0..=max);
        (0..k).map(|_| pool[rng.gen_range(0..pool.len())].to_string()).collect()
    };

    for _ in 0..n_cv - upper_probabilistic {
        let heads = random_heads(&mut rng, &lower);
        let body = positive_body(&mut rng, &lower, 1);
        clauses.push((true, clause_text(&heads, &body)));
    }
    for _ in 0..rng.gen_range(0..=2) {
        let head = lower[rng.gen_range(0..lower.len())];
        let body = positive_body(&mut rng, &lower, 2);
        if !body.is_empty() {
            clauses.push((false, clause_text(head, &body)));
        }
    }
    if config.recursion && rng.gen_bool(0.5) {
        let x = lower[rng.gen_range(0..lower.len())];
        let y = lower[rng.gen_range(0..lower.len())];
        if x != y {
            clauses.push((false, clause_text(x, &[y.to_string()])));
            clauses.push((false, clause_text(y, &[x.to_string()])));
        }
    }
    if config.negation {
        for i in 0..upper_probabilistic + rng.gen_range(1..=2) {
            let mut body = positive_body(&mut rng, &lower, 1);
            for _ in 0..rng.gen_range(1..=2) {
                body.push(format!("\\+ {}", lower[rng.gen_range(0..lower.len())]));
            }
            if i < upper_probabilistic {
                let heads = random_heads(&mut rng, &upper);
                clauses.push((true, clause_text(&heads, &body)));
            } else {
                let head = upper[rng.gen_range(0..upper.len())];
                clauses.push((false, clause_text(head, &body)));
            }
        }
    }

    let n_prob = clauses.iter().filter(|(p, _)| *p).count();
    let mut marked = vec![false; n_prob];
    for m in marked.iter_mut() {
        *m = rng.gen_bool(0.5);
    }
    marked[rng.gen_range(0..n_prob)] = true;

    let mut out = String::new();
    let mut k = 0;
    for (probabilistic, text) in &clauses {
        if *probabilistic {
            if marked[k] {
                out.push_str("map_query ");
            }
            k += 1;
        }
        out.push_str(text);
        out.push('\n');
    }
    let all: Vec<&str> = lower.iter().chain(&upper).copied().collect();
    for _ in 0..rng.gen_range(0..=2) {
        let a = all[rng.gen_range(0..all.len())];
        if rng.gen_bool(0.7) {
            writeln!(out, "evidence({a}).").unwrap();
        } else {
            writeln!(out, "evidence({a}, false).").unwrap();
        }
    }
    writeln!(out, "query({}).", all[rng.gen_range(0..all.len())]).unwrap();
    out
}

fn clause_text(head: &str, body: &[String]) -> String {
    if body.is_empty() {
        format!("{head}.")
    } else {
        format!("{head} :- {}.", body.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gh,
    Gnb,
    Blood,
    Graph,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Gh => "gh",
            Family::Gnb => "gnb",
            Family::Blood => "blood",
            Family::Graph => "graph",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gh" => Ok(Family::Gh),
            "gnb" => Ok(Family::Gnb),
            "blood" => Ok(Family::Blood),
            "graph" => Ok(Family::Graph),
            _ => Err(format!("unknown family {s}")),
        }
    }
}

impl Family {
    pub fn generate(self, size: usize, seed: u64) -> String {
        match self {
            Family::Gh => gen_gh(size),
            Family::Gnb => gen_gnb(size),
            Family::Blood => gen_blood(size),
            Family::Graph => gen_graph(size, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub family: Family,
    pub size: usize,
    pub seed: u64,
    pub task: Task,
    /// Fraction of choice variables queried; MAP only.
    pub map_fraction: Option<f64>,
    pub timeout: Duration,
    pub node_cap: Option<usize>,
}

impl BenchSpec {
    pub fn new(family: Family, size: usize, seed: u64, task: Task) -> Self {
        BenchSpec {
            family,
            size,
            seed,
            task,
            map_fraction: (task == Task::Map).then_some(0.5),
            timeout: Duration::from_secs(60),
            node_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub family: Family,
    pub size: usize,
    pub seed: u64,
    pub task: Task,
    pub fraction: Option<f64>,
    pub time_s: f64,
    pub value: Option<f64>,
    pub status: String,
}

pub const CSV_HEADER: &str = "family,size,seed,task,fraction,time_s,value,status";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{},{}",
            self.family,
            self.size,
            self.seed,
            self.task,
            self.fraction.map(|f| f.to_string()).unwrap_or_default(),
            self.time_s,
            self.value.map(|v| format!("{v:e}")).unwrap_or_default(),
            self.status
        )
    }
}

fn run_task(spec: &BenchSpec, deadline: Instant) -> Result<f64> {
    let program = parse_program(&spec.family.generate(spec.size, spec.seed))?;
    let gp = ground(&program)?;
    let opts = InferOptions {
        budget: Budget {
            deadline: Some(deadline),
            node_limit: spec.node_cap,
        },
        ..Default::default()
    };
    if Instant::now() > deadline {
        return Err(Error::Timeout);
    }
    let result = match spec.task {
        Task::Prob => {
            let target: Vec<Literal> = gp.evidence.clone();
            infer::cond_prob(&gp, &target, &[], &opts)?
        }
        Task::Mpe => infer::mpe(&gp, &gp.evidence, &opts)?,
        Task::Map => {
            let fraction = spec.map_fraction.unwrap_or(0.5);
            let k = ((fraction * gp.choice_vars.len() as f64).ceil() as usize).max(1);
            let query: Vec<usize> = (0..k.min(gp.choice_vars.len())).collect();
            infer::map(&gp, &gp.evidence, &query, &opts)?
        }
    };
    Ok(result.value)
}

/// Runs one benchmark on a fresh manager; failures end up in `status`.
pub fn run_bench(spec: &BenchSpec) -> BenchRow {
    let start = Instant::now();
    let outcome = run_task(spec, start + spec.timeout);
    let time_s = start.elapsed().as_secs_f64();
    let (value, status) = match outcome {
        Ok(v) => (Some(v), "ok".to_string()),
        Err(Error::Timeout) => (None, "timeout".to_string()),
        Err(Error::NodeLimit(_)) => (None, "memcap".to_string()),
        Err(e) => (None, format!("error: {e}").replace(',', ";")),
    };
    BenchRow {
        family: spec.family,
        size: spec.size,
        seed: spec.seed,
        task: spec.task,
        fraction: spec.map_fraction.filter(|_| spec.task == Task::Map),
        time_s,
        value,
        status,
    }
}

/// Runs `specs` with `exec` and returns rows in input order.
pub fn run_batch(specs: &[BenchSpec], exec: ExecMode) -> Vec<BenchRow> {
    exec.map(specs.len(), |i| run_bench(&specs[i]))
}

/// CSV text with header.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Number of `edge/2` facts in a program text.
pub fn count_edge_facts(src: &str) -> usize {
    src.lines().filter(|l| l.starts_with("edge(")).count()
}
