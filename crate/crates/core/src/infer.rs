//! Probability, MPE and MAP computation on compiled diagrams.

use std::time::Instant;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::bdd::{BddManager, BddRef, BddVarInfo, Budget, VarId};
use crate::compile::{encounter_order, CompileOptions, CompiledQuery, EncodingMode};
use crate::error::{Error, Result};
use crate::grounder::{AtomId, GroundProgram};
use crate::model::{Assignment, Atom, Literal, Rule4};

/// Probability of `root`: each node weighs its 1-branch by the variable's
/// weight and its 0-branch by the complement, memoized per node.
pub fn prob(m: &BddManager, root: BddRef) -> f64 {
    let mut table = FxHashMap::default();
    prob_memo(m, root, &mut table)
}

/// [`prob`] reusing a caller-owned table keyed by node.
pub fn prob_memo(m: &BddManager, root: BddRef, table: &mut FxHashMap<u32, f64>) -> f64 {
    let p = prob_node(m, root.regular(), table);
    if root.is_complemented() {
        1.0 - p
    } else {
        p
    }
}

fn prob_node(m: &BddManager, r: BddRef, table: &mut FxHashMap<u32, f64>) -> f64 {
    if r.is_constant() {
        return 1.0;
    }
    if let Some(&p) = table.get(&r.node()) {
        return p;
    }
    let (lo, hi) = m.children(r);
    let mut p0 = prob_node(m, lo.regular(), table);
    let p1 = prob_node(m, hi, table);
    if lo.is_complemented() {
        p0 = 1.0 - p0;
    }
    let pi = m.var_info(m.top_var(r).unwrap()).weight;
    let res = p1 * pi + p0 * (1.0 - pi);
    table.insert(r.node(), res);
    res
}

/// [`prob`] without memoization; exponential in the diagram depth.
pub fn prob_uncached(m: &BddManager, root: BddRef) -> f64 {
    fn go(m: &BddManager, r: BddRef) -> f64 {
        if r.is_constant() {
            return 1.0;
        }
        let (lo, hi) = m.children(r);
        let mut p0 = go(m, lo.regular());
        if lo.is_complemented() {
            p0 = 1.0 - p0;
        }
        let pi = m.var_info(m.top_var(r).unwrap()).weight;
        go(m, hi) * pi + p0 * (1.0 - pi)
    }
    let p = go(m, root.regular());
    if root.is_complemented() {
        1.0 - p
    } else {
        p
    }
}

/// Weighted model count of `root` over all variables of the manager, with
/// `weight(var)` giving the `(positive, negative)` literal weights.
pub fn weighted_count(
    m: &BddManager,
    root: BddRef,
    weight: impl Fn(&BddVarInfo) -> (f64, f64),
) -> f64 {
    let n = m.num_vars();
    // suffix[l]: count of ONE over the variables at levels l..n
    let mut suffix = vec![1.0; n + 1];
    for l in (0..n).rev() {
        let (w1, w0) = weight(m.var_info(m.var_at_level(l as u32)));
        suffix[l] = suffix[l + 1] * (w1 + w0);
    }
    let level = |r: BddRef| (m.level(r) as usize).min(n);
    // skipped levels between `from` and the top of `r`
    let gap = |from: usize, r: BddRef| -> f64 {
        let to = level(r);
        let mut f = 1.0;
        for l in from..to {
            let (w1, w0) = weight(m.var_info(m.var_at_level(l as u32)));
            f *= w1 + w0;
        }
        f
    };
    fn node(
        m: &BddManager,
        r: BddRef,
        suffix: &[f64],
        memo: &mut FxHashMap<u32, f64>,
        weight: &dyn Fn(&BddVarInfo) -> (f64, f64),
        level: &dyn Fn(BddRef) -> usize,
        gap: &dyn Fn(usize, BddRef) -> f64,
    ) -> f64 {
        // count of the regular node over levels level(r)..n
        if r.is_constant() {
            return 1.0;
        }
        if let Some(&c) = memo.get(&r.node()) {
            return c;
        }
        let l = level(r);
        let (lo, hi) = m.children(r);
        let child = |c: BddRef, memo: &mut FxHashMap<u32, f64>| {
            let v = node(m, c.regular(), suffix, memo, weight, level, gap);
            let v = if c.is_complemented() {
                suffix[level(c)] - v
            } else {
                v
            };
            gap(l + 1, c) * v
        };
        let c1 = child(hi, memo);
        let c0 = child(lo, memo);
        let (w1, w0) = weight(m.var_info(m.top_var(r).unwrap()));
        let res = w1 * c1 + w0 * c0;
        memo.insert(r.node(), res);
        res
    }
    let mut memo = FxHashMap::default();
    let v = node(m, root.regular(), &suffix, &mut memo, &weight, &level, &gap);
    let v = if root.is_complemented() {
        suffix[level(root)] - v
    } else {
        v
    };
    gap(0, root) * v
}

/// Best value below the root and the decisions taken on query variables
/// along the optimal path, `(variable, value)` top-down.
#[derive(Clone, Debug, PartialEq)]
pub struct MapOutcome {
    pub value: f64,
    pub path: Vec<(VarId, bool)>,
}

struct MapSearch<'m> {
    m: &'m BddManager,
    /// (node, parity) -> (value, took the 1-branch)
    table_map: FxHashMap<(u32, bool), (f64, bool)>,
    table_prob: FxHashMap<u32, f64>,
}

impl MapSearch<'_> {
    fn visit(&mut self, r: BddRef, comp: bool) -> f64 {
        let comp = comp ^ r.is_complemented();
        let node = r.regular();
        let is_query = self.m.top_var(node).is_some_and(|v| self.m.var_info(v).is_query);
        if !is_query {
            let p = prob_memo(self.m, node, &mut self.table_prob);
            return if comp { 1.0 - p } else { p };
        }
        if let Some(&(v, _)) = self.table_map.get(&(node.node(), comp)) {
            return v;
        }
        let (lo, hi) = self.m.children(node);
        let p0 = self.visit(lo, comp);
        let pi = self.m.var_info(self.m.top_var(node).unwrap()).weight;
        let p1 = self.visit(hi, comp) * pi;
        let entry = if p1 > p0 { (p1, true) } else { (p0, false) };
        self.table_map.insert((node.node(), comp), entry);
        entry.0
    }
}

/// Checks that every query variable sits above every other variable.
pub fn check_query_prefix(m: &BddManager) -> Result<()> {
    let mut seen_other = false;
    for &v in m.order() {
        let q = m.var_info(v).is_query;
        if q && seen_other {
            return Err(Error::Internal(format!(
                "query variable {v} below a non-query variable"
            )));
        }
        seen_other |= !q;
    }
    Ok(())
}

/// Maximizes over the query variables at the top of the order and sums out
/// the rest: a query node multiplies its 1-branch by the variable weight and
/// keeps the larger branch (the 0-branch on ties); below the query prefix
/// the probability is used.
pub fn map_int(m: &BddManager, root: BddRef) -> Result<MapOutcome> {
    check_query_prefix(m)?;
    let mut search = MapSearch {
        m,
        table_map: FxHashMap::default(),
        table_prob: FxHashMap::default(),
    };
    let value = search.visit(root, false);
    let mut path = Vec::new();
    let (mut r, mut comp) = (root, false);
    loop {
        comp ^= r.is_complemented();
        let node = r.regular();
        let Some(v) = m.top_var(node) else { break };
        if !m.var_info(v).is_query {
            break;
        }
        let (_, hi) = search.table_map[&(node.node(), comp)];
        path.push((v, hi));
        let (lo, h) = m.children(node);
        r = if hi { h } else { lo };
    }
    Ok(MapOutcome { value, path })
}

/// [`map_int`] without tables, carrying the positive query literals of the
/// best path up the recursion.
pub fn map_int_uncached(m: &BddManager, root: BddRef) -> Result<(f64, Vec<VarId>)> {
    fn go(m: &BddManager, r: BddRef, comp: bool) -> (f64, Vec<VarId>) {
        let comp = comp ^ r.is_complemented();
        let node = r.regular();
        match m.top_var(node) {
            Some(v) if m.var_info(v).is_query => {
                let (lo, hi) = m.children(node);
                let (p0, l0) = go(m, lo, comp);
                let (p1, mut l1) = go(m, hi, comp);
                let p1 = p1 * m.var_info(v).weight;
                if p1 > p0 {
                    l1.insert(0, v);
                    (p1, l1)
                } else {
                    (p0, l0)
                }
            }
            _ => {
                let p = prob_uncached(m, node);
                (if comp { 1.0 - p } else { p }, Vec::new())
            }
        }
    }
    check_query_prefix(m)?;
    Ok(go(m, root, false))
}

/// Translates the positive query literals of an optimal path into head
/// selections for `groups`, listed in the order of their top variable.
/// Groups without a positive literal take their most probable head.
pub fn decode(
    cq: &CompiledQuery<'_>,
    groups: &[usize],
    positive: &[VarId],
) -> Result<Assignment> {
    let m = &cq.manager;
    let mut chosen: FxHashMap<usize, usize> = FxHashMap::default();
    for &v in positive {
        let info = m.var_info(v);
        if !groups.contains(&info.group) {
            continue;
        }
        if chosen.insert(info.group, info.index).is_some() {
            return Err(Error::Internal(format!(
                "two values selected for choice variable {}",
                info.group
            )));
        }
    }
    let mut ordered: Vec<usize> = groups.to_vec();
    ordered.sort_by_key(|&g| {
        cq.encoding.groups[g]
            .vars
            .iter()
            .map(|&v| m.var_info(v).level)
            .min()
            .unwrap_or(u32::MAX)
    });
    let entries = ordered
        .into_iter()
        .map(|g| {
            let pos = chosen
                .get(&g)
                .copied()
                .unwrap_or_else(|| cq.gp.choice_vars[g].most_probable());
            (g, pos)
        })
        .collect();
    Ok(Assignment { entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Prob,
    Mpe,
    Map,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Prob => "prob",
            Task::Mpe => "mpe",
            Task::Map => "map",
        })
    }
}

/// Order in which choice variables receive their Boolean variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum CreationOrder {
    /// First reached by a left-to-right derivation of the targets, then the
    /// remaining ones by index.
    #[default]
    Encounter,
    Index,
    Custom(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct InferOptions {
    pub normalize: bool,
    pub creation_order: CreationOrder,
    pub budget: Budget,
    pub cache_enabled: bool,
    pub gc_threshold: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            normalize: false,
            creation_order: CreationOrder::Encounter,
            budget: Budget::default(),
            cache_enabled: true,
            gc_threshold: crate::bdd::DEFAULT_GC_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InferStats {
    pub choice_vars: usize,
    pub bool_vars: usize,
    pub bdd_nodes: usize,
    pub peak_nodes: usize,
    pub cache_lookups: u64,
    pub cache_hits: u64,
    pub swaps: u64,
    pub fixpoint_iterations: usize,
    pub time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceResult {
    pub task: Task,
    pub value: f64,
    pub normalized: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<Rule4>>,
    #[serde(skip)]
    pub selection: Option<Assignment>,
    pub stats: InferStats,
}

impl InferenceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }

    /// `value: <p>` followed by one `rule/4` line per selected head.
    pub fn to_text(&self) -> String {
        let mut out = format!("value: {}\n", crate::model::fmt_prob(self.value));
        for r in self.assignment.iter().flatten() {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

fn compile_options(gp: &GroundProgram, targets: &[AtomId], opts: &InferOptions) -> CompileOptions {
    let creation_order = match &opts.creation_order {
        CreationOrder::Index => None,
        CreationOrder::Custom(o) => Some(o.clone()),
        CreationOrder::Encounter => {
            let mut order = encounter_order(gp, targets);
            let mut seen = vec![false; gp.choice_vars.len()];
            for &cv in &order {
                seen[cv] = true;
            }
            order.extend((0..gp.choice_vars.len()).filter(|&cv| !seen[cv]));
            Some(order)
        }
    };
    CompileOptions {
        creation_order,
        budget: opts.budget,
        cache_enabled: opts.cache_enabled,
        gc_threshold: opts.gc_threshold,
    }
}

fn literal_targets(gp: &GroundProgram, lits: &[Literal]) -> Vec<AtomId> {
    lits.iter().filter_map(|l| gp.atom_id(&l.atom)).collect()
}

fn stats(cq: &CompiledQuery<'_>, root: BddRef, start: Instant) -> InferStats {
    let s = cq.manager.stats();
    InferStats {
        choice_vars: cq.gp.choice_vars.len(),
        bool_vars: cq.encoding.num_bool_vars(),
        bdd_nodes: cq.manager.node_count(root),
        peak_nodes: s.peak_nodes,
        cache_lookups: s.cache_lookups,
        cache_hits: s.cache_hits,
        swaps: s.swaps,
        fixpoint_iterations: cq.stats.fixpoint_iterations,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Compiles `literals` under the order encoding.
pub fn compile_order<'a>(
    gp: &'a GroundProgram,
    literals: &[Literal],
    opts: &InferOptions,
) -> Result<(CompiledQuery<'a>, BddRef)> {
    let targets = literal_targets(gp, literals);
    let modes = vec![EncodingMode::Order; gp.choice_vars.len()];
    let mut cq = CompiledQuery::new(gp, &modes, &compile_options(gp, &targets, opts))?;
    let root = cq.compile_literals(literals)?;
    Ok((cq, root))
}

/// Probability of the conjunction of `literals`.
pub fn literals_prob(gp: &GroundProgram, literals: &[Literal], opts: &InferOptions) -> Result<f64> {
    let (cq, root) = compile_order(gp, literals, opts)?;
    Ok(prob(&cq.manager, root))
}

/// `P(query | evidence)`. Evidence of probability zero is an error.
pub fn cond_prob(
    gp: &GroundProgram,
    query: &[Literal],
    evidence: &[Literal],
    opts: &InferOptions,
) -> Result<InferenceResult> {
    let start = Instant::now();
    let mut targets = literal_targets(gp, query);
    targets.extend(literal_targets(gp, evidence));
    let modes = vec![EncodingMode::Order; gp.choice_vars.len()];
    let mut cq = CompiledQuery::new(gp, &modes, &compile_options(gp, &targets, opts))?;
    let e = cq.compile_literals(evidence)?;
    cq.pin(e);
    let q = cq.compile_literals(query)?;
    let qe = cq.manager.try_and(q, e)?;
    let pe = prob(&cq.manager, e);
    if pe <= 0.0 {
        return Err(Error::EvidenceUnsatisfiable);
    }
    let value = if evidence.is_empty() {
        prob(&cq.manager, qe)
    } else {
        (prob(&cq.manager, qe) / pe).min(1.0)
    };
    Ok(InferenceResult {
        task: Task::Prob,
        value,
        normalized: !evidence.is_empty(),
        assignment: None,
        selection: None,
        stats: stats(&cq, qe, start),
    })
}

/// Marginal of a single ground atom.
pub fn marginal(
    gp: &GroundProgram,
    query: &Atom,
    evidence: &[Literal],
    opts: &InferOptions,
) -> Result<InferenceResult> {
    cond_prob(gp, &[Literal::pos(query.clone())], evidence, opts)
}

/// Maximizes `P(x, evidence)` over assignments `x` to `query_vars`.
pub fn map(
    gp: &GroundProgram,
    evidence: &[Literal],
    query_vars: &[usize],
    opts: &InferOptions,
) -> Result<InferenceResult> {
    map_task(gp, evidence, query_vars, opts, Task::Map)
}

/// MAP over every choice variable.
pub fn mpe(gp: &GroundProgram, evidence: &[Literal], opts: &InferOptions) -> Result<InferenceResult> {
    let all: Vec<usize> = (0..gp.choice_vars.len()).collect();
    map_task(gp, evidence, &all, opts, Task::Mpe)
}

/// The compiled diagram of a MAP problem: evidence conjoined with the
/// exactly-one constraints, query groups moved to the top.
pub fn compile_map<'a>(
    gp: &'a GroundProgram,
    evidence: &[Literal],
    query_vars: &[usize],
    opts: &InferOptions,
) -> Result<(CompiledQuery<'a>, BddRef)> {
    let mut modes = vec![EncodingMode::Order; gp.choice_vars.len()];
    for &q in query_vars {
        modes[q] = EncodingMode::OneHot;
    }
    let targets = literal_targets(gp, evidence);
    let mut cq = CompiledQuery::new(gp, &modes, &compile_options(gp, &targets, opts))?;
    let root = cq.compile_evidence(evidence, true)?;
    // only the evidence diagram is needed from here on
    cq.atom_cache.clear();
    cq.collect_garbage(&[root]);
    cq.manager.reorder_groups_front(query_vars);
    Ok((cq, root))
}

fn map_task(
    gp: &GroundProgram,
    evidence: &[Literal],
    query_vars: &[usize],
    opts: &InferOptions,
    task: Task,
) -> Result<InferenceResult> {
    if query_vars.is_empty() {
        return Err(Error::NoQueryVariables);
    }
    let start = Instant::now();
    let (cq, root) = compile_map(gp, evidence, query_vars, opts)?;
    let (value, positive) = if opts.cache_enabled {
        let out = map_int(&cq.manager, root)?;
        let pos = out.path.iter().filter(|(_, b)| *b).map(|&(v, _)| v).collect::<Vec<_>>();
        (out.value, pos)
    } else {
        map_int_uncached(&cq.manager, root)?
    };
    if value <= 0.0 {
        return Err(Error::EvidenceUnsatisfiable);
    }
    let selection = decode(&cq, query_vars, &positive)?;
    let mut value = value;
    if opts.normalize {
        let pe = literals_prob(gp, evidence, opts)?;
        value = (value / pe).min(1.0);
    }
    Ok(InferenceResult {
        task,
        value,
        normalized: opts.normalize,
        assignment: Some(selection.to_rule4(&gp.choice_vars)),
        selection: Some(selection),
        stats: stats(&cq, root, start),
    })
}

/// `P(assignment, evidence)`: the probability of the evidence with the
/// assignment's selections imposed.
pub fn joint_prob(
    gp: &GroundProgram,
    assignment: &Assignment,
    evidence: &[Literal],
    opts: &InferOptions,
) -> Result<f64> {
    let (mut cq, mut root) = compile_order(gp, evidence, opts)?;
    for &(g, pos) in &assignment.entries {
        let v = cq.encoding.groups[g].values[pos];
        root = cq.manager.try_and(root, v)?;
    }
    Ok(prob(&cq.manager, root))
}
