//! Relevance-restricted grounding, choice-variable assignment and
//! stratification.
//!
//! A clause instance is produced only when every positive body atom is the
//! head of an instance produced earlier (any disjunct of an annotated head
//! counts), iterated semi-naively to a fixpoint. Head variables that are
//! not bound by the body range over the Herbrand universe.

use std::collections::HashMap;

use indexmap::IndexSet;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::model::{
    validate, AnnotatedClause, Atom, ChoiceVariable, Head, Literal, Program, Term,
};
use crate::parser::format_clause;

pub type AtomId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundClause {
    pub clause_id: usize,
    pub grounding_id: usize,
    /// Head atom per value position of the choice variable (a single entry
    /// for deterministic clauses); `None` is the null head.
    pub heads: Vec<Option<AtomId>>,
    pub pos_body: Vec<AtomId>,
    pub neg_body: Vec<AtomId>,
    /// Body atoms in source order with their polarity.
    pub body: Vec<(AtomId, bool)>,
    /// Index into `GroundProgram::choice_vars`.
    pub choice: Option<usize>,
}

/// Ground atoms partitioned into dependency components and strata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Strata {
    /// Stratum per atom.
    pub stratum: Vec<usize>,
    /// Strongly connected components of the dependency graph, dependencies
    /// before dependents.
    pub components: Vec<Vec<AtomId>>,
    pub component_of: Vec<usize>,
    /// Component contains a positive cycle.
    pub recursive: Vec<bool>,
}

impl Strata {
    pub fn levels(&self) -> usize {
        self.stratum.iter().copied().max().map_or(0, |m| m + 1)
    }
}

#[derive(Clone, Debug)]
pub struct GroundProgram {
    pub atoms: IndexSet<Atom>,
    pub clauses: Vec<GroundClause>,
    pub choice_vars: Vec<ChoiceVariable>,
    pub evidence: Vec<Literal>,
    pub queries: Vec<Atom>,
    /// Per atom: `(ground clause, value position)` pairs that can derive it.
    pub rules_for: Vec<Vec<(usize, usize)>>,
    pub strata: Strata,
}

impl GroundProgram {
    pub fn atom_id(&self, atom: &Atom) -> Option<AtomId> {
        self.atoms.get_index_of(atom)
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        &self.atoms[id]
    }

    /// Product of the choice variables' value counts.
    pub fn num_worlds(&self) -> u128 {
        self.choice_vars
            .iter()
            .fold(1u128, |acc, cv| acc.saturating_mul(cv.n_values() as u128))
    }

    /// Choice variables flagged by `map_query`.
    pub fn query_vars(&self) -> Vec<usize> {
        (0..self.choice_vars.len())
            .filter(|&i| self.choice_vars[i].is_query)
            .collect()
    }

    /// Atoms `targets` depend on, transitively, including themselves.
    pub fn dependency_cone(&self, targets: &[AtomId]) -> Vec<bool> {
        let mut seen = vec![false; self.atoms.len()];
        let mut stack: Vec<AtomId> = targets.to_vec();
        while let Some(a) = stack.pop() {
            if std::mem::replace(&mut seen[a], true) {
                continue;
            }
            for &(c, _) in &self.rules_for[a] {
                let gc = &self.clauses[c];
                stack.extend(gc.pos_body.iter().chain(&gc.neg_body).filter(|&&b| !seen[b]));
            }
        }
        seen
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum PatTerm {
    Const(u32),
    Var(usize),
}

#[derive(Clone, Debug)]
struct Pattern {
    pred: u32,
    args: Vec<PatTerm>,
}

struct ClausePattern {
    heads: Vec<Pattern>,
    pos: Vec<Pattern>,
    neg: Vec<Pattern>,
    n_vars: usize,
    /// Variables bound by no positive body literal.
    free_vars: Vec<usize>,
}

type GAtom = (u32, Box<[u32]>);

#[derive(Default)]
struct Symbols {
    consts: IndexSet<String>,
    preds: IndexSet<(String, usize)>,
}

impl Symbols {
    fn collect_consts(&mut self, atom: &Atom) {
        for t in &atom.args {
            if let Term::Const(c) = t {
                self.consts.insert(c.clone());
            }
        }
    }

    fn pattern(&mut self, atom: &Atom, vars: &[String]) -> Pattern {
        let (pred, _) = self
            .preds
            .insert_full((atom.predicate.clone(), atom.args.len()));
        let args = atom
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => PatTerm::Const(self.consts.get_index_of(c).unwrap() as u32),
                Term::Var(v) => PatTerm::Var(vars.iter().position(|x| x == v).unwrap()),
            })
            .collect();
        Pattern {
            pred: pred as u32,
            args,
        }
    }

    fn to_atom(&self, g: &GAtom) -> Atom {
        let (name, _) = &self.preds[g.0 as usize];
        Atom::new(
            name.clone(),
            g.1.iter()
                .map(|&c| Term::Const(self.consts[c as usize].clone()))
                .collect(),
        )
    }
}

#[derive(Default)]
struct AtomStore {
    atoms: IndexSet<GAtom>,
    by_pred: FxHashMap<u32, Vec<usize>>,
    by_arg: FxHashMap<(u32, usize, u32), Vec<usize>>,
}

impl AtomStore {
    fn insert(&mut self, g: GAtom) -> Option<usize> {
        let (id, fresh) = self.atoms.insert_full(g);
        if !fresh {
            return None;
        }
        let g = &self.atoms[id];
        self.by_pred.entry(g.0).or_default().push(id);
        for (pos, &c) in g.1.iter().enumerate() {
            self.by_arg.entry((g.0, pos, c)).or_default().push(id);
        }
        Some(id)
    }

    fn candidates(&self, pat: &Pattern, binding: &[Option<u32>]) -> &[usize] {
        for (pos, t) in pat.args.iter().enumerate() {
            let c = match *t {
                PatTerm::Const(c) => Some(c),
                PatTerm::Var(v) => binding[v],
            };
            if let Some(c) = c {
                return self
                    .by_arg
                    .get(&(pat.pred, pos, c))
                    .map_or(&[][..], |v| v.as_slice());
            }
        }
        self.by_pred.get(&pat.pred).map_or(&[][..], |v| v.as_slice())
    }
}

fn unify(pat: &Pattern, g: &GAtom, binding: &mut [Option<u32>], trail: &mut Vec<usize>) -> bool {
    if pat.pred != g.0 || pat.args.len() != g.1.len() {
        return false;
    }
    let mark = trail.len();
    for (t, &c) in pat.args.iter().zip(g.1.iter()) {
        let ok = match *t {
            PatTerm::Const(k) => k == c,
            PatTerm::Var(v) => match binding[v] {
                Some(b) => b == c,
                None => {
                    binding[v] = Some(c);
                    trail.push(v);
                    true
                }
            },
        };
        if !ok {
            undo(binding, trail, mark);
            return false;
        }
    }
    true
}

fn undo(binding: &mut [Option<u32>], trail: &mut Vec<usize>, mark: usize) {
    for v in trail.drain(mark..) {
        binding[v] = None;
    }
}

fn instantiate(pat: &Pattern, subst: &[u32]) -> GAtom {
    (
        pat.pred,
        pat.args
            .iter()
            .map(|t| match *t {
                PatTerm::Const(c) => c,
                PatTerm::Var(v) => subst[v],
            })
            .collect(),
    )
}

struct JoinCtx<'a> {
    store: &'a AtomStore,
    delta: &'a [usize],
    clause: &'a ClausePattern,
    universe: u32,
}

impl JoinCtx<'_> {
    /// Matches positive literals in `order`; the literal at `order[0]` is
    /// matched against the delta only.
    fn join(
        &self,
        order: &[usize],
        depth: usize,
        binding: &mut Vec<Option<u32>>,
        trail: &mut Vec<usize>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if depth == order.len() {
            self.complete(0, binding, out);
            return;
        }
        let pat = &self.clause.pos[order[depth]];
        let cands: &[usize] = if depth == 0 {
            self.delta
        } else {
            self.store.candidates(pat, binding)
        };
        for &id in cands {
            let mark = trail.len();
            if unify(pat, &self.store.atoms[id], binding, trail) {
                self.join(order, depth + 1, binding, trail, out);
                undo(binding, trail, mark);
            }
        }
    }

    fn complete(&self, k: usize, binding: &mut Vec<Option<u32>>, out: &mut Vec<Vec<u32>>) {
        if k == self.clause.free_vars.len() {
            out.push(binding.iter().map(|b| b.unwrap()).collect());
            return;
        }
        let v = self.clause.free_vars[k];
        if binding[v].is_some() {
            self.complete(k + 1, binding, out);
            return;
        }
        for c in 0..self.universe {
            binding[v] = Some(c);
            self.complete(k + 1, binding, out);
        }
        binding[v] = None;
    }
}

/// Grounds, assigns choice variables and stratifies.
pub fn ground(program: &Program) -> Result<GroundProgram> {
    let diagnostics = validate(program);
    if !diagnostics.is_empty() {
        return Err(Error::Invalid(diagnostics));
    }

    let mut sym = Symbols::default();
    for c in &program.clauses {
        for h in &c.heads {
            sym.collect_consts(&h.atom);
        }
        for l in &c.body {
            sym.collect_consts(&l.atom);
        }
    }
    for l in &program.evidence {
        sym.collect_consts(&l.atom);
    }
    for q in &program.queries {
        sym.collect_consts(q);
    }
    let universe = sym.consts.len() as u32;
    if universe == 0 && program.clauses.iter().any(|c| !c.variables().is_empty()) {
        return Err(Error::EmptyUniverse);
    }

    let patterns: Vec<ClausePattern> = program
        .clauses
        .iter()
        .map(|c| {
            let vars = c.variables();
            let heads = c.heads.iter().map(|h| sym.pattern(&h.atom, &vars)).collect();
            let pos: Vec<Pattern> = c
                .body
                .iter()
                .filter(|l| l.positive)
                .map(|l| sym.pattern(&l.atom, &vars))
                .collect();
            let neg = c
                .body
                .iter()
                .filter(|l| !l.positive)
                .map(|l| sym.pattern(&l.atom, &vars))
                .collect();
            let mut bound = vec![false; vars.len()];
            for p in &pos {
                for t in &p.args {
                    if let PatTerm::Var(v) = t {
                        bound[*v] = true;
                    }
                }
            }
            ClausePattern {
                heads,
                pos,
                neg,
                n_vars: vars.len(),
                free_vars: (0..vars.len()).filter(|&v| !bound[v]).collect(),
            }
        })
        .collect();

    // semi-naive relevance fixpoint
    let mut store = AtomStore::default();
    let mut seen: FxHashSet<(usize, Vec<u32>)> = FxHashSet::default();
    let mut instances: Vec<Vec<Vec<u32>>> = vec![Vec::new(); patterns.len()];
    let mut delta: Vec<usize> = Vec::new();
    let mut first = true;
    loop {
        let mut produced: Vec<(usize, Vec<u32>)> = Vec::new();
        for (ci, cp) in patterns.iter().enumerate() {
            let mut found = Vec::new();
            if cp.pos.is_empty() {
                if first {
                    let ctx = JoinCtx {
                        store: &store,
                        delta: &[],
                        clause: cp,
                        universe,
                    };
                    ctx.complete(0, &mut vec![None; cp.n_vars], &mut found);
                }
            } else {
                for lead in 0..cp.pos.len() {
                    let d: Vec<usize> = delta
                        .iter()
                        .copied()
                        .filter(|&id| store.atoms[id].0 == cp.pos[lead].pred)
                        .collect();
                    if d.is_empty() {
                        continue;
                    }
                    let mut order = vec![lead];
                    order.extend((0..cp.pos.len()).filter(|&i| i != lead));
                    let ctx = JoinCtx {
                        store: &store,
                        delta: &d,
                        clause: cp,
                        universe,
                    };
                    ctx.join(
                        &order,
                        0,
                        &mut vec![None; cp.n_vars],
                        &mut Vec::new(),
                        &mut found,
                    );
                }
            }
            for subst in found {
                if seen.insert((ci, subst.clone())) {
                    produced.push((ci, subst));
                }
            }
        }
        first = false;
        let mut next_delta = Vec::new();
        for (ci, subst) in produced {
            for h in &patterns[ci].heads {
                if let Some(id) = store.insert(instantiate(h, &subst)) {
                    next_delta.push(id);
                }
            }
            instances[ci].push(subst);
        }
        if next_delta.is_empty() {
            break;
        }
        delta = next_delta;
    }

    // assemble ground clauses in clause-major, grounding-minor order
    let mut atoms: IndexSet<Atom> = IndexSet::new();
    let mut gatom_ids: FxHashMap<GAtom, AtomId> = FxHashMap::default();
    let mut intern = |g: GAtom, atoms: &mut IndexSet<Atom>| -> AtomId {
        *gatom_ids
            .entry(g)
            .or_insert_with_key(|g| atoms.insert_full(sym.to_atom(g)).0)
    };
    let mut clauses = Vec::new();
    let mut choice_vars = Vec::new();
    let mut rule_number = 0;
    for (ci, clause) in program.clauses.iter().enumerate() {
        let cp = &patterns[ci];
        let insts = &mut instances[ci];
        insts.sort();
        let this_rule = rule_number;
        if !clause.is_deterministic() {
            rule_number += 1;
        }
        for (gid, subst) in insts.iter().enumerate() {
            let ground_heads: Vec<Head> = clause
                .heads
                .iter()
                .zip(&cp.heads)
                .map(|(h, p)| Head::new(sym.to_atom(&instantiate(p, subst)), h.prob))
                .collect();
            let ground_body = ground_body(clause, cp, subst, &sym);
            let pos_body: Vec<AtomId> = cp
                .pos
                .iter()
                .map(|p| intern(instantiate(p, subst), &mut atoms))
                .collect();
            let neg_body: Vec<AtomId> = cp
                .neg
                .iter()
                .map(|p| intern(instantiate(p, subst), &mut atoms))
                .collect();
            let (mut pi, mut ni) = (0, 0);
            let body: Vec<(AtomId, bool)> = clause
                .body
                .iter()
                .map(|l| {
                    if l.positive {
                        pi += 1;
                        (pos_body[pi - 1], true)
                    } else {
                        ni += 1;
                        (neg_body[ni - 1], false)
                    }
                })
                .collect();
            let (heads, choice) = if clause.is_deterministic() {
                (
                    vec![Some(intern(instantiate(&cp.heads[0], subst), &mut atoms))],
                    None,
                )
            } else {
                match ChoiceVariable::from_ground_clause(
                    clause.id,
                    this_rule,
                    gid,
                    &ground_heads,
                    &ground_body,
                    clause.is_query,
                )? {
                    Some(cv) => {
                        let heads = cv
                            .ground_heads
                            .iter()
                            .map(|a| (!a.is_null()).then(|| atoms.insert_full(a.clone()).0))
                            .collect();
                        choice_vars.push(cv);
                        (heads, Some(choice_vars.len() - 1))
                    }
                    None => {
                        // a single value survived: either a certain head or a certain null
                        match ground_heads.iter().find(|h| h.prob > 0.0 && !h.atom.is_null()) {
                            Some(h) if (h.prob - 1.0).abs() <= crate::model::PROB_TOLERANCE => {
                                (vec![Some(atoms.insert_full(h.atom.clone()).0)], None)
                            }
                            _ => continue,
                        }
                    }
                }
            };
            clauses.push(GroundClause {
                clause_id: clause.id,
                grounding_id: gid,
                heads,
                pos_body,
                neg_body,
                body,
                choice,
            });
        }
    }
    for l in &program.evidence {
        atoms.insert(l.atom.clone());
    }
    for q in &program.queries {
        atoms.insert(q.clone());
    }

    let mut rules_for = vec![Vec::new(); atoms.len()];
    for (i, gc) in clauses.iter().enumerate() {
        for (pos, h) in gc.heads.iter().enumerate() {
            if let Some(a) = h {
                rules_for[*a].push((i, pos));
            }
        }
    }
    let mut gp = GroundProgram {
        atoms,
        clauses,
        choice_vars,
        evidence: program.evidence.clone(),
        queries: program.queries.clone(),
        rules_for,
        strata: Strata::default(),
    };
    gp.strata = stratify(&gp)?;
    Ok(gp)
}

fn ground_body(clause: &AnnotatedClause, cp: &ClausePattern, subst: &[u32], sym: &Symbols) -> Vec<Literal> {
    let (mut pi, mut ni) = (0, 0);
    clause
        .body
        .iter()
        .map(|l| {
            let pat = if l.positive {
                pi += 1;
                &cp.pos[pi - 1]
            } else {
                ni += 1;
                &cp.neg[ni - 1]
            };
            Literal {
                atom: sym.to_atom(&instantiate(pat, subst)),
                positive: l.positive,
            }
        })
        .collect()
}

/// Orders ground atoms into strata: positive dependencies stay within the
/// same or a lower stratum, negative ones point strictly lower.
pub fn stratify(gp: &GroundProgram) -> Result<Strata> {
    let n = gp.atoms.len();
    let mut graph: DiGraph<(), bool, u32> = DiGraph::with_capacity(n, gp.clauses.len());
    for _ in 0..n {
        graph.add_node(());
    }
    let mut edges: HashMap<(usize, usize), bool> = HashMap::new();
    for gc in &gp.clauses {
        for h in gc.heads.iter().flatten() {
            for &b in &gc.pos_body {
                edges.entry((*h, b)).or_insert(false);
            }
            for &b in &gc.neg_body {
                edges.insert((*h, b), true);
            }
        }
    }
    let mut edge_list: Vec<((usize, usize), bool)> = edges.into_iter().collect();
    edge_list.sort_unstable();
    for &((h, b), neg) in &edge_list {
        graph.add_edge(NodeIndex::new(h), NodeIndex::new(b), neg);
    }
    let mut components: Vec<Vec<AtomId>> = tarjan_scc(&graph)
        .into_iter()
        .map(|c| {
            let mut c: Vec<AtomId> = c.into_iter().map(|i| i.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    components.shrink_to_fit();
    let mut component_of = vec![0; n];
    for (ci, c) in components.iter().enumerate() {
        for &a in c {
            component_of[a] = ci;
        }
    }
    let mut recursive: Vec<bool> = components.iter().map(|c| c.len() > 1).collect();
    let mut comp_stratum = vec![0usize; components.len()];
    // components are listed dependencies-first, so each edge target is final
    let mut out_edges: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for &((h, b), neg) in &edge_list {
        out_edges[h].push((b, neg));
    }
    for (ci, comp) in components.iter().enumerate() {
        let mut s = 0;
        for &a in comp {
            for &(b, neg) in &out_edges[a] {
                let cb = component_of[b];
                if cb == ci {
                    if neg {
                        let names: Vec<String> =
                            comp.iter().map(|&x| gp.atoms[x].to_string()).collect();
                        return Err(Error::NonStratified(names.join(", ")));
                    }
                    recursive[ci] = true;
                } else {
                    s = s.max(comp_stratum[cb] + usize::from(neg));
                }
            }
        }
        comp_stratum[ci] = s;
    }
    let stratum = (0..n).map(|a| comp_stratum[component_of[a]]).collect();
    Ok(Strata {
        stratum,
        components,
        component_of,
        recursive,
    })
}

/// The ground program in `.lpad` syntax; each probabilistic instance is
/// preceded by a `% cv(clause,grounding)` comment.
pub fn format_ground(gp: &GroundProgram) -> String {
    let mut out = String::new();
    for gc in &gp.clauses {
        let body: Vec<Literal> = gc
            .pos_body
            .iter()
            .map(|&a| Literal::pos(gp.atoms[a].clone()))
            .chain(gc.neg_body.iter().map(|&a| Literal::neg(gp.atoms[a].clone())))
            .collect();
        let clause = match gc.choice {
            Some(cv) => {
                let v = &gp.choice_vars[cv];
                out.push_str(&format!("% cv({},{})\n", gc.clause_id, gc.grounding_id));
                AnnotatedClause {
                    id: gc.clause_id,
                    heads: v
                        .ground_heads
                        .iter()
                        .zip(&v.probs)
                        .filter(|(a, _)| !a.is_null())
                        .map(|(a, &p)| Head::new(a.clone(), p))
                        .collect(),
                    body: v.ground_body.clone(),
                    is_query: v.is_query,
                }
            }
            None => AnnotatedClause {
                id: gc.clause_id,
                heads: vec![Head::new(gp.atoms[gc.heads[0].unwrap()].clone(), 1.0)],
                body,
                is_query: false,
            },
        };
        out.push_str(&format_clause(&clause));
        out.push('\n');
    }
    for l in &gp.evidence {
        out.push_str(&format!("evidence({l}).\n"));
    }
    for q in &gp.queries {
        out.push_str(&format!("query({q}).\n"));
    }
    out
}
