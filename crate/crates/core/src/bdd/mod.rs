//! Reduced ordered BDDs with complement edges.
//!
//! Only the 1 terminal exists; FALSE is its complemented reference. A node's
//! 1-child reference is never complemented, so complement flags appear only
//! on 0-children and on references held by callers. Nodes are hash-consed
//! per variable and store their variable, not their level, which lets an
//! adjacent-level swap rewrite nodes in place while every outstanding
//! [`BddRef`] keeps denoting the same function.

mod reorder;

use std::fmt::Write as _;
use std::time::Instant;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};

pub type VarId = u32;

const TERMINAL_VAR: VarId = u32::MAX;
const FREE_VAR: VarId = u32::MAX - 1;

/// Node index plus complement bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BddRef(u32);

impl BddRef {
    pub const ONE: BddRef = BddRef(0);
    pub const ZERO: BddRef = BddRef(1);

    fn new(node: u32, comp: bool) -> Self {
        BddRef(node << 1 | u32::from(comp))
    }

    pub fn node(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_complemented(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn regular(self) -> Self {
        BddRef(self.0 & !1)
    }

    pub fn is_constant(self) -> bool {
        self.node() == 0
    }

    fn xor_comp(self, comp: bool) -> Self {
        BddRef(self.0 ^ u32::from(comp))
    }
}

impl std::ops::Not for BddRef {
    type Output = BddRef;

    fn not(self) -> BddRef {
        BddRef(self.0 ^ 1)
    }
}

/// Metadata of one Boolean variable.
#[derive(Clone, Debug, PartialEq)]
pub struct BddVarInfo {
    pub level: u32,
    /// Choice variable this Boolean variable encodes.
    pub group: usize,
    /// Value position for one-hot groups, chain step for order groups.
    pub index: usize,
    /// Probability of the variable being true.
    pub weight: f64,
    pub is_query: bool,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    var: VarId,
    lo: BddRef,
    hi: BddRef,
}

/// Resource limits checked while building diagrams.
#[derive(Clone, Copy, Debug, Default)]
pub struct Budget {
    pub deadline: Option<Instant>,
    pub node_limit: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BddStats {
    pub cache_lookups: u64,
    pub cache_hits: u64,
    pub gc_runs: u64,
    pub swaps: u64,
    pub peak_nodes: usize,
}

/// Default live-node count above which [`BddManager::maybe_collect`]
/// sweeps dead nodes.
pub const DEFAULT_GC_THRESHOLD: usize = 1 << 20;

pub struct BddManager {
    nodes: Vec<Node>,
    free: Vec<u32>,
    unique: Vec<FxHashMap<(BddRef, BddRef), u32>>,
    vars: Vec<BddVarInfo>,
    level_to_var: Vec<VarId>,
    and_cache: FxHashMap<(BddRef, BddRef), BddRef>,
    protected: FxHashMap<u32, usize>,
    budget: Budget,
    ticks: u64,
    use_cache: bool,
    gc_threshold: usize,
    stats: BddStats,
}

impl Default for BddManager {
    fn default() -> Self {
        Self::new()
    }
}

impl BddManager {
    pub fn new() -> Self {
        BddManager {
            nodes: vec![Node {
                var: TERMINAL_VAR,
                lo: BddRef::ONE,
                hi: BddRef::ONE,
            }],
            free: Vec::new(),
            unique: Vec::new(),
            vars: Vec::new(),
            level_to_var: Vec::new(),
            and_cache: FxHashMap::default(),
            protected: FxHashMap::default(),
            budget: Budget::default(),
            ticks: 0,
            use_cache: true,
            gc_threshold: DEFAULT_GC_THRESHOLD,
            stats: BddStats::default(),
        }
    }

    pub fn set_budget(&mut self, budget: Budget) {
        self.budget = budget;
    }

    /// Disabling the operation cache keeps results identical but makes
    /// `and`/`or` exponential; meant for testing.
    pub fn set_cache_enabled(&mut self, enabled: bool) {
        self.use_cache = enabled;
        self.and_cache.clear();
    }

    pub fn set_gc_threshold(&mut self, threshold: usize) {
        self.gc_threshold = threshold;
    }

    pub fn stats(&self) -> BddStats {
        self.stats
    }

    pub fn clear_cache(&mut self) {
        self.and_cache.clear();
    }

    /// Appends a variable at the bottom of the order and returns its
    /// positive literal.
    pub fn new_var(
        &mut self,
        group: usize,
        index: usize,
        weight: f64,
        is_query: bool,
    ) -> Result<BddRef> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::InvalidWeight(weight));
        }
        let var = self.vars.len() as VarId;
        self.vars.push(BddVarInfo {
            level: self.level_to_var.len() as u32,
            group,
            index,
            weight,
            is_query,
        });
        self.level_to_var.push(var);
        self.unique.push(FxHashMap::default());
        Ok(self.mk_unchecked(var, BddRef::ZERO, BddRef::ONE))
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_info(&self, var: VarId) -> &BddVarInfo {
        &self.vars[var as usize]
    }

    pub fn vars(&self) -> &[BddVarInfo] {
        &self.vars
    }

    pub fn var_at_level(&self, level: u32) -> VarId {
        self.level_to_var[level as usize]
    }

    /// Variables from the top level down.
    pub fn order(&self) -> &[VarId] {
        &self.level_to_var
    }

    /// Literal of an existing variable.
    pub fn literal(&self, var: VarId) -> BddRef {
        let node = self.unique[var as usize][&(BddRef::ZERO, BddRef::ONE)];
        BddRef::new(node, false)
    }

    /// Variable tested at the root of `r`; `None` for constants.
    pub fn top_var(&self, r: BddRef) -> Option<VarId> {
        let v = self.nodes[r.node() as usize].var;
        (v != TERMINAL_VAR).then_some(v)
    }

    /// Level of the root of `r`; constants sit below every variable.
    pub fn level(&self, r: BddRef) -> u32 {
        match self.nodes[r.node() as usize].var {
            TERMINAL_VAR => u32::MAX,
            v => self.vars[v as usize].level,
        }
    }

    /// Raw children of the node `r` points to, ignoring `r`'s own flag.
    pub fn children(&self, r: BddRef) -> (BddRef, BddRef) {
        let n = &self.nodes[r.node() as usize];
        (n.lo, n.hi)
    }

    /// Cofactors of the function denoted by `r` with respect to its top
    /// variable.
    pub fn cofactors(&self, r: BddRef) -> (BddRef, BddRef) {
        let n = &self.nodes[r.node() as usize];
        let c = r.is_complemented();
        (n.lo.xor_comp(c), n.hi.xor_comp(c))
    }

    fn cofactors_at(&self, r: BddRef, level: u32) -> (BddRef, BddRef) {
        if self.level(r) == level {
            self.cofactors(r)
        } else {
            (r, r)
        }
    }

    /// Allocated nodes excluding the terminal and free slots.
    pub fn live_nodes(&self) -> usize {
        self.nodes.len() - self.free.len() - 1
    }

    fn tick(&mut self) -> Result<()> {
        self.ticks += 1;
        if self.ticks & 0xfff == 0 {
            if let Some(deadline) = self.budget.deadline {
                if Instant::now() >= deadline {
                    return Err(Error::Timeout);
                }
            }
        }
        Ok(())
    }

    fn mk(&mut self, var: VarId, lo: BddRef, hi: BddRef) -> Result<BddRef> {
        if lo == hi {
            return Ok(lo);
        }
        if let Some(limit) = self.budget.node_limit {
            if self.live_nodes() >= limit {
                return Err(Error::NodeLimit(limit));
            }
        }
        Ok(self.mk_unchecked(var, lo, hi))
    }

    fn mk_unchecked(&mut self, var: VarId, lo: BddRef, hi: BddRef) -> BddRef {
        if lo == hi {
            return lo;
        }
        if hi.is_complemented() {
            return !self.mk_unchecked(var, !lo, !hi);
        }
        if let Some(&n) = self.unique[var as usize].get(&(lo, hi)) {
            return BddRef::new(n, false);
        }
        let node = Node { var, lo, hi };
        let idx = match self.free.pop() {
            Some(i) => {
                self.nodes[i as usize] = node;
                i
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        };
        self.unique[var as usize].insert((lo, hi), idx);
        let live = self.live_nodes();
        if live > self.stats.peak_nodes {
            self.stats.peak_nodes = live;
        }
        BddRef::new(idx, false)
    }

    pub fn not(&self, a: BddRef) -> BddRef {
        !a
    }

    /// Conjunction. Panics if a budget set with [`set_budget`] is exceeded;
    /// use [`try_and`] when a budget is active.
    ///
    /// [`set_budget`]: BddManager::set_budget
    /// [`try_and`]: BddManager::try_and
    pub fn and(&mut self, a: BddRef, b: BddRef) -> BddRef {
        self.try_and(a, b).expect("BDD budget exceeded")
    }

    pub fn or(&mut self, a: BddRef, b: BddRef) -> BddRef {
        self.try_or(a, b).expect("BDD budget exceeded")
    }

    pub fn try_and(&mut self, a: BddRef, b: BddRef) -> Result<BddRef> {
        self.and_rec(a, b)
    }

    pub fn try_or(&mut self, a: BddRef, b: BddRef) -> Result<BddRef> {
        Ok(!self.and_rec(!a, !b)?)
    }

    fn and_rec(&mut self, a: BddRef, b: BddRef) -> Result<BddRef> {
        if a == BddRef::ZERO || b == BddRef::ZERO || a == !b {
            return Ok(BddRef::ZERO);
        }
        if a == BddRef::ONE || a == b {
            return Ok(b);
        }
        if b == BddRef::ONE {
            return Ok(a);
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if self.use_cache {
            self.stats.cache_lookups += 1;
            if let Some(&r) = self.and_cache.get(&(a, b)) {
                self.stats.cache_hits += 1;
                return Ok(r);
            }
        }
        self.tick()?;
        let (la, lb) = (self.level(a), self.level(b));
        let top = la.min(lb);
        let (a0, a1) = self.cofactors_at(a, top);
        let (b0, b1) = self.cofactors_at(b, top);
        let lo = self.and_rec(a0, b0)?;
        let hi = self.and_rec(a1, b1)?;
        let var = self.level_to_var[top as usize];
        let r = self.mk(var, lo, hi)?;
        if self.use_cache {
            self.and_cache.insert((a, b), r);
        }
        Ok(r)
    }

    /// Value of the function under a total assignment indexed by variable.
    pub fn eval(&self, r: BddRef, assignment: &[bool]) -> bool {
        let mut cur = r;
        let mut comp = false;
        loop {
            comp ^= cur.is_complemented();
            let n = &self.nodes[cur.node() as usize];
            if n.var == TERMINAL_VAR {
                return !comp;
            }
            cur = if assignment[n.var as usize] { n.hi } else { n.lo };
        }
    }

    /// Internal nodes reachable from `r`.
    pub fn node_count(&self, r: BddRef) -> usize {
        self.reachable(&[r]).len()
    }

    /// Reachable internal nodes, in depth-first discovery order.
    fn reachable(&self, roots: &[BddRef]) -> Vec<u32> {
        let mut seen = FxHashSet::default();
        let mut order = Vec::new();
        let mut stack: Vec<u32> = roots.iter().map(|r| r.node()).rev().collect();
        while let Some(n) = stack.pop() {
            if n == 0 || !seen.insert(n) {
                continue;
            }
            order.push(n);
            let node = &self.nodes[n as usize];
            stack.push(node.lo.node());
            stack.push(node.hi.node());
        }
        order
    }

    /// Variables occurring in `r`.
    pub fn support(&self, r: BddRef) -> Vec<VarId> {
        let mut vars: Vec<VarId> = self
            .reachable(&[r])
            .into_iter()
            .map(|n| self.nodes[n as usize].var)
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Graphviz rendering: solid 1-edges, dashed 0-edges, dotted
    /// complemented 0-edges (and a dotted root edge when the root itself is
    /// complemented). Variables are labelled `X<group>_<index>`.
    pub fn to_dot(&self, r: BddRef) -> String {
        let mut s = String::from("digraph bdd {\n  root [shape=none, label=\"\"];\n");
        let style = |comp: bool| if comp { "dotted" } else { "solid" };
        let _ = writeln!(
            s,
            "  root -> n{} [style={}];",
            r.node(),
            style(r.is_complemented())
        );
        for n in self.reachable(&[r]) {
            let node = &self.nodes[n as usize];
            let info = &self.vars[node.var as usize];
            let _ = writeln!(s, "  n{n} [label=\"X{}_{}\"];", info.group, info.index);
            let _ = writeln!(s, "  n{n} -> n{} [style=solid];", node.hi.node());
            let lo_style = if node.lo.is_complemented() {
                "dotted"
            } else {
                "dashed"
            };
            let _ = writeln!(s, "  n{n} -> n{} [style={lo_style}];", node.lo.node());
        }
        s.push_str("  n0 [shape=box, label=\"1\"];\n}\n");
        s
    }

    /// Registers an external root that survives garbage collection.
    pub fn protect(&mut self, r: BddRef) {
        *self.protected.entry(r.node()).or_insert(0) += 1;
    }

    pub fn unprotect(&mut self, r: BddRef) {
        if let Some(c) = self.protected.get_mut(&r.node()) {
            *c -= 1;
            if *c == 0 {
                self.protected.remove(&r.node());
            }
        }
    }

    /// Frees every node unreachable from the protected roots and `roots`.
    /// Returns the number of nodes freed. Clears the operation cache.
    pub fn collect_garbage(&mut self, roots: &[BddRef]) -> usize {
        let mut all_roots: Vec<BddRef> = roots.to_vec();
        let mut prot: Vec<u32> = self.protected.keys().copied().collect();
        prot.sort_unstable();
        all_roots.extend(prot.into_iter().map(|n| BddRef::new(n, false)));
        // variable literals stay alive so `literal` keeps working
        for table in &self.unique {
            if let Some(&n) = table.get(&(BddRef::ZERO, BddRef::ONE)) {
                all_roots.push(BddRef::new(n, false));
            }
        }
        let mut marked = vec![false; self.nodes.len()];
        for n in self.reachable(&all_roots) {
            marked[n as usize] = true;
        }
        let mut freed = 0;
        for (i, &keep) in marked.iter().enumerate().skip(1) {
            let node = self.nodes[i];
            if node.var == FREE_VAR || keep {
                continue;
            }
            self.unique[node.var as usize].remove(&(node.lo, node.hi));
            self.nodes[i].var = FREE_VAR;
            self.free.push(i as u32);
            freed += 1;
        }
        self.and_cache.clear();
        self.stats.gc_runs += 1;
        freed
    }

    /// Whether the live node count is above the collection threshold.
    pub fn gc_due(&self) -> bool {
        self.live_nodes() > self.gc_threshold
    }

    /// Collects garbage if the live node count is above the threshold.
    pub fn maybe_collect(&mut self, roots: &[BddRef]) {
        if self.gc_due() {
            self.collect_garbage(roots);
        }
    }

    /// Checks reduction, the complement-edge rule, ordering and the unique
    /// tables over every allocated node.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut levels: Vec<u32> = self.vars.iter().map(|v| v.level).collect();
        levels.sort_unstable();
        if levels.iter().enumerate().any(|(i, &l)| i as u32 != l) {
            return Err("levels are not a permutation".into());
        }
        for (i, node) in self.nodes.iter().enumerate().skip(1) {
            if node.var == FREE_VAR {
                continue;
            }
            if node.lo == node.hi {
                return Err(format!("node {i} has identical children"));
            }
            if node.hi.is_complemented() {
                return Err(format!("node {i} has a complemented 1-edge"));
            }
            let l = self.vars[node.var as usize].level;
            if self.level(node.lo) <= l || self.level(node.hi) <= l {
                return Err(format!("node {i} violates the variable order"));
            }
            if self.unique[node.var as usize].get(&(node.lo, node.hi)) != Some(&(i as u32)) {
                return Err(format!("node {i} missing from the unique table"));
            }
        }
        Ok(())
    }

    /// Checks the invariants on the nodes reachable from `r` only.
    pub fn check_reachable(&self, r: BddRef) -> std::result::Result<(), String> {
        for n in self.reachable(&[r]) {
            let node = &self.nodes[n as usize];
            if node.lo == node.hi {
                return Err(format!("node {n} has identical children"));
            }
            if node.hi.is_complemented() {
                return Err(format!("node {n} has a complemented 1-edge"));
            }
            let l = self.vars[node.var as usize].level;
            if self.level(node.lo) <= l || self.level(node.hi) <= l {
                return Err(format!("node {n} violates the variable order"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn manager(n: usize) -> (BddManager, Vec<BddRef>) {
        let mut m = BddManager::new();
        let vars = (0..n)
            .map(|i| m.new_var(i, 0, 0.5, false).unwrap())
            .collect();
        (m, vars)
    }

    fn assignment(bits: u32, n: usize) -> Vec<bool> {
        (0..n).map(|i| bits >> i & 1 == 1).collect()
    }

    /// Random formula built from literals, returned with a closure-free
    /// truth table computed independently of the BDD.
    fn random_function(m: &mut BddManager, vars: &[BddRef], rng: &mut ChaCha8Rng) -> (BddRef, Vec<bool>) {
        let n = vars.len();
        let rows = 1usize << n;
        let i = rng.gen_range(0..n);
        let mut f = vars[i];
        let mut table: Vec<bool> = (0..rows).map(|r| r >> i & 1 == 1).collect();
        for _ in 0..rng.gen_range(1..8) {
            let j = rng.gen_range(0..n);
            let neg = rng.gen_bool(0.5);
            let lit = if neg { !vars[j] } else { vars[j] };
            let lit_t: Vec<bool> = (0..rows).map(|r| (r >> j & 1 == 1) != neg).collect();
            if rng.gen_bool(0.5) {
                f = m.and(f, lit);
                table.iter_mut().zip(&lit_t).for_each(|(t, l)| *t = *t && *l);
            } else {
                f = m.or(f, lit);
                table.iter_mut().zip(&lit_t).for_each(|(t, l)| *t = *t || *l);
            }
            if rng.gen_bool(0.2) {
                f = !f;
                table.iter_mut().for_each(|t| *t = !*t);
            }
        }
        (f, table)
    }

    #[test]
    fn first_variable_shape() {
        let (m, v) = manager(1);
        assert_eq!(m.children(v[0]), (BddRef::ZERO, BddRef::ONE));
        assert_eq!(m.node_count(v[0]), 1);
        assert_eq!(m.node_count(BddRef::ONE), 0);
        let (m2, v2) = manager(2);
        assert_eq!(m2.level(v2[0]), 0);
        assert_eq!(m2.level(v2[1]), 1);
    }

    #[test]
    fn rejects_bad_weights() {
        let mut m = BddManager::new();
        assert!(matches!(m.new_var(0, 0, 0.0, false), Err(Error::InvalidWeight(_))));
        assert!(matches!(m.new_var(0, 0, 1.5, false), Err(Error::InvalidWeight(_))));
    }

    #[test]
    fn complement_laws() {
        let (mut m, v) = manager(1);
        let x = v[0];
        assert_eq!(m.and(x, !x), BddRef::ZERO);
        assert_eq!(m.or(x, !x), BddRef::ONE);
        assert!(m.eval(BddRef::ONE, &[false]));
        assert!(!m.eval(!x, &[true]));
    }

    #[test]
    fn and_or_match_truth_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (mut m, v) = manager(8);
            let (a, ta) = random_function(&mut m, &v, &mut rng);
            let (b, tb) = random_function(&mut m, &v, &mut rng);
            let and = m.and(a, b);
            let or = m.or(a, b);
            for bits in 0..256u32 {
                let asg = assignment(bits, 8);
                assert_eq!(m.eval(a, &asg), ta[bits as usize]);
                assert_eq!(m.eval(and, &asg), ta[bits as usize] && tb[bits as usize]);
                assert_eq!(m.eval(or, &asg), ta[bits as usize] || tb[bits as usize]);
            }
            m.check_invariants().unwrap();
        }
    }

    #[test]
    fn canonical_references() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (mut m, v) = manager(5);
        let fs: Vec<(BddRef, Vec<bool>)> = (0..60).map(|_| random_function(&mut m, &v, &mut rng)).collect();
        for (a, ta) in &fs {
            for (b, tb) in &fs {
                assert_eq!(a == b, ta == tb);
            }
        }
    }

    #[test]
    fn garbage_collection_keeps_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut m, v) = manager(6);
        let (keep, table) = random_function(&mut m, &v, &mut rng);
        for _ in 0..20 {
            random_function(&mut m, &v, &mut rng);
        }
        m.protect(keep);
        let before = m.live_nodes();
        let freed = m.collect_garbage(&[]);
        assert_eq!(m.live_nodes(), before - freed);
        m.check_invariants().unwrap();
        for bits in 0..64u32 {
            assert_eq!(m.eval(keep, &assignment(bits, 6)), table[bits as usize]);
        }
        // freed slots are reused without breaking canonicity
        let (again, t2) = random_function(&mut m, &v, &mut rng);
        for bits in 0..64u32 {
            assert_eq!(m.eval(again, &assignment(bits, 6)), t2[bits as usize]);
        }
        m.check_invariants().unwrap();
    }

    #[test]
    fn node_limit_aborts() {
        let (mut m, v) = manager(10);
        m.set_budget(Budget {
            deadline: None,
            node_limit: Some(12),
        });
        let mut f = BddRef::ZERO;
        let mut err = None;
        for w in v.chunks(2) {
            match m.try_and(w[0], w[1]).and_then(|t| m.try_or(f, t)) {
                Ok(r) => f = r,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(err, Some(Error::NodeLimit(12))));
    }

    #[test]
    fn dot_styles() {
        let (mut m, v) = manager(2);
        let f = m.and(v[0], !v[1]);
        let dot = m.to_dot(!f);
        assert!(dot.contains("root -> n"));
        assert!(dot.contains("style=dotted"));
        assert!(dot.contains("style=solid"));
        assert!(dot.contains("label=\"X0_0\""));
    }
}
