//! Compilation of a ground program into BDDs.
//!
//! Atoms are compiled bottom-up over the dependency components of the
//! ground program: the formula of an atom is the disjunction, over the
//! ground clauses that can derive it, of the clause body conjoined with the
//! BDD of the clause's choice taking the corresponding value. Positively
//! recursive components are solved by iterating from FALSE until no formula
//! changes. Negated atoms always belong to lower components, so their
//! formulas are final when complemented.
//!
//! Choice variables use one of two encodings:
//!
//! * order: `n - 1` Boolean variables, value `k` is
//!   `!X_0 & .. & !X_{k-1} & X_k` and the last value is all-false; weights
//!   are the chain-conditional parameters so that the weighted count of a
//!   diagram is the probability of its formula.
//! * one-hot: `n` Boolean variables weighted by the value probabilities,
//!   value `k` is `X_k`, made sound by an exactly-one constraint.

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::bdd::{BddManager, BddRef, Budget, VarId};
use crate::error::{Error, Result};
use crate::grounder::{AtomId, GroundProgram};
use crate::model::{ChoiceVariable, Literal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    Order,
    OneHot,
}

/// Boolean encoding of one choice variable.
#[derive(Clone, Debug)]
pub struct GroupEncoding {
    pub mode: EncodingMode,
    /// In creation order.
    pub vars: Vec<VarId>,
    /// Value positions in encoding order.
    pub order: Vec<usize>,
    /// One BDD per value position.
    pub values: Vec<BddRef>,
}

#[derive(Clone, Debug, Default)]
pub struct Encoding {
    /// Indexed by choice variable.
    pub groups: Vec<GroupEncoding>,
}

impl Encoding {
    pub fn num_bool_vars(&self) -> usize {
        self.groups.iter().map(|g| g.vars.len()).sum()
    }
}

/// Chain-conditional weights of the order encoding: the first equals the
/// first value's probability, each later one is its probability divided by
/// the product of the complements of the earlier weights.
pub fn order_weights(probs: &[f64]) -> Vec<f64> {
    let mut weights = Vec::with_capacity(probs.len().saturating_sub(1));
    let mut rest = 1.0;
    for &p in &probs[..probs.len().saturating_sub(1)] {
        let w = (p / rest).min(1.0);
        weights.push(w);
        rest *= 1.0 - w;
    }
    weights
}

/// Creates the Boolean variables of `cv` (group id `group`) and returns
/// its encoding. Values are encoded in listing order, explicit heads first
/// and the null head last. One-hot groups are the maximized ones, so their
/// variables are flagged as query variables.
pub fn encode_choice(
    manager: &mut BddManager,
    group: usize,
    cv: &ChoiceVariable,
    mode: EncodingMode,
) -> Result<GroupEncoding> {
    let order = cv.listing_order();
    let mut vars = Vec::with_capacity(cv.n_values());
    let mut values = vec![BddRef::ZERO; cv.n_values()];
    match mode {
        EncodingMode::Order => {
            let probs: Vec<f64> = order.iter().map(|&pos| cv.probs[pos]).collect();
            let mut prefix = BddRef::ONE;
            for (k, w) in order_weights(&probs).into_iter().enumerate() {
                let lit = manager.new_var(group, k, w, false)?;
                vars.push(manager.top_var(lit).unwrap());
                values[order[k]] = manager.try_and(prefix, lit)?;
                prefix = manager.try_and(prefix, !lit)?;
            }
            values[order[order.len() - 1]] = prefix;
        }
        EncodingMode::OneHot => {
            for &pos in &order {
                let lit = manager.new_var(group, pos, cv.probs[pos], true)?;
                vars.push(manager.top_var(lit).unwrap());
                values[pos] = lit;
            }
        }
    }
    Ok(GroupEncoding {
        mode,
        vars,
        order,
        values,
    })
}

/// `(X_1 | .. | X_n) & AND_{k<m} (!X_k | !X_m)` over a one-hot group.
pub fn exactly_one(manager: &mut BddManager, group: &GroupEncoding) -> Result<BddRef> {
    if group.mode != EncodingMode::OneHot {
        return Err(Error::NotOneHot(
            group.vars.first().map_or(0, |&v| manager.var_info(v).group),
        ));
    }
    let lits = &group.values;
    let mut at_least_one = BddRef::ZERO;
    let mut at_most_one = BddRef::ONE;
    for i in 0..lits.len() {
        at_least_one = manager.try_or(at_least_one, lits[i])?;
        for j in i + 1..lits.len() {
            let both = manager.try_and(lits[i], lits[j])?;
            at_most_one = manager.try_and(at_most_one, !both)?;
        }
    }
    manager.try_and(at_least_one, at_most_one)
}

#[derive(Clone, Debug)]
pub struct CompileOptions {
    /// Order in which choice variables get their Boolean variables; the
    /// identity when `None`.
    pub creation_order: Option<Vec<usize>>,
    pub budget: Budget,
    pub cache_enabled: bool,
    pub gc_threshold: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            creation_order: None,
            budget: Budget::default(),
            cache_enabled: true,
            gc_threshold: crate::bdd::DEFAULT_GC_THRESHOLD,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CompileStats {
    pub fixpoint_iterations: usize,
    pub components: usize,
}

/// A ground program bound to a BDD manager and an encoding, with the
/// formulas of the atoms compiled so far.
pub struct CompiledQuery<'a> {
    pub gp: &'a GroundProgram,
    pub manager: BddManager,
    pub encoding: Encoding,
    pub atom_cache: FxHashMap<AtomId, BddRef>,
    pub stats: CompileStats,
    pub diagnostics: Vec<String>,
    /// Extra roots that survive garbage collection.
    pinned: Vec<BddRef>,
}

impl<'a> CompiledQuery<'a> {
    /// Creates the manager and the Boolean variables of every choice
    /// variable, with `modes[i]` the encoding of choice variable `i`.
    pub fn new(gp: &'a GroundProgram, modes: &[EncodingMode], opts: &CompileOptions) -> Result<Self> {
        assert_eq!(modes.len(), gp.choice_vars.len());
        let mut manager = BddManager::new();
        manager.set_budget(opts.budget);
        manager.set_cache_enabled(opts.cache_enabled);
        manager.set_gc_threshold(opts.gc_threshold);
        let order: Vec<usize> = match &opts.creation_order {
            Some(o) => o.clone(),
            None => (0..gp.choice_vars.len()).collect(),
        };
        let mut groups: Vec<Option<GroupEncoding>> = vec![None; gp.choice_vars.len()];
        for cv in order {
            groups[cv] = Some(encode_choice(&mut manager, cv, &gp.choice_vars[cv], modes[cv])?);
        }
        let groups = groups
            .into_iter()
            .map(|g| g.ok_or_else(|| Error::Internal("creation order misses a choice variable".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledQuery {
            gp,
            manager,
            encoding: Encoding { groups },
            atom_cache: FxHashMap::default(),
            stats: CompileStats::default(),
            diagnostics: Vec::new(),
            pinned: Vec::new(),
        })
    }

    fn value_bdd(&self, clause: usize, pos: usize) -> BddRef {
        match self.gp.clauses[clause].choice {
            Some(cv) => self.encoding.groups[cv].values[pos],
            None => BddRef::ONE,
        }
    }

    fn formula(&mut self, atom: AtomId) -> Result<BddRef> {
        let gp = self.gp;
        let mut acc = BddRef::ZERO;
        for &(c, pos) in &gp.rules_for[atom] {
            let mut term = self.value_bdd(c, pos);
            for &(b, positive) in &gp.clauses[c].body {
                let f = self.atom_cache.get(&b).copied().unwrap_or(BddRef::ZERO);
                term = self.manager.try_and(term, if positive { f } else { !f })?;
                if term == BddRef::ZERO {
                    break;
                }
            }
            acc = self.manager.try_or(acc, term)?;
        }
        Ok(acc)
    }

    fn maybe_collect(&mut self, extra: &[BddRef]) {
        if self.manager.gc_due() {
            self.collect_garbage(extra);
        }
    }

    /// Frees every node not reachable from the atom formulas, the value
    /// diagrams, pinned roots or `extra`.
    pub fn collect_garbage(&mut self, extra: &[BddRef]) -> usize {
        let mut roots: Vec<BddRef> = self.atom_cache.values().copied().collect();
        roots.extend(extra);
        roots.extend(&self.pinned);
        for g in &self.encoding.groups {
            roots.extend(&g.values);
        }
        self.manager.collect_garbage(&roots)
    }

    /// Keeps `r` alive across later compilation steps.
    pub fn pin(&mut self, r: BddRef) {
        self.pinned.push(r);
    }

    /// Compiles the formulas of `targets` and everything they depend on.
    pub fn compile_atoms(&mut self, targets: &[AtomId]) -> Result<()> {
        let gp = self.gp;
        let cone = gp.dependency_cone(targets);
        for (ci, comp) in gp.strata.components.iter().enumerate() {
            if !cone[comp[0]] || self.atom_cache.contains_key(&comp[0]) {
                continue;
            }
            self.stats.components += 1;
            if !gp.strata.recursive[ci] {
                let f = self.formula(comp[0])?;
                self.atom_cache.insert(comp[0], f);
            } else {
                for &a in comp {
                    self.atom_cache.insert(a, BddRef::ZERO);
                }
                let mut iterations = 0;
                loop {
                    iterations += 1;
                    let mut changed = false;
                    for &a in comp {
                        let f = self.formula(a)?;
                        if self.atom_cache.insert(a, f) != Some(f) {
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                if iterations > comp.len() + 1 {
                    return Err(Error::Internal(format!(
                        "fixpoint took {iterations} iterations for {} atoms",
                        comp.len()
                    )));
                }
                self.stats.fixpoint_iterations += iterations;
            }
            self.maybe_collect(&[]);
        }
        Ok(())
    }

    /// BDD of the worlds whose model contains `atom`; FALSE (with a
    /// diagnostic) for atoms outside the Herbrand base.
    pub fn compile_atom(&mut self, atom: &crate::model::Atom) -> Result<BddRef> {
        match self.gp.atom_id(atom) {
            Some(id) => {
                self.compile_atoms(&[id])?;
                Ok(self.atom_cache[&id])
            }
            None => {
                self.diagnostics.push(format!("unknown atom {atom}"));
                Ok(BddRef::ZERO)
            }
        }
    }

    /// Conjunction of the literals.
    pub fn compile_literals(&mut self, literals: &[Literal]) -> Result<BddRef> {
        let ids: Vec<AtomId> = literals
            .iter()
            .filter_map(|l| self.gp.atom_id(&l.atom))
            .collect();
        self.compile_atoms(&ids)?;
        let mut acc = BddRef::ONE;
        for l in literals {
            let f = self.compile_atom(&l.atom)?;
            acc = self.manager.try_and(acc, if l.positive { f } else { !f })?;
        }
        Ok(acc)
    }

    /// Exactly-one constraints of all one-hot groups, conjoined one group at
    /// a time onto `root`.
    pub fn conjoin_constraints(&mut self, root: BddRef) -> Result<BddRef> {
        let mut root = root;
        let mut order: Vec<usize> = (0..self.encoding.groups.len()).collect();
        order.sort_by_key(|&g| {
            self.encoding.groups[g]
                .vars
                .first()
                .map_or(u32::MAX, |&v| self.manager.var_info(v).level)
        });
        for g in order {
            if self.encoding.groups[g].mode != EncodingMode::OneHot {
                continue;
            }
            let c = exactly_one(&mut self.manager, &self.encoding.groups[g])?;
            root = self.manager.try_and(root, c)?;
            self.maybe_collect(&[root]);
        }
        Ok(root)
    }

    /// Conjunction of the evidence literals, further conjoined with the
    /// exactly-one constraint of every one-hot group when `constrain` is
    /// set.
    pub fn compile_evidence(&mut self, evidence: &[Literal], constrain: bool) -> Result<BddRef> {
        let e = self.compile_literals(evidence)?;
        if constrain {
            self.conjoin_constraints(e)
        } else {
            Ok(e)
        }
    }
}

/// Choice variables in the order a top-down, left-to-right derivation of
/// `targets` first reaches them: the body of a clause is explored before
/// the clause's own choice is recorded. Choice variables never reached are
/// not listed.
pub fn encounter_order(gp: &GroundProgram, targets: &[AtomId]) -> Vec<usize> {
    let mut visited = vec![false; gp.atoms.len()];
    let mut recorded = vec![false; gp.choice_vars.len()];
    let mut order = Vec::new();
    // frames: (atom, next rule, next body literal)
    let mut stack: Vec<(AtomId, usize, usize)> = Vec::new();
    for &t in targets {
        if visited[t] {
            continue;
        }
        visited[t] = true;
        stack.push((t, 0, 0));
        while let Some(frame) = stack.last_mut() {
            let (atom, ri, bi) = *frame;
            let Some(&(c, _)) = gp.rules_for[atom].get(ri) else {
                stack.pop();
                continue;
            };
            let clause = &gp.clauses[c];
            if let Some(&(b, _)) = clause.body.get(bi) {
                frame.2 += 1;
                if !visited[b] {
                    visited[b] = true;
                    stack.push((b, 0, 0));
                }
                continue;
            }
            if let Some(cv) = clause.choice {
                if !std::mem::replace(&mut recorded[cv], true) {
                    order.push(cv);
                }
            }
            frame.1 += 1;
            frame.2 = 0;
        }
    }
    order
}
