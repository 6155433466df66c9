//! Reference semantics by exhaustive world enumeration.
//!
//! A world selects one value for every choice variable; its model is the
//! stratified least model of the selected rules, computed by naive
//! iteration stratum by stratum. Nothing here depends on the diagram
//! modules.

use crate::error::{Error, Result};
use crate::grounder::{AtomId, GroundProgram};
use crate::model::Literal;
use crate::par::ExecMode;

pub const DEFAULT_WORLD_CAP: u128 = 1 << 22;

/// Worlds per parallel work unit.
const CHUNK: u64 = 1 << 12;

/// Tolerance under which two optimal values count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    /// Value position per choice variable.
    pub selection: Vec<usize>,
    pub probability: f64,
    /// Truth value per ground atom.
    pub model: Vec<bool>,
}

/// Optimal value of a MAP problem and every assignment attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSolution {
    pub value: f64,
    /// Value positions aligned with the query variables.
    pub argmax: Vec<Vec<usize>>,
}

impl MapSolution {
    /// Whether `(choice variable, position)` pairs select an optimal
    /// assignment of `query_vars`.
    pub fn contains(&self, query_vars: &[usize], entries: &[(usize, usize)]) -> bool {
        let mut x = Vec::with_capacity(query_vars.len());
        for q in query_vars {
            match entries.iter().find(|(cv, _)| cv == q) {
                Some(&(_, pos)) => x.push(pos),
                None => return false,
            }
        }
        self.argmax.contains(&x)
    }
}

#[derive(Clone, Debug)]
pub struct Oracle<'a> {
    gp: &'a GroundProgram,
    pub cap: u128,
    pub exec: ExecMode,
    /// Per stratum: `(head, clause, position)` triples of the rules whose
    /// head lies in it.
    rules: Vec<Vec<(AtomId, usize, usize)>>,
}

impl<'a> Oracle<'a> {
    pub fn new(gp: &'a GroundProgram) -> Self {
        let levels = gp.strata.stratum.iter().copied().max().map_or(0, |s| s + 1);
        let mut rules = vec![Vec::new(); levels];
        for (atom, list) in gp.rules_for.iter().enumerate() {
            for &(c, pos) in list {
                rules[gp.strata.stratum[atom]].push((atom, c, pos));
            }
        }
        Oracle {
            gp,
            cap: DEFAULT_WORLD_CAP,
            exec: ExecMode::default(),
            rules,
        }
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = exec;
        self
    }

    fn world_count(&self) -> Result<u64> {
        let worlds = self.gp.num_worlds();
        if worlds > self.cap {
            return Err(Error::WorldCap {
                worlds,
                cap: self.cap,
            });
        }
        Ok(worlds as u64)
    }

    /// Selection and probability of world number `index` (mixed radix, the
    /// first choice variable varying fastest).
    fn decode(&self, mut index: u64, selection: &mut [usize]) -> f64 {
        let mut p = 1.0;
        for (cv, slot) in self.gp.choice_vars.iter().zip(selection.iter_mut()) {
            let n = cv.n_values() as u64;
            *slot = (index % n) as usize;
            index /= n;
            p *= cv.probs[*slot];
        }
        p
    }

    /// Stratified least model of the world `selection`.
    pub fn model(&self, selection: &[usize]) -> Vec<bool> {
        let gp = self.gp;
        let mut model = vec![false; gp.atoms.len()];
        for stratum in &self.rules {
            loop {
                let mut changed = false;
                for &(head, c, pos) in stratum {
                    if model[head] {
                        continue;
                    }
                    let gc = &gp.clauses[c];
                    if gc.choice.is_some_and(|cv| selection[cv] != pos) {
                        continue;
                    }
                    if gc.pos_body.iter().all(|&b| model[b]) && gc.neg_body.iter().all(|&b| !model[b]) {
                        model[head] = true;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }
        model
    }

    fn satisfies(&self, model: &[bool], literals: &[Literal]) -> bool {
        literals.iter().all(|l| {
            let truth = self.gp.atom_id(&l.atom).is_some_and(|a| model[a]);
            truth == l.positive
        })
    }

    /// Runs `visit(selection, probability, model)` over every world, split in
    /// fixed chunks; returns the per-chunk accumulators in order.
    fn fold_chunks<T, F>(&self, init: impl Fn() -> T + Sync + Send, visit: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut T, &[usize], f64, &[bool]) + Sync + Send,
    {
        let worlds = self.world_count()?;
        let chunks = worlds.div_ceil(CHUNK) as usize;
        Ok(self.exec.map(chunks, |ci| {
            let mut acc = init();
            let mut selection = vec![0; self.gp.choice_vars.len()];
            let start = ci as u64 * CHUNK;
            for w in start..(start + CHUNK).min(worlds) {
                let p = self.decode(w, &mut selection);
                let model = self.model(&selection);
                visit(&mut acc, &selection, p, &model);
            }
            acc
        }))
    }

    /// Every world, in index order.
    pub fn worlds(&self) -> Result<Vec<World>> {
        let chunks = self.fold_chunks(Vec::new, |acc: &mut Vec<World>, sel, p, model| {
            acc.push(World {
                selection: sel.to_vec(),
                probability: p,
                model: model.to_vec(),
            })
        })?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Total probability of the worlds whose model satisfies every literal.
    pub fn prob(&self, literals: &[Literal]) -> Result<f64> {
        let chunks = self.fold_chunks(
            || 0.0,
            |acc: &mut f64, _, p, model| {
                if self.satisfies(model, literals) {
                    *acc += p;
                }
            },
        )?;
        Ok(chunks.into_iter().sum())
    }

    /// `P(query | evidence)`.
    pub fn cond_prob(&self, query: &[Literal], evidence: &[Literal]) -> Result<f64> {
        let pe = self.prob(evidence)?;
        if pe <= 0.0 {
            return Err(Error::EvidenceUnsatisfiable);
        }
        let mut both = query.to_vec();
        both.extend_from_slice(evidence);
        Ok(self.prob(&both)? / pe)
    }

    /// Maximum over assignments `x` of `query_vars` of `P(x, evidence)`.
    pub fn map(&self, evidence: &[Literal], query_vars: &[usize]) -> Result<MapSolution> {
        let radix: Vec<usize> = query_vars
            .iter()
            .map(|&q| self.gp.choice_vars[q].n_values())
            .collect();
        let size: usize = radix.iter().product();
        let chunks = self.fold_chunks(
            || vec![0.0; size],
            |acc: &mut Vec<f64>, sel, p, model| {
                if self.satisfies(model, evidence) {
                    let mut idx = 0;
                    for (&q, &r) in query_vars.iter().zip(&radix).rev() {
                        idx = idx * r + sel[q];
                    }
                    acc[idx] += p;
                }
            },
        )?;
        let mut joint = vec![0.0; size];
        for chunk in chunks {
            for (j, c) in joint.iter_mut().zip(chunk) {
                *j += c;
            }
        }
        let value = joint.iter().copied().fold(0.0, f64::max);
        if value <= 0.0 {
            return Err(Error::EvidenceUnsatisfiable);
        }
        let argmax = joint
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= value - TIE_TOLERANCE)
            .map(|(mut idx, _)| {
                radix
                    .iter()
                    .map(|&r| {
                        let d = idx % r;
                        idx /= r;
                        d
                    })
                    .collect()
            })
            .collect();
        Ok(MapSolution { value, argmax })
    }

    /// MAP over every choice variable.
    pub fn mpe(&self, evidence: &[Literal]) -> Result<MapSolution> {
        let all: Vec<usize> = (0..self.gp.choice_vars.len()).collect();
        self.map(evidence, &all)
    }
}

pub fn enumerate_worlds(gp: &GroundProgram) -> Result<Vec<World>> {
    Oracle::new(gp).worlds()
}

pub fn exact_prob(gp: &GroundProgram, literals: &[Literal]) -> Result<f64> {
    Oracle::new(gp).prob(literals)
}

pub fn exact_map(gp: &GroundProgram, evidence: &[Literal], query_vars: &[usize]) -> Result<MapSolution> {
    Oracle::new(gp).map(evidence, query_vars)
}

pub fn exact_mpe(gp: &GroundProgram, evidence: &[Literal]) -> Result<MapSolution> {
    Oracle::new(gp).mpe(evidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounder::ground;
    use crate::model::Atom;
    use crate::parser::parse_program;

    const EX1: &str = "red(b1):0.6; green(b1):0.3; blue(b1):0.1 :- pick(b1).\n\
                       pick(b1):0.6; no_pick(b1):0.4.\n\
                       ev :- \\+ blue(b1).\n";

    const EX4: &str = "map_query disease:0.05.\n\
                       map_query malfunction:0.05.\n\
                       positive :- malfunction.\n\
                       map_query positive:0.999 :- disease.\n\
                       map_query positive:0.0001 :- \\+(malfunction), \\+(disease).\n";

    fn gp(src: &str) -> GroundProgram {
        ground(&parse_program(src).unwrap()).unwrap()
    }

    fn lit(name: &str) -> Literal {
        Literal::pos(Atom::prop(name))
    }

    #[test]
    fn colour_example_worlds() {
        let g = gp(EX1);
        let worlds = enumerate_worlds(&g).unwrap();
        assert_eq!(worlds.len(), 6);
        let ev = g.atom_id(&Atom::prop("ev")).unwrap();
        assert_eq!(worlds.iter().filter(|w| w.model[ev]).count(), 5);
        let total: f64 = worlds.iter().map(|w| w.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((exact_prob(&g, &[lit("ev")]).unwrap() - 0.94).abs() < 1e-12);
    }

    #[test]
    fn deterministic_program_has_one_world() {
        let g = gp("a.\nb :- a.\n");
        let worlds = enumerate_worlds(&g).unwrap();
        assert_eq!(worlds.len(), 1);
        assert_eq!(worlds[0].probability, 1.0);
    }

    #[test]
    fn diagnosis_example_has_sixteen_worlds() {
        let g = gp(EX4);
        assert_eq!(enumerate_worlds(&g).unwrap().len(), 16);
        let sol = exact_map(&g, &[lit("positive")], &[0, 1]).unwrap();
        // malfunction selected, disease null
        assert_eq!(sol.argmax, vec![vec![0, 1]]);
    }

    #[test]
    fn contradictory_literals_have_zero_probability() {
        let g = gp("a:0.3.\n");
        let p = exact_prob(&g, &[lit("a"), lit("a").negated()]).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn mpe_and_map_of_colour_example() {
        let g = gp(EX1);
        let mpe = exact_mpe(&g, &[lit("ev")]).unwrap();
        assert!((mpe.value - 0.36).abs() < 1e-12);
        // red (position 0) and pick (position 0)
        assert_eq!(mpe.argmax, vec![vec![0, 0]]);
        let map = exact_map(&g, &[lit("ev")], &[1]).unwrap();
        assert!((map.value - 0.54).abs() < 1e-12);
        assert_eq!(map.argmax, vec![vec![0]]);
        assert!(map.contains(&[1], &[(1, 0)]));
        assert_eq!(mpe.value, exact_map(&g, &[lit("ev")], &[0, 1]).unwrap().value);
    }

    #[test]
    fn cap_is_enforced() {
        let g = gp("a:0.5.\nb:0.5.\nc:0.5.\n");
        let o = Oracle::new(&g).with_cap(4);
        assert!(matches!(o.prob(&[]), Err(Error::WorldCap { worlds: 8, cap: 4 })));
    }

    #[test]
    fn sequential_and_parallel_sums_are_identical() {
        let src: String = (0..14).map(|i| format!("a{i}:0.{}.\n", i % 9 + 1)).collect::<String>()
            + "b :- a1, \\+ a2.\nb :- a5.\n";
        let g = gp(&src);
        let q = [lit("b")];
        let s = Oracle::new(&g).with_exec(ExecMode::Sequential).prob(&q).unwrap();
        let p = Oracle::new(&g).with_exec(ExecMode::Parallel).prob(&q).unwrap();
        assert_eq!(s.to_bits(), p.to_bits());
    }
}
