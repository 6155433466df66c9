//! Variable reordering by adjacent-level swaps.

use super::{BddManager, BddRef, Node, VarId};

impl BddManager {
    /// Exchanges the variables at `level` and `level + 1`.
    ///
    /// Only nodes of the upper variable whose children test the lower one
    /// are rewritten, in place, so the cost is proportional to the number of
    /// nodes at the two levels and every existing reference stays valid.
    pub fn swap_adjacent(&mut self, level: u32) {
        let l = level as usize;
        assert!(l + 1 < self.level_to_var.len(), "swap past the last level");
        let x = self.level_to_var[l];
        let y = self.level_to_var[l + 1];

        let mut rewrite: Vec<u32> = self.unique[x as usize]
            .values()
            .copied()
            .filter(|&n| {
                let node = &self.nodes[n as usize];
                self.nodes[node.lo.node() as usize].var == y
                    || self.nodes[node.hi.node() as usize].var == y
            })
            .collect();
        rewrite.sort_unstable();
        for &n in &rewrite {
            let node = self.nodes[n as usize];
            self.unique[x as usize].remove(&(node.lo, node.hi));
        }

        self.level_to_var[l] = y;
        self.level_to_var[l + 1] = x;
        self.vars[y as usize].level = level;
        self.vars[x as usize].level = level + 1;

        let split = |m: &BddManager, r: BddRef| -> (BddRef, BddRef) {
            if m.nodes[r.node() as usize].var == y {
                m.cofactors(r)
            } else {
                (r, r)
            }
        };
        for n in rewrite {
            let node = self.nodes[n as usize];
            let (f00, f01) = split(self, node.lo);
            let (f10, f11) = split(self, node.hi);
            let hi = self.mk_unchecked(x, f01, f11);
            let lo = self.mk_unchecked(x, f00, f10);
            debug_assert!(!hi.is_complemented());
            debug_assert_ne!(lo, hi);
            self.nodes[n as usize] = Node { var: y, lo, hi };
            let prev = self.unique[y as usize].insert((lo, hi), n);
            debug_assert!(prev.is_none());
        }
        self.stats.swaps += 1;
    }

    /// Rearranges the order to `target` (a permutation of all variables)
    /// through adjacent swaps.
    pub fn set_order(&mut self, target: &[VarId]) {
        assert_eq!(target.len(), self.vars.len(), "order must list every variable");
        for (pos, &var) in target.iter().enumerate() {
            let mut cur = self.vars[var as usize].level;
            while cur as usize > pos {
                self.swap_adjacent(cur - 1);
                cur -= 1;
            }
        }
        self.and_cache.clear();
    }

    /// Moves every Boolean variable of the given groups above all other
    /// variables, keeping the relative order inside both partitions. Groups
    /// stay contiguous when they were contiguous before.
    pub fn reorder_groups_front(&mut self, groups: &[usize]) {
        let selected = |v: VarId, m: &BddManager| groups.contains(&m.vars[v as usize].group);
        let mut target: Vec<VarId> = self
            .level_to_var
            .iter()
            .copied()
            .filter(|&v| selected(v, self))
            .collect();
        target.extend(
            self.level_to_var
                .iter()
                .copied()
                .filter(|&v| !selected(v, self)),
        );
        if target != self.level_to_var {
            self.set_order(&target);
        }
    }
}
