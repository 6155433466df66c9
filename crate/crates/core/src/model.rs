//! Core domain types: terms, atoms, annotated clauses, programs, choice
//! variables and MAP/MPE assignments.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Tolerance applied to head-probability sums.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Lowercase identifier or integer.
    Const(String),
    /// Capitalized identifier.
    Var(String),
}

impl Term {
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) | Term::Var(c) => f.write_str(c),
        }
    }
}

/// A predicate applied to constants and variables.
///
/// The implicit null head is the atom with an empty predicate name; it is
/// printed as `''` and never occurs in a clause body.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }

    /// A zero-arity atom.
    pub fn prop(name: impl Into<String>) -> Self {
        Atom::new(name, Vec::new())
    }

    /// Shorthand for a ground atom over constants.
    pub fn ground(predicate: impl Into<String>, consts: &[&str]) -> Self {
        Atom::new(
            predicate,
            consts.iter().map(|c| Term::Const(c.to_string())).collect(),
        )
    }

    pub fn null() -> Self {
        Atom::prop("")
    }

    pub fn is_null(&self) -> bool {
        self.predicate.is_empty()
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| !t.is_var())
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.args.iter().filter_map(|t| match t {
            Term::Var(v) => Some(v.as_str()),
            Term::Const(_) => None,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            return f.write_str("''");
        }
        f.write_str(&self.predicate)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            for (i, t) in self.args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{t}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            atom,
            positive: false,
        }
    }

    pub fn negated(&self) -> Self {
        Literal {
            atom: self.atom.clone(),
            positive: !self.positive,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("\\+ ")?;
        }
        write!(f, "{}", self.atom)
    }
}

/// One disjunct of an annotated head.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub atom: Atom,
    pub prob: f64,
}

impl Head {
    pub fn new(atom: Atom, prob: f64) -> Self {
        Head { atom, prob }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedClause {
    /// Zero-based position in the source.
    pub id: usize,
    pub heads: Vec<Head>,
    pub body: Vec<Literal>,
    /// Set by the `map_query` prefix.
    pub is_query: bool,
}

impl AnnotatedClause {
    pub fn head_sum(&self) -> f64 {
        self.heads.iter().map(|h| h.prob).sum()
    }

    /// A single head annotated 1: an ordinary normal clause with no choice.
    pub fn is_deterministic(&self) -> bool {
        self.heads.len() == 1 && self.heads[0].prob == 1.0
    }

    /// Variables in order of first occurrence (heads, then body).
    pub fn variables(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        let atoms = self
            .heads
            .iter()
            .map(|h| &h.atom)
            .chain(self.body.iter().map(|l| &l.atom));
        for atom in atoms {
            for v in atom.vars() {
                if !seen.iter().any(|s| s == v) {
                    seen.push(v.to_string());
                }
            }
        }
        seen
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub clauses: Vec<AnnotatedClause>,
    /// Conjunction of ground literals.
    pub evidence: Vec<Literal>,
    pub queries: Vec<Atom>,
}

impl Program {
    /// Clauses that carry a random choice, in source order. Their position in
    /// this sequence is the clause number reported in `rule/4` output.
    pub fn probabilistic_clauses(&self) -> impl Iterator<Item = &AnnotatedClause> {
        self.clauses.iter().filter(|c| !c.is_deterministic())
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty() && self.evidence.is_empty() && self.queries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub clause: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.clause {
            Some(id) => write!(f, "clause {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks the syntactic restrictions every program must satisfy before
/// grounding. An empty result means the program is valid.
///
/// Variables that occur only in a head are accepted; the grounder ranges
/// them over the Herbrand universe (this is what makes `path(X,X).` usable).
/// Variables of a negative literal must occur in a positive body literal.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for clause in &program.clauses {
        let diag = |message: String| Diagnostic {
            clause: Some(clause.id),
            message,
        };
        if clause.heads.is_empty() {
            out.push(diag("empty head".into()));
        }
        for h in &clause.heads {
            if !(0.0..=1.0).contains(&h.prob) {
                out.push(diag(format!(
                    "probability {} of head {} outside [0,1]",
                    h.prob, h.atom
                )));
            }
            if h.atom.is_null() {
                out.push(diag("explicit null head".into()));
            }
        }
        let sum = clause.head_sum();
        if sum > 1.0 + PROB_TOLERANCE {
            out.push(diag(format!("head sum {sum} > 1")));
        }
        let positive_vars: BTreeSet<&str> = clause
            .body
            .iter()
            .filter(|l| l.positive)
            .flat_map(|l| l.atom.vars())
            .collect();
        let mut reported = BTreeSet::new();
        for lit in &clause.body {
            if lit.atom.is_null() {
                out.push(diag("null atom in body".into()));
            }
            if lit.positive {
                continue;
            }
            for v in lit.atom.vars() {
                if !positive_vars.contains(v) && reported.insert(v) {
                    out.push(diag(format!("unsafe variable {v}")));
                }
            }
        }
    }
    for lit in &program.evidence {
        if !lit.atom.is_ground() {
            out.push(Diagnostic {
                clause: None,
                message: format!("evidence literal {lit} is not ground"),
            });
        }
    }
    for q in &program.queries {
        if !q.is_ground() {
            out.push(Diagnostic {
                clause: None,
                message: format!("query {q} is not ground"),
            });
        }
    }
    out
}

/// Completes a head with the implicit null atom when its annotations sum to
/// less than one. The null head, when added, occupies index 0 and the
/// explicit heads follow in authored order; otherwise the explicit heads
/// start at index 0 and the caller treats them as selection indices 1..n.
pub fn implicit_null(heads: &[Head]) -> Result<Vec<Head>, Error> {
    let sum: f64 = heads.iter().map(|h| h.prob).sum();
    if sum > 1.0 + PROB_TOLERANCE {
        return Err(Error::HeadSum(sum));
    }
    let mut out = Vec::with_capacity(heads.len() + 1);
    if sum < 1.0 - PROB_TOLERANCE {
        out.push(Head::new(Atom::null(), 1.0 - sum));
    }
    out.extend(heads.iter().cloned());
    Ok(out)
}

/// The multi-valued random variable attached to one grounding of a
/// probabilistic clause.
///
/// Values are addressed by position `0..n_values()`. When `has_null` is set
/// position 0 is the null head and positions coincide with selection
/// indices; otherwise selection index = position + 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceVariable {
    pub clause_id: usize,
    /// Index of the clause among the probabilistic clauses of the program.
    pub rule_number: usize,
    pub grounding_id: usize,
    pub probs: Vec<f64>,
    pub has_null: bool,
    pub is_query: bool,
    /// Aligned with `probs`; the null head is `Atom::null()`.
    pub ground_heads: Vec<Atom>,
    pub ground_body: Vec<Literal>,
}

impl ChoiceVariable {
    /// Builds the variable for a ground clause. Zero-probability heads are
    /// dropped; `None` is returned if fewer than two values remain.
    pub fn from_ground_clause(
        clause_id: usize,
        rule_number: usize,
        grounding_id: usize,
        heads: &[Head],
        body: &[Literal],
        is_query: bool,
    ) -> Result<Option<Self>, Error> {
        let completed = implicit_null(heads)?;
        let has_null = completed.first().is_some_and(|h| h.atom.is_null());
        let kept: Vec<Head> = completed.into_iter().filter(|h| h.prob > 0.0).collect();
        if kept.len() < 2 {
            return Ok(None);
        }
        let has_null = has_null && kept[0].atom.is_null();
        Ok(Some(ChoiceVariable {
            clause_id,
            rule_number,
            grounding_id,
            probs: kept.iter().map(|h| h.prob).collect(),
            has_null,
            is_query,
            ground_heads: kept.into_iter().map(|h| h.atom).collect(),
            ground_body: body.to_vec(),
        }))
    }

    pub fn n_values(&self) -> usize {
        self.probs.len()
    }

    pub fn selection_index(&self, pos: usize) -> usize {
        if self.has_null {
            pos
        } else {
            pos + 1
        }
    }

    /// Position of the most probable value; the first one wins ties.
    pub fn most_probable(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Value positions with the explicit heads in authored order first and
    /// the null head last.
    pub fn listing_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_values())
            .filter(|&i| !self.ground_heads[i].is_null())
            .collect();
        order.extend((0..self.n_values()).filter(|&i| self.ground_heads[i].is_null()));
        order
    }

    /// `rule/4` description of selecting value `pos`.
    pub fn rule4(&self, pos: usize) -> Rule4 {
        let head = &self.ground_heads[pos];
        let order = self.listing_order();
        Rule4 {
            clause: self.rule_number,
            head: if head.is_null() {
                String::new()
            } else {
                head.to_string()
            },
            heads: order
                .into_iter()
                .map(|i| Rule4Head {
                    atom: if self.ground_heads[i].is_null() {
                        String::new()
                    } else {
                        self.ground_heads[i].to_string()
                    },
                    prob: self.probs[i],
                })
                .collect(),
            body: render_body(&self.ground_body),
        }
    }
}

fn render_body(body: &[Literal]) -> String {
    let lit = |l: &Literal| {
        if l.positive {
            l.atom.to_string()
        } else {
            format!("\\+{}", l.atom)
        }
    };
    match body {
        [] => "true".to_string(),
        [one] => lit(one),
        many => format!("({})", many.iter().map(lit).collect::<Vec<_>>().join(",")),
    }
}

/// Head selections for a set of choice variables: `(choice variable index,
/// value position)` pairs in report order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    pub entries: Vec<(usize, usize)>,
}

impl Assignment {
    pub fn get(&self, cv: usize) -> Option<usize> {
        self.entries.iter().find(|(c, _)| *c == cv).map(|&(_, v)| v)
    }

    pub fn to_rule4(&self, choice_vars: &[ChoiceVariable]) -> Vec<Rule4> {
        self.entries
            .iter()
            .map(|&(cv, pos)| choice_vars[cv].rule4(pos))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule4Head {
    pub atom: String,
    pub prob: f64,
}

/// One selected head in the `rule(Clause, Head, Heads, Body)` report
/// format. The null head is the empty string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule4 {
    pub clause: usize,
    pub head: String,
    pub heads: Vec<Rule4Head>,
    pub body: String,
}

fn quote_null(s: &str) -> &str {
    if s.is_empty() {
        "''"
    } else {
        s
    }
}

impl fmt::Display for Rule4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let heads: Vec<String> = self
            .heads
            .iter()
            .map(|h| format!("{}:{}", quote_null(&h.atom), fmt_prob(h.prob)))
            .collect();
        write!(
            f,
            "rule({}, {}, [{}], {})",
            self.clause,
            quote_null(&self.head),
            heads.join(", "),
            self.body
        )
    }
}

/// Human-readable probability: at most twelve decimals, trailing zeros
/// trimmed.
pub fn fmt_prob(p: f64) -> String {
    let s = format!("{p:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
