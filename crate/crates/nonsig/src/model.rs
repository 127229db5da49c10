//! Conditional probability tables, their polytope constraints, marginals,
//! and equivalence under local reversible transformations.
//!
//! A table stores `P(a,b|x,y)` densely as exact rationals. Within one input
//! pair `(x,y)` (a "cell") `a` varies along a row and `b` selects the row.

use std::cmp::Ordering;

use num_traits::{One, Signed};

use crate::error::Error;
use crate::rational::{one, zero, Rational};

/// Input/output alphabet sizes for one bipartite measurement scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Scenario {
    pub dx: usize,
    pub dy: usize,
    pub da: usize,
    pub db: usize,
}

impl Scenario {
    pub fn new(dx: usize, dy: usize, da: usize, db: usize) -> Result<Self, Error> {
        if dx == 0 || dy == 0 || da == 0 || db == 0 {
            return Err(Error::Parameter("all scenario dimensions must be >= 1".into()));
        }
        Ok(Scenario { dx, dy, da, db })
    }

    pub fn entry_count(&self) -> usize {
        self.dx * self.dy * self.da * self.db
    }

    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        debug_assert!(x < self.dx && y < self.dy && a < self.da && b < self.db);
        ((x * self.dy + y) * self.da + a) * self.db + b
    }

    /// `dx! * dy! * (da!)^dx * (db!)^dy`, saturating.
    pub fn relabeling_orbit_size(&self) -> u128 {
        fn fact(n: usize) -> u128 {
            (1..=n as u128).product::<u128>().max(1)
        }
        let mut size = fact(self.dx).saturating_mul(fact(self.dy));
        for _ in 0..self.dx {
            size = size.saturating_mul(fact(self.da));
        }
        for _ in 0..self.dy {
            size = size.saturating_mul(fact(self.db));
        }
        size
    }
}

/// Dense exact-rational table of `P(a,b|x,y)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorrelationTable {
    pub scenario: Scenario,
    entries: Vec<Rational>,
}

/// One violated polytope constraint, with the offending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintViolation {
    /// `P(a,b|x,y) < 0`.
    Negative { x: usize, y: usize, a: usize, b: usize, value: Rational },
    /// Cell `(x,y)` does not sum to 1.
    Normalization { x: usize, y: usize, sum: Rational },
}

/// Report produced by [`CorrelationTable::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<ConstraintViolation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One violated nonsignaling equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SignalingViolation {
    /// `sum_b P(a,b|x,y) != sum_b P(a,b|x,y')`.
    AliceDependsOnY { a: usize, x: usize, y: usize, y2: usize },
    /// `sum_a P(a,b|x,y) != sum_a P(a,b|x',y)`.
    BobDependsOnX { b: usize, y: usize, x: usize, x2: usize },
}

/// Per-party marginals of a nonsignaling table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginals {
    /// `alice[x][a] = P(a|x)`.
    pub alice: Vec<Vec<Rational>>,
    /// `bob[y][b] = P(b|y)`.
    pub bob: Vec<Vec<Rational>>,
}

impl Marginals {
    /// `l_x = P(a=0|x)`; defined only for binary outputs.
    pub fn l(&self) -> Option<Vec<Rational>> {
        if self.alice.iter().all(|row| row.len() == 2) {
            Some(self.alice.iter().map(|row| row[0].clone()).collect())
        } else {
            None
        }
    }

    /// `m_y = P(b=0|y)`; defined only for binary outputs.
    pub fn m(&self) -> Option<Vec<Rational>> {
        if self.bob.iter().all(|row| row.len() == 2) {
            Some(self.bob.iter().map(|row| row[0].clone()).collect())
        } else {
            None
        }
    }
}

impl CorrelationTable {
    pub fn from_entries(scenario: Scenario, entries: Vec<Rational>) -> Result<Self, Error> {
        if entries.len() != scenario.entry_count() {
            return Err(Error::Shape(format!(
                "expected {} entries, got {}",
                scenario.entry_count(),
                entries.len()
            )));
        }
        Ok(CorrelationTable { scenario, entries })
    }

    /// Builds a table from a closure giving each entry.
    pub fn from_fn(scenario: Scenario, mut f: impl FnMut(usize, usize, usize, usize) -> Rational) -> Self {
        let mut entries = Vec::with_capacity(scenario.entry_count());
        for x in 0..scenario.dx {
            for y in 0..scenario.dy {
                for a in 0..scenario.da {
                    for b in 0..scenario.db {
                        entries.push(f(x, y, a, b));
                    }
                }
            }
        }
        CorrelationTable { scenario, entries }
    }

    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> &Rational {
        &self.entries[self.scenario.index(x, y, a, b)]
    }

    pub fn set(&mut self, x: usize, y: usize, a: usize, b: usize, v: Rational) {
        let i = self.scenario.index(x, y, a, b);
        self.entries[i] = v;
    }

    pub fn entries(&self) -> &[Rational] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Rational> {
        self.entries
    }

    /// Checks positivity (every entry >= 0) and per-cell normalization.
    /// Exact comparisons, no tolerance.
    pub fn validate(&self) -> ValidationReport {
        let s = self.scenario;
        let mut violations = Vec::new();
        for x in 0..s.dx {
            for y in 0..s.dy {
                let mut sum = zero();
                for a in 0..s.da {
                    for b in 0..s.db {
                        let v = self.get(x, y, a, b);
                        if v.is_negative() {
                            violations.push(ConstraintViolation::Negative {
                                x,
                                y,
                                a,
                                b,
                                value: v.clone(),
                            });
                        }
                        sum += v;
                    }
                }
                if !sum.is_one() {
                    violations.push(ConstraintViolation::Normalization { x, y, sum });
                }
            }
        }
        ValidationReport { violations }
    }

    fn alice_marginal(&self, a: usize, x: usize, y: usize) -> Rational {
        (0..self.scenario.db).map(|b| self.get(x, y, a, b)).sum()
    }

    fn bob_marginal(&self, b: usize, x: usize, y: usize) -> Rational {
        (0..self.scenario.da).map(|a| self.get(x, y, a, b)).sum()
    }

    /// Checks every nonsignaling equality exactly; returns the violated
    /// tuples if any.
    pub fn signaling_violations(&self) -> Vec<SignalingViolation> {
        let s = self.scenario;
        let mut out = Vec::new();
        for x in 0..s.dx {
            for a in 0..s.da {
                let base = self.alice_marginal(a, x, 0);
                for y in 1..s.dy {
                    if self.alice_marginal(a, x, y) != base {
                        out.push(SignalingViolation::AliceDependsOnY { a, x, y: 0, y2: y });
                    }
                }
            }
        }
        for y in 0..s.dy {
            for b in 0..s.db {
                let base = self.bob_marginal(b, 0, y);
                for x in 1..s.dx {
                    if self.bob_marginal(b, x, y) != base {
                        out.push(SignalingViolation::BobDependsOnX { b, y, x: 0, x2: x });
                    }
                }
            }
        }
        out
    }

    pub fn is_nonsignaling(&self) -> bool {
        self.signaling_violations().is_empty()
    }

    /// Per-party marginals, computed at `y = 0` / `x = 0` (any choice gives
    /// the same result on a nonsignaling table).
    pub fn marginals(&self) -> Result<Marginals, Error> {
        let violations = self.signaling_violations();
        if let Some(v) = violations.first() {
            return Err(Error::Signaling(format!("{v:?}")));
        }
        let s = self.scenario;
        let alice = (0..s.dx)
            .map(|x| (0..s.da).map(|a| self.alice_marginal(a, x, 0)).collect())
            .collect();
        let bob = (0..s.dy)
            .map(|y| (0..s.db).map(|b| self.bob_marginal(b, 0, y)).collect())
            .collect();
        Ok(Marginals { alice, bob })
    }

    /// Exact convex/linear combination `sum_i w_i t_i`. All tables must share
    /// a scenario.
    pub fn mix(parts: &[(Rational, &CorrelationTable)]) -> Result<CorrelationTable, Error> {
        let scenario = parts
            .first()
            .ok_or_else(|| Error::Parameter("empty mixture".into()))?
            .1
            .scenario;
        if parts.iter().any(|(_, t)| t.scenario != scenario) {
            return Err(Error::Dimension("mixture components disagree on scenario".into()));
        }
        let mut entries = vec![zero(); scenario.entry_count()];
        for (w, t) in parts {
            for (e, v) in entries.iter_mut().zip(t.entries.iter()) {
                *e += w * v;
            }
        }
        Ok(CorrelationTable { scenario, entries })
    }

    /// Total order on tables of one scenario: lexicographic on the entry
    /// array. Used to pick canonical representatives.
    pub fn cmp_entries(&self, other: &CorrelationTable) -> Ordering {
        self.entries.cmp(&other.entries)
    }

    pub fn apply_relabeling(&self, r: &LocalRelabeling) -> Result<CorrelationTable, Error> {
        r.check(self.scenario)?;
        let s = self.scenario;
        let mut entries = vec![zero(); s.entry_count()];
        for x in 0..s.dx {
            for y in 0..s.dy {
                for a in 0..s.da {
                    for b in 0..s.db {
                        let i = s.index(
                            r.alice_input_perm[x],
                            r.bob_input_perm[y],
                            r.alice_output_perms[x][a],
                            r.bob_output_perms[y][b],
                        );
                        entries[i] = self.get(x, y, a, b).clone();
                    }
                }
            }
        }
        Ok(CorrelationTable { scenario: s, entries })
    }

    /// Lexicographically smallest table over the full relabeling orbit, plus
    /// one relabeling achieving it. Two tables are equivalent under local
    /// reversible transformations iff their canonical forms coincide.
    pub fn canonical_form(&self, budget: u128) -> Result<(CorrelationTable, LocalRelabeling), Error> {
        let s = self.scenario;
        let orbit = s.relabeling_orbit_size();
        if orbit > budget {
            return Err(Error::Budget(format!(
                "relabeling orbit size {orbit} exceeds budget {budget}"
            )));
        }
        let mut best: Option<(CorrelationTable, LocalRelabeling)> = None;
        for r in LocalRelabeling::all(s) {
            let t = self.apply_relabeling(&r).expect("enumerated relabeling fits scenario");
            let better = match &best {
                None => true,
                Some((bt, _)) => t.cmp_entries(bt) == Ordering::Less,
            };
            if better {
                best = Some((t, r));
            }
        }
        Ok(best.expect("orbit is nonempty"))
    }
}

/// Default orbit budget for canonical-form searches.
pub const DEFAULT_ORBIT_BUDGET: u128 = 10_000_000;

/// Input permutations plus per-input output permutations for both parties.
///
/// Applying `r` renames old input `x` to `alice_input_perm[x]` and, under
/// old input `x`, old output `a` to `alice_output_perms[x][a]` (and
/// likewise for Bob).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalRelabeling {
    pub alice_input_perm: Vec<usize>,
    pub bob_input_perm: Vec<usize>,
    pub alice_output_perms: Vec<Vec<usize>>,
    pub bob_output_perms: Vec<Vec<usize>>,
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n)
                    .filter(|i| !p.contains(i))
                    .map(|i| {
                        let mut q = p.clone();
                        q.push(i);
                        q
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

impl LocalRelabeling {
    pub fn identity(s: Scenario) -> Self {
        LocalRelabeling {
            alice_input_perm: (0..s.dx).collect(),
            bob_input_perm: (0..s.dy).collect(),
            alice_output_perms: vec![(0..s.da).collect(); s.dx],
            bob_output_perms: vec![(0..s.db).collect(); s.dy],
        }
    }

    pub fn check(&self, s: Scenario) -> Result<(), Error> {
        let ok = self.alice_input_perm.len() == s.dx
            && self.bob_input_perm.len() == s.dy
            && self.alice_output_perms.len() == s.dx
            && self.bob_output_perms.len() == s.dy
            && is_permutation(&self.alice_input_perm)
            && is_permutation(&self.bob_input_perm)
            && self
                .alice_output_perms
                .iter()
                .all(|p| p.len() == s.da && is_permutation(p))
            && self
                .bob_output_perms
                .iter()
                .all(|p| p.len() == s.db && is_permutation(p));
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("relabeling does not match scenario".into()))
        }
    }

    /// `self` after `other`: applying the result equals applying `other`
    /// first and then `self`.
    pub fn after(&self, other: &LocalRelabeling) -> LocalRelabeling {
        let dx = other.alice_input_perm.len();
        let dy = other.bob_input_perm.len();
        LocalRelabeling {
            alice_input_perm: (0..dx)
                .map(|x| self.alice_input_perm[other.alice_input_perm[x]])
                .collect(),
            bob_input_perm: (0..dy)
                .map(|y| self.bob_input_perm[other.bob_input_perm[y]])
                .collect(),
            alice_output_perms: (0..dx)
                .map(|x| {
                    let mid = other.alice_input_perm[x];
                    other.alice_output_perms[x]
                        .iter()
                        .map(|&a| self.alice_output_perms[mid][a])
                        .collect()
                })
                .collect(),
            bob_output_perms: (0..dy)
                .map(|y| {
                    let mid = other.bob_input_perm[y];
                    other.bob_output_perms[y]
                        .iter()
                        .map(|&b| self.bob_output_perms[mid][b])
                        .collect()
                })
                .collect(),
        }
    }

    pub fn inverse(&self) -> LocalRelabeling {
        let ainv = invert(&self.alice_input_perm);
        let binv = invert(&self.bob_input_perm);
        LocalRelabeling {
            alice_output_perms: ainv
                .iter()
                .map(|&old_x| invert(&self.alice_output_perms[old_x]))
                .collect(),
            bob_output_perms: binv
                .iter()
                .map(|&old_y| invert(&self.bob_output_perms[old_y]))
                .collect(),
            alice_input_perm: ainv,
            bob_input_perm: binv,
        }
    }

    /// Enumerates the full relabeling group of a scenario, in a fixed order.
    pub fn all(s: Scenario) -> Vec<LocalRelabeling> {
        let in_a = permutations(s.dx);
        let in_b = permutations(s.dy);
        let out_a = permutations(s.da);
        let out_b = permutations(s.db);
        let out_a_tuples = tuples(&out_a, s.dx);
        let out_b_tuples = tuples(&out_b, s.dy);
        let mut all = Vec::new();
        for pa in &in_a {
            for pb in &in_b {
                for oa in &out_a_tuples {
                    for ob in &out_b_tuples {
                        all.push(LocalRelabeling {
                            alice_input_perm: pa.clone(),
                            bob_input_perm: pb.clone(),
                            alice_output_perms: oa.clone(),
                            bob_output_perms: ob.clone(),
                        });
                    }
                }
            }
        }
        all
    }
}

fn tuples(choices: &[Vec<usize>], len: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                choices.iter().map(move |c| {
                    let mut u = t.clone();
                    u.push(c.clone());
                    u
                })
            })
            .collect();
    }
    out
}

/// Deterministic local point: `a = f(x)`, `b = g(y)` with probability 1.
pub fn deterministic_table(s: Scenario, f: &[usize], g: &[usize]) -> CorrelationTable {
    CorrelationTable::from_fn(s, |x, y, a, b| {
        if a == f[x] && b == g[y] {
            one()
        } else {
            zero()
        }
    })
}
