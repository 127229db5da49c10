//! Constructors and enumerators for the named extremal families: the PR
//! box, Barrett k-outcome boxes, and the full two-output family of
//! nondeterministic/deterministic input blocks with a correlation sign
//! pattern, together with its XOR characterization.

use std::collections::BTreeSet;

use crate::error::Error;
use crate::model::{CorrelationTable, LocalRelabeling, Scenario};
use crate::rational::{half, one, zero, Rational};

/// Parameters of one representative extremal table: `gx` (`gy`) of the `dx`
/// (`dy`) inputs are nondeterministic, and each cell of the `?` region is
/// correlated or anticorrelated.
///
/// The fixed pattern: row `y = 0` and column `x = 0` of the nondeterministic
/// block are correlated, cell `(1,1)` is anticorrelated, and
/// `anticorrelated` lists the anticorrelated cells among the free region
/// `{1..gx-1} x {1..gy-1} \ {(1,1)}`. Deterministic inputs output 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtremalSpec {
    pub dx: usize,
    pub dy: usize,
    pub gx: usize,
    pub gy: usize,
    pub anticorrelated: BTreeSet<(usize, usize)>,
}

impl ExtremalSpec {
    pub fn local(dx: usize, dy: usize) -> Self {
        ExtremalSpec { dx, dy, gx: 0, gy: 0, anticorrelated: BTreeSet::new() }
    }

    pub fn pr() -> Self {
        ExtremalSpec { dx: 2, dy: 2, gx: 2, gy: 2, anticorrelated: BTreeSet::new() }
    }

    pub fn is_nonlocal(&self) -> bool {
        self.gx >= 2
    }

    pub fn check(&self) -> Result<(), Error> {
        if self.dx == 0 || self.dy == 0 {
            return Err(Error::Parameter("dx, dy must be >= 1".into()));
        }
        let g_ok = (self.gx == 0 && self.gy == 0)
            || (self.gx >= 2 && self.gx <= self.dx && self.gy >= 2 && self.gy <= self.dy);
        if !g_ok {
            return Err(Error::Parameter(format!(
                "gx={}, gy={} must both be 0 or both lie in [2, d]",
                self.gx, self.gy
            )));
        }
        for &(x, y) in &self.anticorrelated {
            let in_region =
                (1..self.gx).contains(&x) && (1..self.gy).contains(&y) && (x, y) != (1, 1);
            if !in_region {
                return Err(Error::Parameter(format!(
                    "sign cell ({x},{y}) is outside the free region"
                )));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario { dx: self.dx, dy: self.dy, da: 2, db: 2 }
    }

    /// 1 for anticorrelated nondeterministic cells, 0 for correlated ones.
    /// Only defined on the nondeterministic block `x < gx, y < gy`.
    pub fn cell_parity(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.gx && y < self.gy);
        if (x, y) == (1, 1) {
            1
        } else if x == 0 || y == 0 {
            0
        } else if self.anticorrelated.contains(&(x, y)) {
            1
        } else {
            0
        }
    }
}

/// Barrett box parameter: `k` equiprobable outcomes per party.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarrettSpec {
    pub k: usize,
}

/// The PR box: entries 1/2 where `a xor b = x*y`, else 0.
pub fn pr_box() -> CorrelationTable {
    let s = Scenario { dx: 2, dy: 2, da: 2, db: 2 };
    CorrelationTable::from_fn(s, |x, y, a, b| if a ^ b == x * y { half() } else { zero() })
}

/// The k-outcome Barrett box on scenario `(2,2,k,k)`: entries `1/k` where
/// `(b - a) mod k = x*y`, else 0.
pub fn barrett_box(spec: BarrettSpec) -> Result<CorrelationTable, Error> {
    let k = spec.k;
    if k < 2 {
        return Err(Error::Parameter("barrett box requires k >= 2".into()));
    }
    let s = Scenario { dx: 2, dy: 2, da: k, db: k };
    let w = Rational::new(1.into(), (k as i64).into());
    Ok(CorrelationTable::from_fn(s, |x, y, a, b| {
        if (b + k - a) % k == x * y {
            w.clone()
        } else {
            zero()
        }
    }))
}

/// Builds the representative extremal table for a spec:
/// nondeterministic x nondeterministic cells are correlated or
/// anticorrelated with uniform marginals; against a deterministic partner
/// the deterministic side outputs 0 and the other side stays uniform;
/// deterministic x deterministic cells output `(0,0)` with certainty.
pub fn table2_box(spec: &ExtremalSpec) -> Result<CorrelationTable, Error> {
    spec.check()?;
    let s = spec.scenario();
    Ok(CorrelationTable::from_fn(s, |x, y, a, b| {
        let a_det = x >= spec.gx;
        let b_det = y >= spec.gy;
        match (a_det, b_det) {
            (true, true) => {
                if a == 0 && b == 0 {
                    one()
                } else {
                    zero()
                }
            }
            (true, false) => {
                if a == 0 {
                    half()
                } else {
                    zero()
                }
            }
            (false, true) => {
                if b == 0 {
                    half()
                } else {
                    zero()
                }
            }
            (false, false) => {
                if (a ^ b) as u8 == spec.cell_parity(x, y) {
                    half()
                } else {
                    zero()
                }
            }
        }
    }))
}

/// Fully nondeterministic extremal table from its XOR characterization:
/// `a + b = d(x,1) d(y,1) + sum_{(i,j) in Q} d(x,i) d(y,j) mod 2`, with
/// `Q` excluding `(1,1)`.
pub fn from_xor_characterization(
    dx: usize,
    dy: usize,
    q: &BTreeSet<(usize, usize)>,
) -> Result<CorrelationTable, Error> {
    if dx < 2 || dy < 2 {
        return Err(Error::Parameter("xor characterization needs dx, dy >= 2".into()));
    }
    if q.contains(&(1, 1)) {
        return Err(Error::Parameter("Q must exclude (1,1)".into()));
    }
    for &(i, j) in q {
        if i == 0 || j == 0 || i >= dx || j >= dy {
            return Err(Error::Parameter(format!("Q cell ({i},{j}) out of range")));
        }
    }
    let spec = ExtremalSpec { dx, dy, gx: dx, gy: dy, anticorrelated: q.clone() };
    table2_box(&spec)
}

/// One canonical spec per equivalence class of extremal tables for the
/// given input counts (binary outputs). Distinct specs that coincide as
/// classes are merged; specs are returned in a fixed generation order.
pub fn enumerate_classes(dx: usize, dy: usize, budget: u128) -> Result<Vec<ExtremalSpec>, Error> {
    let mut specs = vec![ExtremalSpec::local(dx, dy)];
    for gx in 2..=dx {
        for gy in 2..=dy {
            let free: Vec<(usize, usize)> = (1..gx)
                .flat_map(|x| (1..gy).map(move |y| (x, y)))
                .filter(|&c| c != (1, 1))
                .collect();
            for mask in 0..(1u64 << free.len()) {
                let anticorrelated = free
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &c)| c)
                    .collect();
                specs.push(ExtremalSpec { dx, dy, gx, gy, anticorrelated });
            }
        }
    }
    let mut seen: Vec<CorrelationTable> = Vec::new();
    let mut out = Vec::new();
    for spec in specs {
        let canon = table2_box(&spec)?.canonical_form(budget)?.0;
        if !seen.contains(&canon) {
            seen.push(canon);
            out.push(spec);
        }
    }
    Ok(out)
}

/// Matches extremal binary-output tables back to catalog entries. Caches
/// the canonical form of every class at one scenario, so repeated lookups
/// (e.g. over decomposition components) pay the orbit scan once per class.
#[derive(Debug, Clone)]
pub struct SpecMatcher {
    budget: u128,
    classes: Vec<(ExtremalSpec, CorrelationTable, LocalRelabeling)>,
}

impl SpecMatcher {
    pub fn new(dx: usize, dy: usize, budget: u128) -> Result<Self, Error> {
        let mut classes = Vec::new();
        for spec in enumerate_classes(dx, dy, budget)? {
            let (canon, r_spec) = table2_box(&spec)?.canonical_form(budget)?;
            classes.push((spec, canon, r_spec));
        }
        Ok(SpecMatcher { budget, classes })
    }

    /// The catalog spec equivalent to `table`, with the relabeling `r`
    /// satisfying `table = table2_box(spec).apply_relabeling(r)`.
    pub fn matching(
        &self,
        table: &CorrelationTable,
    ) -> Result<(ExtremalSpec, LocalRelabeling), Error> {
        let (canon, r_table) = table.canonical_form(self.budget)?;
        for (spec, class_canon, r_spec) in &self.classes {
            if canon == *class_canon {
                let r = r_table.inverse().after(r_spec);
                debug_assert_eq!(table2_box(spec)?.apply_relabeling(&r)?, *table);
                return Ok((spec.clone(), r));
            }
        }
        Err(Error::NotApplicable("table is not equivalent to any catalog entry".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_ORBIT_BUDGET;
    use num_traits::Zero;
    use crate::polytope::is_extremal;
    use crate::rational::rat;

    #[test]
    fn pr_box_cells_match_the_displayed_table() {
        let pr = pr_box();
        // cell (0,0): diagonal halves
        assert_eq!(*pr.get(0, 0, 0, 0), rat(1, 2));
        assert_eq!(*pr.get(0, 0, 1, 1), rat(1, 2));
        assert_eq!(*pr.get(0, 0, 1, 0), zero());
        assert_eq!(*pr.get(0, 0, 0, 1), zero());
        // cell (1,1): anti-diagonal halves
        assert_eq!(*pr.get(1, 1, 0, 1), rat(1, 2));
        assert_eq!(*pr.get(1, 1, 1, 0), rat(1, 2));
        assert_eq!(*pr.get(1, 1, 0, 0), zero());
        assert_eq!(*pr.get(1, 1, 1, 1), zero());
        let m = pr.marginals().unwrap();
        assert_eq!(m.l().unwrap(), vec![rat(1, 2), rat(1, 2)]);
        assert_eq!(m.m().unwrap(), vec![rat(1, 2), rat(1, 2)]);
    }

    #[test]
    fn barrett_k2_is_the_pr_box() {
        assert_eq!(barrett_box(BarrettSpec { k: 2 }).unwrap(), pr_box());
        assert!(barrett_box(BarrettSpec { k: 1 }).is_err());
    }

    #[test]
    fn barrett_k3_matches_its_rule_and_is_nonsignaling() {
        let t = barrett_box(BarrettSpec { k: 3 }).unwrap();
        assert!(t.validate().ok());
        assert!(t.is_nonsignaling());
        for a in 0..3 {
            for b in 0..3 {
                let expect = if (b + 3 - a) % 3 == 1 { rat(1, 3) } else { zero() };
                assert_eq!(*t.get(1, 1, a, b), expect);
            }
        }
        assert!(is_extremal(&t).is_extremal());
    }

    #[test]
    fn minimal_nonlocal_spec_is_the_pr_box() {
        assert_eq!(table2_box(&ExtremalSpec::pr()).unwrap(), pr_box());
    }

    #[test]
    fn local_spec_is_the_all_zero_point() {
        let t = table2_box(&ExtremalSpec::local(3, 3)).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(*t.get(x, y, 0, 0), one());
            }
        }
    }

    #[test]
    fn all_correlated_spec_satisfies_the_xor_rule() {
        let spec = ExtremalSpec { dx: 3, dy: 3, gx: 3, gy: 3, anticorrelated: BTreeSet::new() };
        let t = table2_box(&spec).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let rhs = usize::from(x == 1 && y == 1);
                for a in 0..2 {
                    for b in 0..2 {
                        let expect = if (a + b) % 2 == rhs { rat(1, 2) } else { zero() };
                        assert_eq!(*t.get(x, y, a, b), expect);
                    }
                }
            }
        }
        let m = t.marginals().unwrap();
        assert!(m.l().unwrap().iter().all(|v| *v == rat(1, 2)));
    }

    #[test]
    fn xor_characterization_matches_table2() {
        let q: BTreeSet<_> = [(2usize, 2usize)].into_iter().collect();
        let t = from_xor_characterization(3, 3, &q).unwrap();
        let spec = ExtremalSpec { dx: 3, dy: 3, gx: 3, gy: 3, anticorrelated: q.clone() };
        assert_eq!(t, table2_box(&spec).unwrap());
        // cells (1,1) and (2,2) anticorrelated, others correlated
        for x in 0..3 {
            for y in 0..3 {
                let anti = (x == 1 && y == 1) || (x == 2 && y == 2);
                assert_eq!(t.get(x, y, 0, 0).is_zero(), anti);
            }
        }
        assert!(is_extremal(&t).is_extremal());
        assert_eq!(from_xor_characterization(2, 2, &BTreeSet::new()).unwrap(), pr_box());
        let bad: BTreeSet<_> = [(1usize, 1usize)].into_iter().collect();
        assert!(from_xor_characterization(3, 3, &bad).is_err());
    }

    #[test]
    fn marginals_follow_the_block_structure() {
        let spec = ExtremalSpec { dx: 4, dy: 3, gx: 2, gy: 2, anticorrelated: BTreeSet::new() };
        let t = table2_box(&spec).unwrap();
        let m = t.marginals().unwrap();
        let l = m.l().unwrap();
        for x in 0..4 {
            let expect = if x < 2 { rat(1, 2) } else { one() };
            assert_eq!(l[x], expect);
        }
        assert!(t.validate().ok());
        assert!(t.is_nonsignaling());
        assert!(is_extremal(&t).is_extremal());
    }

    #[test]
    fn class_counts_for_tiny_scenarios() {
        // d = 1: only the deterministic class (no nonlocal spec fits g >= 2)
        assert_eq!(enumerate_classes(1, 1, DEFAULT_ORBIT_BUDGET).unwrap().len(), 1);
        // d = 2: deterministic and PR
        let classes = enumerate_classes(2, 2, DEFAULT_ORBIT_BUDGET).unwrap();
        assert_eq!(classes.len(), 2);
        assert!(classes.iter().any(|c| !c.is_nonlocal()));
        assert!(classes.iter().any(|c| c.is_nonlocal()));
    }

    #[test]
    fn spec_matcher_inverts_arbitrary_relabelings() {
        let matcher = SpecMatcher::new(2, 2, DEFAULT_ORBIT_BUDGET).unwrap();
        let s = Scenario::new(2, 2, 2, 2).unwrap();
        let relabelings = LocalRelabeling::all(s);
        for (i, spec) in enumerate_classes(2, 2, DEFAULT_ORBIT_BUDGET).unwrap().iter().enumerate() {
            let base = table2_box(spec).unwrap();
            // a scattering of relabelings, including the identity
            for r in relabelings.iter().step_by(37 + i) {
                let t = base.apply_relabeling(r).unwrap();
                let (found, back) = matcher.matching(&t).unwrap();
                assert_eq!(table2_box(&found).unwrap().apply_relabeling(&back).unwrap(), t);
            }
        }
        // a non-extremal table matches nothing
        let mixed = CorrelationTable::from_fn(s, |_, _, _, _| rat(1, 4));
        assert!(matcher.matching(&mixed).is_err());
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        let mut spec = ExtremalSpec::pr();
        spec.gy = 0;
        assert!(spec.check().is_err());
        let mut spec = ExtremalSpec::pr();
        spec.anticorrelated.insert((1, 1));
        assert!(spec.check().is_err());
    }
}
