//! Exact convex geometry on the nonsignaling polytope: locality membership
//! with witness or Bell-type separating certificate, extremality via a
//! tight-constraint rank test, Caratheodory decomposition into vertices, and
//! brute-force vertex enumeration (double description) for small scenarios.

use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::Error;
use crate::linalg::{self, Feasibility, Matrix};
use crate::model::{deterministic_table, CorrelationTable, Scenario};
use crate::rational::{one, zero, Rational};

/// Default cap on deterministic-strategy count in [`is_local`].
pub const DEFAULT_LOCAL_BUDGET: usize = 65_536;
/// Default cap on the variable count in [`enumerate_vertices`].
pub const DEFAULT_VERTEX_CAP: usize = 64;

/// Shared-randomness model witnessing locality: a convex combination of
/// deterministic strategies `a = f(x)`, `b = g(y)`.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub weights: Vec<(Rational, Vec<usize>, Vec<usize>)>,
}

impl LocalModel {
    /// Rebuilds the table `sum_e p_e P(a|x,e) P(b|y,e)` exactly.
    pub fn reconstruct(&self, s: Scenario) -> Result<CorrelationTable, Error> {
        let parts: Vec<(Rational, CorrelationTable)> = self
            .weights
            .iter()
            .map(|(w, f, g)| (w.clone(), deterministic_table(s, f, g)))
            .collect();
        CorrelationTable::mix(&parts.iter().map(|(w, t)| (w.clone(), t)).collect::<Vec<_>>())
    }
}

/// A violated Bell-type inequality from the exact feasibility dual:
/// `sum coeffs[i] * P_i + offset <= 0` for every local table, but `> 0` at
/// the separated table.
#[derive(Debug, Clone)]
pub struct BellCertificate {
    pub coeffs: Vec<Rational>,
    pub offset: Rational,
}

impl BellCertificate {
    pub fn evaluate(&self, t: &CorrelationTable) -> Rational {
        let mut s = self.offset.clone();
        for (c, v) in self.coeffs.iter().zip(t.entries()) {
            s += c * v;
        }
        s
    }
}

#[derive(Debug, Clone)]
pub enum LocalityResult {
    Local(LocalModel),
    Nonlocal(BellCertificate),
}

impl LocalityResult {
    pub fn is_local(&self) -> bool {
        matches!(self, LocalityResult::Local(_))
    }
}

fn strategies(inputs: usize, outputs: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..inputs {
        out = out
            .into_iter()
            .flat_map(|f| {
                (0..outputs).map(move |o| {
                    let mut g = f.clone();
                    g.push(o);
                    g
                })
            })
            .collect();
    }
    out
}

/// Exact membership test for the local polytope (convex hull of the
/// `da^dx * db^dy` deterministic points), via rational phase-1 simplex.
pub fn is_local(table: &CorrelationTable, budget: usize) -> Result<LocalityResult, Error> {
    let s = table.scenario;
    let fa = strategies(s.dx, s.da);
    let fb = strategies(s.dy, s.db);
    let n = fa.len().checked_mul(fb.len()).unwrap_or(usize::MAX);
    if n > budget {
        return Err(Error::Budget(format!(
            "{n} deterministic strategies exceed budget {budget}"
        )));
    }
    let rows = s.entry_count() + 1;
    let mut a = Matrix::zeros(rows, n);
    let mut pairs = Vec::with_capacity(n);
    let mut col = 0;
    for f in &fa {
        for g in &fb {
            for x in 0..s.dx {
                for y in 0..s.dy {
                    a.set(s.index(x, y, f[x], g[y]), col, one());
                }
            }
            a.set(rows - 1, col, one());
            pairs.push((f.clone(), g.clone()));
            col += 1;
        }
    }
    let mut b: Vec<Rational> = table.entries().to_vec();
    b.push(one());
    match linalg::simplex_feasibility(&a, &b) {
        Feasibility::Feasible(p) => {
            let weights = p
                .into_iter()
                .zip(pairs)
                .filter(|(w, _)| !w.is_zero())
                .map(|(w, (f, g))| (w, f, g))
                .collect();
            Ok(LocalityResult::Local(LocalModel { weights }))
        }
        Feasibility::Infeasible(y) => {
            let offset = y[rows - 1].clone();
            let coeffs = y[..rows - 1].to_vec();
            Ok(LocalityResult::Nonlocal(BellCertificate { coeffs, offset }))
        }
    }
}

/// Equality constraints of the nonsignaling polytope (normalization plus
/// nonsignaling), over the variable indexing of [`Scenario::index`].
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub scenario: Scenario,
    pub equalities: Matrix,
    pub rhs: Vec<Rational>,
}

impl ConstraintSystem {
    pub fn new(s: Scenario) -> Self {
        let nvars = s.entry_count();
        let mut rows: Vec<Vec<Rational>> = Vec::new();
        let mut rhs = Vec::new();
        // normalization per cell
        for x in 0..s.dx {
            for y in 0..s.dy {
                let mut row = vec![zero(); nvars];
                for a in 0..s.da {
                    for b in 0..s.db {
                        row[s.index(x, y, a, b)] = one();
                    }
                }
                rows.push(row);
                rhs.push(one());
            }
        }
        // Alice's marginal independent of y
        for x in 0..s.dx {
            for a in 0..s.da {
                for y in 1..s.dy {
                    let mut row = vec![zero(); nvars];
                    for b in 0..s.db {
                        row[s.index(x, 0, a, b)] = one();
                        row[s.index(x, y, a, b)] = -one();
                    }
                    rows.push(row);
                    rhs.push(zero());
                }
            }
        }
        // Bob's marginal independent of x
        for y in 0..s.dy {
            for b in 0..s.db {
                for x in 1..s.dx {
                    let mut row = vec![zero(); nvars];
                    for a in 0..s.da {
                        row[s.index(0, y, a, b)] = one();
                        row[s.index(x, y, a, b)] = -one();
                    }
                    rows.push(row);
                    rhs.push(zero());
                }
            }
        }
        ConstraintSystem { scenario: s, equalities: Matrix::from_rows(rows), rhs }
    }
}

#[derive(Debug, Clone)]
pub enum ExtremalityResult {
    /// The tight positivity rows (indices of zero entries) that, together
    /// with the equality system, pin the table uniquely.
    Extremal { tight: Vec<usize> },
    /// A nonzero direction that keeps all equalities and all tight
    /// constraints; moving a small exact step in both senses stays inside
    /// the polytope.
    NotExtremal { direction: Vec<Rational> },
}

impl ExtremalityResult {
    pub fn is_extremal(&self) -> bool {
        matches!(self, ExtremalityResult::Extremal { .. })
    }
}

/// First feasible perturbation direction at `point` under a fixed
/// elimination order, or `None` when the tight system is zero-dimensional.
fn perturbation_direction(sys: &ConstraintSystem, point: &[Rational]) -> Option<Vec<Rational>> {
    let nvars = point.len();
    let free: Vec<usize> = (0..nvars).filter(|&i| !point[i].is_zero()).collect();
    if free.is_empty() {
        return None;
    }
    let e = &sys.equalities;
    let mut sub = Matrix::zeros(e.rows, free.len());
    for r in 0..e.rows {
        for (jc, &j) in free.iter().enumerate() {
            sub.set(r, jc, e.get(r, j).clone());
        }
    }
    let ns = linalg::nullspace(&sub);
    ns.first().map(|v| {
        let mut full = vec![zero(); nvars];
        for (jc, &j) in free.iter().enumerate() {
            full[j] = v[jc].clone();
        }
        full
    })
}

/// Tight-constraint rank test: the table is extremal iff the equality rows
/// plus the positivity rows tight at it leave a zero-dimensional solution
/// space.
pub fn is_extremal(table: &CorrelationTable) -> ExtremalityResult {
    let sys = ConstraintSystem::new(table.scenario);
    match perturbation_direction(&sys, table.entries()) {
        None => ExtremalityResult::Extremal {
            tight: table
                .entries()
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_zero())
                .map(|(i, _)| i)
                .collect(),
        },
        Some(direction) => ExtremalityResult::NotExtremal { direction },
    }
}

/// Exact convex decomposition into extremal tables.
#[derive(Debug, Clone)]
pub struct ConvexDecomposition {
    pub components: Vec<(Rational, CorrelationTable)>,
    pub target: CorrelationTable,
}

impl ConvexDecomposition {
    pub fn reconstruct(&self) -> CorrelationTable {
        let parts: Vec<(Rational, &CorrelationTable)> = self
            .components
            .iter()
            .map(|(w, t)| (w.clone(), t))
            .collect();
        CorrelationTable::mix(&parts).expect("components share a scenario")
    }

    /// Merges equal vertices and sorts components deterministically.
    pub fn normalized(mut self) -> Self {
        self.components
            .sort_by(|(_, a), (_, b)| a.cmp_entries(b));
        let mut merged: Vec<(Rational, CorrelationTable)> = Vec::new();
        for (w, t) in self.components {
            if w.is_zero() {
                continue;
            }
            match merged.last_mut() {
                Some((mw, mt)) if *mt == t => *mw += w,
                _ => merged.push((w, t)),
            }
        }
        self.components = merged;
        self
    }
}

/// Largest exact step `s >= 0` with `point + s * dir >= 0` componentwise.
/// `None` means unbounded (cannot happen inside a cell-normalized table for
/// a nonzero direction).
fn max_step(point: &[Rational], dir: &[Rational]) -> Option<Rational> {
    let mut best: Option<Rational> = None;
    for (p, d) in point.iter().zip(dir) {
        if d.is_negative() {
            let s = -(p / d);
            if best.as_ref().map_or(true, |b| s < *b) {
                best = Some(s);
            }
        }
    }
    best
}

/// Walks from `point` along successive perturbation directions until a
/// vertex (zero-dimensional tight system) is reached. The result's tight
/// set contains the input's.
fn descend_to_vertex(sys: &ConstraintSystem, mut point: Vec<Rational>) -> Vec<Rational> {
    while let Some(dir) = perturbation_direction(sys, &point) {
        let s = max_step(&point, &dir).expect("direction bounded inside the polytope");
        for (p, d) in point.iter_mut().zip(&dir) {
            *p += &s * d;
        }
    }
    point
}

/// Standard vertex peeling: repeatedly split off a vertex of the minimal
/// face containing the residual point. Produces at most (affine dimension
/// + 1) components; reconstruction is exact.
pub fn caratheodory_decompose(table: &CorrelationTable) -> Result<ConvexDecomposition, Error> {
    if !table.validate().ok() || !table.is_nonsignaling() {
        return Err(Error::Signaling("input must be a valid nonsignaling table".into()));
    }
    let s = table.scenario;
    let sys = ConstraintSystem::new(s);
    let mut components: Vec<(Rational, CorrelationTable)> = Vec::new();
    let mut point = table.entries().to_vec();
    let mut remaining = one();
    loop {
        if perturbation_direction(&sys, &point).is_none() {
            components.push((
                remaining,
                CorrelationTable::from_entries(s, point).expect("shape preserved"),
            ));
            break;
        }
        let vertex = descend_to_vertex(&sys, point.clone());
        let diff: Vec<Rational> = point.iter().zip(&vertex).map(|(p, w)| p - w).collect();
        let step = max_step(&point, &diff)
            .ok_or_else(|| Error::Internal("unbounded peel direction".into()))?;
        // point = mu * vertex + (1 - mu) * far_point, mu = step / (1 + step)
        let mu = &step / (one() + &step);
        for (p, d) in point.iter_mut().zip(&diff) {
            *p += &step * d;
        }
        components.push((
            &remaining * &mu,
            CorrelationTable::from_entries(s, vertex).expect("shape preserved"),
        ));
        remaining *= one() - mu;
    }
    Ok(ConvexDecomposition { components, target: table.clone() }.normalized())
}

// ---------------------------------------------------------------------------
// Vertex enumeration (double description over exact rationals)
// ---------------------------------------------------------------------------

struct Ray {
    coords: Vec<Rational>,
    zeros: u128,
}

fn normalize_ray(mut v: Vec<Rational>) -> Vec<Rational> {
    use num_bigint::BigInt;
    let mut lcm = BigInt::one();
    for r in &v {
        lcm = lcm.lcm(r.denom());
    }
    let mut gcd = BigInt::zero();
    let ints: Vec<BigInt> = v
        .iter()
        .map(|r| r.numer() * (&lcm / r.denom()))
        .collect();
    for i in &ints {
        gcd = gcd.gcd(i);
    }
    if gcd.is_zero() {
        return v;
    }
    for (slot, i) in v.iter_mut().zip(ints) {
        *slot = Rational::from(i / &gcd);
    }
    v
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Extreme rays of the pointed cone `{x : rows[i] . x >= 0}` by incremental
/// double description with the combinatorial adjacency test.
fn extreme_rays(rows: &[Vec<Rational>]) -> Result<Vec<Vec<Rational>>, Error> {
    let dim = rows.first().map_or(0, |r| r.len());
    assert!(rows.len() <= 128, "zero-set bitmask capacity");
    // greedy selection of `dim` independent rows for the initial simplicial cone
    let mut chosen: Vec<usize> = Vec::new();
    {
        let mut probe: Vec<Vec<Rational>> = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            probe.push(r.clone());
            if linalg::rank(&Matrix::from_rows(probe.clone())) == probe.len() {
                chosen.push(i);
                if chosen.len() == dim {
                    break;
                }
            } else {
                probe.pop();
            }
        }
    }
    if chosen.len() < dim {
        return Err(Error::Internal("constraint cone is not pointed".into()));
    }
    // initial rays: columns of B^{-1} where B stacks the chosen rows
    let mut initial = Vec::with_capacity(dim);
    for j in 0..dim {
        let b = Matrix::from_rows(chosen.iter().map(|&i| rows[i].clone()).collect());
        let mut e = vec![zero(); dim];
        e[j] = one();
        let col = linalg::solve(&b, &e).expect("B is invertible");
        initial.push(normalize_ray(col));
    }

    let mut processed: Vec<usize> = chosen.clone();
    let zeros_of = |coords: &[Rational], processed: &[usize]| -> u128 {
        let mut z = 0u128;
        for (bit, &ri) in processed.iter().enumerate() {
            if dot(&rows[ri], coords).is_zero() {
                z |= 1u128 << bit;
            }
        }
        z
    };
    let mut rays: Vec<Ray> = initial
        .into_iter()
        .map(|coords| Ray { zeros: zeros_of(&coords, &processed), coords })
        .collect();

    for (ri, row) in rows.iter().enumerate() {
        if chosen.contains(&ri) {
            continue;
        }
        let vals: Vec<Rational> = rays.iter().map(|r| dot(row, &r.coords)).collect();
        let bit = processed.len();
        processed.push(ri);
        if vals.iter().all(|v| !v.is_negative()) {
            for (r, v) in rays.iter_mut().zip(&vals) {
                if v.is_zero() {
                    r.zeros |= 1u128 << bit;
                }
            }
            continue;
        }
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_positive()).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_negative()).collect();
        let mut next: Vec<Ray> = Vec::new();
        for &p in &pos {
            for &n in &neg {
                let common = rays[p].zeros & rays[n].zeros;
                // adjacency: no third extreme ray's zero set contains the
                // intersection
                let adjacent = rays
                    .iter()
                    .enumerate()
                    .all(|(k, r)| k == p || k == n || (r.zeros & common) != common);
                if !adjacent {
                    continue;
                }
                let wp = &vals[p];
                let wn = &vals[n];
                let coords: Vec<Rational> = rays[p]
                    .coords
                    .iter()
                    .zip(&rays[n].coords)
                    .map(|(cp, cn)| wp * cn - wn * cp)
                    .collect();
                let coords = normalize_ray(coords);
                let zeros = zeros_of(&coords, &processed);
                next.push(Ray { coords, zeros });
            }
        }
        for (i, ray) in rays.drain(..).enumerate() {
            if !vals[i].is_negative() {
                let mut ray = ray;
                if vals[i].is_zero() {
                    ray.zeros |= 1u128 << bit;
                }
                next.push(ray);
            }
        }
        rays = next;
    }
    Ok(rays.into_iter().map(|r| r.coords).collect())
}

/// Enumerates all vertices of the nonsignaling polytope for a small
/// scenario. Deliberately independent of the extremal catalog: serves as
/// the test oracle for Result 1 cross-checks.
pub fn enumerate_vertices(s: Scenario, cap: usize) -> Result<Vec<CorrelationTable>, Error> {
    let nvars = s.entry_count();
    if nvars > cap {
        return Err(Error::Budget(format!("{nvars} variables exceed cap {cap}")));
    }
    let sys = ConstraintSystem::new(s);
    // particular solution and nullspace of the equality system
    let v0 = linalg::solve(&sys.equalities, &sys.rhs)
        .ok_or_else(|| Error::Internal("equality system inconsistent".into()))?;
    let basis = linalg::nullspace(&sys.equalities);
    let dim = basis.len();
    // homogeneous coordinates (lambda, t): entry i >= 0 becomes
    // v0_i * lambda + sum_j basis_j_i * t_j >= 0; plus lambda >= 0.
    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(nvars + 1);
    let mut lam_row = vec![zero(); dim + 1];
    lam_row[0] = one();
    rows.push(lam_row);
    for i in 0..nvars {
        let mut row = Vec::with_capacity(dim + 1);
        row.push(v0[i].clone());
        for bj in &basis {
            row.push(bj[i].clone());
        }
        rows.push(row);
    }
    let rays = extreme_rays(&rows)?;
    let mut tables = Vec::new();
    for ray in rays {
        let lam = &ray[0];
        if lam.is_zero() {
            return Err(Error::Internal("unbounded ray in a bounded polytope".into()));
        }
        let lam = if lam.is_negative() {
            return Err(Error::Internal("ray violates lambda >= 0".into()));
        } else {
            lam.clone()
        };
        let t: Vec<Rational> = ray[1..].iter().map(|c| c / &lam).collect();
        let entries: Vec<Rational> = (0..nvars)
            .map(|i| {
                let mut v = v0[i].clone();
                for (j, bj) in basis.iter().enumerate() {
                    v += &bj[i] * &t[j];
                }
                v
            })
            .collect();
        tables.push(CorrelationTable::from_entries(s, entries)?);
    }
    tables.sort_by(|a, b| a.cmp_entries(b));
    tables.dedup();
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::pr_box;
    use crate::model::LocalRelabeling;
    use crate::rational::rat;

    fn uniform22() -> CorrelationTable {
        CorrelationTable::from_fn(Scenario::new(2, 2, 2, 2).unwrap(), |_, _, _, _| rat(1, 4))
    }

    #[test]
    fn pr_box_is_nonlocal_with_valid_certificate() {
        let pr = pr_box();
        match is_local(&pr, DEFAULT_LOCAL_BUDGET).unwrap() {
            LocalityResult::Nonlocal(cert) => {
                assert!(cert.evaluate(&pr).is_positive());
                for f in strategies(2, 2) {
                    for g in strategies(2, 2) {
                        let det = deterministic_table(pr.scenario, &f, &g);
                        assert!(!cert.evaluate(&det).is_positive());
                    }
                }
            }
            LocalityResult::Local(_) => panic!("PR box classified local"),
        }
    }

    #[test]
    fn deterministic_point_is_local_with_single_strategy() {
        let s = Scenario::new(2, 2, 2, 2).unwrap();
        let det = deterministic_table(s, &[0, 1], &[1, 0]);
        match is_local(&det, DEFAULT_LOCAL_BUDGET).unwrap() {
            LocalityResult::Local(model) => {
                assert_eq!(model.weights.len(), 1);
                assert_eq!(model.weights[0].0, one());
                assert_eq!(model.reconstruct(s).unwrap(), det);
            }
            _ => panic!("deterministic point classified nonlocal"),
        }
    }

    #[test]
    fn uniform_table_is_local() {
        let t = uniform22();
        match is_local(&t, DEFAULT_LOCAL_BUDGET).unwrap() {
            LocalityResult::Local(model) => {
                assert_eq!(model.reconstruct(t.scenario).unwrap(), t);
            }
            _ => panic!("uniform table classified nonlocal"),
        }
    }

    #[test]
    fn pr_mixture_with_flipped_pr_is_local() {
        let pr = pr_box();
        let mut flip = LocalRelabeling::identity(pr.scenario);
        flip.bob_output_perms = vec![vec![1, 0], vec![1, 0]];
        let flipped = pr.apply_relabeling(&flip).unwrap();
        let mix = CorrelationTable::mix(&[(rat(1, 2), &pr), (rat(1, 2), &flipped)]).unwrap();
        assert!(is_local(&mix, DEFAULT_LOCAL_BUDGET).unwrap().is_local());
    }

    #[test]
    fn extremality_of_pr_and_interior_point() {
        assert!(is_extremal(&pr_box()).is_extremal());
        match is_extremal(&uniform22()) {
            ExtremalityResult::NotExtremal { direction } => {
                assert!(direction.iter().any(|d| !d.is_zero()));
                // moving a small step in both senses stays valid
                let sys = ConstraintSystem::new(uniform22().scenario);
                for sign in [rat(1, 100), rat(-1, 100)] {
                    let moved: Vec<Rational> = uniform22()
                        .entries()
                        .iter()
                        .zip(&direction)
                        .map(|(p, d)| p + &sign * d)
                        .collect();
                    assert!(moved.iter().all(|v| !v.is_negative()));
                    for r in 0..sys.equalities.rows {
                        let lhs: Rational = (0..sys.equalities.cols)
                            .map(|c| sys.equalities.get(r, c) * &moved[c])
                            .sum();
                        assert_eq!(lhs, sys.rhs[r]);
                    }
                }
            }
            _ => panic!("uniform table classified extremal"),
        }
    }

    #[test]
    fn caratheodory_on_extremal_point_is_trivial() {
        let pr = pr_box();
        let d = caratheodory_decompose(&pr).unwrap();
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.components[0].0, one());
        assert_eq!(d.components[0].1, pr);
    }

    #[test]
    fn caratheodory_reconstructs_uniform_table() {
        let t = uniform22();
        let d = caratheodory_decompose(&t).unwrap();
        assert_eq!(d.reconstruct(), t);
        let dim_bound = 8 + 1; // affine dimension of the (2,2,2,2) polytope + 1
        assert!(d.components.len() <= dim_bound);
        for (w, v) in &d.components {
            assert!(w.is_positive());
            assert!(is_extremal(v).is_extremal());
        }
    }

    #[test]
    fn caratheodory_splits_pr_weight() {
        let pr = pr_box();
        let all_corr = CorrelationTable::from_fn(pr.scenario, |_, _, a, b| {
            if a == b {
                rat(1, 2)
            } else {
                zero()
            }
        });
        let mix = CorrelationTable::mix(&[(rat(3, 4), &pr), (rat(1, 4), &all_corr)]).unwrap();
        let d = caratheodory_decompose(&mix).unwrap();
        assert_eq!(d.reconstruct(), mix);
        let budget = crate::model::DEFAULT_ORBIT_BUDGET;
        let pr_class = pr.canonical_form(budget).unwrap().0;
        let nonlocal_weight: Rational = d
            .components
            .iter()
            .filter(|(_, v)| v.canonical_form(budget).unwrap().0 == pr_class)
            .map(|(w, _)| w.clone())
            .sum();
        assert_eq!(nonlocal_weight, rat(3, 4));
    }

    #[test]
    fn single_input_scenario_has_product_vertices() {
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        let vs = enumerate_vertices(s, DEFAULT_VERTEX_CAP).unwrap();
        assert_eq!(vs.len(), 4);
        for v in &vs {
            assert!(is_extremal(v).is_extremal());
        }
    }

    #[test]
    fn vertex_cap_is_enforced() {
        let s = Scenario::new(5, 5, 3, 3).unwrap();
        assert!(matches!(enumerate_vertices(s, 64), Err(Error::Budget(_))));
    }
}
