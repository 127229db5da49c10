//! Quantum front end: correlation tables from states and two-outcome POVMs
//! via the Born rule, rationalized exactly onto the nonsignaling subspace
//! so the exact pipeline (locality test, decomposition, simulation) can
//! consume them.
//!
//! This is the only module that touches floating point. The float-to-exact
//! handoff goes: Born probabilities -> continued-fraction rationals with a
//! bounded denominator -> exact least-squares projection onto the
//! normalization + nonsignaling equalities.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::{Signed, Zero};

use crate::catalog::SpecMatcher;
use crate::error::Error;
use crate::interconvert::box_count;
use crate::linalg::{rank, solve, Matrix};
use crate::model::{CorrelationTable, Scenario, DEFAULT_ORBIT_BUDGET};
use crate::onezero::{decompose_to_table2, DEFAULT_LEAF_BUDGET};
use crate::polytope::{is_local, ConstraintSystem, ConvexDecomposition, DEFAULT_LOCAL_BUDGET};
use crate::rational::{rat, zero, Rational};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Tolerance for Hermiticity, trace, and completeness checks.
pub const MATRIX_TOLERANCE: f64 = 1e-12;
/// Smallest eigenvalue accepted as nonnegative.
pub const PSD_TOLERANCE: f64 = -1e-10;
/// Denominator bound for the continued-fraction rationalization.
pub const DEFAULT_DENOMINATOR_BOUND: u64 = 1_000_000;

/// A bipartite state with one POVM per input on each side.
#[derive(Debug, Clone)]
pub struct QuantumScenario {
    pub dim_a: usize,
    pub dim_b: usize,
    pub state: ComplexMatrix,
    /// `alice[x][a]` is the POVM element for outcome `a` at input `x`
    pub alice: Vec<Vec<ComplexMatrix>>,
    pub bob: Vec<Vec<ComplexMatrix>>,
}

fn is_hermitian(m: &ComplexMatrix) -> bool {
    (m - m.adjoint()).norm() <= MATRIX_TOLERANCE * (1.0 + m.norm())
}

fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

impl QuantumScenario {
    /// Checks dimensions, Hermiticity, positivity, state trace, and POVM
    /// completeness; reports the first failing check.
    pub fn validate(&self) -> Result<(), Error> {
        let d = self.dim_a * self.dim_b;
        if self.state.nrows() != d || self.state.ncols() != d {
            return Err(Error::Quantum(format!(
                "state is {}x{}, expected {d}x{d}",
                self.state.nrows(),
                self.state.ncols()
            )));
        }
        if !is_hermitian(&self.state) {
            return Err(Error::Quantum("state is not Hermitian".into()));
        }
        if (self.state.trace().re - 1.0).abs() > MATRIX_TOLERANCE
            || self.state.trace().im.abs() > MATRIX_TOLERANCE
        {
            return Err(Error::Quantum("state trace is not 1".into()));
        }
        if min_eigenvalue(&self.state) < PSD_TOLERANCE {
            return Err(Error::Quantum("state is not positive semidefinite".into()));
        }
        if self.alice.is_empty() || self.bob.is_empty() {
            return Err(Error::Quantum("each side needs at least one input".into()));
        }
        for (side, dim, povms) in
            [("Alice", self.dim_a, &self.alice), ("Bob", self.dim_b, &self.bob)]
        {
            for (x, povm) in povms.iter().enumerate() {
                if povm.is_empty() {
                    return Err(Error::Quantum(format!("{side} input {x} has no outcomes")));
                }
                let mut sum = ComplexMatrix::zeros(dim, dim);
                for (a, el) in povm.iter().enumerate() {
                    if el.nrows() != dim || el.ncols() != dim {
                        return Err(Error::Quantum(format!(
                            "{side} element ({x},{a}) has wrong dimension"
                        )));
                    }
                    if !is_hermitian(el) {
                        return Err(Error::Quantum(format!(
                            "{side} element ({x},{a}) is not Hermitian"
                        )));
                    }
                    if min_eigenvalue(el) < PSD_TOLERANCE {
                        return Err(Error::Quantum(format!(
                            "{side} element ({x},{a}) is not positive semidefinite"
                        )));
                    }
                    sum += el;
                }
                if (sum - ComplexMatrix::identity(dim, dim)).norm() > MATRIX_TOLERANCE * dim as f64
                {
                    return Err(Error::Quantum(format!(
                        "{side} POVM at input {x} does not sum to the identity"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, Error> {
        let da = self.alice[0].len();
        let db = self.bob[0].len();
        if self.alice.iter().any(|p| p.len() != da) || self.bob.iter().any(|p| p.len() != db) {
            return Err(Error::Quantum("outcome count differs between inputs".into()));
        }
        Scenario::new(self.alice.len(), self.bob.len(), da, db)
    }

    /// Raw Born probabilities at double precision, indexed by
    /// [`Scenario::index`].
    pub fn born_probabilities(&self) -> Result<Vec<f64>, Error> {
        self.validate()?;
        let s = self.scenario()?;
        let mut probs = vec![0.0; s.entry_count()];
        for x in 0..s.dx {
            for y in 0..s.dy {
                for a in 0..s.da {
                    for b in 0..s.db {
                        let op = self.alice[x][a].kronecker(&self.bob[y][b]);
                        let t = (op * &self.state).trace();
                        if t.im.abs() > 1e-9 {
                            return Err(Error::Quantum(format!(
                                "probability at ({x},{y},{a},{b}) has imaginary part {}",
                                t.im
                            )));
                        }
                        probs[s.index(x, y, a, b)] = t.re;
                    }
                }
            }
        }
        Ok(probs)
    }
}

/// Best rational approximation with denominator at most `max_den`, by the
/// continued-fraction convergents of `v`.
pub fn rationalize(v: f64, max_den: u64) -> Rational {
    assert!(v.is_finite());
    let negative = v < 0.0;
    let mut x = v.abs();
    // convergents p/q of the continued fraction of |v|
    let (mut p0, mut q0, mut p1, mut q1) = (1i128, 0i128, x.floor() as i128, 1i128);
    x -= x.floor();
    while x > 1e-15 && q1 as u64 <= max_den {
        x = 1.0 / x;
        let a = x.floor() as i128;
        x -= x.floor();
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 as u64 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    let r = rat(p1 as i64, q1 as i64);
    if negative {
        -r
    } else {
        r
    }
}

/// Exact least-squares projection of `point` onto the affine subspace
/// `{v : E v = rhs}` spanned by the independent equality rows:
/// `v' = v - E^T (E E^T)^{-1} (E v - rhs)`.
fn project_onto_equalities(
    system: &ConstraintSystem,
    point: &[Rational],
) -> Result<Vec<Rational>, Error> {
    // select an independent subset of rows
    let mut transpose_rows: Vec<Vec<Rational>> = Vec::new();
    for j in 0..system.equalities.cols {
        transpose_rows.push((0..system.equalities.rows).map(|i| system.equalities.get(i, j).clone()).collect());
    }
    let mut tm = Matrix::from_rows(transpose_rows);
    let independent = tm.rref();
    let rows: Vec<usize> = independent;
    let e_rows: Vec<Vec<Rational>> =
        rows.iter().map(|&i| system.equalities.row(i).to_vec()).collect();
    let rhs: Vec<Rational> = rows.iter().map(|&i| system.rhs[i].clone()).collect();
    let m = rows.len();
    let n = point.len();
    // residual = E v - rhs
    let residual: Vec<Rational> = (0..m)
        .map(|i| {
            let dot: Rational = (0..n).map(|j| &e_rows[i][j] * &point[j]).sum();
            dot - &rhs[i]
        })
        .collect();
    if residual.iter().all(|r| r.is_zero()) {
        return Ok(point.to_vec());
    }
    // gram = E E^T
    let gram = Matrix::from_rows(
        (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| (0..n).map(|k| &e_rows[i][k] * &e_rows[j][k]).sum())
                    .collect()
            })
            .collect(),
    );
    debug_assert_eq!(rank(&gram.clone()), m);
    let z = solve(&gram, &residual)
        .ok_or_else(|| Error::Internal("singular Gram matrix in projection".into()))?;
    let mut out = point.to_vec();
    for (i, row) in e_rows.iter().enumerate() {
        for j in 0..n {
            out[j] -= &row[j] * &z[i];
        }
    }
    Ok(out)
}

/// Born-rule table, rationalized: each probability is approximated by a
/// rational with denominator at most `max_den`, then the whole vector is
/// projected exactly onto the nonsignaling equalities. Fails if the
/// projected table leaves the probability simplex, which indicates the
/// approximation was too coarse.
pub fn born_table_with(scenario: &QuantumScenario, max_den: u64) -> Result<CorrelationTable, Error> {
    let s = scenario.scenario()?;
    let probs = scenario.born_probabilities()?;
    // sanity: the float table itself must be close to nonsignaling
    let approx: Vec<Rational> = probs.iter().map(|&p| rationalize(p, max_den)).collect();
    let system = ConstraintSystem::new(s);
    let projected = project_onto_equalities(&system, &approx)?;
    if projected.iter().any(|p| p.is_negative()) {
        return Err(Error::Quantum(
            "rationalized table left the simplex; increase the denominator bound".into(),
        ));
    }
    let table = CorrelationTable::from_entries(s, projected)?;
    if !table.validate().ok() || !table.is_nonsignaling() {
        return Err(Error::Internal("projection failed to restore nonsignaling".into()));
    }
    Ok(table)
}

pub fn born_table(scenario: &QuantumScenario) -> Result<CorrelationTable, Error> {
    born_table_with(scenario, DEFAULT_DENOMINATOR_BOUND)
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Projectors `(I +/- (cos t Z + sin t X)) / 2` onto the Bloch-plane
/// direction at angle `t`.
pub fn bloch_projectors(theta: f64) -> Vec<ComplexMatrix> {
    let (cos, sin) = (theta.cos(), theta.sin());
    let obs = ComplexMatrix::from_row_slice(2, 2, &[c(cos, 0.0), c(sin, 0.0), c(sin, 0.0), c(-cos, 0.0)]);
    let id = ComplexMatrix::identity(2, 2);
    vec![(&id + &obs) * c(0.5, 0.0), (&id - &obs) * c(0.5, 0.0)]
}

fn singlet_state() -> ComplexMatrix {
    // |psi-> = (|01> - |10>) / sqrt(2)
    let v = [c(0.0, 0.0), c(1.0 / 2f64.sqrt(), 0.0), c(-1.0 / 2f64.sqrt(), 0.0), c(0.0, 0.0)];
    let psi = ComplexMatrix::from_column_slice(4, 1, &v);
    &psi * psi.adjoint()
}

/// Singlet state measured along the given Bloch-plane angles (radians).
pub fn singlet_angles(alice: &[f64], bob: &[f64]) -> QuantumScenario {
    QuantumScenario {
        dim_a: 2,
        dim_b: 2,
        state: singlet_state(),
        alice: alice.iter().map(|&t| bloch_projectors(t)).collect(),
        bob: bob.iter().map(|&t| bloch_projectors(t)).collect(),
    }
}

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Named scenarios: `singlet_chsh`, `product_plus`, `mixed_uniform`, or
/// `singlet_angles:<alice degs>;<bob degs>` with comma-separated lists.
pub fn preset(name: &str) -> Result<QuantumScenario, Error> {
    match name {
        // the standard settings maximizing the CHSH combination
        "singlet_chsh" => Ok(singlet_angles(&[0.0, FRAC_PI_2], &[FRAC_PI_4, 3.0 * FRAC_PI_4])),
        "product_plus" => {
            // |+><+| on both sides, measured along Z and X
            let plus = ComplexMatrix::from_row_slice(
                2,
                2,
                &[c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0)],
            );
            let settings = vec![bloch_projectors(0.0), bloch_projectors(FRAC_PI_2)];
            Ok(QuantumScenario {
                dim_a: 2,
                dim_b: 2,
                state: plus.kronecker(&plus),
                alice: settings.clone(),
                bob: settings,
            })
        }
        "mixed_uniform" => {
            let settings = vec![bloch_projectors(0.0), bloch_projectors(FRAC_PI_2)];
            Ok(QuantumScenario {
                dim_a: 2,
                dim_b: 2,
                state: ComplexMatrix::identity(4, 4) * c(0.25, 0.0),
                alice: settings.clone(),
                bob: settings,
            })
        }
        other => {
            if let Some(rest) = other.strip_prefix("singlet_angles:") {
                let mut sides = rest.split(';');
                let parse = |part: Option<&str>| -> Result<Vec<f64>, Error> {
                    part.ok_or_else(|| {
                        Error::Parameter("expected <alice degs>;<bob degs>".into())
                    })?
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map(|deg| deg * PI / 180.0)
                            .map_err(|e| Error::Parse(format!("bad angle {v:?}: {e}")))
                    })
                    .collect()
                };
                let alice = parse(sides.next())?;
                let bob = parse(sides.next())?;
                if alice.is_empty() || bob.is_empty() {
                    return Err(Error::Parameter("each side needs at least one angle".into()));
                }
                return Ok(singlet_angles(&alice, &bob));
            }
            Err(Error::Parameter(format!("unknown preset {other:?}")))
        }
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// End-to-end report for a two-outcome scenario: the rationalized table,
/// its locality verdict, and (when nonlocal) the exact decomposition with
/// the PR-box budget sufficient to simulate it.
#[derive(Debug, Clone)]
pub struct QuantumReport {
    pub table: CorrelationTable,
    pub local: bool,
    /// total weight on nonlocal components of the decomposition
    pub nonlocal_weight: Rational,
    /// PR boxes sufficient for exact simulation: the maximum over
    /// components, since shared randomness selects one component per round
    pub pr_boxes: usize,
    pub decomposition: Option<ConvexDecomposition>,
}

pub fn quantum_to_prbox_report(scenario: &QuantumScenario) -> Result<QuantumReport, Error> {
    let s = scenario.scenario()?;
    if s.da != 2 || s.db != 2 {
        return Err(Error::NotApplicable("report requires two-outcome measurements".into()));
    }
    let table = born_table(scenario)?;
    if is_local(&table, DEFAULT_LOCAL_BUDGET)?.is_local() {
        return Ok(QuantumReport {
            table,
            local: true,
            nonlocal_weight: zero(),
            pr_boxes: 0,
            decomposition: None,
        });
    }
    let decomposition = decompose_to_table2(&table, DEFAULT_LEAF_BUDGET)
        .map_err(|e| Error::Internal(e.to_string()))?
        .decomposition;
    let matcher = SpecMatcher::new(s.dx, s.dy, DEFAULT_ORBIT_BUDGET)?;
    let mut nonlocal_weight = zero();
    let mut pr_boxes = 0;
    for (w, leaf) in &decomposition.components {
        let (spec, _) = matcher.matching(leaf)?;
        if spec.is_nonlocal() {
            nonlocal_weight += w;
            pr_boxes = pr_boxes.max(box_count(&spec)?.used);
        }
    }
    Ok(QuantumReport {
        table,
        local: false,
        nonlocal_weight,
        pr_boxes,
        decomposition: Some(decomposition),
    })
}

/// The CHSH combination `E(0,0) - E(0,1) + E(1,0) + E(1,1)` of correlators
/// `E(x,y) = P(a=b|x,y) - P(a!=b|x,y)` from raw Born probabilities.
pub fn chsh_value(scenario: &QuantumScenario) -> Result<f64, Error> {
    let s = scenario.scenario()?;
    if s.dx < 2 || s.dy < 2 || s.da != 2 || s.db != 2 {
        return Err(Error::NotApplicable("CHSH needs two binary inputs per side".into()));
    }
    let probs = scenario.born_probabilities()?;
    let correlator = |x: usize, y: usize| {
        probs[s.index(x, y, 0, 0)] + probs[s.index(x, y, 1, 1)]
            - probs[s.index(x, y, 0, 1)]
            - probs[s.index(x, y, 1, 0)]
    };
    Ok(correlator(0, 0) - correlator(0, 1) + correlator(1, 0) + correlator(1, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["singlet_chsh", "product_plus", "mixed_uniform"] {
            preset(name).unwrap().validate().unwrap();
        }
        preset("singlet_angles:0,90;45,135").unwrap().validate().unwrap();
        assert!(preset("nope").is_err());
    }

    #[test]
    fn born_probabilities_are_nonsignaling_at_float_precision() {
        let sc = preset("singlet_chsh").unwrap();
        let s = sc.scenario().unwrap();
        let p = sc.born_probabilities().unwrap();
        for x in 0..s.dx {
            for a in 0..s.da {
                let m0: f64 = (0..s.db).map(|b| p[s.index(x, 0, a, b)]).sum();
                for y in 1..s.dy {
                    let my: f64 = (0..s.db).map(|b| p[s.index(x, y, a, b)]).sum();
                    assert!((m0 - my).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn product_state_gives_a_product_table() {
        let sc = preset("product_plus").unwrap();
        let t = born_table(&sc).unwrap();
        let s = t.scenario;
        let m = t.marginals().unwrap();
        for x in 0..s.dx {
            for y in 0..s.dy {
                for a in 0..s.da {
                    for b in 0..s.db {
                        assert_eq!(*t.get(x, y, a, b), &m.alice[x][a] * &m.bob[y][b]);
                    }
                }
            }
        }
    }

    #[test]
    fn mixed_state_gives_the_uniform_table() {
        let t = born_table(&preset("mixed_uniform").unwrap()).unwrap();
        let s = t.scenario;
        for x in 0..s.dx {
            for y in 0..s.dy {
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(*t.get(x, y, a, b), rat(1, 4));
                    }
                }
            }
        }
    }

    #[test]
    fn chsh_at_optimal_angles_is_two_root_two() {
        let sc = preset("singlet_chsh").unwrap();
        let v = chsh_value(&sc).unwrap();
        assert!((v.abs() - 2.0 * 2f64.sqrt()).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn rationalize_recovers_simple_fractions() {
        assert_eq!(rationalize(0.5, 100), rat(1, 2));
        assert_eq!(rationalize(1.0 / 3.0, 1000), rat(1, 3));
        assert_eq!(rationalize(-0.25, 100), rat(-1, 4));
        assert_eq!(rationalize(0.0, 100), rat(0, 1));
        assert_eq!(rationalize(2.0, 100), rat(2, 1));
        // within the denominator bound the approximation error is tiny
        let pi = rationalize(std::f64::consts::PI, 1_000_000);
        let back = num_traits::ToPrimitive::to_f64(&pi).unwrap();
        assert!((back - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn born_table_is_exactly_nonsignaling() {
        let t = born_table(&preset("singlet_chsh").unwrap()).unwrap();
        assert!(t.validate().ok());
        assert!(t.is_nonsignaling());
    }

    #[test]
    fn report_flags_the_singlet_as_nonlocal() {
        let report = quantum_to_prbox_report(&preset("singlet_chsh").unwrap()).unwrap();
        assert!(!report.local);
        assert!(report.nonlocal_weight > zero());
        assert!(report.pr_boxes >= 1);
        let d = report.decomposition.unwrap();
        assert_eq!(d.reconstruct(), report.table);
    }

    #[test]
    fn report_flags_product_and_mixed_as_local() {
        for name in ["product_plus", "mixed_uniform"] {
            let report = quantum_to_prbox_report(&preset(name).unwrap()).unwrap();
            assert!(report.local, "{name} should be local");
            assert_eq!(report.pr_boxes, 0);
        }
    }

    #[test]
    fn invalid_scenarios_are_rejected_with_the_failing_check() {
        let mut sc = preset("singlet_chsh").unwrap();
        sc.state *= c(2.0, 0.0);
        assert!(matches!(sc.validate(), Err(Error::Quantum(m)) if m.contains("trace")));
        let mut sc = preset("singlet_chsh").unwrap();
        sc.alice[0][0][(0, 1)] += c(0.5, 0.0);
        assert!(sc.validate().is_err());
    }
}
