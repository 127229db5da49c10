//! Simulation of any nonlocal extremal binary-output box from PR boxes,
//! and extraction of a PR box from any such box.
//!
//! The forward direction writes the box's correlation function `F(x,y)` —
//! the parity of the outputs on the nondeterministic block — as a GF(2)
//! multilinear polynomial, factors it as `F = sum_i P_i(x) Q_i(y)`, and
//! consumes one PR box per term: Alice inputs `r_i = P_i(x)`, Bob inputs
//! `s_i = Q_i(y)`, and both output the parity of their box outputs. The
//! reverse direction restricts any nonlocal box to its first two inputs,
//! where the correlation pattern is already that of the PR box.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{pr_box, table2_box, ExtremalSpec};
use crate::error::Error;
use crate::model::CorrelationTable;
use crate::rational::{rat, zero, Rational};

/// A multilinear polynomial over GF(2) in `n_x` Alice variables and `n_y`
/// Bob variables. Each monomial is a pair of variable bitmasks; present
/// monomials have coefficient 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2Polynomial {
    pub n_x: usize,
    pub n_y: usize,
    pub monomials: BTreeSet<(u32, u32)>,
}

impl Gf2Polynomial {
    /// Evaluates at the assignment given by bit vectors `x_bits`, `y_bits`.
    pub fn evaluate(&self, x_bits: u32, y_bits: u32) -> u8 {
        let sat = self
            .monomials
            .iter()
            .filter(|&&(ma, mb)| ma & x_bits == ma && mb & y_bits == mb)
            .count();
        (sat % 2) as u8
    }
}

impl std::fmt::Display for Gf2Polynomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.monomials.is_empty() {
            return write!(f, "0");
        }
        let terms: Vec<String> = self.monomials.iter().map(|&(ma, mb)| monomial_string(ma, mb)).collect();
        write!(f, "{}", terms.join(" + "))
    }
}

fn monomial_string(ma: u32, mb: u32) -> String {
    let mut parts = Vec::new();
    for i in 0..32 {
        if ma >> i & 1 == 1 {
            parts.push(format!("x{}", i + 1));
        }
    }
    for i in 0..32 {
        if mb >> i & 1 == 1 {
            parts.push(format!("y{}", i + 1));
        }
    }
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join("")
    }
}

/// `F` regrouped by Bob's monomials: slot `i` (one per subset of Bob's
/// variables, `2^{n_y}` in total) holds the Alice-only polynomial `P_i`
/// multiplying the fixed Bob monomial `Q_i` with mask `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoredForm {
    pub n_x: usize,
    pub n_y: usize,
    /// index = Bob variable mask; value = Alice masks of `P_i`
    pub terms: Vec<BTreeSet<u32>>,
}

impl FactoredForm {
    /// Re-expands to the original polynomial.
    pub fn expand(&self) -> Gf2Polynomial {
        let mut monomials = BTreeSet::new();
        for (mb, alice) in self.terms.iter().enumerate() {
            for &ma in alice {
                monomials.insert((ma, mb as u32));
            }
        }
        Gf2Polynomial { n_x: self.n_x, n_y: self.n_y, monomials }
    }

    /// `r_i = P_i(x)` for every slot, given Alice's input bits.
    pub fn alice_inputs(&self, x_bits: u32) -> Vec<u8> {
        self.terms
            .iter()
            .map(|alice| {
                let sat = alice.iter().filter(|&&ma| ma & x_bits == ma).count();
                (sat % 2) as u8
            })
            .collect()
    }

    /// `s_i = Q_i(y)` for every slot, given Bob's input bits.
    pub fn bob_inputs(&self, y_bits: u32) -> Vec<u8> {
        (0..self.terms.len())
            .map(|mb| u8::from(mb as u32 & y_bits == mb as u32))
            .collect()
    }
}

fn bits_needed(g: usize) -> usize {
    debug_assert!(g >= 1);
    (usize::BITS - (g - 1).leading_zeros()) as usize
}

/// Truth table of the correlation function `F(x,y)` of a nonlocal box:
/// 0 where the nondeterministic cell is correlated, 1 where it is
/// anticorrelated. Indexed `[x][y]` over the block `x < g_x, y < g_y`.
pub fn correlation_function(spec: &ExtremalSpec) -> Result<Vec<Vec<u8>>, Error> {
    spec.check()?;
    if !spec.is_nonlocal() {
        return Err(Error::NotApplicable(
            "local box has no correlation function".into(),
        ));
    }
    Ok((0..spec.gx)
        .map(|x| (0..spec.gy).map(|y| spec.cell_parity(x, y)).collect())
        .collect())
}

/// The unique multilinear GF(2) polynomial agreeing with the truth table on
/// the full bit cube, with the table extended by 0 beyond its bounds.
/// Built by the binary Mobius transform: the coefficient of the monomial
/// with masks (S, T) is the parity of `F` over the subcube below (S, T).
pub fn multilinear_of(f: &[Vec<u8>], n_x: usize, n_y: usize) -> Gf2Polynomial {
    let lookup = |x: usize, y: usize| -> u8 {
        f.get(x).and_then(|row| row.get(y)).copied().unwrap_or(0)
    };
    let mut monomials = BTreeSet::new();
    for ma in 0..1u32 << n_x {
        for mb in 0..1u32 << n_y {
            let mut parity = 0u8;
            // iterate submasks of (ma, mb)
            let mut xs = ma;
            loop {
                let mut ys = mb;
                loop {
                    parity ^= lookup(xs as usize, ys as usize);
                    if ys == 0 {
                        break;
                    }
                    ys = (ys - 1) & mb;
                }
                if xs == 0 {
                    break;
                }
                xs = (xs - 1) & ma;
            }
            if parity == 1 {
                monomials.insert((ma, mb));
            }
        }
    }
    Gf2Polynomial { n_x, n_y, monomials }
}

/// Groups the monomials of `poly` by their Bob mask, one slot per subset of
/// Bob's variables.
pub fn factor(poly: &Gf2Polynomial) -> FactoredForm {
    let mut terms = vec![BTreeSet::new(); 1 << poly.n_y];
    for &(ma, mb) in &poly.monomials {
        terms[mb as usize].insert(ma);
    }
    FactoredForm { n_x: poly.n_x, n_y: poly.n_y, terms }
}

/// Factored correlation function of a nonlocal box: the protocol's wiring
/// diagram.
pub fn protocol_form(spec: &ExtremalSpec) -> Result<FactoredForm, Error> {
    let f = correlation_function(spec)?;
    let n_x = bits_needed(spec.gx);
    let n_y = bits_needed(spec.gy);
    Ok(factor(&multilinear_of(&f, n_x, n_y)))
}

/// The input restriction realizing a PR box from one copy of a nonlocal
/// box: both parties use only inputs 0 and 1 and keep their outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrExtraction {
    pub x_map: [usize; 2],
    pub y_map: [usize; 2],
}

impl PrExtraction {
    /// The 2-input table obtained by the restriction.
    pub fn restricted_table(&self, spec: &ExtremalSpec) -> Result<CorrelationTable, Error> {
        let full = table2_box(spec)?;
        let s = crate::model::Scenario::new(2, 2, 2, 2)?;
        Ok(CorrelationTable::from_fn(s, |x, y, a, b| {
            full.get(self.x_map[x], self.y_map[y], a, b).clone()
        }))
    }
}

/// A single nonlocal box restricted to inputs {0, 1} is exactly a PR box:
/// the first row and column of the block are correlated and cell (1,1) is
/// anticorrelated, all with uniform marginals.
pub fn extract_pr(spec: &ExtremalSpec) -> Result<PrExtraction, Error> {
    spec.check()?;
    if !spec.is_nonlocal() {
        return Err(Error::NotApplicable("cannot extract a PR box from a local box".into()));
    }
    let extraction = PrExtraction { x_map: [0, 1], y_map: [0, 1] };
    debug_assert_eq!(extraction.restricted_table(spec).unwrap(), pr_box());
    Ok(extraction)
}

fn check_inputs(spec: &ExtremalSpec, x: usize, y: usize) -> Result<(), Error> {
    spec.check()?;
    if !spec.is_nonlocal() {
        return Err(Error::NotApplicable("simulation targets nonlocal boxes".into()));
    }
    if x >= spec.dx || y >= spec.dy {
        return Err(Error::Parameter(format!(
            "input ({x},{y}) out of range for a {}x{} box",
            spec.dx, spec.dy
        )));
    }
    Ok(())
}

/// Exact output distribution of the PR-box protocol at inputs `(x, y)`,
/// marginalized over all equally likely box-output combinations. Returned
/// as the cell `[P(0,0), P(1,0), P(0,1), P(1,1)]` (Alice's output first).
/// A party whose input is deterministic (`x >= g_x` or `y >= g_y`) outputs
/// 0 without consulting the boxes; the other party still runs its side.
pub fn simulate_exact(spec: &ExtremalSpec, x: usize, y: usize) -> Result<[Rational; 4], Error> {
    check_inputs(spec, x, y)?;
    let form = protocol_form(spec)?;
    let k = form.terms.len();
    let alice_det = x >= spec.gx;
    let bob_det = y >= spec.gy;
    let r = if alice_det { vec![0u8; k] } else { form.alice_inputs(x as u32) };
    let s = if bob_det { vec![0u8; k] } else { form.bob_inputs(y as u32) };
    let mut cell = [zero(), zero(), zero(), zero()];
    let weight = rat(1, 1i64 << k);
    for combo in 0..1u32 << k {
        let mut a = 0u8;
        let mut b = 0u8;
        for i in 0..k {
            let ai = (combo >> i & 1) as u8;
            let bi = ai ^ (r[i] & s[i]);
            a ^= ai;
            b ^= bi;
        }
        let a_out = if alice_det { 0 } else { a as usize };
        let b_out = if bob_det { 0 } else { b as usize };
        cell[a_out + 2 * b_out] += &weight;
    }
    Ok(cell)
}

/// One sampled run of the protocol: the shared box inputs/outputs and the
/// final outputs of both parties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolRun {
    pub x: usize,
    pub y: usize,
    /// per-box records (r_i, s_i, a_i, b_i)
    pub boxes: Vec<(u8, u8, u8, u8)>,
    pub a_out: u8,
    pub b_out: u8,
}

impl std::fmt::Display for ProtocolRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "x={} y={}", self.x, self.y)?;
        for (r, s, a, b) in &self.boxes {
            write!(f, " (r={r} s={s} a={a} b={b})")?;
        }
        write!(f, " -> a={} b={}", self.a_out, self.b_out)
    }
}

/// Samples `trials` runs of the protocol with a seeded deterministic
/// generator; returns the transcripts and the empirical cell frequencies
/// in the same layout as [`simulate_exact`].
pub fn simulate_sampled(
    spec: &ExtremalSpec,
    x: usize,
    y: usize,
    trials: u64,
    seed: u64,
) -> Result<(Vec<ProtocolRun>, [Rational; 4]), Error> {
    check_inputs(spec, x, y)?;
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let form = protocol_form(spec)?;
    let k = form.terms.len();
    let alice_det = x >= spec.gx;
    let bob_det = y >= spec.gy;
    let r = if alice_det { vec![0u8; k] } else { form.alice_inputs(x as u32) };
    let s = if bob_det { vec![0u8; k] } else { form.bob_inputs(y as u32) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs = Vec::with_capacity(trials as usize);
    let mut counts = [0u64; 4];
    for _ in 0..trials {
        let mut boxes = Vec::with_capacity(k);
        let mut a = 0u8;
        let mut b = 0u8;
        for i in 0..k {
            let ai: u8 = rng.gen_range(0..2);
            let bi = ai ^ (r[i] & s[i]);
            a ^= ai;
            b ^= bi;
            boxes.push((r[i], s[i], ai, bi));
        }
        let a_out = if alice_det { 0 } else { a };
        let b_out = if bob_det { 0 } else { b };
        counts[a_out as usize + 2 * b_out as usize] += 1;
        runs.push(ProtocolRun { x, y, boxes, a_out, b_out });
    }
    let freq = counts.map(|c| rat(c as i64, trials as i64));
    Ok((runs, freq))
}

/// PR-box budget of the protocol for one box: total slots `2^{n_y}` and
/// the number of slots whose Alice polynomial is not identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxCount {
    pub slots: usize,
    pub used: usize,
}

pub fn box_count(spec: &ExtremalSpec) -> Result<BoxCount, Error> {
    let form = protocol_form(spec)?;
    Ok(BoxCount {
        slots: form.terms.len(),
        used: form.terms.iter().filter(|p| !p.is_empty()).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;
    use crate::rational::{half, one};
    use std::collections::BTreeSet as Set;

    /// All nonlocal specs with the given block size, without orbit dedup.
    fn all_specs(gx: usize, gy: usize, dx: usize, dy: usize) -> Vec<ExtremalSpec> {
        let free: Vec<(usize, usize)> = (1..gx)
            .flat_map(|x| (1..gy).map(move |y| (x, y)))
            .filter(|&c| c != (1, 1))
            .collect();
        (0..1u32 << free.len())
            .map(|mask| {
                let anticorrelated = free
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &c)| c)
                    .collect();
                ExtremalSpec { dx, dy, gx, gy, anticorrelated }
            })
            .collect()
    }

    fn pr_spec() -> ExtremalSpec {
        ExtremalSpec::pr()
    }

    fn spec33_all_correlated() -> ExtremalSpec {
        ExtremalSpec { dx: 3, dy: 3, gx: 3, gy: 3, anticorrelated: Set::new() }
    }

    #[test]
    fn pr_correlation_function_is_and() {
        let f = correlation_function(&pr_spec()).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(f[x][y] as usize, x * y);
            }
        }
    }

    #[test]
    fn all_correlated_function_is_delta_at_one_one() {
        let f = correlation_function(&spec33_all_correlated()).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(f[x][y], u8::from(x == 1 && y == 1));
            }
        }
    }

    #[test]
    fn restriction_to_binary_inputs_is_always_and() {
        for spec in crate::catalog::enumerate_classes(3, 3, 1 << 22).unwrap() {
            if !spec.is_nonlocal() {
                continue;
            }
            let f = correlation_function(&spec).unwrap();
            for x in 0..2 {
                for y in 0..2 {
                    assert_eq!(f[x][y] as usize, x * y);
                }
            }
        }
    }

    #[test]
    fn local_spec_has_no_correlation_function() {
        assert!(matches!(
            correlation_function(&ExtremalSpec::local(2, 2)),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn multilinear_of_and_is_one_monomial() {
        let p = multilinear_of(&[vec![0, 0], vec![0, 1]], 1, 1);
        assert_eq!(p.monomials, Set::from([(1, 1)]));
    }

    #[test]
    fn multilinear_of_xor_is_two_monomials() {
        let p = multilinear_of(&[vec![0, 1], vec![1, 0]], 1, 1);
        assert_eq!(p.monomials, Set::from([(1, 0), (0, 1)]));
    }

    #[test]
    fn multilinear_agrees_everywhere_for_three_by_three_specs() {
        for spec in crate::catalog::enumerate_classes(3, 3, 1 << 22).unwrap() {
            if !spec.is_nonlocal() {
                continue;
            }
            let f = correlation_function(&spec).unwrap();
            let n_x = bits_needed(spec.gx);
            let n_y = bits_needed(spec.gy);
            let p = multilinear_of(&f, n_x, n_y);
            for xb in 0..1u32 << n_x {
                for yb in 0..1u32 << n_y {
                    let want = f
                        .get(xb as usize)
                        .and_then(|row| row.get(yb as usize))
                        .copied()
                        .unwrap_or(0);
                    assert_eq!(p.evaluate(xb, yb), want);
                }
            }
        }
    }

    #[test]
    fn factor_groups_by_bob_mask_and_reexpands() {
        let poly = Gf2Polynomial {
            n_x: 2,
            n_y: 1,
            monomials: Set::from([(1, 1), (2, 0), (0, 1)]),
        };
        let form = factor(&poly);
        assert_eq!(form.terms.len(), 2);
        assert_eq!(form.terms[0], Set::from([2])); // empty Bob mask: x2
        assert_eq!(form.terms[1], Set::from([0, 1])); // y1: 1 + x1
        assert_eq!(form.expand(), poly);
    }

    #[test]
    fn pr_extraction_is_identity_and_exact() {
        let e = extract_pr(&pr_spec()).unwrap();
        assert_eq!(e, PrExtraction { x_map: [0, 1], y_map: [0, 1] });
        assert_eq!(e.restricted_table(&pr_spec()).unwrap(), pr_box());
    }

    #[test]
    fn pr_extraction_from_every_nonlocal_class() {
        for spec in crate::catalog::enumerate_classes(3, 3, 1 << 22).unwrap() {
            if !spec.is_nonlocal() {
                continue;
            }
            let e = extract_pr(&spec).unwrap();
            assert_eq!(e.restricted_table(&spec).unwrap(), pr_box());
        }
        assert!(extract_pr(&ExtremalSpec::local(2, 2)).is_err());
    }

    #[test]
    fn pr_protocol_uses_two_slots_one_box() {
        let c = box_count(&pr_spec()).unwrap();
        assert_eq!(c, BoxCount { slots: 2, used: 1 });
    }

    #[test]
    fn gy_three_spec_has_four_slots() {
        let c = box_count(&spec33_all_correlated()).unwrap();
        assert_eq!(c.slots, 4);
    }

    #[test]
    fn slot_count_ignores_deterministic_inputs() {
        let small = ExtremalSpec { dx: 2, dy: 2, gx: 2, gy: 2, anticorrelated: Set::new() };
        let big = ExtremalSpec { dx: 5, dy: 5, gx: 2, gy: 2, anticorrelated: Set::new() };
        assert_eq!(box_count(&small).unwrap(), box_count(&big).unwrap());
    }

    #[test]
    fn simulate_exact_reproduces_every_cell() {
        // every nonlocal spec with g <= 4 on both sides, det inputs included
        let mut specs = vec![pr_spec(), spec33_all_correlated()];
        for gx in 2..=4 {
            for gy in 2..=4 {
                specs.extend(all_specs(gx, gy, gx + 1, gy + 1));
            }
        }
        for spec in specs {
            let table = table2_box(&spec).unwrap();
            for x in 0..spec.dx {
                for y in 0..spec.dy {
                    let cell = simulate_exact(&spec, x, y).unwrap();
                    for (i, (a, b)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                        assert_eq!(cell[i], *table.get(x, y, a, b), "spec {spec:?} at ({x},{y})");
                    }
                }
            }
        }
    }

    #[test]
    fn alice_marginal_is_uniform_on_block_inputs() {
        let spec = spec33_all_correlated();
        for x in 0..spec.gx {
            for y in 0..spec.dy {
                let cell = simulate_exact(&spec, x, y).unwrap();
                assert_eq!(&cell[0] + &cell[2], half());
            }
        }
    }

    #[test]
    fn deterministic_pair_gives_point_cell() {
        let mut spec = spec33_all_correlated();
        spec.dx = 4;
        spec.dy = 4;
        let cell = simulate_exact(&spec, 3, 3).unwrap();
        assert_eq!(cell, [one(), zero(), zero(), zero()]);
    }

    #[test]
    fn sampled_runs_satisfy_the_box_law_and_are_reproducible() {
        let spec = spec33_all_correlated();
        let (runs, _) = simulate_sampled(&spec, 2, 1, 32, 12345).unwrap();
        for run in &runs {
            for &(r, s, a, b) in &run.boxes {
                assert_eq!(a ^ b, r & s);
            }
            let a: u8 = run.boxes.iter().fold(0, |acc, &(_, _, a, _)| acc ^ a);
            let b: u8 = run.boxes.iter().fold(0, |acc, &(_, _, _, b)| acc ^ b);
            assert_eq!(run.a_out, a);
            assert_eq!(run.b_out, b);
        }
        let (again, _) = simulate_sampled(&spec, 2, 1, 32, 12345).unwrap();
        assert_eq!(runs, again);
        let (other, _) = simulate_sampled(&spec, 2, 1, 32, 54321).unwrap();
        assert_ne!(runs, other);
    }

    #[test]
    fn sampled_frequencies_match_exact_support() {
        let spec = pr_spec();
        let exact = simulate_exact(&spec, 1, 1).unwrap();
        let (_, freq) = simulate_sampled(&spec, 1, 1, 2000, 7).unwrap();
        for i in 0..4 {
            if exact[i].is_zero() {
                assert!(freq[i].is_zero());
            }
        }
    }
}
