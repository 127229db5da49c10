//! Decomposition of binary-output nonsignaling tables into extremal boxes
//! by cell zeroing followed by marginal chaining.
//!
//! Stage one expresses every cell as a convex combination of two cells with
//! the same marginals and at least one zero. Stage two repeatedly pins a
//! free marginal to the tightest bound implied by the zero placements,
//! recording the resulting equalities (`l_i = m_j`, `l_i = 1 - m_j`, ...)
//! in a union-find with complement flags; a chain terminates when a value
//! is forced to 0, 1, or (by `u = 1 - u`) to 1/2. Leaves have all marginals
//! in {0, 1, 1/2} and one zero per cell, which pins them to extremal boxes.

use num_traits::{One, Signed, Zero};
use thiserror::Error as ThisError;

use crate::error::Error;
use crate::model::CorrelationTable;
use crate::polytope::{is_extremal, ConvexDecomposition};
use crate::rational::{half, one, zero, Rational};

/// Default cap on the number of live branches in [`decompose_to_table2`].
pub const DEFAULT_LEAF_BUDGET: usize = 100_000;

/// One marginal parameter: Alice's `l_x = P(a=0|x)` or Bob's
/// `m_y = P(b=0|y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalId {
    L(usize),
    M(usize),
}

impl std::fmt::Display for MarginalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MarginalId::L(x) => write!(f, "l{x}"),
            MarginalId::M(y) => write!(f, "m{y}"),
        }
    }
}

/// A bound endpoint as identified by the range analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundExpr {
    /// A constant: 0, 1, or the forced 1/2.
    Const(Rational),
    /// Equal to another marginal.
    Same(MarginalId),
    /// Equal to one minus another marginal.
    Compl(MarginalId),
}

impl std::fmt::Display for BoundExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundExpr::Const(c) => write!(f, "{}", crate::rational::format_rational(c)),
            BoundExpr::Same(id) => write!(f, "{id}"),
            BoundExpr::Compl(id) => write!(f, "1-{id}"),
        }
    }
}

/// One bound on a free marginal: its defining expression and current value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bound {
    pub expr: BoundExpr,
    pub value: Rational,
}

/// One convex split: `lambda * branch_low + (1 - lambda) * branch_high`
/// reproduces the parent exactly. `branch_low` carries the lower endpoint
/// of the split parameter.
#[derive(Debug, Clone)]
pub struct SplitStep {
    pub lambda: Rational,
    pub branch_low: CorrelationTable,
    pub branch_high: CorrelationTable,
    pub description: String,
}

#[derive(Debug, ThisError)]
pub enum DecomposeError {
    /// The branch tree outgrew the budget; the unfinished weighted frontier
    /// is returned for inspection.
    #[error("leaf budget exceeded with {} live branches", frontier.len())]
    Budget { frontier: Vec<(Rational, CorrelationTable)> },
    #[error(transparent)]
    Other(#[from] Error),
}

fn require_binary_nonsignaling(table: &CorrelationTable) -> Result<(), Error> {
    let s = table.scenario;
    if s.da != 2 || s.db != 2 {
        return Err(Error::Parameter("procedure requires binary outputs".into()));
    }
    if !table.validate().ok() {
        return Err(Error::Parameter("table violates positivity/normalization".into()));
    }
    if !table.is_nonsignaling() {
        return Err(Error::Signaling("table is signaling".into()));
    }
    Ok(())
}

/// Cell entries from the parameterization `(c, m-c, l-c, 1+c-l-m)` with `c`
/// pinned by the designated zero position `(a, b)`.
fn cell_from_zero(l: &Rational, m: &Rational, zero_at: (usize, usize)) -> [Rational; 4] {
    let c = match zero_at {
        (0, 0) => zero(),
        (1, 0) => m.clone(),
        (0, 1) => l.clone(),
        (1, 1) => l + m - one(),
        _ => unreachable!(),
    };
    [c.clone(), m - &c, l - &c, one() + &c - l - m]
}

fn write_cell(table: &mut CorrelationTable, x: usize, y: usize, cell: [Rational; 4]) {
    let [p00, p10, p01, p11] = cell;
    table.set(x, y, 0, 0, p00);
    table.set(x, y, 1, 0, p10);
    table.set(x, y, 0, 1, p01);
    table.set(x, y, 1, 1, p11);
}

/// Zero entries of cell `(x,y)`, in the order (0,0),(1,0),(0,1),(1,1).
fn cell_zeros(table: &CorrelationTable, x: usize, y: usize) -> Vec<(usize, usize)> {
    [(0, 0), (1, 0), (0, 1), (1, 1)]
        .into_iter()
        .filter(|&(a, b)| table.get(x, y, a, b).is_zero())
        .collect()
}

/// Expresses cell `(x,y)` as a convex combination of the two boundary cells
/// with the same marginals and at least one zero. If the cell already
/// contains a zero, both branches equal the input and `lambda = 1`.
pub fn zero_cell_split(
    table: &CorrelationTable,
    x: usize,
    y: usize,
) -> Result<SplitStep, Error> {
    require_binary_nonsignaling(table)?;
    let c = table.get(x, y, 0, 0).clone();
    let m = &c + table.get(x, y, 1, 0);
    let l = &c + table.get(x, y, 0, 1);
    let c_lo = {
        let t = &l + &m - one();
        if t.is_negative() {
            zero()
        } else {
            t
        }
    };
    let c_hi = if l < m { l.clone() } else { m.clone() };
    if c == c_lo || c == c_hi {
        return Ok(SplitStep {
            lambda: one(),
            branch_low: table.clone(),
            branch_high: table.clone(),
            description: format!("cell ({x},{y}) already has a zero"),
        });
    }
    let lambda = (&c_hi - &c) / (&c_hi - &c_lo);
    let make = |cv: &Rational| {
        let mut t = table.clone();
        write_cell(&mut t, x, y, [cv.clone(), &m - cv, &l - cv, one() + cv - &l - &m]);
        t
    };
    Ok(SplitStep {
        description: format!(
            "cell ({x},{y}): c in [{}, {}], split at both endpoints (lambda {})",
            crate::rational::format_rational(&c_lo),
            crate::rational::format_rational(&c_hi),
            crate::rational::format_rational(&lambda)
        ),
        branch_low: make(&c_lo),
        branch_high: make(&c_hi),
        lambda,
    })
}

/// Weighted leaves of the stage-one tree plus a human-readable trace.
#[derive(Debug, Clone)]
pub struct ZeroTree {
    pub leaves: Vec<(Rational, CorrelationTable)>,
    pub trace: Vec<String>,
}

/// Applies [`zero_cell_split`] over all cells (x-major order from (0,0)),
/// producing weighted leaves that all have at least one zero in every cell
/// and the same marginals as the input.
pub fn one_zero_normalize(table: &CorrelationTable) -> Result<ZeroTree, Error> {
    require_binary_nonsignaling(table)?;
    let s = table.scenario;
    let mut leaves = vec![(one(), table.clone())];
    let mut trace = Vec::new();
    for x in 0..s.dx {
        for y in 0..s.dy {
            let mut next = Vec::with_capacity(leaves.len());
            for (w, t) in leaves {
                if !cell_zeros(&t, x, y).is_empty() {
                    next.push((w, t));
                    continue;
                }
                let step = zero_cell_split(&t, x, y)?;
                trace.push(step.description.clone());
                if !step.lambda.is_zero() {
                    next.push((&w * &step.lambda, step.branch_low));
                }
                let co = one() - &step.lambda;
                if !co.is_zero() {
                    next.push((&w * &co, step.branch_high));
                }
            }
            leaves = merge_leaves(next);
        }
    }
    Ok(ZeroTree { leaves, trace })
}

fn merge_leaves(mut leaves: Vec<(Rational, CorrelationTable)>) -> Vec<(Rational, CorrelationTable)> {
    leaves.sort_by(|(_, a), (_, b)| a.cmp_entries(b));
    let mut merged: Vec<(Rational, CorrelationTable)> = Vec::new();
    for (w, t) in leaves {
        match merged.last_mut() {
            Some((mw, mt)) if *mt == t => *mw += w,
            _ => merged.push((w, t)),
        }
    }
    merged
}

// ---------------------------------------------------------------------------
// Marginal chains
// ---------------------------------------------------------------------------

/// Union-find over the marginals `l_0..l_{dx-1}, m_0..m_{dy-1}` with a
/// complement flag per link and an optional pinned value per class. Merging
/// a class with itself under opposite parity forces the value 1/2.
#[derive(Debug, Clone)]
struct MarginalChain {
    dx: usize,
    parent: Vec<usize>,
    /// parity relative to the parent: true means `value = 1 - parent value`
    parity: Vec<bool>,
    /// pinned value of the root, if the class is terminated
    pinned: Vec<Option<Rational>>,
    /// current numeric value of each marginal
    value: Vec<Rational>,
}

impl MarginalChain {
    fn new(l: Vec<Rational>, m: Vec<Rational>) -> Self {
        let dx = l.len();
        let n = dx + m.len();
        let mut value = l;
        value.extend(m);
        MarginalChain {
            dx,
            parent: (0..n).collect(),
            parity: vec![false; n],
            pinned: vec![None; n],
            value,
        }
    }

    fn node(&self, id: MarginalId) -> usize {
        match id {
            MarginalId::L(x) => x,
            MarginalId::M(y) => self.dx + y,
        }
    }

    fn id(&self, node: usize) -> MarginalId {
        if node < self.dx {
            MarginalId::L(node)
        } else {
            MarginalId::M(node - self.dx)
        }
    }

    /// (root, parity of `node` relative to the root)
    fn find(&mut self, node: usize) -> (usize, bool) {
        if self.parent[node] == node {
            return (node, false);
        }
        let (root, par_up) = self.find(self.parent[node]);
        self.parent[node] = root;
        self.parity[node] ^= par_up;
        (root, self.parity[node])
    }

    fn is_fixed(&mut self, node: usize) -> bool {
        let (root, _) = self.find(node);
        self.pinned[root].is_some()
    }

    /// Pins the class of `node` so that `node`'s value is `v`.
    fn pin(&mut self, node: usize, v: Rational) {
        let (root, par) = self.find(node);
        let root_val = if par { one() - &v } else { v };
        match &self.pinned[root] {
            Some(existing) => assert_eq!(*existing, root_val, "conflicting pinned values"),
            None => self.pinned[root] = Some(root_val),
        }
    }

    /// Records `value(a) = value(b)` (`compl = false`) or
    /// `value(a) = 1 - value(b)` (`compl = true`). A parity conflict within
    /// one class forces the value 1/2 (termination case of the chain).
    fn link(&mut self, a: usize, b: usize, compl: bool) {
        let (ra, pa) = self.find(a);
        let (rb, pb) = self.find(b);
        let rel = pa ^ pb ^ compl; // parity between the two roots
        if ra == rb {
            if rel {
                match &self.pinned[ra] {
                    Some(v) => assert_eq!(*v, half(), "conflicting pinned values"),
                    None => self.pinned[ra] = Some(half()),
                }
            }
            return;
        }
        self.parent[rb] = ra;
        self.parity[rb] = rel;
        let pinned_b = self.pinned[rb].take();
        if let Some(vb) = pinned_b {
            let va = if rel { one() - vb } else { vb };
            match &self.pinned[ra] {
                Some(existing) => assert_eq!(*existing, va, "conflicting pinned values"),
                None => self.pinned[ra] = Some(va),
            }
        }
    }

    /// Nodes in the same class as `node`, each with its parity relative to
    /// `node`.
    fn class_of(&mut self, node: usize) -> Vec<(usize, bool)> {
        let (root, par) = self.find(node);
        (0..self.parent.len())
            .filter_map(|i| {
                let (r, p) = self.find(i);
                (r == root).then_some((i, p ^ par))
            })
            .collect()
    }
}

/// A binary-output table with at least one zero in every cell, together
/// with the chain bookkeeping that drives stage two.
#[derive(Debug, Clone)]
pub struct OneZeroForm {
    pub table: CorrelationTable,
    chain: MarginalChain,
}

/// Outcome of one stage-two step.
#[derive(Debug)]
pub enum ChainOutcome {
    /// All marginals are pinned in {0, 1, 1/2}: the form is an extremal
    /// leaf.
    Terminal,
    /// The bounds were degenerate: the marginal was fixed without a split.
    Pinned(OneZeroForm),
    /// A proper split into two boundary-pinned forms.
    Split {
        lambda: Rational,
        low: OneZeroForm,
        high: OneZeroForm,
        description: String,
    },
}

impl OneZeroForm {
    pub fn new(table: CorrelationTable) -> Result<Self, Error> {
        require_binary_nonsignaling(&table)?;
        let s = table.scenario;
        let marg = table.marginals()?;
        let l = marg.l().expect("binary outputs");
        let m = marg.m().expect("binary outputs");
        let mut chain = MarginalChain::new(l, m);
        for x in 0..s.dx {
            for y in 0..s.dy {
                let zeros = cell_zeros(&table, x, y);
                if zeros.is_empty() {
                    return Err(Error::Parameter(format!(
                        "cell ({x},{y}) has no zero entry; run one_zero_normalize first"
                    )));
                }
                let ln = chain.node(MarginalId::L(x));
                let mn = chain.node(MarginalId::M(y));
                // structural implications of multiple zeros in one cell
                for pair in [
                    ((0, 0), (1, 0)),
                    ((0, 0), (0, 1)),
                    ((1, 0), (1, 1)),
                    ((0, 1), (1, 1)),
                    ((0, 0), (1, 1)),
                    ((1, 0), (0, 1)),
                ] {
                    if zeros.contains(&pair.0) && zeros.contains(&pair.1) {
                        match pair {
                            ((0, 0), (1, 0)) => chain.pin(mn, zero()),
                            ((0, 0), (0, 1)) => chain.pin(ln, zero()),
                            ((1, 0), (1, 1)) => chain.pin(ln, one()),
                            ((0, 1), (1, 1)) => chain.pin(mn, one()),
                            ((0, 0), (1, 1)) => chain.link(ln, mn, true),
                            ((1, 0), (0, 1)) => chain.link(ln, mn, false),
                            _ => unreachable!(),
                        }
                    }
                }
            }
        }
        let mut form = OneZeroForm { table, chain };
        form.normalize_pins();
        Ok(form)
    }

    /// Pins every free class whose value already sits at 0, 1, or 1/2.
    fn normalize_pins(&mut self) {
        for node in 0..self.chain.value.len() {
            if self.chain.is_fixed(node) {
                continue;
            }
            let v = self.chain.value[node].clone();
            if v.is_zero() || v.is_one() || v == half() {
                self.chain.pin(node, v);
            }
        }
    }

    pub fn marginal_value(&mut self, id: MarginalId) -> Rational {
        let n = self.chain.node(id);
        self.chain.value[n].clone()
    }

    /// First free marginal in scan order `l_0, l_1, ..., m_0, m_1, ...`.
    pub fn first_free(&mut self) -> Option<MarginalId> {
        (0..self.chain.value.len())
            .find(|&n| !self.chain.is_fixed(n))
            .map(|n| self.chain.id(n))
    }

    /// Relation of marginal `node` to the class of `of`: `None` if
    /// unrelated, else `Some(parity)`.
    fn relation(&mut self, node: usize, of: usize) -> Option<bool> {
        let (r1, p1) = self.chain.find(node);
        let (r2, p2) = self.chain.find(of);
        (r1 == r2).then_some(p1 ^ p2)
    }

    /// Tightest lower/upper bounds on a free marginal, scanning every cell
    /// whose row or column marginal is chained to it. Bound endpoints are
    /// constants or (complements of) other marginals.
    pub fn marginal_bounds(&mut self, id: MarginalId) -> Result<(Bound, Bound), Error> {
        let u = self.chain.node(id);
        if self.chain.is_fixed(u) {
            return Err(Error::Parameter(format!("{id} is not free")));
        }
        let mut lower = Bound { expr: BoundExpr::Const(zero()), value: zero() };
        let mut upper = Bound { expr: BoundExpr::Const(one()), value: one() };
        let s = self.table.scenario;
        for x in 0..s.dx {
            for y in 0..s.dy {
                let ln = self.chain.node(MarginalId::L(x));
                let mn = self.chain.node(MarginalId::M(y));
                let rel_l = self.relation(ln, u);
                let rel_m = self.relation(mn, u);
                if rel_l.is_none() && rel_m.is_none() {
                    continue;
                }
                for z in cell_zeros(&self.table, x, y) {
                    // base constraint: l REL expr(m), where REL and the
                    // complement flag depend on the zero position
                    let (is_lower, m_compl) = match z {
                        (0, 0) => (false, true), // l <= 1 - m
                        (1, 0) => (true, false), // l >= m
                        (0, 1) => (false, false), // l <= m
                        (1, 1) => (true, true),  // l >= 1 - m
                        _ => unreachable!(),
                    };
                    let candidate = match (rel_l, rel_m) {
                        (Some(pl), Some(pm)) => {
                            // substitute both sides: either vacuous or a
                            // forced comparison with 1/2
                            let rhs_parity = pm ^ m_compl;
                            if pl == rhs_parity {
                                None
                            } else {
                                // pl(u) REL 1 - pl(u)  =>  u REL' 1/2
                                let dir = if pl { !is_lower } else { is_lower };
                                Some((dir, BoundExpr::Const(half()), half()))
                            }
                        }
                        (Some(pl), None) => {
                            // pl(u) REL expr(m)
                            let (dir, compl) = if pl {
                                (!is_lower, !m_compl)
                            } else {
                                (is_lower, m_compl)
                            };
                            let other = MarginalId::M(y);
                            let mv = self.chain.value[mn].clone();
                            let (expr, value) = if compl {
                                (BoundExpr::Compl(other), one() - mv)
                            } else {
                                (BoundExpr::Same(other), mv)
                            };
                            Some((dir, expr, value))
                        }
                        (None, Some(pm)) => {
                            // rewrite as m REL' expr'(l):
                            //   l <= 1-m  <=>  m <= 1-l
                            //   l >= m    <=>  m <= l
                            //   l <= m    <=>  m >= l
                            //   l >= 1-m  <=>  m >= 1-l
                            let (m_is_lower, l_compl) = match z {
                                (0, 0) => (false, true),
                                (1, 0) => (false, false),
                                (0, 1) => (true, false),
                                (1, 1) => (true, true),
                                _ => unreachable!(),
                            };
                            let (dir, compl) = if pm {
                                (!m_is_lower, !l_compl)
                            } else {
                                (m_is_lower, l_compl)
                            };
                            let other = MarginalId::L(x);
                            let lv = self.chain.value[ln].clone();
                            let (expr, value) = if compl {
                                (BoundExpr::Compl(other), one() - lv)
                            } else {
                                (BoundExpr::Same(other), lv)
                            };
                            Some((dir, expr, value))
                        }
                        (None, None) => None,
                    };
                    if let Some((dir_lower, expr, value)) = candidate {
                        if dir_lower {
                            if value > lower.value {
                                lower = Bound { expr, value };
                            }
                        } else if value < upper.value {
                            upper = Bound { expr, value };
                        }
                    }
                }
            }
        }
        if lower.value > upper.value {
            return Err(Error::Internal(format!(
                "empty bound interval for {id}: [{}, {}]",
                crate::rational::format_rational(&lower.value),
                crate::rational::format_rational(&upper.value)
            )));
        }
        Ok((lower, upper))
    }

    /// Returns a copy with the class of `id` moved to value `v` and the
    /// bound's expression recorded in the chain.
    fn with_class_value(&mut self, id: MarginalId, bound: &Bound) -> Result<OneZeroForm, Error> {
        let u = self.chain.node(id);
        let mut next = self.clone();
        // record the new equality first
        match &bound.expr {
            BoundExpr::Const(c) => next.chain.pin(u, c.clone()),
            BoundExpr::Same(w) => {
                let wn = next.chain.node(*w);
                next.chain.link(u, wn, false);
            }
            BoundExpr::Compl(w) => {
                let wn = next.chain.node(*w);
                next.chain.link(u, wn, true);
            }
        }
        // move every marginal of the (old) class of u to the new value
        let members = self.chain.class_of(u);
        for &(node, par) in &members {
            next.chain.value[node] = if par { one() - &bound.value } else { bound.value.clone() };
        }
        // recompute every cell touched by a moved marginal from its
        // designated zero
        let s = next.table.scenario;
        let moved: Vec<usize> = members.iter().map(|&(n, _)| n).collect();
        for x in 0..s.dx {
            for y in 0..s.dy {
                let ln = next.chain.node(MarginalId::L(x));
                let mn = next.chain.node(MarginalId::M(y));
                if !moved.contains(&ln) && !moved.contains(&mn) {
                    continue;
                }
                let zeros = cell_zeros(&self.table, x, y);
                let z = zeros[0];
                let l = next.chain.value[ln].clone();
                let m = next.chain.value[mn].clone();
                let cell = cell_from_zero(&l, &m, z);
                if cell.iter().any(|e| e.is_negative()) {
                    return Err(Error::Internal(format!(
                        "cell ({x},{y}) left the simplex while moving {id}"
                    )));
                }
                // previously zero entries must remain zero
                for &zz in &zeros {
                    let idx = match zz {
                        (0, 0) => 0,
                        (1, 0) => 1,
                        (0, 1) => 2,
                        (1, 1) => 3,
                        _ => unreachable!(),
                    };
                    if !cell[idx].is_zero() {
                        return Err(Error::Internal(format!(
                            "cell ({x},{y}) lost a zero while moving {id}"
                        )));
                    }
                }
                write_cell(&mut next.table, x, y, cell);
            }
        }
        next.normalize_pins();
        Ok(next)
    }

    fn free_parameter_count(&mut self) -> usize {
        let mut roots = Vec::new();
        for n in 0..self.chain.value.len() {
            let (r, _) = self.chain.find(n);
            if self.chain.pinned[r].is_none() && !roots.contains(&r) {
                roots.push(r);
            }
        }
        roots.len()
    }
}

/// One stage-two step: pick the first free marginal, compute its bounds,
/// and either split at both endpoints, pin it in place (degenerate
/// interval), or report termination.
pub fn chain_split(form: &mut OneZeroForm) -> Result<ChainOutcome, Error> {
    let Some(id) = form.first_free() else {
        return Ok(ChainOutcome::Terminal);
    };
    let before = form.free_parameter_count();
    let (lower, upper) = form.marginal_bounds(id)?;
    let cur = form.marginal_value(id);
    if lower.value == upper.value {
        let mut pinned = form.with_class_value(id, &lower)?;
        if upper.expr != lower.expr {
            // both endpoint equalities hold; record the second too
            pinned = pinned.with_class_value(id, &upper)?;
        }
        if pinned.free_parameter_count() >= before {
            return Err(Error::Internal(format!("no chain progress pinning {id}")));
        }
        return Ok(ChainOutcome::Pinned(pinned));
    }
    let low = form.with_class_value(id, &lower)?;
    let high = form.with_class_value(id, &upper)?;
    let lambda = (&upper.value - &cur) / (&upper.value - &lower.value);
    let mut low = low;
    let mut high = high;
    if low.free_parameter_count() >= before || high.free_parameter_count() >= before {
        return Err(Error::Internal(format!("no chain progress splitting {id}")));
    }
    low.normalize_pins();
    high.normalize_pins();
    Ok(ChainOutcome::Split {
        description: format!(
            "{id} in [{} = {}, {} = {}], lambda {}",
            lower.expr,
            crate::rational::format_rational(&lower.value),
            upper.expr,
            crate::rational::format_rational(&upper.value),
            crate::rational::format_rational(&lambda)
        ),
        lambda,
        low,
        high,
    })
}

/// A terminal chain leaf is extremal unless its correlation pattern on the
/// uniform-marginal block is affine, i.e. of the form `f(x) XOR g(y)`; such
/// a leaf is an even mixture of two deterministic points and is split here.
fn finalize_leaf(table: CorrelationTable) -> Result<Vec<(Rational, CorrelationTable)>, Error> {
    let s = table.scenario;
    let marg = table.marginals()?;
    let l = marg.l().expect("binary outputs");
    let m = marg.m().expect("binary outputs");
    // deterministic output per input, or None if uniform
    let det = |v: &Rational| -> Option<usize> {
        if v.is_one() {
            Some(0)
        } else if v.is_zero() {
            Some(1)
        } else {
            assert_eq!(*v, half(), "terminal leaf with marginal outside {{0, 1, 1/2}}");
            None
        }
    };
    let fa: Vec<Option<usize>> = l.iter().map(det).collect();
    let fb: Vec<Option<usize>> = m.iter().map(det).collect();
    let ux: Vec<usize> = (0..s.dx).filter(|&x| fa[x].is_none()).collect();
    let uy: Vec<usize> = (0..s.dy).filter(|&y| fb[y].is_none()).collect();
    if ux.is_empty() && uy.is_empty() {
        return Ok(vec![(one(), table)]); // deterministic point
    }
    // correlation parity on the uniform block: 0 = correlated (a = b side)
    let chi = |x: usize, y: usize| -> usize {
        usize::from(table.get(x, y, 0, 0).is_zero())
    };
    let affine = if ux.is_empty() || uy.is_empty() {
        true
    } else {
        let (x0, y0) = (ux[0], uy[0]);
        ux.iter().all(|&x| {
            uy.iter().all(|&y| chi(x, y) == chi(x, y0) ^ chi(x0, y) ^ chi(x0, y0))
        })
    };
    if !affine {
        return Ok(vec![(one(), table)]);
    }
    // table = 1/2 D + 1/2 D-flipped, with the flip applied on uniform inputs
    let y0 = uy.first().copied();
    let out_a = |x: usize, flip: usize| match fa[x] {
        Some(a) => a,
        None => match y0 {
            Some(y0) => chi(x, y0) ^ flip,
            None => flip,
        },
    };
    let out_b = |y: usize, flip: usize| match fb[y] {
        Some(b) => b,
        None => match (ux.first(), y0) {
            (Some(&x0), Some(y0)) => chi(x0, y) ^ chi(x0, y0) ^ flip,
            _ => flip,
        },
    };
    let mut parts = Vec::new();
    for flip in 0..2 {
        let f: Vec<usize> = (0..s.dx).map(|x| out_a(x, flip)).collect();
        let g: Vec<usize> = (0..s.dy).map(|y| out_b(y, flip)).collect();
        parts.push((half(), crate::model::deterministic_table(s, &f, &g)));
    }
    debug_assert_eq!(
        CorrelationTable::mix(&parts.iter().map(|(w, t)| (w.clone(), t)).collect::<Vec<_>>())
            .unwrap(),
        table
    );
    Ok(parts)
}

/// Result of the full appendix pipeline, with the split trace for audit.
#[derive(Debug, Clone)]
pub struct AppendixDecomposition {
    pub decomposition: ConvexDecomposition,
    pub trace: Vec<String>,
}

/// Full pipeline: stage one (one zero per cell), then exhaustive chain
/// splitting. Every leaf is an extremal table equivalent to a catalog box;
/// the weighted sum of leaves reproduces the input exactly.
pub fn decompose_to_table2(
    table: &CorrelationTable,
    leaf_budget: usize,
) -> Result<AppendixDecomposition, DecomposeError> {
    let tree = one_zero_normalize(table)?;
    let mut trace = tree.trace;
    let mut done: Vec<(Rational, CorrelationTable)> = Vec::new();
    let mut frontier: Vec<(Rational, OneZeroForm)> = Vec::new();
    for (w, leaf) in tree.leaves {
        frontier.push((w, OneZeroForm::new(leaf)?));
    }
    while let Some((w, mut form)) = frontier.pop() {
        if done.len() + frontier.len() > leaf_budget {
            let mut partial = done;
            partial.extend(frontier.into_iter().map(|(w, f)| (w, f.table)));
            partial.push((w, form.table));
            return Err(DecomposeError::Budget { frontier: partial });
        }
        match chain_split(&mut form)? {
            ChainOutcome::Terminal => {
                for (share, leaf) in finalize_leaf(form.table)? {
                    debug_assert!(is_extremal(&leaf).is_extremal());
                    done.push((&w * &share, leaf));
                }
            }
            ChainOutcome::Pinned(next) => frontier.push((w, next)),
            ChainOutcome::Split { lambda, low, high, description } => {
                trace.push(description);
                if !lambda.is_zero() {
                    frontier.push((&w * &lambda, low));
                }
                let co = one() - &lambda;
                if !co.is_zero() {
                    frontier.push((&w * &co, high));
                }
            }
        }
    }
    let components = merge_leaves(done);
    let decomposition =
        ConvexDecomposition { components, target: table.clone() }.normalized();
    Ok(AppendixDecomposition { decomposition, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Scenario;
    use crate::catalog::pr_box;
    use crate::rational::rat;

    fn uniform22() -> CorrelationTable {
        CorrelationTable::from_fn(Scenario::new(2, 2, 2, 2).unwrap(), |_, _, _, _| rat(1, 4))
    }

    /// The three-cell column example: dx=1, dy=3, zeros at P10, P00, P01
    /// going down, with m = (1/4, 1/3, 1/2) and l0 = 3/8.
    fn route_column() -> CorrelationTable {
        let s = Scenario::new(1, 3, 2, 2).unwrap();
        let l0 = rat(3, 8);
        let m = [rat(1, 4), rat(1, 3), rat(1, 2)];
        let mut t = CorrelationTable::from_fn(s, |_, _, _, _| zero());
        write_cell(&mut t, 0, 0, cell_from_zero(&l0, &m[0], (1, 0)));
        write_cell(&mut t, 0, 1, cell_from_zero(&l0, &m[1], (0, 0)));
        write_cell(&mut t, 0, 2, cell_from_zero(&l0, &m[2], (0, 1)));
        t
    }

    #[test]
    fn zero_cell_split_reproduces_the_cell() {
        // build a cell with l=3/4, m=1/2 and an interior c
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        let l = rat(3, 4);
        let m = rat(1, 2);
        let c = rat(3, 8);
        let mut t = CorrelationTable::from_fn(s, |_, _, _, _| zero());
        write_cell(&mut t, 0, 0, [c.clone(), &m - &c, &l - &c, one() + &c - &l - &m]);
        let step = zero_cell_split(&t, 0, 0).unwrap();
        assert!(!cell_zeros(&step.branch_low, 0, 0).is_empty());
        assert!(!cell_zeros(&step.branch_high, 0, 0).is_empty());
        let mixed = CorrelationTable::mix(&[
            (step.lambda.clone(), &step.branch_low),
            (one() - &step.lambda, &step.branch_high),
        ])
        .unwrap();
        assert_eq!(mixed, t);
        // both branches keep the marginals
        for b in [&step.branch_low, &step.branch_high] {
            let marg = b.marginals().unwrap();
            assert_eq!(marg.l().unwrap()[0], l);
            assert_eq!(marg.m().unwrap()[0], m);
        }
    }

    #[test]
    fn zero_cell_split_at_midpoint_gives_half() {
        // l = m = 1/2, c feasible in [0, 1/2]; midpoint c = 1/4
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        let t = CorrelationTable::from_fn(s, |_, _, _, _| rat(1, 4));
        let step = zero_cell_split(&t, 0, 0).unwrap();
        assert_eq!(step.lambda, rat(1, 2));
    }

    #[test]
    fn zero_cell_split_is_trivial_on_a_zero_cell() {
        let pr = pr_box();
        let step = zero_cell_split(&pr, 1, 1).unwrap();
        assert_eq!(step.lambda, one());
        assert_eq!(step.branch_low, pr);
    }

    #[test]
    fn one_zero_normalize_preserves_marginals_and_reconstructs() {
        let t = uniform22();
        let tree = one_zero_normalize(&t).unwrap();
        assert!(tree.leaves.len() <= 16);
        let parts: Vec<(Rational, &CorrelationTable)> =
            tree.leaves.iter().map(|(w, t)| (w.clone(), t)).collect();
        assert_eq!(CorrelationTable::mix(&parts).unwrap(), t);
        let want = t.marginals().unwrap();
        for (_, leaf) in &tree.leaves {
            let s = leaf.scenario;
            for x in 0..s.dx {
                for y in 0..s.dy {
                    assert!(!cell_zeros(leaf, x, y).is_empty());
                }
            }
            assert_eq!(leaf.marginals().unwrap(), want);
        }
    }

    #[test]
    fn one_zero_normalize_is_trivial_on_one_zero_input() {
        let pr = pr_box();
        let tree = one_zero_normalize(&pr).unwrap();
        assert_eq!(tree.leaves, vec![(one(), pr)]);
    }

    #[test]
    fn route_column_bounds() {
        let mut form = OneZeroForm::new(route_column()).unwrap();
        let (lower, upper) = form.marginal_bounds(MarginalId::L(0)).unwrap();
        assert_eq!(lower, Bound { expr: BoundExpr::Same(MarginalId::M(0)), value: rat(1, 4) });
        assert_eq!(upper, Bound { expr: BoundExpr::Same(MarginalId::M(2)), value: rat(1, 2) });
    }

    #[test]
    fn single_cell_bounds_with_zero_at_p11() {
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        let l = rat(3, 4);
        let m = rat(1, 3);
        let mut t = CorrelationTable::from_fn(s, |_, _, _, _| zero());
        write_cell(&mut t, 0, 0, cell_from_zero(&l, &m, (1, 1)));
        let mut form = OneZeroForm::new(t).unwrap();
        let (lower, upper) = form.marginal_bounds(MarginalId::L(0)).unwrap();
        assert_eq!(lower, Bound { expr: BoundExpr::Compl(MarginalId::M(0)), value: rat(2, 3) });
        assert_eq!(upper, Bound { expr: BoundExpr::Const(one()), value: one() });
    }

    #[test]
    fn unconstrained_marginal_has_unit_bounds() {
        // m0 = 0 pins the column cells structurally; l0 stays in [0, 1]
        let s = Scenario::new(1, 1, 2, 2).unwrap();
        let l = rat(1, 3);
        let mut t = CorrelationTable::from_fn(s, |_, _, _, _| zero());
        write_cell(&mut t, 0, 0, cell_from_zero(&l, &zero(), (0, 0)));
        let mut form = OneZeroForm::new(t).unwrap();
        let (lower, upper) = form.marginal_bounds(MarginalId::L(0)).unwrap();
        assert_eq!(lower.value, zero());
        assert_eq!(upper.value, one());
    }

    #[test]
    fn chain_split_matches_the_column_example() {
        let t = route_column();
        let mut form = OneZeroForm::new(t.clone()).unwrap();
        let ChainOutcome::Split { lambda, low, high, .. } = chain_split(&mut form).unwrap()
        else {
            panic!("expected a split");
        };
        assert_eq!(lambda, rat(1, 2));
        // low branch: l0 = m0 = 1/4; high branch: l0 = m2 = 1/2
        let expect_low = {
            let mut e = CorrelationTable::from_fn(t.scenario, |_, _, _, _| zero());
            write_cell(&mut e, 0, 0, cell_from_zero(&rat(1, 4), &rat(1, 4), (1, 0)));
            write_cell(&mut e, 0, 1, cell_from_zero(&rat(1, 4), &rat(1, 3), (0, 0)));
            write_cell(&mut e, 0, 2, cell_from_zero(&rat(1, 4), &rat(1, 2), (0, 1)));
            e
        };
        let expect_high = {
            let mut e = CorrelationTable::from_fn(t.scenario, |_, _, _, _| zero());
            write_cell(&mut e, 0, 0, cell_from_zero(&rat(1, 2), &rat(1, 4), (1, 0)));
            write_cell(&mut e, 0, 1, cell_from_zero(&rat(1, 2), &rat(1, 3), (0, 0)));
            write_cell(&mut e, 0, 2, cell_from_zero(&rat(1, 2), &rat(1, 2), (0, 1)));
            e
        };
        assert_eq!(low.table, expect_low);
        assert_eq!(high.table, expect_high);
        let mixed = CorrelationTable::mix(&[
            (lambda.clone(), &low.table),
            (one() - &lambda, &high.table),
        ])
        .unwrap();
        assert_eq!(mixed, t);
    }

    #[test]
    fn terminal_when_all_marginals_are_pinned_values() {
        let pr = pr_box();
        let mut form = OneZeroForm::new(pr).unwrap();
        assert!(matches!(chain_split(&mut form).unwrap(), ChainOutcome::Terminal));
    }

    #[test]
    fn parity_conflict_forces_one_half() {
        let mut chain = MarginalChain::new(vec![rat(1, 3)], vec![rat(1, 3), rat(2, 3)]);
        chain.link(0, 1, false); // l0 = m0
        chain.link(0, 1, true); // l0 = 1 - m0
        let (root, _) = chain.find(0);
        assert_eq!(chain.pinned[root], Some(half()));
    }

    #[test]
    fn decompose_pr_box_is_itself() {
        let pr = pr_box();
        let d = decompose_to_table2(&pr, DEFAULT_LEAF_BUDGET).unwrap().decomposition;
        assert_eq!(d.components, vec![(one(), pr)]);
    }

    #[test]
    fn decompose_uniform_table_exactly() {
        let t = uniform22();
        let d = decompose_to_table2(&t, DEFAULT_LEAF_BUDGET).unwrap().decomposition;
        assert_eq!(d.reconstruct(), t);
        for (w, leaf) in &d.components {
            assert!(w.is_positive());
            assert!(leaf.validate().ok());
            assert!(leaf.is_nonsignaling());
            assert!(is_extremal(leaf).is_extremal());
        }
    }

    #[test]
    fn non_binary_outputs_are_rejected() {
        let t = crate::catalog::barrett_box(crate::catalog::BarrettSpec { k: 3 }).unwrap();
        assert!(matches!(
            decompose_to_table2(&t, DEFAULT_LEAF_BUDGET),
            Err(DecomposeError::Other(Error::Parameter(_)))
        ));
    }
}
