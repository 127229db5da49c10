//! Exact linear algebra over rationals: reduced row echelon form,
//! nullspaces, linear solves, and a phase-1 simplex for feasibility
//! certificates. Everything is deterministic: pivots are always chosen at
//! the smallest eligible index.

use num_traits::{Signed, Zero};

use crate::rational::{one, zero, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Rational>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![zero(); rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c));
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// In-place reduced row echelon form; returns the pivot column of each
    /// pivot row, in order. Columns are eliminated smallest-index first.
    pub fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut pivot_row = 0;
        for col in 0..self.cols {
            if pivot_row == self.rows {
                break;
            }
            let found = (pivot_row..self.rows).find(|&r| !self.get(r, col).is_zero());
            let Some(r) = found else { continue };
            self.swap_rows(pivot_row, r);
            let inv = self.get(pivot_row, col).recip();
            self.scale_row(pivot_row, &inv);
            for r2 in 0..self.rows {
                if r2 != pivot_row && !self.get(r2, col).is_zero() {
                    let factor = self.get(r2, col).clone();
                    self.row_sub_scaled(r2, pivot_row, &factor);
                }
            }
            pivots.push(col);
            pivot_row += 1;
        }
        pivots
    }

    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(i * self.cols + c, j * self.cols + c);
        }
    }

    fn scale_row(&mut self, i: usize, f: &Rational) {
        for c in 0..self.cols {
            let idx = i * self.cols + c;
            if !self.data[idx].is_zero() {
                self.data[idx] = &self.data[idx] * f;
            }
        }
    }

    /// `row_i -= f * row_j`
    fn row_sub_scaled(&mut self, i: usize, j: usize, f: &Rational) {
        for c in 0..self.cols {
            let v = &self.data[j * self.cols + c];
            if !v.is_zero() {
                let idx = i * self.cols + c;
                let delta = f * v;
                self.data[idx] = &self.data[idx] - delta;
            }
        }
    }
}

/// Basis of the nullspace of `a`, one vector per free column, ordered by
/// free-column index (smallest first). The basis vector for free column `f`
/// has a 1 at position `f`.
pub fn nullspace(a: &Matrix) -> Vec<Vec<Rational>> {
    let mut m = a.clone();
    let pivots = m.rref();
    let mut is_pivot = vec![false; a.cols];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let mut basis = Vec::new();
    for f in 0..a.cols {
        if is_pivot[f] {
            continue;
        }
        let mut v = vec![zero(); a.cols];
        v[f] = one();
        for (r, &p) in pivots.iter().enumerate() {
            v[p] = -m.get(r, f).clone();
        }
        basis.push(v);
    }
    basis
}

pub fn rank(a: &Matrix) -> usize {
    let mut m = a.clone();
    m.rref().len()
}

/// One exact solution of `a x = b` (free variables set to 0), or `None` if
/// inconsistent.
pub fn solve(a: &Matrix, b: &[Rational]) -> Option<Vec<Rational>> {
    assert_eq!(a.rows, b.len());
    let mut aug = Matrix::zeros(a.rows, a.cols + 1);
    for i in 0..a.rows {
        for j in 0..a.cols {
            aug.set(i, j, a.get(i, j).clone());
        }
        aug.set(i, a.cols, b[i].clone());
    }
    let pivots = aug.rref();
    if pivots.last() == Some(&a.cols) {
        return None; // pivot in the augmented column
    }
    let mut x = vec![zero(); a.cols];
    for (r, &p) in pivots.iter().enumerate() {
        x[p] = aug.get(r, a.cols).clone();
    }
    Some(x)
}

/// Outcome of an exact feasibility check for `{a x = b, x >= 0}`.
#[derive(Debug, Clone)]
pub enum Feasibility {
    /// A feasible point.
    Feasible(Vec<Rational>),
    /// Farkas certificate `y`: `y^T a <= 0` componentwise over columns and
    /// `y^T b > 0`, proving infeasibility.
    Infeasible(Vec<Rational>),
}

/// Phase-1 simplex with Bland's rule (exact, cycle-free).
pub fn simplex_feasibility(a: &Matrix, b: &[Rational]) -> Feasibility {
    let m = a.rows;
    let n = a.cols;
    // tableau columns: n structural, m artificial, 1 rhs
    let width = n + m + 1;
    let mut t = vec![vec![zero(); width]; m];
    let mut row_sign = vec![false; m]; // true if the original row was negated
    for i in 0..m {
        let neg = b[i].is_negative();
        row_sign[i] = neg;
        for j in 0..n {
            let v = a.get(i, j).clone();
            t[i][j] = if neg { -v } else { v };
        }
        t[i][n + i] = one();
        t[i][width - 1] = if neg { -b[i].clone() } else { b[i].clone() };
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // reduced-cost row for minimizing the sum of artificials
    let mut cost = vec![zero(); width];
    for j in 0..width {
        let mut s = zero();
        for row in t.iter() {
            s += &row[j];
        }
        cost[j] = -s;
    }
    for i in 0..m {
        cost[n + i] = zero();
    }

    loop {
        // Bland: entering column = smallest index with negative reduced cost
        let Some(enter) = (0..n + m).find(|&j| cost[j].is_negative()) else {
            break;
        };
        // ratio test; ties broken by smallest basic variable index (Bland)
        let mut leave: Option<usize> = None;
        let mut best: Option<Rational> = None;
        for i in 0..m {
            if t[i][enter].is_positive() {
                let ratio = &t[i][width - 1] / &t[i][enter];
                let better = match &best {
                    None => true,
                    Some(b) => {
                        ratio < *b || (ratio == *b && basis[i] < basis[leave.unwrap()])
                    }
                };
                if better {
                    best = Some(ratio);
                    leave = Some(i);
                }
            }
        }
        let Some(li) = leave else {
            // feasible region of phase 1 is bounded below by 0, so an
            // unbounded column cannot happen
            unreachable!("phase-1 objective unbounded");
        };
        // pivot on (li, enter)
        let inv = t[li][enter].recip();
        for v in t[li].iter_mut() {
            if !v.is_zero() {
                *v = &*v * &inv;
            }
        }
        for i in 0..m {
            if i != li && !t[i][enter].is_zero() {
                let f = t[i][enter].clone();
                for j in 0..width {
                    if !t[li][j].is_zero() {
                        let delta = &f * &t[li][j];
                        t[i][j] = &t[i][j] - delta;
                    }
                }
            }
        }
        if !cost[enter].is_zero() {
            let f = cost[enter].clone();
            for j in 0..width {
                if !t[li][j].is_zero() {
                    let delta = &f * &t[li][j];
                    cost[j] = &cost[j] - delta;
                }
            }
        }
        basis[li] = enter;
    }

    // cost[width-1] = -(optimal objective)
    if cost[width - 1].is_zero() {
        let mut x = vec![zero(); n];
        for (i, &bv) in basis.iter().enumerate() {
            if bv < n {
                x[bv] = t[i][width - 1].clone();
            }
        }
        Feasibility::Feasible(x)
    } else {
        // dual: reduced cost of artificial i is 1 - y_i (w.r.t. the sign-fixed
        // rows), so y_i = 1 - cost[n+i]; undo the row negations.
        let mut y = Vec::with_capacity(m);
        for i in 0..m {
            let yi = one() - &cost[n + i];
            y.push(if row_sign[i] { -yi } else { yi });
        }
        Feasibility::Infeasible(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn mat(rows: &[&[i64]]) -> Matrix {
        Matrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| rat(v, 1)).collect())
                .collect(),
        )
    }

    #[test]
    fn rref_and_rank() {
        let a = mat(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1]]);
        assert_eq!(rank(&a), 2);
    }

    #[test]
    fn nullspace_is_exact() {
        let a = mat(&[&[1, 1, 1], &[0, 1, 2]]);
        let ns = nullspace(&a);
        assert_eq!(ns.len(), 1);
        let v = &ns[0];
        // check a v = 0
        for i in 0..a.rows {
            let s: Rational = (0..a.cols).map(|j| a.get(i, j) * &v[j]).sum();
            assert!(s.is_zero());
        }
    }

    #[test]
    fn solve_consistent_and_inconsistent() {
        let a = mat(&[&[1, 1], &[1, -1]]);
        let x = solve(&a, &[rat(3, 1), rat(1, 1)]).unwrap();
        assert_eq!(x, vec![rat(2, 1), rat(1, 1)]);
        let a2 = mat(&[&[1, 1], &[2, 2]]);
        assert!(solve(&a2, &[rat(1, 1), rat(3, 1)]).is_none());
    }

    #[test]
    fn simplex_feasible_point() {
        // x0 + x1 = 1, x0 - x1 = 0 => x = (1/2, 1/2)
        let a = mat(&[&[1, 1], &[1, -1]]);
        match simplex_feasibility(&a, &[rat(1, 1), rat(0, 1)]) {
            Feasibility::Feasible(x) => {
                assert_eq!(&x[0] + &x[1], rat(1, 1));
                assert_eq!(x[0], x[1]);
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn simplex_farkas_certificate() {
        // x0 + x1 = -1 with x >= 0 is infeasible
        let a = mat(&[&[1, 1]]);
        let b = [rat(-1, 1)];
        match simplex_feasibility(&a, &b) {
            Feasibility::Infeasible(y) => {
                // y^T A <= 0 and y^T b > 0
                for j in 0..a.cols {
                    assert!(!( &y[0] * a.get(0, j) ).is_positive());
                }
                assert!((&y[0] * &b[0]).is_positive());
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }
}
