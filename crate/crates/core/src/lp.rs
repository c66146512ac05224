//! Exact-rational two-phase simplex with Bland's anti-cycling rule.
//!
//! Solves `maximize c.x subject to A x = b, x >= 0`. Problem sizes here are tiny
//! (a handful of variables per tree atom), so a dense tableau is used and reduced
//! costs are recomputed from scratch each pivot.

use num_traits::{Signed, Zero};

use crate::linalg::Matrix;
use crate::rational::{Vector, Q};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vector, value: Q },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vector>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Q {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let inv = Q::from_integer(1.into()) / &self.rows[r][c];
        for x in self.rows[r].iter_mut() {
            *x *= &inv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (x, y) in row.iter_mut().zip(&prow) {
                *x -= &f * y;
            }
        }
        self.basis[r] = c;
    }

    fn reduced_cost(&self, cost: &[Q], j: usize) -> Q {
        let z: Q = self
            .rows
            .iter()
            .zip(&self.basis)
            .map(|(row, &b)| &cost[b] * &row[j])
            .sum();
        &cost[j] - z
    }

    /// Runs Bland pivots over the columns `< limit`. Returns false when unbounded.
    fn optimize(&mut self, cost: &[Q], limit: usize) -> bool {
        loop {
            let entering = (0..limit)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| self.reduced_cost(cost, j).is_positive());
            let Some(j) = entering else { return true };
            let mut best: Option<(usize, Q)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][j];
                if !a.is_positive() {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                let better = match &best {
                    None => true,
                    Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            let Some((i, _)) = best else { return false };
            self.pivot(i, j);
        }
    }
}

/// Maximizes `c.x` over `{x >= 0 : A x = b}`.
pub fn maximize(a: &Matrix, b: &[Q], c: &[Q]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    let width = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (arow, bi)) in a.iter().zip(b).enumerate() {
        debug_assert_eq!(arow.len(), n);
        let flip = bi.is_negative();
        let mut row: Vector = arow.iter().map(|x| if flip { -x } else { x.clone() }).collect();
        row.extend((0..m).map(|k| if k == i { Q::from_integer(1.into()) } else { Q::zero() }));
        row.push(if flip { -bi } else { bi.clone() });
        rows.push(row);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), width };

    // Phase one: drive the artificial sum to zero.
    let mut phase_one = vec![Q::zero(); width];
    for x in phase_one.iter_mut().skip(n) {
        *x = Q::from_integer((-1).into());
    }
    t.optimize(&phase_one, width);
    let artificial_sum: Q = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.rhs(i).clone()).sum();
    if !artificial_sum.is_zero() {
        return LpOutcome::Infeasible;
    }
    // Pivot remaining (zero-level) artificials out, dropping redundant rows.
    let mut i = 0;
    while i < t.rows.len() {
        if t.basis[i] >= n {
            match (0..n).find(|&j| !t.rows[i][j].is_zero()) {
                Some(j) => t.pivot(i, j),
                None => {
                    t.rows.remove(i);
                    t.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let mut cost: Vector = c.to_vec();
    cost.extend((0..m).map(|_| Q::zero()));
    if !t.optimize(&cost, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Q::zero(); n];
    for (i, &bv) in t.basis.iter().enumerate() {
        x[bv] = t.rhs(i).clone();
    }
    let value = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    LpOutcome::Optimal { x, value }
}
