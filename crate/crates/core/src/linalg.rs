//! Dense exact linear algebra over the rationals.
//!
//! Matrices are row-major `Vec<Vec<Q>>`. Elimination always takes the first usable
//! row as pivot and leaves free variables at zero, so every solve returns the same
//! canonical (least-index pivot) solution on every run.

use num_traits::{One, Zero};

use crate::rational::{Vector, Q};

pub type Matrix = Vec<Vec<Q>>;

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![Q::zero(); cols]; rows]
}

pub fn identity(n: usize) -> Matrix {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Q::one();
    }
    m
}

pub fn transpose(m: &Matrix) -> Matrix {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|row| row[j].clone()).collect()).collect()
}

pub fn mul(a: &Matrix, b: &Matrix) -> Matrix {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            debug_assert_eq!(row.len(), inner);
            (0..cols)
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * &brow[j]).sum())
                .collect()
        })
        .collect()
}

pub fn mul_vec(a: &Matrix, v: &[Q]) -> Vector {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Builds the matrix whose columns are the given vectors.
pub fn from_columns(columns: &[Vector], rows: usize) -> Matrix {
    (0..rows)
        .map(|i| columns.iter().map(|c| c[i].clone()).collect())
        .collect()
}

/// Reduced row echelon form together with the pivot column of each nonzero row.
pub fn rref(m: &Matrix) -> (Matrix, Vec<usize>) {
    let mut a = m.clone();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = Q::one() / &a[r][c];
        for x in a[r].iter_mut() {
            *x *= &inv;
        }
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (x, y) in row.iter_mut().zip(&pivot_row) {
                *x -= &f * y;
            }
        }
        pivots.push(c);
        r += 1;
    }
    (a, pivots)
}

pub fn rank(m: &Matrix) -> usize {
    rref(m).1.len()
}

/// Canonical solution of `a x = b`: pivot variables solved, free variables zero.
/// Returns `None` when the system is inconsistent.
pub fn solve(a: &Matrix, b: &[Q]) -> Option<Vector> {
    let cols = a.first().map_or(0, Vec::len);
    let aug: Matrix = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let (red, pivots) = rref(&aug);
    if pivots.last() == Some(&cols) {
        return None;
    }
    let mut x = vec![Q::zero(); cols];
    for (row, &c) in red.iter().zip(&pivots) {
        x[c] = row[cols].clone();
    }
    Some(x)
}

/// Basis of `{x : a x = 0}`, one vector per free column (that entry set to one).
pub fn null_space(a: &Matrix, cols: usize) -> Vec<Vector> {
    let (red, pivots) = rref(a);
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut x = vec![Q::zero(); cols];
            x[free] = Q::one();
            for (row, &c) in red.iter().zip(&pivots) {
                x[c] = -row[free].clone();
            }
            x
        })
        .collect()
}

pub fn inverse(a: &Matrix) -> Option<Matrix> {
    let n = a.len();
    let aug: Matrix = a
        .iter()
        .zip(identity(n))
        .map(|(row, id)| row.iter().cloned().chain(id).collect())
        .collect();
    let (red, pivots) = rref(&aug);
    if pivots.len() < n || pivots[n - 1] != n - 1 {
        return None;
    }
    Some(red.into_iter().map(|row| row[n..].to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn m(rows: &[&[i64]]) -> Matrix {
        rows.iter().map(|r| r.iter().map(|&x| int(x)).collect()).collect()
    }

    #[test]
    fn least_index_solution() {
        // 2 x1 + 3 x2 = 1 has canonical solution (1/2, 0).
        let x = solve(&m(&[&[2, 3]]), &[int(1)]).unwrap();
        assert_eq!(x, vec![ratio(1, 2), int(0)]);
    }

    #[test]
    fn inconsistent_system() {
        assert!(solve(&m(&[&[1, 1], &[2, 2]]), &[int(1), int(3)]).is_none());
    }

    #[test]
    fn null_space_and_rank() {
        let a = m(&[&[1, -1, 0], &[1, 1, 1]]);
        assert_eq!(rank(&a), 2);
        let ns = null_space(&a, 3);
        assert_eq!(ns.len(), 1);
        assert!(mul_vec(&a, &ns[0]).iter().all(Zero::is_zero));
    }

    #[test]
    fn inverse_roundtrip() {
        let a = m(&[&[2, 1], &[1, 1]]);
        let inv = inverse(&a).unwrap();
        assert_eq!(mul(&a, &inv), identity(2));
        assert!(inverse(&m(&[&[1, 2], &[2, 4]])).is_none());
    }
}
