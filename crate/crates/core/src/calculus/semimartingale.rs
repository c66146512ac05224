//! Compensators, special decompositions, brackets and dot-integrals.

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::rational::{dot, Q};
use crate::tree::{FilteredTree, Filtration};

use super::Process;

/// Canonical decomposition `X = X_0 + martingale_part + drift_part`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub martingale_part: Process,
    pub drift_part: Process,
}

/// `A^p` with `A^p_0 = 0` and `dA^p_t = E[dA_t | filtration_{t-1}]`.
pub fn dual_predictable_projection(tree: &FilteredTree, a: &Process, filtration: &Filtration) -> Process {
    let increments: Vec<_> = (0..=tree.horizon())
        .map(|t| {
            if t == 0 {
                Vec::new()
            } else {
                tree.project_vec(&a.increments(t), filtration.before(t))
            }
        })
        .collect();
    Process::from_increments(tree, a.dim(), |_| vec![Q::zero(); a.dim()], |t, leaf| increments[t][leaf].clone())
}

pub fn decompose(tree: &FilteredTree, x: &Process, filtration: &Filtration) -> Decomposition {
    let drift_part = dual_predictable_projection(tree, x, filtration);
    let martingale_part = x.centered().sub(&drift_part).expect("same dimension");
    Decomposition { martingale_part, drift_part }
}

/// Fails with the first `(t, atom)` where the conditional mean increment is nonzero.
pub fn check_martingale(tree: &FilteredTree, x: &Process, filtration: &Filtration) -> Result<()> {
    x.check_adapted(filtration)?;
    for t in 1..=tree.horizon() {
        let part = filtration.before(t);
        let means = tree.project_vec(&x.increments(t), part);
        for (atom, leaves) in part.atoms().iter().enumerate() {
            if means[leaves[0]].iter().any(|m| !m.is_zero()) {
                return Err(Error::NotAMartingale { t, atom });
            }
        }
    }
    Ok(())
}

pub fn is_martingale(tree: &FilteredTree, x: &Process, filtration: &Filtration) -> bool {
    check_martingale(tree, x, filtration).is_ok()
}

/// Componentwise quadratic covariation `[X_i, Y_i]_t = sum_{s <= t} dX_i dY_i`.
pub fn bracket(tree: &FilteredTree, x: &Process, y: &Process) -> Result<Process> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: y.dim() });
    }
    Ok(Process::from_increments(
        tree,
        x.dim(),
        |_| vec![Q::zero(); x.dim()],
        |t, leaf| {
            x.increment(t, leaf)
                .iter()
                .zip(y.increment(t, leaf))
                .map(|(a, b)| a * b)
                .collect()
        },
    ))
}

/// Matrix covariation `[X, Y^T]` flattened row-major (`dim = dx * dy`).
pub fn bracket_matrix(tree: &FilteredTree, x: &Process, y: &Process) -> Process {
    let dim = x.dim() * y.dim();
    Process::from_increments(
        tree,
        dim,
        |_| vec![Q::zero(); dim],
        |t, leaf| {
            let dx = x.increment(t, leaf);
            let dy = y.increment(t, leaf);
            dx.iter().flat_map(|a| dy.iter().map(move |b| a * b)).collect()
        },
    )
}

/// `[X, Y]^p`, the compensator of the componentwise bracket.
pub fn predictable_bracket(tree: &FilteredTree, x: &Process, y: &Process, filtration: &Filtration) -> Result<Process> {
    Ok(dual_predictable_projection(tree, &bracket(tree, x, y)?, filtration))
}

/// `[X, Y^T]^p` flattened row-major.
pub fn predictable_bracket_matrix(tree: &FilteredTree, x: &Process, y: &Process, filtration: &Filtration) -> Process {
    dual_predictable_projection(tree, &bracket_matrix(tree, x, y), filtration)
}

/// `(H^T . X)_t = sum_{1 <= s <= t} H_s . dX_s`, a scalar process null at zero.
pub fn dot_integral(tree: &FilteredTree, h: &Process, x: &Process, filtration: &Filtration) -> Result<Process> {
    if h.dim() != x.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), found: h.dim() });
    }
    h.check_predictable(filtration)?;
    Ok(Process::from_increments(
        tree,
        1,
        |_| vec![Q::zero()],
        |t, leaf| vec![dot(h.at(t, leaf), &x.increment(t, leaf))],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::{int, ratio};

    #[test]
    fn symmetric_coin_compensator() {
        let tree = fixtures::bin1();
        // A = 1_{u} 1_{[1, inf)}
        let a = Process::from_nodes(&tree, 1, |v| {
            vec![if tree.node(v).id == "u" { int(1) } else { int(0) }]
        });
        let ap = dual_predictable_projection(&tree, &a, tree.base());
        assert_eq!(ap.at(1, 0), &vec![ratio(1, 2)]);
        assert_eq!(ap.at(1, 1), &vec![ratio(1, 2)]);
        assert_eq!(ap.at(0, 0), &vec![int(0)]);
    }

    #[test]
    fn compensator_under_enlargement() {
        let tree = fixtures::ter1();
        let ga = fixtures::ga(&tree);
        let a = Process::from_nodes(&tree, 1, |v| vec![if tree.node(v).id == "a" { int(1) } else { int(0) }]);
        let ap = dual_predictable_projection(&tree, &a, ga.filtration());
        let got: Vec<Q> = (0..3).map(|l| ap.scalar(1, l).clone()).collect();
        assert_eq!(got, vec![int(1), int(0), int(0)]);
    }

    #[test]
    fn martingale_compensator_vanishes() {
        let tree = fixtures::ter1();
        let w = fixtures::ter1_basis(&tree);
        assert!(dual_predictable_projection(&tree, &w, tree.base()).is_zero());
        let dec = decompose(&tree, &w, tree.base());
        assert!(dec.drift_part.is_zero());
        assert_eq!(dec.martingale_part, w.centered());
    }

    #[test]
    fn decomposition_under_enlargement() {
        let tree = fixtures::ter1();
        let ga = fixtures::ga(&tree);
        let w1 = fixtures::ter1_basis(&tree).component(0);
        let dec = decompose(&tree, &w1, ga.filtration());
        let drift: Vec<Q> = (0..3).map(|l| dec.drift_part.scalar(1, l).clone()).collect();
        assert_eq!(drift, vec![int(1), ratio(-1, 2), ratio(-1, 2)]);
        check_martingale(&tree, &dec.martingale_part, ga.filtration()).unwrap();
    }

    #[test]
    fn deterministic_increasing_process_has_no_martingale_part() {
        let tree = fixtures::two_period();
        let x = Process::from_fn(&tree, 1, |t, _| vec![int(t as i64 * t as i64)]);
        assert!(decompose(&tree, &x, tree.base()).martingale_part.is_zero());
    }

    #[test]
    fn bracket_examples() {
        let bin = fixtures::bin1();
        let x = fixtures::bin1_walk(&bin);
        let b = bracket(&bin, &x, &x).unwrap();
        assert_eq!(b.at(1, 0), &vec![int(1)]);
        assert_eq!(b.at(1, 1), &vec![int(1)]);

        let ter = fixtures::ter1();
        let w = fixtures::ter1_basis(&ter);
        let b = bracket(&ter, &w.component(0), &w.component(1)).unwrap();
        let got: Vec<Q> = (0..3).map(|l| b.scalar(1, l).clone()).collect();
        assert_eq!(got, vec![int(1), int(-1), int(0)]);

        // disjoint jump supports
        let ya = Process::from_nodes(&ter, 1, |v| vec![if ter.node(v).id == "a" { int(1) } else { int(0) }]);
        let yb = Process::from_nodes(&ter, 1, |v| vec![if ter.node(v).id == "b" { int(2) } else { int(0) }]);
        assert!(bracket(&ter, &ya, &yb).unwrap().is_zero());
        assert!(matches!(bracket(&ter, &w, &ya), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dot_integral_examples() {
        let bin = fixtures::bin1();
        let x = fixtures::bin1_walk(&bin);
        let one = Process::from_fn(&bin, 1, |_, _| vec![int(1)]);
        assert_eq!(dot_integral(&bin, &one, &x, bin.base()).unwrap(), x.centered());
        let zero = Process::zeros(&bin, 1);
        assert!(dot_integral(&bin, &zero, &x, bin.base()).unwrap().is_zero());
        let three = Process::from_fn(&bin, 1, |_, _| vec![int(3)]);
        let y = dot_integral(&bin, &three, &x, bin.base()).unwrap();
        assert_eq!((y.scalar(1, 0).clone(), y.scalar(1, 1).clone()), (int(3), int(-3)));
        assert!(matches!(dot_integral(&bin, &x, &x, bin.base()), Err(Error::NotPredictable { t: 1 })));
    }
}
