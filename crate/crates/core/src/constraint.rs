//! Finite predictable constraints on jump locations and the conversions between
//! star-integrals and dot-integrals that they allow.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::calculus::{dot_integral, star_integral, star_integral_with, JumpMeasure, PredictableFunction, Process};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rational::{format_q, is_zero_vec, truncation, Vector, Q};
use crate::tree::FilteredTree;

/// The weight `e(x) = min(|x|_1, 1)`, shared by every constraint slot.
pub fn weight(x: &[Q]) -> Q {
    truncation(x)
}

/// Per `(t, atom of F_{t-1})`, the menu `alpha_1..alpha_n` of admissible nonzero jump
/// locations. Slots past the number of distinct values at an atom stay empty so that
/// `n` is the same everywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSystem {
    dim: usize,
    n: usize,
    alpha: Vec<Vec<Vec<Option<Vector>>>>,
}

impl ConstraintSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self, t: usize, atom: usize, k: usize) -> Option<&Vector> {
        self.alpha[t][atom][k].as_ref()
    }

    pub fn slots(&self, t: usize, atom: usize) -> &[Option<Vector>] {
        &self.alpha[t][atom]
    }

    /// The slot `k` with `alpha_k = x` at `(t, atom)`.
    pub fn slot_of(&self, t: usize, atom: usize, x: &Vector) -> Option<usize> {
        self.alpha[t][atom].iter().position(|a| a.as_ref() == Some(x))
    }

    /// Largest number of nonempty slots at a single `(t, atom)` for `t` in `times`.
    pub fn max_occupied(&self, times: impl IntoIterator<Item = usize>) -> usize {
        times
            .into_iter()
            .flat_map(|t| self.alpha[t].iter())
            .map(|slots| slots.iter().filter(|a| a.is_some()).count())
            .max()
            .unwrap_or(0)
    }

    /// Every jump of `mu` is one of the menu values at its atom.
    pub fn validate(&self, tree: &FilteredTree, mu: &JumpMeasure) -> Result<()> {
        for t in 1..=tree.horizon() {
            let before = tree.base().before(t);
            for leaf in 0..tree.n_leaves() {
                if let Some(x) = mu.beta(t, leaf) {
                    if self.slot_of(t, before.atom_of(leaf), x).is_none() {
                        return Err(Error::ConstraintMismatch { t, leaf });
                    }
                }
            }
        }
        Ok(())
    }

    /// `(t, atom, [alpha_k as "p/q" vectors or null])` rows for reports.
    pub fn table(&self) -> Vec<ConstraintRow> {
        let mut rows = Vec::new();
        for (t, atoms) in self.alpha.iter().enumerate().skip(1) {
            for (atom, slots) in atoms.iter().enumerate() {
                rows.push(ConstraintRow {
                    t,
                    atom,
                    alpha: slots
                        .iter()
                        .map(|a| a.as_ref().map(|v| v.iter().map(format_q).collect()))
                        .collect(),
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintRow {
    pub t: usize,
    pub atom: usize,
    pub alpha: Vec<Option<Vec<String>>>,
}

/// Lists the distinct nonzero jump locations per `(t, atom)` in lexicographic order.
pub fn detect_fpcc(tree: &FilteredTree, mu: &JumpMeasure) -> ConstraintSystem {
    let mut alpha: Vec<Vec<Vec<Option<Vector>>>> = vec![Vec::new()];
    for t in 1..=tree.horizon() {
        alpha.push(
            tree.base()
                .before(t)
                .atoms()
                .iter()
                .map(|leaves| mu.locations(t, leaves).into_iter().map(Some).collect())
                .collect(),
        );
    }
    let n = alpha.iter().flatten().map(Vec::len).max().unwrap_or(0);
    for slots in alpha.iter_mut().flatten() {
        slots.resize(n, None);
    }
    ConstraintSystem { dim: mu.dim(), n, alpha }
}

/// `X_k = u_k * (mu - nu)` with `u_k(x) = e(x) 1{x = alpha_k}`.
pub fn constraint_martingales(tree: &FilteredTree, mu: &JumpMeasure, cs: &ConstraintSystem) -> Result<Process> {
    cs.validate(tree, mu)?;
    star_integral_with(tree, cs.n, mu, tree.base(), |t, atom, x| {
        let mut u = vec![Q::zero(); cs.n];
        if let Some(k) = cs.slot_of(t, atom, x) {
            u[k] = weight(x);
        }
        Ok(u)
    })
}

/// `H_k = g(alpha_k) / e(alpha_k)` on occupied slots, zero elsewhere.
pub fn star_to_dot_integrand(
    tree: &FilteredTree,
    g: &PredictableFunction,
    cs: &ConstraintSystem,
) -> Result<Process> {
    let mut table: Vec<Vec<Vector>> = vec![Vec::new()];
    for t in 1..=tree.horizon() {
        let row = (0..cs.alpha[t].len())
            .map(|atom| {
                (0..cs.n)
                    .map(|k| match cs.alpha(t, atom, k) {
                        Some(a) if !weight(a).is_zero() => Ok(g.eval(t, atom, a)? / weight(a)),
                        _ => Ok(Q::zero()),
                    })
                    .collect::<Result<Vector>>()
            })
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    Ok(Process::from_fn(tree, cs.n, |t, leaf| {
        if t == 0 {
            vec![Q::zero(); cs.n]
        } else {
            table[t][tree.base().before(t).atom_of(leaf)].clone()
        }
    }))
}

/// Both sides of `g * (mu - nu) = H . X` evaluated independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub lhs: Process,
    pub rhs: Process,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }

    /// First `(t, leaf)` where the two sides disagree.
    pub fn witness(&self) -> Option<(usize, usize)> {
        self.lhs.first_difference(&self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarToDot {
    pub integrand: Process,
    pub certificate: Certificate,
}

pub fn star_to_dot(
    tree: &FilteredTree,
    g: &PredictableFunction,
    mu: &JumpMeasure,
    cs: &ConstraintSystem,
) -> Result<StarToDot> {
    let x = constraint_martingales(tree, mu, cs)?;
    let integrand = star_to_dot_integrand(tree, g, cs)?;
    let lhs = star_integral(tree, g, mu, tree.base())?;
    let rhs = dot_integral(tree, &integrand, &x, tree.base())?;
    Ok(StarToDot { integrand, certificate: Certificate { lhs, rhs } })
}

/// Re-expands a dot-integrand as `g(t, x) = sum_k H_k e(x) 1{x = alpha_k}`, tabulated on
/// the menu values.
pub fn dot_to_star(tree: &FilteredTree, h: &Process, cs: &ConstraintSystem) -> Result<PredictableFunction> {
    if h.dim() != cs.n {
        return Err(Error::DimensionMismatch { expected: cs.n, found: h.dim() });
    }
    h.check_predictable(tree.base())?;
    let mut g = PredictableFunction::new();
    for t in 1..=tree.horizon() {
        for (atom, leaves) in tree.base().before(t).atoms().iter().enumerate() {
            let hv = h.at(t, leaves[0]);
            for (k, a) in cs.alpha[t][atom].iter().enumerate() {
                if let Some(a) = a {
                    g.insert(t, atom, a.clone(), &hv[k] * weight(a));
                }
            }
        }
    }
    Ok(g)
}

/// Partition data at the accessible times `t = 1..T`: per `(t, atom of F_{t-1})` the
/// classes `A_k` (leaf sets, possibly empty) on which the jump equals `alpha_k`, and a
/// nonvanishing weight `a`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessiblePartition {
    classes: Vec<Vec<Vec<Vec<usize>>>>,
    weights: Vec<Vec<Q>>,
}

impl AccessiblePartition {
    /// Validates coverage, measurability and weights. `classes[t]` and `weights[t]` are
    /// indexed by the base atoms at `t - 1`; entry `0` is ignored.
    pub fn new(tree: &FilteredTree, classes: Vec<Vec<Vec<Vec<usize>>>>, weights: Vec<Vec<Q>>) -> Result<Self> {
        if classes.len() != tree.horizon() + 1 || weights.len() != tree.horizon() + 1 {
            return Err(Error::DimensionMismatch { expected: tree.horizon() + 1, found: classes.len() });
        }
        let width = classes.iter().skip(1).flatten().map(Vec::len).max().unwrap_or(0);
        for t in 1..=tree.horizon() {
            let atoms = tree.base().before(t).atoms();
            if classes[t].len() != atoms.len() || weights[t].len() != atoms.len() {
                return Err(Error::DimensionMismatch { expected: atoms.len(), found: classes[t].len() });
            }
            let now = tree.base().at(t);
            for (atom, leaves) in atoms.iter().enumerate() {
                if weights[t][atom].is_zero() {
                    return Err(Error::VanishingWeight { t, atom });
                }
                if classes[t][atom].len() != width {
                    return Err(Error::DimensionMismatch { expected: width, found: classes[t][atom].len() });
                }
                let mut covered: Vec<usize> = classes[t][atom].iter().flatten().copied().collect();
                covered.sort_unstable();
                if &covered != leaves {
                    return Err(Error::NotAPartition {
                        t,
                        reason: format!("classes at atom {atom} do not partition the atom"),
                    });
                }
                for class in &classes[t][atom] {
                    let ind: Vec<Q> = (0..tree.n_leaves())
                        .map(|l| if class.contains(&l) { Q::one() } else { Q::zero() })
                        .collect();
                    if !now.measures(&ind) {
                        return Err(Error::PartitionNotMeasurable { t, atom });
                    }
                }
            }
        }
        Ok(AccessiblePartition { classes, weights })
    }

    /// Classes are the level sets of the jump (the no-jump set included), in
    /// lexicographic order of the jump value, padded with empty classes.
    pub fn from_jumps(tree: &FilteredTree, mu: &JumpMeasure, weight: impl Fn(usize, usize) -> Q) -> Result<Self> {
        let zero = vec![Q::zero(); mu.dim()];
        let mut classes = vec![Vec::new()];
        let mut weights = vec![Vec::new()];
        for t in 1..=tree.horizon() {
            let mut row = Vec::new();
            let mut wrow = Vec::new();
            for (atom, leaves) in tree.base().before(t).atoms().iter().enumerate() {
                let mut groups: std::collections::BTreeMap<Vector, Vec<usize>> = Default::default();
                for &l in leaves {
                    groups.entry(mu.beta(t, l).cloned().unwrap_or_else(|| zero.clone())).or_default().push(l);
                }
                row.push(groups.into_values().collect::<Vec<_>>());
                wrow.push(weight(t, atom));
            }
            classes.push(row);
            weights.push(wrow);
        }
        let width = classes.iter().flatten().map(Vec::len).max().unwrap_or(0);
        for slots in classes.iter_mut().flatten() {
            slots.resize(width, Vec::new());
        }
        Self::new(tree, classes, weights)
    }

    pub fn width(&self) -> usize {
        self.classes.iter().skip(1).flatten().map(Vec::len).max().unwrap_or(0)
    }

    pub fn class(&self, t: usize, atom: usize, k: usize) -> &[usize] {
        &self.classes[t][atom][k]
    }

    pub fn weight(&self, t: usize, atom: usize) -> &Q {
        &self.weights[t][atom]
    }
}

/// `G`, the integrand `H_k = g(alpha_k) 1{alpha_k != 0}`, and the driver `Y` with
/// `g * (mu - nu) = (G H) . Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessibleConversion {
    pub g_weight: Process,
    pub integrand: Process,
    pub driver: Process,
    pub certificate: Certificate,
}

pub fn accessible_star_to_dot(
    tree: &FilteredTree,
    g: &PredictableFunction,
    mu: &JumpMeasure,
    partition: &AccessiblePartition,
) -> Result<AccessibleConversion> {
    let width = partition.width();
    let before = |t: usize, leaf: usize| tree.base().before(t).atom_of(leaf);
    // the jump must be constant on each class
    let mut alpha: Vec<Vec<Vec<Option<Vector>>>> = vec![Vec::new()];
    for t in 1..=tree.horizon() {
        let mut row = Vec::new();
        for (atom, _) in tree.base().before(t).atoms().iter().enumerate() {
            let mut slots = Vec::with_capacity(width);
            for k in 0..width {
                let class = partition.class(t, atom, k);
                let value = class.first().map(|&l| mu.beta(t, l).cloned());
                for &l in class {
                    if mu.beta(t, l).cloned() != value.clone().flatten() {
                        return Err(Error::ConstraintMismatch { t, leaf: l });
                    }
                }
                slots.push(value.flatten().filter(|v| !is_zero_vec(v)));
            }
            row.push(slots);
        }
        alpha.push(row);
    }
    let driver = Process::from_increments(
        tree,
        width,
        |_| vec![Q::zero(); width],
        |t, leaf| {
            let atom = before(t, leaf);
            let leaves = &tree.base().before(t).atoms()[atom];
            let mass = tree.atom_prob(leaves);
            let a = partition.weight(t, atom);
            (0..width)
                .map(|k| {
                    let class = partition.class(t, atom, k);
                    let p = tree.atom_prob(class) / &mass;
                    let ind = if class.contains(&leaf) { Q::one() } else { Q::zero() };
                    a * (ind - p)
                })
                .collect()
        },
    );
    let g_weight = Process::from_fn(tree, 1, |t, leaf| {
        if t == 0 {
            vec![Q::zero()]
        } else {
            vec![Q::one() / partition.weight(t, before(t, leaf))]
        }
    });
    let mut table: Vec<Vec<Vector>> = vec![Vec::new()];
    for (t, atoms) in alpha.iter().enumerate().skip(1) {
        table.push(
            atoms
                .iter()
                .enumerate()
                .map(|(atom, slots)| {
                    slots
                        .iter()
                        .map(|a| match a {
                            Some(a) => g.eval(t, atom, a),
                            None => Ok(Q::zero()),
                        })
                        .collect::<Result<Vector>>()
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let integrand = Process::from_fn(tree, width, |t, leaf| {
        if t == 0 {
            vec![Q::zero(); width]
        } else {
            table[t][before(t, leaf)].clone()
        }
    });
    let weighted = Process::from_fn(tree, width, |t, leaf| {
        let gw = g_weight.scalar(t, leaf);
        integrand.at(t, leaf).iter().map(|h| h * gw).collect()
    });
    let lhs = star_integral(tree, g, mu, tree.base())?;
    let rhs = dot_integral(tree, &weighted, &driver, tree.base())?;
    Ok(AccessibleConversion { g_weight, integrand, driver, certificate: Certificate { lhs, rhs } })
}

/// `K` (`d x n`) with `sum_i gamma_i K_{i,h} = e_h - p_h 1` for every `h`, where the
/// columns `gamma_i` of the `n x d` matrix `gamma` are orthogonal to `p`.
pub fn solve_accessible_k(gamma: &Matrix, p: &[Q]) -> Result<Matrix> {
    let n = p.len();
    if gamma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: gamma.len() });
    }
    let d = gamma.first().map_or(0, Vec::len);
    if gamma.iter().any(|row| row.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: 0 });
    }
    if p.iter().sum::<Q>() != Q::one() {
        return Err(Error::NotProbabilityVector);
    }
    for i in 0..d {
        if gamma.iter().zip(p).map(|(row, ph)| &row[i] * ph).sum::<Q>() != Q::zero() {
            return Err(Error::NotOrthogonal { column: i });
        }
    }
    let mut columns = Vec::with_capacity(n);
    for h in 0..n {
        let target: Vector = (0..n)
            .map(|k| if k == h { Q::one() - &p[h] } else { -p[h].clone() })
            .collect();
        match linalg::solve(gamma, &target) {
            Some(col) => columns.push(col),
            None => {
                let mut rows = linalg::transpose(gamma);
                if d == 0 {
                    rows.clear();
                }
                rows.push(p.to_vec());
                let witness = linalg::null_space(&rows, n).into_iter().next().expect("span is deficient");
                return Err(Error::SpanDeficient { target: h, witness });
            }
        }
    }
    Ok(linalg::from_columns(&columns, d))
}

/// Right inverse `K` (`d x n`) of a full-row-rank `n x d` matrix, least-index per column.
pub fn solve_inaccessible_k(gamma: &Matrix) -> Result<Matrix> {
    let n = gamma.len();
    let d = gamma.first().map_or(0, Vec::len);
    let rank = linalg::rank(gamma);
    if rank < n {
        return Err(Error::RankDeficient { rank, needed: n });
    }
    let columns: Vec<Vector> = linalg::identity(n)
        .iter()
        .map(|e| linalg::solve(gamma, e).expect("full row rank"))
        .collect();
    Ok(linalg::from_columns(&columns, d))
}

/// Rationals as CSV, one matrix row per line.
pub fn matrix_csv(m: &Matrix) -> String {
    m.iter()
        .map(|row| row.iter().map(format_q).collect::<Vec<_>>().join(","))
        .map(|line| line + "\n")
        .collect()
}
