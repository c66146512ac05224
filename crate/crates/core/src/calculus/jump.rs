//! Integer-valued jump measures, their compensators and star-integrals.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{is_zero_vec, Vector, Q};
use crate::tree::{FilteredTree, Filtration};

use super::Process;

/// The jump measure of a process: `beta[t][leaf]` is the jump location on the time
/// support `D = {dX != 0}` and `None` off it. Time zero never carries a jump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JumpMeasure {
    dim: usize,
    beta: Vec<Vec<Option<Vector>>>,
}

impl JumpMeasure {
    pub fn from_process(x: &Process) -> Self {
        let beta = (0..=x.horizon())
            .map(|t| {
                (0..x.n_leaves())
                    .map(|leaf| {
                        let dx = x.increment(t, leaf);
                        (t > 0 && !is_zero_vec(&dx)).then_some(dx)
                    })
                    .collect()
            })
            .collect();
        JumpMeasure { dim: x.dim(), beta }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn beta(&self, t: usize, leaf: usize) -> Option<&Vector> {
        self.beta[t][leaf].as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.iter().flatten().all(Option::is_none)
    }

    /// Base-filtration nodes in the time support, in level order.
    pub fn support_nodes(&self, tree: &FilteredTree) -> Vec<usize> {
        (1..=tree.horizon())
            .flat_map(|t| tree.level(t).iter().copied())
            .filter(|&v| {
                let n = tree.node(v);
                self.beta[n.time][n.leaves.start].is_some()
            })
            .collect()
    }

    /// Distinct jump locations on the leaves of `atom` at time `t`, sorted.
    pub fn locations(&self, t: usize, atom: &[usize]) -> Vec<Vector> {
        let mut out: Vec<Vector> = atom.iter().filter_map(|&l| self.beta[t][l].clone()).collect();
        out.sort();
        out.dedup();
        out
    }
}

/// `nu({t} x {x} | atom)` for every time and every atom of the filtration at `t - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Compensator {
    masses: Vec<Vec<BTreeMap<Vector, Q>>>,
}

impl Compensator {
    pub fn at(&self, t: usize, atom: usize) -> &BTreeMap<Vector, Q> {
        &self.masses[t][atom]
    }

    /// Total charge `nu({t} x E | atom)`.
    pub fn total(&self, t: usize, atom: usize) -> Q {
        self.masses[t][atom].values().sum()
    }
}

pub fn compensate_measure(tree: &FilteredTree, mu: &JumpMeasure, filtration: &Filtration) -> Compensator {
    let mut masses = vec![Vec::new()];
    for t in 1..=tree.horizon() {
        let row = filtration
            .before(t)
            .atoms()
            .iter()
            .map(|atom| {
                let mass = tree.atom_prob(atom);
                let mut table: BTreeMap<Vector, Q> = BTreeMap::new();
                for &l in atom {
                    if let Some(x) = mu.beta(t, l) {
                        *table.entry(x.clone()).or_insert_with(Q::zero) += &tree.leaf_prob()[l] / &mass;
                    }
                }
                table
            })
            .collect();
        masses.push(row);
    }
    Compensator { masses }
}

/// A scalar predictable function `g(t, atom, x)` tabulated sparsely. `atom` indexes the
/// base partition at `t - 1`, so the table is F-predictable in its node argument.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictableFunction {
    table: BTreeMap<(usize, usize, Vector), Q>,
}

impl PredictableFunction {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tabulates `f` at every point charged by `mu`.
    pub fn from_fn(tree: &FilteredTree, mu: &JumpMeasure, mut f: impl FnMut(usize, usize, &Vector) -> Q) -> Self {
        let mut g = Self::new();
        for t in 1..=tree.horizon() {
            for (atom, leaves) in tree.base().before(t).atoms().iter().enumerate() {
                for x in mu.locations(t, leaves) {
                    let value = f(t, atom, &x);
                    g.insert(t, atom, x, value);
                }
            }
        }
        g
    }

    pub fn insert(&mut self, t: usize, atom: usize, x: Vector, value: Q) {
        self.table.insert((t, atom, x), value);
    }

    pub fn get(&self, t: usize, atom: usize, x: &Vector) -> Option<&Q> {
        self.table.get(&(t, atom, x.clone()))
    }

    pub fn eval(&self, t: usize, atom: usize, x: &Vector) -> Result<Q> {
        self.get(t, atom, x)
            .cloned()
            .ok_or_else(|| Error::IncompleteFunctionTable { t, atom, value: x.clone() })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(usize, usize, Vector), &Q)> {
        self.table.iter()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// Compensated star-integral of a vector-valued `f(t, base atom at t - 1, x)`:
/// the increment is `f(beta) 1_D - E[f(beta) 1_D | filtration_{t-1}]`.
pub fn star_integral_with(
    tree: &FilteredTree,
    dim: usize,
    mu: &JumpMeasure,
    filtration: &Filtration,
    mut f: impl FnMut(usize, usize, &Vector) -> Result<Vector>,
) -> Result<Process> {
    let mut raw: Vec<Vec<Vector>> = vec![Vec::new()];
    for t in 1..=tree.horizon() {
        let before = tree.base().before(t);
        let row = (0..tree.n_leaves())
            .map(|leaf| match mu.beta(t, leaf) {
                Some(x) => f(t, before.atom_of(leaf), x),
                None => Ok(vec![Q::zero(); dim]),
            })
            .collect::<Result<Vec<_>>>()?;
        raw.push(row);
    }
    let compensated: Vec<Vec<Vector>> = (0..=tree.horizon())
        .map(|t| {
            if t == 0 {
                return Vec::new();
            }
            let mean = tree.project_vec(&raw[t], filtration.before(t));
            raw[t].iter().zip(mean).map(|(a, m)| crate::rational::sub(a, &m)).collect()
        })
        .collect();
    Ok(Process::from_increments(tree, dim, |_| vec![Q::zero(); dim], |t, leaf| compensated[t][leaf].clone()))
}

/// `g * (mu - nu)` for a scalar table `g`, with `nu` the compensator in `filtration`.
pub fn star_integral(
    tree: &FilteredTree,
    g: &PredictableFunction,
    mu: &JumpMeasure,
    filtration: &Filtration,
) -> Result<Process> {
    star_integral_with(tree, 1, mu, filtration, |t, atom, x| Ok(vec![g.eval(t, atom, x)?]))
}

/// `x * (mu - nu)`, the compensated sum of jumps.
pub fn identity_star_integral(tree: &FilteredTree, mu: &JumpMeasure, filtration: &Filtration) -> Process {
    star_integral_with(tree, mu.dim(), mu, filtration, |_, _, x| Ok(x.clone())).expect("identity is total")
}

/// A `g` with `[Y, M]^p = [g * (mu - nu), M]^p` for the scalar F-martingale `y` and the
/// jump measure `mu` of an F-martingale `M`, computed in the base filtration.
///
/// Per `(t, atom)`: `U(x)` is the mean of `dY` over the leaves where `beta = x`,
/// `a = P(D | atom)`, `U_hat = E[dY 1_D | atom]`, and `g = U + U_hat / (1 - a)`.
/// When `a = 1` the correction is dropped: `U_hat` then equals `E[dY | atom] = 0`.
pub fn project_onto_jump_measure(tree: &FilteredTree, y: &Process, mu: &JumpMeasure) -> Result<PredictableFunction> {
    if y.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: y.dim() });
    }
    let mut g = PredictableFunction::new();
    for t in 1..=tree.horizon() {
        for (atom, leaves) in tree.base().before(t).atoms().iter().enumerate() {
            let mass = tree.atom_prob(leaves);
            let mut charged = Q::zero();
            let mut u_hat = Q::zero();
            let mut by_value: BTreeMap<Vector, (Q, Q)> = BTreeMap::new();
            for &l in leaves {
                if let Some(x) = mu.beta(t, l) {
                    let p = &tree.leaf_prob()[l] / &mass;
                    let dy = y.increment(t, l).swap_remove(0);
                    charged += &p;
                    u_hat += &p * &dy;
                    let entry = by_value.entry(x.clone()).or_insert_with(|| (Q::zero(), Q::zero()));
                    entry.0 += &p * &dy;
                    entry.1 += p;
                }
            }
            let correction = if charged.is_one() { Q::zero() } else { u_hat / (Q::one() - charged) };
            for (x, (weighted, p)) in by_value {
                g.insert(t, atom, x, weighted / p + &correction);
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{check_martingale, decompose, predictable_bracket};
    use crate::fixtures;
    use crate::rational::{int, ratio};

    #[test]
    fn jump_measure_examples() {
        let bin = fixtures::bin1();
        let constant = Process::from_fn(&bin, 1, |_, _| vec![int(4)]);
        assert!(JumpMeasure::from_process(&constant).is_empty());
        let mu = JumpMeasure::from_process(&fixtures::bin1_walk(&bin));
        assert_eq!(mu.beta(1, 0), Some(&vec![int(1)]));
        assert_eq!(mu.beta(1, 1), Some(&vec![int(-1)]));
        assert_eq!(mu.support_nodes(&bin).len(), 2);

        // (0, 0) at c is excluded, (0, -2) is not
        let ter = fixtures::ter1();
        let w = fixtures::ter1_basis(&ter);
        let mu = JumpMeasure::from_process(&w);
        assert_eq!(mu.beta(1, 2), Some(&vec![int(0), int(-2)]));
        let w1 = JumpMeasure::from_process(&w.component(0));
        assert_eq!(w1.beta(1, 2), None);
    }

    #[test]
    fn compensator_examples() {
        let bin = fixtures::bin1();
        let mu = JumpMeasure::from_process(&fixtures::bin1_walk(&bin));
        let nu = compensate_measure(&bin, &mu, bin.base());
        assert_eq!(nu.at(1, 0).get(&vec![int(1)]), Some(&ratio(1, 2)));
        assert_eq!(nu.at(1, 0).get(&vec![int(-1)]), Some(&ratio(1, 2)));

        let ter = fixtures::ter1();
        let ga = fixtures::ga(&ter);
        let w = fixtures::ter1_basis(&ter);
        let mu = JumpMeasure::from_process(&w);
        let nu_bar = compensate_measure(&ter, &mu, ga.filtration());
        // atom 1 of GA at time 0 is {b, c}
        let bc = nu_bar.at(1, 1);
        assert_eq!(bc.len(), 2);
        assert_eq!(bc.get(&vec![int(-1), int(1)]), Some(&ratio(1, 2)));
        assert_eq!(bc.get(&vec![int(0), int(-2)]), Some(&ratio(1, 2)));

        let empty = JumpMeasure::from_process(&Process::zeros(&ter, 2));
        assert_eq!(compensate_measure(&ter, &empty, ter.base()).total(1, 0), int(0));
    }

    #[test]
    fn star_integral_examples() {
        let ter = fixtures::ter1();
        let w = fixtures::ter1_basis(&ter);
        let mu = JumpMeasure::from_process(&w);
        let ones = PredictableFunction::from_fn(&ter, &mu, |_, _, _| int(1));
        let counting = star_integral(&ter, &ones, &mu, ter.base()).unwrap();
        check_martingale(&ter, &counting, ter.base()).unwrap();
        assert_eq!(counting.scalar(1, 0), &int(0));

        let bin = fixtures::bin1();
        let x = fixtures::bin1_walk(&bin).add(&Process::from_fn(&bin, 1, |t, _| vec![int(t as i64)])).unwrap();
        let mu = JumpMeasure::from_process(&x);
        let id = PredictableFunction::from_fn(&bin, &mu, |_, _, v| v[0].clone());
        let z = star_integral(&bin, &id, &mu, bin.base()).unwrap();
        assert_eq!(z, decompose(&bin, &x, bin.base()).martingale_part);

        let missing = PredictableFunction::new();
        assert!(matches!(
            star_integral(&bin, &missing, &mu, bin.base()),
            Err(Error::IncompleteFunctionTable { t: 1, .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let ter = fixtures::ter1();
        let w = fixtures::ter1_basis(&ter);
        let (m, y) = (w.component(0), w.component(1));
        let mu = JumpMeasure::from_process(&m);
        let g = project_onto_jump_measure(&ter, &y, &mu).unwrap();
        let z = star_integral(&ter, &g, &mu, ter.base()).unwrap();
        assert_eq!(
            predictable_bracket(&ter, &y, &m, ter.base()).unwrap(),
            predictable_bracket(&ter, &z, &m, ter.base()).unwrap()
        );

        // self projection: g(x) = x where charged
        let g = project_onto_jump_measure(&ter, &m, &mu).unwrap();
        for ((_, _, x), v) in g.entries() {
            assert_eq!(&x[0], v);
        }

        // jumps at different times give a null bracket on both sides
        let tree = fixtures::two_period();
        let value = |tree: &FilteredTree, v: usize| -> Q {
            match tree.node(v).id.as_str() {
                "x" | "x.u" | "x.d" => int(1),
                "y" | "y.u" | "y.d" => int(-1),
                _ => int(0),
            }
        };
        let m = Process::from_nodes(&tree, 1, |v| vec![value(&tree, v)]);
        let y = Process::from_nodes(&tree, 1, |v| match tree.node(v).id.as_str() {
            "x.u" => vec![int(2)],
            "x.d" => vec![int(-1)],
            _ => vec![int(0)],
        });
        check_martingale(&tree, &y, tree.base()).unwrap();
        let mu = JumpMeasure::from_process(&m);
        let g = project_onto_jump_measure(&tree, &y, &mu).unwrap();
        let z = star_integral(&tree, &g, &mu, tree.base()).unwrap();
        assert!(predictable_bracket(&tree, &y, &m, tree.base()).unwrap().is_zero());
        assert!(predictable_bracket(&tree, &z, &m, tree.base()).unwrap().is_zero());
    }
}
