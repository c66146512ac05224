//! Seeded generators for fuzzing: trees, enlargements, drivers and integrands.

use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::{JumpMeasure, PredictableFunction, Process};
use crate::linalg::{self, Matrix};
use crate::rational::{int, ratio, Vector, Q};
use crate::tree::{Enlargement, FilteredTree, Filtration, NodeSpec, TreeSpec};

pub type FuzzRng = ChaCha8Rng;

pub fn rng(seed: u64) -> FuzzRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_branching: usize,
    pub horizon: usize,
    /// Upper bound on the integer weights that are normalized into branch probabilities.
    pub denom_bound: u32,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_branching: 3, horizon: 2, denom_bound: 6 }
    }
}

impl TreeParams {
    fn clamped(self) -> Self {
        TreeParams {
            max_branching: self.max_branching.max(1),
            horizon: self.horizon.max(1),
            denom_bound: self.denom_bound.max(1),
        }
    }
}

fn random_probabilities(rng: &mut FuzzRng, k: usize, bound: u32) -> Vec<Q> {
    let weights: Vec<i64> = (0..k).map(|_| i64::from(rng.gen_range(1..=bound))).collect();
    let total: i64 = weights.iter().sum();
    weights.into_iter().map(|w| ratio(w, total)).collect()
}

/// Random tree spec with node ids `r`, `r.0`, `r.0.1`, ...
pub fn random_tree_spec(seed: u64, params: TreeParams) -> TreeSpec {
    random_tree_spec_with_root(seed, params, None)
}

/// As [`random_tree_spec`], optionally forcing the number of children of the root.
pub fn random_tree_spec_with_root(seed: u64, params: TreeParams, root_children: Option<usize>) -> TreeSpec {
    let params = params.clamped();
    let mut rng = rng(seed);
    let mut nodes = vec![NodeSpec { id: "r".into(), time: 0, parent: None, prob: None }];
    let mut frontier = vec!["r".to_string()];
    for t in 1..=params.horizon {
        let mut next = Vec::new();
        for parent in &frontier {
            let k = match root_children {
                Some(k) if t == 1 => k.max(1),
                _ => rng.gen_range(1..=params.max_branching),
            };
            for (i, p) in random_probabilities(&mut rng, k, params.denom_bound).into_iter().enumerate() {
                let id = format!("{parent}.{i}");
                nodes.push(NodeSpec {
                    id: id.clone(),
                    time: t,
                    parent: Some(parent.clone()),
                    prob: Some(crate::rational::format_q(&p)),
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    TreeSpec { horizon: params.horizon, nodes }
}

pub fn random_tree(seed: u64, params: TreeParams) -> FilteredTree {
    FilteredTree::build(&random_tree_spec(seed, params)).expect("generated trees are valid")
}

/// Initial enlargement by a random labelling of the leaves with up to `labels` values.
pub fn random_enlargement(tree: &FilteredTree, rng: &mut FuzzRng, labels: usize) -> Enlargement {
    let label: Vec<usize> = (0..tree.n_leaves()).map(|_| rng.gen_range(0..labels.max(1))).collect();
    Enlargement::initial(tree, &label)
}

fn small(rng: &mut FuzzRng, bound: i64) -> Q {
    int(rng.gen_range(-bound..=bound))
}

/// Mean-zero values on the children of `node`, one vector per child.
fn centered_children(tree: &FilteredTree, node: usize, raw: Vec<Vector>) -> Vec<Vector> {
    let children = &tree.node(node).children;
    let dim = raw.first().map_or(0, Vec::len);
    let mean: Vector = (0..dim)
        .map(|i| children.iter().zip(&raw).map(|(&c, v)| &tree.node(c).prob * &v[i]).sum())
        .collect();
    raw.into_iter().map(|v| v.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect()
}

/// Builds a process from per-node child increments supplied by `step`.
fn from_node_steps(tree: &FilteredTree, dim: usize, mut step: impl FnMut(usize) -> Vec<Vector>) -> Process {
    let mut values: Vec<Option<Vector>> = vec![None; tree.nodes().len()];
    for t in 0..=tree.horizon() {
        for &v in tree.level(t) {
            if t == 0 {
                values[v] = Some(vec![Q::zero(); dim]);
            }
            if t == tree.horizon() {
                continue;
            }
            let base = values[v].clone().expect("parent first");
            for (&c, inc) in tree.node(v).children.clone().iter().zip(step(v)) {
                values[c] = Some(base.iter().zip(&inc).map(|(a, b)| a + b).collect());
            }
        }
    }
    Process::from_nodes(tree, dim, |v| values[v].clone().expect("all nodes reached"))
}

/// Random `dim`-dimensional F-martingale started at zero with small rational jumps.
pub fn random_martingale(tree: &FilteredTree, rng: &mut FuzzRng, dim: usize) -> Process {
    from_node_steps(tree, dim, |v| {
        let raw = (0..tree.node(v).children.len())
            .map(|_| (0..dim).map(|_| small(rng, 4)).collect())
            .collect();
        centered_children(tree, v, raw)
    })
}

/// Random `d`-dimensional martingale whose child increments span the mean-zero space at
/// every node where that is possible (`children - 1 <= d`).
pub fn random_mrp_basis(tree: &FilteredTree, rng: &mut FuzzRng, d: usize) -> Process {
    from_node_steps(tree, d, |v| {
        let m = tree.node(v).children.len();
        let needed = (m - 1).min(d);
        for _ in 0..64 {
            let raw = (0..m).map(|_| (0..d).map(|_| small(rng, 3)).collect()).collect();
            let inc = centered_children(tree, v, raw);
            if linalg::rank(&inc) == needed {
                return inc;
            }
        }
        // deterministic fallback: indicator of child h+1 in component h
        let raw = (0..m)
            .map(|c| (0..d).map(|h| if c == h + 1 { Q::one() } else { Q::zero() }).collect())
            .collect();
        centered_children(tree, v, raw)
    })
}

/// The largest number of children of any node.
pub fn max_children(tree: &FilteredTree) -> usize {
    tree.nodes().iter().map(|n| n.children.len()).max().unwrap_or(0)
}

/// Random process whose time-`t` value is measurable with respect to `filtration_{t-1}`.
pub fn random_predictable(tree: &FilteredTree, rng: &mut FuzzRng, dim: usize, filtration: &Filtration) -> Process {
    let mut table: Vec<Vec<Vector>> = vec![vec![vec![Q::zero(); dim]; tree.n_leaves()]];
    for t in 1..=tree.horizon() {
        let mut row = vec![Vec::new(); tree.n_leaves()];
        for atom in filtration.before(t).atoms() {
            let v: Vector = (0..dim).map(|_| small(rng, 3)).collect();
            for &l in atom {
                row[l] = v.clone();
            }
        }
        table.push(row);
    }
    Process::from_fn(tree, dim, |t, l| table[t][l].clone())
}

/// Random values `k / 2` with `|k| <= 6` at every point charged by `mu`.
pub fn random_function(tree: &FilteredTree, rng: &mut FuzzRng, mu: &JumpMeasure) -> PredictableFunction {
    PredictableFunction::from_fn(tree, mu, |_, _, _| ratio(rng.gen_range(-6..=6), 2))
}

/// A random `(gamma, p)` satisfying the accessible preconditions: `p` has positive
/// entries and the columns of the `n x d` matrix `gamma` span the complement of `p`.
pub fn random_accessible_system(rng: &mut FuzzRng, max_n: usize) -> (Matrix, Vector) {
    let n = rng.gen_range(1..=max_n.max(1));
    let p = random_probabilities(rng, n, 7);
    let d = n - 1 + rng.gen_range(0..=1);
    loop {
        let columns: Vec<Vector> = (0..d)
            .map(|_| {
                let v: Vector = (0..n).map(|_| small(rng, 3)).collect();
                let c = crate::rational::dot(&v, &p) / crate::rational::dot(&p, &p);
                v.iter().zip(&p).map(|(a, b)| a - &c * b).collect()
            })
            .collect();
        let gamma = linalg::from_columns(&columns, n);
        if d == 0 || linalg::rank(&gamma) == n - 1 {
            return (gamma, p);
        }
    }
}

/// A random full-row-rank `n x d` matrix with `d >= n`.
pub fn random_full_rank(rng: &mut FuzzRng, max_n: usize) -> Matrix {
    let n = rng.gen_range(1..=max_n.max(1));
    let d = n + rng.gen_range(0..=1);
    loop {
        let gamma: Matrix = (0..n).map(|_| (0..d).map(|_| small(rng, 3)).collect()).collect();
        if linalg::rank(&gamma) == n {
            return gamma;
        }
    }
}

/// Picks a random element.
pub fn choose<'a, T>(rng: &mut FuzzRng, items: &'a [T]) -> Option<&'a T> {
    items.choose(rng)
}
