//! Finite filtered probability spaces as rooted event trees.
//!
//! Leaves are the elementary outcomes. A sigma-algebra is a [`Partition`] of the leaf
//! set, and a filtration is one partition per time. The base filtration has one atom
//! per node: the atom of a time-`t` node is the set of leaves below it.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_q, parse_q, Vector, Q};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub time: usize,
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub horizon: usize,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub time: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Conditional probability of this node given its parent (one at the root).
    pub prob: Q,
    /// Unconditional probability of the atom.
    pub abs_prob: Q,
    /// Contiguous range of leaf indices below this node.
    pub leaves: Range<usize>,
}

/// A partition of the leaf set `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    atoms: Vec<Vec<usize>>,
    atom_of: Vec<usize>,
}

impl Partition {
    /// Validates that `atoms` cover `0..n_leaves` exactly once with no empty atom.
    pub fn new(mut atoms: Vec<Vec<usize>>, n_leaves: usize) -> std::result::Result<Self, String> {
        let mut atom_of = vec![usize::MAX; n_leaves];
        for atom in atoms.iter_mut() {
            atom.sort_unstable();
        }
        atoms.sort();
        for (k, atom) in atoms.iter().enumerate() {
            if atom.is_empty() {
                return Err("empty atom".into());
            }
            for &leaf in atom {
                if leaf >= n_leaves {
                    return Err(format!("leaf index {leaf} out of range"));
                }
                if atom_of[leaf] != usize::MAX {
                    return Err(format!("leaf {leaf} appears in two atoms"));
                }
                atom_of[leaf] = k;
            }
        }
        if let Some(missing) = atom_of.iter().position(|&a| a == usize::MAX) {
            return Err(format!("leaf {missing} is not covered"));
        }
        Ok(Partition { atoms, atom_of })
    }

    pub fn atoms(&self) -> &[Vec<usize>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom_of(&self, leaf: usize) -> usize {
        self.atom_of[leaf]
    }

    /// True when every atom of `self` lies inside a single atom of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.atoms
            .iter()
            .all(|atom| atom.iter().all(|&l| coarser.atom_of(l) == coarser.atom_of(atom[0])))
    }

    /// Coarsest common refinement.
    pub fn join(&self, other: &Partition) -> Partition {
        let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for leaf in 0..self.atom_of.len() {
            groups
                .entry((self.atom_of[leaf], other.atom_of[leaf]))
                .or_default()
                .push(leaf);
        }
        Partition::new(groups.into_values().collect(), self.atom_of.len())
            .expect("join of partitions is a partition")
    }

    /// True when the leaf function `z` is constant on every atom.
    pub fn measures(&self, z: &[Q]) -> bool {
        self.atoms.iter().all(|a| a.iter().all(|&l| z[l] == z[a[0]]))
    }

    pub fn measures_vec(&self, z: &[Vector]) -> bool {
        self.atoms.iter().all(|a| a.iter().all(|&l| z[l] == z[a[0]]))
    }
}

/// One partition per time `0..=T`, each refined by the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filtration {
    levels: Vec<Partition>,
}

impl Filtration {
    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn at(&self, t: usize) -> &Partition {
        &self.levels[t]
    }

    /// The sigma-algebra `F_{t-}`: `F_{t-1}` for `t >= 1`, and `F_0` at the origin.
    pub fn before(&self, t: usize) -> &Partition {
        &self.levels[t.saturating_sub(1)]
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }
}

#[derive(Debug, Clone)]
pub struct FilteredTree {
    horizon: usize,
    nodes: Vec<Node>,
    levels: Vec<Vec<usize>>,
    leaf_prob: Vec<Q>,
    base: Filtration,
    index: HashMap<String, usize>,
}

impl FilteredTree {
    /// Validates a node list and builds the tree with its base filtration.
    pub fn build(spec: &TreeSpec) -> Result<Self> {
        let horizon = spec.horizon;
        if horizon == 0 {
            return Err(Error::MalformedTree("horizon must be at least 1".into()));
        }
        let mut index = HashMap::new();
        for (i, n) in spec.nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::MalformedTree(format!("duplicate node id {:?}", n.id)));
            }
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(spec.nodes.len());
        let mut root = None;
        for (i, n) in spec.nodes.iter().enumerate() {
            if n.time > horizon {
                return Err(Error::TimeOutOfRange { t: n.time, horizon });
            }
            let parent = match &n.parent {
                None => {
                    if root.replace(i).is_some() {
                        return Err(Error::MalformedTree("more than one root".into()));
                    }
                    if n.time != 0 {
                        return Err(Error::MalformedTree("root must sit at time 0".into()));
                    }
                    None
                }
                Some(p) => Some(*index.get(p).ok_or_else(|| Error::DanglingNode {
                    node: n.id.clone(),
                    parent: p.clone(),
                })?),
            };
            let prob = match (&n.prob, parent) {
                (Some(p), _) => parse_q(p)?,
                (None, None) => Q::one(),
                (None, Some(_)) => {
                    return Err(Error::MalformedTree(format!("node {:?} has no probability", n.id)))
                }
            };
            if parent.is_none() && !prob.is_one() {
                return Err(Error::MalformedTree("root probability must be 1".into()));
            }
            if !prob.is_positive() {
                return Err(Error::NonPositiveProbability { node: n.id.clone() });
            }
            nodes.push(Node {
                id: n.id.clone(),
                time: n.time,
                parent,
                children: Vec::new(),
                prob,
                abs_prob: Q::zero(),
                leaves: 0..0,
            });
        }
        let root = root.ok_or_else(|| Error::MalformedTree("no root".into()))?;
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent {
                if nodes[i].time != nodes[p].time + 1 {
                    return Err(Error::MalformedTree(format!(
                        "node {:?} at time {} has parent at time {}",
                        nodes[i].id, nodes[i].time, nodes[p].time
                    )));
                }
                nodes[p].children.push(i);
            }
        }
        for n in &nodes {
            if n.time < horizon && n.children.is_empty() {
                return Err(Error::MalformedTree(format!(
                    "node {:?} at time {} has no children before the horizon",
                    n.id, n.time
                )));
            }
            if !n.children.is_empty() {
                let sum: Q = n.children.iter().map(|&c| nodes[c].prob.clone()).sum();
                if !sum.is_one() {
                    return Err(Error::ProbabilitySumNotOne { node: n.id.clone(), sum: format_q(&sum) });
                }
            }
        }

        // Depth-first pass: leaf numbering, leaf ranges, absolute probabilities.
        let mut levels = vec![Vec::new(); horizon + 1];
        let mut leaf_prob = Vec::new();
        let mut visited = 0;
        let mut stack = vec![(root, false)];
        nodes[root].abs_prob = Q::one();
        while let Some((v, done)) = stack.pop() {
            if done {
                let start = nodes[v].children.first().map_or(0, |&c| nodes[c].leaves.start);
                let end = nodes[v].children.last().map_or(0, |&c| nodes[c].leaves.end);
                nodes[v].leaves = start..end;
                continue;
            }
            visited += 1;
            levels[nodes[v].time].push(v);
            if nodes[v].children.is_empty() {
                let l = leaf_prob.len();
                nodes[v].leaves = l..l + 1;
                leaf_prob.push(nodes[v].abs_prob.clone());
                continue;
            }
            stack.push((v, true));
            let children = nodes[v].children.clone();
            for &c in children.iter().rev() {
                nodes[c].abs_prob = &nodes[v].abs_prob * &nodes[c].prob;
                stack.push((c, false));
            }
        }
        if visited != nodes.len() {
            return Err(Error::MalformedTree("nodes unreachable from the root".into()));
        }
        let n_leaves = leaf_prob.len();
        let base = Filtration {
            levels: levels
                .iter()
                .map(|level| {
                    let atoms = level.iter().map(|&v| nodes[v].leaves.clone().collect()).collect();
                    Partition::new(atoms, n_leaves).expect("tree levels partition the leaves")
                })
                .collect(),
        };
        Ok(FilteredTree { horizon, nodes, levels, leaf_prob, base, index })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &Node {
        &self.nodes[v]
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Nodes at time `t`, in the same order as the atoms of `base().at(t)`.
    pub fn level(&self, t: usize) -> &[usize] {
        &self.levels[t]
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_prob.len()
    }

    pub fn leaf_prob(&self) -> &[Q] {
        &self.leaf_prob
    }

    pub fn leaf_id(&self, leaf: usize) -> &str {
        &self.nodes[self.levels[self.horizon][leaf]].id
    }

    pub fn base(&self) -> &Filtration {
        &self.base
    }

    /// The time-`t` node on the path to `leaf`.
    pub fn node_at(&self, leaf: usize, t: usize) -> usize {
        self.levels[t][self.base.at(t).atom_of(leaf)]
    }

    /// Position of `node` within its level, i.e. its base atom index.
    pub fn atom_index(&self, node: usize) -> usize {
        self.base.at(self.nodes[node].time).atom_of(self.nodes[node].leaves.start)
    }

    pub fn atom_prob(&self, atom: &[usize]) -> Q {
        atom.iter().map(|&l| self.leaf_prob[l].clone()).sum()
    }

    /// Leaf-wise conditional expectation of `z` given the sigma-algebra `part`.
    pub fn project(&self, z: &[Q], part: &Partition) -> Vec<Q> {
        let mut out = vec![Q::zero(); z.len()];
        for atom in part.atoms() {
            let mass = self.atom_prob(atom);
            let mean: Q = atom.iter().map(|&l| &self.leaf_prob[l] * &z[l]).sum::<Q>() / mass;
            for &l in atom {
                out[l] = mean.clone();
            }
        }
        out
    }

    /// Componentwise version of [`FilteredTree::project`] for vector-valued leaf functions.
    pub fn project_vec(&self, z: &[Vector], part: &Partition) -> Vec<Vector> {
        let dim = z.first().map_or(0, Vec::len);
        let mut out = vec![vec![Q::zero(); dim]; z.len()];
        for i in 0..dim {
            let comp: Vec<Q> = z.iter().map(|v| v[i].clone()).collect();
            for (o, x) in out.iter_mut().zip(self.project(&comp, part)) {
                o[i] = x;
            }
        }
        out
    }

    /// `E[x | filtration_t]`, one value per atom of the partition at time `t`.
    pub fn conditional_expectation(&self, x: &[Q], t: usize, filtration: &Filtration) -> Result<Vec<Q>> {
        if t > self.horizon {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        if x.len() != self.n_leaves() {
            return Err(Error::DimensionMismatch { expected: self.n_leaves(), found: x.len() });
        }
        let part = filtration.at(t);
        let leafwise = self.project(x, part);
        Ok(part.atoms().iter().map(|a| leafwise[a[0]].clone()).collect())
    }

    /// Serializes back to the node-list form.
    pub fn to_spec(&self) -> TreeSpec {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for level in &self.levels {
            for &v in level {
                let n = &self.nodes[v];
                nodes.push(NodeSpec {
                    id: n.id.clone(),
                    time: n.time,
                    parent: n.parent.map(|p| self.nodes[p].id.clone()),
                    prob: n.parent.map(|_| format_q(&n.prob)),
                });
            }
        }
        TreeSpec { horizon: self.horizon, nodes }
    }
}

/// A filtration on the same tree whose partitions refine the base ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enlargement {
    filtration: Filtration,
}

/// Leaf-id partitions per time; times left out inherit `F_t` joined with the previous level.
pub type EnlargementSpec = BTreeMap<usize, Vec<Vec<String>>>;

impl Enlargement {
    pub fn new(tree: &FilteredTree, spec: &EnlargementSpec) -> Result<Self> {
        let leaf_index: HashMap<&str, usize> =
            (0..tree.n_leaves()).map(|l| (tree.leaf_id(l), l)).collect();
        let mut levels: Vec<Partition> = Vec::with_capacity(tree.horizon() + 1);
        for &t in spec.keys() {
            if t > tree.horizon() {
                return Err(Error::TimeOutOfRange { t, horizon: tree.horizon() });
            }
        }
        for t in 0..=tree.horizon() {
            let part = match spec.get(&t) {
                Some(atoms) => {
                    let atoms = atoms
                        .iter()
                        .map(|atom| {
                            atom.iter()
                                .map(|id| {
                                    leaf_index
                                        .get(id.as_str())
                                        .copied()
                                        .ok_or_else(|| Error::UnknownReference(id.clone()))
                                })
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Partition::new(atoms, tree.n_leaves())
                        .map_err(|reason| Error::NotAPartition { t, reason })?
                }
                None => match levels.last() {
                    Some(prev) => tree.base().at(t).join(prev),
                    None => tree.base().at(t).clone(),
                },
            };
            levels.push(part);
        }
        Self::from_partitions(tree, levels)
    }

    pub fn from_partitions(tree: &FilteredTree, levels: Vec<Partition>) -> Result<Self> {
        if levels.len() != tree.horizon() + 1 {
            return Err(Error::DimensionMismatch { expected: tree.horizon() + 1, found: levels.len() });
        }
        for (t, part) in levels.iter().enumerate() {
            if !part.refines(tree.base().at(t)) {
                return Err(Error::NotARefinement { t });
            }
            if t + 1 < levels.len() && !levels[t + 1].refines(part) {
                return Err(Error::NotMonotone { t });
            }
        }
        Ok(Enlargement { filtration: Filtration { levels } })
    }

    /// The enlargement equal to the base filtration.
    pub fn trivial(tree: &FilteredTree) -> Self {
        Enlargement { filtration: tree.base().clone() }
    }

    /// Initial enlargement by a leaf labelling: `G_t = F_t joined with sigma(label)`.
    pub fn initial(tree: &FilteredTree, label: &[usize]) -> Self {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (leaf, &l) in label.iter().enumerate() {
            groups.entry(l).or_default().push(leaf);
        }
        let extra = Partition::new(groups.into_values().collect(), tree.n_leaves())
            .expect("labelling induces a partition");
        let levels = tree.base().levels().iter().map(|p| p.join(&extra)).collect();
        Enlargement { filtration: Filtration { levels } }
    }

    pub fn filtration(&self) -> &Filtration {
        &self.filtration
    }

    pub fn to_spec(&self, tree: &FilteredTree) -> EnlargementSpec {
        self.filtration
            .levels()
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let atoms = p
                    .atoms()
                    .iter()
                    .map(|a| a.iter().map(|&l| tree.leaf_id(l).to_string()).collect())
                    .collect();
                (t, atoms)
            })
            .collect()
    }
}

/// A stopping time given by its value on each leaf; `T + 1` encodes infinity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingTime {
    values: Vec<usize>,
    horizon: usize,
}

impl StoppingTime {
    pub fn new(tree: &FilteredTree, values: Vec<usize>) -> Result<Self> {
        let horizon = tree.horizon();
        if values.len() != tree.n_leaves() {
            return Err(Error::DimensionMismatch { expected: tree.n_leaves(), found: values.len() });
        }
        if let Some(&bad) = values.iter().find(|&&v| v > horizon + 1) {
            return Err(Error::TimeOutOfRange { t: bad, horizon: horizon + 1 });
        }
        for t in 0..=horizon {
            let ind: Vec<Q> = values.iter().map(|&v| if v == t { Q::one() } else { Q::zero() }).collect();
            if !tree.base().at(t).measures(&ind) {
                return Err(Error::NotAStoppingTime { t });
            }
        }
        Ok(StoppingTime { values, horizon })
    }

    pub fn constant(tree: &FilteredTree, t: usize) -> Self {
        StoppingTime { values: vec![t; tree.n_leaves()], horizon: tree.horizon() }
    }

    pub fn infinity(&self) -> usize {
        self.horizon + 1
    }

    pub fn value(&self, leaf: usize) -> usize {
        self.values[leaf]
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    /// `{tau = t}` is decided one step ahead for every finite `t >= 1`.
    pub fn is_predictable(&self, tree: &FilteredTree) -> bool {
        (1..=self.horizon).all(|t| {
            let ind: Vec<Q> = self.values.iter().map(|&v| if v == t { Q::one() } else { Q::zero() }).collect();
            tree.base().at(t - 1).measures(&ind)
        })
    }
}
