use std::collections::BTreeMap;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_q, parse_q, sub, Vector, Q};
use crate::tree::{FilteredTree, Filtration};

/// A `d`-dimensional process stored pathwise: `values[t][leaf]` is the value at time
/// `t` on the path ending in `leaf`.
///
/// Storing by path rather than by node lets the same type carry processes adapted to
/// an enlarged filtration, whose time-`t` atoms can be finer than the tree nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Process {
    dim: usize,
    values: Vec<Vec<Vector>>,
}

/// Serialized form: one value vector per node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub dim: usize,
    pub values: BTreeMap<String, Vec<String>>,
}

impl Process {
    pub fn zeros(tree: &FilteredTree, dim: usize) -> Self {
        Self::from_fn(tree, dim, |_, _| vec![Q::zero(); dim])
    }

    pub fn from_fn(tree: &FilteredTree, dim: usize, mut f: impl FnMut(usize, usize) -> Vector) -> Self {
        let values = (0..=tree.horizon())
            .map(|t| {
                (0..tree.n_leaves())
                    .map(|leaf| {
                        let v = f(t, leaf);
                        assert_eq!(v.len(), dim, "process value has wrong dimension");
                        v
                    })
                    .collect()
            })
            .collect();
        Process { dim, values }
    }

    /// Builds an F-adapted process from per-node values (indexed by node index).
    pub fn from_nodes(tree: &FilteredTree, dim: usize, node_value: impl Fn(usize) -> Vector) -> Self {
        Self::from_fn(tree, dim, |t, leaf| node_value(tree.node_at(leaf, t)))
    }

    /// Builds a process from its initial value and per-time leaf increments.
    pub fn from_increments(
        tree: &FilteredTree,
        dim: usize,
        initial: impl Fn(usize) -> Vector,
        mut increment: impl FnMut(usize, usize) -> Vector,
    ) -> Self {
        let mut values: Vec<Vec<Vector>> = vec![(0..tree.n_leaves()).map(&initial).collect()];
        for t in 1..=tree.horizon() {
            let row = (0..tree.n_leaves())
                .map(|leaf| {
                    let inc = increment(t, leaf);
                    assert_eq!(inc.len(), dim, "increment has wrong dimension");
                    values[t - 1][leaf].iter().zip(&inc).map(|(a, b)| a + b).collect()
                })
                .collect();
            values.push(row);
        }
        Process { dim, values }
    }

    pub fn from_spec(tree: &FilteredTree, spec: &ProcessSpec) -> Result<Self> {
        let mut by_node: Vec<Option<Vector>> = vec![None; tree.nodes().len()];
        for (id, vals) in &spec.values {
            let v = tree.node_index(id).ok_or_else(|| Error::UnknownReference(id.clone()))?;
            if vals.len() != spec.dim {
                return Err(Error::DimensionMismatch { expected: spec.dim, found: vals.len() });
            }
            by_node[v] = Some(vals.iter().map(|s| parse_q(s)).collect::<Result<_>>()?);
        }
        if let Some(missing) = by_node.iter().position(Option::is_none) {
            return Err(Error::Parse(format!("process has no value at node {:?}", tree.node(missing).id)));
        }
        Ok(Self::from_nodes(tree, spec.dim, |v| by_node[v].clone().expect("checked")))
    }

    /// Node-indexed serialization; fails unless the process is F-adapted.
    pub fn to_spec(&self, tree: &FilteredTree) -> Result<ProcessSpec> {
        self.check_adapted(tree.base())?;
        let mut values = BTreeMap::new();
        for node in tree.nodes() {
            let leaf = node.leaves.start;
            values.insert(node.id.clone(), self.values[node.time][leaf].iter().map(format_q).collect());
        }
        Ok(ProcessSpec { dim: self.dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn n_leaves(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, t: usize, leaf: usize) -> &Vector {
        &self.values[t][leaf]
    }

    /// All leaf values at time `t`.
    pub fn slice(&self, t: usize) -> &[Vector] {
        &self.values[t]
    }

    /// `X_t - X_{t-1}` for `t >= 1`, and zero at the origin.
    pub fn increment(&self, t: usize, leaf: usize) -> Vector {
        if t == 0 {
            vec![Q::zero(); self.dim]
        } else {
            sub(&self.values[t][leaf], &self.values[t - 1][leaf])
        }
    }

    pub fn increments(&self, t: usize) -> Vec<Vector> {
        (0..self.n_leaves()).map(|l| self.increment(t, l)).collect()
    }

    pub fn component(&self, i: usize) -> Process {
        Process {
            dim: 1,
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| vec![v[i].clone()]).collect())
                .collect(),
        }
    }

    /// Scalar process value (first component).
    pub fn scalar(&self, t: usize, leaf: usize) -> &Q {
        &self.values[t][leaf][0]
    }

    /// Concatenates components of several processes on the same tree.
    pub fn stack(parts: &[&Process]) -> Process {
        let first = parts.first().expect("stack needs at least one process");
        let dim = parts.iter().map(|p| p.dim).sum();
        let values = (0..first.values.len())
            .map(|t| {
                (0..first.n_leaves())
                    .map(|l| parts.iter().flat_map(|p| p.values[t][l].iter().cloned()).collect())
                    .collect()
            })
            .collect();
        Process { dim, values }
    }

    fn zip_with(&self, other: &Process, f: impl Fn(&Q, &Q) -> Q) -> Result<Process> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(r1, r2)| {
                r1.iter()
                    .zip(r2)
                    .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(x, y)).collect())
                    .collect()
            })
            .collect();
        Ok(Process { dim: self.dim, values })
    }

    pub fn add(&self, other: &Process) -> Result<Process> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Process) -> Result<Process> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: &Q) -> Process {
        Process {
            dim: self.dim,
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v.iter().map(|x| x * c).collect()).collect())
                .collect(),
        }
    }

    /// `X - X_0`.
    pub fn centered(&self) -> Process {
        let first = self.values[0].clone();
        Process {
            dim: self.dim,
            values: self
                .values
                .iter()
                .map(|row| row.iter().zip(&first).map(|(v, v0)| sub(v, v0)).collect())
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().flatten().all(Zero::is_zero)
    }

    /// The time-`t` value is measurable with respect to `filtration_t` for every `t`.
    pub fn check_adapted(&self, filtration: &Filtration) -> Result<()> {
        for (t, row) in self.values.iter().enumerate() {
            if !filtration.at(t).measures_vec(row) {
                return Err(Error::NotAdapted { t });
            }
        }
        Ok(())
    }

    /// The time-`t` value is measurable with respect to `filtration_{t-1}` for `t >= 1`.
    /// The origin value never enters an integral and is not constrained.
    pub fn check_predictable(&self, filtration: &Filtration) -> Result<()> {
        for t in 1..self.values.len() {
            if !filtration.at(t - 1).measures_vec(&self.values[t]) {
                return Err(Error::NotPredictable { t });
            }
        }
        Ok(())
    }

    /// First `(t, leaf)` where the two processes differ.
    pub fn first_difference(&self, other: &Process) -> Option<(usize, usize)> {
        for t in 0..self.values.len().min(other.values.len()) {
            for l in 0..self.n_leaves() {
                if self.values[t][l] != other.values[t][l] {
                    return Some((t, l));
                }
            }
        }
        None
    }
}
