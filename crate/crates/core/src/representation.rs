//! Martingale representation on event trees: the per-node rank test, representation
//! coefficients, conditional multiplicity, and the reconstructed driver families.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::calculus::{check_martingale, dot_integral, identity_star_integral, JumpMeasure, Process};
use crate::constraint::{constraint_martingales, detect_fpcc, weight, ConstraintSystem};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rational::{dot, format_q, pow2, primitive_integer, Vector, Q};
use crate::tree::{FilteredTree, StoppingTime};

/// Where the rank test first fails: the child increments of `W` below `node` span a
/// space of dimension `rank` instead of `needed`, and the mean-zero `xi` (one entry per
/// child) is not a combination of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrpFailure {
    pub t: usize,
    pub atom: usize,
    pub node: String,
    pub rank: usize,
    pub needed: usize,
    pub xi: Vector,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiplicityRow {
    pub t: usize,
    pub atom: usize,
    pub node: String,
    pub children: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrpReport {
    pub holds: bool,
    pub failure: Option<MrpFailure>,
    /// One row per non-terminal node; `t` is the time of its children.
    pub multiplicity: Vec<MultiplicityRow>,
}

/// Rows are children, columns are components of `dW`.
fn child_increments(tree: &FilteredTree, w: &Process, node: usize) -> (Matrix, Vec<Q>) {
    let n = tree.node(node);
    let t = n.time + 1;
    let rows = n.children.iter().map(|&c| w.increment(t, tree.node(c).leaves.start)).collect();
    let probs = n.children.iter().map(|&c| tree.node(c).prob.clone()).collect();
    (rows, probs)
}

pub fn check_mrp(tree: &FilteredTree, w: &Process) -> Result<MrpReport> {
    check_martingale(tree, w, tree.base())?;
    let mut failure = None;
    let mut multiplicity = Vec::new();
    for t in 1..=tree.horizon() {
        for (atom, &v) in tree.level(t - 1).iter().enumerate() {
            let (rows, probs) = child_increments(tree, w, v);
            let m = rows.len();
            let rank = linalg::rank(&rows);
            multiplicity.push(MultiplicityRow { t, atom, node: tree.node(v).id.clone(), children: m, rank });
            if rank + 1 < m && failure.is_none() {
                let mut constraints = linalg::transpose(&rows);
                if w.dim() == 0 {
                    constraints.clear();
                }
                constraints.push(probs);
                let xi = linalg::null_space(&constraints, m).into_iter().next().expect("rank deficit");
                failure = Some(MrpFailure {
                    t,
                    atom,
                    node: tree.node(v).id.clone(),
                    rank,
                    needed: m - 1,
                    xi: primitive_integer(&xi),
                });
            }
        }
    }
    Ok(MrpReport { holds: failure.is_none(), failure, multiplicity })
}

/// Predictable `H` with `H . W = X - X_0`, least-index per node.
pub fn representation_coefficient(tree: &FilteredTree, x: &Process, w: &Process) -> Result<Process> {
    if x.dim() != 1 {
        return representation_coefficients(tree, x, w).map(|hs| hs.into_iter().next().expect("dim >= 1"));
    }
    solve_per_node(tree, w, |t, leaf| x.increment(t, leaf)[0].clone())
}

/// One coefficient process per component of `x`.
pub fn representation_coefficients(tree: &FilteredTree, x: &Process, w: &Process) -> Result<Vec<Process>> {
    (0..x.dim())
        .map(|i| solve_per_node(tree, w, |t, leaf| x.increment(t, leaf)[i].clone()))
        .collect()
}

/// Solves `dW h = target` on the children of every node.
fn solve_per_node(tree: &FilteredTree, w: &Process, target: impl Fn(usize, usize) -> Q) -> Result<Process> {
    let d = w.dim();
    let mut coeff: Vec<Vec<Vector>> = vec![vec![vec![Q::zero(); d]; tree.n_leaves()]];
    for t in 1..=tree.horizon() {
        let mut row = vec![Vec::new(); tree.n_leaves()];
        for (atom, &v) in tree.level(t - 1).iter().enumerate() {
            let (rows, _) = child_increments(tree, w, v);
            let rhs: Vec<Q> = tree.node(v).children.iter().map(|&c| target(t, tree.node(c).leaves.start)).collect();
            let h = linalg::solve(&rows, &rhs).ok_or(Error::NoRepresentation { t, atom })?;
            for leaf in tree.node(v).leaves.clone() {
                row[leaf] = h.clone();
            }
        }
        coeff.push(row);
    }
    Ok(Process::from_fn(tree, d, |t, leaf| coeff[t][leaf].clone()))
}

/// The children of one `F_{t-1}` atom as classes `A_h` with `p_h = P(A_h | atom)`,
/// by descending probability then smallest leaf id, padded with empty classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionWitness {
    pub t: usize,
    pub atom: usize,
    pub classes: Vec<Vec<usize>>,
    pub probs: Vec<Q>,
}

impl PartitionWitness {
    pub fn occupied(&self) -> usize {
        self.classes.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn class_of(&self, leaf: usize) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&leaf))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WitnessRow {
    pub t: usize,
    pub atom: usize,
    pub classes: Vec<Vec<String>>,
    pub probs: Vec<String>,
}

impl PartitionWitness {
    pub fn to_row(&self, tree: &FilteredTree) -> WitnessRow {
        WitnessRow {
            t: self.t,
            atom: self.atom,
            classes: self
                .classes
                .iter()
                .map(|c| c.iter().map(|&l| tree.leaf_id(l).to_string()).collect())
                .collect(),
            probs: self.probs.iter().map(format_q).collect(),
        }
    }
}

/// Number of time-`t` subatoms of base atom `atom` at `t - 1`, with the witness padded to
/// at least `slots` classes.
pub fn conditional_multiplicity(tree: &FilteredTree, t: usize, atom: usize, slots: usize) -> Result<(usize, PartitionWitness)> {
    if t == 0 || t > tree.horizon() {
        return Err(Error::TimeOutOfRange { t, horizon: tree.horizon() });
    }
    let level = tree.level(t - 1);
    if atom >= level.len() {
        return Err(Error::DimensionMismatch { expected: level.len(), found: atom });
    }
    let parent = tree.node(level[atom]);
    let mut children: Vec<usize> = parent.children.clone();
    let first_id = |c: usize| -> &str {
        tree.node(c).leaves.clone().map(|l| tree.leaf_id(l)).min().expect("nonempty atom")
    };
    children.sort_by(|&x, &y| {
        tree.node(y).prob.cmp(&tree.node(x).prob).then_with(|| first_id(x).cmp(first_id(y)))
    });
    let count = children.len();
    let mut classes: Vec<Vec<usize>> = children.iter().map(|&c| tree.node(c).leaves.clone().collect()).collect();
    let mut probs: Vec<Q> = children.iter().map(|&c| tree.node(c).prob.clone()).collect();
    while classes.len() < slots {
        classes.push(Vec::new());
        probs.push(Q::zero());
    }
    Ok((count, PartitionWitness { t, atom, classes, probs }))
}

/// Predictable `H` with `H_t . dW_t = xi 1{R = t} - E[xi 1{R = t} | F_{t-1}]` at every
/// `t >= 1`. For predictable `R` this is `xi - E[xi | F_{R-}]` on `[R]` and `H` vanishes
/// off `[R]`.
pub fn single_jump_coefficient(tree: &FilteredTree, xi: &[Q], stop: &StoppingTime, w: &Process) -> Result<Process> {
    if xi.len() != tree.n_leaves() {
        return Err(Error::DimensionMismatch { expected: tree.n_leaves(), found: xi.len() });
    }
    let mut targets: Vec<Vec<Q>> = vec![Vec::new()];
    for t in 1..=tree.horizon() {
        let z: Vec<Q> = (0..tree.n_leaves())
            .map(|l| if stop.value(l) == t { xi[l].clone() } else { Q::zero() })
            .collect();
        if !tree.base().at(t).measures(&z) {
            return Err(Error::NotMeasurable(format!("xi on {{R = {t}}} is not determined at time {t}")));
        }
        let mean = tree.project(&z, tree.base().before(t));
        targets.push(z.iter().zip(mean).map(|(a, b)| a - b).collect());
    }
    solve_per_node(tree, w, |t, leaf| targets[t][leaf].clone())
}

/// The bounded finite-variation driver `X''` with `d + 1` components and its witnesses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    pub process: Process,
    pub witnesses: Vec<PartitionWitness>,
}

impl Reconstruction {
    pub fn witness(&self, t: usize, atom: usize) -> &PartitionWitness {
        self.witnesses
            .iter()
            .find(|w| w.t == t && w.atom == atom)
            .expect("one witness per slot and atom")
    }
}

/// `dX''_h = 2^-t (1_{A_h} - p_h)` at time `t`, where `A_h` are the ordered subatoms
/// of each `F_{t-1}` atom.
pub fn reconstruct_accessible(tree: &FilteredTree, w: &Process) -> Result<Reconstruction> {
    let report = check_mrp(tree, w)?;
    if let Some(f) = report.failure {
        return Err(Error::NoRepresentation { t: f.t, atom: f.atom });
    }
    reconstruct_with_slots(tree, w.dim() + 1)
}

/// Same construction with an explicit number of classes per atom; needs
/// `slots >= max children`.
pub fn reconstruct_with_slots(tree: &FilteredTree, slots: usize) -> Result<Reconstruction> {
    let mut witnesses = Vec::new();
    for t in 1..=tree.horizon() {
        for atom in 0..tree.level(t - 1).len() {
            let (count, witness) = conditional_multiplicity(tree, t, atom, slots)?;
            if count > slots {
                return Err(Error::NoRepresentation { t, atom });
            }
            witnesses.push(witness);
        }
    }
    let lookup: Vec<Vec<&PartitionWitness>> = (0..=tree.horizon())
        .map(|t| witnesses.iter().filter(|w| w.t == t).collect())
        .collect();
    let process = Process::from_increments(
        tree,
        slots,
        |_| vec![Q::zero(); slots],
        |t, leaf| {
            let wit = lookup[t][tree.base().before(t).atom_of(leaf)];
            let scale = Q::one() / pow2(t);
            (0..slots)
                .map(|h| {
                    let ind = if wit.classes[h].contains(&leaf) { Q::one() } else { Q::zero() };
                    &scale * (ind - &wit.probs[h])
                })
                .collect()
        },
    );
    Ok(Reconstruction { process, witnesses })
}

/// `X°` for the jumps of `m`, together with the constraint menu it was built on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orthogonalized {
    pub process: Process,
    pub constraint: ConstraintSystem,
    pub jumps: JumpMeasure,
}

pub fn orthogonalize(tree: &FilteredTree, m: &Process) -> Result<Orthogonalized> {
    let jumps = JumpMeasure::from_process(m);
    let constraint = detect_fpcc(tree, &jumps);
    let process = constraint_martingales(tree, &jumps, &constraint)?;
    Ok(Orthogonalized { process, constraint, jumps })
}

/// `H'_k = H . alpha_k / e(alpha_k)` on occupied slots.
pub fn translate_integrand(tree: &FilteredTree, h: &Process, cs: &ConstraintSystem) -> Result<Process> {
    if h.dim() != cs.dim() {
        return Err(Error::DimensionMismatch { expected: cs.dim(), found: h.dim() });
    }
    h.check_predictable(tree.base())?;
    Ok(Process::from_fn(tree, cs.n(), |t, leaf| {
        if t == 0 {
            return vec![Q::zero(); cs.n()];
        }
        let atom = tree.base().before(t).atom_of(leaf);
        cs.slots(t, atom)
            .iter()
            .map(|a| match a {
                Some(a) => dot(h.at(t, leaf), a) / weight(a),
                None => Q::zero(),
            })
            .collect()
    }))
}

/// Evaluates `H . (x * (mu - nu))` and `H' . X°` for a predictable `H`.
pub fn orthogonal_integral_sides(tree: &FilteredTree, orth: &Orthogonalized, h: &Process) -> Result<(Process, Process)> {
    let compensated = identity_star_integral(tree, &orth.jumps, tree.base());
    let lhs = dot_integral(tree, h, &compensated, tree.base())?;
    let translated = translate_integrand(tree, h, &orth.constraint)?;
    let rhs = dot_integral(tree, &translated, &orth.process, tree.base())?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JumpConstraint {
    pub system: ConstraintSystem,
    /// Largest number of distinct nonzero jumps of `W` below one atom.
    pub max_per_atom: usize,
}

/// The constraint menu of `W`'s own jumps; requires the representation property.
pub fn jump_constraint(tree: &FilteredTree, w: &Process) -> Result<JumpConstraint> {
    let report = check_mrp(tree, w)?;
    if let Some(f) = report.failure {
        return Err(Error::NoRepresentation { t: f.t, atom: f.atom });
    }
    let system = detect_fpcc(tree, &JumpMeasure::from_process(w));
    let max_per_atom = system.max_occupied(1..=tree.horizon());
    Ok(JumpConstraint { system, max_per_atom })
}
