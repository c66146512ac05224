//! Martingales under an enlarged filtration `G`: the drift operator, local martingale
//! deflators, viability, and the drift multiplier built on the reconstructed driver.

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::calculus::{
    check_martingale, dot_integral, dual_predictable_projection, predictable_bracket_matrix, star_integral,
    JumpMeasure, PredictableFunction, Process,
};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lp::{self, LpOutcome};
use crate::rational::{dot, format_q, int, pow2, scale, Vector, Q};
use crate::representation::{representation_coefficient, Reconstruction};
use crate::tree::{Enlargement, FilteredTree};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DriftResult {
    /// `Gamma(X)`: G-predictable, null at zero.
    pub drift: Process,
    /// `X - Gamma(X)`, a G-martingale.
    pub g_martingale: Process,
}

/// `dGamma_t = E[dX_t | G_{t-1}]` for an F-martingale `X`.
pub fn drift_operator(tree: &FilteredTree, x: &Process, g: &Enlargement) -> Result<DriftResult> {
    check_martingale(tree, x, tree.base())?;
    let drift = dual_predictable_projection(tree, x, g.filtration());
    let g_martingale = x.sub(&drift)?;
    Ok(DriftResult { drift, g_martingale })
}

/// Per-atom LP result of the deflator search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AtomLp {
    pub t: usize,
    pub atom: usize,
    pub leaves: Vec<String>,
    pub feasible: bool,
    /// Optimal lower bound on the one-step density; absent when the LP is infeasible.
    pub margin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeflatorOutcome {
    Found { deflator: Process, atoms: Vec<AtomLp> },
    /// Every G-atom at `t - 1` where no strictly positive one-step density exists.
    Infeasible { witnesses: Vec<AtomLp>, atoms: Vec<AtomLp> },
}

impl DeflatorOutcome {
    pub fn deflator(&self) -> Option<&Process> {
        match self {
            DeflatorOutcome::Found { deflator, .. } => Some(deflator),
            DeflatorOutcome::Infeasible { .. } => None,
        }
    }

    pub fn atoms(&self) -> &[AtomLp] {
        match self {
            DeflatorOutcome::Found { atoms, .. } | DeflatorOutcome::Infeasible { atoms, .. } => atoms,
        }
    }
}

fn check_positive(x: &Process) -> Result<()> {
    for t in 0..=x.horizon() {
        if x.slice(t).iter().flatten().any(|v| !v.is_positive()) {
            return Err(Error::NotStrictlyPositive { t });
        }
    }
    Ok(())
}

/// One-step density on the G-subatoms of one atom: maximize `tau` subject to
/// `y_i - tau - s_i = 0`, `sum q_i y_i = 1`, `sum q_i y_i S_i = S_prev`.
fn one_step_density(q: &[Q], s_next: &[Q], s_prev: &Q) -> Option<(Vector, Q)> {
    let k = q.len();
    // variables: y (k), tau, slacks (k)
    let width = 2 * k + 1;
    let mut a: Matrix = Vec::with_capacity(k + 2);
    for i in 0..k {
        let mut row = vec![Q::zero(); width];
        row[i] = Q::one();
        row[k] = -Q::one();
        row[k + 1 + i] = -Q::one();
        a.push(row);
    }
    let mut mass = vec![Q::zero(); width];
    let mut value = vec![Q::zero(); width];
    for i in 0..k {
        mass[i] = q[i].clone();
        value[i] = &q[i] * &s_next[i];
    }
    a.push(mass);
    a.push(value);
    let mut b = vec![Q::zero(); k];
    b.push(Q::one());
    b.push(s_prev.clone());
    let mut c = vec![Q::zero(); width];
    c[k] = Q::one();
    match lp::maximize(&a, &b, &c) {
        LpOutcome::Optimal { x, value } => Some((x[..k].to_vec(), value)),
        LpOutcome::Infeasible => None,
        LpOutcome::Unbounded => unreachable!("densities are bounded by the mass constraint"),
    }
}

/// Searches a G-deflator for the strictly positive scalar F-martingale `s`, one LP per
/// G-atom at each `t - 1`.
pub fn find_deflator(tree: &FilteredTree, s: &Process, g: &Enlargement) -> Result<DeflatorOutcome> {
    if s.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: s.dim() });
    }
    check_positive(s)?;
    check_martingale(tree, s, tree.base())?;
    let filt = g.filtration();
    let mut density: Vec<Vec<Q>> = vec![vec![Q::one(); tree.n_leaves()]];
    let mut atoms = Vec::new();
    let mut witnesses = Vec::new();
    for t in 1..=tree.horizon() {
        let mut step = vec![Q::one(); tree.n_leaves()];
        for (atom, leaves) in filt.before(t).atoms().iter().enumerate() {
            let mass = tree.atom_prob(leaves);
            let subatoms: Vec<&Vec<usize>> =
                filt.at(t).atoms().iter().filter(|sub| leaves.contains(&sub[0])).collect();
            let q: Vec<Q> = subatoms.iter().map(|sub| tree.atom_prob(sub) / &mass).collect();
            let s_next: Vec<Q> = subatoms.iter().map(|sub| s.scalar(t, sub[0]).clone()).collect();
            let solved = one_step_density(&q, &s_next, s.scalar(t - 1, leaves[0]));
            let feasible = matches!(&solved, Some((_, tau)) if tau.is_positive());
            let row = AtomLp {
                t,
                atom,
                leaves: leaves.iter().map(|&l| tree.leaf_id(l).to_string()).collect(),
                feasible,
                margin: solved.as_ref().map(|(_, tau)| format_q(tau)),
            };
            if feasible {
                let (y, _) = solved.expect("feasible");
                for (sub, yi) in subatoms.iter().zip(y) {
                    for &l in sub.iter() {
                        step[l] = yi.clone();
                    }
                }
            } else {
                witnesses.push(row.clone());
            }
            atoms.push(row);
        }
        let prev = density.last().expect("time zero").clone();
        density.push(prev.iter().zip(&step).map(|(a, b)| a * b).collect());
    }
    if !witnesses.is_empty() {
        return Ok(DeflatorOutcome::Infeasible { witnesses, atoms });
    }
    let deflator = Process::from_fn(tree, 1, |t, leaf| vec![density[t][leaf].clone()]);
    Ok(DeflatorOutcome::Found { deflator, atoms })
}

/// `Y > 0`, `Y` and `Y S` are G-martingales.
pub fn is_deflator(tree: &FilteredTree, y: &Process, s: &Process, g: &Enlargement) -> bool {
    if check_positive(y).is_err() || !y.slice(0).iter().all(|v| v[0].is_one()) {
        return false;
    }
    let ys = Process::from_fn(tree, 1, |t, l| vec![y.scalar(t, l) * s.scalar(t, l)]);
    y.check_adapted(g.filtration()).is_ok()
        && check_martingale(tree, y, g.filtration()).is_ok()
        && check_martingale(tree, &ys, g.filtration()).is_ok()
}

/// Stochastic exponential `E(a X)` of a scalar process, `prod (1 + a dX)`.
pub fn doleans_exponential(tree: &FilteredTree, x: &Process, a: &Q) -> Process {
    let mut values = vec![vec![Q::one(); tree.n_leaves()]];
    for t in 1..=tree.horizon() {
        let row = (0..tree.n_leaves())
            .map(|l| &values[t - 1][l] * (Q::one() + a * &x.increment(t, l)[0]))
            .collect();
        values.push(row);
    }
    Process::from_fn(tree, 1, |t, l| vec![values[t][l].clone()])
}

/// `E(a X_k)` for every nonconstant component of `x` and `a = j / (4 m_k)`,
/// `j in {-3, -2, -1, 1, 2, 3}`, where `m_k = max |dX_k|`; all members are positive.
pub fn doleans_family(tree: &FilteredTree, x: &Process) -> Vec<(usize, Q, Process)> {
    let mut family = Vec::new();
    for k in 0..x.dim() {
        let comp = x.component(k);
        let m = (1..=tree.horizon())
            .flat_map(|t| comp.increments(t))
            .map(|v| v[0].abs())
            .max()
            .unwrap_or_else(Q::zero);
        if m.is_zero() {
            continue;
        }
        for j in [-3, -2, -1, 1, 2, 3] {
            let a = int(j) / (int(4) * &m);
            family.push((k, a.clone(), doleans_exponential(tree, &comp, &a)));
        }
    }
    family
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberVerdict {
    pub index: usize,
    pub outcome: DeflatorOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViabilityReport {
    /// True when every member of the tested family has a deflator. This certifies
    /// the family only; a single failure refutes full viability.
    pub viable: bool,
    pub members: Vec<MemberVerdict>,
}

pub fn check_full_viability(tree: &FilteredTree, g: &Enlargement, family: &[Process]) -> Result<ViabilityReport> {
    let members = family
        .iter()
        .enumerate()
        .map(|(index, s)| Ok(MemberVerdict { index, outcome: find_deflator(tree, s, g)? }))
        .collect::<Result<Vec<_>>>()?;
    let viable = members.iter().all(|m| m.outcome.deflator().is_some());
    Ok(ViabilityReport { viable, members })
}

/// Gram-Schmidt data of one `(t, F_{t-1} atom)` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMultiplier {
    pub t: usize,
    pub atom: usize,
    pub p: Vector,
    /// `d` pairwise orthogonal vectors spanning the complement of `p`.
    pub basis: Vec<Vector>,
    /// `(G atom at t - 1, p_bar, coefficients)` for each G-atom inside the F-atom.
    pub expansions: Vec<(usize, Vector, Vector)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplierSolution {
    /// `d`-dimensional F-martingale.
    pub n: Process,
    /// `d`-dimensional G-predictable multiplier.
    pub phi: Process,
    pub slots: Vec<SlotMultiplier>,
}

/// Pairwise orthogonal (unnormalized) vectors spanning the orthogonal complement of
/// `p`, from Gram-Schmidt over `p, e_0, e_1, ...`.
pub fn orthogonal_complement(p: &[Q]) -> Vec<Vector> {
    let n = p.len();
    let mut done: Vec<Vector> = vec![p.to_vec()];
    for h in 0..n {
        let mut v: Vector = (0..n).map(|k| if k == h { Q::one() } else { Q::zero() }).collect();
        for u in &done {
            let c = dot(&v, u) / dot(u, u);
            v = v.iter().zip(u).map(|(a, b)| a - &c * b).collect();
        }
        if v.iter().any(|x| !x.is_zero()) {
            done.push(v);
        }
    }
    done.split_off(1)
}

/// Solves `2^-t (p_bar / p - 1) = phi_t . n_h` slot by slot, with `0/0 - 1 = 0`.
pub fn solve_drift_multiplier(tree: &FilteredTree, g: &Enlargement, rec: &Reconstruction) -> Result<MultiplierSolution> {
    let slots_n = rec.process.dim();
    let d = slots_n - 1;
    let filt = g.filtration();
    let mut slots = Vec::new();
    let mut eps_at: Vec<Vec<Vec<Vector>>> = vec![Vec::new()];
    let mut phi_at: Vec<Vec<Vector>> = vec![vec![vec![Q::zero(); d]; tree.n_leaves()]];
    for t in 1..=tree.horizon() {
        let mut eps_row = Vec::new();
        let mut phi_row = vec![vec![Q::zero(); d]; tree.n_leaves()];
        let weight = pow2(t);
        for (atom, leaves) in tree.base().before(t).atoms().iter().enumerate() {
            let wit = rec.witness(t, atom);
            let p = wit.probs.clone();
            if p.iter().all(Zero::is_zero) {
                return Err(Error::DegeneratePartition { t, atom });
            }
            let basis = orthogonal_complement(&p);
            debug_assert_eq!(basis.len(), d);
            let mut expansions = Vec::new();
            for (g_atom, g_leaves) in filt.before(t).atoms().iter().enumerate() {
                if !leaves.contains(&g_leaves[0]) {
                    continue;
                }
                let mass = tree.atom_prob(g_leaves);
                let p_bar: Vector = wit
                    .classes
                    .iter()
                    .map(|class| {
                        let inside: Q =
                            class.iter().filter(|l| g_leaves.contains(l)).map(|&l| tree.leaf_prob()[l].clone()).sum();
                        inside / &mass
                    })
                    .collect();
                let r: Vector = p_bar
                    .iter()
                    .zip(&p)
                    .map(|(pb, ph)| if ph.is_zero() { Q::zero() } else { (pb / ph - Q::one()) / &weight })
                    .collect();
                let coeffs: Vector = basis.iter().map(|e| dot(&r, e) / dot(e, e)).collect();
                let phi = scale(&coeffs, &(&weight * &weight));
                for &l in g_leaves {
                    phi_row[l] = phi.clone();
                }
                expansions.push((g_atom, p_bar, coeffs));
            }
            eps_row.push(basis.clone());
            slots.push(SlotMultiplier { t, atom, p, basis, expansions });
        }
        eps_at.push(eps_row);
        phi_at.push(phi_row);
    }
    let n = Process::from_increments(
        tree,
        d,
        |_| vec![Q::zero(); d],
        |t, leaf| {
            let basis = &eps_at[t][tree.base().before(t).atom_of(leaf)];
            let dx = rec.process.increment(t, leaf);
            basis.iter().map(|e| dot(e, &dx)).collect()
        },
    );
    let phi = Process::from_fn(tree, d, |t, leaf| phi_at[t][leaf].clone());
    Ok(MultiplierSolution { n, phi, slots })
}

/// `phi . [N, X]^p` in the base filtration, for scalar `X`.
pub fn multiplier_drift(tree: &FilteredTree, sol: &MultiplierSolution, x: &Process, g: &Enlargement) -> Result<Process> {
    let bracket = predictable_bracket_matrix(tree, &sol.n, x, tree.base());
    dot_integral(tree, &sol.phi, &bracket, g.filtration())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityCheck {
    pub lhs: Process,
    pub rhs: Process,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }

    pub fn witness(&self) -> Option<(usize, usize)> {
        self.lhs.first_difference(&self.rhs)
    }
}

/// Checks `Gamma(X) = phi . [N, X]^p` for a scalar F-martingale `X` representable on
/// the reconstructed driver.
pub fn verify_drift_multiplier(
    tree: &FilteredTree,
    sol: &MultiplierSolution,
    rec: &Reconstruction,
    x: &Process,
    g: &Enlargement,
) -> Result<IdentityCheck> {
    representation_coefficient(tree, x, &rec.process)?;
    let lhs = drift_operator(tree, x, g)?.drift;
    let rhs = multiplier_drift(tree, sol, x, g)?;
    Ok(IdentityCheck { lhs, rhs })
}

/// Checks `Gamma(X) = -(1 / Y_-) . [Y, X]^{G-p}` for a deflator `Y` of `E(a X)`.
pub fn verify_fbd(tree: &FilteredTree, x: &Process, a: &Q, y: &Process, g: &Enlargement) -> Result<IdentityCheck> {
    let s = doleans_exponential(tree, x, a);
    if check_positive(&s).is_err() {
        return Err(Error::NotADeflator("E(aX) is not strictly positive".into()));
    }
    if !is_deflator(tree, y, &s, g) {
        return Err(Error::NotADeflator("Y or Y E(aX) is not a G-martingale".into()));
    }
    let lhs = drift_operator(tree, x, g)?.drift;
    let joint = predictable_bracket_matrix(tree, y, x, g.filtration());
    let rhs = Process::from_increments(
        tree,
        1,
        |_| vec![Q::zero()],
        |t, leaf| vec![-(&joint.increment(t, leaf)[0]) / y.scalar(t - 1, leaf)],
    );
    Ok(IdentityCheck { lhs, rhs })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbsContinuity {
    pub holds: bool,
    /// `(t, G atom at t - 1)` with a null F-compensator increment but a charged G one.
    pub witness: Option<(usize, usize)>,
}

pub fn check_compensator_abs_continuity(tree: &FilteredTree, a: &Process, g: &Enlargement) -> Result<AbsContinuity> {
    if a.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: a.dim() });
    }
    a.check_adapted(tree.base())?;
    for t in 1..=tree.horizon() {
        if a.increments(t).iter().any(|v| v[0].is_negative()) {
            return Err(Error::NotIncreasing { t });
        }
    }
    let f_comp = dual_predictable_projection(tree, a, tree.base());
    let g_comp = dual_predictable_projection(tree, a, g.filtration());
    for t in 1..=tree.horizon() {
        for (atom, leaves) in g.filtration().before(t).atoms().iter().enumerate() {
            let l = leaves[0];
            if f_comp.increment(t, l)[0].is_zero() && !g_comp.increment(t, l)[0].is_zero() {
                return Ok(AbsContinuity { holds: false, witness: Some((t, atom)) });
            }
        }
    }
    Ok(AbsContinuity { holds: true, witness: None })
}

/// Kernel of `D_p - p p^T` against the predicted `{a : a constant on I}`, `I = {p_h > 0}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelCheck {
    pub kernel: Vec<Vector>,
    pub predicted: Vec<Vector>,
    pub matches: bool,
    /// Moore-Penrose inverse of the covariance on the `I` block, zero elsewhere.
    pub pseudo_inverse: Matrix,
}

pub fn covariance_matrix(p: &[Q], scale_by: &Q) -> Matrix {
    let n = p.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let diag = if i == j { p[i].clone() } else { Q::zero() };
                    (diag - &p[i] * &p[j]) * scale_by
                })
                .collect()
        })
        .collect()
}

pub fn kernel_check(p: &[Q], scale_by: &Q) -> KernelCheck {
    let n = p.len();
    let c = covariance_matrix(p, scale_by);
    let kernel = linalg::null_space(&c, n);
    let support: Vec<usize> = (0..n).filter(|&h| p[h].is_positive()).collect();
    let mut predicted: Vec<Vector> = Vec::new();
    if !support.is_empty() {
        predicted.push((0..n).map(|h| if support.contains(&h) { Q::one() } else { Q::zero() }).collect());
    }
    for h in (0..n).filter(|h| !support.contains(h)) {
        predicted.push((0..n).map(|k| if k == h { Q::one() } else { Q::zero() }).collect());
    }
    let in_kernel = predicted.iter().all(|v| linalg::mul_vec(&c, v).iter().all(Zero::is_zero));
    let independent = linalg::rank(&predicted) == predicted.len();
    let matches = in_kernel && independent && predicted.len() == kernel.len();

    let k = support.len();
    let mut pseudo_inverse = linalg::zeros(n, n);
    if k > 0 {
        let inv_k = Q::one() / int(k as i64);
        let block: Matrix = support
            .iter()
            .map(|&i| support.iter().map(|&j| &c[i][j] + &inv_k).collect())
            .collect();
        let inv = linalg::inverse(&block).expect("covariance plus kernel projector is invertible");
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                pseudo_inverse[i][j] = &inv[a][b] - &inv_k;
            }
        }
    }
    KernelCheck { kernel, predicted, matches, pseudo_inverse }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovarianceCertificate {
    pub kernel: KernelCheck,
    /// F-conditional covariance of `dX''` at the slot, from the bracket.
    pub f_covariance: Matrix,
    /// Whether `f_covariance` equals the closed form `4^-t (D_p - p p^T)`.
    pub closed_form: bool,
    /// `(G atom, M)` with `M` the G-conditional covariance of the G-martingale part.
    pub g_covariances: Vec<(usize, Matrix)>,
    /// `M = M J C` for every G-atom.
    pub factorizes: bool,
}

impl CovarianceCertificate {
    pub fn holds(&self) -> bool {
        self.kernel.matches && self.closed_form && self.factorizes
    }
}

/// Brackets shared by every slot's covariance certificate.
struct CovarianceInputs {
    f_bracket: Process,
    g_bracket: Process,
}

impl CovarianceInputs {
    fn new(tree: &FilteredTree, g: &Enlargement, rec: &Reconstruction) -> Result<Self> {
        let f_bracket = predictable_bracket_matrix(tree, &rec.process, &rec.process, tree.base());
        let tilde = drift_operator(tree, &rec.process, g)?.g_martingale;
        let g_bracket = predictable_bracket_matrix(tree, &tilde, &tilde, g.filtration());
        Ok(CovarianceInputs { f_bracket, g_bracket })
    }

    fn certificate(
        &self,
        tree: &FilteredTree,
        g: &Enlargement,
        rec: &Reconstruction,
        t: usize,
        atom: usize,
    ) -> CovarianceCertificate {
        let n = rec.process.dim();
        let wit = rec.witness(t, atom);
        let inv4 = Q::one() / (pow2(t) * pow2(t));
        let kernel = kernel_check(&wit.probs, &inv4);
        let unflatten = |v: &Vector| -> Matrix { (0..n).map(|i| v[i * n..(i + 1) * n].to_vec()).collect() };

        let leaves = &tree.base().before(t).atoms()[atom];
        let f_covariance = unflatten(&self.f_bracket.increment(t, leaves[0]));
        let closed_form = f_covariance == covariance_matrix(&wit.probs, &inv4);

        let mut g_covariances = Vec::new();
        for (g_atom, g_leaves) in g.filtration().before(t).atoms().iter().enumerate() {
            if leaves.contains(&g_leaves[0]) {
                g_covariances.push((g_atom, unflatten(&self.g_bracket.increment(t, g_leaves[0]))));
            }
        }
        let factorizes = g_covariances
            .iter()
            .all(|(_, m)| &linalg::mul(&linalg::mul(m, &kernel.pseudo_inverse), &f_covariance) == m);
        CovarianceCertificate { kernel, f_covariance, closed_form, g_covariances, factorizes }
    }
}

pub fn covariance_kernel(
    tree: &FilteredTree,
    g: &Enlargement,
    rec: &Reconstruction,
    t: usize,
    atom: usize,
) -> Result<CovarianceCertificate> {
    if t == 0 || t > tree.horizon() {
        return Err(Error::TimeOutOfRange { t, horizon: tree.horizon() });
    }
    Ok(CovarianceInputs::new(tree, g, rec)?.certificate(tree, g, rec, t, atom))
}

/// Certificates for every `(t, atom)` slot, `atom` indexing the base partition at `t - 1`.
pub fn covariance_kernels(
    tree: &FilteredTree,
    g: &Enlargement,
    rec: &Reconstruction,
) -> Result<Vec<(usize, usize, CovarianceCertificate)>> {
    let inputs = CovarianceInputs::new(tree, g, rec)?;
    let mut out = Vec::new();
    for t in 1..=tree.horizon() {
        for atom in 0..tree.base().before(t).len() {
            out.push((t, atom, inputs.certificate(tree, g, rec, t, atom)));
        }
    }
    Ok(out)
}

/// Compares `g * (mu - nu_bar)` under the G-compensator with `Z - Gamma(Z)`,
/// `Z = g * (mu - nu)`.
pub fn g_star_consistency(
    tree: &FilteredTree,
    g_fn: &PredictableFunction,
    mu: &JumpMeasure,
    g: &Enlargement,
) -> Result<IdentityCheck> {
    let lhs = star_integral(tree, g_fn, mu, g.filtration())?;
    let z = star_integral(tree, g_fn, mu, tree.base())?;
    let rhs = drift_operator(tree, &z, g)?.g_martingale;
    Ok(IdentityCheck { lhs, rhs })
}
