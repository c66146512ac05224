//! Named checks run against a scenario, and the report they produce.

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calculus::{
    bracket, dot_integral, identity_star_integral, is_martingale, predictable_bracket, project_onto_jump_measure,
    star_integral, JumpMeasure, Process,
};
use crate::constraint::{
    accessible_star_to_dot, constraint_martingales, detect_fpcc, dot_to_star, solve_accessible_k, star_to_dot,
    AccessiblePartition,
};
use crate::enlargement::{
    check_compensator_abs_continuity, covariance_kernels, doleans_family, drift_operator, find_deflator,
    g_star_consistency, solve_drift_multiplier, verify_drift_multiplier, verify_fbd, DeflatorOutcome,
    MultiplierSolution,
};
use crate::error::{Error, Result};
use crate::random::{self, FuzzRng};
use crate::rational::{format_q, is_zero_vec, ratio, Vector, Q};
use crate::representation::{
    check_mrp, jump_constraint, orthogonal_integral_sides, orthogonalize, reconstruct_accessible, MrpReport,
    Reconstruction,
};
use crate::scenario::{Loaded, Scenario};
use crate::tree::{Enlargement, FilteredTree};

pub struct CheckInfo {
    pub name: &'static str,
    pub statement: &'static str,
    pub pass_condition: &'static str,
    /// False for properties of the instance (viability) rather than general identities.
    pub invariant: bool,
}

pub const REGISTRY: &[CheckInfo] = &[
    CheckInfo {
        name: "mrp",
        statement: "Every F-martingale is a dot-integral of the basis W; equivalently, below every node with m children the child increments of W span the (m-1)-dimensional space of mean-zero functions on the children.",
        pass_condition: "The per-node rank test agrees with expect_mrp, and under the representation property no node has more than d+1 children.",
        invariant: true,
    },
    CheckInfo {
        name: "jump-constraint",
        statement: "Under the representation property the jumps of W take values in a finite predictable menu {0, alpha_1, ..., alpha_n}, with at most d+1 nonzero values below each atom.",
        pass_condition: "Every jump of W matches a menu value at its atom and the per-atom count is at most d+1.",
        invariant: true,
    },
    CheckInfo {
        name: "reconstruct",
        statement: "The driver X'' built from the ordered subatoms, dX''_h = 2^-t (1_{A_h} - p_h), together with the constraint martingales X° of W's jumps, again has the representation property; integrals against W translate to integrals against X°.",
        pass_condition: "X'' is a martingale with |dX''| <= 1, (X'', X°) passes the rank test, and H.(x*(mu-nu)) = H'.X° for random predictable H.",
        invariant: true,
    },
    CheckInfo {
        name: "star-to-dot",
        statement: "For jumps confined to a finite predictable menu, g*(mu-nu) = H.X with X_k = u_k*(mu-nu), u_k(x) = e(x)1{x = alpha_k}, H_k = g(alpha_k)/e(alpha_k), and every H.X is a star-integral again.",
        pass_condition: "Both sides agree at every node for random g, and random H re-expand to star-integrals with the same paths.",
        invariant: true,
    },
    CheckInfo {
        name: "accessible",
        statement: "At accessible times with level-set classes A_k and weight a, g*(mu-nu) = (G g(alpha)1{alpha != 0}).Y with Y_k = a(1_{A_k} - P(A_k | F_{t-1})) and G = 1/a; the coefficient matrix K solves gamma K = (delta_hk - p_h).",
        pass_condition: "The integral identity holds for random g and weights, and K satisfies its defining linear identity at every node.",
        invariant: true,
    },
    CheckInfo {
        name: "projection",
        statement: "For martingales Y and M there is a predictable g on the jumps of M with [Y, M]^p = [g*(mu-nu), M]^p.",
        pass_condition: "Both predictable brackets agree at every node.",
        invariant: true,
    },
    CheckInfo {
        name: "drift",
        statement: "Every F-martingale X is a G-semimartingale with drift Gamma(X), dGamma_t = E[dX_t | G_{t-1}], and Gamma(H.X) = H.Gamma(X) for F-predictable H.",
        pass_condition: "X - Gamma(X) is a G-martingale, Gamma is G-predictable and null at zero, and the pull-through identity holds.",
        invariant: true,
    },
    CheckInfo {
        name: "multiplier",
        statement: "There are an F-martingale N and a G-predictable phi with Gamma(X) = phi.[N, X]^p for every F-martingale X, solved slot by slot from 2^-t (p_bar/p - 1) = phi_t . n_h.",
        pass_condition: "The identity holds for every component of X'', of W, and for random integrals against X''.",
        invariant: true,
    },
    CheckInfo {
        name: "viability",
        statement: "A strictly positive F-martingale S has a deflator in G: Y > 0 with Y and YS G-martingales. Checked over a finite family of positive martingales.",
        pass_condition: "Every family member has a deflator; otherwise the violating G-atoms are reported.",
        invariant: false,
    },
    CheckInfo {
        name: "fbd",
        statement: "If Y deflates E(aX) in G then Gamma(X) = -(1/Y_-).[Y, X]^{G-p}.",
        pass_condition: "The identity holds for every family member that has a deflator.",
        invariant: true,
    },
    CheckInfo {
        name: "abs-continuity",
        statement: "For increasing adapted A, the G-compensator increment vanishes wherever the F-compensator increment does.",
        pass_condition: "No G-atom carries compensator mass where the F-compensator is null.",
        invariant: true,
    },
    CheckInfo {
        name: "kernel",
        statement: "The F-conditional covariance of dX'' is 4^-t (D_p - p p^T), whose kernel is {a constant on I = {p_h > 0}}; the G-covariance M of the G-martingale part satisfies M = M J C with J the pseudo-inverse on the I block.",
        pass_condition: "Kernel, closed form and factorization hold at every slot and atom.",
        invariant: true,
    },
    CheckInfo {
        name: "consistency",
        statement: "Compensating under G equals removing the G-drift: g*(mu - nu_bar) = g*(mu - nu) - Gamma(g*(mu - nu)), and x*(mu - nu_bar) is the G-martingale part of X''.",
        pass_condition: "Both sides agree at every node for random g and for g(x) = x.",
        invariant: true,
    },
];

pub fn lookup(name: &str) -> Result<(usize, &'static CheckInfo)> {
    REGISTRY
        .iter()
        .enumerate()
        .find(|(_, c)| c.name == name)
        .ok_or_else(|| Error::UnknownCheck(name.to_string()))
}

pub fn all_check_names() -> Vec<String> {
    REGISTRY.iter().map(|c| c.name.to_string()).collect()
}

/// Checks that must pass on every well-formed instance.
pub fn invariant_check_names() -> Vec<String> {
    REGISTRY.iter().filter(|c| c.invariant).map(|c| c.name.to_string()).collect()
}

pub fn explain(name: &str) -> Result<String> {
    let (_, info) = lookup(name)?;
    Ok(format!("{}\n  statement: {}\n  pass condition: {}\n", info.name, info.statement, info.pass_condition))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.verdict == Verdict::Fail).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{} {}  scenario {}  seed {}\n",
            self.tool,
            self.version,
            &self.scenario_sha256[..12.min(self.scenario_sha256.len())],
            self.seed
        );
        for c in &self.checks {
            let verdict = match c.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Skipped => "skip",
            };
            let line = format!("{:<16} {:<5} {}", c.name, verdict, c.reason.as_deref().unwrap_or(""));
            out += line.trim_end();
            out.push('\n');
        }
        out += &format!(
            "verdict: {}\n",
            if self.verdict == Verdict::Fail { "fail" } else { "pass" }
        );
        out
    }
}

fn q(x: &Q) -> Value {
    Value::String(format_q(x))
}

fn qv(v: &[Q]) -> Value {
    Value::Array(v.iter().map(q).collect())
}

fn leaves_json(tree: &FilteredTree, leaves: &[usize]) -> Value {
    json!(leaves.iter().map(|&l| tree.leaf_id(l)).collect::<Vec<_>>())
}

type Outcome = (Verdict, Option<String>, Value);

fn pass(detail: Value) -> Outcome {
    (Verdict::Pass, None, detail)
}

fn fail(reason: impl Into<String>, detail: Value) -> Outcome {
    (Verdict::Fail, Some(reason.into()), detail)
}

fn skip(reason: &str) -> Outcome {
    (Verdict::Skipped, Some(reason.to_string()), Value::Null)
}

fn judge(ok: bool, reason: &str, detail: Value) -> Outcome {
    if ok {
        pass(detail)
    } else {
        fail(reason, detail)
    }
}

/// Mixes the scenario seed with a check's registry position.
fn check_rng(seed: u64, index: usize) -> FuzzRng {
    random::rng(seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct Context<'a> {
    scenario: &'a Scenario,
    loaded: &'a Loaded,
    mrp: Option<Result<MrpReport>>,
    rec: Option<Result<Reconstruction>>,
}

impl Context<'_> {
    fn tree(&self) -> &FilteredTree {
        &self.loaded.tree
    }

    fn mrp_report(&mut self) -> Option<&Result<MrpReport>> {
        let basis = self.loaded.basis.as_ref()?;
        if self.mrp.is_none() {
            self.mrp = Some(check_mrp(&self.loaded.tree, basis));
        }
        self.mrp.as_ref()
    }

    fn mrp_holds(&mut self) -> bool {
        matches!(self.mrp_report(), Some(Ok(r)) if r.holds)
    }

    /// Basis with the representation property, or the reason to skip.
    fn representable(&mut self) -> std::result::Result<(), &'static str> {
        if self.loaded.basis.is_none() {
            return Err("scenario has no basis");
        }
        if !self.mrp_holds() {
            return Err("basis lacks the representation property");
        }
        Ok(())
    }

    fn reconstruction(&mut self) -> Result<Reconstruction> {
        if self.rec.is_none() {
            let basis = self.loaded.basis.as_ref().expect("checked by caller");
            self.rec = Some(reconstruct_accessible(&self.loaded.tree, basis));
        }
        self.rec.clone().expect("just set")
    }
}

/// JSON view of the rank test, shared with the `check-mrp` subcommand.
pub fn mrp_json(tree: &FilteredTree, w: &Process) -> Result<Value> {
    let report = check_mrp(tree, w)?;
    let failing = report.failure.as_ref().map(|f| {
        json!({"t": f.t, "atom": f.atom, "node": f.node, "rank": f.rank, "needed": f.needed, "xi": qv(&f.xi)})
    });
    let constraint = if report.holds {
        let jc = jump_constraint(tree, w)?;
        serde_json::to_value(jc.system.table()).expect("table serializes")
    } else {
        json!([])
    };
    Ok(json!({
        "mrp": report.holds,
        "failing_atom": failing,
        "multiplicity_table": serde_json::to_value(&report.multiplicity).expect("rows serialize"),
        "constraint_table": constraint,
    }))
}

fn check_mrp_verdict(ctx: &mut Context) -> Result<Outcome> {
    let Some(w) = ctx.loaded.basis.clone() else { return Ok(skip("scenario has no basis")) };
    let tree = ctx.tree().clone();
    let mut detail = mrp_json(&tree, &w)?;
    let holds = detail["mrp"].as_bool().unwrap_or(false);
    let d = w.dim();
    let overfull: Vec<Value> = ctx
        .mrp_report()
        .and_then(|r| r.as_ref().ok())
        .map(|r| {
            r.multiplicity
                .iter()
                .filter(|row| row.children > d + 1)
                .map(|row| json!({"t": row.t, "node": row.node, "children": row.children}))
                .collect()
        })
        .unwrap_or_default();
    detail["expected"] = json!(ctx.scenario.expect_mrp);
    if holds != ctx.scenario.expect_mrp {
        return Ok(fail(format!("representation property is {holds}, expected {}", ctx.scenario.expect_mrp), detail));
    }
    if holds && !overfull.is_empty() {
        detail["overfull_atoms"] = Value::Array(overfull);
        return Ok(fail("atom with more than d+1 children under the representation property", detail));
    }
    Ok(pass(detail))
}

fn check_jump_constraint(ctx: &mut Context) -> Result<Outcome> {
    if let Err(reason) = ctx.representable() {
        return Ok(skip(reason));
    }
    let tree = ctx.tree();
    let w = ctx.loaded.basis.as_ref().expect("representable");
    let jc = jump_constraint(tree, w)?;
    let mu = JumpMeasure::from_process(w);
    let menu_ok = jc.system.validate(tree, &mu).is_ok();
    let bound = w.dim() + 1;
    let detail = json!({"n": jc.system.n(), "max_per_atom": jc.max_per_atom, "bound": bound});
    if !menu_ok {
        return Ok(fail("a jump of W is outside the detected menu", detail));
    }
    Ok(judge(jc.max_per_atom <= bound, "more than d+1 jump values below one atom", detail))
}

fn check_reconstruct(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    if let Err(reason) = ctx.representable() {
        return Ok(skip(reason));
    }
    let rec = ctx.reconstruction()?;
    let tree = ctx.tree();
    let w = ctx.loaded.basis.as_ref().expect("representable");
    let orth = orthogonalize(tree, w)?;
    let x2 = &rec.process;
    let martingale = is_martingale(tree, x2, tree.base());
    let max_jump = (1..=tree.horizon())
        .flat_map(|t| x2.increments(t))
        .flatten()
        .map(|x| x.abs())
        .max()
        .unwrap_or_else(Q::zero);
    let family = Process::stack(&[x2, &orth.process]);
    let family_mrp = check_mrp(tree, &family)?.holds;
    let mut identity = true;
    for _ in 0..3 {
        let h = random::random_predictable(tree, rng, w.dim(), tree.base());
        let (lhs, rhs) = orthogonal_integral_sides(tree, &orth, &h)?;
        identity &= lhs == rhs;
    }
    let n = orth.process.dim();
    let mut orthogonal = true;
    for i in 0..n {
        for j in i + 1..n {
            orthogonal &= bracket(tree, &orth.process.component(i), &orth.process.component(j))?.is_zero();
        }
    }
    let detail = json!({
        "slots": x2.dim(),
        "x_circ_components": n,
        "martingale": martingale,
        "max_jump": q(&max_jump),
        "family_mrp": family_mrp,
        "integrand_identity": identity,
        "x_circ_pathwise_orthogonal": orthogonal,
    });
    let ok = martingale && max_jump <= Q::one() && family_mrp && identity;
    Ok(judge(ok, "reconstructed family violates a required property", detail))
}

fn check_star_to_dot(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    let Some(w) = ctx.loaded.basis.as_ref() else { return Ok(skip("scenario has no basis")) };
    let tree = ctx.tree();
    let mu = JumpMeasure::from_process(w);
    let cs = detect_fpcc(tree, &mu);
    let x = constraint_martingales(tree, &mu, &cs)?;
    let mut failures = Vec::new();
    for draw in 0..5 {
        let g = random::random_function(tree, rng, &mu);
        let out = star_to_dot(tree, &g, &mu, &cs)?;
        if let Some((t, leaf)) = out.certificate.witness() {
            failures.push(json!({"draw": draw, "direction": "star-to-dot", "t": t, "leaf": tree.leaf_id(leaf)}));
        }
        let back = dot_to_star(tree, &out.integrand, &cs)?;
        if star_integral(tree, &back, &mu, tree.base())? != out.certificate.lhs {
            failures.push(json!({"draw": draw, "direction": "re-expansion"}));
        }
        let h = random::random_predictable(tree, rng, cs.n(), tree.base());
        let g2 = dot_to_star(tree, &h, &cs)?;
        if star_integral(tree, &g2, &mu, tree.base())? != dot_integral(tree, &h, &x, tree.base())? {
            failures.push(json!({"draw": draw, "direction": "dot-to-star"}));
        }
    }
    let detail = json!({"n": cs.n(), "draws": 5, "failures": failures});
    Ok(judge(failures.is_empty(), "star/dot identity broken", detail))
}

fn check_accessible(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    let Some(w) = ctx.loaded.basis.clone() else { return Ok(skip("scenario has no basis")) };
    let holds = ctx.mrp_holds();
    let tree = ctx.tree();
    let mu = JumpMeasure::from_process(&w);
    let mut failures = Vec::new();
    for draw in 0..5 {
        let weights: Vec<Q> = (0..64)
            .map(|_| {
                let k = random::choose(rng, &[-4i64, -3, -2, -1, 1, 2, 3, 4]).copied().expect("nonempty");
                ratio(k, 2)
            })
            .collect();
        let part = AccessiblePartition::from_jumps(tree, &mu, |t, atom| weights[(7 * t + atom) % weights.len()].clone())?;
        let g = random::random_function(tree, rng, &mu);
        let out = accessible_star_to_dot(tree, &g, &mu, &part)?;
        if let Some((t, leaf)) = out.certificate.witness() {
            failures.push(json!({"draw": draw, "t": t, "leaf": tree.leaf_id(leaf)}));
        }
    }
    // coefficient matrices at every node: columns are the child values of dW_i
    let mut solved = 0;
    let mut deficient = 0;
    for t in 1..=tree.horizon() {
        for &v in tree.level(t - 1) {
            let children = &tree.node(v).children;
            let gamma: Vec<Vector> = children.iter().map(|&c| w.increment(t, tree.node(c).leaves.start)).collect();
            let p: Vec<Q> = children.iter().map(|&c| tree.node(c).prob.clone()).collect();
            match solve_accessible_k(&gamma, &p) {
                Ok(k) => {
                    solved += 1;
                    let product = crate::linalg::mul(&gamma, &k);
                    for (h, ph) in p.iter().enumerate() {
                        for (row_index, row) in product.iter().enumerate() {
                            let delta = if h == row_index { Q::one() } else { Q::zero() };
                            if row[h] != delta - ph {
                                failures.push(json!({"node": tree.node(v).id, "target": h}));
                            }
                        }
                    }
                }
                Err(Error::SpanDeficient { .. }) => deficient += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let consistent = if holds { deficient == 0 } else { deficient > 0 };
    if !consistent {
        failures.push(json!({"span_check": "disagrees with the rank test"}));
    }
    let detail = json!({"draws": 5, "nodes_solved": solved, "nodes_span_deficient": deficient, "failures": failures});
    Ok(judge(failures.is_empty(), "accessible conversion broken", detail))
}

fn check_projection(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    let Some(w) = ctx.loaded.basis.as_ref() else { return Ok(skip("scenario has no basis")) };
    let tree = ctx.tree();
    let mut failures = Vec::new();
    let mut pairs = 0;
    for k in 0..w.dim() {
        let m = w.component(k);
        let mu = JumpMeasure::from_process(&m);
        let mut ys: Vec<Process> = (0..w.dim()).map(|j| w.component(j)).collect();
        for _ in 0..3 {
            ys.push(random::random_martingale(tree, rng, 1));
        }
        for (i, y) in ys.iter().enumerate() {
            pairs += 1;
            let g = project_onto_jump_measure(tree, y, &mu)?;
            let z = star_integral(tree, &g, &mu, tree.base())?;
            if predictable_bracket(tree, y, &m, tree.base())? != predictable_bracket(tree, &z, &m, tree.base())? {
                failures.push(json!({"m": k, "y": i}));
            }
        }
    }
    let detail = json!({"pairs": pairs, "failures": failures});
    Ok(judge(failures.is_empty(), "projected bracket differs", detail))
}

fn gamma_table(tree: &FilteredTree, g: &Enlargement, drift: &Process) -> Value {
    let mut rows = Vec::new();
    for t in 1..=tree.horizon() {
        for (atom, leaves) in g.filtration().before(t).atoms().iter().enumerate() {
            rows.push(json!({
                "t": t,
                "atom": atom,
                "leaves": leaves_json(tree, leaves),
                "increment": qv(&drift.increment(t, leaves[0])),
            }));
        }
    }
    Value::Array(rows)
}

fn check_drift(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    let Some(w) = ctx.loaded.basis.as_ref() else { return Ok(skip("scenario has no basis")) };
    let Some(g) = ctx.loaded.enlargement.as_ref() else { return Ok(skip("scenario has no enlargement")) };
    let tree = ctx.tree();
    let res = drift_operator(tree, w, g)?;
    let g_martingale = is_martingale(tree, &res.g_martingale, g.filtration());
    let predictable = res.drift.check_predictable(g.filtration()).is_ok();
    let null_at_zero = res.drift.slice(0).iter().all(|v| is_zero_vec(v));
    let mut pull_through = true;
    for _ in 0..3 {
        let h = random::random_predictable(tree, rng, 1, tree.base());
        for k in 0..w.dim() {
            let x = w.component(k);
            let integral = dot_integral(tree, &h, &x, tree.base())?;
            let lhs = drift_operator(tree, &integral, g)?.drift;
            let rhs = dot_integral(tree, &h, &drift_operator(tree, &x, g)?.drift, g.filtration())?;
            pull_through &= lhs == rhs;
        }
    }
    let detail = json!({
        "gamma": gamma_table(tree, g, &res.drift),
        "g_martingale": g_martingale,
        "predictable": predictable,
        "null_at_zero": null_at_zero,
        "pull_through": pull_through,
    });
    Ok(judge(g_martingale && predictable && null_at_zero && pull_through, "drift operator contract broken", detail))
}

fn multiplier_json(tree: &FilteredTree, g: &Enlargement, sol: &MultiplierSolution) -> Value {
    let mut n_rows = Vec::new();
    for t in 1..=tree.horizon() {
        for &v in tree.level(t) {
            let node = tree.node(v);
            n_rows.push(json!({"t": t, "node": node.id, "increment": qv(&sol.n.increment(t, node.leaves.start))}));
        }
    }
    let mut phi_rows = Vec::new();
    for t in 1..=tree.horizon() {
        for leaves in g.filtration().before(t).atoms() {
            phi_rows.push(json!({"t": t, "leaves": leaves_json(tree, leaves), "phi": qv(sol.phi.at(t, leaves[0]))}));
        }
    }
    json!({"n_increments": n_rows, "phi": phi_rows})
}

fn check_multiplier(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    if let Err(reason) = ctx.representable() {
        return Ok(skip(reason));
    }
    let Some(g) = ctx.loaded.enlargement.clone() else { return Ok(skip("scenario has no enlargement")) };
    let rec = ctx.reconstruction()?;
    let tree = ctx.tree();
    let w = ctx.loaded.basis.as_ref().expect("representable");
    let mut sol = solve_drift_multiplier(tree, &g, &rec)?;
    if ctx.scenario.inject_fault {
        let d = sol.phi.dim();
        let bump = Process::from_fn(tree, d, |t, _| {
            (0..d).map(|k| if t == 1 && k == 0 { Q::one() } else { Q::zero() }).collect()
        });
        sol.phi = sol.phi.add(&bump)?;
    }
    let mut targets: Vec<(String, Process)> =
        (0..rec.process.dim()).map(|h| (format!("X''_{h}"), rec.process.component(h))).collect();
    targets.extend((0..w.dim()).map(|k| (format!("W_{k}"), w.component(k))));
    for i in 0..3 {
        let h = random::random_predictable(tree, rng, rec.process.dim(), tree.base());
        targets.push((format!("H{i}.X''"), dot_integral(tree, &h, &rec.process, tree.base())?));
    }
    let mut failures = Vec::new();
    for (name, x) in &targets {
        let check = verify_drift_multiplier(tree, &sol, &rec, x, &g)?;
        if let Some((t, leaf)) = check.witness() {
            failures.push(json!({
                "process": name,
                "t": t,
                "leaf": tree.leaf_id(leaf),
                "drift": q(check.lhs.scalar(t, leaf)),
                "multiplier": q(check.rhs.scalar(t, leaf)),
            }));
        }
    }
    let mut detail = multiplier_json(tree, &g, &sol);
    detail["verified"] = json!(targets.len());
    detail["failures"] = Value::Array(failures.clone());
    Ok(judge(failures.is_empty(), "drift differs from the multiplier form", detail))
}

/// Family member with its driver and exponent: `S = E(a X)`.
struct Member {
    label: String,
    driver: Process,
    a: Q,
    s: Process,
}

fn viability_family(ctx: &Context) -> Option<Vec<Member>> {
    let tree = ctx.tree();
    if let Some(s) = ctx.loaded.price.as_ref() {
        // S = E(X) with dX = dS / S_-
        let log = Process::from_increments(tree, 1, |_| vec![Q::zero()], |t, l| {
            vec![&s.increment(t, l)[0] / s.scalar(t - 1, l)]
        });
        let mut members = vec![Member { label: "S".into(), driver: log, a: Q::one(), s: s.clone() }];
        let centered = s.centered();
        for (_, a, p) in doleans_family(tree, &centered) {
            members.push(Member { label: format!("E(a(S-S0)) a={}", format_q(&a)), driver: centered.clone(), a, s: p });
        }
        return Some(members);
    }
    let w = ctx.loaded.basis.as_ref()?;
    Some(
        doleans_family(tree, w)
            .into_iter()
            .map(|(k, a, p)| Member {
                label: format!("E(a W_{k}) a={}", format_q(&a)),
                driver: w.component(k),
                a,
                s: p,
            })
            .collect(),
    )
}

fn check_viability(ctx: &mut Context) -> Result<Outcome> {
    let Some(g) = ctx.loaded.enlargement.as_ref() else { return Ok(skip("scenario has no enlargement")) };
    let Some(family) = viability_family(ctx) else { return Ok(skip("scenario has no price or basis")) };
    let tree = ctx.tree();
    let mut members = Vec::new();
    let mut viable = true;
    for m in &family {
        let outcome = find_deflator(tree, &m.s, g)?;
        let mut row = json!({"member": m.label, "atoms": serde_json::to_value(outcome.atoms()).expect("rows")});
        match &outcome {
            DeflatorOutcome::Found { deflator, .. } => {
                row["viable"] = json!(true);
                let values: Vec<Value> = (0..=tree.horizon())
                    .flat_map(|t| {
                        g.filtration().at(t).atoms().iter().map(move |leaves| (t, leaves)).collect::<Vec<_>>()
                    })
                    .map(|(t, leaves)| json!({"t": t, "leaves": leaves_json(tree, leaves), "y": q(deflator.scalar(t, leaves[0]))}))
                    .collect();
                row["deflator"] = Value::Array(values);
            }
            DeflatorOutcome::Infeasible { witnesses, .. } => {
                viable = false;
                row["viable"] = json!(false);
                row["witnesses"] = serde_json::to_value(witnesses).expect("rows");
            }
        }
        members.push(row);
    }
    let detail = json!({"family_size": family.len(), "members": members});
    Ok(judge(viable, "a family member has no deflator", detail))
}

fn check_fbd(ctx: &mut Context) -> Result<Outcome> {
    let Some(g) = ctx.loaded.enlargement.as_ref() else { return Ok(skip("scenario has no enlargement")) };
    let Some(family) = viability_family(ctx) else { return Ok(skip("scenario has no price or basis")) };
    let tree = ctx.tree();
    let mut verified = 0;
    let mut without = 0;
    let mut failures = Vec::new();
    for m in &family {
        match find_deflator(tree, &m.s, g)? {
            DeflatorOutcome::Found { deflator, .. } => {
                verified += 1;
                let check = verify_fbd(tree, &m.driver, &m.a, &deflator, g)?;
                if let Some((t, leaf)) = check.witness() {
                    failures.push(json!({"member": m.label, "t": t, "leaf": tree.leaf_id(leaf)}));
                }
            }
            DeflatorOutcome::Infeasible { .. } => without += 1,
        }
    }
    let detail = json!({"verified": verified, "without_deflator": without, "failures": failures});
    Ok(judge(failures.is_empty(), "deflator identity broken", detail))
}

fn check_abs_continuity(ctx: &mut Context) -> Result<Outcome> {
    let Some(g) = ctx.loaded.enlargement.as_ref() else { return Ok(skip("scenario has no enlargement")) };
    let Some(w) = ctx.loaded.basis.as_ref() else { return Ok(skip("scenario has no basis")) };
    let tree = ctx.tree();
    let mut candidates: Vec<(String, Process)> = Vec::new();
    for k in 0..w.dim() {
        let x = w.component(k);
        candidates.push((format!("[W_{k}, W_{k}]"), bracket(tree, &x, &x)?));
    }
    let counting = Process::from_increments(tree, 1, |_| vec![Q::zero()], |t, l| {
        vec![if is_zero_vec(&w.increment(t, l)) { Q::zero() } else { Q::one() }]
    });
    candidates.push(("jump count of W".into(), counting));
    let mut failures = Vec::new();
    for (name, a) in &candidates {
        let res = check_compensator_abs_continuity(tree, a, g)?;
        if let Some((t, atom)) = res.witness {
            failures.push(json!({"process": name, "t": t, "atom": atom}));
        }
    }
    let detail = json!({"processes": candidates.len(), "failures": failures});
    Ok(judge(failures.is_empty(), "G-compensator charges an F-null atom", detail))
}

fn check_kernel(ctx: &mut Context) -> Result<Outcome> {
    if let Err(reason) = ctx.representable() {
        return Ok(skip(reason));
    }
    let Some(g) = ctx.loaded.enlargement.clone() else { return Ok(skip("scenario has no enlargement")) };
    let rec = ctx.reconstruction()?;
    let tree = ctx.tree();
    let mut failures = Vec::new();
    let certificates = covariance_kernels(tree, &g, &rec)?;
    let slots = certificates.len();
    for (t, atom, cert) in certificates {
        if !cert.holds() {
            failures.push(json!({
                "t": t,
                "atom": atom,
                "kernel": cert.kernel.matches,
                "closed_form": cert.closed_form,
                "factorizes": cert.factorizes,
            }));
        }
    }
    let detail = json!({"slots": slots, "failures": failures});
    Ok(judge(failures.is_empty(), "covariance kernel certificate failed", detail))
}

fn check_consistency(ctx: &mut Context, rng: &mut FuzzRng) -> Result<Outcome> {
    if let Err(reason) = ctx.representable() {
        return Ok(skip(reason));
    }
    let Some(g) = ctx.loaded.enlargement.clone() else { return Ok(skip("scenario has no enlargement")) };
    let rec = ctx.reconstruction()?;
    let tree = ctx.tree();
    let mu = JumpMeasure::from_process(&rec.process);
    let mut failures = Vec::new();
    for draw in 0..3 {
        let g_fn = random::random_function(tree, rng, &mu);
        if let Some((t, leaf)) = g_star_consistency(tree, &g_fn, &mu, &g)?.witness() {
            failures.push(json!({"draw": draw, "t": t, "leaf": tree.leaf_id(leaf)}));
        }
    }
    let compensated = identity_star_integral(tree, &mu, g.filtration());
    let identity = compensated == drift_operator(tree, &rec.process, &g)?.g_martingale;
    let detail = json!({"draws": 3, "identity_integrand": identity, "failures": failures});
    Ok(judge(failures.is_empty() && identity, "G-compensation differs from drift removal", detail))
}

fn run_one(ctx: &mut Context, index: usize, seed: u64) -> Outcome {
    let mut rng = check_rng(seed, index);
    let result = match REGISTRY[index].name {
        "mrp" => check_mrp_verdict(ctx),
        "jump-constraint" => check_jump_constraint(ctx),
        "reconstruct" => check_reconstruct(ctx, &mut rng),
        "star-to-dot" => check_star_to_dot(ctx, &mut rng),
        "accessible" => check_accessible(ctx, &mut rng),
        "projection" => check_projection(ctx, &mut rng),
        "drift" => check_drift(ctx, &mut rng),
        "multiplier" => check_multiplier(ctx, &mut rng),
        "viability" => check_viability(ctx),
        "fbd" => check_fbd(ctx),
        "abs-continuity" => check_abs_continuity(ctx),
        "kernel" => check_kernel(ctx),
        "consistency" => check_consistency(ctx, &mut rng),
        other => unreachable!("registry entry {other} has no runner"),
    };
    result.unwrap_or_else(|e| fail(e.to_string(), Value::Null))
}

/// Runs `checks` (the scenario's own list when `None`) and assembles the report.
/// Input problems are returned as errors; failing checks are report content.
pub fn run_scenario(
    scenario: &Scenario,
    scenario_sha256: &str,
    checks: Option<&[String]>,
    seed: Option<u64>,
) -> Result<Report> {
    let names = checks.unwrap_or(&scenario.checks);
    let indices = names.iter().map(|n| lookup(n).map(|(i, _)| i)).collect::<Result<Vec<_>>>()?;
    let loaded = scenario.load()?;
    let seed = seed.or(scenario.seed).unwrap_or(0);
    let mut ctx = Context { scenario, loaded: &loaded, mrp: None, rec: None };
    let results: Vec<CheckResult> = indices
        .iter()
        .map(|&i| {
            let (verdict, reason, detail) = run_one(&mut ctx, i, seed);
            CheckResult { name: REGISTRY[i].name.to_string(), verdict, reason, detail }
        })
        .collect();
    let verdict = if results.iter().any(|r| r.verdict == Verdict::Fail) { Verdict::Fail } else { Verdict::Pass };
    Ok(Report {
        tool: "filtration-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario_sha256: scenario_sha256.to_string(),
        seed,
        verdict,
        checks: results,
    })
}

/// The price deflator audit used by the `viability` subcommand.
pub fn viability_audit(scenario: &Scenario, scenario_sha256: &str, seed: Option<u64>) -> Result<Report> {
    let names: Vec<String> = ["viability", "fbd", "multiplier"].iter().map(|s| s.to_string()).collect();
    run_scenario(scenario, scenario_sha256, Some(&names), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scenario::sha256_hex;

    fn run(json: &str, checks: &[&str]) -> Report {
        let s = Scenario::from_json(json).unwrap();
        let names: Vec<String> = checks.iter().map(|c| c.to_string()).collect();
        run_scenario(&s, &sha256_hex(json.as_bytes()), Some(&names), None).unwrap()
    }

    #[test]
    fn ter1_ga_drift_and_multiplier_pass() {
        let report = run(fixtures::TER1_GA_JSON, &["drift", "multiplier"]);
        assert_eq!(report.verdict, Verdict::Pass, "{}", report.to_json());
        let gamma = &report.checks[0].detail["gamma"];
        // G_0 atoms {a} then {b, c}; first component of W
        assert_eq!(gamma[0]["increment"][0], "1/1");
        assert_eq!(gamma[1]["increment"][0], "-1/2");
    }

    #[test]
    fn ter1_ga_viability_fails_at_bc() {
        let report = run(fixtures::TER1_GA_JSON, &["viability"]);
        assert_eq!(report.verdict, Verdict::Fail);
        let witnesses = &report.checks[0].detail["members"][0]["witnesses"];
        let sets: Vec<&Value> = witnesses.as_array().unwrap().iter().map(|w| &w["leaves"]).collect();
        assert!(sets.contains(&&json!(["b", "c"])));
    }

    #[test]
    fn ter1_gb_is_viable() {
        let report = run(fixtures::TER1_GB_JSON, &["viability", "fbd"]);
        assert_eq!(report.verdict, Verdict::Pass, "{}", report.to_json());
    }

    #[test]
    fn every_check_passes_on_fixtures() {
        let names: Vec<&str> = REGISTRY.iter().map(|c| c.name).filter(|n| *n != "viability").collect();
        for json in [fixtures::TER1_GA_JSON, fixtures::TER1_GB_JSON] {
            let report = run(json, &names);
            assert_eq!(report.verdict, Verdict::Pass, "{}", report.to_json());
        }
    }

    #[test]
    fn empty_list_and_unknown_check() {
        let report = run(fixtures::TER1_GA_JSON, &[]);
        assert!(report.checks.is_empty());
        assert_eq!(report.verdict, Verdict::Pass);
        let s = Scenario::from_json(fixtures::TER1_GA_JSON).unwrap();
        let bogus = vec!["bogus".to_string()];
        assert_eq!(run_scenario(&s, "", Some(&bogus), None), Err(Error::UnknownCheck("bogus".into())));
    }

    #[test]
    fn injected_fault_fails_multiplier() {
        let mut s = Scenario::from_json(fixtures::TER1_GA_JSON).unwrap();
        s.inject_fault = true;
        let names = vec!["multiplier".to_string()];
        let report = run_scenario(&s, "", Some(&names), None).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
    }

    #[test]
    fn explain_known_and_unknown() {
        assert!(explain("multiplier").unwrap().contains("p_bar/p - 1"));
        assert!(explain("mrp").unwrap().contains("dot-integral"));
        assert_eq!(explain("bogus"), Err(Error::UnknownCheck("bogus".into())));
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run(fixtures::TER1_GA_JSON, &["star-to-dot", "multiplier", "consistency"]).to_json();
        let b = run(fixtures::TER1_GA_JSON, &["star-to-dot", "multiplier", "consistency"]).to_json();
        assert_eq!(a, b);
    }
}
