//! Acceptance criteria over a seeded corpus. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use filtration_core::calculus::{
    bracket, dot_integral, is_martingale, predictable_bracket, project_onto_jump_measure, star_integral, JumpMeasure,
    Process,
};
use filtration_core::constraint::{
    accessible_star_to_dot, constraint_martingales, detect_fpcc, dot_to_star, solve_accessible_k, solve_inaccessible_k,
    star_to_dot, AccessiblePartition,
};
use filtration_core::enlargement::{
    check_compensator_abs_continuity, covariance_kernels, doleans_family, drift_operator, find_deflator, kernel_check,
    solve_drift_multiplier, verify_drift_multiplier, verify_fbd, DeflatorOutcome,
};
use filtration_core::fuzz::{self, FuzzParams};
use filtration_core::linalg::{self, Matrix};
use filtration_core::random::{self, FuzzRng, TreeParams};
use filtration_core::rational::{int, is_zero_vec, ratio};
use filtration_core::representation::{check_mrp, jump_constraint, reconstruct_accessible};
use filtration_core::scenario::Loaded;
use filtration_core::tree::Enlargement;
use filtration_core::{fixtures, Error, Vector, Q};
use num_traits::{One, Signed, Zero};
use rand::Rng;

const SEEDS: std::ops::Range<u64> = 0..100;
const TREE: TreeParams = TreeParams { max_branching: 4, horizon: 3, denom_bound: 6 };

struct Instance {
    seed: u64,
    loaded: Loaded,
}

impl Instance {
    fn w(&self) -> &Process {
        self.loaded.basis.as_ref().expect("fuzzed instances carry a basis")
    }

    fn g(&self) -> &Enlargement {
        self.loaded.enlargement.as_ref().expect("fuzzed instances carry an enlargement")
    }

    fn rng(&self, criterion: u64) -> FuzzRng {
        random::rng(self.seed * 1000 + criterion)
    }
}

fn params() -> FuzzParams {
    FuzzParams { seeds: SEEDS, tree: TREE, ..FuzzParams::default() }
}

fn corpus() -> Vec<Instance> {
    let params = params();
    SEEDS
        .map(|seed| Instance { seed, loaded: fuzz::instance(seed, &params).load().expect("fuzzed scenarios load") })
        .collect()
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

/// Outcome of one criterion: pass flag and a short account of what was checked.
struct Verdict {
    pass: bool,
    note: String,
}

fn verdict(failures: &[String], note: String) -> Verdict {
    if failures.is_empty() {
        Verdict { pass: true, note }
    } else {
        let shown: Vec<&str> = failures.iter().take(3).map(String::as_str).collect();
        Verdict { pass: false, note: format!("{note}; {} failures, e.g. {}", failures.len(), shown.join("; ")) }
    }
}

fn star_to_dot_identity(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut checked = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let mut rng = inst.rng(1);
        let mu = JumpMeasure::from_process(inst.w());
        let cs = detect_fpcc(tree, &mu);
        let x = constraint_martingales(tree, &mu, &cs).unwrap();
        for draw in 0..5 {
            checked += 1;
            let g = random::random_function(tree, &mut rng, &mu);
            let out = star_to_dot(tree, &g, &mu, &cs).unwrap();
            if !out.certificate.holds() {
                failures.push(format!("seed {} draw {draw}: star-to-dot", inst.seed));
            }
            let back = dot_to_star(tree, &out.integrand, &cs).unwrap();
            if star_integral(tree, &back, &mu, tree.base()).unwrap() != out.certificate.lhs {
                failures.push(format!("seed {} draw {draw}: re-expansion", inst.seed));
            }
            let h = random::random_predictable(tree, &mut rng, cs.n(), tree.base());
            let g2 = dot_to_star(tree, &h, &cs).unwrap();
            if star_integral(tree, &g2, &mu, tree.base()).unwrap() != dot_integral(tree, &h, &x, tree.base()).unwrap()
            {
                failures.push(format!("seed {} draw {draw}: dot-to-star", inst.seed));
            }
        }
    }
    verdict(&failures, format!("{} trees, {checked} random g, both directions", corpus.len()))
}

fn check_k(gamma: &Matrix, k: &Matrix, target: impl Fn(usize, usize) -> Q) -> bool {
    let product = linalg::mul(gamma, k);
    product.iter().enumerate().all(|(r, row)| row.iter().enumerate().all(|(c, v)| *v == target(r, c)))
}

fn accessible_conversions(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut draws = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let mut rng = inst.rng(2);
        let mu = JumpMeasure::from_process(inst.w());
        for draw in 0..5 {
            draws += 1;
            let weights: Vec<Q> =
                (0..16).map(|_| ratio([-4, -3, -2, -1, 1, 2, 3, 4][rng.gen_range(0..8)], 2)).collect();
            let part = AccessiblePartition::from_jumps(tree, &mu, |t, atom| weights[(5 * t + atom) % 16].clone()).unwrap();
            let g = random::random_function(tree, &mut rng, &mu);
            if !accessible_star_to_dot(tree, &g, &mu, &part).unwrap().certificate.holds() {
                failures.push(format!("seed {} draw {draw}: integral identity", inst.seed));
            }
        }
    }

    let mut rng = random::rng(0xACCE55);
    let mut undetected = 0;
    for i in 0..1000 {
        let (gamma, p) = random::random_accessible_system(&mut rng, 5);
        let n = p.len();
        match solve_accessible_k(&gamma, &p) {
            Ok(k) if check_k(&gamma, &k, |r, c| if r == c { Q::one() - &p[c] } else { -p[c].clone() }) => {}
            other => failures.push(format!("accessible system {i}: {other:?}")),
        }
        // preconditions broken three ways in turn
        let d = gamma[0].len();
        let violated = match i % 3 {
            0 if d > 0 => {
                let mut bad = gamma.clone();
                bad[0][0] += Q::one();
                matches!(solve_accessible_k(&bad, &p), Err(Error::NotOrthogonal { .. }))
            }
            1 => {
                let bad_p: Vec<Q> = p.iter().map(|x| x * int(2)).collect();
                matches!(solve_accessible_k(&gamma, &bad_p), Err(Error::NotProbabilityVector))
            }
            _ if n >= 3 => {
                // one column cannot span the (n-1)-dimensional target space
                let narrow: Matrix = gamma.iter().map(|row| row[..1].to_vec()).collect();
                matches!(solve_accessible_k(&narrow, &p), Err(Error::SpanDeficient { .. }))
            }
            _ => true,
        };
        if !violated {
            undetected += 1;
        }

        let full = random::random_full_rank(&mut rng, 5);
        let rows = full.len();
        match solve_inaccessible_k(&full) {
            Ok(k) if check_k(&full, &k, |r, c| if r == c { Q::one() } else { Q::zero() }) => {}
            other => failures.push(format!("inaccessible system {i}: {other:?}")),
        }
        let mut singular = full.clone();
        if rows >= 2 {
            singular[rows - 1] = singular[0].iter().map(|x| x * int(3)).collect();
        } else {
            singular[0] = vec![Q::zero(); singular[0].len()];
        }
        if !matches!(solve_inaccessible_k(&singular), Err(Error::RankDeficient { .. })) {
            undetected += 1;
        }
    }
    if undetected > 0 {
        failures.push(format!("{undetected} precondition violations not detected"));
    }
    verdict(&failures, format!("{draws} corpus identities, 1000 accessible + 1000 inaccessible systems"))
}

fn reconstruction(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut orthogonality = Vec::new();
    let mut mrp_trees = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let w = inst.w();
        if !check_mrp(tree, w).unwrap().holds {
            continue;
        }
        mrp_trees += 1;
        let rec = reconstruct_accessible(tree, w).unwrap();
        let mu = JumpMeasure::from_process(w);
        let cs = detect_fpcc(tree, &mu);
        let x_circ = constraint_martingales(tree, &mu, &cs).unwrap();
        let family = Process::stack(&[&rec.process, &x_circ]);
        if !check_mrp(tree, &family).unwrap().holds {
            failures.push(format!("seed {}: (X'', X°) lacks the representation property", inst.seed));
        }
        let too_big = (1..=tree.horizon()).flat_map(|t| rec.process.increments(t)).flatten().any(|x| x.abs() > Q::one());
        if too_big || !is_martingale(tree, &rec.process, tree.base()) {
            failures.push(format!("seed {}: X'' jump bound or martingale property", inst.seed));
        }
        'pairs: for i in 0..x_circ.dim() {
            for j in i + 1..x_circ.dim() {
                let b = bracket(tree, &x_circ.component(i), &x_circ.component(j)).unwrap();
                if !b.is_zero() {
                    let leaf = (0..tree.n_leaves()).find(|&l| !b.scalar(tree.horizon(), l).is_zero()).unwrap_or(0);
                    orthogonality.push(format!(
                        "seed {}: [X°_{i}, X°_{j}]_T = {} at {}",
                        inst.seed,
                        b.scalar(tree.horizon(), leaf),
                        tree.leaf_id(leaf)
                    ));
                    break 'pairs;
                }
            }
        }
    }
    if !orthogonality.is_empty() {
        let examples: Vec<String> = orthogonality.iter().take(2).cloned().collect();
        failures.push(format!(
            "pathwise orthogonality of X° fails on {} trees ({})",
            orthogonality.len(),
            examples.join(", ")
        ));
    }
    verdict(&failures, format!("{mrp_trees} MRP trees: family rank, |dX''| <= 1, pairwise [X°_i, X°_j] = 0"))
}

fn conditional_multiplicity(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut mrp_instances = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let mut rng = inst.rng(4);
        let mut bases = vec![inst.w().clone()];
        bases.extend((1..=3).map(|d| random::random_mrp_basis(tree, &mut rng, d)));
        for w in &bases {
            let report = check_mrp(tree, w).unwrap();
            if !report.holds {
                continue;
            }
            mrp_instances += 1;
            if let Some(row) = report.multiplicity.iter().find(|r| r.children > w.dim() + 1) {
                failures.push(format!("seed {}: node {} has {} children with d = {}", inst.seed, row.node, row.children, w.dim()));
            }
        }
    }
    let over = FuzzParams { overbranch: true, ..params() };
    let mut overbranched = 0;
    for seed in SEEDS {
        let loaded = fuzz::instance(seed, &over).load().unwrap();
        let w = loaded.basis.as_ref().unwrap();
        let root_children = loaded.tree.node(loaded.tree.level(0)[0]).children.len();
        if root_children != w.dim() + 2 {
            failures.push(format!("overbranch seed {seed}: root has {root_children} children"));
        }
        overbranched += 1;
        if check_mrp(&loaded.tree, w).unwrap().holds {
            failures.push(format!("overbranch seed {seed}: representation property claimed"));
        }
    }
    verdict(&failures, format!("{mrp_instances} MRP (tree, basis) pairs within d+1; {overbranched} d+2 attempts refuted"))
}

fn jump_constraint_membership(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut nodes = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let w = inst.w();
        if !check_mrp(tree, w).unwrap().holds {
            continue;
        }
        let jc = jump_constraint(tree, w).unwrap();
        for t in 1..=tree.horizon() {
            for &v in tree.level(t) {
                nodes += 1;
                let leaf = tree.node(v).leaves.start;
                let jump = w.increment(t, leaf);
                let atom = tree.base().before(t).atom_of(leaf);
                let in_menu = (0..jc.system.n()).any(|k| jc.system.alpha(t, atom, k) == Some(&jump));
                if !is_zero_vec(&jump) && !in_menu {
                    failures.push(format!("seed {}: node {} jump outside the menu", inst.seed, tree.node(v).id));
                }
            }
        }
        if jc.max_per_atom > w.dim() + 1 {
            failures.push(format!("seed {}: {} values at one atom", inst.seed, jc.max_per_atom));
        }
    }
    verdict(&failures, format!("{nodes} nodes"))
}

fn drift_multiplier(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut verified = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let w = inst.w();
        let g = inst.g();
        let mut rng = inst.rng(6);
        let rec = reconstruct_accessible(tree, w).unwrap();
        let sol = match solve_drift_multiplier(tree, g, &rec) {
            Ok(sol) => sol,
            Err(e) => {
                failures.push(format!("seed {}: {e}", inst.seed));
                continue;
            }
        };
        for i in 0..10 {
            // alternate integrals against X'' and against W
            let driver = if i % 2 == 0 { &rec.process } else { w };
            let h = random::random_predictable(tree, &mut rng, driver.dim(), tree.base());
            let x = dot_integral(tree, &h, driver, tree.base()).unwrap();
            verified += 1;
            if let Some((t, leaf)) = verify_drift_multiplier(tree, &sol, &rec, &x, g).unwrap().witness() {
                failures.push(format!("seed {} martingale {i}: t={t} leaf {}", inst.seed, tree.leaf_id(leaf)));
            }
        }
    }

    // TER1 with insider partition {a} | {b, c}: Gamma(W_1) is the conditional mean of
    // (1, -1, 0) on each G-atom, and X''_0 jumps (1_a - 1/3) / 2 at t = 1
    let ter = fixtures::ter1();
    let ga = fixtures::ga(&ter);
    let w = fixtures::ter1_basis(&ter);
    let gamma_w1 = drift_operator(&ter, &w.component(0), &ga).unwrap().drift;
    let expected_w1 = [int(1), ratio(-1, 2), ratio(-1, 2)];
    if (0..3).any(|l| *gamma_w1.scalar(1, l) != expected_w1[l]) {
        failures.push("TER1+GA: Gamma(W_1)".into());
    }
    let rec = reconstruct_accessible(&ter, &w).unwrap();
    let gamma_x0 = drift_operator(&ter, &rec.process.component(0), &ga).unwrap().drift;
    if (1..3).any(|l| *gamma_x0.scalar(1, l) != ratio(-1, 6)) {
        failures.push("TER1+GA: Gamma(X''_0) on {b, c}".into());
    }
    verdict(&failures, format!("{} instances, {verified} martingales; TER1+GA worked values", corpus.len()))
}

fn deflators(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let ter = fixtures::ter1();
    let s = fixtures::ter1_price(&ter);
    match find_deflator(&ter, &s, &fixtures::ga(&ter)).unwrap() {
        DeflatorOutcome::Infeasible { witnesses, .. } => {
            if !witnesses.iter().any(|w| w.leaves == ["b", "c"]) {
                failures.push("TER1+GA: {b, c} not among the witnesses".into());
            }
        }
        DeflatorOutcome::Found { .. } => failures.push("TER1+GA reported viable".into()),
    }
    match find_deflator(&ter, &s, &fixtures::gb(&ter)).unwrap() {
        DeflatorOutcome::Found { deflator, .. } => {
            if (0..=ter.horizon()).any(|t| deflator.slice(t).iter().any(|v| !v[0].is_one())) {
                failures.push("TER1+GB: deflator is not identically 1".into());
            }
        }
        DeflatorOutcome::Infeasible { .. } => failures.push("TER1+GB reported non-viable".into()),
    }

    let mut viable = 0;
    let mut members = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let w = inst.w();
        for (k, a, s) in doleans_family(tree, w) {
            members += 1;
            if let DeflatorOutcome::Found { deflator, .. } = find_deflator(tree, &s, inst.g()).unwrap() {
                viable += 1;
                if !verify_fbd(tree, &w.component(k), &a, &deflator, inst.g()).unwrap().holds() {
                    failures.push(format!("seed {}: deflator identity for E({a} W_{k})", inst.seed));
                }
            }
        }
    }
    if viable == 0 {
        failures.push("no viable fuzzed instance".into());
    }
    verdict(&failures, format!("TER1 GA/GB; {viable} of {members} fuzzed prices viable, identity checked on each"))
}

fn continuity_and_kernel(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    let mut slots = 0;
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let w = inst.w();
        let g = inst.g();
        let mut increasing: Vec<Process> =
            (0..w.dim()).map(|k| bracket(tree, &w.component(k), &w.component(k)).unwrap()).collect();
        increasing.push(Process::from_increments(tree, 1, |_| vec![Q::zero()], |t, l| {
            vec![if is_zero_vec(&w.increment(t, l)) { Q::zero() } else { Q::one() }]
        }));
        for a in &increasing {
            if !check_compensator_abs_continuity(tree, a, g).unwrap().holds {
                failures.push(format!("seed {}: compensator continuity", inst.seed));
            }
        }
        let rec = reconstruct_accessible(tree, w).unwrap();
        for (t, atom, cert) in covariance_kernels(tree, g, &rec).unwrap() {
            slots += 1;
            if !cert.holds() {
                failures.push(format!("seed {}: covariance certificate at t={t} atom {atom}", inst.seed));
            }
        }
    }
    // C = D_p - p p^T for p = (1/2, 1/2, 0) is [[1/4, -1/4, 0], [-1/4, 1/4, 0], [0, 0, 0]],
    // whose null space is spanned by (1, 1, 0) and (0, 0, 1)
    let p = [ratio(1, 2), ratio(1, 2), Q::zero()];
    let check = kernel_check(&p, &Q::one());
    let expected: Vec<Vector> = vec![vec![int(1), int(1), int(0)], vec![int(0), int(0), int(1)]];
    let mut stacked = check.kernel.clone();
    stacked.extend(expected.iter().cloned());
    if check.kernel.len() != 2 || linalg::rank(&stacked) != 2 || !check.matches {
        failures.push("p = (1/2, 1/2, 0): kernel differs".into());
    }
    verdict(&failures, format!("{} instances, {slots} covariance slots; (1/2, 1/2, 0) example", corpus.len()))
}

fn projection(corpus: &[Instance]) -> Verdict {
    let mut failures = Vec::new();
    for inst in corpus {
        let tree = &inst.loaded.tree;
        let mut rng = inst.rng(9);
        let m = inst.w().component(0);
        let y = random::random_martingale(tree, &mut rng, 1);
        let mu = JumpMeasure::from_process(&m);
        let g = project_onto_jump_measure(tree, &y, &mu).unwrap();
        let z = star_integral(tree, &g, &mu, tree.base()).unwrap();
        if predictable_bracket(tree, &y, &m, tree.base()).unwrap() != predictable_bracket(tree, &z, &m, tree.base()).unwrap()
        {
            failures.push(format!("seed {}", inst.seed));
        }
    }
    verdict(&failures, format!("{} (Y, M) pairs", corpus.len()))
}

fn determinism() -> Verdict {
    let params = params();
    let first = fuzz::fuzz(&params).unwrap().report.to_json();
    let second = fuzz::fuzz(&params).unwrap().report.to_json();
    let mut failures = Vec::new();
    if first != second {
        failures.push("campaign reports differ".into());
    }
    if !first.contains("\"failed\": 0,") {
        failures.push("campaign has failing seeds".into());
    }
    verdict(&failures, format!("seeds {}..{} with every invariant check, {} bytes each", SEEDS.start, SEEDS.end, first.len()))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let corpus = corpus();
    let criteria: Vec<Criterion> = vec![
        ("star-to-dot identity", Box::new(|| star_to_dot_identity(&corpus))),
        ("accessible conversions", Box::new(|| accessible_conversions(&corpus))),
        ("reconstruction", Box::new(|| reconstruction(&corpus))),
        ("conditional multiplicity", Box::new(|| conditional_multiplicity(&corpus))),
        ("jump constraint", Box::new(|| jump_constraint_membership(&corpus))),
        ("drift multiplier", Box::new(|| drift_multiplier(&corpus))),
        ("deflators and viability", Box::new(|| deflators(&corpus))),
        ("compensator continuity and kernel", Box::new(|| continuity_and_kernel(&corpus))),
        ("projection", Box::new(|| projection(&corpus))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let v = run();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.note,
            clock.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", criteria.len() - failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
