//! Seeded fuzz campaigns over random trees, bases and enlargements.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::checks::{run_scenario, Verdict};
use crate::enlargement::doleans_family;
use crate::error::Result;
use crate::random::{self, TreeParams};
use crate::scenario::{sha256_hex, Scenario};
use crate::tree::FilteredTree;

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzParams {
    pub seeds: Range<u64>,
    pub tree: TreeParams,
    pub checks: Vec<String>,
    /// Give the root `d + 2` children against a `d`-dimensional basis.
    pub overbranch: bool,
    pub labels: usize,
}

impl Default for FuzzParams {
    fn default() -> Self {
        FuzzParams {
            seeds: 0..100,
            tree: TreeParams { max_branching: 4, horizon: 3, denom_bound: 6 },
            checks: crate::checks::invariant_check_names(),
            overbranch: false,
            labels: 2,
        }
    }
}

/// The scenario fuzzed for `seed`.
pub fn instance(seed: u64, params: &FuzzParams) -> Scenario {
    let tp = params.tree;
    let (spec, d) = if params.overbranch {
        let d = tp.max_branching.saturating_sub(2).max(1);
        (random::random_tree_spec_with_root(seed, tp, Some(d + 2)), d)
    } else {
        let spec = random::random_tree_spec(seed, tp);
        let tree = FilteredTree::build(&spec).expect("generated trees are valid");
        (spec, random::max_children(&tree).saturating_sub(1).max(1))
    };
    let tree = FilteredTree::build(&spec).expect("generated trees are valid");
    let mut rng = random::rng(seed.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ 0x5EED);
    let w = random::random_mrp_basis(&tree, &mut rng, d);
    let g = random::random_enlargement(&tree, &mut rng, params.labels);

    let mut scenario = Scenario::new(spec);
    scenario.processes.insert("W".into(), w.to_spec(&tree).expect("basis is adapted"));
    scenario.basis = Some("W".into());
    // smallest positive exponent of the first component
    if let Some((_, _, s)) = doleans_family(&tree, &w).into_iter().find(|(k, a, _)| *k == 0 && a > &num_traits::Zero::zero()) {
        scenario.processes.insert("S".into(), s.to_spec(&tree).expect("price is adapted"));
        scenario.price = Some("S".into());
    }
    scenario.enlargements.insert("G".into(), g.to_spec(&tree));
    scenario.enlargement = Some("G".into());
    scenario.checks = params.checks.clone();
    scenario.seed = Some(seed);
    scenario.expect_mrp = !params.overbranch;
    scenario
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub seed: u64,
    pub scenario_sha256: String,
    pub verdict: Verdict,
    pub failed: Vec<String>,
    pub skipped: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproducer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzReport {
    pub tool: String,
    pub version: String,
    pub seeds: [u64; 2],
    pub max_branching: usize,
    pub horizon: usize,
    pub overbranch: bool,
    pub checks: Vec<String>,
    pub passed: usize,
    pub failed: usize,
    pub verdict: Verdict,
    pub cases: Vec<CaseSummary>,
}

impl FuzzReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "fuzz seeds {}..{}  T={} branching<={}{}\n",
            self.seeds[0],
            self.seeds[1],
            self.horizon,
            self.max_branching,
            if self.overbranch { "  overbranch" } else { "" }
        );
        for c in self.cases.iter().filter(|c| c.verdict == Verdict::Fail) {
            out += &format!("seed {:<6} FAIL {}\n", c.seed, c.failed.join(","));
        }
        out += &format!("{} passed, {} failed\n", self.passed, self.failed);
        out
    }
}

/// A failing instance reduced to its failing checks.
#[derive(Debug, Clone, PartialEq)]
pub struct Reproducer {
    pub file_name: String,
    pub scenario: Scenario,
}

pub struct Campaign {
    pub report: FuzzReport,
    pub reproducers: Vec<Reproducer>,
}

/// Keeps only the failing checks, provided the reduced scenario still fails.
fn minimize(mut scenario: Scenario, failed: &[String]) -> Result<Scenario> {
    let full = scenario.checks.clone();
    scenario.checks = failed.to_vec();
    let hash = sha256_hex(scenario.to_json().as_bytes());
    let replay = run_scenario(&scenario, &hash, None, None)?;
    if replay.verdict != Verdict::Fail {
        scenario.checks = full;
    }
    Ok(scenario)
}

pub fn fuzz(params: &FuzzParams) -> Result<Campaign> {
    for name in &params.checks {
        crate::checks::lookup(name)?;
    }
    let seeds: Vec<u64> = params.seeds.clone().collect();
    let outcomes: Vec<Result<(CaseSummary, Option<Reproducer>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let scenario = instance(seed, params);
            let hash = sha256_hex(scenario.to_json().as_bytes());
            let report = run_scenario(&scenario, &hash, None, None)?;
            let names = |v: Verdict| -> Vec<String> {
                report.checks.iter().filter(|c| c.verdict == v).map(|c| c.name.clone()).collect()
            };
            let failed = names(Verdict::Fail);
            let mut summary = CaseSummary {
                seed,
                scenario_sha256: hash,
                verdict: report.verdict,
                skipped: names(Verdict::Skipped),
                failed: failed.clone(),
                reproducer: None,
            };
            let reproducer = if failed.is_empty() {
                None
            } else {
                let file_name = format!("repro-seed-{seed}.json");
                summary.reproducer = Some(file_name.clone());
                Some(Reproducer { file_name, scenario: minimize(scenario, &failed)? })
            };
            Ok((summary, reproducer))
        })
        .collect();

    let mut cases = Vec::with_capacity(outcomes.len());
    let mut reproducers = Vec::new();
    for outcome in outcomes {
        let (case, repro) = outcome?;
        cases.push(case);
        reproducers.extend(repro);
    }
    let failed = cases.iter().filter(|c| c.verdict == Verdict::Fail).count();
    let report = FuzzReport {
        tool: "filtration-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seeds: [params.seeds.start, params.seeds.end],
        max_branching: params.tree.max_branching,
        horizon: params.tree.horizon,
        overbranch: params.overbranch,
        checks: params.checks.clone(),
        passed: cases.len() - failed,
        failed,
        verdict: if failed == 0 { Verdict::Pass } else { Verdict::Fail },
        cases,
    };
    Ok(Campaign { report, reproducers })
}
