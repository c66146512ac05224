use filtration_core::checks::{run_scenario, Verdict};
use filtration_core::fixtures;
use filtration_core::fuzz::{fuzz, FuzzParams};
use filtration_core::random::TreeParams;
use filtration_core::scenario::{sha256_hex, Scenario};

fn params(seeds: std::ops::Range<u64>, checks: &[&str]) -> FuzzParams {
    FuzzParams {
        seeds,
        tree: TreeParams { max_branching: 3, horizon: 2, denom_bound: 5 },
        checks: checks.iter().map(|c| c.to_string()).collect(),
        ..FuzzParams::default()
    }
}

#[test]
fn reproducers_replay_their_failures() {
    // viability is an instance property, so random insiders produce failures
    let campaign = fuzz(&params(0..12, &["drift", "viability"])).unwrap();
    assert!(!campaign.reproducers.is_empty());
    for repro in &campaign.reproducers {
        assert_eq!(repro.scenario.checks, vec!["viability"]);
        let text = repro.scenario.to_json();
        let replay = Scenario::from_json(&text).unwrap();
        let report = run_scenario(&replay, &sha256_hex(text.as_bytes()), None, None).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        assert_eq!(report.failed(), vec!["viability"]);
    }
    let seeds_with_repro = campaign.report.cases.iter().filter(|c| c.reproducer.is_some()).count();
    assert_eq!(seeds_with_repro, campaign.reproducers.len());
}

#[test]
fn unknown_check_in_campaign_is_an_error() {
    assert!(fuzz(&params(0..1, &["bogus"])).is_err());
}

#[test]
fn report_embeds_version_hash_and_seed() {
    let scenario = Scenario::from_json(fixtures::TER1_GA_JSON).unwrap();
    let hash = sha256_hex(fixtures::TER1_GA_JSON.as_bytes());
    let report = run_scenario(&scenario, &hash, None, Some(7)).unwrap();
    assert_eq!(report.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(report.scenario_sha256, hash);
    assert_eq!(report.seed, 7);
    assert_eq!(hash.len(), 64);
}
