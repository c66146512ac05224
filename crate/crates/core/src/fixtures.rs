//! Small named trees shipped with the crate.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::calculus::Process;
use crate::rational::{int, ratio};
use crate::tree::{Enlargement, EnlargementSpec, FilteredTree, TreeSpec};

pub const BIN1_JSON: &str = include_str!("../fixtures/bin1.json");
pub const TER1_JSON: &str = include_str!("../fixtures/ter1.json");
pub const TWO_PERIOD_JSON: &str = include_str!("../fixtures/two_period.json");
pub const TER1_GA_JSON: &str = include_str!("../fixtures/ter1_ga.json");
pub const TER1_GB_JSON: &str = include_str!("../fixtures/ter1_gb.json");

#[derive(Deserialize)]
struct WithEnlargements {
    #[serde(default)]
    enlargements: BTreeMap<String, EnlargementSpec>,
}

fn tree_from(json: &str) -> FilteredTree {
    let spec: TreeSpec = serde_json::from_str(json).expect("fixture parses");
    FilteredTree::build(&spec).expect("fixture is a valid tree")
}

fn named_enlargement(tree: &FilteredTree, json: &str, name: &str) -> Enlargement {
    let parsed: WithEnlargements = serde_json::from_str(json).expect("fixture parses");
    Enlargement::new(tree, &parsed.enlargements[name]).expect("fixture enlargement is valid")
}

/// One symmetric coin flip.
pub fn bin1() -> FilteredTree {
    tree_from(BIN1_JSON)
}

/// One uniform three-way branching with leaves `a`, `b`, `c`.
pub fn ter1() -> FilteredTree {
    tree_from(TER1_JSON)
}

/// Two periods: `r -> x, y` with probability 1/2 each, then `x -> x.u (1/3), x.d (2/3)`
/// and `y -> y.u, y.d` evenly.
pub fn two_period() -> FilteredTree {
    tree_from(TWO_PERIOD_JSON)
}

/// `G_0 = {a} | {b, c}` on [`ter1`].
pub fn ga(tree: &FilteredTree) -> Enlargement {
    named_enlargement(tree, TER1_JSON, "GA")
}

/// `G_0 = {a, b} | {c}` on [`ter1`].
pub fn gb(tree: &FilteredTree) -> Enlargement {
    named_enlargement(tree, TER1_JSON, "GB")
}

/// The walk `0 -> +1 (u), -1 (d)` on [`bin1`].
pub fn bin1_walk(tree: &FilteredTree) -> Process {
    Process::from_nodes(tree, 1, |v| match tree.node(v).id.as_str() {
        "u" => vec![int(1)],
        "d" => vec![int(-1)],
        _ => vec![int(0)],
    })
}

/// Two-dimensional driver on [`ter1`] with increments `(1, -1, 0)` and `(1, 1, -2)`.
pub fn ter1_basis(tree: &FilteredTree) -> Process {
    Process::from_nodes(tree, 2, |v| match tree.node(v).id.as_str() {
        "a" => vec![int(1), int(1)],
        "b" => vec![int(-1), int(1)],
        "c" => vec![int(0), int(-2)],
        _ => vec![int(0), int(0)],
    })
}

/// Price with `S_0 = 1` and increments `(1/2, -1/2, 0)` on [`ter1`].
pub fn ter1_price(tree: &FilteredTree) -> Process {
    Process::from_nodes(tree, 1, |v| match tree.node(v).id.as_str() {
        "a" => vec![ratio(3, 2)],
        "b" => vec![ratio(1, 2)],
        _ => vec![int(1)],
    })
}
