//! JSON scenario files: a tree, named enlargements and processes, and a check list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calculus::{Process, ProcessSpec};
use crate::error::{Error, Result};
use crate::tree::{Enlargement, EnlargementSpec, FilteredTree, NodeSpec, TreeSpec};

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: usize,
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub enlargements: BTreeMap<String, EnlargementSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub processes: BTreeMap<String, ProcessSpec>,
    /// Process used as the representation driver `W`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,
    /// Strictly positive scalar process used by the deflator checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<String>,
    /// Name of the enlargement the checks run against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enlargement: Option<String>,
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Whether `basis` is expected to have the representation property.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub expect_mrp: bool,
    /// Perturbs the multiplier before verification; exercises the failure path.
    #[serde(default, skip_serializing_if = "is_false")]
    pub inject_fault: bool,
}

/// A scenario with every reference resolved against its tree.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub tree: FilteredTree,
    pub enlargement: Option<Enlargement>,
    pub basis: Option<Process>,
    pub price: Option<Process>,
    pub processes: BTreeMap<String, Process>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    pub fn new(tree: TreeSpec) -> Self {
        Scenario {
            horizon: tree.horizon,
            nodes: tree.nodes,
            enlargements: BTreeMap::new(),
            processes: BTreeMap::new(),
            basis: None,
            price: None,
            enlargement: None,
            checks: Vec::new(),
            seed: None,
            expect_mrp: true,
            inject_fault: false,
        }
    }

    pub fn tree_spec(&self) -> TreeSpec {
        TreeSpec { horizon: self.horizon, nodes: self.nodes.clone() }
    }

    pub fn load(&self) -> Result<Loaded> {
        let tree = FilteredTree::build(&self.tree_spec())?;
        let mut processes = BTreeMap::new();
        for (name, spec) in &self.processes {
            processes.insert(name.clone(), Process::from_spec(&tree, spec)?);
        }
        let lookup = |name: &Option<String>| -> Result<Option<Process>> {
            name.as_ref()
                .map(|n| processes.get(n).cloned().ok_or_else(|| Error::UnknownReference(n.clone())))
                .transpose()
        };
        let basis = lookup(&self.basis)?;
        let price = lookup(&self.price)?;
        let enlargement = self
            .enlargement
            .as_ref()
            .map(|n| {
                let spec = self.enlargements.get(n).ok_or_else(|| Error::UnknownReference(n.clone()))?;
                Enlargement::new(&tree, spec)
            })
            .transpose()?;
        for spec in self.enlargements.values() {
            Enlargement::new(&tree, spec)?;
        }
        Ok(Loaded { tree, enlargement, basis, price, processes })
    }
}

/// Lowercase hex SHA-256 of the scenario bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn fixture_scenarios_load() {
        let s = Scenario::from_json(fixtures::TER1_GA_JSON).unwrap();
        let loaded = s.load().unwrap();
        assert_eq!(loaded.tree.n_leaves(), 3);
        assert_eq!(loaded.basis.unwrap(), fixtures::ter1_basis(&loaded.tree));
        assert_eq!(loaded.price.unwrap(), fixtures::ter1_price(&loaded.tree));
        assert_eq!(loaded.enlargement.unwrap(), fixtures::ga(&loaded.tree));
    }

    #[test]
    fn roundtrip_and_errors() {
        let s = Scenario::from_json(fixtures::TER1_GB_JSON).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        let mut bad = s.clone();
        bad.basis = Some("missing".into());
        assert!(matches!(bad.load(), Err(Error::UnknownReference(_))));
        assert!(matches!(Scenario::from_json("{"), Err(Error::Parse(_))));
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
