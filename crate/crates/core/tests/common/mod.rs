#![allow(dead_code)]

pub mod congruence;
pub mod extraction;

use std::path::PathBuf;
use std::sync::Arc;

use egsat_core::extraction::CostModel;
use egsat_core::interp::Value;
use egsat_core::ir::parse_ir;
use egsat_core::rules::parse_rules;
use egsat_core::{IRProgram, RuleSet, TypeUniverse};

pub fn testdata(name: &str) -> PathBuf {
    // valid from any crate of the workspace
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/testdata")
        .join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(testdata(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn universe() -> Arc<TypeUniverse> {
    Arc::new(TypeUniverse::from_json(&read("universe.json")).unwrap())
}

pub fn program(name: &str) -> IRProgram {
    parse_ir(&read(&format!("{name}.ir"))).unwrap()
}

pub fn rules(name: &str) -> RuleSet {
    parse_rules(&read(&format!("{name}.rules"))).unwrap()
}

pub fn costs(name: &str) -> CostModel {
    let path = testdata(&format!("{name}.costs.json"));
    match std::fs::read_to_string(path) {
        Ok(text) => CostModel::from_json(&text).unwrap(),
        Err(_) => CostModel::default(),
    }
}

pub fn inputs(name: &str) -> Vec<Vec<Value>> {
    let json: serde_json::Value =
        serde_json::from_str(&read(&format!("{name}.inputs.json"))).unwrap();
    json.as_array()
        .unwrap()
        .iter()
        .map(|row| {
            row.as_array()
                .unwrap()
                .iter()
                .map(|v| Value::from_json(v).unwrap())
                .collect()
        })
        .collect()
}

/// Every shipped example: (name, entry function).
pub const EXAMPLES: &[(&str, &str)] = &[
    ("pow", "pow"),
    ("shift", "f"),
    ("eigen", "spectrum"),
    ("transform2d", "transform"),
    ("broadcast", "fused"),
];

/// A numeric lattice without methods, with the given union limit.
pub fn lattice(limit: usize) -> TypeUniverse {
    let text = format!(
        r#"{{"union_limit": {limit}, "types": [
            {{"name": "Number"}},
            {{"name": "Integer", "parent": "Number"}},
            {{"name": "Int64", "parent": "Integer"}},
            {{"name": "Int32", "parent": "Integer"}},
            {{"name": "AbstractFloat", "parent": "Number"}},
            {{"name": "Float64", "parent": "AbstractFloat"}},
            {{"name": "Float32", "parent": "AbstractFloat"}},
            {{"name": "Bool"}},
            {{"name": "String"}}
        ]}}"#
    );
    TypeUniverse::from_json(&text).unwrap()
}

/// Every ordering of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}
