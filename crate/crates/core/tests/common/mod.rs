#![allow(dead_code)]

use std::collections::BTreeMap;

use jumpsmooth::dsl::Functional;
use jumpsmooth::{BoxSet, JumpModel, NuComponent};

/// Unit jumps at rate 2 on `[0, 1)`: `lambda_A = m(A) = 2` for `A = [0, 1) x [0.5, 1.5)`.
pub fn unit_model() -> JumpModel {
    JumpModel::new(0.0, 1.0, vec![NuComponent::atom(1.0, 2.0).unwrap()]).unwrap()
}

/// Two-signed model with drift: `2 delta_1 + 1.0 * Uniform[-2, -0.5)` (total mass 1.5 on the uniform).
pub fn mixed_model() -> JumpModel {
    JumpModel::new(0.3, 1.0, vec![NuComponent::atom(1.0, 2.0).unwrap(), NuComponent::uniform(-2.0, -0.5, 1.5).unwrap()])
        .unwrap()
}

pub fn a() -> BoxSet {
    BoxSet::rect(0.0, 1.0, 0.5, 1.5).unwrap()
}

/// Disjoint from `a()`; carries no mass under `unit_model`.
pub fn b_empty() -> BoxSet {
    BoxSet::rect(0.0, 1.0, 2.0, 3.0).unwrap()
}

pub fn boxes(model: &JumpModel) -> BTreeMap<String, BoxSet> {
    let mut m = BTreeMap::new();
    m.insert("A".to_string(), a());
    m.insert("B".to_string(), BoxSet::rect(0.0, 1.0, -2.0, -0.5).unwrap());
    m.insert("E".to_string(), b_empty());
    m.insert("C".to_string(), a().complement(model.horizon()).unwrap());
    m
}

pub fn compile(src: &str, model: &JumpModel) -> Functional {
    Functional::compile(src, &boxes(model), model).unwrap()
}

/// Poisson moments `E N^k` for `k = 1..=3`.
pub fn poisson_moments(l: f64) -> [f64; 3] {
    [l, l + l * l, l * l * l + 3.0 * l * l + l]
}
