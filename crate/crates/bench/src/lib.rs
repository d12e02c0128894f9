//! Shared fixtures for the benchmarks.

use std::collections::BTreeMap;
use std::sync::Arc;

use arlequin_core::{build_domain, coefficient_zoo, ArlequinProblem, CoefficientField, DomainSpec, NestedMeshes};

pub fn smooth_trig() -> CoefficientField {
    coefficient_zoo("smooth_trig", &BTreeMap::new()).expect("zoo coefficient")
}

/// Default geometry with `H = 0.5` and `h = eps / 10`.
pub fn meshes(eps: f64) -> Arc<NestedMeshes> {
    let m = (0.5 / (eps / 10.0)).round() as usize;
    Arc::new(build_domain(DomainSpec::default(), 0.5, m).expect("valid geometry"))
}

pub fn problem(eps: f64) -> ArlequinProblem {
    ArlequinProblem::new(meshes(eps), &smooth_trig(), eps).expect("problem setup")
}
