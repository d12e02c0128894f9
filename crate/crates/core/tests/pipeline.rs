use std::collections::BTreeMap;
use std::sync::Arc;

use arlequin_core::{
    build_domain, check_conditions, coefficient_zoo, optimize_scalar, oracle, ArlequinProblem, DomainSpec, Enrichment,
    EnrichmentCache, NestedMeshes, Objective, ScalarMethod, StopRule, SymMat2,
};
use proptest::prelude::*;

fn small() -> Arc<NestedMeshes> {
    Arc::new(build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, 8).unwrap())
}

#[test]
fn oscillating_medium_end_to_end() {
    let f = coefficient_zoo("smooth_trig", &BTreeMap::new()).unwrap();
    let kstar = oracle(&f, &[32, 64, 128]).unwrap().k.xx;
    let cache = EnrichmentCache::new();
    let pb = ArlequinProblem::with_cache(small(), &f, 0.125, &cache).unwrap();
    let obj = Objective::new(&pb, 1, Enrichment::Single);
    let newton = optimize_scalar(&obj, 1.0, ScalarMethod::NewtonSafeguarded, StopRule::default()).unwrap();
    let brent = optimize_scalar(&obj, 1.0, ScalarMethod::Brent, StopRule::default()).unwrap();
    assert!((newton.kbar_opt.xx - brent.kbar_opt.xx).abs() < 1e-6);
    assert!((newton.kbar_opt.xx - kstar).abs() / kstar < 0.05, "{} vs {kstar}", newton.kbar_opt.xx);
    let c = check_conditions(&pb, 1, newton.j_opt).unwrap();
    assert!(c.condition1 && c.condition2);
    assert_eq!(cache.len(), 2);
}

#[test]
fn second_direction_mirrors_first_for_swap_invariant_media() {
    let f = coefficient_zoo("checkerboard", &BTreeMap::new()).unwrap();
    let pb = ArlequinProblem::new(small(), &f, 0.125).unwrap();
    let k1 =
        optimize_scalar(&Objective::new(&pb, 1, Enrichment::Single), 1.0, ScalarMethod::Brent, StopRule::default())
            .unwrap();
    let k2 =
        optimize_scalar(&Objective::new(&pb, 2, Enrichment::Single), 1.0, ScalarMethod::Brent, StopRule::default())
            .unwrap();
    assert!((k1.kbar_opt.xx - k2.kbar_opt.xx).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn homogeneous_medium_is_reproduced(c in 0.2f64..5.0, dir in 1usize..=2) {
        let nm = Arc::new(build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, 2).unwrap());
        let f = arlequin_core::CoefficientField::constant(SymMat2::iso(c)).unwrap();
        let pb = ArlequinProblem::new(nm, &f, 0.25).unwrap();
        let sol = pb.solve(SymMat2::iso(c), dir, Enrichment::Single).unwrap();
        let coarse = &pb.meshes().coarse;
        for (u, p) in sol.u_bar.iter().zip(coarse.vertices()) {
            prop_assert!((u - p[dir - 1]).abs() < 1e-10);
        }
        prop_assert!((sol.enrichment_coefficient(dir).unwrap() - c).abs() < 1e-9);
    }
}
