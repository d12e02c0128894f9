//! The multiplier enrichments `ψ_{0,j}^h` and the enriched space `W_{H,h}^enrich`.
//!
//! `ψ_{0,j}^h ∈ W_h` solves
//! `C(ψ, φ) = ½∫_{Γ_c} (e_j·n) φ − ½∫_{Γ_f} (e_j·n) φ` for all `φ ∈ W_h`,
//! with `n` pointing out of `D_c` on both curves.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fem::{assemble_c_on, WhProjector};
use crate::linalg::{inf_norm, SparseCholesky};
use crate::mesh::{boundary_integral_weights, BoundaryTag, NestedMeshes, Region};
use crate::tensor::unit;

/// Right-hand side of the enrichment problem as a fine nodal vector.
pub fn psi0_rhs(nm: &NestedMeshes, direction: usize) -> Result<Vec<f64>> {
    let e = unit(direction);
    let wc = boundary_integral_weights(&nm.fine, BoundaryTag::GammaC, e)?;
    let wf = boundary_integral_weights(&nm.fine, BoundaryTag::GammaF, e)?;
    Ok(wc.iter().zip(&wf).map(|(a, b)| 0.5 * a - 0.5 * b).collect())
}

/// `ψ_{0,j}^h` as a fine nodal vector, zero away from the closure of `D_c`.
pub fn solve_psi0(nm: &NestedMeshes, direction: usize) -> Result<Vec<f64>> {
    if direction != 1 && direction != 2 {
        return Err(Error::InvalidParameter(format!("direction must be 1 or 2, got {direction}")));
    }
    let dofs = nm.fine.closure_vertices(Region::Dc);
    let c = assemble_c_on(&nm.fine)?.select(&dofs, &dofs);
    let rhs_full = psi0_rhs(nm, direction)?;
    let rhs: Vec<f64> = dofs.iter().map(|&v| rhs_full[v]).collect();
    let x = SparseCholesky::new(&c)?.solve(&rhs);
    let r: Vec<f64> = c.matvec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let rel = inf_norm(&r) / (c.inf_norm() * inf_norm(&x) + inf_norm(&rhs));
    if !(rel <= 1e-10) {
        return Err(Error::SolverFailure(format!("enrichment residual {rel:e}")));
    }
    let mut psi = vec![0.0; nm.fine.n_vertices()];
    for (k, &v) in dofs.iter().enumerate() {
        psi[v] = x[k];
    }
    Ok(psi)
}

/// `W_{H,h}^enrich`: the coarse multipliers plus raw fine-mesh enrichments.
#[derive(Debug, Clone)]
pub struct EnrichmentBasis {
    directions: Vec<usize>,
    psi: Vec<Arc<Vec<f64>>>,
    distances: Vec<f64>,
    n_coarse: usize,
}

impl EnrichmentBasis {
    pub fn directions(&self) -> &[usize] {
        &self.directions
    }

    pub fn psi(&self, k: usize) -> &[f64] {
        &self.psi[k]
    }

    /// `C`-norm distance of each enrichment from `W_H`.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// `dim W_H + number of enrichments`.
    pub fn dim(&self) -> usize {
        self.n_coarse + self.psi.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }
}

const COLLINEARITY_TOL: f64 = 1e-12;

/// Checks that every enrichment lies outside `W_H` and packages the basis.
pub fn enriched_multiplier_basis(nm: &NestedMeshes, psi: &[(usize, Arc<Vec<f64>>)]) -> Result<EnrichmentBasis> {
    let plain = WhProjector::new(nm, &[])?;
    let mut distances = Vec::with_capacity(psi.len());
    for (direction, v) in psi {
        let proj = plain.evaluate(&plain.project(v));
        let r: Vec<f64> = v.iter().zip(&proj).map(|(a, b)| a - b).collect();
        let d = plain.c_form(&r, &r).max(0.0).sqrt();
        if !(d > COLLINEARITY_TOL) {
            return Err(Error::CollinearEnrichment { direction: *direction, distance: d });
        }
        distances.push(d);
    }
    Ok(EnrichmentBasis {
        directions: psi.iter().map(|(d, _)| *d).collect(),
        psi: psi.iter().map(|(_, v)| v.clone()).collect(),
        distances,
        n_coarse: nm.coarse.closure_vertices(Region::Dc).len(),
    })
}

/// Process-wide store of `ψ_{0,j}^h` keyed by geometry, `H`, `m` and `j`.
#[derive(Default)]
pub struct EnrichmentCache {
    store: Mutex<HashMap<[u64; 6], Arc<Vec<f64>>>>,
}

impl EnrichmentCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(nm: &NestedMeshes, direction: usize) -> [u64; 6] {
        [
            nm.spec.l.to_bits(),
            nm.spec.l_c.to_bits(),
            nm.spec.l_f.to_bits(),
            nm.coarse_size().to_bits(),
            nm.ratio as u64,
            direction as u64,
        ]
    }

    /// Cached solve. Concurrent misses on the same key may both solve; the
    /// results are identical and the first insert wins.
    pub fn get(&self, nm: &NestedMeshes, direction: usize) -> Result<Arc<Vec<f64>>> {
        let key = Self::key(nm, direction);
        if let Some(v) = self.store.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let psi = Arc::new(solve_psi0(nm, direction)?);
        Ok(self.store.lock().expect("cache lock").entry(key).or_insert(psi).clone())
    }

    pub fn len(&self) -> usize {
        self.store.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{mass, nested_interpolation};
    use crate::mesh::{build_domain, DomainSpec};

    fn small(m: usize) -> NestedMeshes {
        build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, m).unwrap()
    }

    #[test]
    fn rhs_and_solution_have_zero_mean() {
        let nm = build_domain(DomainSpec::default(), 0.5, 5).unwrap();
        for j in [1, 2] {
            let rhs = psi0_rhs(&nm, j).unwrap();
            assert!(rhs.iter().sum::<f64>().abs() < 1e-13);
            let psi = solve_psi0(&nm, j).unwrap();
            let regions = nm.fine.regions();
            let m = mass(&nm.fine, |e| regions[e] == Region::Dc);
            let ones = vec![1.0; psi.len()];
            assert!(m.form(&psi, &ones).abs() < 1e-10 * 12.0);
        }
    }

    #[test]
    fn variational_residual_vanishes() {
        let nm = small(3);
        let psi = solve_psi0(&nm, 1).unwrap();
        let rhs = psi0_rhs(&nm, 1).unwrap();
        let c = assemble_c_on(&nm.fine).unwrap();
        let r = c.matvec(&psi);
        for v in nm.fine.closure_vertices(Region::Dc) {
            assert!((r[v] - rhs[v]).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_symmetry() {
        let nm = build_domain(DomainSpec::default(), 0.5, 4).unwrap();
        let p1 = solve_psi0(&nm, 1).unwrap();
        let p2 = solve_psi0(&nm, 2).unwrap();
        for v in 0..nm.fine.n_vertices() {
            let [i, j] = nm.fine.lattice()[v];
            let w = nm.fine.vertex_at([j, i]).unwrap();
            assert!((p2[v] - p1[w]).abs() < 1e-10, "{} vs {}", p2[v], p1[w]);
        }
        // Odd under x -> -x, which maps the mesh onto itself.
        for v in 0..nm.fine.n_vertices() {
            let [i, j] = nm.fine.lattice()[v];
            let w = nm.fine.vertex_at([-i, -j]).unwrap();
            assert!((p1[v] + p1[w]).abs() < 1e-10);
        }
    }

    #[test]
    fn refinement_differences_decrease() {
        let levels: Vec<_> = [2, 4, 8, 16].iter().map(|&m| small(m)).collect();
        let psis: Vec<_> = levels.iter().map(|nm| solve_psi0(nm, 1).unwrap()).collect();
        let finest = &levels[3].fine;
        let c = assemble_c_on(finest).unwrap();
        let lifted: Vec<Vec<f64>> = levels
            .iter()
            .zip(&psis)
            .map(|(nm, psi)| nested_interpolation(&nm.fine, finest, 16 / nm.ratio, Region::Dc).matvec(psi))
            .collect();
        let dist = |a: &[f64], b: &[f64]| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            c.form(&d, &d).sqrt()
        };
        let d: Vec<f64> = (0..3).map(|k| dist(&lifted[k], &lifted[k + 1])).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn basis_dimensions_and_distance() {
        let nm = small(2);
        let p1 = Arc::new(solve_psi0(&nm, 1).unwrap());
        let p2 = Arc::new(solve_psi0(&nm, 2).unwrap());
        let n_w = nm.coarse.closure_vertices(Region::Dc).len();
        let b = enriched_multiplier_basis(&nm, &[(1, p1.clone())]).unwrap();
        assert_eq!(b.dim(), n_w + 1);
        assert!(b.distances()[0] > 1e-3);
        let b = enriched_multiplier_basis(&nm, &[(1, p1.clone()), (2, p2.clone())]).unwrap();
        assert_eq!(b.dim(), n_w + 2);
        let proj = WhProjector::new(&nm, &[p1.to_vec(), p2.to_vec()]).unwrap();
        let r = proj.project(&p1);
        assert!((r.enrichment[0] - 1.0).abs() < 1e-10 && r.enrichment[1].abs() < 1e-10);
    }

    #[test]
    fn coarse_function_is_collinear() {
        let nm = small(2);
        let p = crate::fem::prolongation(&nm);
        let coarse: Vec<f64> = nm.coarse.vertices().iter().map(|q| q[0] + 2.0 * q[1]).collect();
        let v = Arc::new(p.matvec(&coarse));
        assert!(matches!(
            enriched_multiplier_basis(&nm, &[(1, v)]),
            Err(Error::CollinearEnrichment { direction: 1, .. })
        ));
    }

    #[test]
    fn cache_reuses_solutions() {
        let nm = small(2);
        let cache = EnrichmentCache::new();
        let a = cache.get(&nm, 1).unwrap();
        let b = cache.get(&nm, 1).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        cache.get(&nm, 2).unwrap();
        assert_eq!(cache.len(), 2);
        let other = small(3);
        cache.get(&other, 1).unwrap();
        assert_eq!(cache.len(), 3);
    }
}
