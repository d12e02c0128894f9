//! Reference `k*` from the periodic corrector problems on the unit cell.
//!
//! `w_i` is periodic with zero mean and solves `−div(k_per(e_i + ∇w_i)) = 0`;
//! then `k* e_i = ∫ k_per (e_i + ∇w_i)` over `(0,1)²`.

use serde::Serialize;

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, CsrMatrix, PinnedCholesky};
use crate::mesh::Element;
use crate::tensor::{unit, SymMat2, Vec2};

/// P1 discretization of the unit cell on an `n×n` "/" grid with periodic
/// identification of boundary nodes. Vertex `(i, j)` has index `i + n j`.
pub struct CellProblem {
    n: usize,
    elements: Vec<([usize; 3], Element, SymMat2)>,
    stiffness: CsrMatrix,
}

impl CellProblem {
    pub fn new(field: &CoefficientField, n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("cell resolution must be even and at least 8, got {n}")));
        }
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| (i % n) + n * (j % n);
        let mut elements = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let p = |a: usize, b: usize| -> Vec2 { [(i + a) as f64 * h, (j + b) as f64 * h] };
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v11 = idx(i + 1, j + 1);
                let v01 = idx(i, j + 1);
                for (tri, pts) in
                    [([v00, v10, v11], [p(0, 0), p(1, 0), p(1, 1)]), ([v00, v11, v01], [p(0, 0), p(1, 1), p(0, 1)])]
                {
                    let e = Element::new(pts);
                    let k = field.eval(e.centroid);
                    elements.push((tri, e, k));
                }
            }
        }
        let mut trip = Vec::with_capacity(9 * elements.len());
        for (tri, e, k) in &elements {
            for a in 0..3 {
                for b in 0..3 {
                    trip.push((tri[a], tri[b], e.area * k.bilinear(e.grads[b], e.grads[a])));
                }
            }
        }
        let stiffness = CsrMatrix::from_triplets(n * n, n * n, trip);
        Ok(Self { n, elements, stiffness })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Load vector `−∫ k e_i · ∇φ_v` and the size of its uncancelled terms.
    fn rhs(&self, direction: usize) -> (Vec<f64>, f64) {
        let e = unit(direction);
        let mut b = vec![0.0; self.n * self.n];
        let mut gross = vec![0.0f64; self.n * self.n];
        for (tri, el, k) in &self.elements {
            for a in 0..3 {
                let t = el.area * k.bilinear(e, el.grads[a]);
                b[tri[a]] -= t;
                gross[tri[a]] += t.abs();
            }
        }
        (b, inf_norm(&gross))
    }

    /// Zero-mean corrector `w_i` as nodal values.
    pub fn solve(&self, direction: usize, chol: &PinnedCholesky) -> Result<Vec<f64>> {
        let (b, gross) = self.rhs(direction);
        let mut w = chol.solve(&b);
        // Every vertex carries the same lumped weight, so the nodal mean is the integral mean.
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|x| *x -= mean);
        let r: Vec<f64> = self.stiffness.matvec(&w).iter().zip(&b).map(|(a, c)| a - c).collect();
        let rel = inf_norm(&r) / (self.stiffness.inf_norm() * inf_norm(&w) + gross);
        if !(rel <= 1e-10) {
            return Err(Error::SolverFailure(format!("corrector residual {rel:e}")));
        }
        Ok(w)
    }

    pub fn factor(&self) -> Result<PinnedCholesky> {
        PinnedCholesky::new(&self.stiffness, 0)
    }

    /// `∫ k (e_i + ∇w_i)` by elementwise quadrature.
    pub fn flux(&self, direction: usize, w: &[f64]) -> Vec2 {
        let e = unit(direction);
        let mut out = [0.0; 2];
        for (tri, el, k) in &self.elements {
            let g = el.gradient([w[tri[0]], w[tri[1]], w[tri[2]]]);
            let f = k.apply([e[0] + g[0], e[1] + g[1]]);
            out[0] += el.area * f[0];
            out[1] += el.area * f[1];
        }
        out
    }
}

/// Periodic corrector for direction `i` at cell resolution `n`.
pub fn solve_corrector(field: &CoefficientField, n: usize, direction: usize) -> Result<Vec<f64>> {
    if direction != 1 && direction != 2 {
        return Err(Error::InvalidParameter(format!("direction must be 1 or 2, got {direction}")));
    }
    let cell = CellProblem::new(field, n)?;
    cell.solve(direction, &cell.factor()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogenizedTensor {
    pub k: SymMat2,
    pub n: usize,
    /// Discretization error estimate; zero for a single resolution.
    pub error_estimate: f64,
    /// `|k*₁₂ − k*₂₁|` before symmetrization.
    pub asymmetry: f64,
}

/// `k*` at a single cell resolution, symmetrized.
pub fn homogenized_tensor(field: &CoefficientField, n: usize) -> Result<HomogenizedTensor> {
    let cell = CellProblem::new(field, n)?;
    let chol = cell.factor()?;
    let (c1, c2) = std::thread::scope(|s| {
        let h2 = s.spawn(|| cell.solve(2, &chol).map(|w| cell.flux(2, &w)));
        let c1 = cell.solve(1, &chol).map(|w| cell.flux(1, &w));
        (c1, h2.join().expect("corrector thread"))
    });
    let (c1, c2) = (c1?, c2?);
    Ok(HomogenizedTensor {
        k: SymMat2::symmetrize([[c1[0], c2[0]], [c1[1], c2[1]]]),
        n,
        error_estimate: 0.0,
        asymmetry: (c1[1] - c2[0]).abs(),
    })
}

pub const ORACLE_RESOLUTIONS: [usize; 3] = [64, 128, 256];

/// Oracle value over increasing resolutions, with the per-level tensors kept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub k: SymMat2,
    pub levels: Vec<HomogenizedTensor>,
    pub extrapolated: bool,
    /// `‖k*(n_last) − k*(n_prev)‖_max`.
    pub error_estimate: f64,
}

/// Richardson extrapolation per entry with the rate estimated from three
/// levels; falls back to the finest value when the differences do not
/// contract geometrically.
pub fn oracle(field: &CoefficientField, resolutions: &[usize]) -> Result<OracleResult> {
    if resolutions.is_empty() {
        return Err(Error::InvalidParameter("no oracle resolutions".into()));
    }
    if field.exact_homogenized().is_some_and(|_| field.name() == "constant") {
        let t = homogenized_tensor(field, resolutions[resolutions.len() - 1])?;
        return Ok(OracleResult { k: t.k, levels: vec![t], extrapolated: false, error_estimate: 0.0 });
    }
    let levels: Vec<HomogenizedTensor> =
        resolutions.iter().map(|&n| homogenized_tensor(field, n)).collect::<Result<_>>()?;
    let last = levels[levels.len() - 1].k.as_array();
    let mut k = last;
    let mut extrapolated = false;
    let mut error_estimate = 0.0;
    if levels.len() >= 2 {
        let prev = levels[levels.len() - 2].k.as_array();
        error_estimate = (0..3).map(|c| (last[c] - prev[c]).abs()).fold(0.0, f64::max);
    }
    if levels.len() >= 3 {
        let k0 = levels[levels.len() - 3].k.as_array();
        let k1 = levels[levels.len() - 2].k.as_array();
        let mut all = true;
        for c in 0..3 {
            let (d1, d2) = (k1[c] - k0[c], last[c] - k1[c]);
            if d2.abs() <= 1e-14 * last[c].abs().max(1.0) {
                continue;
            }
            let r = d2 / d1;
            if d1 != 0.0 && r > 0.0 && r < 1.0 {
                k[c] = last[c] + d2 * r / (1.0 - r);
            } else {
                all = false;
            }
        }
        if all {
            extrapolated = true;
        } else {
            k = last;
        }
    }
    Ok(OracleResult { k: SymMat2::new(k[0], k[2], k[1]), levels, extrapolated, error_estimate })
}
