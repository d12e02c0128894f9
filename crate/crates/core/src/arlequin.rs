//! The enriched Arlequin saddle-point system and its `k̄`-derivatives.
//!
//! Unknowns are ordered coarse free dofs, fine dofs, then multipliers (`W_H`
//! followed by the enrichments). The full system
//!
//! ```text
//! [ Ā    0    Ccᵀ ] [ ū ]   [ f ]
//! [ 0    Ǎ   -Cfᵀ ] [ ǔ ] = [ 0 ]
//! [ Cc  -Cf   0   ] [ λ ]   [ 0 ]
//! ```
//!
//! is solved by eliminating the fine block: `Ǎ` is singular only on the
//! constants, so `ǔ = S Cfᵀ λ + α 1` with `S` a pinned Cholesky solve and the
//! scalar `α` fixed by the solvability condition `(Cf 1)ᵀ λ = 0`. The fine
//! factorization and `X = S Cfᵀ` depend on `k_ε` only, so every `k̄` costs a
//! small dense solve. Each solution is checked against the full block residuals.

use std::fmt::Write as _;
use std::sync::Arc;

use faer::Mat;

use crate::coefficients::CoefficientField;
use crate::enrichment::{enriched_multiplier_basis, solve_psi0, EnrichmentCache};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_acheck, assemble_c_on, dirichlet_lift, interpolate, mass, prolongation, AbarComponents, FeSpace,
};
use crate::linalg::{inf_norm, CsrMatrix, DenseLu, PinnedCholesky, SparseCholesky};
use crate::mesh::{BoundaryTag, NestedMeshes, Region};
use crate::tensor::SymMat2;

/// Which enrichments join `W_H` in the multiplier space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enrichment {
    /// Plain `W_H` (ablation only).
    None,
    /// `ψ_{0,j}` for the boundary direction `j`.
    Single,
    /// Both `ψ_{0,1}` and `ψ_{0,2}`.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest accepted relative block residual.
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-9 }
    }
}

/// Relative residuals of the three block rows.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Residuals {
    pub coarse: f64,
    pub fine: f64,
    pub constraint: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.coarse.max(self.fine).max(self.constraint)
    }
}

/// The triple `(ūᴴ, ǔ_εʰ, ψᴴ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub kbar: SymMat2,
    pub direction: usize,
    /// Coarse nodal values including the Dirichlet trace.
    pub u_bar: Vec<f64>,
    /// Fine nodal values.
    pub u_check: Vec<f64>,
    /// Coarse nodal values of the `W_H` part of the multiplier.
    pub psi_coarse: Vec<f64>,
    /// `(j, coefficient of ψ_{0,j})` for each active enrichment.
    pub psi_enrichment: Vec<(usize, f64)>,
    pub residuals: Residuals,
}

impl CoupledSolution {
    pub fn enrichment_coefficient(&self, direction: usize) -> Option<f64> {
        self.psi_enrichment.iter().find(|(d, _)| *d == direction).map(|(_, c)| *c)
    }
}

/// Everything that depends on the meshes and `k_ε` but not on `k̄`.
pub struct ArlequinProblem {
    nm: Arc<NestedMeshes>,
    eps: f64,
    field: CoefficientField,
    coarse_space: FeSpace,
    abar: AbarComponents,
    acheck: CsrMatrix,
    p: CsrMatrix,
    coupling: Vec<usize>,
    psi: [Arc<Vec<f64>>; 2],
    psi_distance: [f64; 2],
    /// Coarse constraint rows, `(n_W + 2) × n_coarse`.
    cc: CsrMatrix,
    /// Fine constraint rows, `(n_W + 2) × n_fine`.
    cf: CsrMatrix,
    x: Mat<f64>,
    t: Mat<f64>,
    q: Vec<f64>,
    options: SolverOptions,
}

impl ArlequinProblem {
    pub fn new(nm: Arc<NestedMeshes>, field: &CoefficientField, eps: f64) -> Result<Self> {
        let psi = [Arc::new(solve_psi0(&nm, 1)?), Arc::new(solve_psi0(&nm, 2)?)];
        Self::with_enrichment(nm, field, eps, psi)
    }

    pub fn with_cache(
        nm: Arc<NestedMeshes>,
        field: &CoefficientField,
        eps: f64,
        cache: &EnrichmentCache,
    ) -> Result<Self> {
        let psi = [cache.get(&nm, 1)?, cache.get(&nm, 2)?];
        Self::with_enrichment(nm, field, eps, psi)
    }

    pub fn with_enrichment(
        nm: Arc<NestedMeshes>,
        field: &CoefficientField,
        eps: f64,
        psi: [Arc<Vec<f64>>; 2],
    ) -> Result<Self> {
        let basis = enriched_multiplier_basis(&nm, &[(1, psi[0].clone()), (2, psi[1].clone())])?;
        let psi_distance = [basis.distances()[0], basis.distances()[1]];

        let coarse_space = FeSpace::coarse(&nm.coarse);
        let abar = AbarComponents::new(&nm.coarse);
        let acheck = assemble_acheck(&nm.fine, field, eps)?;
        let p = prolongation(&nm);
        let coupling = coarse_space.coupling().to_vec();
        let nw = coupling.len();
        let (n_coarse, n_fine) = (nm.coarse.n_vertices(), nm.fine.n_vertices());

        let c_coarse = assemble_c_on(&nm.coarse)?;
        let c_fine = assemble_c_on(&nm.fine)?;
        let all_coarse: Vec<usize> = (0..n_coarse).collect();
        let all_fine: Vec<usize> = (0..n_fine).collect();

        let mut tc: Vec<_> = c_coarse.select(&coupling, &all_coarse).iter().collect();
        let mut tf: Vec<_> = p.transpose().matmul(&c_fine).select(&coupling, &all_fine).iter().collect();
        for (k, v) in psi.iter().enumerate() {
            let b = c_fine.matvec(v);
            let pb = p.matvec_t(&b);
            tc.extend(pb.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, x)| (nw + k, j, *x)));
            tf.extend(b.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(j, x)| (nw + k, j, *x)));
        }
        let cc = CsrMatrix::from_triplets(nw + 2, n_coarse, tc);
        let cf = CsrMatrix::from_triplets(nw + 2, n_fine, tf);

        // Pin the fine vertex at the centre of D_f.
        let pin = nm.fine.vertex_at([0, 0]).expect("fine mesh contains the origin");
        let chol = PinnedCholesky::new(&acheck, pin)?;
        let mut rhs = Mat::zeros(n_fine, nw + 2);
        for i in 0..nw + 2 {
            for (j, v) in cf.row(i) {
                rhs[(j, i)] = v;
            }
        }
        let x = chol.solve_columns(&rhs);
        let mut t = Mat::zeros(nw + 2, nw + 2);
        for i in 0..nw + 2 {
            for (k, v) in cf.row(i) {
                for j in 0..nw + 2 {
                    t[(i, j)] += v * x[(k, j)];
                }
            }
        }
        for i in 0..nw + 2 {
            for j in 0..i {
                let s = 0.5 * (t[(i, j)] + t[(j, i)]);
                t[(i, j)] = s;
                t[(j, i)] = s;
            }
        }
        let q = cf.matvec(&vec![1.0; n_fine]);

        Ok(Self {
            nm,
            eps,
            field: field.clone(),
            coarse_space,
            abar,
            acheck,
            p,
            coupling,
            psi,
            psi_distance,
            cc,
            cf,
            x,
            t,
            q,
            options: SolverOptions::default(),
        })
    }

    pub fn set_options(&mut self, options: SolverOptions) {
        self.options = options;
    }

    pub fn meshes(&self) -> &NestedMeshes {
        &self.nm
    }

    pub fn shared_meshes(&self) -> Arc<NestedMeshes> {
        self.nm.clone()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn coarse_space(&self) -> &FeSpace {
        &self.coarse_space
    }

    pub fn abar_components(&self) -> &AbarComponents {
        &self.abar
    }

    pub fn acheck(&self) -> &CsrMatrix {
        &self.acheck
    }

    pub fn prolongation(&self) -> &CsrMatrix {
        &self.p
    }

    /// `ψ_{0,j}^h` on the fine mesh.
    pub fn psi0(&self, direction: usize) -> &[f64] {
        &self.psi[direction - 1]
    }

    /// `C`-norm distance of `ψ_{0,j}^h` from `W_H`.
    pub fn psi0_distance(&self, direction: usize) -> f64 {
        self.psi_distance[direction - 1]
    }

    pub fn n_wh(&self) -> usize {
        self.coupling.len()
    }

    /// Indices of the active multipliers in the full layout `[W_H, ψ_{0,1}, ψ_{0,2}]`.
    pub fn active_multipliers(&self, enrichment: Enrichment, direction: usize) -> Vec<usize> {
        let nw = self.n_wh();
        let mut idx: Vec<usize> = (0..nw).collect();
        match enrichment {
            Enrichment::None => {}
            Enrichment::Single => idx.push(nw + direction - 1),
            Enrichment::Both => idx.extend([nw, nw + 1]),
        }
        idx
    }

    /// Factors the reduced system for one `k̄`.
    pub fn operator(&self, kbar: SymMat2, direction: usize, enrichment: Enrichment) -> Result<CoupledOperator<'_>> {
        if direction != 1 && direction != 2 {
            return Err(Error::InvalidParameter(format!("bc direction must be 1 or 2, got {direction}")));
        }
        if !kbar.is_spd() {
            return Err(Error::SingularKkt(format!("kbar {kbar:?} is not positive definite")));
        }
        let abar = self.abar.combine(kbar);
        let free = self.coarse_space.free();
        let active = self.active_multipliers(enrichment, direction);
        let (ni, na) = (free.len(), active.len());
        let n = ni + na + 1;
        let mut m = Mat::zeros(n, n);
        for (i, j, v) in abar.select(free, free).iter() {
            m[(i, j)] += v;
        }
        for (i, j, v) in self.cc.select(&active, free).iter() {
            m[(ni + i, j)] = v;
            m[(j, ni + i)] = v;
        }
        for (a, &ia) in active.iter().enumerate() {
            for (b, &ib) in active.iter().enumerate() {
                m[(ni + a, ni + b)] = -self.t[(ia, ib)];
            }
            m[(ni + a, n - 1)] = -self.q[ia];
            m[(n - 1, ni + a)] = -self.q[ia];
        }
        let lu = DenseLu::new(m)?;
        Ok(CoupledOperator { problem: self, kbar, direction, active, abar, lu })
    }

    /// Coupled solve for `k̄` with Dirichlet data `x_j` on `Γ`.
    pub fn solve(&self, kbar: SymMat2, direction: usize, enrichment: Enrichment) -> Result<CoupledSolution> {
        self.operator(kbar, direction, enrichment)?.solve()
    }

    /// Fine nodal representation of the multiplier.
    pub fn psi_fine(&self, sol: &CoupledSolution) -> Vec<f64> {
        let mut out = self.p.matvec(&sol.psi_coarse);
        for &(j, c) in &sol.psi_enrichment {
            out.iter_mut().zip(self.psi0(j)).for_each(|(o, p)| *o += c * p);
        }
        out
    }

    /// `E(ū, ǔ) = ½ Ā_k̄(ū, ū) + ½ Ǎ(ǔ, ǔ)`.
    pub fn energy(&self, kbar: SymMat2, u_bar: &[f64], u_check: &[f64]) -> f64 {
        0.5 * self.abar.combine(kbar).form(u_bar, u_bar) + 0.5 * self.acheck.form(u_check, u_check)
    }

    /// The pair `(x_j, x_j)` interpolated on both meshes.
    pub fn linear_pair(&self, direction: usize) -> (Vec<f64>, Vec<f64>) {
        (interpolate(&self.nm.coarse, |p| p[direction - 1]), interpolate(&self.nm.fine, |p| p[direction - 1]))
    }

    /// `∫_{D_c} (ū − ǔ)`.
    pub fn mean_mismatch(&self, u_bar: &[f64], u_check: &[f64]) -> f64 {
        let mc = mass(&self.nm.coarse, |e| self.nm.coarse.regions()[e] == Region::Dc);
        let mf = mass(&self.nm.fine, |e| self.nm.fine.regions()[e] == Region::Dc);
        let ic: f64 = mc.matvec(u_bar).iter().sum();
        let if_: f64 = mf.matvec(u_check).iter().sum();
        ic - if_
    }

    /// Largest `|C(ū − ǔ, φ)|` over the active multiplier basis.
    pub fn constraint_violation(&self, sol: &CoupledSolution, enrichment: Enrichment) -> f64 {
        let r1 = self.cc.matvec(&sol.u_bar);
        let r2 = self.cf.matvec(&sol.u_check);
        self.active_multipliers(enrichment, sol.direction).iter().map(|&i| (r1[i] - r2[i]).abs()).fold(0.0, f64::max)
    }
}

/// The reduced system factored for one `k̄`, reusable for derivative solves.
pub struct CoupledOperator<'p> {
    problem: &'p ArlequinProblem,
    kbar: SymMat2,
    direction: usize,
    active: Vec<usize>,
    abar: CsrMatrix,
    lu: DenseLu,
}

impl<'p> CoupledOperator<'p> {
    pub fn kbar(&self) -> SymMat2 {
        self.kbar
    }

    pub fn abar(&self) -> &CsrMatrix {
        &self.abar
    }

    /// Base solve with the Dirichlet lift.
    pub fn solve(&self) -> Result<CoupledSolution> {
        let lift = dirichlet_lift(&self.problem.nm.coarse, self.direction);
        let zero = vec![0.0; self.problem.coarse_space.free().len()];
        self.solve_general(&lift, &zero)
    }

    /// Solves with data `ū = lift` on `Γ` and coarse source `source`, i.e.
    /// `(Ā ū + Ccᵀ λ)_I = source`, the other block rows homogeneous.
    pub fn solve_general(&self, lift: &[f64], source: &[f64]) -> Result<CoupledSolution> {
        let pb = self.problem;
        let free = pb.coarse_space.free();
        let (ni, na) = (free.len(), self.active.len());
        let ag = self.abar.matvec(lift);
        let cg = pb.cc.matvec(lift);
        let mut rhs = vec![0.0; ni + na + 1];
        for (k, &v) in free.iter().enumerate() {
            rhs[k] = source[k] - ag[v];
        }
        for (a, &i) in self.active.iter().enumerate() {
            rhs[ni + a] = -cg[i];
        }
        let (z, _) = self.lu.solve(&rhs)?;

        let u_bar = pb.coarse_space.scatter(&z[..ni], lift);
        let lambda = &z[ni..ni + na];
        let alpha = z[ni + na];
        let n_fine = pb.nm.fine.n_vertices();
        let mut u_check = vec![alpha; n_fine];
        for (a, &i) in self.active.iter().enumerate() {
            let l = lambda[a];
            for (k, u) in u_check.iter_mut().enumerate() {
                *u += l * pb.x[(k, i)];
            }
        }
        let mut lambda_full = vec![0.0; pb.cc.nrows()];
        for (a, &i) in self.active.iter().enumerate() {
            lambda_full[i] = lambda[a];
        }

        let residuals = self.residuals(&u_bar, &u_check, &lambda_full, source);
        if !(residuals.max() <= pb.options.residual_tol) {
            return Err(Error::SolverFailure(format!(
                "coupled residuals {residuals:?} exceed {:e}",
                pb.options.residual_tol
            )));
        }

        let nw = pb.n_wh();
        let mut psi_coarse = vec![0.0; pb.nm.coarse.n_vertices()];
        for (k, &v) in pb.coupling.iter().enumerate() {
            psi_coarse[v] = lambda_full[k];
        }
        let psi_enrichment = self.active.iter().filter(|&&i| i >= nw).map(|&i| (i - nw + 1, lambda_full[i])).collect();
        Ok(CoupledSolution {
            kbar: self.kbar,
            direction: self.direction,
            u_bar,
            u_check,
            psi_coarse,
            psi_enrichment,
            residuals,
        })
    }

    /// Block residuals of the unreduced system, from sparse products.
    fn residuals(&self, u_bar: &[f64], u_check: &[f64], lambda: &[f64], source: &[f64]) -> Residuals {
        let pb = self.problem;
        let free = pb.coarse_space.free();
        let rel = |r: &[f64], scale: f64| if scale > 0.0 { inf_norm(r) / scale } else { inf_norm(r) };

        let au = self.abar.matvec(u_bar);
        let cl = pb.cc.matvec_t(lambda);
        let r1: Vec<f64> = free.iter().enumerate().map(|(k, &v)| au[v] + cl[v] - source[k]).collect();
        let s1 = self.abar.inf_norm() * inf_norm(u_bar) + inf_norm(&cl) + inf_norm(source);

        let au = pb.acheck.matvec(u_check);
        let cl = pb.cf.matvec_t(lambda);
        let r2: Vec<f64> = au.iter().zip(&cl).map(|(a, b)| a - b).collect();
        let s2 = pb.acheck.inf_norm() * inf_norm(u_check) + inf_norm(&cl);

        let a = pb.cc.matvec(u_bar);
        let b = pb.cf.matvec(u_check);
        let r3: Vec<f64> = self.active.iter().map(|&i| a[i] - b[i]).collect();
        let s3 = self.active.iter().map(|&i| a[i].abs().max(b[i].abs())).fold(0.0, f64::max);

        Residuals { coarse: rel(&r1, s1), fine: rel(&r2, s2), constraint: rel(&r3, s3) }
    }

    /// Derivative of order `m` in `k̄` along the unit form `Ā_1`, given the
    /// derivative of order `m − 1` (the base solution for `m = 1`).
    /// Only meaningful for scalar `k̄`.
    pub fn derivative(&self, order: usize, previous: &CoupledSolution) -> Result<CoupledSolution> {
        if order != 1 && order != 2 {
            return Err(Error::InvalidParameter(format!("derivative order must be 1 or 2, got {order}")));
        }
        let a1 = self.problem.abar.unit();
        let au = a1.matvec(&previous.u_bar);
        let factor = order as f64;
        let source: Vec<f64> = self.problem.coarse_space.free().iter().map(|&v| -factor * au[v]).collect();
        let zero = vec![0.0; self.problem.nm.coarse.n_vertices()];
        self.solve_general(&zero, &source)
    }
}

/// Coupled solve for `k̄`; see [`ArlequinProblem::solve`].
pub fn solve_coupled(
    problem: &ArlequinProblem,
    kbar: SymMat2,
    direction: usize,
    enrichment: Enrichment,
) -> Result<CoupledSolution> {
    problem.solve(kbar, direction, enrichment)
}

/// Derivative triple of order `m ∈ {1, 2}` in scalar `k̄`.
pub fn solve_derivative_system(
    problem: &ArlequinProblem,
    order: usize,
    previous: &CoupledSolution,
    enrichment: Enrichment,
) -> Result<CoupledSolution> {
    problem.operator(previous.kbar, previous.direction, enrichment)?.derivative(order, previous)
}

/// The unreduced KKT matrix and right-hand side, in the pinned dof order
/// (coarse free, fine, multipliers).
pub struct KktSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_coarse_free: usize,
    pub n_fine: usize,
    pub n_multipliers: usize,
}

impl KktSystem {
    pub fn assemble(
        problem: &ArlequinProblem,
        kbar: SymMat2,
        direction: usize,
        enrichment: Enrichment,
    ) -> Result<Self> {
        if !kbar.is_spd() {
            return Err(Error::NonSpdCoefficient(format!("kbar = {kbar:?}")));
        }
        let free = problem.coarse_space.free();
        let active = problem.active_multipliers(enrichment, direction);
        let (ni, nf, na) = (free.len(), problem.nm.fine.n_vertices(), active.len());
        let abar = problem.abar.combine(kbar);
        let all_fine: Vec<usize> = (0..nf).collect();
        let mut t: Vec<(usize, usize, f64)> = abar.select(free, free).iter().collect();
        t.extend(problem.acheck.iter().map(|(i, j, v)| (ni + i, ni + j, v)));
        for (a, j, v) in problem.cc.select(&active, free).iter() {
            t.push((ni + nf + a, j, v));
            t.push((j, ni + nf + a, v));
        }
        for (a, j, v) in problem.cf.select(&active, &all_fine).iter() {
            t.push((ni + nf + a, ni + j, -v));
            t.push((ni + j, ni + nf + a, -v));
        }
        let n = ni + nf + na;
        let lift = dirichlet_lift(&problem.nm.coarse, direction);
        let ag = abar.matvec(&lift);
        let cg = problem.cc.matvec(&lift);
        let mut rhs = vec![0.0; n];
        for (k, &v) in free.iter().enumerate() {
            rhs[k] = -ag[v];
        }
        for (a, &i) in active.iter().enumerate() {
            rhs[ni + nf + a] = -cg[i];
        }
        Ok(Self { matrix: CsrMatrix::from_triplets(n, n, t), rhs, n_coarse_free: ni, n_fine: nf, n_multipliers: na })
    }

    /// Splits a solution vector into `(ū, ǔ, λ)`, restoring the Dirichlet trace.
    pub fn unpack(&self, problem: &ArlequinProblem, direction: usize, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (ni, nf) = (self.n_coarse_free, self.n_fine);
        let lift = dirichlet_lift(&problem.nm.coarse, direction);
        (problem.coarse_space.scatter(&z[..ni], &lift), z[ni..ni + nf].to_vec(), z[ni + nf..].to_vec())
    }
}

/// Minimizers of the coupled energy with `k̄ = 0`: `ǔ = λ` on the fine mesh and
/// `ū = ũ_{0,a} + λ ũ_{0,b}`, with `ũ_{0,a}` discrete harmonic in `D`,
/// equal to `x_j` on `Γ` and `0` on the closure of `D_c`, and `ũ_{0,b}`
/// discrete harmonic in `D`, `0` on `Γ` and `1` on the closure of `D_c`.
#[derive(Debug, Clone)]
pub struct DegenerateFamily {
    pub u_a: Vec<f64>,
    pub u_b: Vec<f64>,
    n_fine: usize,
}

impl DegenerateFamily {
    /// The member `(ū, ǔ)` with constant `λ`.
    pub fn member(&self, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let u = self.u_a.iter().zip(&self.u_b).map(|(a, b)| a + lambda * b).collect();
        (u, vec![lambda; self.n_fine])
    }
}

pub fn solve_degenerate_kbar0(nm: &NestedMeshes, direction: usize) -> Result<DegenerateFamily> {
    let coarse = &nm.coarse;
    let n = coarse.n_vertices();
    let gamma = coarse.tagged_vertices(BoundaryTag::Gamma);
    let dc = coarse.closure_vertices(Region::Dc);
    let mut fixed = vec![false; n];
    gamma.iter().chain(&dc).for_each(|&v| fixed[v] = true);
    let interior: Vec<usize> = (0..n).filter(|&v| !fixed[v]).collect();
    let a1 = AbarComponents::new(coarse).unit();
    let chol = SparseCholesky::new(&a1.select(&interior, &interior))?;
    let harmonic = |boundary: Vec<f64>| {
        let ab = a1.matvec(&boundary);
        let rhs: Vec<f64> = interior.iter().map(|&v| -ab[v]).collect();
        let x = chol.solve(&rhs);
        let mut out = boundary;
        for (k, &v) in interior.iter().enumerate() {
            out[v] = x[k];
        }
        out
    };
    let mut ga = vec![0.0; n];
    for &v in &gamma {
        ga[v] = coarse.vertices()[v][direction - 1];
    }
    let mut gb = vec![0.0; n];
    for &v in &dc {
        gb[v] = 1.0;
    }
    Ok(DegenerateFamily { u_a: harmonic(ga), u_b: harmonic(gb), n_fine: nm.fine.n_vertices() })
}

/// Nodal CSV dump: `node,x,y,value,field` with fields `u_bar`, `u_check`, `psi`.
pub fn solution_csv(problem: &ArlequinProblem, sol: &CoupledSolution) -> String {
    let mut s = String::from("node,x,y,value,field\n");
    let nm = problem.meshes();
    for (i, (p, v)) in nm.coarse.vertices().iter().zip(&sol.u_bar).enumerate() {
        let _ = writeln!(s, "{i},{},{},{v:e},u_bar", p[0], p[1]);
    }
    for (i, (p, v)) in nm.fine.vertices().iter().zip(&sol.u_check).enumerate() {
        let _ = writeln!(s, "{i},{},{},{v:e},u_check", p[0], p[1]);
    }
    let psi = problem.psi_fine(sol);
    for i in nm.fine.closure_vertices(Region::Dc) {
        let p = nm.fine.vertices()[i];
        let _ = writeln!(s, "{i},{},{},{:e},psi", p[0], p[1], psi[i]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::coefficient_zoo;
    use crate::mesh::{build_domain, DomainSpec};
    use std::collections::BTreeMap;

    fn field(name: &str, kv: &[(&str, f64)]) -> CoefficientField {
        coefficient_zoo(name, &kv.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>()).unwrap()
    }

    fn small_problem(f: &CoefficientField, eps: f64) -> ArlequinProblem {
        let nm = build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, 2).unwrap();
        ArlequinProblem::new(Arc::new(nm), f, eps).unwrap()
    }

    fn default_problem(f: &CoefficientField, eps: f64, m: usize) -> ArlequinProblem {
        let nm = build_domain(DomainSpec::default(), 0.5, m).unwrap();
        ArlequinProblem::new(Arc::new(nm), f, eps).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn homogeneous_solution_is_linear() {
        for c in [0.5, 1.0, 3.0] {
            let f = field("constant", &[("c", c)]);
            let pb = default_problem(&f, 0.5, 5);
            for j in [1, 2] {
                let sol = pb.solve(SymMat2::iso(c), j, Enrichment::Single).unwrap();
                let (xc, xf) = pb.linear_pair(j);
                assert!(max_diff(&sol.u_bar, &xc) < 1e-9);
                assert!(max_diff(&sol.u_check, &xf) < 1e-9);
                assert!(inf_norm(&sol.psi_coarse) < 1e-8);
                assert!((sol.enrichment_coefficient(j).unwrap() - c).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn matrix_homogeneous_solution() {
        let k = SymMat2::new(2.0, 0.5, 3.0);
        let f = CoefficientField::constant(k).unwrap();
        let pb = default_problem(&f, 0.5, 5);
        // Any k̄ sharing the first column with K.
        for kbar in [k, SymMat2::new(2.0, 0.5, 1.0), SymMat2::new(2.0, 0.5, 7.0)] {
            let sol = pb.solve(kbar, 1, Enrichment::Both).unwrap();
            let (xc, _) = pb.linear_pair(1);
            assert!(max_diff(&sol.u_bar, &xc) < 1e-9);
            assert!((sol.enrichment_coefficient(1).unwrap() - 2.0).abs() < 1e-6);
            assert!((sol.enrichment_coefficient(2).unwrap() - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn constraint_and_means_match() {
        let f = field("checkerboard", &[]);
        let pb = small_problem(&f, 0.25);
        for enrichment in [Enrichment::None, Enrichment::Single, Enrichment::Both] {
            let sol = pb.solve(SymMat2::iso(2.0), 1, enrichment).unwrap();
            assert!(sol.residuals.max() < 1e-9);
            assert!(pb.constraint_violation(&sol, enrichment) < 1e-11);
            assert!(pb.mean_mismatch(&sol.u_bar, &sol.u_check).abs() < 1e-11);
        }
    }

    #[test]
    fn energy_below_linear_pair() {
        let f = field("smooth_trig", &[]);
        let pb = small_problem(&f, 0.25);
        for k in [0.5, 2.0, 4.0] {
            let kbar = SymMat2::iso(k);
            let sol = pb.solve(kbar, 1, Enrichment::Single).unwrap();
            let (xc, xf) = pb.linear_pair(1);
            assert!(pb.energy(kbar, &sol.u_bar, &sol.u_check) <= pb.energy(kbar, &xc, &xf) + 1e-12);
        }
    }

    #[test]
    fn reduced_route_matches_full_kkt() {
        let f = field("checkerboard", &[]);
        let pb = small_problem(&f, 0.25);
        for (kbar, dir, enr) in [
            (SymMat2::iso(1.7), 1, Enrichment::Single),
            (SymMat2::new(2.0, 0.3, 1.0), 2, Enrichment::Both),
            (SymMat2::iso(3.0), 1, Enrichment::None),
        ] {
            let kkt = KktSystem::assemble(&pb, kbar, dir, enr).unwrap();
            assert_eq!(kkt.matrix.asymmetry(), 0.0);
            let (z, rel) = DenseLu::new(kkt.matrix.to_dense()).unwrap().solve(&kkt.rhs).unwrap();
            assert!(rel < 1e-12);
            let (ub, uc, lam) = kkt.unpack(&pb, dir, &z);
            let sol = pb.solve(kbar, dir, enr).unwrap();
            assert!(max_diff(&ub, &sol.u_bar) < 1e-10);
            assert!(max_diff(&uc, &sol.u_check) < 1e-10);
            let nw = pb.n_wh();
            let coarse_lambda: Vec<f64> = pb.coupling.iter().map(|&v| sol.psi_coarse[v]).collect();
            assert!(max_diff(&lam[..nw], &coarse_lambda) < 1e-9);
            for (k, &(_, c)) in sol.psi_enrichment.iter().enumerate() {
                assert!((lam[nw + k] - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn derivative_scales_linearly_and_matches_differences() {
        let f = field("smooth_trig", &[]);
        let pb = small_problem(&f, 0.25);
        let k = 1.8;
        let op = pb.operator(SymMat2::iso(k), 1, Enrichment::Single).unwrap();
        let base = op.solve().unwrap();
        let d1 = op.derivative(1, &base).unwrap();
        // Doubling the source doubles the derivative.
        let a1 = pb.abar_components().unit();
        let au = a1.matvec(&base.u_bar);
        let src: Vec<f64> = pb.coarse_space().free().iter().map(|&v| -2.0 * au[v]).collect();
        let zero = vec![0.0; base.u_bar.len()];
        let d1x2 = op.solve_general(&zero, &src).unwrap();
        for (a, b) in d1.u_bar.iter().zip(&d1x2.u_bar) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        // Central differences of ū.
        let h = 1e-4;
        let up = pb.solve(SymMat2::iso(k + h), 1, Enrichment::Single).unwrap();
        let um = pb.solve(SymMat2::iso(k - h), 1, Enrichment::Single).unwrap();
        let scale = inf_norm(&d1.u_bar);
        for i in 0..up.u_bar.len() {
            let fd = (up.u_bar[i] - um.u_bar[i]) / (2.0 * h);
            assert!((fd - d1.u_bar[i]).abs() < 1e-6 * scale);
        }
        let d2 = op.derivative(2, &d1).unwrap();
        let scale = inf_norm(&d2.u_bar);
        for i in 0..up.u_bar.len() {
            let fd = (up.u_bar[i] - 2.0 * base.u_bar[i] + um.u_bar[i]) / (h * h);
            assert!((fd - d2.u_bar[i]).abs() < 1e-3 * scale);
        }
    }

    #[test]
    fn degenerate_family_is_flat_on_dc() {
        let nm = build_domain(DomainSpec::default(), 0.5, 2).unwrap();
        let fam = solve_degenerate_kbar0(&nm, 1).unwrap();
        let (u, uc) = fam.member(0.7);
        for v in nm.coarse.closure_vertices(Region::Dc) {
            assert!((u[v] - 0.7).abs() < 1e-14);
        }
        for v in nm.coarse.tagged_vertices(BoundaryTag::Gamma) {
            assert_eq!(u[v], nm.coarse.vertices()[v][0]);
        }
        assert!(uc.iter().all(|&x| x == 0.7));
        // Fine energy of a constant vanishes.
        let f = field("checkerboard", &[]);
        let a = assemble_acheck(&nm.fine, &f, 0.5).unwrap();
        assert!(a.form(&uc, &uc).abs() < 1e-12);
    }

    #[test]
    fn non_spd_kbar_is_singular() {
        let f = field("constant", &[("c", 1.0)]);
        let pb = small_problem(&f, 0.5);
        assert!(matches!(pb.solve(SymMat2::iso(-1.0), 1, Enrichment::Single), Err(Error::SingularKkt(_))));
    }

    #[test]
    fn csv_dump_lists_three_fields() {
        let f = field("constant", &[("c", 1.0)]);
        let pb = small_problem(&f, 0.5);
        let sol = pb.solve(SymMat2::iso(1.0), 1, Enrichment::Single).unwrap();
        let csv = solution_csv(&pb, &sol);
        assert!(csv.starts_with("node,x,y,value,field\n"));
        for tag in ["u_bar", "u_check", "psi"] {
            assert!(csv.lines().any(|l| l.ends_with(tag)));
        }
    }
}
