//! P1 assembly of the coupled bilinear forms and the `H¹(D_c)` projections.
//!
//! All matrices are indexed by mesh vertices. Boundary data and dof selection
//! are applied afterwards through [`FeSpace`], so no matrix depends on the
//! Dirichlet trace.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{BoundaryTag, Element, Mesh, NestedMeshes, Region};
use crate::tensor::{SymMat2, Vec2};

/// Dof masks of a P1 space on one mesh.
#[derive(Debug, Clone)]
pub struct FeSpace {
    n: usize,
    free: Vec<usize>,
    dirichlet: Vec<usize>,
    coupling: Vec<usize>,
}

impl FeSpace {
    /// `V_H`: Dirichlet dofs on `Γ`, multiplier dofs `W_H` on the closure of `D_c`.
    pub fn coarse(mesh: &Mesh) -> Self {
        let dirichlet = mesh.tagged_vertices(BoundaryTag::Gamma);
        let mut is_dir = vec![false; mesh.n_vertices()];
        dirichlet.iter().for_each(|&v| is_dir[v] = true);
        let free = (0..mesh.n_vertices()).filter(|&v| !is_dir[v]).collect();
        Self { n: mesh.n_vertices(), free, dirichlet, coupling: mesh.closure_vertices(Region::Dc) }
    }

    /// `V_h`: no Dirichlet dofs, `W_h` on the closure of `D_c`.
    pub fn fine(mesh: &Mesh) -> Self {
        Self {
            n: mesh.n_vertices(),
            free: (0..mesh.n_vertices()).collect(),
            dirichlet: Vec::new(),
            coupling: mesh.closure_vertices(Region::Dc),
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    /// Unknown dofs (`V_H⁰` for the coarse space).
    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn dirichlet(&self) -> &[usize] {
        &self.dirichlet
    }

    /// Vertices of the closure of `D_c`, the multiplier dofs.
    pub fn coupling(&self) -> &[usize] {
        &self.coupling
    }

    /// Full vertex vector equal to `base` off the free dofs and `values` on them.
    pub fn scatter(&self, values: &[f64], base: &[f64]) -> Vec<f64> {
        let mut out = base.to_vec();
        for (k, &v) in self.free.iter().enumerate() {
            out[v] = values[k];
        }
        out
    }
}

/// Nodal interpolant of `f`.
pub fn interpolate(mesh: &Mesh, f: impl Fn(Vec2) -> f64) -> Vec<f64> {
    mesh.vertices().iter().map(|&p| f(p)).collect()
}

/// Lift of the Dirichlet data `x_j`: the trace on `Γ`, zero elsewhere.
pub fn dirichlet_lift(mesh: &Mesh, direction: usize) -> Vec<f64> {
    let mut g = vec![0.0; mesh.n_vertices()];
    for v in mesh.tagged_vertices(BoundaryTag::Gamma) {
        g[v] = mesh.vertices()[v][direction - 1];
    }
    g
}

/// `∫ K ∇u·∇v` with an elementwise constant tensor; `None` skips the element.
pub fn stiffness(mesh: &Mesh, coeff: impl Fn(usize, &Element) -> Option<SymMat2>) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.n_triangles());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let el = mesh.element(e);
        let Some(k) = coeff(e, &el) else { continue };
        for a in 0..3 {
            let kg = k.apply(el.grads[a]);
            for b in 0..3 {
                let v = el.area * (kg[0] * el.grads[b][0] + kg[1] * el.grads[b][1]);
                t.push((tri[a], tri[b], v));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), t)
}

/// Exact P1 mass matrix over the elements accepted by `keep`.
pub fn mass(mesh: &Mesh, keep: impl Fn(usize) -> bool) -> CsrMatrix {
    let mut t = Vec::with_capacity(9 * mesh.n_triangles());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        if !keep(e) {
            continue;
        }
        let area = mesh.element(e).area;
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { area / 6.0 } else { area / 12.0 };
                t.push((tri[a], tri[b], w));
            }
        }
    }
    CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), t)
}

/// Weight of the coarse energy: 1 on `D`, 1/2 on `D_c`.
fn coarse_weight(r: Region) -> Option<f64> {
    match r {
        Region::D => Some(1.0),
        Region::Dc => Some(0.5),
        Region::Df => None,
    }
}

/// Weight of the fine energy: 1/2 on `D_c`, 1 on `D_f`.
fn fine_weight(r: Region) -> Option<f64> {
    match r {
        Region::D => None,
        Region::Dc => Some(0.5),
        Region::Df => Some(1.0),
    }
}

/// `Ā_k̄(u, v) = ∫_D k̄∇u·∇v + ½∫_{D_c} k̄∇u·∇v` on the coarse mesh.
pub fn assemble_abar(mesh: &Mesh, kbar: SymMat2) -> Result<CsrMatrix> {
    if !kbar.is_spd() {
        return Err(Error::NonSpdCoefficient(format!("kbar = {kbar:?}")));
    }
    let regions = mesh.regions();
    Ok(stiffness(mesh, |e, _| coarse_weight(regions[e]).map(|w| kbar.scale(w))))
}

/// The three matrices spanning `Ā_k̄` linearly in `(k̄11, k̄22, k̄12)`.
#[derive(Debug, Clone)]
pub struct AbarComponents {
    pub a11: CsrMatrix,
    pub a22: CsrMatrix,
    /// Symmetric off-diagonal part, `∫ w (∂1u ∂2v + ∂2u ∂1v)`.
    pub a12: CsrMatrix,
}

impl AbarComponents {
    pub fn new(mesh: &Mesh) -> Self {
        let regions = mesh.regions();
        let part = |k: SymMat2| stiffness(mesh, |e, _| coarse_weight(regions[e]).map(|w| k.scale(w)));
        Self {
            a11: part(SymMat2::diag(1.0, 0.0)),
            a22: part(SymMat2::diag(0.0, 1.0)),
            a12: part(SymMat2::new(0.0, 1.0, 0.0)),
        }
    }

    /// `Ā_1`, the form with unit coefficient.
    pub fn unit(&self) -> CsrMatrix {
        self.combine(SymMat2::iso(1.0))
    }

    pub fn combine(&self, k: SymMat2) -> CsrMatrix {
        let t = self
            .a11
            .iter()
            .map(|(i, j, v)| (i, j, k.xx * v))
            .chain(self.a22.iter().map(|(i, j, v)| (i, j, k.yy * v)))
            .chain(self.a12.iter().map(|(i, j, v)| (i, j, k.xy * v)))
            .collect();
        CsrMatrix::from_triplets(self.a11.nrows(), self.a11.ncols(), t)
    }
}

/// `Ǎ_{k_ε}(u, v) = ½∫_{D_c} k_ε∇u·∇v + ∫_{D_f} k_ε∇u·∇v` on the fine mesh,
/// with `k_ε` sampled at element centroids.
pub fn assemble_acheck(mesh: &Mesh, field: &CoefficientField, eps: f64) -> Result<CsrMatrix> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let regions = mesh.regions();
    Ok(stiffness(mesh, |e, el| fine_weight(regions[e]).map(|w| field.sample_k_eps(eps, &[el.centroid])[0].scale(w))))
}

/// `C(u, φ) = ∫_{D_c} ∇u·∇φ + uφ` on a single mesh.
pub fn assemble_c_on(mesh: &Mesh) -> Result<CsrMatrix> {
    let regions = mesh.regions();
    if !regions.contains(&Region::Dc) {
        return Err(Error::MismatchedRegion("mesh has no coupling-zone elements".into()));
    }
    let k = stiffness(mesh, |e, _| (regions[e] == Region::Dc).then_some(SymMat2::iso(1.0)));
    let m = mass(mesh, |e| regions[e] == Region::Dc);
    let t = k.iter().chain(m.iter()).collect();
    Ok(CsrMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), t))
}

/// Exact interpolation of coarse P1 functions at fine vertices of the closure
/// of `D_c` (fine vertices × coarse vertices). Rows of other fine vertices are empty.
pub fn prolongation(nm: &NestedMeshes) -> CsrMatrix {
    nested_interpolation(&nm.coarse, &nm.fine, nm.ratio, Region::Dc)
}

/// Interpolation from `from` to `to`, where `to` has `ratio` times the grid
/// density of `from`. Rows cover the vertices of `to` in the closure of
/// `region`; the containing triangle is found with integer lattice arithmetic.
pub fn nested_interpolation(from: &Mesh, to: &Mesh, ratio: usize, region: Region) -> CsrMatrix {
    let m = ratio as i64;
    let mf = m as f64;
    let candidates = |x: i64| {
        let c = x.div_euclid(m);
        if x.rem_euclid(m) == 0 {
            vec![c, c - 1]
        } else {
            vec![c]
        }
    };
    let mut t = Vec::new();
    for v in to.closure_vertices(region) {
        let r = to.lattice()[v];
        let mut found = None;
        'search: for cy in candidates(r[1]) {
            for cx in candidates(r[0]) {
                let Some([lower, upper]) = from.cell_triangles([cx, cy]) else { continue };
                if from.regions()[lower] != region {
                    continue;
                }
                let s = (r[0] - cx * m) as f64 / mf;
                let q = (r[1] - cy * m) as f64 / mf;
                found = Some(if s >= q {
                    (from.triangles()[lower], [1.0 - s, s - q, q])
                } else {
                    (from.triangles()[upper], [1.0 - q, s, q - s])
                });
                break 'search;
            }
        }
        let (tri, w) = found.expect("target vertex outside the source region");
        for k in 0..3 {
            if w[k] != 0.0 {
                t.push((v, tri[k], w[k]));
            }
        }
    }
    CsrMatrix::from_triplets(to.n_vertices(), from.n_vertices(), t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Coarse,
    Fine,
}

/// `C` between the P1 spaces of two levels. The cross blocks integrate coarse
/// basis functions on their fine children exactly, through [`prolongation`].
pub fn assemble_c(nm: &NestedMeshes, row: Level, col: Level) -> Result<CsrMatrix> {
    match (row, col) {
        (Level::Coarse, Level::Coarse) => assemble_c_on(&nm.coarse),
        (Level::Fine, Level::Fine) => assemble_c_on(&nm.fine),
        (Level::Coarse, Level::Fine) => {
            let p = prolongation(nm);
            Ok(p.transpose().matmul(&assemble_c_on(&nm.fine)?))
        }
        (Level::Fine, Level::Coarse) => Ok(assemble_c(nm, Level::Coarse, Level::Fine)?.transpose()),
    }
}

/// Result of an `H¹(D_c)` projection onto `W_H` plus optional enrichment.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Coarse nodal values, zero outside the closure of `D_c`.
    pub coarse: Vec<f64>,
    /// One coefficient per enrichment function.
    pub enrichment: Vec<f64>,
}

/// `Π_H` (no enrichment) or `Π_H^enrich` with a factored Gram matrix.
pub struct WhProjector {
    c_fine: CsrMatrix,
    p: CsrMatrix,
    coupling: Vec<usize>,
    n_coarse: usize,
    psi: Vec<Vec<f64>>,
    gram: Mat<f64>,
    llt: faer::linalg::solvers::Llt<f64>,
}

impl WhProjector {
    pub fn new(nm: &NestedMeshes, enrichment: &[Vec<f64>]) -> Result<Self> {
        let c_fine = assemble_c_on(&nm.fine)?;
        let p = prolongation(nm);
        let coupling = nm.coarse.closure_vertices(Region::Dc);
        let c_coarse = p.transpose().matmul(&c_fine.matmul(&p)).select(&coupling, &coupling);
        let nw = coupling.len();
        let ne = enrichment.len();
        let mut gram = Mat::zeros(nw + ne, nw + ne);
        for (i, j, v) in c_coarse.iter() {
            gram[(i, j)] += v;
        }
        for (a, psi) in enrichment.iter().enumerate() {
            let cpsi = c_fine.matvec(psi);
            let pc = p.matvec_t(&cpsi);
            for (k, &v) in coupling.iter().enumerate() {
                gram[(k, nw + a)] = pc[v];
                gram[(nw + a, k)] = pc[v];
            }
            for (b, other) in enrichment.iter().enumerate() {
                gram[(nw + b, nw + a)] = crate::linalg::dotv(other, &cpsi);
            }
        }
        let llt = gram.llt(Side::Lower).map_err(|e| Error::SingularGram(format!("{e:?}")))?;
        Ok(Self { c_fine, p, coupling, n_coarse: nm.coarse.n_vertices(), psi: enrichment.to_vec(), gram, llt })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &Mat<f64> {
        &self.gram
    }

    /// Projection of a fine nodal vector (only its `D̄_c` values matter).
    pub fn project(&self, v: &[f64]) -> Projection {
        let nw = self.coupling.len();
        let cv = self.c_fine.matvec(v);
        let pc = self.p.matvec_t(&cv);
        let mut rhs = Mat::zeros(self.dim(), 1);
        for (k, &c) in self.coupling.iter().enumerate() {
            rhs[(k, 0)] = pc[c];
        }
        for (a, psi) in self.psi.iter().enumerate() {
            rhs[(nw + a, 0)] = crate::linalg::dotv(psi, &cv);
        }
        let x = self.llt.solve(&rhs);
        let mut coarse = vec![0.0; self.n_coarse];
        for (k, &c) in self.coupling.iter().enumerate() {
            coarse[c] = x[(k, 0)];
        }
        Projection { coarse, enrichment: (0..self.psi.len()).map(|a| x[(nw + a, 0)]).collect() }
    }

    /// Fine nodal representation of a projection.
    pub fn evaluate(&self, proj: &Projection) -> Vec<f64> {
        let mut out = self.p.matvec(&proj.coarse);
        for (c, psi) in proj.enrichment.iter().zip(&self.psi) {
            out.iter_mut().zip(psi).for_each(|(o, p)| *o += c * p);
        }
        out
    }

    /// `C(u, v)` on fine nodal vectors.
    pub fn c_form(&self, u: &[f64], v: &[f64]) -> f64 {
        self.c_fine.form(u, v)
    }
}

/// Coordinate text dump, one `row col value` line per stored entry.
pub fn dump_coordinate(a: &CsrMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.iter() {
        let _ = writeln!(s, "{i} {j} {v:e}");
    }
    s
}
