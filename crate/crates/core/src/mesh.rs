//! Nested structured triangulations of the three-zone square domain.
//!
//! `Ω = (-L, L)²` is split into the outer frame `D`, the coupling annulus
//! `D_c = (-L_c, L_c)² \ [-L_f, L_f]²` and the fine core `D_f = (-L_f, L_f)²`.
//! The coarse mesh covers `D ∪ D_c`, the fine mesh covers `D_c ∪ D_f`. Both are
//! uniform grids whose squares are cut along the `(i, j)-(i+1, j+1)` diagonal,
//! so the fine mesh refines the coarse one exactly inside `D_c`.
//!
//! Vertices carry integer lattice coordinates relative to the origin; every
//! geometric predicate (region, boundary tag, point location) is evaluated on
//! those integers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Vec2;

/// Half-widths of the three nested squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub l: f64,
    pub l_c: f64,
    pub l_f: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self { l: 4.0, l_c: 2.0, l_f: 1.0 }
    }
}

impl DomainSpec {
    pub fn new(l: f64, l_c: f64, l_f: f64) -> Result<Self> {
        let spec = Self { l, l_c, l_f };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.l, self.l_c, self.l_f].iter().all(|v| v.is_finite())
            && 0.0 < self.l_f
            && self.l_f < self.l_c
            && self.l_c < self.l;
        if ok {
            Ok(())
        } else {
            Err(Error::DegenerateSpec { l: self.l, l_c: self.l_c, l_f: self.l_f })
        }
    }

    pub fn area_d(&self) -> f64 {
        4.0 * (self.l * self.l - self.l_c * self.l_c)
    }

    pub fn area_dc(&self) -> f64 {
        4.0 * (self.l_c * self.l_c - self.l_f * self.l_f)
    }

    pub fn area_df(&self) -> f64 {
        4.0 * self.l_f * self.l_f
    }

    pub fn region_area(&self, region: Region) -> f64 {
        match region {
            Region::D => self.area_d(),
            Region::Dc => self.area_dc(),
            Region::Df => self.area_df(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    D,
    Dc,
    Df,
}

impl Region {
    pub fn name(&self) -> &'static str {
        match self {
            Region::D => "D",
            Region::Dc => "Dc",
            Region::Df => "Df",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Outer boundary of `D`, carrying the Dirichlet data.
    Gamma,
    /// `∂(D_c ∪ D_f)`.
    GammaC,
    /// `∂D_f`.
    GammaF,
    Interior,
}

impl BoundaryTag {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryTag::Gamma => "Gamma",
            BoundaryTag::GammaC => "GammaC",
            BoundaryTag::GammaF => "GammaF",
            BoundaryTag::Interior => "interior",
        }
    }
}

/// Geometry of one P1 element.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub area: f64,
    /// Gradients of the three barycentric shape functions.
    pub grads: [Vec2; 3],
    pub centroid: Vec2,
}

impl Element {
    pub fn new(p: [Vec2; 3]) -> Self {
        let d1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let d2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let det = d1[0] * d2[1] - d1[1] * d2[0];
        let g1 = [d2[1] / det, -d2[0] / det];
        let g2 = [-d1[1] / det, d1[0] / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Element {
            area: 0.5 * det.abs(),
            grads: [g0, g1, g2],
            centroid: [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0],
        }
    }

    /// Gradient of the P1 function with nodal values `u`.
    pub fn gradient(&self, u: [f64; 3]) -> Vec2 {
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += u[k] * self.grads[k][0];
            g[1] += u[k] * self.grads[k][1];
        }
        g
    }
}

/// Structured triangulation with region and boundary tags.
#[derive(Debug, Clone)]
pub struct Mesh {
    spacing: f64,
    vertices: Vec<Vec2>,
    lattice: Vec<[i64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
    edge_tags: BTreeMap<(usize, usize), BoundaryTag>,
    vertex_at: HashMap<[i64; 2], usize>,
    cell_triangles: HashMap<[i64; 2], [usize; 2]>,
}

impl Mesh {
    /// Grid of spacing `spacing` over `[-half, half]²` (in lattice units),
    /// keeping the cells whose region passes `keep`.
    fn structured(spacing: f64, half: i64, units: &ZoneUnits, keep: impl Fn(Region) -> bool) -> Mesh {
        let mut cells = Vec::new();
        for j in -half..half {
            for i in -half..half {
                let region = units.cell_region(i, j);
                if keep(region) {
                    cells.push(([i, j], region));
                }
            }
        }

        let mut used = vec![false; ((2 * half + 1) * (2 * half + 1)) as usize];
        let flat = |p: [i64; 2]| ((p[1] + half) * (2 * half + 1) + (p[0] + half)) as usize;
        for &([i, j], _) in &cells {
            for p in [[i, j], [i + 1, j], [i, j + 1], [i + 1, j + 1]] {
                used[flat(p)] = true;
            }
        }
        let mut vertices = Vec::new();
        let mut lattice = Vec::new();
        let mut vertex_at = HashMap::new();
        for j in -half..=half {
            for i in -half..=half {
                if used[flat([i, j])] {
                    vertex_at.insert([i, j], vertices.len());
                    vertices.push([i as f64 * spacing, j as f64 * spacing]);
                    lattice.push([i, j]);
                }
            }
        }

        let mut triangles = Vec::with_capacity(2 * cells.len());
        let mut regions = Vec::with_capacity(2 * cells.len());
        let mut cell_triangles = HashMap::with_capacity(cells.len());
        for &([i, j], region) in &cells {
            let v = |a: i64, b: i64| vertex_at[&[a, b]];
            let (v00, v10, v01, v11) = (v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1));
            let t = triangles.len();
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            regions.push(region);
            regions.push(region);
            cell_triangles.insert([i, j], [t, t + 1]);
        }

        let mut edge_tags = BTreeMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                edge_tags.entry(key).or_insert_with(|| units.edge_tag(lattice[a], lattice[b]));
            }
        }

        Mesh { spacing, vertices, lattice, triangles, regions, edge_tags, vertex_at, cell_triangles }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    /// Integer lattice coordinates (units of `spacing`) of each vertex.
    pub fn lattice(&self) -> &[[i64; 2]] {
        &self.lattice
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn edge_tags(&self) -> &BTreeMap<(usize, usize), BoundaryTag> {
        &self.edge_tags
    }

    pub fn vertex_at(&self, lattice: [i64; 2]) -> Option<usize> {
        self.vertex_at.get(&lattice).copied()
    }

    /// The two triangles (lower, upper) of the grid cell with lower-left
    /// corner `cell`, if that cell is meshed.
    pub fn cell_triangles(&self, cell: [i64; 2]) -> Option<[usize; 2]> {
        self.cell_triangles.get(&cell).copied()
    }

    pub fn element(&self, t: usize) -> Element {
        let [a, b, c] = self.triangles[t];
        Element::new([self.vertices[a], self.vertices[b], self.vertices[c]])
    }

    pub fn region_area(&self, region: Region) -> f64 {
        (0..self.n_triangles()).filter(|&t| self.regions[t] == region).map(|t| self.element(t).area).sum()
    }

    /// Sorted vertices of the closure of `region`.
    pub fn closure_vertices(&self, region: Region) -> Vec<usize> {
        let mut mark = vec![false; self.n_vertices()];
        for (tri, &r) in self.triangles.iter().zip(&self.regions) {
            if r == region {
                tri.iter().for_each(|&v| mark[v] = true);
            }
        }
        (0..self.n_vertices()).filter(|&v| mark[v]).collect()
    }

    /// Sorted vertices lying on edges with the given tag.
    pub fn tagged_vertices(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut mark = vec![false; self.n_vertices()];
        for (&(a, b), &t) in &self.edge_tags {
            if t == tag {
                mark[a] = true;
                mark[b] = true;
            }
        }
        (0..self.n_vertices()).filter(|&v| mark[v]).collect()
    }

    /// Plain-text dump: vertex table, triangle table, tagged edge table.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vertices {}", self.n_vertices());
        for (i, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {}", p[0], p[1]);
        }
        let _ = writeln!(s, "# triangles {}", self.n_triangles());
        for (tri, r) in self.triangles.iter().zip(&self.regions) {
            let _ = writeln!(s, "{} {} {} {}", tri[0], tri[1], tri[2], r.name());
        }
        let boundary: Vec<_> = self.edge_tags.iter().filter(|(_, &t)| t != BoundaryTag::Interior).collect();
        let _ = writeln!(s, "# edges {}", boundary.len());
        for (&(a, b), t) in boundary {
            let _ = writeln!(s, "{a} {b} {}", t.name());
        }
        s
    }
}

/// Half-widths of the three squares in lattice units of one mesh.
#[derive(Debug, Clone, Copy)]
struct ZoneUnits {
    l: i64,
    l_c: i64,
    l_f: i64,
}

impl ZoneUnits {
    fn cell_region(&self, i: i64, j: i64) -> Region {
        // Doubled cell-centre coordinates stay integral.
        let r = (2 * i + 1).abs().max((2 * j + 1).abs());
        if r < 2 * self.l_f {
            Region::Df
        } else if r < 2 * self.l_c {
            Region::Dc
        } else {
            Region::D
        }
    }

    fn edge_tag(&self, a: [i64; 2], b: [i64; 2]) -> BoundaryTag {
        let on_square = |w: i64| {
            (0..2).any(|axis| a[axis] == b[axis] && a[axis].abs() == w)
                && a[0].abs().max(a[1].abs()) == w
                && b[0].abs().max(b[1].abs()) == w
        };
        if on_square(self.l) {
            BoundaryTag::Gamma
        } else if on_square(self.l_c) {
            BoundaryTag::GammaC
        } else if on_square(self.l_f) {
            BoundaryTag::GammaF
        } else {
            BoundaryTag::Interior
        }
    }
}

/// Fine triangles covering each coarse triangle of `D_c`.
#[derive(Debug, Clone)]
pub struct SubmeshMap {
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
}

impl SubmeshMap {
    /// Children of a coarse triangle (empty outside `D_c`).
    pub fn children(&self, coarse_triangle: usize) -> &[usize] {
        &self.children[coarse_triangle]
    }

    /// Coarse parent of a fine triangle (`None` in `D_f`).
    pub fn parent(&self, fine_triangle: usize) -> Option<usize> {
        self.parent[fine_triangle]
    }
}

/// The coarse and fine meshes together with their nesting data.
#[derive(Debug, Clone)]
pub struct NestedMeshes {
    pub spec: DomainSpec,
    pub coarse: Mesh,
    pub fine: Mesh,
    pub submesh: SubmeshMap,
    /// `H / h`.
    pub ratio: usize,
}

impl NestedMeshes {
    pub fn coarse_size(&self) -> f64 {
        self.coarse.spacing
    }

    pub fn fine_size(&self) -> f64 {
        self.fine.spacing
    }
}

fn lattice_units(length: f64, h: f64, what: &'static str) -> Result<i64> {
    let n = (length / h).round();
    if n < 1.0 || (n * h - length).abs() > 1e-9 * length.max(h) {
        return Err(Error::NonDivisibleGeometry { h, what, length });
    }
    Ok(n as i64)
}

/// Builds the coarse mesh of `D ∪ D_c` with size `coarse_h` and the fine mesh
/// of `D_c ∪ D_f` with size `coarse_h / refine_ratio`.
pub fn build_domain(spec: DomainSpec, coarse_h: f64, refine_ratio: usize) -> Result<NestedMeshes> {
    spec.validate()?;
    if !(coarse_h.is_finite() && coarse_h > 0.0) {
        return Err(Error::InvalidParameter(format!("coarse mesh size must be positive, got {coarse_h}")));
    }
    if refine_ratio < 2 {
        return Err(Error::InvalidParameter(format!("refine ratio must be >= 2, got {refine_ratio}")));
    }
    // The three widths below pin every interface to a coarse grid line.
    let outer = lattice_units(spec.l - spec.l_c, coarse_h, "L - L_c")?;
    let ring = lattice_units(spec.l_c - spec.l_f, coarse_h, "L_c - L_f")?;
    let core = lattice_units(2.0 * spec.l_f, coarse_h, "2 L_f")?;
    if core % 2 != 0 {
        // Centred grid lines need L_f itself to be a multiple of H.
        return Err(Error::NonDivisibleGeometry { h: coarse_h, what: "L_f", length: spec.l_f });
    }
    let l_f = core / 2;
    let cu = ZoneUnits { l_f, l_c: l_f + ring, l: l_f + ring + outer };
    let m = refine_ratio as i64;
    let fu = ZoneUnits { l: cu.l * m, l_c: cu.l_c * m, l_f: cu.l_f * m };
    let fine_h = coarse_h / refine_ratio as f64;

    let coarse = Mesh::structured(coarse_h, cu.l, &cu, |r| r != Region::Df);
    let fine = Mesh::structured(fine_h, fu.l_c, &fu, |r| r != Region::D);

    let mut children = vec![Vec::new(); coarse.n_triangles()];
    let mut parent = vec![None; fine.n_triangles()];
    for t in 0..fine.n_triangles() {
        if fine.regions[t] != Region::Dc {
            continue;
        }
        // Three times the centroid, in fine lattice units.
        let tri = fine.triangles[t];
        let c3 = [0, 1].map(|ax| tri.iter().map(|&v| fine.lattice[v][ax]).sum::<i64>());
        let cell = [c3[0].div_euclid(3 * m), c3[1].div_euclid(3 * m)];
        let local = [c3[0] - 3 * m * cell[0], c3[1] - 3 * m * cell[1]];
        let [lower, upper] = coarse.cell_triangles(cell).expect("fine triangle of D_c outside the coarse mesh");
        let p = if local[0] >= local[1] { lower } else { upper };
        children[p].push(t);
        parent[t] = Some(p);
    }

    Ok(NestedMeshes { spec, coarse, fine, submesh: SubmeshMap { children, parent }, ratio: refine_ratio })
}

/// Per-vertex weights `w` with `wᵀφ = ∫ (e·n) φ` over the edges tagged `tag`
/// for any P1 function `φ`, where `n` is the unit normal pointing out of `D_c`.
pub fn boundary_integral_weights(mesh: &Mesh, tag: BoundaryTag, direction: Vec2) -> Result<Vec<f64>> {
    // Sign turning the outward normal of the square into the normal out of D_c.
    let sign = match tag {
        BoundaryTag::GammaC => 1.0,
        BoundaryTag::GammaF => -1.0,
        other => return Err(Error::UnknownTag(other.name().to_string())),
    };
    let mut w = vec![0.0; mesh.n_vertices()];
    for (&(a, b), &t) in &mesh.edge_tags {
        if t != tag {
            continue;
        }
        let (pa, pb) = (mesh.lattice[a], mesh.lattice[b]);
        let normal = if pa[0] == pb[0] { [pa[0].signum() as f64, 0.0] } else { [0.0, pa[1].signum() as f64] };
        let length = mesh.spacing * ((pa[0] - pb[0]).abs() + (pa[1] - pb[1]).abs()) as f64;
        let flux = sign * (direction[0] * normal[0] + direction[1] * normal[1]) * length * 0.5;
        w[a] += flux;
        w[b] += flux;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_meshes(h: f64, m: usize) -> NestedMeshes {
        build_domain(DomainSpec::default(), h, m).unwrap()
    }

    #[test]
    fn region_areas_match_analytic() {
        let nm = default_meshes(0.5, 5);
        let total_coarse: f64 = (0..nm.coarse.n_triangles()).map(|t| nm.coarse.element(t).area).sum();
        let total_fine: f64 = (0..nm.fine.n_triangles()).map(|t| nm.fine.element(t).area).sum();
        assert!((total_coarse - 60.0).abs() < 1e-12 * 60.0);
        assert!((total_fine - 16.0).abs() < 1e-12 * 16.0);
        for r in [Region::D, Region::Dc] {
            let a = nm.spec.region_area(r);
            assert!((nm.coarse.region_area(r) - a).abs() <= 1e-12 * a);
        }
        for r in [Region::Dc, Region::Df] {
            let a = nm.spec.region_area(r);
            assert!((nm.fine.region_area(r) - a).abs() <= 1e-12 * a);
        }
        assert_eq!(nm.fine.spacing(), 0.1);
    }

    #[test]
    fn every_coarse_coupling_triangle_has_m_squared_children() {
        let nm = build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, 2).unwrap();
        for t in 0..nm.coarse.n_triangles() {
            let n = nm.submesh.children(t).len();
            match nm.coarse.regions()[t] {
                Region::Dc => assert_eq!(n, 4),
                _ => assert_eq!(n, 0),
            }
        }
    }

    #[test]
    fn children_tile_their_parent() {
        let nm = default_meshes(0.5, 3);
        for t in 0..nm.coarse.n_triangles() {
            if nm.coarse.regions()[t] != Region::Dc {
                continue;
            }
            let parent = nm.coarse.element(t);
            let sum: f64 = nm.submesh.children(t).iter().map(|&c| nm.fine.element(c).area).sum();
            assert!((sum - parent.area).abs() < 1e-14);
            // Children vertices lie inside the parent: barycentric coordinates >= 0.
            let [a, b, c] = nm.coarse.triangles()[t].map(|v| nm.coarse.vertices()[v]);
            for &ch in nm.submesh.children(t) {
                for &v in &nm.fine.triangles()[ch] {
                    let p = nm.fine.vertices()[v];
                    let bary = barycentric([a, b, c], p);
                    assert!(bary.iter().all(|&l| l > -1e-12), "{bary:?}");
                }
            }
        }
    }

    fn barycentric(t: [Vec2; 3], p: Vec2) -> [f64; 3] {
        let e = Element::new(t);
        let l1 = e.grads[1][0] * (p[0] - t[0][0]) + e.grads[1][1] * (p[1] - t[0][1]);
        let l2 = e.grads[2][0] * (p[0] - t[0][0]) + e.grads[2][1] * (p[1] - t[0][1]);
        [1.0 - l1 - l2, l1, l2]
    }

    #[test]
    fn non_dividing_size_is_rejected() {
        let err = build_domain(DomainSpec::default(), 0.3, 5).unwrap_err();
        assert!(matches!(err, Error::NonDivisibleGeometry { .. }));
    }

    #[test]
    fn degenerate_spec_is_rejected() {
        assert!(matches!(DomainSpec::new(4.0, 1.0, 1.0), Err(Error::DegenerateSpec { .. })));
        assert!(matches!(DomainSpec::new(2.0, 2.0, 1.0), Err(Error::DegenerateSpec { .. })));
        assert!(matches!(
            build_domain(DomainSpec { l: 4.0, l_c: 5.0, l_f: 1.0 }, 0.5, 2),
            Err(Error::DegenerateSpec { .. })
        ));
    }

    #[test]
    fn meshes_are_conforming() {
        let nm = default_meshes(0.5, 4);
        for mesh in [&nm.coarse, &nm.fine] {
            let mut count: HashMap<(usize, usize), usize> = HashMap::new();
            for tri in mesh.triangles() {
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    *count.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            for t in 0..mesh.n_triangles() {
                let [a, b, c] = mesh.triangles()[t].map(|v| mesh.vertices()[v]);
                let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                assert!(det > 0.0, "triangle {t} is not counter-clockwise");
            }
            for (edge, n) in count {
                let tag = mesh.edge_tags()[&edge];
                assert!(n == 1 || n == 2);
                // Boundary edges of the mesh are tagged.
                if n == 1 {
                    assert_ne!(tag, BoundaryTag::Interior);
                }
            }
        }
    }

    #[test]
    fn interface_edge_counts() {
        let nm = default_meshes(0.5, 4);
        let count = |m: &Mesh, t| m.edge_tags().values().filter(|&&x| x == t).count();
        // Perimeter / spacing.
        assert_eq!(count(&nm.coarse, BoundaryTag::Gamma), 64);
        assert_eq!(count(&nm.coarse, BoundaryTag::GammaC), 32);
        assert_eq!(count(&nm.coarse, BoundaryTag::GammaF), 16);
        assert_eq!(count(&nm.fine, BoundaryTag::GammaC), 128);
        assert_eq!(count(&nm.fine, BoundaryTag::GammaF), 64);
        assert_eq!(count(&nm.fine, BoundaryTag::Gamma), 0);
        // Coarse and fine vertex positions coincide along Γ_c at coarse nodes.
        for v in nm.coarse.tagged_vertices(BoundaryTag::GammaC) {
            let lat = nm.coarse.lattice()[v];
            let f = nm.fine.vertex_at([lat[0] * 4, lat[1] * 4]).unwrap();
            assert_eq!(nm.fine.vertices()[f], nm.coarse.vertices()[v]);
        }
    }

    #[test]
    fn every_triangle_lies_in_one_region() {
        let nm = default_meshes(0.5, 2);
        let spec = nm.spec;
        for mesh in [&nm.coarse, &nm.fine] {
            for t in 0..mesh.n_triangles() {
                let r = mesh.regions()[t];
                for &v in &mesh.triangles()[t] {
                    let p = mesh.vertices()[v];
                    let n = p[0].abs().max(p[1].abs());
                    match r {
                        Region::Df => assert!(n <= spec.l_f + 1e-12),
                        Region::Dc => assert!(n >= spec.l_f - 1e-12 && n <= spec.l_c + 1e-12),
                        Region::D => assert!(n >= spec.l_c - 1e-12),
                    }
                }
            }
        }
    }

    #[test]
    fn linear_flux_through_gamma_c() {
        let nm = default_meshes(0.5, 3);
        let w = boundary_integral_weights(&nm.fine, BoundaryTag::GammaC, [1.0, 0.0]).unwrap();
        let x1: Vec<f64> = nm.fine.vertices().iter().map(|p| p[0]).collect();
        let flux: f64 = w.iter().zip(&x1).map(|(a, b)| a * b).sum();
        // ∫_{Γc} x₁ n₁ = |(-L_c, L_c)²|
        assert!((flux - 16.0).abs() < 1e-12);
        // Normal out of D_c on Γ_f points into D_f, so the same integral is -|D_f|.
        let w = boundary_integral_weights(&nm.fine, BoundaryTag::GammaF, [1.0, 0.0]).unwrap();
        let flux: f64 = w.iter().zip(&x1).map(|(a, b)| a * b).sum();
        assert!((flux + 4.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_not_a_flux_boundary() {
        let nm = default_meshes(0.5, 2);
        assert!(matches!(
            boundary_integral_weights(&nm.coarse, BoundaryTag::Gamma, [1.0, 0.0]),
            Err(Error::UnknownTag(_))
        ));
    }

    #[test]
    fn dump_has_three_tables() {
        let nm = build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, 2).unwrap();
        let d = nm.coarse.dump();
        assert!(d.starts_with(&format!("# vertices {}\n", nm.coarse.n_vertices())));
        assert!(d.contains(&format!("# triangles {}\n", nm.coarse.n_triangles())));
        assert!(d.contains("GammaC"));
    }

    proptest! {
        #[test]
        fn constant_flux_vanishes(nf in 1i64..4, nc in 1i64..4, no in 1i64..3, m in 2usize..4, dir in 0.0..std::f64::consts::TAU) {
            let h = 0.25;
            let l_f = nf as f64 * h;
            let spec = DomainSpec::new(l_f + (nc + no) as f64 * h, l_f + nc as f64 * h, l_f).unwrap();
            let nm = build_domain(spec, h, m).unwrap();
            let e = [dir.cos(), dir.sin()];
            for mesh in [&nm.coarse, &nm.fine] {
                for tag in [BoundaryTag::GammaC, BoundaryTag::GammaF] {
                    let w = boundary_integral_weights(mesh, tag, e).unwrap();
                    prop_assert!(w.iter().sum::<f64>().abs() < 1e-13);
                }
            }
        }
    }
}
