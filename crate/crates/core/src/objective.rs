//! The misfit `J(k̄) = ∫_{D ∪ D_c} |∇ūᴴ − e_j|²`, its scalar derivatives and
//! the existence-condition checker.

use serde::Serialize;

use crate::arlequin::{solve_degenerate_kbar0, ArlequinProblem, CoupledSolution, Enrichment};
use crate::error::Result;
use crate::fem::{dirichlet_lift, AbarComponents, FeSpace};
use crate::linalg::SparseCholesky;
use crate::mesh::{Mesh, Region};
use crate::tensor::{dot, unit, SymMat2, Vec2};

/// One evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveEval {
    pub kbar: SymMat2,
    pub j: f64,
    pub dj: Option<f64>,
    pub d2j: Option<f64>,
    /// Largest relative block residual over the solves involved.
    pub residual: f64,
}

fn gradients<'a>(mesh: &'a Mesh, u: &'a [f64]) -> impl Iterator<Item = (usize, f64, Vec2)> + 'a {
    (0..mesh.n_triangles()).map(move |t| {
        let el = mesh.element(t);
        let tri = mesh.triangles()[t];
        (t, el.area, el.gradient([u[tri[0]], u[tri[1]], u[tri[2]]]))
    })
}

/// `∫_{regions} |∇u − e_j|²` on the coarse mesh, exact for P1 `u`.
pub fn misfit_on(mesh: &Mesh, u: &[f64], direction: usize, keep: impl Fn(Region) -> bool) -> f64 {
    let e = unit(direction);
    gradients(mesh, u)
        .filter(|(t, _, _)| keep(mesh.regions()[*t]))
        .map(|(_, a, g)| a * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2)))
        .sum()
}

/// `J` for a coarse nodal vector.
pub fn misfit(mesh: &Mesh, u: &[f64], direction: usize) -> f64 {
    misfit_on(mesh, u, direction, |r| r != Region::Df)
}

/// `∫ (∇u − e_j)·∇w` over `D ∪ D_c`.
fn misfit_cross(mesh: &Mesh, u: &[f64], w: &[f64], direction: usize) -> f64 {
    let e = unit(direction);
    gradients(mesh, u)
        .zip(gradients(mesh, w))
        .map(|((_, a, gu), (_, _, gw))| a * dot([gu[0] - e[0], gu[1] - e[1]], gw))
        .sum()
}

/// `∫ ∇u·∇w` over `D ∪ D_c`.
fn gradient_inner(mesh: &Mesh, u: &[f64], w: &[f64]) -> f64 {
    gradients(mesh, u).zip(gradients(mesh, w)).map(|((_, a, gu), (_, _, gw))| a * dot(gu, gw)).sum()
}

/// `J` as a function of `k̄` for a fixed discretization.
pub struct Objective<'p> {
    problem: &'p ArlequinProblem,
    direction: usize,
    enrichment: Enrichment,
}

impl<'p> Objective<'p> {
    pub fn new(problem: &'p ArlequinProblem, direction: usize, enrichment: Enrichment) -> Self {
        Self { problem, direction, enrichment }
    }

    pub fn problem(&self) -> &'p ArlequinProblem {
        self.problem
    }

    pub fn direction(&self) -> usize {
        self.direction
    }

    pub fn solve(&self, kbar: SymMat2) -> Result<CoupledSolution> {
        self.problem.solve(kbar, self.direction, self.enrichment)
    }

    pub fn eval(&self, kbar: SymMat2) -> Result<ObjectiveEval> {
        let sol = self.solve(kbar)?;
        let j = misfit(&self.problem.meshes().coarse, &sol.u_bar, self.direction);
        Ok(ObjectiveEval { kbar, j, dj: None, d2j: None, residual: sol.residuals.max() })
    }

    /// Scalar `k̄` with analytic derivatives up to `order` (0, 1 or 2).
    pub fn eval_scalar(&self, k: f64, order: usize) -> Result<ObjectiveEval> {
        let kbar = SymMat2::iso(k);
        let mesh = &self.problem.meshes().coarse;
        let op = self.problem.operator(kbar, self.direction, self.enrichment)?;
        let base = op.solve()?;
        let j = misfit(mesh, &base.u_bar, self.direction);
        let mut eval = ObjectiveEval { kbar, j, dj: None, d2j: None, residual: base.residuals.max() };
        if order >= 1 {
            let d1 = op.derivative(1, &base)?;
            eval.dj = Some(2.0 * misfit_cross(mesh, &base.u_bar, &d1.u_bar, self.direction));
            eval.residual = eval.residual.max(d1.residuals.max());
            if order >= 2 {
                let d2 = op.derivative(2, &d1)?;
                let grad_sq = gradient_inner(mesh, &d1.u_bar, &d1.u_bar);
                eval.d2j = Some(2.0 * misfit_cross(mesh, &base.u_bar, &d2.u_bar, self.direction) + 2.0 * grad_sq);
                eval.residual = eval.residual.max(d2.residuals.max());
            }
        }
        Ok(eval)
    }

    /// Residual vector `√|T| (∇ū − e_j)` over coarse triangles of `D ∪ D_c`,
    /// whose squared norm is `J`.
    pub fn residual_vector(&self, kbar: SymMat2) -> Result<(Vec<f64>, ObjectiveEval)> {
        let sol = self.solve(kbar)?;
        let mesh = &self.problem.meshes().coarse;
        let e = unit(self.direction);
        let mut r = Vec::with_capacity(2 * mesh.n_triangles());
        for (t, a, g) in gradients(mesh, &sol.u_bar) {
            if mesh.regions()[t] != Region::Df {
                let s = a.sqrt();
                r.push(s * (g[0] - e[0]));
                r.push(s * (g[1] - e[1]));
            }
        }
        let j = r.iter().map(|v| v * v).sum();
        Ok((r, ObjectiveEval { kbar, j, dj: None, d2j: None, residual: sol.residuals.max() }))
    }
}

/// `J` at `k̄`; see [`Objective::eval`].
pub fn eval_j(
    problem: &ArlequinProblem,
    kbar: SymMat2,
    direction: usize,
    enrichment: Enrichment,
) -> Result<ObjectiveEval> {
    Objective::new(problem, direction, enrichment).eval(kbar)
}

/// Analytic and central-difference derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub kbar: f64,
    pub dj: f64,
    pub dj_fd: f64,
    pub d2j: f64,
    pub d2j_fd: f64,
}

impl DerivativeCheck {
    pub fn dj_rel_error(&self) -> f64 {
        (self.dj - self.dj_fd).abs() / self.dj.abs().max(self.dj_fd.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn d2j_rel_error(&self) -> f64 {
        (self.d2j - self.d2j_fd).abs() / self.d2j.abs().max(self.d2j_fd.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Analytic derivatives against `(J(k+δ) − J(k−δ)) / 2δ` and
/// `(J(k+δ) − 2J(k) + J(k−δ)) / δ²`.
pub fn derivative_check(obj: &Objective<'_>, k: f64, delta: f64) -> Result<DerivativeCheck> {
    let c = obj.eval_scalar(k, 2)?;
    let p = obj.eval_scalar(k + delta, 0)?;
    let m = obj.eval_scalar(k - delta, 0)?;
    Ok(DerivativeCheck {
        kbar: k,
        dj: c.dj.unwrap(),
        dj_fd: (p.j - m.j) / (2.0 * delta),
        d2j: c.d2j.unwrap(),
        d2j_fd: (p.j - 2.0 * c.j + m.j) / (delta * delta),
    })
}

/// Existence-condition diagnostics. The comparison uses the best `J` found, not
/// the certified infimum, and is therefore labelled empirical.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub i_estimate: f64,
    /// `∫_{D ∪ D_c} |∇ũ₀ᴴ − e_j|²`.
    pub rhs1: f64,
    /// `Ĩ_{0,H}`.
    pub rhs2: f64,
    pub condition1: bool,
    pub condition2: bool,
    pub label: &'static str,
    /// Minimizing `λ` of the degenerate family.
    pub lambda_star: f64,
}

/// `ũ₀ᴴ`: unit-coefficient coarse solve with `x_j` on `Γ` and natural
/// conditions on the rest of the coarse boundary.
pub fn unit_coefficient_solution(mesh: &Mesh, direction: usize) -> Result<Vec<f64>> {
    let space = FeSpace::coarse(mesh);
    let a1 = AbarComponents::new(mesh).unit();
    let lift = dirichlet_lift(mesh, direction);
    let ag = a1.matvec(&lift);
    let rhs: Vec<f64> = space.free().iter().map(|&v| -ag[v]).collect();
    let x = SparseCholesky::new(&a1.select(space.free(), space.free()))?.solve(&rhs);
    Ok(space.scatter(&x, &lift))
}

/// Compares `best_j` with both right-hand sides.
pub fn check_conditions(problem: &ArlequinProblem, direction: usize, best_j: f64) -> Result<ConditionReport> {
    let nm = problem.meshes();
    let mesh = &nm.coarse;
    let u0 = unit_coefficient_solution(mesh, direction)?;
    let rhs1 = misfit(mesh, &u0, direction);

    let fam = solve_degenerate_kbar0(nm, direction)?;
    let in_d = |r: Region| r == Region::D;
    let a = misfit_on(mesh, &fam.u_a, direction, in_d);
    let grads = |u: &[f64]| -> Vec<Vec2> { gradients(mesh, u).map(|(_, _, g)| g).collect() };
    let (ga, gb) = (grads(&fam.u_a), grads(&fam.u_b));
    let e = unit(direction);
    let (mut b, mut c) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        if mesh.regions()[t] != Region::D {
            continue;
        }
        let area = mesh.element(t).area;
        b += area * dot(gb[t], [ga[t][0] - e[0], ga[t][1] - e[1]]);
        c += area * dot(gb[t], gb[t]);
    }
    let dc_area = mesh.region_area(Region::Dc);
    let rhs2 = dc_area + a - b * b / c;
    Ok(ConditionReport {
        i_estimate: best_j,
        rhs1,
        rhs2,
        condition1: best_j < rhs1,
        condition2: best_j < rhs2,
        label: "empirical",
        lambda_star: -b / c,
    })
}

/// One row of the convexity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub kbar: f64,
    pub j: f64,
    pub dj: f64,
    pub d2j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityProbe {
    pub rows: Vec<ProbeRow>,
    /// `dJ` changes sign somewhere in the window.
    pub dj_sign_change: bool,
    /// `d²J > 0` at the sample with the smallest `J`.
    pub convex_at_best: bool,
}

/// Samples `J`, `dJ`, `d²J` over `window` (scalar `k̄`).
pub fn convexity_probe(obj: &Objective<'_>, window: &[f64]) -> Result<ConvexityProbe> {
    let mut rows = Vec::with_capacity(window.len());
    for &k in window {
        let e = obj.eval_scalar(k, 2)?;
        rows.push(ProbeRow { kbar: k, j: e.j, dj: e.dj.unwrap(), d2j: e.d2j.unwrap() });
    }
    let dj_sign_change = rows.windows(2).any(|w| w[0].dj.signum() != w[1].dj.signum());
    let convex_at_best = rows.iter().min_by(|a, b| a.j.total_cmp(&b.j)).is_some_and(|r| r.d2j > 0.0);
    Ok(ConvexityProbe { rows, dj_sign_change, convex_at_best })
}
