//! Minimization of `J` over scalar `k̄ > 0` and over `M(c₋, c₊)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::tensor::SymMat2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarMethod {
    NewtonSafeguarded,
    Brent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once `|dJ| ≤ grad_tol · max(1, J)`.
    pub grad_tol: f64,
    /// Stop once the bracket (scalar) or step (matrix) is below this width.
    pub step_tol: f64,
    pub max_evals: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { grad_tol: 1e-8, step_tol: 1e-8, max_evals: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    MaxEvaluations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Iterate {
    pub kbar: SymMat2,
    pub j: f64,
    pub dj: Option<f64>,
    /// The iterate improved on the best `J` so far.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    pub iterates: Vec<Iterate>,
    pub termination: Termination,
    pub kbar_opt: SymMat2,
    pub j_opt: f64,
    /// Coupled solves performed (a scalar evaluation with derivatives counts once).
    pub evaluations: usize,
    pub wall_time: f64,
}

impl OptimizationTrace {
    /// `J` along accepted iterates.
    pub fn accepted_j(&self) -> Vec<f64> {
        self.iterates.iter().filter(|i| i.accepted).map(|i| i.j).collect()
    }
}

struct Recorder {
    iterates: Vec<Iterate>,
    best: Option<(SymMat2, f64)>,
}

impl Recorder {
    fn new() -> Self {
        Self { iterates: Vec::new(), best: None }
    }

    fn push(&mut self, kbar: SymMat2, j: f64, dj: Option<f64>) {
        let accepted = self.best.is_none_or(|(_, b)| j < b);
        if accepted {
            self.best = Some((kbar, j));
        }
        self.iterates.push(Iterate { kbar, j, dj, accepted });
    }

    fn finish(self, termination: Termination, evaluations: usize, start: Instant) -> OptimizationTrace {
        let (kbar_opt, j_opt) = self.best.expect("at least one evaluation");
        OptimizationTrace {
            iterates: self.iterates,
            termination,
            kbar_opt,
            j_opt,
            evaluations,
            wall_time: start.elapsed().as_secs_f64(),
        }
    }

    /// Finish a search where every recorded iterate was one solve.
    fn done(self, termination: Termination, start: Instant) -> OptimizationTrace {
        let n = self.iterates.len();
        self.finish(termination, n, start)
    }
}

/// Limits of the practical scalar search box.
const K_MIN: f64 = 1e-8;
const K_MAX: f64 = 1e8;

/// Minimizes `J` over scalar `k̄` starting from `init`.
///
/// Newton: safeguarded Newton iteration on `dJ = 0` with bisection fallback
/// inside a bracket grown geometrically (×2 or ÷2) from `init`.
/// Brent: golden-section/parabolic minimization of `J` inside a bracket found
/// the same way from `J` values.
pub fn optimize_scalar(
    obj: &Objective<'_>,
    init: f64,
    method: ScalarMethod,
    stop: StopRule,
) -> Result<OptimizationTrace> {
    if !(init.is_finite() && init > 0.0) {
        return Err(Error::NonPositiveIterate(init));
    }
    match method {
        ScalarMethod::NewtonSafeguarded => newton(obj, init, stop),
        ScalarMethod::Brent => brent(obj, init, stop),
    }
}

fn newton(obj: &Objective<'_>, init: f64, stop: StopRule) -> Result<OptimizationTrace> {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let eval = |k: f64, rec: &mut Recorder| -> Result<(f64, f64, f64)> {
        if !(k > 0.0) {
            return Err(Error::NonPositiveIterate(k));
        }
        let e = obj.eval_scalar(k, 2)?;
        rec.push(e.kbar, e.j, e.dj);
        Ok((e.j, e.dj.unwrap(), e.d2j.unwrap()))
    };
    let converged = |j: f64, dj: f64| dj.abs() <= stop.grad_tol * j.max(1.0);

    let mut x = init;
    let (j0, dj0, _) = eval(x, &mut rec)?;
    if converged(j0, dj0) {
        return Ok(rec.done(Termination::Gradient, start));
    }

    // Bracket [lo, hi] with dJ(lo) < 0 < dJ(hi).
    let (mut lo, mut hi, mut dj, mut d2j);
    if dj0 > 0.0 {
        hi = x;
        let mut k = x;
        loop {
            k *= 0.5;
            if k < K_MIN || rec.iterates.len() >= stop.max_evals {
                return Err(Error::NoDescent { kbar: x });
            }
            let (jk, dk, d2k) = eval(k, &mut rec)?;
            if converged(jk, dk) {
                return Ok(rec.done(Termination::Gradient, start));
            }
            if dk < 0.0 {
                lo = k;
                (x, dj, d2j) = (k, dk, d2k);
                break;
            }
            hi = k;
        }
    } else {
        lo = x;
        let mut k = x;
        loop {
            k *= 2.0;
            if k > K_MAX || rec.iterates.len() >= stop.max_evals {
                return Err(Error::NoDescent { kbar: x });
            }
            let (jk, dk, d2k) = eval(k, &mut rec)?;
            if converged(jk, dk) {
                return Ok(rec.done(Termination::Gradient, start));
            }
            if dk > 0.0 {
                hi = k;
                (x, dj, d2j) = (k, dk, d2k);
                break;
            }
            lo = k;
        }
    }

    let mut last_step = hi - lo;
    loop {
        if hi - lo <= stop.step_tol {
            return Ok(rec.done(Termination::Step, start));
        }
        if rec.iterates.len() >= stop.max_evals {
            return Ok(rec.done(Termination::MaxEvaluations, start));
        }
        let newton_x = if d2j > 0.0 { x - dj / d2j } else { f64::NAN };
        let mid = 0.5 * (lo + hi);
        // Newton only when it stays strictly inside and at least halves the step.
        let next =
            if newton_x > lo && newton_x < hi && (newton_x - x).abs() < 0.5 * last_step { newton_x } else { mid };
        last_step = (next - x).abs();
        x = next;
        let jx;
        (jx, dj, d2j) = eval(x, &mut rec)?;
        if converged(jx, dj) {
            return Ok(rec.done(Termination::Gradient, start));
        }
        if dj < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
    }
}

fn brent(obj: &Objective<'_>, init: f64, stop: StopRule) -> Result<OptimizationTrace> {
    let start = Instant::now();
    let mut rec = Recorder::new();
    let f = |k: f64, rec: &mut Recorder| -> Result<f64> {
        if !(k > 0.0) {
            return Err(Error::NonPositiveIterate(k));
        }
        let e = obj.eval_scalar(k, 0)?;
        rec.push(e.kbar, e.j, None);
        Ok(e.j)
    };

    // Bracket a < b < c with J(b) <= min(J(a), J(c)).
    let fb0 = f(init, &mut rec)?;
    let f2 = f(2.0 * init, &mut rec)?;
    let (mut a, b, mut c, fb);
    if f2 <= fb0 {
        let (mut k0, mut k1, mut f1) = (init, 2.0 * init, f2);
        loop {
            let k2 = 2.0 * k1;
            if k2 > K_MAX || rec.iterates.len() >= stop.max_evals {
                return Err(Error::NoDescent { kbar: init });
            }
            let fk = f(k2, &mut rec)?;
            if fk > f1 {
                (a, b, c, fb) = (k0, k1, k2, f1);
                break;
            }
            (k0, k1, f1) = (k1, k2, fk);
        }
    } else {
        let (mut k1, mut k2, mut f1) = (init, 2.0 * init, fb0);
        loop {
            let k0 = 0.5 * k1;
            if k0 < K_MIN || rec.iterates.len() >= stop.max_evals {
                return Err(Error::NoDescent { kbar: init });
            }
            let fk = f(k0, &mut rec)?;
            if fk > f1 {
                (a, b, c, fb) = (k0, k1, k2, f1);
                break;
            }
            (k2, k1, f1) = (k1, k0, fk);
        }
    }

    // Brent's minimization on [a, c] seeded at b.
    const CGOLD: f64 = 0.381_966_011_250_105_1;
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut x, mut w, mut v) = (b, b, b);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let termination = loop {
        let xm = 0.5 * (a + c);
        let tol1 = sqrt_eps * x.abs() + stop.step_tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (c - a) {
            break Termination::Step;
        }
        if rec.iterates.len() >= stop.max_evals {
            break Termination::MaxEvaluations;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (c - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || c - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { c - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u, &mut rec)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                c = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                c = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    };
    Ok(rec.done(termination, start))
}

/// Options of the matrix search over `M(c₋, c₊)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixOptions {
    pub c_minus: f64,
    pub c_plus: f64,
    pub init: SymMat2,
    pub stop: StopRule,
    /// Relative central-difference step for the Jacobian.
    pub fd_step: f64,
}

/// Projected Levenberg–Marquardt on the residual `√|T| (∇ū − e_j)` in the
/// parameters `(k̄11, k̄22, k̄12)`, with a central-difference Jacobian and
/// eigenvalue clamping onto `M(c₋, c₊)` after every step.
pub fn optimize_matrix(obj: &Objective<'_>, opts: MatrixOptions) -> Result<OptimizationTrace> {
    let (lo, hi) = (opts.c_minus, opts.c_plus);
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::InfeasibleBounds { c_minus: lo, c_plus: hi });
    }
    let start = Instant::now();
    let mut rec = Recorder::new();
    let mut evals = 0usize;
    let stop = opts.stop;
    let to_mat = |t: [f64; 3]| SymMat2::new(t[0], t[2], t[1]);
    let project = |t: [f64; 3]| to_mat(t).clamp_eigenvalues(lo, hi).as_array();

    let mut theta = project(opts.init.as_array());
    let (mut r, e0) = obj.residual_vector(to_mat(theta))?;
    evals += 1;
    let mut j = e0.j;
    rec.push(to_mat(theta), j, None);
    let mut mu = 1e-3;

    let termination = loop {
        if evals + 7 > stop.max_evals {
            break Termination::MaxEvaluations;
        }
        // Central-difference Jacobian, one column per parameter.
        let mut jac = vec![vec![0.0; r.len()]; 3];
        for (p, col) in jac.iter_mut().enumerate() {
            let h = opts.fd_step * theta[p].abs().max(1.0);
            let (mut tp, mut tm) = (theta, theta);
            tp[p] += h;
            tm[p] -= h;
            let (rp, _) = obj.residual_vector(to_mat(tp))?;
            let (rm, _) = obj.residual_vector(to_mat(tm))?;
            evals += 2;
            for (c, (a, b)) in col.iter_mut().zip(rp.iter().zip(&rm)) {
                *c = (a - b) / (2.0 * h);
            }
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut g = [0.0; 3];
        for a in 0..3 {
            g[a] = jac[a].iter().zip(&r).map(|(x, y)| x * y).sum();
            for b in 0..3 {
                jtj[a][b] = jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum();
            }
        }
        // Projected gradient: the gradient step mapped back into the feasible set.
        let pg = project([theta[0] - 2.0 * g[0], theta[1] - 2.0 * g[1], theta[2] - 2.0 * g[2]]);
        let pg_norm = (0..3).map(|a| (pg[a] - theta[a]).powi(2)).sum::<f64>().sqrt();
        if pg_norm <= stop.grad_tol * j.max(1.0) {
            break Termination::Gradient;
        }
        let scale = ((jtj[0][0] + jtj[1][1] + jtj[2][2]) / 3.0).max(f64::MIN_POSITIVE);
        let mut stepped = None;
        while evals < stop.max_evals {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += mu * scale;
            }
            let delta = solve3(m, [-g[0], -g[1], -g[2]]);
            let cand = project([theta[0] + delta[0], theta[1] + delta[1], theta[2] + delta[2]]);
            let step = (0..3).map(|a| (cand[a] - theta[a]).powi(2)).sum::<f64>().sqrt();
            if step <= stop.step_tol {
                stepped = Some(None);
                break;
            }
            let (rc, ec) = obj.residual_vector(to_mat(cand))?;
            evals += 1;
            rec.push(to_mat(cand), ec.j, None);
            debug_assert!({
                let (l1, l2) = to_mat(cand).eigenvalues();
                l1 >= lo * (1.0 - 1e-12) && l2 <= hi * (1.0 + 1e-12)
            });
            if ec.j < j {
                mu = (mu / 3.0).max(1e-12);
                stepped = Some(Some((cand, rc, ec.j, step)));
                break;
            }
            mu *= 4.0;
            if mu > 1e12 {
                stepped = Some(None);
                break;
            }
        }
        match stepped {
            None => break Termination::MaxEvaluations,
            Some(None) => break Termination::Step,
            Some(Some((cand, rc, jc, step))) => {
                theta = cand;
                r = rc;
                j = jc;
                if step <= stop.step_tol {
                    break Termination::Step;
                }
            }
        }
    };
    Ok(rec.finish(termination, evals, start))
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *xc = det(mc) / d;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arlequin::{ArlequinProblem, Enrichment};
    use crate::coefficients::{coefficient_zoo, CoefficientField};
    use crate::mesh::{build_domain, DomainSpec};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn small(f: &CoefficientField) -> ArlequinProblem {
        let nm = build_domain(DomainSpec::new(1.0, 0.5, 0.25).unwrap(), 0.25, 4).unwrap();
        ArlequinProblem::new(Arc::new(nm), f, 0.25).unwrap()
    }

    fn constant(c: f64) -> CoefficientField {
        coefficient_zoo("constant", &BTreeMap::from([("c".to_string(), c)])).unwrap()
    }

    #[test]
    fn newton_finds_homogeneous_coefficient_from_wide_inits() {
        let pb = small(&constant(3.0));
        let obj = Objective::new(&pb, 1, Enrichment::Single);
        for init in [0.3, 1.0, 3.0, 10.0, 30.0] {
            let t = optimize_scalar(&obj, init, ScalarMethod::NewtonSafeguarded, StopRule::default()).unwrap();
            assert!((t.kbar_opt.xx - 3.0).abs() < 1e-6, "init {init}: {:?}", t.kbar_opt);
            assert!(t.evaluations <= 60, "init {init}: {} evaluations", t.evaluations);
        }
    }

    #[test]
    fn brent_finds_homogeneous_coefficient() {
        let pb = small(&constant(3.0));
        let obj = Objective::new(&pb, 2, Enrichment::Single);
        let t = optimize_scalar(&obj, 1.0, ScalarMethod::Brent, StopRule::default()).unwrap();
        assert!((t.kbar_opt.xx - 3.0).abs() < 1e-6, "{:?}", t.kbar_opt);
    }

    #[test]
    fn methods_agree_on_oscillating_medium() {
        let f = coefficient_zoo("smooth_trig", &BTreeMap::new()).unwrap();
        let pb = small(&f);
        let obj = Objective::new(&pb, 1, Enrichment::Single);
        let a = optimize_scalar(&obj, 1.0, ScalarMethod::NewtonSafeguarded, StopRule::default()).unwrap();
        let b = optimize_scalar(&obj, 1.0, ScalarMethod::Brent, StopRule::default()).unwrap();
        assert!((a.kbar_opt.xx - b.kbar_opt.xx).abs() < 1e-6, "{} vs {}", a.kbar_opt.xx, b.kbar_opt.xx);
        let accepted = a.accepted_j();
        assert!(accepted.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_bad_inputs() {
        let pb = small(&constant(1.0));
        let obj = Objective::new(&pb, 1, Enrichment::Single);
        assert!(matches!(
            optimize_scalar(&obj, -1.0, ScalarMethod::NewtonSafeguarded, StopRule::default()),
            Err(Error::NonPositiveIterate(_))
        ));
        let opts = MatrixOptions {
            c_minus: 2.0,
            c_plus: 1.0,
            init: SymMat2::iso(1.0),
            stop: StopRule::default(),
            fd_step: 1e-6,
        };
        assert!(matches!(optimize_matrix(&obj, opts), Err(Error::InfeasibleBounds { .. })));
    }

    #[test]
    fn matrix_search_recovers_first_column() {
        let k = SymMat2::new(2.0, 0.5, 3.0);
        let pb = small(&CoefficientField::constant(k).unwrap());
        let obj = Objective::new(&pb, 1, Enrichment::Both);
        let opts = MatrixOptions {
            c_minus: 0.5,
            c_plus: 5.0,
            init: SymMat2::iso(1.0),
            stop: StopRule::default(),
            fd_step: 1e-6,
        };
        let t = optimize_matrix(&obj, opts).unwrap();
        assert!((t.kbar_opt.xx - 2.0).abs() < 1e-5 && (t.kbar_opt.xy - 0.5).abs() < 1e-5, "{:?}", t.kbar_opt);
        for it in &t.iterates {
            let (l1, l2) = it.kbar.eigenvalues();
            assert!(l1 >= 0.5 - 1e-12 && l2 <= 5.0 + 1e-12);
        }
    }

    #[test]
    fn solve3_inverts() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x = solve3(m, [1.0, 2.0, 3.0]);
        for r in 0..3 {
            let s: f64 = (0..3).map(|c| m[r][c] * x[c]).sum();
            assert!((s - [1.0, 2.0, 3.0][r]).abs() < 1e-14);
        }
    }
}
