//! Subcommand bodies. Each writes its human-readable output to `out` and
//! returns whether the run met its success criteria.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use arlequin_core::arlequin::solution_csv;
use arlequin_core::{
    build_domain, check_conditions, optimize_matrix, optimize_scalar, oracle, ArlequinProblem, Objective,
    OptimizationTrace, SymMat2,
};

use crate::config::{Mode, StudyConfig};
use crate::output::{append_csv, read_results, write_manifest, RESULTS_FILE, TIMINGS_FILE};
use crate::report::report;
use crate::sweep::{run_sweep, threshold_failures};

fn problem(cfg: &StudyConfig, eps: Option<f64>) -> anyhow::Result<(ArlequinProblem, f64)> {
    let eps = eps.unwrap_or(cfg.eps[0]);
    let nm = build_domain(cfg.domain()?, cfg.mesh.h_coarse, cfg.refine_ratio(eps))?;
    if cfg.under_resolved(eps) {
        log::warn!("under-resolved: h = {} > eps / 10 = {}", nm.fine_size(), eps / 10.0);
    }
    Ok((ArlequinProblem::new(Arc::new(nm), &cfg.field()?, eps)?, eps))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Parses `k` or `k11,k22,k12`.
pub fn parse_kbar(s: &str) -> anyhow::Result<SymMat2> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [k] => Ok(SymMat2::iso(*k)),
        [a, b, c] => Ok(SymMat2::new(*a, *c, *b)),
        _ => bail!("kbar must be `k` or `k11,k22,k12`, got {s}"),
    }
}

pub fn oracle_cmd(cfg: &StudyConfig, out_dir: Option<&Path>, out: &mut dyn Write) -> anyhow::Result<bool> {
    let field = cfg.field()?;
    let r = oracle(&field, &cfg.oracle.resolutions)?;
    let mut text = String::from("coefficient,n,k11,k22,k12,asymmetry\n");
    for l in &r.levels {
        text +=
            &format!("{},{},{:.12e},{:.12e},{:.12e},{:.3e}\n", field.name(), l.n, l.k.xx, l.k.yy, l.k.xy, l.asymmetry);
    }
    let label = if r.extrapolated { "richardson" } else { "finest" };
    text += &format!(
        "{},{label},{:.12e},{:.12e},{:.12e},\nerror_estimate,{:.3e}\n",
        field.name(),
        r.k.xx,
        r.k.yy,
        r.k.xy,
        r.error_estimate
    );
    write!(out, "{text}")?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        std::fs::write(dir.join("oracle.csv"), &text)?;
    }
    Ok(true)
}

pub fn solve_cmd(
    cfg: &StudyConfig,
    kbar: SymMat2,
    eps: Option<f64>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<bool> {
    let (pb, eps) = problem(cfg, eps)?;
    let sol = pb.solve(kbar, cfg.bc_direction, cfg.enrichment)?;
    let r = sol.residuals;
    writeln!(out, "eps,kbar11,kbar22,kbar12,res_coarse,res_fine,res_constraint")?;
    writeln!(out, "{eps},{},{},{},{:.3e},{:.3e},{:.3e}", kbar.xx, kbar.yy, kbar.xy, r.coarse, r.fine, r.constraint)?;
    for (j, c) in &sol.psi_enrichment {
        writeln!(out, "# enrichment coefficient psi_0,{j} = {c:.12e}")?;
    }
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        std::fs::write(dir.join("solution.csv"), solution_csv(&pb, &sol))?;
    }
    Ok(true)
}

pub fn objective_cmd(cfg: &StudyConfig, kbar: SymMat2, eps: Option<f64>, out: &mut dyn Write) -> anyhow::Result<bool> {
    let (pb, eps) = problem(cfg, eps)?;
    let obj = Objective::new(&pb, cfg.bc_direction, cfg.enrichment);
    writeln!(out, "eps,kbar11,kbar22,kbar12,J,dJ,d2J,residual")?;
    let e = if kbar.xy == 0.0 && kbar.xx == kbar.yy { obj.eval_scalar(kbar.xx, 2)? } else { obj.eval(kbar)? };
    let o = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    writeln!(
        out,
        "{eps},{},{},{},{:.12e},{},{},{:.3e}",
        kbar.xx,
        kbar.yy,
        kbar.xy,
        e.j,
        o(e.dj),
        o(e.d2j),
        e.residual
    )?;
    Ok(true)
}

fn optimize_one(cfg: &StudyConfig, obj: &Objective<'_>) -> anyhow::Result<OptimizationTrace> {
    Ok(match cfg.optimizer.mode {
        Mode::Scalar => optimize_scalar(obj, cfg.optimizer.init, cfg.optimizer.method, cfg.optimizer.stop())?,
        Mode::Matrix => optimize_matrix(obj, cfg.optimizer.matrix_options())?,
    })
}

pub fn optimize_cmd(
    cfg: &StudyConfig,
    eps: Option<f64>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> anyhow::Result<bool> {
    let (pb, eps) = problem(cfg, eps)?;
    let obj = Objective::new(&pb, cfg.bc_direction, cfg.enrichment);
    let t = optimize_one(cfg, &obj)?;
    let mut text = String::from("iter,kbar11,kbar22,kbar12,J,dJ,accepted\n");
    for (i, it) in t.iterates.iter().enumerate() {
        let dj = it.dj.map(|x| format!("{x:.12e}")).unwrap_or_default();
        text += &format!(
            "{i},{:.12e},{:.12e},{:.12e},{:.12e},{dj},{}\n",
            it.kbar.xx, it.kbar.yy, it.kbar.xy, it.j, it.accepted
        );
    }
    write!(out, "{text}")?;
    writeln!(
        out,
        "# eps = {eps}: kbar_opt = ({:.10}, {:.10}, {:.10}), J = {:.6e}, {} evaluations, {:?}",
        t.kbar_opt.xx, t.kbar_opt.yy, t.kbar_opt.xy, t.j_opt, t.evaluations, t.termination
    )?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        std::fs::write(dir.join("trace.csv"), &text)?;
    }
    Ok(true)
}

pub fn check_conditions_cmd(cfg: &StudyConfig, eps: Option<f64>, out: &mut dyn Write) -> anyhow::Result<bool> {
    let (pb, eps) = problem(cfg, eps)?;
    let obj = Objective::new(&pb, cfg.bc_direction, cfg.enrichment);
    let t = optimize_one(cfg, &obj)?;
    let c = check_conditions(&pb, cfg.bc_direction, t.j_opt)?;
    writeln!(out, "eps,I_estimate,rhs1,rhs2,condition1,condition2,lambda_star,label")?;
    writeln!(
        out,
        "{eps},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{}",
        c.i_estimate, c.rhs1, c.rhs2, c.condition1, c.condition2, c.lambda_star, c.label
    )?;
    Ok(c.condition1 && c.condition2)
}

pub fn sweep_cmd(cfg: &StudyConfig, workers: usize, out_dir: &Path, out: &mut dyn Write) -> anyhow::Result<bool> {
    let s = run_sweep(cfg, workers)?;
    ensure_dir(out_dir)?;
    append_csv(&out_dir.join(RESULTS_FILE), &s.rows)?;
    append_csv(&out_dir.join(TIMINGS_FILE), &s.timings)?;
    let failures = threshold_failures(cfg, &s.rows);
    write_manifest(out_dir, cfg, &s.rows, &failures)?;
    write!(out, "{}", report(&s.rows))?;
    for f in &failures {
        writeln!(out, "threshold not met: {f}")?;
    }
    Ok(failures.is_empty())
}

pub fn report_cmd(results: &Path, out: &mut dyn Write) -> anyhow::Result<bool> {
    let rows = read_results(results)?;
    if rows.is_empty() {
        bail!("{} has no rows", results.display());
    }
    write!(out, "{}", report(&rows))?;
    Ok(rows.iter().all(|r| r.ok()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kbar_parsing() {
        assert_eq!(parse_kbar("2.5").unwrap(), SymMat2::iso(2.5));
        assert_eq!(parse_kbar("2,3,0.5").unwrap(), SymMat2::new(2.0, 0.5, 3.0));
        assert!(parse_kbar("1,2").is_err());
        assert!(parse_kbar("x").is_err());
    }
}
