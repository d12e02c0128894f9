//! The ε sweep: one independent optimization per ε against a shared oracle.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use arlequin_core::objective::convexity_probe;
use arlequin_core::{
    build_domain, check_conditions, optimize_matrix, optimize_scalar, oracle, ArlequinProblem, CoefficientField,
    EnrichmentCache, NestedMeshes, Objective, OracleResult, SymMat2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, StudyConfig};

/// One line of `results.csv`. Wall time is kept out so that reruns are
/// byte-identical; see [`Timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub coefficient: String,
    pub eps: f64,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub refine_ratio: usize,
    pub under_resolved: bool,
    pub bc_direction: usize,
    pub mode: String,
    pub k11: Option<f64>,
    pub k22: Option<f64>,
    pub k12: Option<f64>,
    pub j_final: Option<f64>,
    pub kstar11: Option<f64>,
    pub kstar22: Option<f64>,
    pub kstar12: Option<f64>,
    /// Scalar: `|k̄ − k*_jj|`. Matrix: `|k̄ e_j − k* e_j|`.
    pub error: Option<f64>,
    pub rel_error: Option<f64>,
    pub j_at_oracle: Option<f64>,
    pub condition1: Option<bool>,
    pub condition2: Option<bool>,
    pub convex_probe: Option<bool>,
    pub evaluations: Option<usize>,
    pub termination: Option<String>,
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn kbar(&self) -> Option<SymMat2> {
        Some(SymMat2::new(self.k11?, self.k12?, self.k22?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub config_hash: String,
    pub eps: f64,
    pub setup_seconds: f64,
    pub optimize_seconds: f64,
    pub total_seconds: f64,
}

pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<Timing>,
    pub oracle: Option<OracleResult>,
}

const PROBE_POINTS: usize = 4;
const PROBE_SPREAD: f64 = 0.2;

/// Runs every ε of the config on a pool of `workers` threads. Per-row failures
/// are recorded in the row; rows come back sorted by ε descending.
pub fn run_sweep(cfg: &StudyConfig, workers: usize) -> anyhow::Result<SweepOutput> {
    cfg.validate()?;
    let field = cfg.field()?;
    let spec = cfg.domain()?;
    let hash = cfg.hash();
    let oracle = oracle(&field, &cfg.oracle.resolutions);
    log::info!("oracle for {}: {:?}", field.name(), oracle.as_ref().map(|o| o.k));

    let mut meshes: BTreeMap<usize, Arc<NestedMeshes>> = BTreeMap::new();
    let mut eps = cfg.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut mesh_errors: BTreeMap<usize, String> = BTreeMap::new();
    for &e in &eps {
        let m = cfg.refine_ratio(e);
        if meshes.contains_key(&m) || mesh_errors.contains_key(&m) {
            continue;
        }
        match build_domain(spec, cfg.mesh.h_coarse, m) {
            Ok(nm) => {
                meshes.insert(m, Arc::new(nm));
            }
            Err(err) => {
                mesh_errors.insert(m, err.to_string());
            }
        }
    }
    let cache = EnrichmentCache::new();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    let results: Vec<(ResultRow, Timing)> = pool.install(|| {
        eps.par_iter()
            .map(|&e| {
                let m = cfg.refine_ratio(e);
                let mut row = empty_row(cfg, &hash, &field, e, m);
                let start = Instant::now();
                let mut timing = Timing {
                    config_hash: hash.clone(),
                    eps: e,
                    setup_seconds: 0.0,
                    optimize_seconds: 0.0,
                    total_seconds: 0.0,
                };
                let outcome = match (&oracle, meshes.get(&m)) {
                    (Err(err), _) => Err(format!("oracle: {err}")),
                    (_, None) => Err(mesh_errors.get(&m).cloned().unwrap_or_default()),
                    (Ok(or), Some(nm)) => run_row(cfg, &field, nm.clone(), &cache, e, or, &mut row, &mut timing),
                };
                if let Err(msg) = outcome {
                    log::warn!("eps = {e}: {msg}");
                    row.status = msg;
                }
                timing.total_seconds = start.elapsed().as_secs_f64();
                (row, timing)
            })
            .collect()
    });
    let (rows, timings) = results.into_iter().unzip();
    Ok(SweepOutput { rows, timings, oracle: oracle.ok() })
}

fn empty_row(cfg: &StudyConfig, hash: &str, field: &CoefficientField, eps: f64, m: usize) -> ResultRow {
    ResultRow {
        config_hash: hash.to_string(),
        coefficient: field.name().to_string(),
        eps,
        h_coarse: cfg.mesh.h_coarse,
        h_fine: cfg.mesh.h_coarse / m as f64,
        refine_ratio: m,
        under_resolved: cfg.under_resolved(eps),
        bc_direction: cfg.bc_direction,
        mode: match cfg.optimizer.mode {
            Mode::Scalar => "scalar",
            Mode::Matrix => "matrix",
        }
        .to_string(),
        k11: None,
        k22: None,
        k12: None,
        j_final: None,
        kstar11: None,
        kstar22: None,
        kstar12: None,
        error: None,
        rel_error: None,
        j_at_oracle: None,
        condition1: None,
        condition2: None,
        convex_probe: None,
        evaluations: None,
        termination: None,
        status: String::new(),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_row(
    cfg: &StudyConfig,
    field: &CoefficientField,
    nm: Arc<NestedMeshes>,
    cache: &EnrichmentCache,
    eps: f64,
    or: &OracleResult,
    row: &mut ResultRow,
    timing: &mut Timing,
) -> Result<(), String> {
    let t0 = Instant::now();
    let pb = ArlequinProblem::with_cache(nm, field, eps, cache).map_err(|e| e.to_string())?;
    timing.setup_seconds = t0.elapsed().as_secs_f64();
    let dir = cfg.bc_direction;
    let obj = Objective::new(&pb, dir, cfg.enrichment);
    let kstar = or.k;
    row.kstar11 = Some(kstar.xx);
    row.kstar22 = Some(kstar.yy);
    row.kstar12 = Some(kstar.xy);

    let t1 = Instant::now();
    let (trace, error, scale, k_ref) = match cfg.optimizer.mode {
        Mode::Scalar => {
            let t = optimize_scalar(&obj, cfg.optimizer.init, cfg.optimizer.method, cfg.optimizer.stop())
                .map_err(|e| e.to_string())?;
            let target = if dir == 1 { kstar.xx } else { kstar.yy };
            let err = (t.kbar_opt.xx - target).abs();
            (t, err, target.abs(), SymMat2::iso(target))
        }
        Mode::Matrix => {
            let t = optimize_matrix(&obj, cfg.optimizer.matrix_options()).map_err(|e| e.to_string())?;
            let (a, b) = (t.kbar_opt.column(dir), kstar.column(dir));
            let err = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            (t, err, (b[0] * b[0] + b[1] * b[1]).sqrt(), kstar)
        }
    };
    timing.optimize_seconds = t1.elapsed().as_secs_f64();
    row.k11 = Some(trace.kbar_opt.xx);
    row.k22 = Some(trace.kbar_opt.yy);
    row.k12 = Some(trace.kbar_opt.xy);
    row.j_final = Some(trace.j_opt);
    row.error = Some(error);
    row.rel_error = Some(error / scale);
    row.evaluations = Some(trace.evaluations);
    row.termination = Some(format!("{:?}", trace.termination).to_lowercase());
    row.j_at_oracle = Some(obj.eval(k_ref).map_err(|e| e.to_string())?.j);

    let cond = check_conditions(&pb, dir, trace.j_opt).map_err(|e| e.to_string())?;
    row.condition1 = Some(cond.condition1);
    row.condition2 = Some(cond.condition2);

    if cfg.optimizer.mode == Mode::Scalar {
        let k = trace.kbar_opt.xx;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ eps.to_bits());
        let mut window: Vec<f64> =
            (0..PROBE_POINTS).map(|_| k * (1.0 + rng.random_range(-PROBE_SPREAD..PROBE_SPREAD))).collect();
        window.push(k);
        window.sort_by(f64::total_cmp);
        let probe = convexity_probe(&obj, &window).map_err(|e| e.to_string())?;
        row.convex_probe = Some(probe.convex_at_best);
    }
    row.status = "ok".to_string();
    Ok(())
}

/// Threshold violations for a finished sweep; empty when every check passes.
pub fn threshold_failures(cfg: &StudyConfig, rows: &[ResultRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| !r.ok()) {
        out.push(format!("eps = {}: {}", r.eps, r.status));
    }
    let t = cfg.thresholds;
    if let Some(tol) = t.max_rel_error {
        match rows.iter().filter(|r| r.ok()).min_by(|a, b| a.eps.total_cmp(&b.eps)) {
            Some(r) if r.rel_error.unwrap_or(f64::INFINITY) <= tol => {}
            Some(r) => out.push(format!("relative error {:?} at eps = {} exceeds {tol}", r.rel_error, r.eps)),
            None => out.push("no successful row".to_string()),
        }
    }
    if t.monotone_error && !error_decreasing(rows) {
        out.push("error column is not strictly decreasing in eps".to_string());
    }
    out
}

/// Errors strictly decrease along rows sorted by ε descending.
pub fn error_decreasing(rows: &[ResultRow]) -> bool {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    sorted.iter().all(|r| r.error.is_some()) && sorted.windows(2).all(|w| w[1].error < w[0].error)
}
