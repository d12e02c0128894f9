//! Study configuration read from TOML. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use arlequin_core::optimize::{MatrixOptions, ScalarMethod, StopRule};
use arlequin_core::{coefficient_zoo, CoefficientField, DomainSpec, Enrichment, SymMat2, ORACLE_RESOLUTIONS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub eps: Vec<f64>,
    #[serde(default = "default_direction")]
    pub bc_direction: usize,
    #[serde(default = "default_enrichment")]
    pub enrichment: Enrichment,
    /// Seeds the random convexity-probe points only.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub geometry: Geometry,
    pub mesh: MeshConfig,
    pub coefficient: CoefficientConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_direction() -> usize {
    1
}

fn default_enrichment() -> Enrichment {
    Enrichment::Single
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub l: f64,
    pub l_c: f64,
    pub l_f: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        let d = DomainSpec::default();
        Self { l: d.l, l_c: d.l_c, l_f: d.l_f }
    }
}

/// `h = H / refine_ratio`, or `h = ε / cells_per_period` with the ratio
/// derived per ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub h_coarse: f64,
    pub refine_ratio: Option<usize>,
    pub cells_per_period: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Scalar,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub mode: Mode,
    pub method: ScalarMethod,
    /// Scalar start, or the isotropic start of the matrix search.
    pub init: f64,
    /// Matrix start `[k11, k22, k12]`; overrides `init` in matrix mode.
    pub init_matrix: Option<[f64; 3]>,
    pub c_minus: f64,
    pub c_plus: f64,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub max_evals: usize,
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = StopRule::default();
        Self {
            mode: Mode::Scalar,
            method: ScalarMethod::NewtonSafeguarded,
            init: 1.0,
            init_matrix: None,
            c_minus: 0.1,
            c_plus: 10.0,
            grad_tol: s.grad_tol,
            step_tol: s.step_tol,
            max_evals: s.max_evals,
            fd_step: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn stop(&self) -> StopRule {
        StopRule { grad_tol: self.grad_tol, step_tol: self.step_tol, max_evals: self.max_evals }
    }

    pub fn matrix_options(&self) -> MatrixOptions {
        let init = match self.init_matrix {
            Some([a, b, c]) => SymMat2::new(a, c, b),
            None => SymMat2::iso(self.init),
        };
        MatrixOptions { c_minus: self.c_minus, c_plus: self.c_plus, init, stop: self.stop(), fd_step: self.fd_step }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub resolutions: Vec<usize>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { resolutions: ORACLE_RESOLUTIONS.to_vec() }
    }
}

/// Pass/fail targets checked after a sweep. Unset targets are not checked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Bound on `|k̄_opt − k*| / |k*|` at the smallest ε.
    pub max_rel_error: Option<f64>,
    /// Require the error column to decrease strictly as ε decreases.
    #[serde(default)]
    pub monotone_error: bool,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: StudyConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn domain(&self) -> anyhow::Result<DomainSpec> {
        Ok(DomainSpec::new(self.geometry.l, self.geometry.l_c, self.geometry.l_f)?)
    }

    pub fn field(&self) -> anyhow::Result<CoefficientField> {
        Ok(coefficient_zoo(&self.coefficient.name, &self.coefficient.params)?)
    }

    /// Refinement ratio `m` used for a given ε.
    pub fn refine_ratio(&self, eps: f64) -> usize {
        match (self.mesh.refine_ratio, self.mesh.cells_per_period) {
            (Some(m), _) => m,
            (None, Some(p)) => (self.mesh.h_coarse * p as f64 / eps).round() as usize,
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn h_fine(&self, eps: f64) -> f64 {
        self.mesh.h_coarse / self.refine_ratio(eps) as f64
    }

    /// `h > ε/10`.
    pub fn under_resolved(&self, eps: f64) -> bool {
        self.h_fine(eps) > eps / 10.0 * (1.0 + 1e-12)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let spec = self.domain()?;
        self.field()?;
        if self.eps.is_empty() {
            bail!("eps list is empty");
        }
        if !matches!(self.bc_direction, 1 | 2) {
            bail!("bc_direction must be 1 or 2");
        }
        match (self.mesh.refine_ratio, self.mesh.cells_per_period) {
            (Some(_), Some(_)) => bail!("set only one of mesh.refine_ratio and mesh.cells_per_period"),
            (None, None) => bail!("set mesh.refine_ratio or mesh.cells_per_period"),
            _ => {}
        }
        for &eps in &self.eps {
            if !(eps > 0.0) {
                bail!("eps must be positive, got {eps}");
            }
            let periods = spec.l_f / eps;
            if (periods - periods.round()).abs() > 1e-9 || periods.round() < 1.0 {
                bail!("L_f / eps must be an integer, got {periods} for eps = {eps}");
            }
            if let Some(p) = self.mesh.cells_per_period {
                let m = self.mesh.h_coarse * p as f64 / eps;
                if (m - m.round()).abs() > 1e-9 {
                    bail!("h_coarse * cells_per_period / eps = {m} is not an integer for eps = {eps}");
                }
            }
        }
        let o = &self.optimizer;
        if o.mode == Mode::Matrix && !(o.c_minus > 0.0 && o.c_minus < o.c_plus) {
            bail!("matrix bounds need 0 < c_minus < c_plus");
        }
        if !(o.init > 0.0) {
            bail!("optimizer.init must be positive");
        }
        if self.oracle.resolutions.is_empty() {
            bail!("oracle.resolutions is empty");
        }
        Ok(())
    }

    /// Hex prefix of the SHA-256 of the canonical JSON echo of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}
