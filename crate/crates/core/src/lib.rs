//! Arlequin coupling of a coarse effective model with a fine oscillatory model,
//! used to identify the homogenized coefficient of a periodic medium.

pub mod arlequin;
pub mod coefficients;
pub mod enrichment;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod objective;
pub mod optimize;
pub mod oracle;
pub mod tensor;

pub use arlequin::{ArlequinProblem, CoupledSolution, Enrichment, SolverOptions};
pub use coefficients::{coefficient_zoo, CoefficientField, COEFFICIENT_NAMES};
pub use enrichment::EnrichmentCache;
pub use error::{Error, Result};
pub use mesh::{build_domain, BoundaryTag, DomainSpec, Mesh, NestedMeshes, Region, SubmeshMap};
pub use objective::{check_conditions, ConditionReport, Objective, ObjectiveEval};
pub use optimize::{optimize_matrix, optimize_scalar, MatrixOptions, OptimizationTrace, ScalarMethod, StopRule};
pub use oracle::{homogenized_tensor, oracle, solve_corrector, HomogenizedTensor, OracleResult, ORACLE_RESOLUTIONS};
pub use tensor::{SymMat2, Vec2};
