use thiserror::Error;

/// Errors raised by mesh construction, assembly, solves and optimization.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate domain: need 0 < L_f < L_c < L, got L={l}, L_c={l_c}, L_f={l_f}")]
    DegenerateSpec { l: f64, l_c: f64, l_f: f64 },

    #[error("mesh size {h} does not tile {what} = {length}")]
    NonDivisibleGeometry { h: f64, what: &'static str, length: f64 },

    #[error("unknown boundary tag {0}")]
    UnknownTag(String),

    #[error("unknown coefficient {0:?}")]
    UnknownCoefficient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient is not symmetric positive definite: {0}")]
    NonSpdCoefficient(String),

    #[error("form requires spaces restricted to the coupling zone: {0}")]
    MismatchedRegion(String),

    #[error("singular Gram matrix in projection: {0}")]
    SingularGram(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("enrichment {direction} is collinear with the coarse multiplier space (distance {distance:e})")]
    CollinearEnrichment { direction: usize, distance: f64 },

    #[error("singular coupled system: {0}")]
    SingularKkt(String),

    #[error("objective could not be decreased from k = {kbar}")]
    NoDescent { kbar: f64 },

    #[error("non-positive iterate {0} rejected")]
    NonPositiveIterate(f64),

    #[error("infeasible bounds: c- = {c_minus} must be below c+ = {c_plus}")]
    InfeasibleBounds { c_minus: f64, c_plus: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
