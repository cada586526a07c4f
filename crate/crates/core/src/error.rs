//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("derivative order {order} unsupported for potential kind {kind} (max {max})")]
    UnsupportedOrder {
        order: usize,
        kind: &'static str,
        max: usize,
    },

    #[error("integration failure at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: &'static str },

    #[error("Riccati blowup at t = {t}: |S''| exceeded {guard:e}")]
    RiccatiBlowup { t: f64, guard: f64 },

    #[error("Newton shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular shooting Jacobian: |det U(T)| = {det_abs:e} below threshold {threshold:e}")]
    SingularJacobian { det_abs: f64, threshold: f64 },

    #[error("caustic at final time: |det| = {det_abs:e} below threshold {threshold:e}")]
    CausticAtT { det_abs: f64, threshold: f64 },

    #[error("singular matrix in {context}")]
    SingularMatrix { context: &'static str },

    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),

    #[error("tolerance exceeded: {what} = {measured:e} > {tolerance:e}")]
    ToleranceExceeded {
        what: String,
        measured: f64,
        tolerance: f64,
    },

    #[error("grid too coarse: {points_per_sigma:.1} points per packet standard deviation (need >= {required})")]
    GridTooCoarse {
        points_per_sigma: f64,
        required: f64,
    },

    #[error("packet out of bounds: needs {required_margin:.3} margin, has {margin:.3}")]
    PacketOutOfBounds { margin: f64, required_margin: f64 },

    #[error("boundary contamination: norm fraction {fraction:e} within boundary zone at t = {t}")]
    BoundaryContamination { t: f64, fraction: f64 },

    #[error("unsupported method/order/dimension combination: {0}")]
    UnsupportedCombination(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
