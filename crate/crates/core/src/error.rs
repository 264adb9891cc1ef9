//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Deformation gradient with non-positive-definite C = FᵀF.
    #[error("invalid deformation gradient: C = F^T F is not positive definite (min eigenvalue {min_eig:e})")]
    InvalidDeformation { min_eig: f64 },

    /// A scalar argument left its admissible domain.
    #[error("{name} = {value} outside the admissible domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// The unit-cell contact length turned negative (a = R - h < 0).
    #[error("unit-cell geometry breakdown at relative density {rho_hat}: contact half-length a < 0")]
    GeometryBreakdown { rho_hat: f64 },

    /// Yield surface with p_c + c = 0 has no interior.
    #[error("degenerate yield surface: p_c + c = 0")]
    DegenerateSurface,

    /// Yield gradient vanished; no flow direction can be assigned.
    #[error("degenerate flow direction: |dF/dsigma| = {norm:e}")]
    DegenerateDirection { norm: f64 },

    /// The local Newton loop (with substepping exhausted) failed to converge.
    #[error("return mapping failed to converge at t = {time_s} s (dt = {dt_s} s, residual {residual:e}, {levels} substep levels used)")]
    NonConvergence {
        time_s: f64,
        dt_s: f64,
        residual: f64,
        levels: usize,
    },

    /// Mixed/stress control loop failed to meet its stress targets.
    #[error("control loop for segment {segment} failed at t = {time_s} s: stress residual {residual:e} MPa")]
    ControlNonConvergence {
        segment: usize,
        time_s: f64,
        residual: f64,
    },

    /// Tridiagonal conduction system is singular or has non-physical coefficients.
    #[error("heat conduction system is singular or non-physical: {reason}")]
    SingularThermalSystem { reason: String },

    /// Invalid parameter set or schedule.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
