//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("epsilon {eps} below the stiffness floor {floor}; the approach to the rest state is too stiff for the explicit integrator (override via SolveOptions::min_eps)")]
    TooStiff { eps: f64, floor: f64 },

    #[error("step controller underflowed the minimum step {min_step} at z = {z}")]
    StepUnderflow { z: f64, min_step: f64 },

    #[error("wave solve did not converge: {0}")]
    NonConvergence(String),

    #[error("output grid too short: trajectory needs z in [{needed_left}, {needed_right}], grid covers [{have_left}, {have_right}]")]
    GridTooShort {
        needed_left: f64,
        needed_right: f64,
        have_left: f64,
        have_right: f64,
    },

    #[error("field dimensions {found:?} do not match grid {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("vector field is not a discrete gradient: max curl {max_curl} exceeds threshold {threshold}")]
    CurlViolation { max_curl: f64, threshold: f64 },

    #[error("blow-up detected at step {step} (t = {t}): {what}")]
    BlowUp { step: usize, t: f64, what: String },

    #[error("CFL violation at step {step}: dt = {dt} exceeds bound {bound}")]
    CflViolation { step: usize, dt: f64, bound: f64 },

    #[error("initial perturbation support violates the buffer zone: |field| = {magnitude} at z = {z}")]
    SupportViolation { z: f64, magnitude: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
