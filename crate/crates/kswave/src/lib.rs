// index-based loops mirror the stencil formulas; negated comparisons like
// `!(x > 0.0)` deliberately reject NaN parameters
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for planar invading fronts of a singular chemotaxis
//! system on a 2D periodic strip.
//!
//! The crate computes the traveling-wave profiles of the transformed front
//! system as a heteroclinic connection, evolves perturbed states in the
//! co-moving frame in three equivalent formulations, and measures the
//! weighted-Sobolev energy functionals whose boundedness witnesses nonlinear
//! stability of the wave.

pub mod config;
pub mod energy;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod state;
pub mod wave;

pub use error::{Error, Result};
pub use grid::{StripGrid, YScheme};
pub use state::{PerturbState, PrimitiveFields, PrimitiveState, Snapshot};
pub use wave::{GridSpec1d, SolveOptions, WaveParams, WaveProfile, WaveTable};
