//! Desk-scale numerics for Dunkl-Schrodinger operators `L = -Δ_k + V`.
//!
//! The crate builds the weighted measure of a root system, the critical
//! radius function of a reverse Holder potential, the stopping-time dyadic
//! cubes attached to it, Dunkl operators on smooth test functions, heat and
//! Schrodinger kernels for products of rank-one systems, and the checks built
//! on top of them (Fefferman-Phong ratios, Hardy space atoms).
//!
//! Everything is deterministic: identical inputs give bit-identical outputs.

pub mod critical_radius;
pub mod cubes;
pub mod dunkl_ops;
pub mod error;
pub mod fefferman_phong;
pub mod fixtures;
pub mod geometry;
pub mod hardy;
pub mod heat;
pub mod kernel;
pub mod measure;
pub mod ode;
pub mod partition;
pub mod potential;
pub mod quad;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::RootSystem;
pub use measure::{Region, WeightedMeasure};
pub use potential::{PotentialKind, PotentialMeasure, PotentialProfile};
