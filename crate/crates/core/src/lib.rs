//! Graph reaction-diffusion networks for node classification.
//!
//! The crate covers sparse graph operators, reaction terms and fixed-step
//! integrators, an attention-based soft adjacency, a trainable model with a
//! hand-written reverse pass, synthetic graph generators and energy analysis.

pub mod analysis;
pub mod attention;
pub mod datagen;
pub mod dense;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod par;
pub mod train;

pub use dense::{Matrix, NodeMatrix};
pub use dynamics::{Coefficients, Reaction, Solver, SolverConfig};
pub use error::{GreadError, Result};
pub use graph::{LabeledGraph, SparseGraph, Split};
pub use model::{AdjacencyMode, ModelConfig, ModelParams, PreparedGraph};
pub use train::{fit, TrainConfig};
