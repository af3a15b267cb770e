//! Losses, generalization bounds, and graph-distance certificates for a
//! rigid-contact toy model.
//!
//! A falling point mass meets a flat ground through an inelastic
//! complementarity time step with one learnable scalar, the ground height.
//! Three losses are evaluated in closed form — the explicit prediction
//! loss, the naive implicit loss with the impulse solved from the
//! violation penalty, and the violation loss that trades prediction error
//! against constraint violation at weight `1/epsilon`. On top of them the
//! crate computes the model's Lipschitz constants and loss suprema, a
//! high-probability generalization-error bound with sweep utilities, and
//! a sampling-based certificate that the violation loss grows at least
//! quadratically with distance to the model graph.
//!
//! The `implicit-bounds` binary exposes each piece as a subcommand and
//! writes reproducible CSV tables; see `docs/csv_schema.md` for the file
//! formats.

pub mod bounds;
pub mod config;
pub mod contact;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod losses;
pub mod report;
pub mod sampling;

pub use contact::{DomainBounds, ModelParams, NextVelocity, State};
pub use error::{Error, Result};
pub use losses::{Datapoint, Epsilon, LossEval, LossKind};
