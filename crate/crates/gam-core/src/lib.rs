//! Gradient-attention local feature aggregation for point clouds.
//!
//! The crate covers the full pipeline: farthest point sampling and
//! neighborhood search, zenith/azimuth edge gradients, sigmoid-MLP attention,
//! balanced aggregation, a tape-based reverse-mode differentiator for
//! training the module, a timing harness comparing the simplified gradient
//! against a PCA-normal baseline, and a synthetic-shape training demo.

pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod demo;
pub mod error;
pub mod gam;
pub mod geometry;
pub mod io;
mod linalg;
pub mod sampling;
pub mod types;

pub use error::{GamError, Result};
pub use types::{init_params, EdgeGeometry, GamConfig, GamParams, NeighborhoodIndex, PointCloud};
