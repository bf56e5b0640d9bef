//! Hyperbolic representation learning for directed graphs.
//!
//! Nodes are embedded in the Poincaré ball by message passing over four
//! families of k-order neighborhood matrices (diffusion in/out, common
//! in/out), fused by hyperbolic averaging. Two self-supervised edge
//! decoders — a symmetric Fermi-Dirac likelihood and a direction-sensitive
//! gravity likelihood with learned node mass — drive training for link
//! prediction, semi-supervised node classification, and link sign
//! prediction.
//!
//! Layers:
//! - [`geometry`]: the pure Poincaré-ball kernel (Möbius ops, exp/log maps).
//! - [`tensor`]: a minimal reverse-mode tape over dense `f64` tensors.
//! - [`hgeom`]: the geometry kernel mirrored onto tape tensors.
//! - [`digraph`]: graph ingestion, proximity stacks, dataset splits.
//! - [`model`]: the multi-branch hyperbolic network.
//! - [`decode`]: edge decoders, classifier head, loss compositions.
//! - [`train`] / [`metrics`]: the seeded training loop and exact rank metrics.
//! - [`cli`]: the `preprocess` / `train` / `export` command surface.

pub mod cli;
pub mod decode;
pub mod digraph;
pub mod error;
pub mod geometry;
pub mod hgeom;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
