//! Hard spheres on the flat torus and the statistics of their collisional
//! clusters.
//!
//! The crate is organised bottom-up:
//!
//! - [`torus`]: periodic geometry and pair contact prediction,
//! - [`dynamics`]: the event-driven hard-sphere flow and its collision log,
//! - [`ensemble`]: initial data from the canonical Gibbs measure,
//! - [`cluster`]: backward/forward clusters, collision trees, dynamical
//!   (Bogolyubov) clusters and the interacting backwards flow,
//! - [`theory`]: closed-form cluster-size laws and bounds,
//! - [`harness`]: Monte-Carlo experiments, estimators and result tables,
//! - [`io`]: the line-oriented text formats shared by all outputs.

// Range checks are written `!(x < y)` so that NaN fails them, and the vector
// kernels index several three-component arrays in step.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod io;
pub mod theory;
pub mod torus;
pub mod vector;

pub use error::{Error, Result};
