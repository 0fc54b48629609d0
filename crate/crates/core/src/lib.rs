//! Sparse Distributed Memory (SDM) and its relationship to softmax attention.
//!
//! The crate is organised bottom-up:
//!
//! * [`vectorspace`] – packed binary vectors, dense vectors, distances,
//!   perturbations and the majority rule.
//! * [`intersect`] – exact binary circle intersections, their exponential
//!   approximation and hyperspherical cap intersections.
//! * [`weighting`] – read-weight kernels, the β regression, softmax and
//!   limited-neuron quantization.
//! * [`engines`] – the eight read/update algorithms and the convergence loop.
//! * [`analysis`] – signal-to-noise analytics, capacity, optimal radii,
//!   critical distances and the Hopfield special case.
//! * [`harness`] – experiment orchestration, dataset loading, projection
//!   training and result export.

pub mod analysis;
pub mod engines;
pub mod error;
pub mod harness;
pub mod intersect;
pub mod vectorspace;
pub mod weighting;

pub use error::{Result, SdmError};
