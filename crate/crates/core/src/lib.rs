//! Multi-agent consensus on the n-sphere and on SO(3).
//!
//! The crate provides the gradient-flow consensus protocols on `S^n`, the
//! naive and composite attitude protocols on SO(3), the closed-form Riemannian
//! linearization used to certify (in)stability of equilibria, geometric
//! integrators, and a seeded Monte Carlo harness for basin-of-attraction
//! experiments.
//!
//! Agent states on `S^n` are stored as flat `Vec<f64>` buffers with stride
//! `n + 1` so that the integrators and Monte Carlo batches stay allocation-free
//! in their inner loops.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eigen;
pub mod energy;
pub mod equilibria;
mod error;
pub mod experiments;
pub mod gains;
pub mod geometry;
pub mod linearization;
pub mod protocols;
pub mod simulation;
pub mod topology;

pub use error::{Error, Result};
pub use gains::GainFunction;
pub use geometry::{Rotation3, TangentVector, UnitVector};
pub use protocols::{CircleProtocol, Network, RotationConfig, SphereConfig};
pub use topology::Graph;
