//! Numerical laboratory for toric Kähler-Einstein potentials.
//!
//! The crate solves `e^{−Φ} = det D²Φ` with `∇Φ(ℝ²) = K` for planar convex
//! bodies `K`, computes the curvature of the Hessian metric `D²Φ`, and checks
//! a catalogue of identities and bounds for it at sample points.

pub mod bodies;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod identities;
pub mod io;
pub mod potentials;
pub mod riemannian;
pub mod sampling;
pub mod series;
pub mod solver;

pub use error::{Error, JetError, Result};
