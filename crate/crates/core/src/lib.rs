//! Random graph samplers, spectral synchronization certificates and
//! gradient-flow simulation for the homogeneous Kuramoto model on
//! Erdős–Rényi and spherical random geometric graphs.

pub mod certificate;
pub mod concentration;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod models;
pub mod quadrature;
pub mod registry;
pub mod rng;
pub mod spectral;
pub mod sphere;
pub mod sweep;

pub use error::{Error, Result};
