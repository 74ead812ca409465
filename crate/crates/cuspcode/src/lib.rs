//! Boundary coding of geodesic flows for geometrically finite hyperbolic groups with cusps,
//! twisted transfer operators on the resulting branch systems, and empirical checks of their
//! tail, contraction, spectral and mixing properties.

pub mod boundary_geometry;
pub mod coding_builder;
pub mod error;
pub mod flow_sim;
pub mod group_model;
pub mod registry;
pub mod spectral_engine;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
