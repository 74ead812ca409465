//! Möbius geometry on the boundary R^d ∪ {∞} of upper half-space and on half-space itself.

mod linalg;
mod mobius;
mod region;

pub use linalg::{Mat, Vect, MAX_DIM};
pub use mobius::{
    apply, busemann, compose, deriv, grad_log_deriv, hyperbolic_distance, invert, BoundaryPoint,
    HalfSpacePoint, Metric, MobiusMap, Tolerances, TOL_ANALYTIC, TOL_FINITE_DIFF, TOL_FIXES_INFINITY,
    TOL_STRUCTURAL,
};
pub use region::ChartBox;
