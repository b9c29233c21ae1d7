//! Numerical tensor calculus for Lagrangian field theory on periodic
//! four-dimensional lattices.
//!
//! The crate builds metric geometry (connection, curvature, boundary vector,
//! densitized metric) from a sampled metric field, derives canonical
//! energy-momentum structures for gravitational and matter sectors through a
//! generic variational engine, and exposes every identity relating them as a
//! measurable residual. Identities that are pointwise algebra over shared
//! stencil derivatives hold to rounding; identities that commute a stencil
//! with a product hold to truncation and are verified by their convergence
//! order instead.

pub mod assembly;
pub mod density;
pub mod field;
pub mod geometry;
pub mod grav;
pub mod grid;
pub mod matter;
pub mod point_metric;
pub mod residual;
pub mod stencil;
pub mod sum;
pub mod variational;

pub use field::{Layout, TensorField, Variance};
pub use grid::{Grid, StencilOrder, DIM};
pub use residual::Residual;
