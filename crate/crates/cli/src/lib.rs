//! Verification harness for the tensor-calculus engine.
//!
//! The library half of the `gravitensor` binary. It builds the named field
//! configurations, runs every identity check against the tolerance catalog,
//! measures convergence orders across grid refinements, reruns the numeric
//! oracles, and drives the gauge-deformation experiment. The binary wraps
//! these into the `verify`, `convergence`, `oracle`, and `report`
//! subcommands and serializes results as `gravitensor-report/1` documents.

pub mod cases;
pub mod config;
pub mod convergence;
pub mod deviations;
pub mod gauge;
pub mod oracle;
pub mod report;
pub mod suite;
pub mod tolerances;
