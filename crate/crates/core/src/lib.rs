//! Melnikov analysis of a perturbed piecewise-linear Duffing-type system with `n + 1`
//! zones: closed-form and quadrature Melnikov functions, an event-driven Poincaré
//! return map, and a limit-cycle predictor built on the roots of the first
//! non-vanishing Melnikov function.

pub mod analysis;
pub mod config;
pub mod error;
pub mod flow;
pub mod io;
pub mod melnikov;
pub mod model;
pub mod ode;
pub mod quadrature;

pub use error::{Error, Result};
pub use model::{
    HarnessSystem, LienardHarness, PerturbedSystem, PeriodicOrbit, ShapeFunction, ZonePartition,
};
