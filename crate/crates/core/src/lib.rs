//! Spectral-Galerkin solver for the density-dependent incompressible
//! Hall-MHD system on the triply periodic box.

pub mod basis;
pub mod config;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod fixedpoint;
pub mod galerkin;
pub mod material;
pub mod mollifier;
pub mod ode;
pub mod par;
pub mod presets;
pub mod runner;
pub mod snapshot;
pub mod transport;
pub mod verification;

pub use error::{Error, Result};
