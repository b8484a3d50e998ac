//! Membrane equilibrium analysis of shell surfaces with physics-informed networks.
//!
//! The crate solves the second-order membrane equation for the surface height
//! `f(x1, x2)` of a shell whose horizontal stresses come from an Airy stress
//! function, using either a soft boundary penalty or an exact boundary
//! composition `f = D * N + G`.

pub mod config;
pub mod error;
pub mod geometry;
pub mod hard_bc;
pub mod mea;
pub mod network;
pub mod postproc;
pub mod reference;
pub mod residual;
pub mod run;
pub mod trainer;
pub mod verify;

pub use error::{MeaError, Result};
