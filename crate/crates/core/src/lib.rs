#![cfg_attr(not(feature = "std"), no_std)]

//! Solvers for cell colonies described as time-evolving probability measures.
//!
//! The state of a colony is a [`HybridMeasure`]: a mixture, with weight `u`, of
//! `N` equally weighted Dirac atoms and an absolutely continuous density stored
//! on a uniform Cartesian grid. Cells move with a nonlocal velocity field built
//! from an [`InteractionKernel`] plus an optional chemotactic drift.
//!
//! Modules:
//! - [`measure`]: the hybrid measure and its mass queries.
//! - [`interaction`]: kernels and the nonlocal velocity field.
//! - [`chemical`]: reaction-diffusion of the chemical and taxis operators.
//! - [`transport`]: the operator-split time stepper.
//! - [`local_models`]: small sensing radius expansions in one dimension.
//! - [`particle_mc`]: the interacting particle SDE and Wasserstein comparisons.
//! - [`clusters`]: cluster detection used to summarise simulations.
//! - [`scenario`]: simulation settings and the aggregation test presets.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; `parallel` enables rayon for point-wise field evaluation.

extern crate alloc;

pub mod chemical;
pub mod clusters;
mod error;
pub mod grid;
pub mod interaction;
mod linalg;
mod par;
pub mod local_models;
pub mod math;
pub mod measure;
pub mod particle_mc;
pub mod scenario;
pub mod transport;

pub use crate::error::Error;
pub use crate::grid::{DomainGrid, Region};
pub use crate::interaction::{InteractionKernel, KernelProfile, Neighborhood};
pub use crate::math::Vec2;
pub use crate::measure::HybridMeasure;

pub type Result<T, E = Error> = core::result::Result<T, E>;
