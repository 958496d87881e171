//! Single-particle density-matrix evolution under GRW spontaneous
//! localisation in one dimension.
//!
//! Four solvers evolve the same [`master::DensityField`]:
//!
//! * [`master`] integrates the position-basis master equation with RK4.
//! * [`superop`] exponentiates the effective Hamiltonian on the doubled space
//!   (small grids only; used as an oracle).
//! * [`pathint`] composes short-time propagators with the per-step collapse
//!   factor.
//! * [`unravel`] samples jump trajectories and averages them.
//!
//! [`limits`] holds the phase-space transform, a Liouville reference solver
//! and decoherence diagnostics. [`scenarios`] builds the standard initial
//! states, and [`io`] covers configuration, snapshot files and CLI runs.

pub mod error;
pub mod io;
pub mod limits;
pub mod master;
pub mod model;
pub mod numerics;
pub mod pathint;
pub mod scenarios;
pub mod superop;
pub mod unravel;

pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, GridSpec, C64};
