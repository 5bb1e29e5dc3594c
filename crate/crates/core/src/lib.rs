//! Shadow-limit reduction and stability analysis for a two-species
//! cross-diffusion system on an interval with Neumann boundaries.
//!
//! Pipeline: [`reduction`] (limiting amplitudes) -> [`solver`] (blow-up
//! branch by continuation) -> [`spectra`] (unstable eigenvalue) ->
//! [`evolution`] (growth in time), orchestrated by [`pipeline`].

pub mod acceptance;
pub mod basis;
pub mod config;
pub mod error;
pub mod evolution;
pub mod model;
pub mod output;
pub mod pipeline;
pub mod plots;
pub mod reduction;
pub mod solver;
pub mod spectra;

pub use basis::{Domain1D, EigenMode, FieldPair};
pub use config::RunConfig;
pub use error::{Result, SktError};
pub use model::{EpsilonContext, Params};
pub use reduction::{ReducedRoot, Sign};
pub use solver::{BranchPoint, NewtonOptions, StationaryProblem};
pub use spectra::EigenResult;
