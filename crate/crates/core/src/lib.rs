//! Semiclassical-gravity collapse machinery.
//!
//! The crate computes Diósi-Penrose (DP) energies of pairs of mass
//! distributions, the state and bundle energy increases and decay rates
//! they induce in a superposition, time-integrated competition actions in
//! Newtonian and weak-field relativistic form, and simulates the
//! stochastic decay cascade whose final-state statistics follow Born's
//! rule.
//!
//! Grid loops and Monte Carlo batches run on rayon when the `parallel`
//! feature is enabled (default). Every reduction is blocked in a fixed
//! order, so results are bit-identical across thread counts and between
//! the parallel and sequential paths.

pub mod actions;
pub mod bundles;
pub mod collapse_sim;
pub mod constants;
pub mod dpenergy;
pub mod error;
pub mod exec;
pub mod grid;
pub mod massdist;
pub mod sphere;
pub mod superposition;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::{DensityGrid, GridSpec, PotentialField, ScalarField};
pub use massdist::{MassDistribution, PointMass, SolverOptions, UniformSphere};
pub use superposition::{SuperpositionSpec, SuperpositionState};

/// How an energy-like quantity is evaluated: in closed form on sphere
/// sets, or on a voxel grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Analytic,
    Grid(GridSpec, SolverOptions),
}

impl Evaluation {
    pub fn grid(grid: GridSpec) -> Self {
        Evaluation::Grid(grid, SolverOptions::default())
    }
}
