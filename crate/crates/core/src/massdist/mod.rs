//! Mass distributions, rasterization and gravitational potentials.

mod kernel;
mod raster;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::{DensityGrid, GridSpec, PotentialField};
use crate::sphere;
use crate::superposition::SuperpositionSpec;

pub use kernel::{Backend, DiscreteKernel};
pub use raster::rasterize;

/// A point mass smeared over a uniform ball of radius `smearing_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub mass: f64,
    pub position: [f64; 3],
    pub smearing_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformSphere {
    pub mass: f64,
    pub center: [f64; 3],
    pub radius: f64,
}

impl UniformSphere {
    pub fn density(&self) -> f64 {
        self.mass / (4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3))
    }
}

impl From<PointMass> for UniformSphere {
    fn from(p: PointMass) -> Self {
        UniformSphere { mass: p.mass, center: p.position, radius: p.smearing_radius }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MassDistribution {
    PointSet { points: Vec<PointMass> },
    UniformSphereSet { spheres: Vec<UniformSphere> },
    VoxelGrid { density: DensityGrid },
}

impl MassDistribution {
    pub fn empty() -> Self {
        MassDistribution::UniformSphereSet { spheres: Vec::new() }
    }

    pub fn sphere(mass: f64, center: [f64; 3], radius: f64) -> Self {
        MassDistribution::UniformSphereSet { spheres: vec![UniformSphere { mass, center, radius }] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDistribution(msg));
        match self {
            MassDistribution::VoxelGrid { density } => {
                density.grid.validate()?;
                if density.values.len() != density.grid.len() {
                    return bad("voxel body length does not match grid".into());
                }
                if let Some(v) = density.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return bad(format!("density values must be finite and >= 0, found {v}"));
                }
                Ok(())
            }
            _ => {
                for s in self.spheres().unwrap_or_default() {
                    if !(s.mass.is_finite() && s.mass >= 0.0) {
                        return bad(format!("mass must be finite and >= 0, got {}", s.mass));
                    }
                    if !(s.radius.is_finite() && s.radius > 0.0) {
                        return bad(format!("radius must be finite and > 0, got {}", s.radius));
                    }
                    if s.center.iter().any(|c| !c.is_finite()) {
                        return bad("position must be finite".into());
                    }
                }
                Ok(())
            }
        }
    }

    /// Analytic bodies as uniform balls. Smeared points take the same path.
    pub fn spheres(&self) -> Option<Vec<UniformSphere>> {
        match self {
            MassDistribution::PointSet { points } => Some(points.iter().copied().map(UniformSphere::from).collect()),
            MassDistribution::UniformSphereSet { spheres } => Some(spheres.clone()),
            MassDistribution::VoxelGrid { .. } => None,
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, MassDistribution::VoxelGrid { .. })
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            MassDistribution::VoxelGrid { density } => density.integral(),
            _ => self.spheres().unwrap_or_default().iter().map(|s| s.mass).sum(),
        }
    }

    pub fn translated(&self, by: [f64; 3]) -> Self {
        let shift = |c: [f64; 3]| [c[0] + by[0], c[1] + by[1], c[2] + by[2]];
        match self {
            MassDistribution::PointSet { points } => MassDistribution::PointSet {
                points: points.iter().map(|p| PointMass { position: shift(p.position), ..*p }).collect(),
            },
            MassDistribution::UniformSphereSet { spheres } => MassDistribution::UniformSphereSet {
                spheres: spheres.iter().map(|s| UniformSphere { center: shift(s.center), ..*s }).collect(),
            },
            MassDistribution::VoxelGrid { density } => MassDistribution::VoxelGrid {
                density: DensityGrid { grid: density.grid.translated(by), values: density.values.clone() },
            },
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            MassDistribution::PointSet { points } => MassDistribution::PointSet {
                points: points.iter().map(|p| PointMass { mass: p.mass * factor, ..*p }).collect(),
            },
            MassDistribution::UniformSphereSet { spheres } => MassDistribution::UniformSphereSet {
                spheres: spheres.iter().map(|s| UniformSphere { mass: s.mass * factor, ..*s }).collect(),
            },
            MassDistribution::VoxelGrid { density } => MassDistribution::VoxelGrid {
                density: DensityGrid {
                    grid: density.grid,
                    values: density.values.iter().map(|v| v * factor).collect(),
                },
            },
        }
    }

    /// Concatenation of two analytic distributions.
    pub fn union(&self, other: &MassDistribution) -> Result<Self> {
        match (self.spheres(), other.spheres()) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Ok(MassDistribution::UniformSphereSet { spheres: a })
            }
            _ => Err(Error::NotAnalytic),
        }
    }
}

/// Options shared by every grid evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub backend: Backend,
    pub execution: Execution,
    /// Per-axis subsamples used for cells cut by a body boundary; 1 tests
    /// the cell center only.
    pub subsample: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { backend: Backend::Auto, execution: Execution::default(), subsample: 2 }
    }
}

/// Φ(x) = −G ∫ ρ(y)/|x − y| d³y. Balls use their interior/exterior forms;
/// voxel cells act as balls of the cell's equivalent volume.
pub fn potential_at(dist: &MassDistribution, x: [f64; 3], constants: &PhysicalConstants) -> Result<f64> {
    dist.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDistribution("evaluation point must be finite".into()));
    }
    let dist_to = |c: [f64; 3]| ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
    match dist {
        MassDistribution::VoxelGrid { density } => {
            let grid = &density.grid;
            let vol = grid.cell_volume();
            let r_eq = grid.equivalent_radius();
            let mut acc = crate::exec::NeumaierSum::default();
            for (idx, &rho) in density.values.iter().enumerate() {
                if rho != 0.0 {
                    acc.add(sphere::ball_potential(constants.g, rho * vol, r_eq, dist_to(grid.node(idx))));
                }
            }
            Ok(acc.value())
        }
        _ => Ok(dist
            .spheres()
            .unwrap_or_default()
            .iter()
            .map(|s| sphere::ball_potential(constants.g, s.mass, s.radius, dist_to(s.center)))
            .sum()),
    }
}

const PADDING_CELLS: usize = 2;

/// Errors unless the support keeps `PADDING_CELLS` empty cells to every face.
pub fn check_padding(dist: &MassDistribution, grid: &GridSpec) -> Result<()> {
    let h = grid.spacing;
    match dist {
        MassDistribution::VoxelGrid { density } => {
            for (idx, &v) in density.values.iter().enumerate() {
                if v != 0.0 {
                    let c = density.grid.coords(idx);
                    for axis in 0..3 {
                        if c[axis] < PADDING_CELLS || c[axis] + PADDING_CELLS >= density.grid.dims[axis] {
                            return Err(Error::GridTooSmall { axis, margin: PADDING_CELLS });
                        }
                    }
                }
            }
        }
        _ => {
            let margin = (PADDING_CELLS as f64 - 0.5) * h;
            for s in dist.spheres().unwrap_or_default() {
                if s.mass == 0.0 {
                    continue;
                }
                for axis in 0..3 {
                    let lo = grid.origin[axis] + margin;
                    let hi = grid.origin[axis] + (grid.dims[axis] - 1) as f64 * h - margin;
                    if s.center[axis] - s.radius < lo || s.center[axis] + s.radius > hi {
                        return Err(Error::GridTooSmall { axis, margin: PADDING_CELLS });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Potential of `dist` at every node of `grid`, using the discrete kernel.
pub fn solve_potential(
    dist: &MassDistribution,
    grid: &GridSpec,
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<PotentialField> {
    grid.validate()?;
    dist.validate()?;
    check_padding(dist, grid)?;
    let density = rasterize(dist, grid, opts)?;
    potential_of_density(&density, constants, opts)
}

/// Potential of an already-rasterized density on its own grid.
pub fn potential_of_density(
    density: &DensityGrid,
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<PotentialField> {
    constants.validate()?;
    let kernel = DiscreteKernel::new(&density.grid);
    let mut values = kernel.apply(&density.values, opts.backend, opts.execution);
    for v in &mut values {
        *v *= -constants.g;
    }
    PotentialField::new(density.grid, values)
}

/// `Σ |c_i|² ρ_i` rasterized on `grid`.
pub fn mean_distribution(spec: &SuperpositionSpec, grid: &GridSpec, opts: &SolverOptions) -> Result<DensityGrid> {
    spec.validate()?;
    let mut out = DensityGrid::zeros(*grid);
    for st in &spec.states {
        let rho = rasterize(&st.dist, grid, opts)?;
        for (o, r) in out.values.iter_mut().zip(&rho.values) {
            *o += st.intensity * r;
        }
    }
    Ok(out)
}

/// `Σ |c_i|² Φ_i` with each Φ_i solved on `grid`.
pub fn mean_potential(
    spec: &SuperpositionSpec,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<PotentialField> {
    spec.validate()?;
    let mut out = PotentialField::zeros(*grid);
    for st in &spec.states {
        let phi = solve_potential(&st.dist, grid, &spec.constants, opts)?;
        for (o, p) in out.values.iter_mut().zip(&phi.values) {
            *o += st.intensity * p;
        }
    }
    Ok(out)
}
