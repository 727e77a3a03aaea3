//! Uniform voxel grids and the scalar fields that live on them.
//!
//! Nodes sit at cell centers, `origin + spacing * (i, j, k)`. Storage is
//! row-major with the last axis fastest: `index = (i * ny + j) * nz + k`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], spacing: f64, dims: [usize; 3]) -> Result<Self> {
        let g = GridSpec { origin, spacing, dims };
        g.validate()?;
        Ok(g)
    }

    /// Cube of `n` nodes per axis centred on `center`, whose node range spans
    /// `[center - half_width, center + half_width]`.
    pub fn cube(center: [f64; 3], half_width: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 nodes per axis, got {n}")));
        }
        let spacing = 2.0 * half_width / (n - 1) as f64;
        let origin = [center[0] - half_width, center[1] - half_width, center[2] - half_width];
        Self::new(origin, spacing, [n, n, n])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be > 0, got {}", self.spacing)));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidGrid(format!("every dimension must be >= 2, got {:?}", self.dims)));
        }
        self.dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidGrid("cell count overflows usize".into()))?;
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.coords(idx);
        self.node_at(i, j, k)
    }

    #[inline]
    pub fn node_at(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + self.spacing * i as f64,
            self.origin[1] + self.spacing * j as f64,
            self.origin[2] + self.spacing * k as f64,
        ]
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing * self.spacing * self.spacing
    }

    /// Radius of the ball with the same volume as one cell.
    #[inline]
    pub fn equivalent_radius(&self) -> f64 {
        self.spacing * (3.0 / (4.0 * std::f64::consts::PI)).cbrt()
    }

    /// Grid with doubled spacing whose cells are the 2x2x2 blocks of this one.
    pub fn coarsened(&self) -> Result<GridSpec> {
        if self.dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidGrid(format!("cannot coarsen dims {:?}", self.dims)));
        }
        let h = self.spacing;
        GridSpec::new(
            [self.origin[0] + 0.5 * h, self.origin[1] + 0.5 * h, self.origin[2] + 0.5 * h],
            2.0 * h,
            [self.dims[0] / 2, self.dims[1] / 2, self.dims[2] / 2],
        )
    }

    pub fn translated(&self, by: [f64; 3]) -> GridSpec {
        GridSpec { origin: [self.origin[0] + by[0], self.origin[1] + by[1], self.origin[2] + by[2]], ..*self }
    }

    pub fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{what}: {self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Averages 2x2x2 blocks of `values` onto `grid.coarsened()`.
pub(crate) fn coarsen_values(grid: &GridSpec, values: &[f64]) -> Result<(GridSpec, Vec<f64>)> {
    let coarse = grid.coarsened()?;
    let mut out = vec![0.0; coarse.len()];
    for (idx, v) in out.iter_mut().enumerate() {
        let [ci, cj, ck] = coarse.coords(idx);
        let mut s = 0.0;
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    s += values[grid.index(2 * ci + di, 2 * cj + dj, 2 * ck + dk)];
                }
            }
        }
        *v = s / 8.0;
    }
    Ok((coarse, out))
}

fn write_binary<W: Write>(grid: &GridSpec, values: &[f64], mut w: W) -> Result<()> {
    for d in grid.dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    w.write_all(&grid.spacing.to_le_bytes())?;
    for o in grid.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_binary<R: Read>(mut r: R) -> Result<(GridSpec, Vec<f64>)> {
    let mut b8 = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut b8)?;
        *d = usize::try_from(u64::from_le_bytes(b8))
            .map_err(|_| Error::InvalidGrid("dimension exceeds usize".into()))?;
    }
    r.read_exact(&mut b8)?;
    let spacing = f64::from_le_bytes(b8);
    let mut origin = [0.0; 3];
    for o in &mut origin {
        r.read_exact(&mut b8)?;
        *o = f64::from_le_bytes(b8);
    }
    let grid = GridSpec::new(origin, spacing, dims)?;
    let mut values = vec![0.0; grid.len()];
    for v in &mut values {
        r.read_exact(&mut b8)?;
        *v = f64::from_le_bytes(b8);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Parse("trailing bytes after grid body".into()));
    }
    Ok((grid, values))
}

fn write_csv<W: Write>(grid: &GridSpec, values: &[f64], column: &str, mut w: W) -> Result<()> {
    writeln!(w, "i,j,k,x,y,z,{column}")?;
    for (idx, v) in values.iter().enumerate() {
        let [i, j, k] = grid.coords(idx);
        let [x, y, z] = grid.node_at(i, j, k);
        writeln!(w, "{i},{j},{k},{x:.17e},{y:.17e},{z:.17e},{v:.17e}")?;
    }
    Ok(())
}

macro_rules! scalar_field {
    ($name:ident, $column:literal, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            pub grid: GridSpec,
            pub values: Vec<f64>,
        }

        impl $name {
            pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
                grid.validate()?;
                if values.len() != grid.len() {
                    return Err(Error::InvalidGrid(format!(
                        "expected {} values, got {}",
                        grid.len(),
                        values.len()
                    )));
                }
                Ok($name { grid, values })
            }

            pub fn zeros(grid: GridSpec) -> Self {
                $name { values: vec![0.0; grid.len()], grid }
            }

            /// Little-endian binary layout: dims (3 x u64), spacing (f64),
            /// origin (3 x f64), then the row-major body as f64.
            pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
                write_binary(&self.grid, &self.values, w)
            }

            pub fn read_binary<R: Read>(r: R) -> Result<Self> {
                let (grid, values) = read_binary(r)?;
                Ok($name { grid, values })
            }

            pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
                write_csv(&self.grid, &self.values, $column, w)
            }

            pub fn coarsened(&self) -> Result<Self> {
                let (grid, values) = coarsen_values(&self.grid, &self.values)?;
                Ok($name { grid, values })
            }

            /// `sum(values) * cell volume`.
            pub fn integral(&self) -> f64 {
                crate::exec::pairwise_sum(&self.values) * self.grid.cell_volume()
            }
        }
    };
}

scalar_field!(DensityGrid, "density", "Mass density on a voxel grid (kg/m^3).");
scalar_field!(PotentialField, "potential", "Gravitational potential at grid nodes (J/kg).");
scalar_field!(ScalarField, "value", "Any other scalar sampled at grid nodes.");

impl DensityGrid {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
