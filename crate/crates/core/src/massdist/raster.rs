use super::{MassDistribution, SolverOptions};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{DensityGrid, GridSpec};

/// Cell density of analytic bodies: full body density for cells entirely
/// inside, zero outside, and the inside fraction of `subsample³` points for
/// cells cut by the boundary. Each body's cells are then rescaled so their
/// sum equals the body mass exactly. Overlapping bodies add. A voxel
/// distribution must already live on `grid`.
pub fn rasterize(dist: &MassDistribution, grid: &GridSpec, opts: &SolverOptions) -> Result<DensityGrid> {
    grid.validate()?;
    let spheres = match dist {
        MassDistribution::VoxelGrid { density } => {
            density.grid.ensure_same(grid, "voxel distribution")?;
            return Ok(density.clone());
        }
        _ => dist.spheres().unwrap_or_default(),
    };
    if opts.subsample == 0 {
        return Err(Error::InvalidGrid("subsample must be >= 1".into()));
    }
    let h = grid.spacing;
    let n = opts.subsample as usize;
    let offsets: Vec<f64> = (0..n).map(|m| h * ((m as f64 + 0.5) / n as f64 - 0.5)).collect();
    let mut out = DensityGrid::zeros(*grid);
    for s in spheres.iter().filter(|s| s.mass != 0.0) {
        let r2 = s.radius * s.radius;
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            let first = ((s.center[a] - s.radius - grid.origin[a]) / h).floor() - 1.0;
            let last = ((s.center[a] + s.radius - grid.origin[a]) / h).ceil() + 2.0;
            lo[a] = first.clamp(0.0, grid.dims[a] as f64) as usize;
            hi[a] = last.clamp(0.0, grid.dims[a] as f64) as usize;
        }
        if (0..3).any(|a| lo[a] >= hi[a]) {
            continue;
        }
        let ny = hi[1] - lo[1];
        let nz = hi[2] - lo[2];
        let cells = (hi[0] - lo[0]) * ny * nz;
        let fractions = exec::map_indexed(cells, opts.execution, |c| {
            let i = lo[0] + c / (ny * nz);
            let j = lo[1] + (c / nz) % ny;
            let k = lo[2] + c % nz;
            let node = grid.node_at(i, j, k);
            let rel = [node[0] - s.center[0], node[1] - s.center[1], node[2] - s.center[2]];
            let mut near = 0.0;
            let mut far = 0.0;
            for r in rel {
                let a = r.abs();
                near += (a - 0.5 * h).max(0.0).powi(2);
                far += (a + 0.5 * h).powi(2);
            }
            if far <= r2 {
                1.0
            } else if near >= r2 {
                0.0
            } else if n == 1 {
                if rel.iter().map(|r| r * r).sum::<f64>() < r2 { 1.0 } else { 0.0 }
            } else {
                let mut inside = 0usize;
                for ox in &offsets {
                    let dx = (rel[0] + ox).powi(2);
                    for oy in &offsets {
                        let dxy = dx + (rel[1] + oy).powi(2);
                        for oz in &offsets {
                            if dxy + (rel[2] + oz).powi(2) < r2 {
                                inside += 1;
                            }
                        }
                    }
                }
                inside as f64 / (n * n * n) as f64
            }
        });
        let fractions = match_first_moment(fractions, grid, s, lo, [ny, nz]);
        let filled: f64 = exec::pairwise_sum(&fractions);
        if filled == 0.0 {
            continue;
        }
        let rho = s.mass / (filled * grid.cell_volume());
        for (c, f) in fractions.into_iter().enumerate() {
            if f > 0.0 {
                let i = lo[0] + c / (ny * nz);
                let j = lo[1] + (c / nz) % ny;
                let k = lo[2] + c % nz;
                out.values[grid.index(i, j, k)] += rho * f;
            }
        }
    }
    Ok(out)
}

/// Boundary cells deposit their mass at the cell center, which moves surface
/// mass outward and biases every energy low at first order in `h`. Reweight
/// cut cells by `f + beta f(1-f)` so the mean distance from the center matches
/// the uniform ball value `3R/4`.
fn match_first_moment(mut f: Vec<f64>, grid: &GridSpec, s: &super::UniformSphere, lo: [usize; 3], [ny, nz]: [usize; 2]) -> Vec<f64> {
    let radius = |c: usize| {
        let node = grid.node_at(lo[0] + c / (ny * nz), lo[1] + (c / nz) % ny, lo[2] + c % nz);
        ((node[0] - s.center[0]).powi(2) + (node[1] - s.center[1]).powi(2) + (node[2] - s.center[2]).powi(2)).sqrt()
    };
    let mut acc = [0.0f64; 4];
    let mut interior = false;
    for (c, &fc) in f.iter().enumerate() {
        if fc <= 0.0 {
            continue;
        }
        interior |= fc >= 1.0;
        let r = radius(c);
        let g = fc * (1.0 - fc);
        acc[0] += fc * r;
        acc[1] += g * r;
        acc[2] += fc;
        acc[3] += g;
    }
    let target = 0.75 * s.radius;
    let denom = acc[1] - target * acc[3];
    if !interior || denom.abs() < 1e-300 {
        return f;
    }
    let beta = (target * acc[2] - acc[0]) / denom;
    if !beta.is_finite() || beta.abs() > 4.0 {
        return f;
    }
    for fc in f.iter_mut().filter(|fc| **fc > 0.0 && **fc < 1.0) {
        *fc = (*fc + beta * *fc * (1.0 - *fc)).clamp(0.0, 1.0);
    }
    f
}
