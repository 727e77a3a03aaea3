//! The discrete Coulomb kernel on a uniform grid and its two evaluation
//! backends: direct summation over occupied cells, and zero-padded FFT
//! convolution. Both apply the same kernel table.
//!
//! Off-diagonal entries are `1 / |offset|`. A cell acting on its own node
//! is treated as a ball of equal volume, giving `(3/2) / r_eq` with
//! `r_eq = h (3 / 4π)^(1/3)`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::exec::{self, Execution};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Direct when the occupied-cell count makes it cheaper than an FFT.
    #[default]
    Auto,
    Direct,
    Fft,
}

#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    grid: GridSpec,
    /// Indexed by absolute offsets `(|di|, |dj|, |dk|)` in `grid` layout.
    table: Vec<f64>,
}

impl DiscreteKernel {
    pub fn new(grid: &GridSpec) -> Self {
        let h = grid.spacing;
        let self_term = 1.5 / grid.equivalent_radius();
        let table = (0..grid.len())
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                if idx == 0 {
                    self_term
                } else {
                    1.0 / (h * ((i * i + j * j + k * k) as f64).sqrt())
                }
            })
            .collect();
        DiscreteKernel { grid: *grid, table }
    }

    #[inline]
    pub fn between(&self, a: [usize; 3], b: [usize; 3]) -> f64 {
        self.table[self.grid.index(a[0].abs_diff(b[0]), a[1].abs_diff(b[1]), a[2].abs_diff(b[2]))]
    }

    /// `out[t] = Σ_s density[s] · h³ · K(t − s)`.
    pub fn apply(&self, density: &[f64], backend: Backend, execution: Execution) -> Vec<f64> {
        assert_eq!(density.len(), self.grid.len());
        let occupied = density.iter().filter(|v| **v != 0.0).count();
        let backend = match backend {
            Backend::Auto => {
                let n = self.grid.len() as f64;
                let fft_cost = 8.0 * 8.0 * n * (8.0 * n).log2().max(1.0);
                if (occupied as f64) * n <= fft_cost {
                    Backend::Direct
                } else {
                    Backend::Fft
                }
            }
            b => b,
        };
        match backend {
            Backend::Fft => self.apply_fft(density, execution),
            _ => self.apply_direct(density, execution),
        }
    }

    fn apply_direct(&self, density: &[f64], execution: Execution) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        let sources: Vec<([usize; 3], f64)> = density
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(idx, v)| (self.grid.coords(idx), v * vol))
            .collect();
        let mut out = vec![0.0; self.grid.len()];
        exec::fill_indexed(&mut out, execution, |t, o| {
            let tc = self.grid.coords(t);
            let mut acc = exec::NeumaierSum::default();
            for (sc, m) in &sources {
                acc.add(m * self.between(tc, *sc));
            }
            *o = acc.value();
        });
        out
    }

    fn apply_fft(&self, density: &[f64], execution: Execution) -> Vec<f64> {
        let dims = self.grid.dims;
        let pdims = dims.map(|d| (2 * d).next_power_of_two());
        let plen = pdims[0] * pdims[1] * pdims[2];
        let pidx = |i: usize, j: usize, k: usize| (i * pdims[1] + j) * pdims[2] + k;
        let vol = self.grid.cell_volume();

        let mut mass = vec![Complex64::new(0.0, 0.0); plen];
        let mut kern = vec![Complex64::new(0.0, 0.0); plen];
        for idx in 0..self.grid.len() {
            let [i, j, k] = self.grid.coords(idx);
            mass[pidx(i, j, k)] = Complex64::new(density[idx] * vol, 0.0);
        }
        let wrap = |a: usize, n: usize, p: usize| -> Option<usize> {
            if a < n {
                Some(a)
            } else if a > p - n {
                Some(p - a)
            } else {
                None
            }
        };
        for i in 0..pdims[0] {
            let Some(oi) = wrap(i, dims[0], pdims[0]) else { continue };
            for j in 0..pdims[1] {
                let Some(oj) = wrap(j, dims[1], pdims[1]) else { continue };
                for k in 0..pdims[2] {
                    let Some(ok) = wrap(k, dims[2], pdims[2]) else { continue };
                    kern[pidx(i, j, k)] = Complex64::new(self.table[self.grid.index(oi, oj, ok)], 0.0);
                }
            }
        }
        let mut planner = FftPlanner::new();
        fft3(&mut mass, pdims, &mut planner, false, execution);
        fft3(&mut kern, pdims, &mut planner, false, execution);
        for (m, k) in mass.iter_mut().zip(&kern) {
            *m *= k;
        }
        fft3(&mut mass, pdims, &mut planner, true, execution);
        let scale = 1.0 / plen as f64;
        (0..self.grid.len())
            .map(|idx| {
                let [i, j, k] = self.grid.coords(idx);
                mass[pidx(i, j, k)].re * scale
            })
            .collect()
    }
}

/// In-place 3-D FFT as three passes of 1-D transforms.
fn fft3(data: &mut [Complex64], dims: [usize; 3], planner: &mut FftPlanner<f64>, inverse: bool, execution: Execution) {
    for axis in (0..3).rev() {
        let n = dims[axis];
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride = match axis {
            0 => dims[1] * dims[2],
            1 => dims[2],
            _ => 1,
        };
        let lines = data.len() / n;
        let line_start = |l: usize| -> usize {
            match axis {
                0 => l,
                1 => (l / dims[2]) * dims[1] * dims[2] + l % dims[2],
                _ => l * n,
            }
        };
        let src: &[Complex64] = data;
        let transformed: Vec<Vec<Complex64>> = exec::map_indexed(lines, execution, |l| {
            let start = line_start(l);
            let mut buf: Vec<Complex64> = (0..n).map(|m| src[start + m * stride]).collect();
            fft.process(&mut buf);
            buf
        });
        for (l, buf) in transformed.into_iter().enumerate() {
            let start = line_start(l);
            for (m, v) in buf.into_iter().enumerate() {
                data[start + m * stride] = v;
            }
        }
    }
}
