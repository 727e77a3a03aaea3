//! Diósi-Penrose energy in its double-integral, potential and field forms,
//! plus the clock-rate, fuzziness, lifetime and field-uncertainty
//! quantities that go with it.
//!
//! All three forms carry the prefactor ξ: the double integral as
//! `ξG ∬ Δρ Δρ / r`, the potential form as `ξ ∫ Δρ (Φ2 − Φ1)` and the field
//! form as `ξ/(4πG) ∫ |g1 − g2|²`. At ξ = 1/2 these are the three textbook
//! expressions, which agree by Green's first identity.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{coarsen_values, DensityGrid, GridSpec, PotentialField};
use crate::massdist::{self, rasterize, Backend, DiscreteKernel, MassDistribution, SolverOptions, UniformSphere};
use crate::sphere;
use crate::Evaluation;

/// Relative size of the error estimate above which a result is flagged.
pub const UNCERTAIN_FRACTION: f64 = 0.05;

/// Upper bound on |Φ|/c² accepted by the weak-field formulas.
pub const WEAK_FIELD_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DpMethod {
    DoubleIntegral,
    PotentialForm,
    FieldForm,
}

impl DpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DpMethod::DoubleIntegral => "double_integral",
            DpMethod::PotentialForm => "potential_form",
            DpMethod::FieldForm => "field_form",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpEnergyResult {
    pub value: f64,
    pub method: DpMethod,
    pub xi: f64,
    /// `None` for closed-form evaluation.
    pub grid: Option<GridSpec>,
    /// Half-resolution Richardson difference for grid methods, 0 for closed form.
    pub estimated_error: f64,
    pub runtime_ms: f64,
}

impl DpEnergyResult {
    fn new(value: f64, method: DpMethod, xi: f64, grid: Option<GridSpec>, estimated_error: f64, start: Instant) -> Self {
        let r = DpEnergyResult {
            value,
            method,
            xi,
            grid,
            estimated_error,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        if r.is_uncertain() {
            log::warn!(
                "{} DP energy {:.6e} has estimated error {:.3e} (> {}%)",
                method.as_str(),
                value,
                estimated_error,
                UNCERTAIN_FRACTION * 100.0
            );
        }
        r
    }

    pub fn is_uncertain(&self) -> bool {
        self.estimated_error > UNCERTAIN_FRACTION * self.value.abs()
    }

    /// `{value, method, xi, estimated_error, grid_dims, runtime_ms}`.
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "value": self.value,
            "method": self.method,
            "xi": self.xi,
            "estimated_error": self.estimated_error,
            "grid_dims": self.grid.map(|g| g.dims),
            "runtime_ms": self.runtime_ms,
        })
    }
}

/// −∇Φ on grid nodes: fourth-order central differences where the five-point
/// stencil fits, second-order central next to a face, one-sided on faces.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub grid: GridSpec,
    pub values: Vec<[f64; 3]>,
}

impl GradientField {
    pub fn from_potential(phi: &PotentialField) -> Self {
        let grid = phi.grid;
        let h = grid.spacing;
        let v = &phi.values;
        let values = exec::map_indexed(grid.len(), Execution::default(), |idx| {
            let c = grid.coords(idx);
            let mut g = [0.0; 3];
            for axis in 0..3 {
                let n = grid.dims[axis];
                let at = |m: usize| {
                    let mut cc = c;
                    cc[axis] = m;
                    v[grid.index(cc[0], cc[1], cc[2])]
                };
                let m = c[axis];
                let d = if m == 0 {
                    (at(1) - at(0)) / h
                } else if m == n - 1 {
                    (at(n - 1) - at(n - 2)) / h
                } else if m == 1 || m == n - 2 {
                    (at(m + 1) - at(m - 1)) / (2.0 * h)
                } else {
                    (8.0 * (at(m + 1) - at(m - 1)) - (at(m + 2) - at(m - 2))) / (12.0 * h)
                };
                g[axis] = -d;
            }
            g
        });
        GradientField { grid, values }
    }

    fn coarsened(&self) -> Result<GradientField> {
        let mut comps = Vec::with_capacity(3);
        let mut coarse = self.grid;
        for axis in 0..3 {
            let vals: Vec<f64> = self.values.iter().map(|g| g[axis]).collect();
            let (cg, cv) = coarsen_values(&self.grid, &vals)?;
            coarse = cg;
            comps.push(cv);
        }
        let values = (0..coarse.len()).map(|i| [comps[0][i], comps[1][i], comps[2][i]]).collect();
        Ok(GradientField { grid: coarse, values })
    }
}

/// `Σ_i Δm_i Σ_j Δm_j K_ij` with the discrete kernel of `grid`.
pub fn grid_double_sum(delta: &[f64], grid: &GridSpec, execution: Execution) -> f64 {
    let kernel = DiscreteKernel::new(grid);
    let vol = grid.cell_volume();
    let occupied: Vec<([usize; 3], f64)> = delta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (grid.coords(i), v * vol))
        .collect();
    let m = occupied.len() as f64;
    let n = grid.len() as f64;
    if m * m <= 64.0 * 8.0 * n * (8.0 * n).log2().max(1.0) {
        exec::sum_indexed(occupied.len(), execution, |a| {
            let (ca, ma) = occupied[a];
            let mut acc = exec::NeumaierSum::default();
            for (cb, mb) in &occupied {
                acc.add(mb * kernel.between(ca, *cb));
            }
            ma * acc.value()
        })
    } else {
        let conv = kernel.apply(delta, Backend::Fft, execution);
        exec::sum_indexed(delta.len(), execution, |i| delta[i] * vol * conv[i])
    }
}

fn sphere_sets(a: &MassDistribution, b: &MassDistribution) -> Result<(Vec<UniformSphere>, Vec<UniformSphere>)> {
    match (a.spheres(), b.spheres()) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(Error::NotAnalytic),
    }
}

/// `ξ G ∬ (ρ1 − ρ2)(x) (ρ1 − ρ2)(y) / |x − y|`.
pub fn dp_energy_double_integral(
    rho1: &MassDistribution,
    rho2: &MassDistribution,
    constants: &PhysicalConstants,
    eval: &Evaluation,
) -> Result<DpEnergyResult> {
    let start = Instant::now();
    constants.validate()?;
    rho1.validate()?;
    rho2.validate()?;
    match eval {
        Evaluation::Analytic => {
            let (a, b) = sphere_sets(rho1, rho2)?;
            let same = sphere::set_interaction(&a, &a) + sphere::set_interaction(&b, &b);
            let cross = sphere::set_interaction(&a, &b);
            let value = constants.xi * constants.g * (same - 2.0 * cross);
            Ok(DpEnergyResult::new(value, DpMethod::DoubleIntegral, constants.xi, None, 0.0, start))
        }
        Evaluation::Grid(grid, opts) => {
            massdist::check_padding(rho1, grid)?;
            massdist::check_padding(rho2, grid)?;
            let r1 = rasterize(rho1, grid, opts)?;
            let r2 = rasterize(rho2, grid, opts)?;
            let delta: Vec<f64> = r1.values.iter().zip(&r2.values).map(|(a, b)| a - b).collect();
            let scale = constants.xi * constants.g;
            let value = scale * grid_double_sum(&delta, grid, opts.execution);
            let (coarse, cdelta) = coarsen_values(grid, &delta)?;
            let coarse_value = scale * grid_double_sum(&cdelta, &coarse, opts.execution);
            Ok(DpEnergyResult::new(
                value,
                DpMethod::DoubleIntegral,
                constants.xi,
                Some(*grid),
                (value - coarse_value).abs(),
                start,
            ))
        }
    }
}

fn potential_form_value(
    rho1: &[f64],
    rho2: &[f64],
    phi1: &[f64],
    phi2: &[f64],
    grid: &GridSpec,
    xi: f64,
    execution: Execution,
) -> f64 {
    let sum = exec::sum_indexed(rho1.len(), execution, |i| (rho1[i] - rho2[i]) * (phi2[i] - phi1[i]));
    xi * sum * grid.cell_volume()
}

fn check_common(grids: &[&GridSpec]) -> Result<()> {
    for g in &grids[1..] {
        grids[0].ensure_same(g, "fields must share one grid")?;
    }
    Ok(())
}

/// `ξ ∫ (ρ1 − ρ2)(Φ2 − Φ1) d³x` on a shared grid.
pub fn dp_energy_potential_form(
    rho1: &DensityGrid,
    rho2: &DensityGrid,
    phi1: &PotentialField,
    phi2: &PotentialField,
    constants: &PhysicalConstants,
) -> Result<DpEnergyResult> {
    let start = Instant::now();
    constants.validate()?;
    check_common(&[&rho1.grid, &rho2.grid, &phi1.grid, &phi2.grid])?;
    let grid = rho1.grid;
    let execution = Execution::default();
    let value =
        potential_form_value(&rho1.values, &rho2.values, &phi1.values, &phi2.values, &grid, constants.xi, execution);
    let (c1, c2, p1, p2) = (rho1.coarsened()?, rho2.coarsened()?, phi1.coarsened()?, phi2.coarsened()?);
    let coarse =
        potential_form_value(&c1.values, &c2.values, &p1.values, &p2.values, &c1.grid, constants.xi, execution);
    Ok(DpEnergyResult::new(
        value,
        DpMethod::PotentialForm,
        constants.xi,
        Some(grid),
        (value - coarse).abs(),
        start,
    ))
}

fn field_form_value(g1: &GradientField, g2: &GradientField, constants: &PhysicalConstants) -> f64 {
    let sum = exec::sum_indexed(g1.values.len(), Execution::default(), |i| {
        let (a, b) = (g1.values[i], g2.values[i]);
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    });
    constants.xi / (4.0 * std::f64::consts::PI * constants.g) * sum * g1.grid.cell_volume()
}

/// `∫ |∇φ|²` over everything outside the grid box. Outside the box `φ` is
/// harmonic and vanishes at infinity, so the integral reduces to
/// `−∮ φ ∂φ/∂n` over the box faces (outward normal). Face values and normal
/// derivatives come from quadratic extrapolation of the three outermost nodes.
fn exterior_field_integral(phi: &[f64], grid: &GridSpec) -> f64 {
    let h = grid.spacing;
    let mut terms = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let n = grid.dims[axis];
        for (m0, m1, m2) in [(0, 1, 2), (n - 1, n - 2, n - 3)] {
            for a in 0..grid.dims[u] {
                for b in 0..grid.dims[v] {
                    let at = |m: usize| {
                        let mut c = [0usize; 3];
                        c[axis] = m;
                        c[u] = a;
                        c[v] = b;
                        phi[grid.index(c[0], c[1], c[2])]
                    };
                    let (f0, f1, f2) = (at(m0), at(m1), at(m2));
                    let face = (15.0 * f0 - 10.0 * f1 + 3.0 * f2) / 8.0;
                    let outward = (2.0 * f0 - 3.0 * f1 + f2) / h;
                    terms.push(-face * outward * h * h);
                }
            }
        }
    }
    exec::pairwise_sum(&terms)
}

fn field_form_total(phi1: &PotentialField, phi2: &PotentialField, constants: &PhysicalConstants) -> f64 {
    let inside = field_form_value(&GradientField::from_potential(phi1), &GradientField::from_potential(phi2), constants);
    let diff: Vec<f64> = phi1.values.iter().zip(&phi2.values).map(|(a, b)| a - b).collect();
    let outside = exterior_field_integral(&diff, &phi1.grid);
    inside + constants.xi / (4.0 * std::f64::consts::PI * constants.g) * outside
}

/// `ξ/(4πG) ∫ |g1 − g2|² d³x` inside the grid box only.
pub fn dp_energy_field_form_in_box(
    g1: &GradientField,
    g2: &GradientField,
    constants: &PhysicalConstants,
) -> Result<DpEnergyResult> {
    let start = Instant::now();
    constants.validate()?;
    check_common(&[&g1.grid, &g2.grid])?;
    let value = field_form_value(g1, g2, constants);
    let coarse = field_form_value(&g1.coarsened()?, &g2.coarsened()?, constants);
    Ok(DpEnergyResult::new(value, DpMethod::FieldForm, constants.xi, Some(g1.grid), (value - coarse).abs(), start))
}

/// `ξ/(4πG) ∫ |g1 − g2|² d³x` over all space: the box integral of the
/// differenced gradients plus the exterior part carried by the face flux.
pub fn dp_energy_field_form(
    phi1: &PotentialField,
    phi2: &PotentialField,
    constants: &PhysicalConstants,
) -> Result<DpEnergyResult> {
    let start = Instant::now();
    constants.validate()?;
    check_common(&[&phi1.grid, &phi2.grid])?;
    let value = field_form_total(phi1, phi2, constants);
    let coarse = field_form_total(&phi1.coarsened()?, &phi2.coarsened()?, constants);
    Ok(DpEnergyResult::new(value, DpMethod::FieldForm, constants.xi, Some(phi1.grid), (value - coarse).abs(), start))
}

/// Every form evaluated from one pair of distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct DpEnergyReport {
    pub double_integral: DpEnergyResult,
    pub potential_form: DpEnergyResult,
    pub field_form: DpEnergyResult,
    /// Closed-form value when both inputs are sphere sets.
    pub analytic: Option<DpEnergyResult>,
}

impl DpEnergyReport {
    pub fn grid_results(&self) -> [&DpEnergyResult; 3] {
        [&self.double_integral, &self.potential_form, &self.field_form]
    }

    /// Largest pairwise relative disagreement between the grid forms.
    pub fn max_relative_spread(&self) -> f64 {
        let r = self.grid_results();
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in i + 1..3 {
                let scale = r[i].value.abs().max(r[j].value.abs());
                if scale > 0.0 {
                    worst = worst.max((r[i].value - r[j].value).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Rasterized densities and solved potentials of two distributions.
#[derive(Debug, Clone)]
pub struct PairFields {
    pub rho1: DensityGrid,
    pub rho2: DensityGrid,
    pub phi1: PotentialField,
    pub phi2: PotentialField,
}

impl PairFields {
    pub fn solve(
        rho1: &MassDistribution,
        rho2: &MassDistribution,
        grid: &GridSpec,
        constants: &PhysicalConstants,
        opts: &SolverOptions,
    ) -> Result<Self> {
        massdist::check_padding(rho1, grid)?;
        massdist::check_padding(rho2, grid)?;
        let r1 = rasterize(rho1, grid, opts)?;
        let r2 = rasterize(rho2, grid, opts)?;
        let p1 = massdist::potential_of_density(&r1, constants, opts)?;
        let p2 = massdist::potential_of_density(&r2, constants, opts)?;
        Ok(PairFields { rho1: r1, rho2: r2, phi1: p1, phi2: p2 })
    }
}

pub fn dp_energy_report(
    rho1: &MassDistribution,
    rho2: &MassDistribution,
    grid: &GridSpec,
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<DpEnergyReport> {
    let double_integral = dp_energy_double_integral(rho1, rho2, constants, &Evaluation::Grid(*grid, *opts))?;
    let f = PairFields::solve(rho1, rho2, grid, constants, opts)?;
    let potential_form = dp_energy_potential_form(&f.rho1, &f.rho2, &f.phi1, &f.phi2, constants)?;
    let field_form = dp_energy_field_form(&f.phi1, &f.phi2, constants)?;
    let analytic = if rho1.is_analytic() && rho2.is_analytic() {
        Some(dp_energy_double_integral(rho1, rho2, constants, &Evaluation::Analytic)?)
    } else {
        None
    };
    Ok(DpEnergyReport { double_integral, potential_form, field_form, analytic })
}

/// `ds/dx⁰ ≈ 1 + Φ/c²`, valid while |Φ|/c² ≤ 0.01.
pub fn clock_rate_factor(phi: f64, constants: &PhysicalConstants) -> Result<f64> {
    constants.validate()?;
    let ratio = phi / (constants.c * constants.c);
    if !ratio.is_finite() || ratio.abs() > WEAK_FIELD_LIMIT {
        return Err(Error::WeakField { value: ratio.abs(), limit: WEAK_FIELD_LIMIT });
    }
    Ok(1.0 + ratio)
}

/// `(ΔE1, ΔE2) = (∫ρ1(Φ2 − Φ1), ∫ρ2(Φ1 − Φ2))`.
pub fn energy_fuzziness(
    rho1: &DensityGrid,
    rho2: &DensityGrid,
    phi1: &PotentialField,
    phi2: &PotentialField,
) -> Result<(f64, f64)> {
    check_common(&[&rho1.grid, &rho2.grid, &phi1.grid, &phi2.grid])?;
    let vol = rho1.grid.cell_volume();
    let n = rho1.values.len();
    let e = Execution::default();
    let d1 = exec::sum_indexed(n, e, |i| rho1.values[i] * (phi2.values[i] - phi1.values[i])) * vol;
    let d2 = exec::sum_indexed(n, e, |i| rho2.values[i] * (phi1.values[i] - phi2.values[i])) * vol;
    Ok((d1, d2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifetime {
    Finite(f64),
    /// Zero DP energy: the superposition never decays.
    NoDecay,
}

impl Lifetime {
    pub fn seconds(self) -> f64 {
        match self {
            Lifetime::Finite(t) => t,
            Lifetime::NoDecay => f64::INFINITY,
        }
    }
}

/// `T = ħ / E_G12`.
pub fn lifetime(dp_energy: f64, constants: &PhysicalConstants) -> Result<Lifetime> {
    constants.validate()?;
    if dp_energy.is_nan() || dp_energy < 0.0 {
        return Err(Error::NonPositive("DP energy must be >= 0"));
    }
    if dp_energy == 0.0 {
        return Ok(Lifetime::NoDecay);
    }
    Ok(Lifetime::Finite(constants.hbar / dp_energy))
}

/// Minimum field uncertainty `sqrt(ħG / (V Δt))`.
pub fn diosi_field_uncertainty(volume: f64, duration: f64, constants: &PhysicalConstants) -> Result<f64> {
    constants.validate()?;
    if !(volume > 0.0) {
        return Err(Error::NonPositive("volume"));
    }
    if !(duration > 0.0) {
        return Err(Error::NonPositive("duration"));
    }
    Ok((constants.hbar * constants.g / (volume * duration)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysicalConstants {
        PhysicalConstants::dimensionless()
    }

    fn pair(d: f64) -> (MassDistribution, MassDistribution) {
        (
            MassDistribution::sphere(1.0, [-0.5 * d, 0.0, 0.0], 1.0),
            MassDistribution::sphere(1.0, [0.5 * d, 0.0, 0.0], 1.0),
        )
    }

    #[test]
    fn analytic_displaced_unit_spheres() {
        let (a, b) = pair(2.0);
        let e = dp_energy_double_integral(&a, &b, &unit(), &Evaluation::Analytic).unwrap();
        assert!((e.value - 0.7).abs() < 1e-14);
        assert_eq!(e.estimated_error, 0.0);
        let (a, b) = pair(1e9);
        let e = dp_energy_double_integral(&a, &b, &unit(), &Evaluation::Analytic).unwrap();
        assert!((e.value - 1.2).abs() < 1e-8);
    }

    #[test]
    fn identical_distributions_have_zero_energy() {
        let (a, _) = pair(2.0);
        let e = dp_energy_double_integral(&a, &a, &unit(), &Evaluation::Analytic).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn xi_scales_linearly() {
        let (a, b) = pair(1.3);
        let half = dp_energy_double_integral(&a, &b, &unit(), &Evaluation::Analytic).unwrap().value;
        let one = dp_energy_double_integral(&a, &b, &unit().with_xi(1.0), &Evaluation::Analytic).unwrap().value;
        assert_eq!(one, 2.0 * half);
    }

    #[test]
    fn voxel_input_needs_grid() {
        let g = GridSpec::new([0.0; 3], 1.0, [4, 4, 4]).unwrap();
        let v = MassDistribution::VoxelGrid { density: DensityGrid::zeros(g) };
        assert!(matches!(
            dp_energy_double_integral(&v, &v, &unit(), &Evaluation::Analytic),
            Err(Error::NotAnalytic)
        ));
    }

    #[test]
    fn clock_rate_factor_guard() {
        assert_eq!(clock_rate_factor(0.0, &unit()).unwrap(), 1.0);
        assert!((clock_rate_factor(-0.01, &unit()).unwrap() - 0.99).abs() < 1e-15);
        assert!(matches!(clock_rate_factor(-0.02, &unit()), Err(Error::WeakField { .. })));
    }

    #[test]
    fn lifetime_cases() {
        assert_eq!(lifetime(1.0, &unit()).unwrap(), Lifetime::Finite(1.0));
        assert_eq!(lifetime(2.0, &unit()).unwrap(), Lifetime::Finite(0.5));
        assert_eq!(lifetime(0.0, &unit()).unwrap(), Lifetime::NoDecay);
        assert!(lifetime(-1.0, &unit()).is_err());
    }

    #[test]
    fn field_uncertainty() {
        assert_eq!(diosi_field_uncertainty(1.0, 1.0, &unit()).unwrap(), 1.0);
        let si = diosi_field_uncertainty(1.0, 1.0, &PhysicalConstants::si()).unwrap();
        assert!((si - 8.39e-23).abs() < 0.01e-23, "{si}");
        let a = diosi_field_uncertainty(1.0, 2.0, &unit()).unwrap();
        let b = diosi_field_uncertainty(4.0, 2.0, &unit()).unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
        assert!(diosi_field_uncertainty(0.0, 1.0, &unit()).is_err());
        assert!(diosi_field_uncertainty(1.0, -1.0, &unit()).is_err());
    }
}
