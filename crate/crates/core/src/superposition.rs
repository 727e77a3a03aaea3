use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::dpenergy::Lifetime;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{DensityGrid, PotentialField};
use crate::massdist::{self, rasterize, MassDistribution, UniformSphere};
use crate::sphere;
use crate::Evaluation;

pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionState {
    pub intensity: f64,
    pub dist: MassDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest_energy_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionSpec {
    pub states: Vec<SuperpositionState>,
    pub constants: PhysicalConstants,
}

impl SuperpositionSpec {
    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.states.is_empty() {
            return Err(Error::StateCount { expected: 1, got: 0 });
        }
        check_intensities(&self.intensities())?;
        for s in &self.states {
            s.dist.validate()?;
        }
        Ok(())
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.intensity).collect()
    }

    pub fn two(p1: f64, d1: MassDistribution, d2: MassDistribution, constants: PhysicalConstants) -> Self {
        SuperpositionSpec {
            states: vec![
                SuperpositionState { intensity: p1, dist: d1, rest_energy_override: None },
                SuperpositionState { intensity: 1.0 - p1, dist: d2, rest_energy_override: None },
            ],
            constants,
        }
    }

    fn require_two(&self) -> Result<()> {
        if self.states.len() != 2 {
            return Err(Error::StateCount { expected: 2, got: self.states.len() });
        }
        Ok(())
    }
}

pub fn check_intensities(p: &[f64]) -> Result<()> {
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
        return Err(Error::InvalidDistribution(format!("intensity {bad} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Normalization { sum, tol: NORMALIZATION_TOL });
    }
    Ok(())
}

/// Energies of a two-state superposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// `E_i = ∫ ρ_i (c² + Φ_i / 2)`.
    pub per_state_energy: Vec<f64>,
    /// `|c1|²|c2|² E_G12` with `E_G12 = ½ ∫ (ρ1 − ρ2)(Φ2 − Φ1)`.
    pub interaction_term: f64,
    /// `Σ |c_i|² E_i + interaction_term`.
    pub total: f64,
    /// `∫ ρ̄ (c² + Φ̄ / 2)` on the mean distribution and potential.
    pub mean_field_total: f64,
    /// The `E_G12` entering `interaction_term`.
    pub dp_energy: f64,
}

impl EnergyBreakdown {
    pub fn record(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

pub(crate) fn rest_energy(st: &SuperpositionState, constants: &PhysicalConstants) -> f64 {
    st.rest_energy_override.unwrap_or_else(|| st.dist.total_mass() * constants.c * constants.c)
}

/// Rest energy plus self-gravitational energy, `∫ ρ (c² + Φ_self / 2)`.
pub fn state_energy(dist: &MassDistribution, constants: &PhysicalConstants, eval: &Evaluation) -> Result<f64> {
    constants.validate()?;
    dist.validate()?;
    let rest = dist.total_mass() * constants.c * constants.c;
    Ok(rest + self_gravity(dist, constants, eval)?)
}

fn self_gravity(dist: &MassDistribution, constants: &PhysicalConstants, eval: &Evaluation) -> Result<f64> {
    match eval {
        Evaluation::Analytic => {
            let s = dist.spheres().ok_or(Error::NotAnalytic)?;
            Ok(-0.5 * constants.g * sphere::set_interaction(&s, &s))
        }
        Evaluation::Grid(grid, opts) => {
            massdist::check_padding(dist, grid)?;
            let rho = rasterize(dist, grid, opts)?;
            let phi = massdist::potential_of_density(&rho, constants, opts)?;
            Ok(0.5 * weighted_integral(&rho, &phi))
        }
    }
}

fn weighted_integral(rho: &DensityGrid, phi: &PotentialField) -> f64 {
    exec::sum_indexed(rho.values.len(), Execution::default(), |i| rho.values[i] * phi.values[i])
        * rho.grid.cell_volume()
}

/// Both the mean-field total and its per-state decomposition.
pub fn total_energy(spec: &SuperpositionSpec, eval: &Evaluation) -> Result<EnergyBreakdown> {
    spec.validate()?;
    spec.require_two()?;
    let c = &spec.constants;
    let p = [spec.states[0].intensity, spec.states[1].intensity];
    let rest = [rest_energy(&spec.states[0], c), rest_energy(&spec.states[1], c)];
    match eval {
        Evaluation::Analytic => {
            let s: Vec<_> = spec
                .states
                .iter()
                .map(|st| st.dist.spheres().ok_or(Error::NotAnalytic))
                .collect::<Result<_>>()?;
            // pair[i][j] = ∫ ρ_i Φ_j
            let mut pair = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    pair[i][j] = -c.g * sphere::set_interaction(&s[i], &s[j]);
                }
            }
            let mean: Vec<_> = s[0]
                .iter()
                .map(|b| UniformSphere { mass: p[0] * b.mass, ..*b })
                .chain(s[1].iter().map(|b| UniformSphere { mass: p[1] * b.mass, ..*b }))
                .collect();
            let mean_grav = -c.g * sphere::set_interaction(&mean, &mean);
            Ok(assemble(p, rest, pair, mean_grav))
        }
        Evaluation::Grid(grid, opts) => {
            let mut rho = Vec::new();
            let mut phi = Vec::new();
            for st in &spec.states {
                massdist::check_padding(&st.dist, grid)?;
                let r = rasterize(&st.dist, grid, opts)?;
                phi.push(massdist::potential_of_density(&r, c, opts)?);
                rho.push(r);
            }
            breakdown_from_fields(p, rest, [&rho[0], &rho[1]], [&phi[0], &phi[1]])
        }
    }
}

/// Energy breakdown from given densities and potentials on one grid. The
/// mean-field total integrates `ρ̄ Φ̄` directly, so comparing it with
/// `total` tests the decomposition on arbitrary fields.
pub fn breakdown_from_fields(
    p: [f64; 2],
    rest: [f64; 2],
    rho: [&DensityGrid; 2],
    phi: [&PotentialField; 2],
) -> Result<EnergyBreakdown> {
    check_intensities(&p)?;
    for g in [&rho[1].grid, &phi[0].grid, &phi[1].grid] {
        rho[0].grid.ensure_same(g, "breakdown fields must share one grid")?;
    }
    let mut pair = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            pair[i][j] = weighted_integral(rho[i], phi[j]);
        }
    }
    let n = rho[0].values.len();
    let mean_grav = exec::sum_indexed(n, Execution::default(), |k| {
        let r = p[0] * rho[0].values[k] + p[1] * rho[1].values[k];
        let f = p[0] * phi[0].values[k] + p[1] * phi[1].values[k];
        r * f
    }) * rho[0].grid.cell_volume();
    Ok(assemble(p, rest, pair, mean_grav))
}

fn assemble(p: [f64; 2], rest: [f64; 2], pair: [[f64; 2]; 2], mean_grav: f64) -> EnergyBreakdown {
    let per_state_energy: Vec<f64> = (0..2).map(|i| rest[i] + 0.5 * pair[i][i]).collect();
    let dp_energy = 0.5 * (pair[0][1] + pair[1][0] - pair[0][0] - pair[1][1]);
    let interaction_term = p[0] * p[1] * dp_energy;
    let total = p[0] * per_state_energy[0] + p[1] * per_state_energy[1] + interaction_term;
    let mean_field_total = p[0] * rest[0] + p[1] * rest[1] + 0.5 * mean_grav;
    EnergyBreakdown { per_state_energy, interaction_term, total, mean_field_total, dp_energy }
}

/// `(E_G1, E_G2) = (|c2|² E_G12, |c1|² E_G12)`.
pub fn energy_increases(spec: &SuperpositionSpec, dp_energy: f64) -> Result<(f64, f64)> {
    spec.require_two()?;
    let p = spec.intensities();
    Ok((p[1] * dp_energy, p[0] * dp_energy))
}

/// `rate_i = E_Gi / ħ`.
pub fn decay_rates(spec: &SuperpositionSpec, dp_energy: f64, constants: &PhysicalConstants) -> Result<(f64, f64)> {
    constants.validate()?;
    let (e1, e2) = energy_increases(spec, dp_energy)?;
    Ok((e1 / constants.hbar, e2 / constants.hbar))
}

/// `1 / (rate1 + rate2)`.
pub fn mean_lifetime(rates: (f64, f64)) -> Lifetime {
    let total = rates.0 + rates.1;
    if total > 0.0 {
        Lifetime::Finite(1.0 / total)
    } else {
        Lifetime::NoDecay
    }
}

/// Reduction probabilities `|c_i|²`.
pub fn born_probabilities(spec: &SuperpositionSpec) -> Result<Vec<f64>> {
    check_intensities(&spec.intensities())?;
    Ok(spec.intensities())
}
