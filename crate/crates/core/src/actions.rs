//! Competition and detuning actions of two classical scenarios.
//!
//! A scenario is a sequence of static snapshots sharing one grid. The
//! competition action is the trapezoidal time integral of the per-snapshot
//! DP energy, anchored at `S(t₀) = 0`. The relativistic form integrates
//! `ξ (T1 − T2)(√−g2 − √−g1)` over constant-time slices instead; `√−g` is
//! stored as its deviation from 1 so weak-field differences keep their
//! digits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::dpenergy::WEAK_FIELD_LIMIT;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{DensityGrid, GridSpec, PotentialField, ScalarField};
use crate::massdist::{self, rasterize, MassDistribution, SolverOptions};
use crate::superposition::check_intensities;

/// Contracted stress-energy `T` and volume factor `√−g` of one scenario at
/// one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativisticFields {
    /// `T(x)` in J/m³.
    pub trace: ScalarField,
    /// `√−g(x) − 1`.
    pub volume_deviation: ScalarField,
}

impl RelativisticFields {
    /// Weak-field fields of a Newtonian snapshot: `T = c²ρ`, `√−g = 1 + Φ/c²`.
    pub fn newtonian(rho: &DensityGrid, phi: &PotentialField, c: f64) -> Result<Self> {
        rho.grid.ensure_same(&phi.grid, "density and potential")?;
        let c2 = c * c;
        let fields = RelativisticFields {
            trace: ScalarField { grid: rho.grid, values: rho.values.iter().map(|r| c2 * r).collect() },
            volume_deviation: ScalarField { grid: phi.grid, values: phi.values.iter().map(|p| p / c2).collect() },
        };
        fields.check_weak_field()?;
        Ok(fields)
    }

    /// From externally supplied `T` and full `√−g` values.
    pub fn from_volume_factor(trace: ScalarField, sqrt_neg_g: &ScalarField) -> Result<Self> {
        trace.grid.ensure_same(&sqrt_neg_g.grid, "trace and volume factor")?;
        let volume_deviation =
            ScalarField { grid: sqrt_neg_g.grid, values: sqrt_neg_g.values.iter().map(|v| v - 1.0).collect() };
        let fields = RelativisticFields { trace, volume_deviation };
        fields.check_weak_field()?;
        Ok(fields)
    }

    pub fn sqrt_neg_g(&self) -> ScalarField {
        ScalarField {
            grid: self.volume_deviation.grid,
            values: self.volume_deviation.values.iter().map(|d| 1.0 + d).collect(),
        }
    }

    /// `|√−g − 1| < 0.01` everywhere.
    pub fn check_weak_field(&self) -> Result<()> {
        let worst = self.volume_deviation.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(worst < WEAK_FIELD_LIMIT) {
            return Err(Error::WeakField { value: worst, limit: WEAK_FIELD_LIMIT });
        }
        Ok(())
    }
}

/// Snapshots of two scenarios at common times on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTimeline {
    pub times: Vec<f64>,
    pub grid: GridSpec,
    pub scenario1: Vec<MassDistribution>,
    pub scenario2: Vec<MassDistribution>,
    /// Per time, fields of scenario 1 and 2. Built from the mass snapshots
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relativistic: Option<Vec<[RelativisticFields; 2]>>,
}

impl ScenarioTimeline {
    pub fn validate(&self) -> Result<()> {
        check_times(&self.times)?;
        self.grid.validate()?;
        let n = self.times.len();
        if self.scenario1.len() != n || self.scenario2.len() != n {
            return Err(Error::Timeline(format!(
                "{n} times but {} and {} snapshots",
                self.scenario1.len(),
                self.scenario2.len()
            )));
        }
        for d in self.scenario1.iter().chain(&self.scenario2) {
            d.validate()?;
            if let MassDistribution::VoxelGrid { density } = d {
                density.grid.ensure_same(&self.grid, "timeline snapshot")?;
            }
        }
        if let Some(rel) = &self.relativistic {
            if rel.len() != n {
                return Err(Error::MissingFields);
            }
            for f in rel.iter().flatten() {
                f.trace.grid.ensure_same(&self.grid, "relativistic trace")?;
                f.volume_deviation.grid.ensure_same(&self.grid, "relativistic volume factor")?;
            }
        }
        Ok(())
    }

    /// The same scenario held for `times`.
    pub fn stationary(times: Vec<f64>, grid: GridSpec, d1: MassDistribution, d2: MassDistribution) -> Self {
        let n = times.len();
        ScenarioTimeline { times, grid, scenario1: vec![d1; n], scenario2: vec![d2; n], relativistic: None }
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Timeline(format!("need at least 2 time samples, got {}", times.len())));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Timeline("times must be finite and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub t: f64,
    pub e_g12: f64,
    pub s_g12: f64,
    pub s_g1: f64,
    pub s_g2: f64,
}

/// Competition action `S_G12` and detuning actions `S_G1 = |c2|² S_G12`,
/// `S_G2 = |c1|² S_G12` at the last sample, with the running trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    pub intensities: [f64; 2],
    pub s_g12: f64,
    pub s_g1: f64,
    pub s_g2: f64,
    pub cumulative: Vec<ActionSample>,
}

impl ActionResult {
    /// Trapezoidal integral of sampled DP energies.
    pub fn from_energies(times: &[f64], energies: &[f64], intensities: [f64; 2]) -> Result<Self> {
        check_times(times)?;
        check_intensities(&intensities)?;
        if energies.len() != times.len() {
            return Err(Error::Timeline(format!("{} times but {} energies", times.len(), energies.len())));
        }
        let [p1, p2] = intensities;
        let mut s = 0.0;
        let mut cumulative = Vec::with_capacity(times.len());
        for k in 0..times.len() {
            if k > 0 {
                s += 0.5 * (times[k] - times[k - 1]) * (energies[k] + energies[k - 1]);
            }
            cumulative.push(ActionSample { t: times[k], e_g12: energies[k], s_g12: s, s_g1: p2 * s, s_g2: p1 * s });
        }
        Ok(ActionResult { intensities, s_g12: s, s_g1: p2 * s, s_g2: p1 * s, cumulative })
    }

    pub fn times(&self) -> Vec<f64> {
        self.cumulative.iter().map(|c| c.t).collect()
    }

    /// Columns `t,E_G12,S_G12,S_G1,S_G2`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,E_G12,S_G12,S_G1,S_G2")?;
        for c in &self.cumulative {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", c.t, c.e_g12, c.s_g12, c.s_g1, c.s_g2)?;
        }
        Ok(())
    }
}

struct SnapshotFields {
    rho: [DensityGrid; 2],
    phi: [PotentialField; 2],
}

fn solve_snapshot(
    tl: &ScenarioTimeline,
    k: usize,
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<SnapshotFields> {
    let mut rho = Vec::with_capacity(2);
    let mut phi = Vec::with_capacity(2);
    for d in [&tl.scenario1[k], &tl.scenario2[k]] {
        massdist::check_padding(d, &tl.grid)?;
        let r = rasterize(d, &tl.grid, opts)?;
        phi.push(massdist::potential_of_density(&r, constants, opts)?);
        rho.push(r);
    }
    let (r2, r1) = (rho.pop().unwrap(), rho.pop().unwrap());
    let (f2, f1) = (phi.pop().unwrap(), phi.pop().unwrap());
    Ok(SnapshotFields { rho: [r1, r2], phi: [f1, f2] })
}

/// `ξ Σ (a1 − a2)(b2 − b1) ΔV`.
pub(crate) fn cross_integral(a1: &[f64], a2: &[f64], b1: &[f64], b2: &[f64], vol: f64, xi: f64, e: Execution) -> f64 {
    xi * exec::sum_indexed(a1.len(), e, |i| (a1[i] - a2[i]) * (b2[i] - b1[i])) * vol
}

fn per_snapshot<T: Send>(n: usize, opts: &SolverOptions, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    exec::map_indexed(n, opts.execution, f).into_iter().collect()
}

/// Newtonian competition action: trapezoid over snapshot DP energies
/// `ξ ∫ (ρ1 − ρ2)(Φ2 − Φ1)` on the timeline grid.
pub fn competition_action_newtonian(
    tl: &ScenarioTimeline,
    intensities: [f64; 2],
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<ActionResult> {
    constants.validate()?;
    tl.validate()?;
    let vol = tl.grid.cell_volume();
    let energies = per_snapshot(tl.times.len(), opts, |k| {
        let f = solve_snapshot(tl, k, constants, opts)?;
        Ok(cross_integral(
            &f.rho[0].values,
            &f.rho[1].values,
            &f.phi[0].values,
            &f.phi[1].values,
            vol,
            constants.xi,
            opts.execution,
        ))
    })?;
    ActionResult::from_energies(&tl.times, &energies, intensities)
}

/// Fields of both scenarios at sample `k`: supplied ones, or weak-field
/// fields built from the mass snapshots.
pub fn relativistic_fields(
    tl: &ScenarioTimeline,
    k: usize,
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<[RelativisticFields; 2]> {
    if let Some(rel) = &tl.relativistic {
        let pair = rel.get(k).ok_or(Error::MissingFields)?;
        for f in pair {
            f.check_weak_field()?;
        }
        return Ok(pair.clone());
    }
    let f = solve_snapshot(tl, k, constants, opts)?;
    Ok([
        RelativisticFields::newtonian(&f.rho[0], &f.phi[0], constants.c)?,
        RelativisticFields::newtonian(&f.rho[1], &f.phi[1], constants.c)?,
    ])
}

/// Relativistic competition action on constant-time slices:
/// `ξ ∫dt ∫ (T1 − T2)(√−g2 − √−g1) d³x`.
pub fn competition_action_relativistic(
    tl: &ScenarioTimeline,
    intensities: [f64; 2],
    constants: &PhysicalConstants,
    opts: &SolverOptions,
) -> Result<ActionResult> {
    constants.validate()?;
    tl.validate()?;
    let vol = tl.grid.cell_volume();
    let energies = per_snapshot(tl.times.len(), opts, |k| {
        let [f1, f2] = relativistic_fields(tl, k, constants, opts)?;
        Ok(cross_integral(
            &f1.trace.values,
            &f2.trace.values,
            &f1.volume_deviation.values,
            &f2.volume_deviation.values,
            vol,
            constants.xi,
            opts.execution,
        ))
    })?;
    ActionResult::from_energies(&tl.times, &energies, intensities)
}

/// `(dS_G1/dt, dS_G2/dt) / ħ` at `t`. On a sample: central difference
/// inside the trace, one-sided at its ends. Between samples: the segment
/// slope.
pub fn decay_rates_from_actions(ar: &ActionResult, t: f64, constants: &PhysicalConstants) -> Result<(f64, f64)> {
    constants.validate()?;
    let c = &ar.cumulative;
    let n = c.len();
    if n < 2 {
        return Err(Error::Timeline("need at least 2 samples".into()));
    }
    if !(t >= c[0].t && t <= c[n - 1].t) {
        return Err(Error::Timeline(format!("t = {t} outside [{}, {}]", c[0].t, c[n - 1].t)));
    }
    let (a, b) = match c.iter().position(|s| s.t == t) {
        Some(0) => (0, 1),
        Some(k) if k == n - 1 => (n - 2, n - 1),
        Some(k) => (k - 1, k + 1),
        None => {
            let k = c.iter().position(|s| s.t > t).unwrap_or(n - 1);
            (k - 1, k)
        }
    };
    let slope = (c[b].s_g12 - c[a].s_g12) / (c[b].t - c[a].t);
    let [p1, p2] = ar.intensities;
    Ok((p2 * slope / constants.hbar, p1 * slope / constants.hbar))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRate {
    pub t0: f64,
    pub t1: f64,
    pub rate1: f64,
    pub rate2: f64,
}

/// Constant rates on each sample interval; their time integral is `S_Gi/ħ`.
pub fn segment_rates(ar: &ActionResult, constants: &PhysicalConstants) -> Vec<SegmentRate> {
    let [p1, p2] = ar.intensities;
    ar.cumulative
        .windows(2)
        .map(|w| {
            let slope = (w[1].s_g12 - w[0].s_g12) / (w[1].t - w[0].t);
            SegmentRate { t0: w[0].t, t1: w[1].t, rate1: p2 * slope / constants.hbar, rate2: p1 * slope / constants.hbar }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionResidual {
    /// `∫ (p1 a1 + p2 a2)(p1 b1 + p2 b2)`.
    pub mean_product: f64,
    /// `∫ p1 a1 b1 + p2 a2 b2 + p1 p2 (a1 − a2)(b2 − b1)`.
    pub decomposed: f64,
    pub absolute: f64,
    /// `absolute` over the integrated magnitude of all terms.
    pub relative: f64,
}

/// Residual of the bilinear mixing identity behind the action
/// decomposition, for arbitrary fields.
pub fn eh_decomposition_check(
    a: [&[f64]; 2],
    b: [&[f64]; 2],
    intensities: [f64; 2],
    cell_volume: f64,
) -> Result<DecompositionResidual> {
    check_intensities(&intensities)?;
    let n = a[0].len();
    if [a[1].len(), b[0].len(), b[1].len()].iter().any(|&m| m != n) {
        return Err(Error::GridMismatch("decomposition fields differ in length".into()));
    }
    let [p1, p2] = intensities;
    let e = Execution::default();
    let mean_product = exec::sum_indexed(n, e, |i| (p1 * a[0][i] + p2 * a[1][i]) * (p1 * b[0][i] + p2 * b[1][i]));
    let decomposed = exec::sum_indexed(n, e, |i| {
        p1 * a[0][i] * b[0][i] + p2 * a[1][i] * b[1][i] + p1 * p2 * (a[0][i] - a[1][i]) * (b[1][i] - b[0][i])
    });
    let scale = exec::sum_indexed(n, e, |i| {
        (p1 * a[0][i] * b[0][i]).abs()
            + (p2 * a[1][i] * b[1][i]).abs()
            + (p1 * p2 * (a[0][i] - a[1][i]) * (b[1][i] - b[0][i])).abs()
    });
    let absolute = (mean_product - decomposed).abs() * cell_volume;
    let scale = scale * cell_volume;
    Ok(DecompositionResidual {
        mean_product: mean_product * cell_volume,
        decomposed: decomposed * cell_volume,
        absolute,
        relative: if scale > 0.0 { absolute / scale } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> PhysicalConstants {
        PhysicalConstants::dimensionless().with_c(100.0)
    }

    fn grid() -> GridSpec {
        GridSpec::cube([0.0; 3], 2.5, 20).unwrap()
    }

    fn moving_timeline() -> ScenarioTimeline {
        let times = vec![0.0, 0.4, 1.0, 1.5];
        let s1 = times.iter().map(|t| MassDistribution::sphere(1.0, [-0.2 - 0.3 * t, 0.0, 0.0], 0.6)).collect();
        let s2 = times.iter().map(|t| MassDistribution::sphere(1.0, [0.2 + 0.3 * t, 0.1, 0.0], 0.6)).collect();
        ScenarioTimeline { times, grid: grid(), scenario1: s1, scenario2: s2, relativistic: None }
    }

    #[test]
    fn constant_energy_integrates_linearly() {
        let ar = ActionResult::from_energies(&[0.0, 0.5, 2.0], &[0.7; 3], [0.5, 0.5]).unwrap();
        assert_relative_eq!(ar.s_g12, 1.4, max_relative = 1e-15);
        assert_eq!(ar.s_g1, ar.s_g12 / 2.0);
        assert_eq!(ar.s_g2, ar.s_g12 / 2.0);
    }

    #[test]
    fn linear_energy_is_exact() {
        let t: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let ar = ActionResult::from_energies(&t, &t, [0.3, 0.7]).unwrap();
        assert_relative_eq!(ar.s_g12, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn relativistic_reduces_to_newtonian() {
        let tl = moving_timeline();
        let c = unit();
        let opts = SolverOptions::default();
        let n = competition_action_newtonian(&tl, [0.4, 0.6], &c, &opts).unwrap();
        let r = competition_action_relativistic(&tl, [0.4, 0.6], &c, &opts).unwrap();
        assert!(n.s_g12 > 0.0);
        assert_relative_eq!(n.s_g12, r.s_g12, max_relative = 1e-12);
    }

    #[test]
    fn swapping_scenarios_keeps_action() {
        let tl = moving_timeline();
        let mut swapped = tl.clone();
        std::mem::swap(&mut swapped.scenario1, &mut swapped.scenario2);
        let c = unit();
        let opts = SolverOptions::default();
        let a = competition_action_relativistic(&tl, [0.5, 0.5], &c, &opts).unwrap();
        let b = competition_action_relativistic(&swapped, [0.5, 0.5], &c, &opts).unwrap();
        assert_relative_eq!(a.s_g12, b.s_g12, max_relative = 1e-14);
    }

    #[test]
    fn identical_scenarios_give_zero() {
        let d = MassDistribution::sphere(1.0, [0.0; 3], 0.6);
        let tl = ScenarioTimeline::stationary(vec![0.0, 1.0], grid(), d.clone(), d);
        let r = competition_action_relativistic(&tl, [0.5, 0.5], &unit(), &SolverOptions::default()).unwrap();
        assert_eq!(r.s_g12, 0.0);
    }

    #[test]
    fn weak_field_guard() {
        let tl = moving_timeline();
        let c = PhysicalConstants::dimensionless();
        let err = competition_action_relativistic(&tl, [0.5, 0.5], &c, &SolverOptions::default());
        assert!(matches!(err, Err(Error::WeakField { .. })));
        let g = GridSpec::cube([0.0; 3], 1.0, 4).unwrap();
        let t = ScalarField::zeros(g);
        let ok = ScalarField { grid: g, values: vec![1.0099; g.len()] };
        assert!(RelativisticFields::from_volume_factor(t.clone(), &ok).is_ok());
        let bad = ScalarField { grid: g, values: vec![0.99; g.len()] };
        assert!(RelativisticFields::from_volume_factor(t, &bad).is_err());
    }

    #[test]
    fn bad_timelines() {
        assert!(ActionResult::from_energies(&[0.0], &[1.0], [0.5, 0.5]).is_err());
        assert!(ActionResult::from_energies(&[0.0, 0.0], &[1.0, 1.0], [0.5, 0.5]).is_err());
        let mut tl = moving_timeline();
        tl.relativistic = Some(Vec::new());
        assert!(matches!(tl.validate(), Err(Error::MissingFields)));
    }

    #[test]
    fn static_rates_match_two_state_rates() {
        let c = PhysicalConstants::dimensionless();
        let ar = ActionResult::from_energies(&[0.0, 1.0, 3.0], &[1.0; 3], [0.5, 0.5]).unwrap();
        for t in [0.0, 0.5, 1.0, 2.2, 3.0] {
            let (r1, r2) = decay_rates_from_actions(&ar, t, &c).unwrap();
            assert_relative_eq!(r1, 0.5, max_relative = 1e-15);
            assert_relative_eq!(r2, 0.5, max_relative = 1e-15);
        }
        assert!(decay_rates_from_actions(&ar, 3.5, &c).is_err());
        let zero = ActionResult::from_energies(&[0.0, 1.0], &[0.0; 2], [0.5, 0.5]).unwrap();
        assert_eq!(decay_rates_from_actions(&zero, 0.5, &c).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn decomposition_identity_edge_cases() {
        let a = [1.0, -2.0, 3.0];
        let b1 = [0.5, 0.1, -0.7];
        let b2 = [2.0, 0.0, 1.0];
        let r = eh_decomposition_check([&a, &a], [&b1, &b2], [0.3, 0.7], 1.0).unwrap();
        assert!(r.relative < 1e-15);
        let a2 = [0.0, 4.0, 1.0];
        let r = eh_decomposition_check([&a, &a2], [&b1, &b2], [1.0, 0.0], 1.0).unwrap();
        assert_eq!(r.absolute, 0.0);
        assert!(eh_decomposition_check([&a, &a2], [&b1, &b2], [0.5, 0.6], 1.0).is_err());
    }

    fn timeline_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((0.01f64..1.0, 0.0f64..5.0), 2..20).prop_map(|v| {
            let mut t = 0.0;
            let times = v.iter().map(|(dt, _)| { t += dt; t }).collect();
            (times, v.iter().map(|(_, e)| *e).collect())
        })
    }

    proptest! {
        #[test]
        fn action_is_monotone_and_proportional((times, energies) in timeline_strategy(), p1 in 0.0f64..=1.0) {
            let ar = ActionResult::from_energies(&times, &energies, [p1, 1.0 - p1]).unwrap();
            for w in ar.cumulative.windows(2) {
                prop_assert!(w[1].s_g12 >= w[0].s_g12);
            }
            prop_assert_eq!(ar.s_g1, (1.0 - p1) * ar.s_g12);
            prop_assert_eq!(ar.s_g2, p1 * ar.s_g12);
        }

        #[test]
        fn split_timelines_add_up((times, energies) in timeline_strategy(), cut in 0.0f64..1.0) {
            prop_assume!(times.len() >= 3);
            let k = 1 + ((times.len() - 2) as f64 * cut) as usize;
            let p = [0.5, 0.5];
            let full = ActionResult::from_energies(&times, &energies, p).unwrap();
            let a = ActionResult::from_energies(&times[..=k], &energies[..=k], p).unwrap();
            let b = ActionResult::from_energies(&times[k..], &energies[k..], p).unwrap();
            prop_assert!((a.s_g12 + b.s_g12 - full.s_g12).abs() <= 1e-12 * full.s_g12.abs().max(1e-300));
        }

        #[test]
        fn segment_rates_integrate_back((times, energies) in timeline_strategy(), p1 in 0.0f64..=1.0) {
            let c = PhysicalConstants::dimensionless();
            let ar = ActionResult::from_energies(&times, &energies, [p1, 1.0 - p1]).unwrap();
            let total: f64 = segment_rates(&ar, &c).iter().map(|s| s.rate1 * (s.t1 - s.t0)).sum();
            prop_assert!((total - ar.s_g1 / c.hbar).abs() <= 1e-12 * ar.s_g1.abs().max(1.0));
        }

        #[test]
        fn mixing_identity_on_random_fields(
            f in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1.0f64..1.0, -1.0f64..1.0), 1..64),
            p1 in 0.0f64..=1.0,
        ) {
            let a1: Vec<f64> = f.iter().map(|x| x.0).collect();
            let a2: Vec<f64> = f.iter().map(|x| x.1).collect();
            let b1: Vec<f64> = f.iter().map(|x| x.2).collect();
            let b2: Vec<f64> = f.iter().map(|x| x.3).collect();
            let r = eh_decomposition_check([&a1, &a2], [&b1, &b2], [p1, 1.0 - p1], 0.1).unwrap();
            prop_assert!(r.relative <= 1e-12);
        }
    }
}
