//! Stochastic decay cascade over local bundles, Born-rule statistics and
//! the two-state decoherence equation.
//!
//! Every (area, bundle) pair carries an exponential clock at its bundle
//! decay rate. The earliest clock fires, the members of that bundle are
//! removed, survivors renormalize, and all clocks are redrawn. Local DP
//! energies stay at their initial values. Trace `k` of a run draws from
//! ChaCha8 seeded with the master seed on stream `k`, so traces do not
//! depend on how they are scheduled.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bundles::{AreaBundles, BundleArea, BundleConfiguration};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::GridSpec;
use crate::massdist::{MassDistribution, UniformSphere};
use crate::sphere;
use crate::superposition::{check_intensities, SuperpositionSpec, SuperpositionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeArea {
    pub id: String,
    pub bundles: Vec<Vec<usize>>,
    /// Local DP energies between bundles, fixed for the whole cascade.
    pub energies: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub intensities: Vec<f64>,
    pub areas: Vec<CascadeArea>,
}

impl CascadeModel {
    pub fn from_config(cfg: &BundleConfiguration) -> Result<Self> {
        cfg.validate()?;
        Ok(CascadeModel {
            intensities: cfg.intensities.clone(),
            areas: cfg
                .areas
                .iter()
                .map(|a| CascadeArea { id: a.area_id.clone(), bundles: a.members(), energies: a.local_dp.clone() })
                .collect(),
        })
    }

    /// One area holding both states.
    pub fn two_state(intensities: [f64; 2], dp_energy: f64) -> Result<Self> {
        let cfg = BundleConfiguration {
            intensities: intensities.to_vec(),
            areas: vec![AreaBundles::new(
                "all",
                vec![vec![0], vec![1]],
                &intensities,
                vec![vec![0.0, dp_energy], vec![dp_energy, 0.0]],
            )],
        };
        Self::from_config(&cfg)
    }

    fn check_bundle_count(&self, allow_many: bool) -> Result<()> {
        if allow_many {
            return Ok(());
        }
        match self.areas.iter().find(|a| a.bundles.len() > 2) {
            Some(a) => Err(Error::TooManyBundles { area: a.id.clone(), count: a.bundles.len() }),
            None => Ok(()),
        }
    }

    /// Live clocks for the survivor mask: `(area, bundle, rate, members alive)`.
    fn clocks(&self, alive: u64, constants: &PhysicalConstants) -> Vec<(usize, usize, f64, u64)> {
        let live_mass: f64 = (0..self.intensities.len()).filter(|&i| alive >> i & 1 == 1).map(|i| self.intensities[i]).sum();
        let mut out = Vec::new();
        for (ai, a) in self.areas.iter().enumerate() {
            let masks: Vec<u64> = a.bundles.iter().map(|b| b.iter().fold(0u64, |m, &i| m | 1 << i) & alive).collect();
            let weight: Vec<f64> = masks
                .iter()
                .map(|&m| {
                    let w: f64 = (0..self.intensities.len()).filter(|&i| m >> i & 1 == 1).map(|i| self.intensities[i]).sum();
                    if live_mass > 0.0 { w / live_mass } else { 0.0 }
                })
                .collect();
            for k in 0..a.bundles.len() {
                if masks[k] == 0 {
                    continue;
                }
                let energy: f64 =
                    (0..a.bundles.len()).filter(|&v| v != k && masks[v] != 0).map(|v| weight[v] * a.energies[k][v]).sum();
                out.push((ai, k, energy / constants.hbar, masks[k]));
            }
        }
        out
    }
}

pub const MAX_STATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeEvent {
    pub time: f64,
    pub area_id: String,
    pub bundle: usize,
    pub survivors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseTrace {
    pub seed: u64,
    pub trace_index: u64,
    pub events: Vec<CascadeEvent>,
    pub final_state: usize,
    pub total_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CascadeOptions {
    /// Accept areas with more than two bundles.
    pub allow_many_bundles: bool,
    /// Defaults to the number of states.
    pub max_events: Option<usize>,
}

/// The generator of trace `index` under `master_seed`.
pub fn trace_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

fn mask_members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

/// One cascade until a single state survives.
pub fn simulate_cascade(
    model: &CascadeModel,
    constants: &PhysicalConstants,
    master_seed: u64,
    trace_index: u64,
    opts: &CascadeOptions,
) -> Result<CollapseTrace> {
    constants.validate()?;
    check_intensities(&model.intensities)?;
    let n = model.intensities.len();
    if n > MAX_STATES {
        return Err(Error::StateCount { expected: MAX_STATES, got: n });
    }
    model.check_bundle_count(opts.allow_many_bundles)?;
    let max_events = opts.max_events.unwrap_or(n);
    let mut rng = trace_rng(master_seed, trace_index);
    let mut alive: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut t = 0.0;
    let mut events = Vec::new();
    while alive.count_ones() > 1 {
        if events.len() >= max_events {
            return Err(Error::MaxEvents(max_events));
        }
        let mut best: Option<(f64, usize, usize, u64)> = None;
        for (area, bundle, rate, members) in model.clocks(alive, constants) {
            if !(rate > 0.0) {
                continue;
            }
            let dt = Exp::new(rate).map_err(|_| Error::NonPositive("clock rate"))?.sample(&mut rng);
            // Strict comparison keeps the lowest (area, bundle) on ties.
            if best.is_none_or(|b| dt < b.0) {
                best = Some((dt, area, bundle, members));
            }
        }
        let Some((dt, area, bundle, members)) = best else {
            return Err(Error::StalledCascade { survivors: alive.count_ones() as usize });
        };
        t += dt;
        alive &= !members;
        events.push(CascadeEvent {
            time: t,
            area_id: model.areas[area].id.clone(),
            bundle,
            survivors: mask_members(alive, n),
        });
    }
    Ok(CollapseTrace {
        seed: master_seed,
        trace_index,
        events,
        final_state: alive.trailing_zeros() as usize,
        total_time: t,
    })
}

/// Two competing clocks at rates `|c2|²E/ħ` and `|c1|²E/ħ`.
pub fn simulate_two_state(
    intensities: [f64; 2],
    dp_energy: f64,
    constants: &PhysicalConstants,
    master_seed: u64,
    trace_index: u64,
) -> Result<CollapseTrace> {
    if dp_energy == 0.0 {
        return Err(Error::NoDecay);
    }
    if !(dp_energy > 0.0 && dp_energy.is_finite()) {
        return Err(Error::NonPositive("DP energy"));
    }
    let model = CascadeModel::two_state(intensities, dp_energy)?;
    simulate_cascade(&model, constants, master_seed, trace_index, &CascadeOptions::default())
}

/// Traces `0..trials` of one master seed, in index order.
pub fn run_traces(
    model: &CascadeModel,
    constants: &PhysicalConstants,
    master_seed: u64,
    trials: usize,
    opts: &CascadeOptions,
    execution: Execution,
) -> Result<Vec<CollapseTrace>> {
    exec::map_indexed(trials, execution, |k| simulate_cascade(model, constants, master_seed, k as u64, opts))
        .into_iter()
        .collect()
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(traces: &[CollapseTrace], mut w: W) -> Result<()> {
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Exact final-state probabilities of the cascade, summed over every decay
/// order.
pub fn path_sum_probabilities(
    model: &CascadeModel,
    constants: &PhysicalConstants,
    opts: &CascadeOptions,
) -> Result<Vec<f64>> {
    check_intensities(&model.intensities)?;
    let n = model.intensities.len();
    if n > 20 {
        return Err(Error::StateCount { expected: 20, got: n });
    }
    model.check_bundle_count(opts.allow_many_bundles)?;
    let mut memo: HashMap<u64, Vec<f64>> = HashMap::new();
    path_sum(model, constants, (1u64 << n) - 1, &mut memo)
}

fn path_sum(
    model: &CascadeModel,
    constants: &PhysicalConstants,
    alive: u64,
    memo: &mut HashMap<u64, Vec<f64>>,
) -> Result<Vec<f64>> {
    let n = model.intensities.len();
    if let Some(v) = memo.get(&alive) {
        return Ok(v.clone());
    }
    let mut out = vec![0.0; n];
    if alive.count_ones() == 1 {
        out[alive.trailing_zeros() as usize] = 1.0;
    } else {
        let clocks: Vec<_> = model.clocks(alive, constants).into_iter().filter(|c| c.2 > 0.0).collect();
        let total: f64 = clocks.iter().map(|c| c.2).sum();
        if !(total > 0.0) {
            return Err(Error::StalledCascade { survivors: alive.count_ones() as usize });
        }
        for (_, _, rate, members) in clocks {
            let sub = path_sum(model, constants, alive & !members, memo)?;
            for i in 0..n {
                out[i] += rate / total * sub[i];
            }
        }
    }
    memo.insert(alive, out.clone());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DetectorMode {
    /// The same given local DP energy on every detector area.
    Abstract { energy: f64 },
    /// A sphere per detector, displaced by `displacement` along y in the
    /// detection state.
    Geometric { mass: f64, radius: f64, displacement: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorScenario {
    pub spec: SuperpositionSpec,
    pub areas: Vec<BundleArea>,
    /// A grid holding every detector with padding, for grid-based checks.
    pub grid: GridSpec,
    pub energies: Vec<f64>,
    pub config: BundleConfiguration,
}

impl DetectorScenario {
    pub fn cascade_model(&self) -> Result<CascadeModel> {
        CascadeModel::from_config(&self.config)
    }
}

/// `n` detector areas along x. State `i` displaces the body in area `i`
/// only, so each area holds the detection bundle `{i}` and the
/// no-detection bundle of all other states. Bundles are ordered by first
/// member, as grid derivation orders them.
pub fn build_detector_scenario(
    n: usize,
    intensities: &[f64],
    mode: DetectorMode,
    constants: PhysicalConstants,
) -> Result<DetectorScenario> {
    if n < 2 {
        return Err(Error::StateCount { expected: 2, got: n });
    }
    if intensities.len() != n {
        return Err(Error::StateCount { expected: n, got: intensities.len() });
    }
    check_intensities(intensities)?;
    constants.validate()?;
    let (mass, radius, shift) = match mode {
        DetectorMode::Abstract { energy } => {
            if !(energy.is_finite() && energy > 0.0) {
                return Err(Error::NonPositive("detector DP energy"));
            }
            (1.0, 1.0, 2.0)
        }
        DetectorMode::Geometric { mass, radius, displacement } => {
            if !(mass > 0.0 && radius > 0.0 && displacement > 0.0) {
                return Err(Error::NonPositive("detector mass, radius and displacement"));
            }
            (mass, radius, displacement)
        }
    };
    let energy = match mode {
        DetectorMode::Abstract { energy } => energy,
        DetectorMode::Geometric { .. } => {
            let a = [UniformSphere { mass, center: [0.0; 3], radius }];
            let b = [UniformSphere { mass, center: [0.0, shift, 0.0], radius }];
            let same = sphere::set_interaction(&a, &a) + sphere::set_interaction(&b, &b);
            constants.xi * constants.g * (same - 2.0 * sphere::set_interaction(&a, &b))
        }
    };
    let half = radius + 0.5 * shift;
    let spacing = 2.0 * half + 4.0 * radius;
    let h = radius / 4.0;
    let x0 = -0.5 * (n - 1) as f64 * spacing;
    let center = |i: usize| [x0 + i as f64 * spacing, 0.0, 0.0];
    let states = (0..n)
        .map(|j| {
            let spheres = (0..n)
                .map(|i| {
                    let mut c = center(i);
                    c[1] += if i == j { shift } else { 0.0 };
                    UniformSphere { mass, center: c, radius }
                })
                .collect();
            SuperpositionState {
                intensity: intensities[j],
                dist: MassDistribution::UniformSphereSet { spheres },
                rest_energy_override: None,
            }
        })
        .collect();
    let areas: Vec<BundleArea> = (0..n)
        .map(|i| {
            let c = center(i);
            let w = radius + h;
            BundleArea::boxed(
                format!("D{}", i + 1),
                [c[0] - w, -w, -w],
                [c[0] + w, shift + w, w],
            )
        })
        .collect();
    let pad = radius + 4.0 * h;
    let extent = [2.0 * (x0.abs() + radius + pad), shift + 2.0 * (radius + pad), 2.0 * (radius + pad)];
    let dims = extent.map(|e| (e / h).ceil() as usize + 1);
    let origin = [
        -0.5 * (dims[0] - 1) as f64 * h,
        0.5 * shift - 0.5 * (dims[1] - 1) as f64 * h,
        -0.5 * (dims[2] - 1) as f64 * h,
    ];
    let grid = GridSpec::new(origin, h, dims)?;
    let config = BundleConfiguration {
        intensities: intensities.to_vec(),
        areas: (0..n)
            .map(|i| {
                let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let members = if i == 0 { vec![vec![0], others] } else { vec![others, vec![i]] };
                AreaBundles::new(areas[i].id.clone(), members, intensities, vec![vec![0.0, energy], vec![energy, 0.0]])
            })
            .collect(),
    };
    config.validate()?;
    Ok(DetectorScenario {
        spec: SuperpositionSpec { states, constants },
        areas,
        grid,
        energies: vec![energy; n],
        config,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BornCriteria {
    pub max_abs_z: f64,
    pub min_p_value: f64,
}

impl Default for BornCriteria {
    fn default() -> Self {
        BornCriteria { max_abs_z: 3.0, min_p_value: 0.001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BornReport {
    pub trials: usize,
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// `√(p(1−p)/N)` under the expected probabilities.
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub criteria: BornCriteria,
    pub pass: bool,
}

impl BornReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:>6} {:>10} {:>12} {:>12} {:>10} {:>8}\n", "state", "count", "expected", "observed", "std_err", "z");
        for i in 0..self.counts.len() {
            s += &format!(
                "{:>6} {:>10} {:>12.6} {:>12.6} {:>10.3e} {:>8.3}\n",
                i, self.counts[i], self.expected[i], self.frequencies[i], self.std_errors[i], self.z_scores[i]
            );
        }
        s += &format!(
            "chi2 = {:.4} (dof {}), p = {:.4}: {}\n",
            self.chi_square,
            self.dof,
            self.p_value,
            if self.pass { "PASS" } else { "FAIL" }
        );
        s
    }
}

/// Final-state frequencies against `intensities`.
pub fn born_check(traces: &[CollapseTrace], intensities: &[f64], criteria: BornCriteria) -> Result<BornReport> {
    check_intensities(intensities)?;
    let n = intensities.len();
    let mut counts = vec![0u64; n];
    for t in traces {
        if t.final_state >= n {
            return Err(Error::StateCount { expected: n, got: t.final_state + 1 });
        }
        counts[t.final_state] += 1;
    }
    born_check_counts(&counts, intensities, criteria)
}

pub fn born_check_counts(counts: &[u64], intensities: &[f64], criteria: BornCriteria) -> Result<BornReport> {
    check_intensities(intensities)?;
    if counts.len() != intensities.len() {
        return Err(Error::StateCount { expected: intensities.len(), got: counts.len() });
    }
    let trials: u64 = counts.iter().sum();
    if trials == 0 {
        return Err(Error::NonPositive("trial count"));
    }
    let nf = trials as f64;
    let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let std_errors: Vec<f64> = intensities.iter().map(|p| (p * (1.0 - p) / nf).sqrt()).collect();
    let z_scores: Vec<f64> = (0..counts.len())
        .map(|i| {
            let d = frequencies[i] - intensities[i];
            if std_errors[i] > 0.0 {
                d / std_errors[i]
            } else if d == 0.0 {
                0.0
            } else {
                d.signum() * f64::INFINITY
            }
        })
        .collect();
    let mut chi_square = 0.0;
    let mut support = 0usize;
    let mut impossible = false;
    for (i, &p) in intensities.iter().enumerate() {
        if p > 0.0 {
            let e = p * nf;
            chi_square += (counts[i] as f64 - e).powi(2) / e;
            support += 1;
        } else if counts[i] > 0 {
            impossible = true;
        }
    }
    let dof = support.saturating_sub(1);
    let p_value = if impossible {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map_err(|e| Error::Parse(e.to_string()))?.sf(chi_square)
    };
    let pass = !impossible && z_scores.iter().all(|z| z.abs() < criteria.max_abs_z) && p_value > criteria.min_p_value;
    Ok(BornReport {
        trials: trials as usize,
        counts: counts.to_vec(),
        expected: intensities.to_vec(),
        frequencies,
        std_errors,
        z_scores,
        chi_square,
        dof,
        p_value,
        criteria,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceTrace {
    pub times: Vec<f64>,
    pub rho12: Vec<Complex64>,
    pub offdiag_magnitude: Vec<f64>,
    /// Closed-form `|ρ12(0)| exp(−E_G12 t/ħ)` at the same times.
    pub exact_magnitude: Vec<f64>,
    /// Diagonal elements `(ρ11, ρ22)` carried through the integrator.
    pub populations: Vec<[f64; 2]>,
}

impl DecoherenceTrace {
    /// Largest relative deviation of the integrated from the exact
    /// off-diagonal element.
    pub fn max_relative_error(&self, rho12_initial: Complex64, e1: f64, e2: f64, e_g12: f64, hbar: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.rho12)
            .map(|(&t, &r)| {
                let exact = closed_form(rho12_initial, e1, e2, e_g12, hbar, t);
                (r - exact).norm() / exact.norm().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_rho12,im_rho12,abs_rho12,abs_exact,rho11,rho22")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k],
                self.rho12[k].re,
                self.rho12[k].im,
                self.offdiag_magnitude[k],
                self.exact_magnitude[k],
                self.populations[k][0],
                self.populations[k][1]
            )?;
        }
        Ok(())
    }
}

fn closed_form(rho12: Complex64, e1: f64, e2: f64, e_g12: f64, hbar: f64, t: f64) -> Complex64 {
    rho12 * Complex64::new(-e_g12 * t / hbar, -(e1 - e2) * t / hbar).exp()
}

/// Largest RK4 step, as a fraction of the fastest timescale.
const STEP_FRACTION: f64 = 2e-3;

/// Two-state density matrix under `dρ_jk/dt = −(i/ħ)(E_j − E_k)ρ_jk −
/// (1 − δ_jk)(E_G12/ħ)ρ_jk`, integrated with classical RK4 between the
/// requested times.
pub fn decohere_two_state(
    energies: [f64; 2],
    e_g12: f64,
    populations: [f64; 2],
    rho12_initial: Complex64,
    times: &[f64],
    constants: &PhysicalConstants,
) -> Result<DecoherenceTrace> {
    constants.validate()?;
    if !(e_g12 >= 0.0 && e_g12.is_finite()) {
        return Err(Error::NonPositive("DP energy must be >= 0"));
    }
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Timeline("times must be non-empty, finite and strictly increasing".into()));
    }
    if rho12_initial.norm() > 0.5 + 1e-15 || rho12_initial.norm_sqr() > populations[0] * populations[1] * (1.0 + 1e-12) {
        return Err(Error::InvalidDistribution("|ρ12|² must not exceed ρ11 ρ22 (and |ρ12| <= 1/2)".into()));
    }
    let hbar = constants.hbar;
    let [e1, e2] = energies;
    // ρ as [ρ11, ρ12, ρ21, ρ22].
    let rhs = |r: [Complex64; 4]| -> [Complex64; 4] {
        let w = (e1 - e2) / hbar;
        let g = e_g12 / hbar;
        [
            Complex64::new(0.0, 0.0),
            Complex64::new(-g, -w) * r[1],
            Complex64::new(-g, w) * r[2],
            Complex64::new(0.0, 0.0),
        ]
    };
    let speed = ((e1 - e2).abs() + e_g12) / hbar;
    let mut state = [
        Complex64::new(populations[0], 0.0),
        rho12_initial,
        rho12_initial.conj(),
        Complex64::new(populations[1], 0.0),
    ];
    let mut t = times[0];
    let mut out = DecoherenceTrace {
        times: times.to_vec(),
        rho12: Vec::with_capacity(times.len()),
        offdiag_magnitude: Vec::with_capacity(times.len()),
        exact_magnitude: Vec::with_capacity(times.len()),
        populations: Vec::with_capacity(times.len()),
    };
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = if speed > 0.0 { ((span * speed) / STEP_FRACTION).ceil().max(1.0) as usize } else { 1 };
            let h = span / steps as f64;
            for _ in 0..steps {
                let k1 = rhs(state);
                let k2 = rhs(add(state, k1, 0.5 * h));
                let k3 = rhs(add(state, k2, 0.5 * h));
                let k4 = rhs(add(state, k3, h));
                for i in 0..4 {
                    state[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
                }
            }
            t = target;
        }
        out.rho12.push(state[1]);
        out.offdiag_magnitude.push(state[1].norm());
        out.exact_magnitude.push(rho12_initial.norm() * (-e_g12 * (target - times[0]) / hbar).exp());
        out.populations.push([state[0].re, state[3].re]);
    }
    Ok(out)
}

fn add(a: [Complex64; 4], b: [Complex64; 4], h: f64) -> [Complex64; 4] {
    [a[0] + b[0] * h, a[1] + b[1] * h, a[2] + b[2] * h, a[3] + b[3] * h]
}

/// Least-squares slope of `−ln|ρ12|` against time.
pub fn fit_decay_rate(trace: &DecoherenceTrace) -> Result<f64> {
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.offdiag_magnitude)
        .filter(|(_, m)| **m > 0.0)
        .map(|(&t, &m)| (t, m.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Timeline("need two samples with nonzero coherence".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::derive_bundles;
    use crate::massdist::SolverOptions;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> PhysicalConstants {
        PhysicalConstants::dimensionless()
    }

    fn abstract_model(p: &[f64]) -> CascadeModel {
        build_detector_scenario(p.len(), p, DetectorMode::Abstract { energy: 1.0 }, unit())
            .unwrap()
            .cascade_model()
            .unwrap()
    }

    #[test]
    fn degenerate_two_state_always_ends_in_first() {
        for k in 0..200 {
            let t = simulate_two_state([1.0, 0.0], 0.7, &unit(), 9, k).unwrap();
            assert_eq!(t.final_state, 0);
            assert_eq!(t.events.len(), 1);
        }
        assert!(matches!(simulate_two_state([0.5, 0.5], 0.0, &unit(), 1, 0), Err(Error::NoDecay)));
    }

    #[test]
    fn traces_replay_bit_for_bit() {
        let m = abstract_model(&[0.5, 0.3, 0.2]);
        let a = run_traces(&m, &unit(), 42, 300, &CascadeOptions::default(), Execution::Parallel).unwrap();
        let b = run_traces(&m, &unit(), 42, 300, &CascadeOptions::default(), Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let c = run_traces(&m, &unit(), 43, 300, &CascadeOptions::default(), Execution::Sequential).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn detector_structure_matches_grid_derivation() {
        let p = [0.5, 0.3, 0.2];
        let mode = DetectorMode::Geometric { mass: 1.0, radius: 1.0, displacement: 2.0 };
        let sc = build_detector_scenario(3, &p, mode, unit()).unwrap();
        assert_eq!(sc.config.areas[0].members(), vec![vec![0], vec![1, 2]]);
        assert_eq!(sc.config.areas[1].members(), vec![vec![0, 2], vec![1]]);
        for e in &sc.energies {
            assert_relative_eq!(*e, 0.7, max_relative = 1e-12);
        }
        let derived = derive_bundles(&sc.spec, &sc.areas, &sc.grid, &SolverOptions::default()).unwrap();
        for (a, b) in derived.areas.iter().zip(&sc.config.areas) {
            assert_eq!(a.members(), b.members());
            assert_eq!(a.bundles.iter().map(|x| x.intensity).collect::<Vec<_>>(), b.bundles.iter().map(|x| x.intensity).collect::<Vec<_>>());
        }
        derived.check_at_most_two().unwrap();
        assert!(build_detector_scenario(1, &[1.0], mode, unit()).is_err());
    }

    #[test]
    fn local_energies_add_up_to_global_for_separated_detectors() {
        use crate::bundles::{bundle_total_energy, local_dp_energy, mean_field_energies};
        let p = [0.5, 0.5];
        let mode = DetectorMode::Geometric { mass: 1.0, radius: 1.0, displacement: 2.0 };
        let sc = build_detector_scenario(2, &p, mode, unit()).unwrap();
        let opts = SolverOptions::default();
        let derived = derive_bundles(&sc.spec, &sc.areas, &sc.grid, &opts).unwrap();
        let local: f64 = sc.areas.iter().map(|a| local_dp_energy(&derived, &a.id, 0, 1).unwrap()).sum();
        let f = crate::dpenergy::PairFields::solve(&sc.spec.states[0].dist, &sc.spec.states[1].dist, &sc.grid, &unit(), &opts)
            .unwrap();
        let global = crate::dpenergy::dp_energy_potential_form(&f.rho1, &f.rho2, &f.phi1, &f.phi2, &unit()).unwrap();
        assert_relative_eq!(local, global.value, max_relative = 0.01);
        let (own, mean_total) = mean_field_energies(&sc.spec, &sc.grid, &opts).unwrap();
        let assembled = bundle_total_energy(&derived, &own).unwrap();
        assert_relative_eq!(assembled, mean_total, max_relative = 1e-3);
    }

    #[test]
    fn path_sum_is_born_rule() {
        for p in [vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.3, 0.4], vec![0.05, 0.15, 0.2, 0.25, 0.35], vec![1.0, 0.0, 0.0]] {
            let m = abstract_model(&p);
            let q = path_sum_probabilities(&m, &unit(), &CascadeOptions::default()).unwrap();
            for (a, b) in q.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12, "{q:?} vs {p:?}");
            }
        }
    }

    #[test]
    fn path_sum_with_unequal_energies() {
        let p = [0.2, 0.3, 0.1, 0.4];
        let mut m = abstract_model(&p);
        for (k, a) in m.areas.iter_mut().enumerate() {
            let e = 0.3 + k as f64;
            a.energies = vec![vec![0.0, e], vec![e, 0.0]];
        }
        let q = path_sum_probabilities(&m, &unit(), &CascadeOptions::default()).unwrap();
        for (a, b) in q.iter().zip(&p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn many_bundles_need_override() {
        let p = [0.2, 0.3, 0.5];
        let e = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let cfg = BundleConfiguration {
            intensities: p.to_vec(),
            areas: vec![AreaBundles::new("a", vec![vec![0], vec![1], vec![2]], &p, e)],
        };
        let m = CascadeModel::from_config(&cfg).unwrap();
        assert!(matches!(
            simulate_cascade(&m, &unit(), 1, 0, &CascadeOptions::default()),
            Err(Error::TooManyBundles { count: 3, .. })
        ));
        let opts = CascadeOptions { allow_many_bundles: true, max_events: None };
        let t = simulate_cascade(&m, &unit(), 1, 0, &opts).unwrap();
        assert_eq!(t.events.len(), 2);
    }

    #[test]
    fn stalled_cascade_is_reported() {
        let p = [0.5, 0.5];
        let cfg = BundleConfiguration {
            intensities: p.to_vec(),
            areas: vec![AreaBundles::new("a", vec![vec![0], vec![1]], &p, vec![vec![0.0; 2]; 2])],
        };
        let m = CascadeModel::from_config(&cfg).unwrap();
        assert!(matches!(
            simulate_cascade(&m, &unit(), 1, 0, &CascadeOptions::default()),
            Err(Error::StalledCascade { survivors: 2 })
        ));
    }

    #[test]
    fn born_check_controls() {
        let pass = born_check_counts(&[100, 0], &[1.0, 0.0], BornCriteria::default()).unwrap();
        assert!(pass.pass);
        let n = 100_000u64;
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        let shifted = ((0.25 + 10.0 * sigma) * n as f64) as u64;
        let fail = born_check_counts(&[shifted, n - shifted], &[0.25, 0.75], BornCriteria::default()).unwrap();
        assert!(!fail.pass);
        let impossible = born_check_counts(&[99, 1], &[1.0, 0.0], BornCriteria::default()).unwrap();
        assert!(!impossible.pass);
        assert!(pass.table().contains("PASS"));
    }

    #[test]
    fn decoherence_matches_closed_form() {
        let c = unit();
        let e = 0.7;
        let tau = c.hbar / e;
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1 * tau).collect();
        let r0 = Complex64::new(0.3, 0.4);
        let tr = decohere_two_state([1.3, 0.4], e, [0.5, 0.5], r0, &times, &c).unwrap();
        assert!(tr.max_relative_error(r0, 1.3, 0.4, e, c.hbar) < 1e-8);
        assert_relative_eq!(tr.offdiag_magnitude[10] / 0.5, (-1.0f64).exp(), max_relative = 1e-8);
        assert_relative_eq!(fit_decay_rate(&tr).unwrap(), e / c.hbar, max_relative = 1e-6);
        for w in tr.offdiag_magnitude.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(tr.populations.iter().all(|p| *p == [0.5, 0.5]));
        let still = decohere_two_state([1.0, 1.0], 0.0, [0.5, 0.5], r0, &times, &c).unwrap();
        assert!(still.offdiag_magnitude.iter().all(|m| (m - 0.5).abs() < 1e-15));
        assert!(decohere_two_state([1.0, 1.0], -1.0, [0.5, 0.5], r0, &times, &c).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cascade_invariants(raw in prop::collection::vec(0.01f64..1.0, 2..6), seed in any::<u64>(), idx in 0u64..1000) {
            let s: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let last = 1.0 - p[..p.len() - 1].iter().sum::<f64>();
            *p.last_mut().unwrap() = last;
            let m = abstract_model(&p);
            let t = simulate_cascade(&m, &unit(), seed, idx, &CascadeOptions::default()).unwrap();
            prop_assert!(t.events.len() <= p.len() - 1);
            let mut prev = p.len();
            let mut tprev = 0.0;
            for e in &t.events {
                prop_assert!(e.survivors.len() < prev);
                prop_assert!(e.time > tprev);
                prev = e.survivors.len();
                tprev = e.time;
            }
            prop_assert_eq!(t.events.last().unwrap().survivors.clone(), vec![t.final_state]);
            prop_assert!(t.final_state < p.len());
        }
    }
}
