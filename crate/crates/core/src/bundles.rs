//! Local bundles: on a bundle area, states whose mass densities coincide
//! form one bundle. Bundles on the same area compete through local DP
//! energies, which give bundle energy increases, decay rates and, over a
//! timeline, local competition and detuning actions.
//!
//! Bundle and state indices are 0-based. A bundle's density on its area is
//! that of its first member; its potential there is the intensity-weighted
//! mean of its members' potentials, which makes the bundle form of the
//! total energy the exact regrouping of the mean-field energy whenever
//! states differ only inside areas.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::actions::{check_times, ActionResult};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::grid::{DensityGrid, GridSpec, PotentialField};
use crate::massdist::{self, rasterize, MassDistribution, SolverOptions};
use crate::superposition::{check_intensities, rest_energy, SuperpositionSpec};

/// Densities closer than `EQUALITY_TOL · max(1, max density)` count as equal.
pub const EQUALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Nodes with `min ≤ x ≤ max` on every axis.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Explicit linear node indices on the shared grid.
    Mask { cells: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleArea {
    pub id: String,
    pub region: Region,
}

impl BundleArea {
    pub fn boxed(id: impl Into<String>, min: [f64; 3], max: [f64; 3]) -> Self {
        BundleArea { id: id.into(), region: Region::Box { min, max } }
    }

    /// Sorted node indices of the area on `grid`.
    pub fn cells(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        match &self.region {
            Region::Box { min, max } => {
                if (0..3).any(|a| !(min[a] <= max[a])) {
                    return Err(Error::Bundle(format!("area {}: box min must not exceed max", self.id)));
                }
                Ok((0..grid.len())
                    .filter(|&i| {
                        let x = grid.node(i);
                        (0..3).all(|a| x[a] >= min[a] && x[a] <= max[a])
                    })
                    .collect())
            }
            Region::Mask { cells } => {
                let set: BTreeSet<usize> = cells.iter().copied().collect();
                if let Some(bad) = set.iter().find(|&&c| c >= grid.len()) {
                    return Err(Error::Bundle(format!("area {}: cell {bad} outside grid", self.id)));
                }
                Ok(set.into_iter().collect())
            }
        }
    }
}

/// Node lists of all areas; errors on duplicate ids or shared nodes.
pub fn area_cells(areas: &[BundleArea], grid: &GridSpec) -> Result<Vec<Vec<usize>>> {
    let mut owner = vec![usize::MAX; grid.len()];
    let mut out = Vec::with_capacity(areas.len());
    for (k, a) in areas.iter().enumerate() {
        if areas[..k].iter().any(|b| b.id == a.id) {
            return Err(Error::Bundle(format!("duplicate area id {}", a.id)));
        }
        let cells = a.cells(grid)?;
        for &c in &cells {
            if owner[c] != usize::MAX {
                return Err(Error::Bundle(format!("areas {} and {} overlap", areas[owner[c]].id, a.id)));
            }
            owner[c] = k;
        }
        out.push(cells);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBundle {
    pub area_id: String,
    pub kappa: usize,
    pub members: Vec<usize>,
    /// Sum of member intensities.
    pub intensity: f64,
}

/// Bundles of one area and their local DP energies `local_dp[κ][ν]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaBundles {
    pub area_id: String,
    pub bundles: Vec<LocalBundle>,
    pub local_dp: Vec<Vec<f64>>,
}

impl AreaBundles {
    /// Area with given member sets and a symmetric energy matrix.
    pub fn new(area_id: impl Into<String>, members: Vec<Vec<usize>>, intensities: &[f64], local_dp: Vec<Vec<f64>>) -> Self {
        let area_id = area_id.into();
        let bundles = members
            .into_iter()
            .enumerate()
            .map(|(kappa, members)| LocalBundle {
                area_id: area_id.clone(),
                kappa,
                intensity: members.iter().map(|&i| intensities[i]).sum(),
                members,
            })
            .collect();
        AreaBundles { area_id, bundles, local_dp }
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        self.bundles.iter().map(|b| b.members.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleConfiguration {
    pub intensities: Vec<f64>,
    pub areas: Vec<AreaBundles>,
}

impl BundleConfiguration {
    pub fn validate(&self) -> Result<()> {
        check_intensities(&self.intensities)?;
        let n = self.intensities.len();
        for a in &self.areas {
            if a.bundles.is_empty() {
                return Err(Error::Bundle(format!("area {} has no bundles", a.area_id)));
            }
            let mut seen = vec![false; n];
            for b in &a.bundles {
                if b.members.is_empty() {
                    return Err(Error::Bundle(format!("area {}: bundle {} is empty", a.area_id, b.kappa)));
                }
                for &i in &b.members {
                    if i >= n || std::mem::replace(&mut seen[i], true) {
                        return Err(Error::Bundle(format!("area {}: member sets must partition the states", a.area_id)));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::Bundle(format!("area {}: member sets must cover all states", a.area_id)));
            }
            let m = a.bundles.len();
            if a.local_dp.len() != m || a.local_dp.iter().any(|r| r.len() != m) {
                return Err(Error::Bundle(format!("area {}: energy matrix must be {m}x{m}", a.area_id)));
            }
            for k in 0..m {
                for v in 0..m {
                    let e = a.local_dp[k][v];
                    if !(e.is_finite() && e >= 0.0) || e != a.local_dp[v][k] || (k == v && e != 0.0) {
                        return Err(Error::Bundle(format!(
                            "area {}: energies must be finite, non-negative and symmetric with zero diagonal",
                            a.area_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn area(&self, id: &str) -> Result<&AreaBundles> {
        self.areas.iter().find(|a| a.area_id == id).ok_or_else(|| Error::Bundle(format!("unknown area {id}")))
    }

    /// Errors on any area holding more than two bundles.
    pub fn check_at_most_two(&self) -> Result<()> {
        match self.areas.iter().find(|a| a.bundles.len() > 2) {
            Some(a) => Err(Error::TooManyBundles { area: a.area_id.clone(), count: a.bundles.len() }),
            None => Ok(()),
        }
    }

    /// `{areas: [{id, bundles: [{kappa, members, intensity}], local_dp}], intensities}`.
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({
            "intensities": self.intensities,
            "areas": self.areas.iter().map(|a| serde_json::json!({
                "id": a.area_id,
                "bundles": a.bundles.iter().map(|b| serde_json::json!({
                    "kappa": b.kappa,
                    "members": b.members,
                    "intensity": b.intensity,
                })).collect::<Vec<_>>(),
                "local_dp": a.local_dp,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Rasterized densities and potentials of every state.
pub struct StateFields {
    pub rho: Vec<DensityGrid>,
    pub phi: Vec<PotentialField>,
}

impl StateFields {
    pub fn solve(
        dists: &[&MassDistribution],
        grid: &GridSpec,
        constants: &PhysicalConstants,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let mut rho = Vec::with_capacity(dists.len());
        let mut phi = Vec::with_capacity(dists.len());
        for d in dists {
            massdist::check_padding(d, grid)?;
            let r = rasterize(d, grid, opts)?;
            phi.push(massdist::potential_of_density(&r, constants, opts)?);
            rho.push(r);
        }
        Ok(StateFields { rho, phi })
    }
}

/// Groups states whose densities agree on `cells`, in order of first member.
fn partition(rho: &[DensityGrid], cells: &[usize]) -> Vec<Vec<usize>> {
    let scale = rho.iter().fold(1.0f64, |m, r| m.max(r.max_abs()));
    let tol = EQUALITY_TOL * scale;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..rho.len() {
        let same = |rep: usize| cells.iter().all(|&c| (rho[i].values[c] - rho[rep].values[c]).abs() <= tol);
        match groups.iter_mut().find(|g| same(g[0])) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// `Σ_{i∈members} p_i f_i / Σ p_i` on `cells`; unweighted if all `p_i` vanish.
fn bundle_mean(fields: &[&[f64]], members: &[usize], p: &[f64], cells: &[usize]) -> Vec<f64> {
    let total: f64 = members.iter().map(|&i| p[i]).sum();
    let w: Vec<f64> = if total > 0.0 {
        members.iter().map(|&i| p[i] / total).collect()
    } else {
        vec![1.0 / members.len() as f64; members.len()]
    };
    cells.iter().map(|&c| members.iter().zip(&w).map(|(&i, wi)| wi * fields[i][c]).sum()).collect()
}

/// `ξ ∫_A (a_κ − a_ν)(b̄_ν − b̄_κ)` for every bundle pair.
fn local_matrix(
    a: &[&[f64]],
    b: &[&[f64]],
    groups: &[Vec<usize>],
    p: &[f64],
    cells: &[usize],
    scale: f64,
) -> Vec<Vec<f64>> {
    let m = groups.len();
    let reps: Vec<Vec<f64>> = groups.iter().map(|g| cells.iter().map(|&c| a[g[0]][c]).collect()).collect();
    let means: Vec<Vec<f64>> = groups.iter().map(|g| bundle_mean(b, g, p, cells)).collect();
    let mut out = vec![vec![0.0; m]; m];
    for k in 0..m {
        for v in k + 1..m {
            let e = scale
                * exec::sum_indexed(cells.len(), Execution::default(), |i| {
                    (reps[k][i] - reps[v][i]) * (means[v][i] - means[k][i])
                });
            out[k][v] = e;
            out[v][k] = e;
        }
    }
    out
}

fn configure(
    intensities: &[f64],
    areas: &[BundleArea],
    cells: &[Vec<usize>],
    fields: &StateFields,
    constants: &PhysicalConstants,
) -> BundleConfiguration {
    let rho: Vec<&[f64]> = fields.rho.iter().map(|r| r.values.as_slice()).collect();
    let phi: Vec<&[f64]> = fields.phi.iter().map(|f| f.values.as_slice()).collect();
    let scale = constants.xi * fields.rho.first().map_or(0.0, |r| r.grid.cell_volume());
    let areas = areas
        .iter()
        .zip(cells)
        .map(|(a, c)| {
            let groups = partition(&fields.rho, c);
            let dp = local_matrix(&rho, &phi, &groups, intensities, c, scale);
            AreaBundles::new(a.id.clone(), groups, intensities, dp)
        })
        .collect();
    BundleConfiguration { intensities: intensities.to_vec(), areas }
}

/// Bundles of `spec` on each area, from densities rasterized on `grid`.
pub fn derive_bundles(
    spec: &SuperpositionSpec,
    areas: &[BundleArea],
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<BundleConfiguration> {
    spec.validate()?;
    let cells = area_cells(areas, grid)?;
    let dists: Vec<&MassDistribution> = spec.states.iter().map(|s| &s.dist).collect();
    let fields = StateFields::solve(&dists, grid, &spec.constants, opts)?;
    let cfg = configure(&spec.intensities(), areas, &cells, &fields, &spec.constants);
    cfg.validate()?;
    Ok(cfg)
}

/// `E^A_{Gκν}`.
pub fn local_dp_energy(cfg: &BundleConfiguration, area: &str, kappa: usize, nu: usize) -> Result<f64> {
    let a = cfg.area(area)?;
    let m = a.bundles.len();
    if kappa >= m || nu >= m {
        return Err(Error::Bundle(format!("area {area} has {m} bundles")));
    }
    if kappa == nu {
        return Err(Error::Bundle(format!("area {area}: local DP energy needs two different bundles")));
    }
    Ok(a.local_dp[kappa][nu])
}

/// `E^A_{Gκ} = Σ_{ν≠κ} |c_ν|² E^A_{Gκν}`.
pub fn bundle_energy_increase(cfg: &BundleConfiguration, area: &str, kappa: usize) -> Result<f64> {
    let a = cfg.area(area)?;
    if kappa >= a.bundles.len() {
        return Err(Error::Bundle(format!("area {area} has no bundle {kappa}")));
    }
    Ok(a.bundles.iter().filter(|b| b.kappa != kappa).map(|b| b.intensity * a.local_dp[kappa][b.kappa]).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRate {
    pub area_id: String,
    pub kappa: usize,
    pub members: Vec<usize>,
    pub rate: f64,
}

/// `E^A_{Gκ} / ħ` for every bundle on every area.
pub fn bundle_decay_rates(cfg: &BundleConfiguration, constants: &PhysicalConstants) -> Result<Vec<BundleRate>> {
    constants.validate()?;
    let mut out = Vec::new();
    for a in &cfg.areas {
        for b in &a.bundles {
            out.push(BundleRate {
                area_id: a.area_id.clone(),
                kappa: b.kappa,
                members: b.members.clone(),
                rate: bundle_energy_increase(cfg, &a.area_id, b.kappa)? / constants.hbar,
            });
        }
    }
    Ok(out)
}

/// `Σ_A Σ_{κ<ν} |c_κ|²|c_ν|² x^A_{κν}` for a per-area pair matrix `x`.
fn pair_sum(cfg: &BundleConfiguration, value: impl Fn(usize, usize, usize) -> f64) -> f64 {
    let mut terms = Vec::new();
    for (ai, a) in cfg.areas.iter().enumerate() {
        for k in 0..a.bundles.len() {
            for v in k + 1..a.bundles.len() {
                terms.push(a.bundles[k].intensity * a.bundles[v].intensity * value(ai, k, v));
            }
        }
    }
    exec::pairwise_sum(&terms)
}

/// Interaction part of the bundle total energy.
pub fn bundle_interaction_energy(cfg: &BundleConfiguration) -> f64 {
    pair_sum(cfg, |a, k, v| cfg.areas[a].local_dp[k][v])
}

/// `Σ_i |c_i|² E_i + Σ_A Σ_{κ<ν} |c_κ|²|c_ν|² E^A_{Gκν}`.
pub fn bundle_total_energy(cfg: &BundleConfiguration, state_energies: &[f64]) -> Result<f64> {
    if state_energies.len() != cfg.intensities.len() {
        return Err(Error::StateCount { expected: cfg.intensities.len(), got: state_energies.len() });
    }
    let own: f64 = cfg.intensities.iter().zip(state_energies).map(|(p, e)| p * e).sum();
    Ok(own + bundle_interaction_energy(cfg))
}

/// Per-state energies `∫ρ_i(c² + Φ_i/2)` and the mean-field total
/// `Σ|c_i|² rest_i + ½∫ρ̄Φ̄` of an N-state superposition on `grid`.
pub fn mean_field_energies(spec: &SuperpositionSpec, grid: &GridSpec, opts: &SolverOptions) -> Result<(Vec<f64>, f64)> {
    spec.validate()?;
    let dists: Vec<&MassDistribution> = spec.states.iter().map(|s| &s.dist).collect();
    let f = StateFields::solve(&dists, grid, &spec.constants, opts)?;
    let vol = grid.cell_volume();
    let p = spec.intensities();
    let e = Execution::default();
    let rest: Vec<f64> = spec.states.iter().map(|s| rest_energy(s, &spec.constants)).collect();
    let own: Vec<f64> = (0..p.len())
        .map(|i| rest[i] + 0.5 * vol * exec::sum_indexed(grid.len(), e, |c| f.rho[i].values[c] * f.phi[i].values[c]))
        .collect();
    let mean = exec::sum_indexed(grid.len(), e, |c| {
        let r: f64 = (0..p.len()).map(|i| p[i] * f.rho[i].values[c]).sum();
        let q: f64 = (0..p.len()).map(|i| p[i] * f.phi[i].values[c]).sum();
        r * q
    });
    let total = p.iter().zip(&rest).map(|(a, b)| a * b).sum::<f64>() + 0.5 * vol * mean;
    Ok((own, total))
}

/// Snapshots of N states at common times on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleTimeline {
    pub times: Vec<f64>,
    pub grid: GridSpec,
    pub intensities: Vec<f64>,
    /// `snapshots[k][i]`: state `i` at `times[k]`.
    pub snapshots: Vec<Vec<MassDistribution>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionForm {
    Newtonian,
    /// Weak-field `T = c²ρ`, `√−g = 1 + Φ/c²` on constant-time slices.
    Relativistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAction {
    pub kappa: usize,
    pub nu: usize,
    /// Cumulative `S^A_{Gκν}` and its integrand at each time.
    pub action: ActionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaActions {
    pub area_id: String,
    pub members: Vec<Vec<usize>>,
    pub intensities: Vec<f64>,
    pub pairs: Vec<PairAction>,
    /// `S^A_{Gκ} = Σ_{ν≠κ} |c_ν|² S^A_{Gκν}` at the last time.
    pub detuning: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalActionResult {
    pub form: ActionForm,
    pub areas: Vec<AreaActions>,
    /// `Σ_A Σ_{κ<ν} |c_κ|²|c_ν|² S^A_{Gκν}`.
    pub interaction_action: f64,
}

/// Local competition actions, bundle detuning actions and the interaction
/// part of the total action over a timeline. The bundle partition must not
/// change between snapshots.
pub fn local_competition_action(
    tl: &BundleTimeline,
    areas: &[BundleArea],
    constants: &PhysicalConstants,
    opts: &SolverOptions,
    form: ActionForm,
) -> Result<LocalActionResult> {
    constants.validate()?;
    check_times(&tl.times)?;
    check_intensities(&tl.intensities)?;
    let n = tl.intensities.len();
    if tl.snapshots.len() != tl.times.len() || tl.snapshots.iter().any(|s| s.len() != n) {
        return Err(Error::Timeline("need one snapshot of every state per time".into()));
    }
    let cells = area_cells(areas, &tl.grid)?;
    let configs: Vec<BundleConfiguration> = exec::map_indexed(tl.times.len(), opts.execution, |k| {
        let dists: Vec<&MassDistribution> = tl.snapshots[k].iter().collect();
        let fields = StateFields::solve(&dists, &tl.grid, constants, opts)?;
        match form {
            ActionForm::Newtonian => Ok(configure(&tl.intensities, areas, &cells, &fields, constants)),
            ActionForm::Relativistic => relativistic_configure(&tl.intensities, areas, &cells, &fields, constants),
        }
    })
    .into_iter()
    .collect::<Result<_>>()?;
    for (k, c) in configs.iter().enumerate().skip(1) {
        if c.areas.iter().zip(&configs[0].areas).any(|(a, b)| a.members() != b.members()) {
            return Err(Error::PartitionChanged(0, k));
        }
    }
    let first = &configs[0];
    let mut out_areas = Vec::with_capacity(first.areas.len());
    for (ai, a) in first.areas.iter().enumerate() {
        let m = a.bundles.len();
        let intensities: Vec<f64> = a.bundles.iter().map(|b| b.intensity).collect();
        let mut pairs = Vec::new();
        let mut finals = vec![vec![0.0; m]; m];
        for k in 0..m {
            for v in k + 1..m {
                let energies: Vec<f64> = configs.iter().map(|c| c.areas[ai].local_dp[k][v]).collect();
                let action = ActionResult::from_energies(&tl.times, &energies, pair_intensities(&intensities, k, v))?;
                finals[k][v] = action.s_g12;
                finals[v][k] = action.s_g12;
                pairs.push(PairAction { kappa: k, nu: v, action });
            }
        }
        let detuning = (0..m).map(|k| (0..m).filter(|&v| v != k).map(|v| intensities[v] * finals[k][v]).sum()).collect();
        out_areas.push(AreaActions { area_id: a.area_id.clone(), members: a.members(), intensities, pairs, detuning });
    }
    let interaction_action = {
        let mut terms = Vec::new();
        for a in &out_areas {
            for p in &a.pairs {
                terms.push(a.intensities[p.kappa] * a.intensities[p.nu] * p.action.s_g12);
            }
        }
        exec::pairwise_sum(&terms)
    };
    Ok(LocalActionResult { form, areas: out_areas, interaction_action })
}

/// The pair's intensities renormalized to one, as the two-state action
/// record expects; with both zero the split is even.
fn pair_intensities(p: &[f64], k: usize, v: usize) -> [f64; 2] {
    let s = p[k] + p[v];
    if s > 0.0 {
        let a = p[k] / s;
        [a, 1.0 - a]
    } else {
        [0.5, 0.5]
    }
}

fn relativistic_configure(
    intensities: &[f64],
    areas: &[BundleArea],
    cells: &[Vec<usize>],
    fields: &StateFields,
    constants: &PhysicalConstants,
) -> Result<BundleConfiguration> {
    let rel = fields
        .rho
        .iter()
        .zip(&fields.phi)
        .map(|(r, f)| crate::actions::RelativisticFields::newtonian(r, f, constants.c))
        .collect::<Result<Vec<_>>>()?;
    let t: Vec<&[f64]> = rel.iter().map(|f| f.trace.values.as_slice()).collect();
    let d: Vec<&[f64]> = rel.iter().map(|f| f.volume_deviation.values.as_slice()).collect();
    let scale = constants.xi * fields.rho.first().map_or(0.0, |r| r.grid.cell_volume());
    let areas = areas
        .iter()
        .zip(cells)
        .map(|(a, c)| {
            let groups = partition(&fields.rho, c);
            let dp = local_matrix(&t, &d, &groups, intensities, c, scale);
            AreaBundles::new(a.id.clone(), groups, intensities, dp)
        })
        .collect();
    Ok(BundleConfiguration { intensities: intensities.to_vec(), areas })
}

/// Detector areas with exactly the detection bundle `{i}` and the
/// no-detection bundle `¬i`: rates are `Σ_{j≠i}|c_j|² E/ħ` and `|c_i|² E/ħ`.
pub fn detector_rates(p: &[f64], i: usize, energy: f64, constants: &PhysicalConstants) -> (f64, f64) {
    let others: f64 = p.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
    (others * energy / constants.hbar, p[i] * energy / constants.hbar)
}
