//! One function per subcommand. Each returns a flat summary, used for the
//! console line and as a sweep row, and writes its artifacts when given a
//! sink.

use anyhow::{bail, Result};
use num_complex::Complex64;
use serde_json::{json, Value};

use dpcollapse::actions::{self, ScenarioTimeline};
use dpcollapse::bundles::{self, BundleConfiguration};
use dpcollapse::collapse_sim::{self, BornCriteria, CascadeModel, CascadeOptions, CollapseTrace};
use dpcollapse::dpenergy::{self, DpEnergyResult, PairFields};
use dpcollapse::superposition;
use dpcollapse::{massdist, Evaluation, Execution, MassDistribution, SuperpositionSpec};

use crate::config::{DecoherenceConfig, Format, ScenarioConfig};
use crate::output::{Cell, Outputs, Runtimes, Table};
use crate::ConfigError;

/// Relative agreement expected between the grid forms of the DP energy.
pub const FORM_AGREEMENT: f64 = 0.02;

/// Integrator steps above which `decohere` refuses to run.
const MAX_DECOHERENCE_STEPS: f64 = 5e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Solve and dump the mean potential of the superposition.
    Potential,
    /// DP energy by every available method, with a cross-check report.
    DpEnergy,
    /// Lifetime, energy increases and decay rates of a two-state superposition.
    Lifetime,
    /// Energy fuzziness of both states and its mean against the DP energy.
    Fuzziness,
    /// Newtonian and relativistic competition-action traces.
    Action,
    /// Derive and dump the local bundles of every area.
    Bundles,
    /// Simulate decay cascades.
    Simulate,
    /// Simulate cascades and test final-state frequencies against |c_i|^2.
    BornCheck,
    /// Integrate the two-state density matrix and fit the decay rate.
    Decohere,
    /// Re-run a subcommand over the configured parameter values.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Potential => "potential",
            Command::DpEnergy => "dp-energy",
            Command::Lifetime => "lifetime",
            Command::Fuzziness => "fuzziness",
            Command::Action => "action",
            Command::Bundles => "bundles",
            Command::Simulate => "simulate",
            Command::BornCheck => "born-check",
            Command::Decohere => "decohere",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let all = [
            Command::Potential,
            Command::DpEnergy,
            Command::Lifetime,
            Command::Fuzziness,
            Command::Action,
            Command::Bundles,
            Command::Simulate,
            Command::BornCheck,
            Command::Decohere,
            Command::Sweep,
        ];
        all.into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| ConfigError(format!("unknown subcommand '{name}'")).into())
    }
}

pub type Summary = Vec<(String, Cell)>;

#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: Summary,
    /// Set when a statistical check ran and failed.
    pub failure: Option<String>,
}

impl From<Summary> for Outcome {
    fn from(summary: Summary) -> Self {
        Outcome { summary, failure: None }
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a ScenarioConfig,
    pub sink: Option<&'a mut Outputs>,
    pub times: &'a mut Runtimes,
}

impl Ctx<'_> {
    fn table(&mut self, stem: &str, build: impl FnOnce() -> Table) -> Result<()> {
        match self.sink.as_deref_mut() {
            Some(s) => s.table(stem, &build()),
            None => Ok(()),
        }
    }

    fn json(&mut self, name: &str, build: impl FnOnce() -> Value) -> Result<()> {
        match self.sink.as_deref_mut() {
            Some(s) => s.json(name, &build()),
            None => Ok(()),
        }
    }
}

fn entry(name: &str, v: impl Into<Cell>) -> (String, Cell) {
    (name.to_string(), v.into())
}

pub fn run(cmd: Command, ctx: &mut Ctx) -> Result<Outcome> {
    match cmd {
        Command::Potential => potential(ctx).map(Into::into),
        Command::DpEnergy => dp_energy(ctx).map(Into::into),
        Command::Lifetime => lifetime(ctx).map(Into::into),
        Command::Fuzziness => fuzziness(ctx).map(Into::into),
        Command::Action => action(ctx).map(Into::into),
        Command::Bundles => bundles(ctx).map(Into::into),
        Command::Simulate => simulate(ctx).map(Into::into),
        Command::BornCheck => born_check(ctx),
        Command::Decohere => decohere(ctx).map(Into::into),
        Command::Sweep => bail!(ConfigError("sweep cannot run inside a sweep".into())),
    }
}

fn two_states(cfg: &ScenarioConfig) -> Result<(SuperpositionSpec, [f64; 2])> {
    let spec = cfg.spec()?;
    if spec.states.len() != 2 {
        bail!(ConfigError(format!("this subcommand needs exactly 2 states, got {}", spec.states.len())));
    }
    let p = [spec.states[0].intensity, spec.states[1].intensity];
    Ok((spec, p))
}

fn all_analytic(spec: &SuperpositionSpec) -> bool {
    spec.states.iter().all(|s| s.dist.is_analytic())
}

fn evaluation(cfg: &ScenarioConfig, spec: &SuperpositionSpec) -> Result<Evaluation> {
    if all_analytic(spec) {
        return Ok(Evaluation::Analytic);
    }
    let (grid, opts) = cfg.require_grid("a voxel body")?;
    Ok(Evaluation::Grid(grid, opts))
}

/// Closed form on sphere sets, otherwise the grid potential form.
fn primary_dp(cfg: &ScenarioConfig, spec: &SuperpositionSpec) -> Result<(f64, &'static str)> {
    let (d1, d2) = (&spec.states[0].dist, &spec.states[1].dist);
    match evaluation(cfg, spec)? {
        Evaluation::Analytic => {
            let r = dpenergy::dp_energy_double_integral(d1, d2, &spec.constants, &Evaluation::Analytic)?;
            Ok((r.value, "analytic"))
        }
        Evaluation::Grid(grid, opts) => {
            let f = PairFields::solve(d1, d2, &grid, &spec.constants, &opts)?;
            let r = dpenergy::dp_energy_potential_form(&f.rho1, &f.rho2, &f.phi1, &f.phi2, &spec.constants)?;
            Ok((r.value, "potential_form"))
        }
    }
}

fn potential(ctx: &mut Ctx) -> Result<Summary> {
    let spec = ctx.cfg.spec()?;
    let (grid, opts) = ctx.cfg.require_grid("potential")?;
    let (rho, phi) = ctx.times.time("solve", || -> Result<_> {
        Ok((massdist::mean_distribution(&spec, &grid, &opts)?, massdist::mean_potential(&spec, &grid, &opts)?))
    })?;
    ctx.table("potential", || {
        let mut t = Table::new(&["i", "j", "k", "x", "y", "z", "density", "potential"]);
        for idx in 0..grid.len() {
            let [i, j, k] = grid.coords(idx);
            let [x, y, z] = grid.node(idx);
            t.push(vec![
                i.into(),
                j.into(),
                k.into(),
                x.into(),
                y.into(),
                z.into(),
                rho.values[idx].into(),
                phi.values[idx].into(),
            ]);
        }
        t
    })?;
    if let Some(s) = ctx.sink.as_deref_mut() {
        phi.write_binary(s.writer("potential.bin")?)?;
    }
    let min = phi.values.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = spec.constants.c * spec.constants.c;
    let weak = phi.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) / c2;
    if weak >= dpenergy::WEAK_FIELD_LIMIT {
        log::warn!("max |Φ|/c² = {weak:.3e} is outside the weak-field range");
    }
    Ok(vec![entry("total_mass", rho.integral()), entry("min_potential", min), entry("max_phi_over_c2", weak)])
}

fn dp_energy(ctx: &mut Ctx) -> Result<Summary> {
    let (spec, _) = two_states(ctx.cfg)?;
    let (d1, d2) = (&spec.states[0].dist, &spec.states[1].dist);
    let constants = spec.constants;
    let grid = ctx.cfg.grid()?;
    let analytic = if all_analytic(&spec) {
        Some(dpenergy::dp_energy_double_integral(d1, d2, &constants, &Evaluation::Analytic)?)
    } else {
        None
    };
    let report = match grid {
        Some((g, opts)) => Some(ctx.times.time("grid", || dpenergy::dp_energy_report(d1, d2, &g, &constants, &opts))?),
        None => None,
    };
    if analytic.is_none() && report.is_none() {
        bail!(ConfigError("dp-energy needs sphere bodies or a [grid] section".into()));
    }
    let mut results: Vec<&DpEnergyResult> = analytic.iter().collect();
    if let Some(r) = &report {
        results.extend(r.grid_results());
    }
    let reference = analytic.as_ref().map(|a| a.value);
    let rel = |v: f64| reference.map_or(f64::NAN, |a| (v - a) / a);
    let name = |r: &DpEnergyResult| if r.grid.is_some() { r.method.as_str() } else { "analytic" };
    ctx.table("dp_energy", || {
        let mut t = Table::new(&["method", "xi", "value", "estimated_error", "relative_to_analytic"]);
        for r in &results {
            t.push(vec![name(r).into(), r.xi.into(), r.value.into(), r.estimated_error.into(), rel(r.value).into()]);
        }
        t
    })?;
    let spread = report.as_ref().map(|r| r.max_relative_spread());
    let worst = report
        .as_ref()
        .and_then(|r| reference.map(|_| r.grid_results().iter().map(|g| rel(g.value).abs()).fold(0.0, f64::max)));
    let agree = spread.map_or(true, |s| s <= FORM_AGREEMENT) && worst.map_or(true, |w| w <= FORM_AGREEMENT);
    if !agree {
        log::warn!("DP-energy methods disagree by more than {}%", FORM_AGREEMENT * 100.0);
    }
    ctx.json("dp_energy.json", || {
        let mut methods = serde_json::Map::new();
        for r in &results {
            let mut rec = r.record();
            rec["uncertain"] = json!(r.is_uncertain());
            methods.insert(name(r).to_string(), rec);
        }
        json!({
            "methods": methods,
            "max_relative_spread": spread,
            "max_relative_error_vs_analytic": worst,
            "tolerance": FORM_AGREEMENT,
            "agree": agree,
        })
    })?;
    Ok(results.iter().map(|r| entry(name(r), r.value)).collect())
}

fn lifetime(ctx: &mut Ctx) -> Result<Summary> {
    let (spec, _) = two_states(ctx.cfg)?;
    let constants = spec.constants;
    let (e, method) = ctx.times.time("dp_energy", || primary_dp(ctx.cfg, &spec))?;
    let t = dpenergy::lifetime(e, &constants)?;
    let (eg1, eg2) = superposition::energy_increases(&spec, e)?;
    let rates = superposition::decay_rates(&spec, e, &constants)?;
    let mean = superposition::mean_lifetime(rates);
    let eval = evaluation(ctx.cfg, &spec)?;
    let breakdown = ctx.times.time("breakdown", || superposition::total_energy(&spec, &eval))?;
    let summary = vec![
        entry("dp_energy", e),
        entry("lifetime", t.seconds()),
        entry("energy_increase_1", eg1),
        entry("energy_increase_2", eg2),
        entry("rate_1", rates.0),
        entry("rate_2", rates.1),
        entry("mean_first_decay_time", mean.seconds()),
    ];
    ctx.table("lifetime", || {
        let mut t = Table::new(&summary.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>());
        t.push(summary.iter().map(|(_, v)| v.clone()).collect());
        t
    })?;
    ctx.json("lifetime.json", || {
        json!({
            "dp_energy": e,
            "dp_method": method,
            "xi": constants.xi,
            "lifetime": t,
            "energy_increases": [eg1, eg2],
            "decay_rates": [rates.0, rates.1],
            "mean_first_decay_time": mean,
            "energy_breakdown": breakdown.record(),
        })
    })?;
    Ok(summary)
}

fn fuzziness(ctx: &mut Ctx) -> Result<Summary> {
    let (spec, _) = two_states(ctx.cfg)?;
    let (grid, opts) = ctx.cfg.require_grid("fuzziness")?;
    let c = spec.constants;
    let f = ctx
        .times
        .time("solve", || PairFields::solve(&spec.states[0].dist, &spec.states[1].dist, &grid, &c, &opts))?;
    let (de1, de2) = dpenergy::energy_fuzziness(&f.rho1, &f.rho2, &f.phi1, &f.phi2)?;
    // The identity holds against the ξ = 1/2 potential form.
    let half = dpenergy::dp_energy_potential_form(&f.rho1, &f.rho2, &f.phi1, &f.phi2, &c.with_xi(0.5))?.value;
    let mean = 0.5 * (de1 + de2);
    let residual = if half != 0.0 { (mean - half).abs() / half.abs() } else { (mean - half).abs() };
    let summary = vec![
        entry("delta_e1", de1),
        entry("delta_e2", de2),
        entry("mean", mean),
        entry("potential_form_half", half),
        entry("relative_residual", residual),
    ];
    ctx.table("fuzziness", || {
        let mut t = Table::new(&summary.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>());
        t.push(summary.iter().map(|(_, v)| v.clone()).collect());
        t
    })?;
    Ok(summary)
}

fn action_timeline(cfg: &ScenarioConfig) -> Result<([f64; 2], ScenarioTimeline)> {
    let (_, p) = two_states(cfg)?;
    let (grid, _) = cfg.require_grid("action")?;
    let ac = cfg.action.as_ref().ok_or_else(|| ConfigError("action needs an [action] section".into()))?;
    let velocities = ac.velocities.clone().unwrap_or_else(|| vec![[0.0; 3]; 2]);
    if velocities.len() != 2 {
        bail!(ConfigError(format!("action.velocities needs 2 entries, got {}", velocities.len())));
    }
    let snapshots = |i: usize| -> Result<Vec<MassDistribution>> {
        let v = velocities[i];
        ac.times.iter().map(|&t| cfg.state_distribution(i, [v[0] * t, v[1] * t, v[2] * t])).collect()
    };
    let tl = ScenarioTimeline {
        times: ac.times.clone(),
        grid,
        scenario1: snapshots(0)?,
        scenario2: snapshots(1)?,
        relativistic: None,
    };
    Ok((p, tl))
}

fn action_table(ar: &actions::ActionResult, constants: &dpcollapse::PhysicalConstants) -> Result<Table> {
    let mut t = Table::new(&["t", "E_G12", "S_G12", "S_G1", "S_G2", "rate_1", "rate_2"]);
    for s in &ar.cumulative {
        let (r1, r2) = actions::decay_rates_from_actions(ar, s.t, constants)?;
        t.push(vec![s.t.into(), s.e_g12.into(), s.s_g12.into(), s.s_g1.into(), s.s_g2.into(), r1.into(), r2.into()]);
    }
    Ok(t)
}

fn action(ctx: &mut Ctx) -> Result<Summary> {
    let (p, tl) = action_timeline(ctx.cfg)?;
    let (_, opts) = ctx.cfg.require_grid("action")?;
    let c = ctx.cfg.constants()?;
    let newton = ctx.times.time("newtonian", || actions::competition_action_newtonian(&tl, p, &c, &opts))?;
    let nt = action_table(&newton, &c)?;
    ctx.table("action_newtonian", || nt)?;
    let rel = ctx.times.time("relativistic", || actions::competition_action_relativistic(&tl, p, &c, &opts))?;
    let rt = action_table(&rel, &c)?;
    ctx.table("action_relativistic", || rt)?;
    let diff = (rel.s_g12 - newton.s_g12).abs() / newton.s_g12.abs().max(f64::MIN_POSITIVE);
    Ok(vec![
        entry("s_g12_newtonian", newton.s_g12),
        entry("s_g12_relativistic", rel.s_g12),
        entry("s_g1", newton.s_g1),
        entry("s_g2", newton.s_g2),
        entry("relative_difference", diff),
    ])
}

enum BundleSource {
    Derived,
    Detectors,
}

fn bundle_config(cfg: &ScenarioConfig) -> Result<Option<(BundleConfiguration, BundleSource)>> {
    if !cfg.areas.is_empty() {
        let spec = cfg.spec()?;
        let (grid, opts) = cfg.require_grid("bundle derivation")?;
        let bc = bundles::derive_bundles(&spec, &cfg.areas()?, &grid, &opts)?;
        return Ok(Some((bc, BundleSource::Derived)));
    }
    if let Some(d) = &cfg.detectors {
        let s = collapse_sim::build_detector_scenario(d.intensities.len(), &d.intensities, d.mode()?, cfg.constants()?)?;
        return Ok(Some((s.config, BundleSource::Detectors)));
    }
    Ok(None)
}

fn members_text(m: &[usize]) -> String {
    m.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

fn bundles(ctx: &mut Ctx) -> Result<Summary> {
    let c = ctx.cfg.constants()?;
    let (bc, source) = ctx
        .times
        .time("derive", || bundle_config(ctx.cfg))?
        .ok_or_else(|| ConfigError("bundles needs [[areas]] or a [detectors] section".into()))?;
    let rates = bundles::bundle_decay_rates(&bc, &c)?;
    let at_most_two = bc.check_at_most_two().is_ok();
    if !at_most_two {
        log::warn!("an area holds more than two local bundles");
    }
    let mut check = Value::Null;
    if let BundleSource::Derived = source {
        let spec = ctx.cfg.spec()?;
        let (grid, opts) = ctx.cfg.require_grid("bundles")?;
        let (own, mean_total) = bundles::mean_field_energies(&spec, &grid, &opts)?;
        let assembled = bundles::bundle_total_energy(&bc, &own)?;
        check = json!({
            "mean_field_total": mean_total,
            "bundle_total": assembled,
            "relative_difference": (assembled - mean_total).abs() / mean_total.abs().max(f64::MIN_POSITIVE),
        });
    }
    ctx.table("bundles", || {
        let mut t = Table::new(&["area", "kappa", "members", "intensity", "energy_increase", "rate"]);
        for r in &rates {
            let a = bc.area(&r.area_id).expect("rate of a known area");
            let b = &a.bundles[r.kappa];
            t.push(vec![
                r.area_id.as_str().into(),
                r.kappa.into(),
                Cell::Text(members_text(&r.members)),
                b.intensity.into(),
                (r.rate * c.hbar).into(),
                r.rate.into(),
            ]);
        }
        t
    })?;
    ctx.json("bundles.json", || {
        json!({
            "source": match source { BundleSource::Derived => "grid", BundleSource::Detectors => "detector_builder" },
            "configuration": bc.record(),
            "at_most_two_per_area": at_most_two,
            "interaction_energy": bundles::bundle_interaction_energy(&bc),
            "energy_check": check,
        })
    })?;
    let max_bundles = bc.areas.iter().map(|a| a.bundles.len()).max().unwrap_or(0);
    Ok(vec![
        entry("areas", bc.areas.len()),
        entry("max_bundles_per_area", max_bundles),
        entry("interaction_energy", bundles::bundle_interaction_energy(&bc)),
    ])
}

fn cascade_model(cfg: &ScenarioConfig) -> Result<CascadeModel> {
    if let Some((bc, _)) = bundle_config(cfg)? {
        return Ok(CascadeModel::from_config(&bc)?);
    }
    let (spec, p) = two_states(cfg)?;
    let (e, _) = primary_dp(cfg, &spec)?;
    if e == 0.0 {
        bail!(dpcollapse::Error::NoDecay);
    }
    Ok(CascadeModel::two_state(p, e)?)
}

fn run_cascades(ctx: &mut Ctx) -> Result<(CascadeModel, Vec<CollapseTrace>)> {
    let cfg = ctx.cfg;
    let c = cfg.constants()?;
    let model = ctx.times.time("model", || cascade_model(cfg))?;
    let opts = CascadeOptions {
        allow_many_bundles: cfg.simulation.allow_many_bundles,
        max_events: cfg.simulation.max_events,
    };
    let sim = &cfg.simulation;
    let traces = ctx.times.time("simulate", || {
        collapse_sim::run_traces(&model, &c, sim.master_seed, sim.trials, &opts, Execution::default())
    })?;
    if let Some(s) = ctx.sink.as_deref_mut() {
        for f in s.formats.clone() {
            match f {
                Format::Jsonl => collapse_sim::write_jsonl(&traces, s.writer("traces.jsonl")?)?,
                Format::Csv => trace_table(&traces).write_csv(s.writer("traces.csv")?)?,
            }
        }
    }
    Ok((model, traces))
}

fn trace_table(traces: &[CollapseTrace]) -> Table {
    let mut t = Table::new(&["trace_index", "final_state", "total_time", "events"]);
    for tr in traces {
        t.push(vec![
            Cell::Int(tr.trace_index as i64),
            tr.final_state.into(),
            tr.total_time.into(),
            tr.events.len().into(),
        ]);
    }
    t
}

fn frequencies(model: &CascadeModel, traces: &[CollapseTrace]) -> Vec<f64> {
    let mut counts = vec![0u64; model.intensities.len()];
    for t in traces {
        counts[t.final_state] += 1;
    }
    counts.iter().map(|&k| k as f64 / traces.len().max(1) as f64).collect()
}

fn simulate(ctx: &mut Ctx) -> Result<Summary> {
    let (model, traces) = run_cascades(ctx)?;
    let c = ctx.cfg.constants()?;
    let opts = CascadeOptions { allow_many_bundles: ctx.cfg.simulation.allow_many_bundles, max_events: None };
    let exact = if model.intensities.len() <= 20 {
        Some(collapse_sim::path_sum_probabilities(&model, &c, &opts)?)
    } else {
        None
    };
    let freq = frequencies(&model, &traces);
    let mean_time = traces.iter().map(|t| t.total_time).sum::<f64>() / traces.len().max(1) as f64;
    ctx.json("simulate.json", || {
        json!({
            "trials": traces.len(),
            "master_seed": ctx.cfg.simulation.master_seed,
            "model": model,
            "frequencies": freq,
            "path_sum_probabilities": exact,
            "mean_total_time": mean_time,
        })
    })?;
    let mut summary: Summary = freq.iter().enumerate().map(|(i, f)| entry(&format!("frequency_{i}"), *f)).collect();
    summary.push(entry("mean_total_time", mean_time));
    Ok(summary)
}

fn born_check(ctx: &mut Ctx) -> Result<Outcome> {
    let (model, traces) = run_cascades(ctx)?;
    let report = collapse_sim::born_check(&traces, &model.intensities, BornCriteria::default())?;
    if ctx.sink.is_some() {
        print!("{}", report.table());
    }
    ctx.table("born_check", || {
        let mut t = Table::new(&["state", "count", "expected", "observed", "std_error", "z"]);
        for i in 0..report.counts.len() {
            t.push(vec![
                i.into(),
                Cell::Int(report.counts[i] as i64),
                report.expected[i].into(),
                report.frequencies[i].into(),
                report.std_errors[i].into(),
                report.z_scores[i].into(),
            ]);
        }
        t
    })?;
    ctx.json("born_check.json", || serde_json::to_value(&report).unwrap_or(Value::Null))?;
    let mut summary: Summary =
        report.frequencies.iter().enumerate().map(|(i, f)| entry(&format!("frequency_{i}"), *f)).collect();
    let max_z = report.z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    summary.push(entry("max_abs_z", max_z));
    summary.push(entry("p_value", report.p_value));
    summary.push(entry("pass", report.pass));
    let failure = (!report.pass).then(|| {
        format!("Born-rule check failed: max |z| = {max_z:.3}, chi-square p = {:.3e}", report.p_value)
    });
    Ok(Outcome { summary, failure })
}

fn decohere(ctx: &mut Ctx) -> Result<Summary> {
    let (spec, p) = two_states(ctx.cfg)?;
    let c = spec.constants;
    let dc = ctx.cfg.decoherence.clone().unwrap_or_default();
    let DecoherenceConfig { periods, samples, rho12, energies } = dc;
    if !(periods > 0.0 && periods.is_finite()) || samples < 2 {
        bail!(ConfigError("decoherence needs periods > 0 and samples >= 2".into()));
    }
    let (e, _) = ctx.times.time("dp_energy", || primary_dp(ctx.cfg, &spec))?;
    if e == 0.0 {
        bail!(dpcollapse::Error::NoDecay);
    }
    let energies = match energies {
        Some(v) => v,
        None => {
            let eval = evaluation(ctx.cfg, &spec)?;
            [
                superposition::state_energy(&spec.states[0].dist, &c, &eval)?,
                superposition::state_energy(&spec.states[1].dist, &c, &eval)?,
            ]
        }
    };
    let tau = c.hbar / e;
    let steps = periods * ((energies[0] - energies[1]).abs() + e) / e / 2e-3;
    if !(steps <= MAX_DECOHERENCE_STEPS) {
        bail!(ConfigError(format!(
            "state energies differ by {:.3e}, far above the DP energy {e:.3e}; \
             set decoherence.energies to integrate in a shifted frame",
            (energies[0] - energies[1]).abs()
        )));
    }
    let r0 = match rho12 {
        Some([re, im]) => Complex64::new(re, im),
        None => Complex64::new((p[0] * p[1]).sqrt(), 0.0),
    };
    let times: Vec<f64> = (0..samples).map(|k| periods * tau * k as f64 / (samples - 1) as f64).collect();
    let trace = ctx
        .times
        .time("integrate", || collapse_sim::decohere_two_state(energies, e, p, r0, &times, &c))?;
    let fitted = collapse_sim::fit_decay_rate(&trace)?;
    let expected = e / c.hbar;
    let max_err = trace.max_relative_error(r0, energies[0], energies[1], e, c.hbar);
    ctx.table("decoherence", || {
        let mut t = Table::new(&["t", "re_rho12", "im_rho12", "abs_rho12", "abs_exact", "rho11", "rho22"]);
        for k in 0..trace.times.len() {
            t.push(vec![
                trace.times[k].into(),
                trace.rho12[k].re.into(),
                trace.rho12[k].im.into(),
                trace.offdiag_magnitude[k].into(),
                trace.exact_magnitude[k].into(),
                trace.populations[k][0].into(),
                trace.populations[k][1].into(),
            ]);
        }
        t
    })?;
    Ok(vec![
        entry("dp_energy", e),
        entry("expected_rate", expected),
        entry("fitted_rate", fitted),
        entry("rate_relative_error", (fitted - expected).abs() / expected),
        entry("max_relative_error", max_err),
    ])
}
