//! Scenario files: a strict TOML schema, loading, flag overrides and the
//! dotted-path edits used by sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use dpcollapse::bundles::BundleArea;
use dpcollapse::collapse_sim::DetectorMode;
use dpcollapse::massdist::Backend;
use dpcollapse::{
    DensityGrid, Execution, GridSpec, MassDistribution, PhysicalConstants, PointMass, SolverOptions, SuperpositionSpec,
    SuperpositionState, UniformSphere,
};

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    #[default]
    Si,
    Dimensionless,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Either `origin` + `spacing` + `dims`, or a cube given by `center`,
/// `half_width` and `n` nodes per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub backend: BackendChoice,
    /// Per-axis subsamples for cells cut by a body boundary.
    #[serde(default = "default_subsample")]
    pub subsample: u32,
}

fn default_subsample() -> u32 {
    2
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        let explicit = (self.origin, self.spacing, self.dims);
        let cube = (self.center, self.half_width, self.n);
        let grid = match (explicit, cube) {
            ((Some(o), Some(h), Some(d)), (None, None, None)) => GridSpec::new(o, h, d),
            ((None, None, None), (Some(c), Some(w), Some(n))) => GridSpec::cube(c, w, n),
            _ => bail!(ConfigError(
                "grid needs either origin, spacing and dims, or center, half_width and n".into()
            )),
        };
        grid.map_err(|e| ConfigError(format!("grid: {e}")).into())
    }

    pub fn solver(&self) -> SolverOptions {
        let backend = match self.backend {
            BackendChoice::Auto => Backend::Auto,
            BackendChoice::Direct => Backend::Direct,
            BackendChoice::Fft => Backend::Fft,
        };
        SolverOptions { backend, execution: Execution::default(), subsample: self.subsample }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereConfig {
    pub mass: f64,
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub mass: f64,
    pub position: [f64; 3],
    pub smearing_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyConfig {
    UniformSphereSet { spheres: Vec<SphereConfig> },
    PointSet { points: Vec<PointConfig> },
    /// Density in the binary grid layout; relative paths resolve against
    /// the config file.
    VoxelGrid { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyRef {
    pub body: String,
    #[serde(default)]
    pub displacement: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub intensity: f64,
    pub bodies: Vec<BodyRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest_energy_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperpositionConfig {
    pub states: Vec<StateConfig>,
}

/// A box (`min`, `max`) or an explicit list of node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<usize>>,
}

impl AreaConfig {
    fn area(&self) -> Result<BundleArea> {
        use dpcollapse::bundles::Region;
        let region = match (self.min, self.max, &self.cells) {
            (Some(min), Some(max), None) => Region::Box { min, max },
            (None, None, Some(cells)) => Region::Mask { cells: cells.clone() },
            _ => bail!(ConfigError(format!("area {}: give either min and max, or cells", self.id))),
        };
        Ok(BundleArea { id: self.id.clone(), region })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
    #[serde(default)]
    pub allow_many_bundles: bool,
}

fn default_trials() -> usize {
    10_000
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { trials: default_trials(), master_seed: 0, max_events: None, allow_many_bundles: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path into this file, e.g.
    /// `superposition.states.1.bodies.0.displacement.0`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "default_sweep_command")]
    pub subcommand: String,
}

fn default_sweep_command() -> String {
    "dp-energy".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_directory(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorModeChoice {
    Abstract,
    Geometric,
}

/// Standard detector scenario: one area per state, state `i` displacing
/// the body in area `i` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub intensities: Vec<f64>,
    pub mode: DetectorModeChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<f64>,
}

impl DetectorConfig {
    pub fn mode(&self) -> Result<DetectorMode> {
        let fields = (self.energy, self.mass, self.radius, self.displacement);
        match (self.mode, fields) {
            (DetectorModeChoice::Abstract, (Some(energy), None, None, None)) => Ok(DetectorMode::Abstract { energy }),
            (DetectorModeChoice::Geometric, (None, Some(mass), Some(radius), Some(displacement))) => {
                Ok(DetectorMode::Geometric { mass, radius, displacement })
            }
            (DetectorModeChoice::Abstract, _) => bail!(ConfigError("abstract detectors take energy only".into())),
            (DetectorModeChoice::Geometric, _) => {
                bail!(ConfigError("geometric detectors take mass, radius and displacement".into()))
            }
        }
    }
}

/// Two-state timeline: state `i` moves rigidly with `velocities[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceConfig {
    /// Length of the run in decoherence times.
    #[serde(default = "default_periods")]
    pub periods: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Initial `(Re, Im)` of the off-diagonal element; a pure state by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho12: Option<[f64; 2]>,
    /// Replaces the computed state energies `(E1, E2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<[f64; 2]>,
}

fn default_periods() -> f64 {
    5.0
}

fn default_samples() -> usize {
    101
}

impl Default for DecoherenceConfig {
    fn default() -> Self {
        DecoherenceConfig { periods: default_periods(), samples: default_samples(), rho12: None, energies: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub constants: ConstantOverrides,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bodies: BTreeMap<String, BodyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superposition: Option<SuperpositionConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub areas: Vec<AreaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<DetectorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoherence: Option<DecoherenceConfig>,
}

/// Values given on the command line; each replaces its config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub xi: Option<f64>,
    pub allow_many_bundles: bool,
}

/// A parsed file: the raw tree (for sweeps and hashing) and its bytes.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub raw: toml::Table,
    pub bytes: Vec<u8>,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| ConfigError("config is not valid UTF-8".into()))?;
    let raw: toml::Table = text.parse().map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { raw, bytes, base_dir })
}

impl ScenarioConfig {
    /// Deserializes and validates a raw tree, then applies `ov`.
    pub fn from_table(raw: &toml::Table, base_dir: &Path, ov: &Overrides) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::Value::Table(raw.clone()).try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        for body in cfg.bodies.values_mut() {
            if let BodyConfig::VoxelGrid { path } = body {
                if path.is_relative() {
                    *path = base_dir.join(&*path);
                }
            }
        }
        cfg.apply(ov)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(seed) = ov.seed {
            self.simulation.master_seed = seed;
        }
        if let Some(trials) = ov.trials {
            self.simulation.trials = trials;
        }
        if let Some(out) = &ov.out {
            self.output.directory = out.clone();
        }
        if let Some(f) = ov.format {
            self.output.formats = vec![f];
        }
        if let Some(xi) = ov.xi {
            self.constants.xi = Some(xi);
        }
        if ov.allow_many_bundles {
            self.simulation.allow_many_bundles = true;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.constants()?;
        if let Some(g) = &self.grid {
            g.spec()?;
        }
        if self.simulation.master_seed > i64::MAX as u64 {
            bail!(ConfigError("master_seed must be below 2^63".into()));
        }
        if self.output.formats.is_empty() {
            bail!(ConfigError("output.formats must name at least one format".into()));
        }
        if let Some(sup) = &self.superposition {
            for (i, s) in sup.states.iter().enumerate() {
                if s.bodies.is_empty() {
                    bail!(ConfigError(format!("state {i} has no bodies")));
                }
                for b in &s.bodies {
                    if !self.bodies.contains_key(&b.body) {
                        bail!(ConfigError(format!("state {i} refers to unknown body '{}'", b.body)));
                    }
                }
            }
        }
        for a in &self.areas {
            a.area()?;
        }
        if let Some(d) = &self.detectors {
            d.mode()?;
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                bail!(ConfigError("sweep.values is empty".into()));
            }
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<PhysicalConstants> {
        let mut c = match self.units {
            Units::Si => PhysicalConstants::si(),
            Units::Dimensionless => PhysicalConstants::dimensionless(),
        };
        let o = &self.constants;
        c.g = o.g.unwrap_or(c.g);
        c.hbar = o.hbar.unwrap_or(c.hbar);
        c.c = o.c.unwrap_or(c.c);
        c.xi = o.xi.unwrap_or(c.xi);
        c.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(c)
    }

    pub fn grid(&self) -> Result<Option<(GridSpec, SolverOptions)>> {
        self.grid.as_ref().map(|g| Ok((g.spec()?, g.solver()))).transpose()
    }

    pub fn require_grid(&self, what: &str) -> Result<(GridSpec, SolverOptions)> {
        self.grid()?.ok_or_else(|| ConfigError(format!("{what} needs a [grid] section")).into())
    }

    fn body(&self, name: &str) -> Result<MassDistribution> {
        let body = self.bodies.get(name).ok_or_else(|| ConfigError(format!("unknown body '{name}'")))?;
        let dist = match body {
            BodyConfig::UniformSphereSet { spheres } => MassDistribution::UniformSphereSet {
                spheres: spheres
                    .iter()
                    .map(|s| UniformSphere { mass: s.mass, center: s.center, radius: s.radius })
                    .collect(),
            },
            BodyConfig::PointSet { points } => MassDistribution::PointSet {
                points: points
                    .iter()
                    .map(|p| PointMass { mass: p.mass, position: p.position, smearing_radius: p.smearing_radius })
                    .collect(),
            },
            BodyConfig::VoxelGrid { path } => {
                let file = fs::File::open(path).with_context(|| format!("opening voxel body {}", path.display()))?;
                let density = DensityGrid::read_binary(std::io::BufReader::new(file))?;
                MassDistribution::VoxelGrid { density }
            }
        };
        dist.validate().map_err(|e| ConfigError(format!("body '{name}': {e}")))?;
        Ok(dist)
    }

    /// State `i` with every body shifted by `extra` on top of its own
    /// displacement.
    pub fn state_distribution(&self, i: usize, extra: [f64; 3]) -> Result<MassDistribution> {
        let sup = self.superposition()?;
        let st = sup.states.get(i).ok_or_else(|| ConfigError(format!("no state {i}")))?;
        let mut out: Option<MassDistribution> = None;
        for b in &st.bodies {
            let shift = [b.displacement[0] + extra[0], b.displacement[1] + extra[1], b.displacement[2] + extra[2]];
            let body = self.body(&b.body)?;
            let moved = if shift == [0.0; 3] { body } else { body.translated(shift) };
            out = Some(match out {
                None => moved,
                Some(acc) => acc.union(&moved).map_err(|e| ConfigError(format!("state {i}: {e}")))?,
            });
        }
        out.ok_or_else(|| ConfigError(format!("state {i} has no bodies")).into())
    }

    pub fn superposition(&self) -> Result<&SuperpositionConfig> {
        self.superposition.as_ref().ok_or_else(|| ConfigError("missing [superposition] section".into()).into())
    }

    pub fn spec(&self) -> Result<SuperpositionSpec> {
        let sup = self.superposition()?;
        let states = (0..sup.states.len())
            .map(|i| {
                Ok(SuperpositionState {
                    intensity: sup.states[i].intensity,
                    dist: self.state_distribution(i, [0.0; 3])?,
                    rest_energy_override: sup.states[i].rest_energy_override,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = SuperpositionSpec { states, constants: self.constants()? };
        spec.validate()?;
        Ok(spec)
    }

    pub fn areas(&self) -> Result<Vec<BundleArea>> {
        self.areas.iter().map(AreaConfig::area).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| anyhow!("serializing effective config: {e}"))
    }
}

/// Sets the value at a dotted path (`a.b.3.c`) in `raw`. Integer targets
/// stay integers and only accept integral values.
pub fn set_path(raw: &mut toml::Table, path: &str, value: f64) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let missing = || ConfigError(format!("sweep parameter '{path}' does not exist in the config"));
    let mut node = raw.get_mut(parts[0]).ok_or_else(missing)?;
    for p in &parts[1..] {
        node = step(node, p).ok_or_else(missing)?;
    }
    *node = match node {
        toml::Value::Integer(_) => {
            if value.fract() != 0.0 || value.abs() > i64::MAX as f64 {
                bail!(ConfigError(format!("sweep parameter '{path}' is an integer; got {value}")));
            }
            toml::Value::Integer(value as i64)
        }
        toml::Value::Float(_) => toml::Value::Float(value),
        _ => bail!(ConfigError(format!("sweep parameter '{path}' is not a number"))),
    };
    Ok(())
}

fn step<'a>(node: &'a mut toml::Value, key: &str) -> Option<&'a mut toml::Value> {
    match node {
        toml::Value::Table(t) => t.get_mut(key),
        toml::Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
        _ => None,
    }
}
