//! `dpcollapse`: runs one computation from a scenario file and writes its
//! artifacts plus a manifest.
//!
//! Exit codes: 1 config error, 2 numeric guard, 3 statistical-check
//! failure, 4 I/O.

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Result};
use clap::Parser;
use serde_json::json;

use commands::{Command, Ctx, Outcome};
use config::{Format, Overrides, ScenarioConfig};
use output::{sha256_hex, Cell, Outputs, Runtimes, Table};

/// A problem with the scenario file or flags.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
struct StatisticalFailure(String);

impl fmt::Display for StatisticalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for StatisticalFailure {}

#[derive(Debug, Parser)]
#[command(name = "dpcollapse", version, about = "Diósi-Penrose energies, decay rates and collapse cascades")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for the cascade simulator.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Number of simulated traces.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Tabular output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// DP-energy prefactor.
    #[arg(long, global = true, value_parser = ["0.5", "1"])]
    xi: Option<String>,
    /// Simulate areas holding more than two bundles.
    #[arg(long, global = true)]
    allow_many_bundles: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use dpcollapse::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 1;
        }
        if cause.is::<StatisticalFailure>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::WeakField { .. }
                | E::Normalization { .. }
                | E::GridTooSmall { .. }
                | E::NoDecay
                | E::StalledCascade { .. }
                | E::MaxEvents(_) => 2,
                E::Io(_) | E::Json(_) => 4,
                _ => 1,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 4;
        }
    }
    1
}

fn configure_threads(threads: Option<usize>) -> Result<usize> {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            if n == 0 {
                bail!(ConfigError("--threads must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| anyhow!("starting thread pool: {e}"))?;
        }
        Ok(rayon::current_num_threads())
    }
    #[cfg(not(feature = "parallel"))]
    {
        if threads.is_some_and(|n| n != 1) {
            log::warn!("built without the parallel feature; running on one thread");
        }
        Ok(1)
    }
}

fn sweep(cfg: &ScenarioConfig, loaded: &config::Loaded, ov: &Overrides, out: &mut Outputs, times: &mut Runtimes) -> Result<Outcome> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| ConfigError("sweep needs a [sweep] section".into()))?;
    let sub = Command::parse(&sw.subcommand)?;
    if sub == Command::Sweep {
        bail!(ConfigError("sweep.subcommand cannot be sweep".into()));
    }
    let mut table: Option<Table> = None;
    let mut failures = Vec::new();
    for &value in &sw.values {
        let mut raw = loaded.raw.clone();
        config::set_path(&mut raw, &sw.parameter, value)?;
        let point = ScenarioConfig::from_table(&raw, &loaded.base_dir, ov)?;
        let mut inner = Runtimes::default();
        let outcome = commands::run(sub, &mut Ctx { cfg: &point, sink: None, times: &mut inner })?;
        let label = format!("{}={value}", sw.parameter);
        times.0.extend(inner.0.into_iter().map(|(k, v)| (format!("{label}:{k}"), v)));
        if let Some(f) = outcome.failure {
            failures.push(format!("{label}: {f}"));
        }
        let t = table.get_or_insert_with(|| {
            let mut cols = vec!["value"];
            cols.extend(outcome.summary.iter().map(|(k, _)| k.as_str()));
            Table::new(&cols)
        });
        let keys: Vec<&str> = outcome.summary.iter().map(|(k, _)| k.as_str()).collect();
        if keys != t.columns[1..].iter().map(String::as_str).collect::<Vec<_>>() {
            bail!(ConfigError(format!("sweep point {label} produced different columns")));
        }
        let mut row = vec![Cell::Float(value)];
        row.extend(outcome.summary.into_iter().map(|(_, v)| v));
        t.push(row);
    }
    let table = table.unwrap_or_default();
    out.table("sweep", &table)?;
    let failure = (!failures.is_empty()).then(|| failures.join("; "));
    Ok(Outcome { summary: vec![("points".into(), Cell::Int(table.rows.len() as i64))], failure })
}

struct RunInfo {
    command: Command,
    config_path: PathBuf,
    config_sha256: String,
    effective_sha256: String,
    threads: usize,
}

fn write_manifest(out: &mut Outputs, info: &RunInfo, cfg: &ScenarioConfig, times: &Runtimes, result: &Result<Outcome>) -> Result<()> {
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (status, code, message) = match result {
        Ok(o) if o.failure.is_some() => ("statistical_failure", 3, o.failure.clone()),
        Ok(_) => ("ok", 0, None),
        Err(e) => ("error", exit_code(e), Some(format!("{e:#}"))),
    };
    let mut files = out.written.clone();
    files.push("manifest.json".into());
    let manifest = json!({
        "command": info.command.name(),
        "status": status,
        "exit_code": code,
        "error": message,
        "config_path": info.config_path,
        "config_sha256": info.config_sha256,
        "effective_config_sha256": info.effective_sha256,
        "master_seed": cfg.simulation.master_seed,
        "trials": cfg.simulation.trials,
        "threads": info.threads,
        "parallel": cfg!(feature = "parallel"),
        "versions": { "dpcollapse": dpcollapse::VERSION, "dpcollapse-cli": env!("CARGO_PKG_VERSION") },
        "runtimes_ms": times.record(),
        "timestamp_unix": timestamp,
        "outputs": files,
    });
    out.json("manifest.json", &manifest)
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.clone().ok_or_else(|| ConfigError("--config PATH is required".into()))?;
    let ov = Overrides {
        seed: cli.seed,
        trials: cli.trials,
        out: cli.out.clone(),
        format: cli.format,
        xi: cli.xi.as_deref().map(|s| s.parse().expect("restricted by clap")),
        allow_many_bundles: cli.allow_many_bundles,
    };
    let loaded = config::load(&config_path)?;
    let cfg = ScenarioConfig::from_table(&loaded.raw, &loaded.base_dir, &ov)?;
    let threads = configure_threads(cli.threads)?;
    let mut out = Outputs::create(&cfg.output.directory, &cfg.output.formats)?;
    let effective = cfg.to_toml()?;
    out.text("effective_config.toml", &effective)?;
    let info = RunInfo {
        command: cli.command,
        config_path,
        config_sha256: sha256_hex(&loaded.bytes),
        effective_sha256: sha256_hex(effective.as_bytes()),
        threads,
    };

    let mut times = Runtimes::default();
    let result = if cli.command == Command::Sweep {
        sweep(&cfg, &loaded, &ov, &mut out, &mut times)
    } else {
        commands::run(cli.command, &mut Ctx { cfg: &cfg, sink: Some(&mut out), times: &mut times })
    };
    write_manifest(&mut out, &info, &cfg, &times, &result)?;

    let outcome = result?;
    for (k, v) in &outcome.summary {
        let shown = match v {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.10e}"),
            Cell::Text(s) => s.clone(),
        };
        println!("{k} = {shown}");
    }
    println!("outputs in {}", out.dir.display());
    if let Some(f) = outcome.failure {
        bail!(StatisticalFailure(f));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
