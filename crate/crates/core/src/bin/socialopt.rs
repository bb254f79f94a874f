use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use socialopt::experiments::{
    cmd_check_constants, cmd_evcharge, cmd_example1, cmd_fixtures, cmd_ne, cmd_regulate, evcharge_config, ExperimentConfig,
};
use socialopt::oracles::fixture_path;
use socialopt::{Error, Result};

#[derive(Parser)]
#[command(name = "socialopt", version, about = "Bilevel social optimization over noncooperative games")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed of the regulator's random directions.
    #[arg(long, global = true, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed sweep `a..b` (exclusive) or `a..=b`; each seed writes to `<out>/seed_<n>`.
    #[arg(long, global = true, value_parser = parse_seeds)]
    seeds: Option<SeedRange>,
    /// Output directory.
    #[arg(long, global = true, env = "SOCIALOPT_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Accept a step size above the certificate.
    #[arg(long, global = true)]
    override_alpha: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One distributed equilibrium computation at the configured decision.
    Ne,
    /// Full regulator run: trace CSV and summary JSON.
    Regulate,
    /// Solver cross-checks against the closed-form two-player example.
    Example1,
    /// Charging-game experiment with its preset parameters.
    Evcharge,
    /// Game constants and step-size certificates.
    CheckConstants,
    /// Regenerate the oracle fixture file.
    Fixtures {
        /// Destination; defaults to the fixture file shipped with the crate.
        #[arg(long)]
        path: Option<PathBuf>,
    },
}

#[derive(Clone)]
struct SeedRange(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedRange, String> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected a..b or a..=b, got {s:?}"));
    };
    let a: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(SeedRange(seeds))
}

fn read_config(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["--config is required for this subcommand".into()]))?;
    let text = std::fs::read_to_string(path)?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    apply_flags(&mut cfg, common, None);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_flags(cfg: &mut ExperimentConfig, common: &Common, seed: Option<u64>) {
    if common.override_alpha {
        cfg.overrides.allow_uncertified_alpha = true;
    }
    if let (Some(seed), Some(r)) = (seed.or(common.seed), cfg.regulator.as_mut()) {
        r.seed = seed;
    }
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Run `one` for every seed of the sweep, or once without a sweep.
fn per_seed<T, F>(common: &Common, one: F) -> Result<serde_json::Value>
where
    T: Serialize + Send,
    F: Fn(Option<u64>, &Path) -> Result<T> + Sync,
{
    match &common.seeds {
        None => Ok(serde_json::to_value(one(common.seed, &common.out)?)?),
        Some(SeedRange(seeds)) => {
            let results: Vec<Result<T>> = seeds
                .par_iter()
                .map(|&s| one(Some(s), &common.out.join(format!("seed_{s}"))))
                .collect();
            let mut out = serde_json::Map::new();
            for (s, r) in seeds.iter().zip(results) {
                out.insert(s.to_string(), serde_json::to_value(r?)?);
            }
            Ok(serde_json::Value::Object(out))
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Ne => {
            let cfg = read_config(common)?;
            print(&cmd_ne(&cfg, &common.out)?)
        }
        Command::Regulate => {
            let base = read_config(common)?;
            let report = per_seed(common, |seed, dir| {
                let mut cfg = base.clone();
                apply_flags(&mut cfg, common, seed);
                let (trace, outputs) = cmd_regulate(&cfg, dir)?;
                Ok(json!({ "summary": trace.summary(), "outputs": outputs }))
            })?;
            print(&report)
        }
        Command::Example1 => print(&cmd_example1()?),
        Command::Evcharge => {
            let base = match &common.config {
                Some(_) => Some(read_config(common)?),
                None => None,
            };
            let report = per_seed(common, |seed, dir| {
                let mut cfg = base.clone().unwrap_or_else(|| evcharge_config(seed.unwrap_or(0)));
                apply_flags(&mut cfg, common, seed);
                let (trace, report) = cmd_evcharge(&cfg, dir)?;
                Ok(json!({ "summary": trace.summary(), "report": report }))
            })?;
            print(&report)
        }
        Command::CheckConstants => {
            let cfg = read_config(common)?;
            print(&cmd_check_constants(&cfg)?)
        }
        Command::Fixtures { path } => {
            let path = path.clone().unwrap_or_else(fixture_path);
            let file = cmd_fixtures(&path)?;
            print(&json!({ "path": path, "entries": file.entries.len() }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let body = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
            eprintln!("{body}");
            ExitCode::from(u8::try_from(code).unwrap_or(1))
        }
    }
}
