//! JSON experiment configurations and the drivers behind the CLI subcommands.

mod ev;

pub use ev::{build_ev_game, EvChargingParams};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consensus::{centralized_ne, gamma_bound, ne_residual, ne_seek, q_factor, Certificate, DistributedNe, EstimateState, RESIDUAL_PROBE};
use crate::error::{Error, Result};
use crate::game::{estimate_constants, metropolis_graph, social_cost, BoxSet, CommGraph, Game, GameConstants, PlayerCost, QuadraticGame, QuadraticGameParams};
use crate::oracles::{example1_ne, example1_quadratic, example1_social, example1_spec, grid_search_theta};
use crate::regulator::{alpha_certificate, resolve, run, AlphaMode, InnerMode, RegulatorConfig, RunTrace, Schedule};

/// One player's cost in a custom quadratic game, matrices as row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub quad: Vec<Vec<f64>>,
    pub bilinear: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub theta_linear: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameConfig {
    Example1,
    EvCharging {
        #[serde(default)]
        params: EvChargingParams,
    },
    QuadraticCustom {
        costs: Vec<CostConfig>,
        strategy_sets: Vec<BoxSet>,
        theta_set: BoxSet,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Metropolis {
        edge_probability: f64,
        #[serde(default)]
        seed: u64,
    },
    #[default]
    Complete,
}

/// Settings of the `ne` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeConfig {
    pub theta: Vec<f64>,
    pub t_max: usize,
    /// Defaults to half the certified supremum.
    #[serde(default)]
    pub gamma: Option<f64>,
}

fn default_trace() -> PathBuf {
    "trace.csv".into()
}

fn default_summary() -> PathBuf {
    "summary.json".into()
}

/// Output file names, relative to the output directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_trace")]
    pub trace_path: PathBuf,
    #[serde(default = "default_summary")]
    pub summary_path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trace_path: default_trace(),
            summary_path: default_summary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default)]
    pub allow_uncertified_alpha: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    #[serde(default)]
    pub regulator: Option<RegulatorConfig>,
    #[serde(default)]
    pub ne: Option<NeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub overrides: Overrides,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(vec![format!("{what} must be {nrows}x{ncols}")]));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl GameConfig {
    pub fn violations(&self) -> Vec<String> {
        match self {
            GameConfig::Example1 => Vec::new(),
            GameConfig::EvCharging { params } => params.violations(),
            GameConfig::QuadraticCustom { costs, strategy_sets, .. } => {
                let mut v = Vec::new();
                if strategy_sets.is_empty() {
                    v.push("game.strategy_sets must not be empty".into());
                }
                if costs.len() != strategy_sets.len() {
                    v.push(format!(
                        "game.costs has {} entries but there are {} strategy sets",
                        costs.len(),
                        strategy_sets.len()
                    ));
                }
                v
            }
        }
    }

    pub fn build(&self) -> Result<QuadraticGame> {
        Ok(match self {
            GameConfig::Example1 => example1_quadratic(),
            GameConfig::EvCharging { params } => build_ev_game(params)?.1,
            GameConfig::QuadraticCustom {
                costs,
                strategy_sets,
                theta_set,
            } => {
                let dims: Vec<usize> = strategy_sets.iter().map(BoxSet::dim).collect();
                let d: usize = dims.iter().sum();
                let n = theta_set.dim();
                let mut parsed = Vec::with_capacity(costs.len());
                for (i, c) in costs.iter().enumerate() {
                    let mut pc = PlayerCost::zeros(d, n);
                    pc.quad = matrix(&c.quad, d, d, &format!("game.costs[{i}].quad"))?;
                    pc.bilinear = matrix(&c.bilinear, d, n, &format!("game.costs[{i}].bilinear"))?;
                    if c.linear.len() != d || c.theta_linear.len() != n {
                        return Err(Error::Config(vec![format!(
                            "game.costs[{i}]: linear needs {d} entries and theta_linear {n}"
                        )]));
                    }
                    pc.linear = DVector::from_column_slice(&c.linear);
                    pc.theta_linear = DVector::from_column_slice(&c.theta_linear);
                    pc.constant = c.constant;
                    parsed.push(pc);
                }
                let params = QuadraticGameParams::from_costs(dims, n, parsed)?;
                QuadraticGame::new(params, strategy_sets.clone(), theta_set.clone())?
            }
        })
    }
}

impl GraphConfig {
    pub fn violations(&self) -> Vec<String> {
        match self {
            GraphConfig::Metropolis { edge_probability, .. } if !(*edge_probability > 0.0 && *edge_probability <= 1.0) => {
                vec![format!("graph.edge_probability must lie in (0, 1], got {edge_probability}")]
            }
            _ => Vec::new(),
        }
    }

    pub fn build(&self, n_players: usize) -> Result<CommGraph> {
        match self {
            GraphConfig::Metropolis { edge_probability, seed } => metropolis_graph(n_players, *edge_probability, *seed),
            GraphConfig::Complete => CommGraph::complete(n_players),
        }
    }
}

impl ExperimentConfig {
    /// Parse JSON; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// The regulator settings with the overrides folded in.
    pub fn effective_regulator(&self) -> Option<RegulatorConfig> {
        self.regulator.clone().map(|mut r| {
            r.allow_uncertified_alpha |= self.overrides.allow_uncertified_alpha;
            r
        })
    }

    /// Check everything that can be checked without running: field ranges
    /// (all violations at once), game and graph construction, and the outer
    /// step-size certificate.
    pub fn validate(&self) -> Result<()> {
        let mut v = self.game.violations();
        v.extend(self.graph.violations());
        if let Some(r) = &self.regulator {
            v.extend(r.violations());
        }
        if let Some(ne) = &self.ne {
            if ne.theta.iter().any(|t| !t.is_finite()) {
                v.push("ne.theta must be finite".into());
            }
            if let Some(g) = ne.gamma {
                if !(g > 0.0 && g.is_finite()) {
                    v.push(format!("ne.gamma must be positive, got {g}"));
                }
            }
        }
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        let game = self.game.build()?;
        let graph = self.graph.build(game.n_players())?;
        if let Some(r) = self.effective_regulator() {
            resolve(&r, &game, Some(&graph))?;
        }
        Ok(())
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_path(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Result of the `ne` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct NeReport {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub residual: f64,
    pub consensus_gap: f64,
    pub epsilon_bound: f64,
    pub iterations: usize,
    pub gamma: f64,
    pub gamma_bound: f64,
    pub q: f64,
    pub sigma_bar: f64,
    pub rounds_path: PathBuf,
}

/// One run of distributed NE seeking; writes `ne_rounds.csv` with the
/// residual and consensus gap after every round.
pub fn cmd_ne(cfg: &ExperimentConfig, out_dir: &Path) -> Result<NeReport> {
    let ne = cfg
        .ne
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["the ne subcommand needs an \"ne\" section".into()]))?;
    let built = cfg.game.build()?;
    let game: &dyn Game = &built;
    let graph = cfg.graph.build(game.n_players())?;
    let q_game = &built;
    let constants = estimate_constants(q_game.params(), q_game.strategy_sets(), q_game.theta_set(), 0.0)?;
    let bound = gamma_bound(&constants, graph.sigma_bar())?;
    let gamma = ne.gamma.unwrap_or(0.5 * bound);
    if gamma >= bound {
        log::warn!("gamma = {gamma:e} is not below the certified bound {bound:e}");
    }
    let certificate = Certificate::new(gamma, &constants, &graph);

    let rounds_path = out_dir.join("ne_rounds.csv");
    let mut w = create_file(&rounds_path)?;
    writeln!(w, "t,residual,consensus_gap")?;
    let mut solver = DistributedNe::new(game, &graph, &ne.theta, gamma, EstimateState::cold(game))?;
    for t in 1..=ne.t_max {
        solver.step()?;
        let x = solver.state().own_strategies(game);
        let r = ne_residual(game, &x, &ne.theta, RESIDUAL_PROBE)?;
        writeln!(w, "{t},{r:.16e},{:.16e}", solver.state().consensus_gap())?;
    }
    w.flush()?;
    let res = ne_seek(game, &graph, &ne.theta, gamma, ne.t_max, EstimateState::cold(game), Some(&certificate))?;
    Ok(NeReport {
        theta: ne.theta.clone(),
        x: res.x,
        residual: res.residual,
        consensus_gap: res.consensus_gap,
        epsilon_bound: res.epsilon_bound,
        iterations: res.iterations,
        gamma,
        gamma_bound: bound,
        q: certificate.q,
        sigma_bar: graph.sigma_bar(),
        rounds_path,
    })
}

/// Paths written by a regulator run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutputs {
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Full outer-loop run; writes the trace CSV and the JSON summary.
pub fn cmd_regulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunTrace, RunOutputs)> {
    let reg = cfg
        .effective_regulator()
        .ok_or_else(|| Error::Config(vec!["the regulate subcommand needs a \"regulator\" section".into()]))?;
    let built = cfg.game.build()?;
    let game: &dyn Game = &built;
    let graph = cfg.graph.build(game.n_players())?;
    let trace = run(&reg, game, Some(&graph))?;
    let outputs = RunOutputs {
        trace_path: resolve_path(out_dir, &cfg.output.trace_path),
        summary_path: resolve_path(out_dir, &cfg.output.summary_path),
    };
    trace.write_csv(create_file(&outputs.trace_path)?)?;
    write_json(&outputs.summary_path, &trace.summary())?;
    Ok((trace, outputs))
}

/// Outcome of the closed-form cross-checks.
#[derive(Debug, Clone, Serialize)]
pub struct Example1Report {
    pub grid_points: usize,
    pub max_centralized_error: f64,
    pub max_distributed_error: f64,
    pub max_social_error: f64,
    pub grid_theta_star: Vec<f64>,
    pub grid_social_star: f64,
    pub passed: bool,
}

/// Tolerance of the equilibrium cross-checks.
pub const EXAMPLE1_NE_TOL: f64 = 1e-6;

/// Compare solvers against the closed forms of the two-player example.
pub fn cmd_example1() -> Result<Example1Report> {
    let quad = example1_quadratic();
    let spec = example1_spec();
    let graph = CommGraph::complete(2)?;
    let constants = estimate_constants(quad.params(), quad.strategy_sets(), quad.theta_set(), 0.0)?;
    let gamma = 0.5 * gamma_bound(&constants, graph.sigma_bar())?;
    let grid_points = 101;
    let (mut ec, mut ed, mut es) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..grid_points {
        let theta = k as f64 / (grid_points - 1) as f64;
        let want = example1_ne(theta);
        let xc = centralized_ne(&quad, &[theta], 1e-12, 10_000)?;
        let xd = ne_seek(&spec, &graph, &[theta], gamma, 500, EstimateState::cold(&spec), None)?.x;
        for i in 0..2 {
            ec = ec.max((xc[i] - want[i]).abs());
            ed = ed.max((xd[i] - want[i]).abs());
        }
        es = es.max((social_cost(&spec, &want, &[theta])? - example1_social(theta)?).abs());
    }
    let (theta_star, f_star) = grid_search_theta(&quad, quad.theta_set(), 1001, 1e-12)?;
    let passed = ec <= EXAMPLE1_NE_TOL
        && ed <= EXAMPLE1_NE_TOL
        && es <= 1e-12
        && theta_star == [1.0]
        && (f_star + 6.0).abs() <= 1e-10;
    let report = Example1Report {
        grid_points,
        max_centralized_error: ec,
        max_distributed_error: ed,
        max_social_error: es,
        grid_theta_star: theta_star,
        grid_social_star: f_star,
        passed,
    };
    if passed {
        Ok(report)
    } else {
        Err(Error::OracleMismatch(serde_json::to_string(&report)?))
    }
}

/// Constants and step-size certificates of a configured game and graph.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub constants: GameConstants,
    pub n_players: usize,
    pub theta_dim: usize,
    pub sigma_bar: f64,
    pub gamma_bound: f64,
    pub gamma: f64,
    pub q: f64,
    pub xi: f64,
    pub theta_probe_radius: f64,
    pub alpha_certificate_inexact: f64,
    pub alpha_certificate_exact: f64,
}

/// Smoothing parameter assumed by `check-constants` without a regulator section.
pub const DEFAULT_XI: f64 = 1e-3;

pub fn cmd_check_constants(cfg: &ExperimentConfig) -> Result<ConstantsReport> {
    let built = cfg.game.build()?;
    let q_game = &built;
    let game: &dyn Game = &built;
    let graph = cfg.graph.build(game.n_players())?;
    let reg = cfg.regulator.as_ref();
    let xi = reg.map_or(DEFAULT_XI, |r| r.xi);
    let probe = reg.and_then(|r| r.theta_probe_radius).unwrap_or(xi);
    let constants = estimate_constants(q_game.params(), q_game.strategy_sets(), q_game.theta_set(), probe)?;
    let bound = gamma_bound(&constants, graph.sigma_bar())?;
    let gamma = reg.and_then(|r| r.gamma).or(cfg.ne.as_ref().and_then(|n| n.gamma)).unwrap_or(0.5 * bound);
    let lf = reg.and_then(|r| r.lipschitz_f).unwrap_or(constants.lipschitz_f);
    let (n, np) = (game.theta_dim(), game.n_players());
    Ok(ConstantsReport {
        constants,
        n_players: np,
        theta_dim: n,
        sigma_bar: graph.sigma_bar(),
        gamma_bound: bound,
        gamma,
        q: q_factor(gamma, &constants, np, graph.sigma_bar()),
        xi,
        theta_probe_radius: probe,
        alpha_certificate_inexact: alpha_certificate(xi, n, np, lf, false),
        alpha_certificate_exact: alpha_certificate(xi, n, np, lf, true),
    })
}

/// Defaults of the charging experiment.
pub mod evcharge {
    /// Outer iterations.
    pub const ITERATIONS: usize = 5000;
    pub const THETA0: f64 = 2.0;
    pub const DIAG_SAMPLES: usize = 2000;
    pub const DIAG_EVERY: usize = 50;
    pub const ALPHA: f64 = 1e-5;
    pub const GAMMA: f64 = 0.01;
    pub const XI: f64 = 1e-4;
    pub const SCHEDULE: &str = "ceil(5*ln(k+1))";
    pub const EDGE_PROBABILITY: f64 = 1.0 / 3.0;
    pub const GRAPH_SEED: u64 = 1;
    /// Grid resolution of the reference optimum.
    pub const GRID_POINTS: usize = 401;
}

/// The charging experiment as a configuration.
pub fn evcharge_config(seed: u64) -> ExperimentConfig {
    let mut reg = RegulatorConfig::new(evcharge::ITERATIONS, AlphaMode::Fixed { alpha: evcharge::ALPHA }, evcharge::XI);
    reg.schedule = Schedule::Formula {
        expr: evcharge::SCHEDULE.into(),
    };
    reg.inner_mode = InnerMode::Inexact;
    reg.gamma = Some(evcharge::GAMMA);
    reg.seed = seed;
    reg.diag_samples = evcharge::DIAG_SAMPLES;
    reg.diag_every = evcharge::DIAG_EVERY;
    reg.theta0 = Some(vec![evcharge::THETA0]);
    ExperimentConfig {
        game: GameConfig::EvCharging {
            params: EvChargingParams::default(),
        },
        graph: GraphConfig::Metropolis {
            edge_probability: evcharge::EDGE_PROBABILITY,
            seed: evcharge::GRAPH_SEED,
        },
        regulator: Some(reg),
        ne: None,
        output: OutputConfig::default(),
        overrides: Overrides {
            allow_uncertified_alpha: true,
        },
    }
}

/// Paths and reference values of a charging run.
#[derive(Debug, Clone, Serialize)]
pub struct EvchargeReport {
    pub theta_star_grid: Vec<f64>,
    pub social_star_grid: f64,
    pub final_theta: Vec<f64>,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub figures_path: PathBuf,
    pub config_path: PathBuf,
}

/// Run the charging experiment; besides trace and summary, writes
/// `config.json` and `figures.csv` (`k, theta_err, stat_mc_norm, cost_i...,
/// social_cost`).
pub fn cmd_evcharge(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(RunTrace, EvchargeReport)> {
    let built = cfg.game.build()?;
    let game: &dyn Game = &built;
    let (theta_star, social_star) = grid_search_theta(game, game.theta_set(), evcharge::GRID_POINTS, 1e-11)?;
    let config_path = out_dir.join("config.json");
    write_json(&config_path, cfg)?;
    let (trace, outputs) = cmd_regulate(cfg, out_dir)?;

    let figures_path = out_dir.join("figures.csv");
    let mut w = create_file(&figures_path)?;
    let costs: Vec<String> = (1..=game.n_players()).map(|i| format!("cost_{i}")).collect();
    writeln!(w, "k,theta_err,stat_mc_norm,{},social_cost", costs.join(","))?;
    for r in &trace.records {
        let err = r.theta.iter().zip(&theta_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let stat = r.stat_mc_norm.map(|s| format!("{s:.16e}")).unwrap_or_default();
        let costs: Vec<String> = r.player_costs.iter().map(|c| format!("{c:.16e}")).collect();
        writeln!(w, "{},{err:.16e},{stat},{},{:.16e}", r.k, costs.join(","), r.social_cost)?;
    }
    w.flush()?;
    let report = EvchargeReport {
        theta_star_grid: theta_star,
        social_star_grid: social_star,
        final_theta: trace.final_theta.clone(),
        trace_path: outputs.trace_path,
        summary_path: outputs.summary_path,
        figures_path,
        config_path,
    };
    Ok((trace, report))
}

/// Regenerate the oracle fixture file at `path`.
pub fn cmd_fixtures(path: &Path) -> Result<crate::oracles::FixtureFile> {
    let file = crate::oracles::generate_fixtures()?;
    write_json(path, &file)?;
    Ok(file)
}
