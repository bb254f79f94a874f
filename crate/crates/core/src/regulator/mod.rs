//! The regulator's outer loop: a zeroth-order method on the smoothed social
//! cost, with inner equilibria from distributed NE seeking (inexact mode) or
//! from the full-information solver (exact mode).

mod schedule;
mod trace;

pub use schedule::{inner_schedule, Schedule};
pub use trace::{csv_header, csv_row, read_csv, write_csv, IterationRecord};

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::consensus::{
    centralized_ne, gamma_bound, ne_residual, ne_seek, q_factor, warm_start_epsilon_bound, Certificate,
    EstimateState, RESIDUAL_PROBE,
};
use crate::error::{check_dim, Error, Result};
use crate::game::{estimate_constants, player_costs, CommGraph, Game, GameConstants};
use crate::smoothing::{check_xi, mc_stationarity_par, moreau_gradient, two_point_estimate, SphereSampler};
use schedule::CompiledSchedule;

/// Fraction of the step-size supremum used when no inner step is configured.
pub const DEFAULT_GAMMA_FRACTION: f64 = 0.5;

/// Iteration budget of every full-information solve in a run.
pub const EXACT_MAX_ITER: usize = 1_000_000;

/// Step size of the outer update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaMode {
    Fixed { alpha: f64 },
    /// `alpha0 / sqrt(K)`.
    Scaled { alpha0: f64 },
    /// The largest certified value for the inner mode.
    Certified,
}

/// Source of the inner equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMode {
    /// Distributed NE seeking with `t_k` rounds.
    #[default]
    Inexact,
    /// Full-information solver to `exact_tol`.
    Exact,
}

fn default_floor() -> usize {
    1
}

fn default_diag_samples() -> usize {
    2000
}

fn default_exact_tol() -> f64 {
    1e-12
}

/// Tunables of one regulator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorConfig {
    /// Number of outer iterations `K`.
    pub iterations: usize,
    pub alpha: AlphaMode,
    /// Smoothing parameter.
    pub xi: f64,
    #[serde(default)]
    pub schedule: Schedule,
    /// Lower bound on `t_k`.
    #[serde(default = "default_floor")]
    pub schedule_floor: usize,
    #[serde(default)]
    pub inner_mode: InnerMode,
    /// Inner step; defaults to half the certified supremum.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Monte-Carlo draws per stationarity diagnostic.
    #[serde(default = "default_diag_samples")]
    pub diag_samples: usize,
    /// Diagnostic period; 0 disables diagnostics.
    #[serde(default)]
    pub diag_every: usize,
    /// Initial decision; defaults to the midpoint of the decision set.
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
    /// Enlargement of the decision set behind the Lipschitz constants; defaults to `xi`.
    #[serde(default)]
    pub theta_probe_radius: Option<f64>,
    /// Replaces the computed `L_F`; mandatory for games without exact constants.
    #[serde(default)]
    pub lipschitz_f: Option<f64>,
    #[serde(default)]
    pub allow_uncertified_alpha: bool,
    /// Start each inner solve from the previous base estimates.
    #[serde(default)]
    pub warm_start: bool,
    /// Residual tolerance of the full-information solver.
    #[serde(default = "default_exact_tol")]
    pub exact_tol: f64,
}

impl RegulatorConfig {
    /// Configuration with defaults for everything but `K`, `alpha` and `xi`.
    pub fn new(iterations: usize, alpha: AlphaMode, xi: f64) -> Self {
        Self {
            iterations,
            alpha,
            xi,
            schedule: Schedule::default(),
            schedule_floor: default_floor(),
            inner_mode: InnerMode::default(),
            gamma: None,
            seed: 0,
            diag_samples: default_diag_samples(),
            diag_every: 0,
            theta0: None,
            theta_probe_radius: None,
            lipschitz_f: None,
            allow_uncertified_alpha: false,
            warm_start: false,
            exact_tol: default_exact_tol(),
        }
    }

    /// Every violated constraint, as messages.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.xi) {
            v.push(format!("regulator.xi must be positive, got {}", self.xi));
        }
        match &self.alpha {
            AlphaMode::Fixed { alpha } if !positive(*alpha) => {
                v.push(format!("regulator.alpha.alpha must be positive, got {alpha}"))
            }
            AlphaMode::Scaled { alpha0 } if !positive(*alpha0) => {
                v.push(format!("regulator.alpha.alpha0 must be positive, got {alpha0}"))
            }
            _ => {}
        }
        match &self.schedule {
            Schedule::Log { s } if !(0.0..1.0).contains(s) => {
                v.push(format!("regulator.schedule.s must lie in [0, 1), got {s}"))
            }
            Schedule::Formula { expr } => {
                if let Err(Error::Config(msgs)) = schedule::parse_formula(expr) {
                    v.extend(msgs);
                }
            }
            _ => {}
        }
        if let Some(g) = self.gamma {
            if !positive(g) {
                v.push(format!("regulator.gamma must be positive, got {g}"));
            }
        }
        if self.diag_every > 0 && self.diag_samples == 0 {
            v.push("regulator.diag_samples must be positive when diagnostics are enabled".into());
        }
        if let Some(r) = self.theta_probe_radius {
            if !(r >= 0.0 && r.is_finite()) {
                v.push(format!("regulator.theta_probe_radius must be nonnegative, got {r}"));
            }
        }
        if let Some(l) = self.lipschitz_f {
            if !(l >= 0.0 && l.is_finite()) {
                v.push(format!("regulator.lipschitz_f must be nonnegative, got {l}"));
            }
        }
        if !positive(self.exact_tol) {
            v.push(format!("regulator.exact_tol must be positive, got {}", self.exact_tol));
        }
        if let Some(t) = &self.theta0 {
            if t.iter().any(|x| !x.is_finite()) {
                v.push("regulator.theta0 must be finite".into());
            }
        }
        v
    }
}

/// Largest outer step covered by the convergence guarantee:
/// `xi / (4 (n N L_F + 1))`, or `xi / (2 (n N L_F + 1))` with exact inner solves.
pub fn alpha_certificate(xi: f64, theta_dim: usize, n_players: usize, lipschitz_f: f64, exact: bool) -> f64 {
    let denom = if exact { 2.0 } else { 4.0 };
    xi / (denom * (theta_dim as f64 * n_players as f64 * lipschitz_f + 1.0))
}

/// `sum_i (n / xi)(f_i(x_eps(theta + xi u), theta + xi u) - f_i(x_eps(theta), theta)) u`.
pub fn inexact_zo_gradient<S>(
    game: &dyn Game,
    mut ne_solver: S,
    theta: &[f64],
    xi: f64,
    u: &[f64],
    t_k: usize,
) -> Result<Vec<f64>>
where
    S: FnMut(&[f64], usize) -> Result<Vec<f64>>,
{
    check_xi(xi)?;
    check_dim("direction", theta.len(), u.len())?;
    let pert: Vec<f64> = theta.iter().zip(u).map(|(t, v)| t + xi * v).collect();
    let x_pert = ne_solver(&pert, t_k)?;
    let x_base = ne_solver(theta, t_k)?;
    let f_pert: f64 = player_costs(game, &x_pert, &pert)?.iter().sum();
    let f_base: f64 = player_costs(game, &x_base, theta)?.iter().sum();
    two_point_estimate(f_pert, f_base, u, xi)
}

/// `theta - alpha (zo_grad + (theta - Pi(theta)) / xi)`, not projected.
pub fn theta_step(theta: &[f64], zo_grad: &[f64], theta_set: &crate::game::BoxSet, xi: f64, alpha: f64) -> Result<Vec<f64>> {
    check_dim("zeroth-order gradient", theta.len(), zo_grad.len())?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let moreau = moreau_gradient(theta, theta_set, xi)?;
    let next: Vec<f64> = theta
        .iter()
        .zip(zo_grad)
        .zip(&moreau)
        .map(|((t, g), m)| t - alpha * (g + m))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            iteration: 0,
            context: "non-finite decision after the outer update".into(),
        });
    }
    Ok(next)
}

/// Quantities derived from a configuration, a game and a graph before a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSettings {
    pub alpha: f64,
    /// `None` when no `L_F` is available.
    pub alpha_certificate: Option<f64>,
    pub alpha_certified: bool,
    pub lipschitz_f: Option<f64>,
    pub constants: Option<GameConstants>,
    /// Inner step (inexact mode).
    pub gamma: Option<f64>,
    pub gamma_bound: Option<f64>,
    /// Contraction factor at `gamma`; a value `>= 1` gives no certificate.
    pub q: Option<f64>,
    pub sigma_bar: Option<f64>,
    pub theta0: Vec<f64>,
    pub n_players: usize,
    pub theta_dim: usize,
}

/// Resolve constants, step sizes and the initial decision; refuses an
/// uncertified `alpha` unless the configuration allows it.
pub fn resolve(config: &RegulatorConfig, game: &dyn Game, graph: Option<&CommGraph>) -> Result<ResolvedSettings> {
    let violations = config.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let n = game.theta_dim();
    let n_players = game.n_players();
    let probe = config.theta_probe_radius.unwrap_or(config.xi);
    let constants = match game.as_quadratic() {
        Some(q) => Some(estimate_constants(q.params(), q.strategy_sets(), q.theta_set(), probe)?),
        None => None,
    };
    let lipschitz_f = config.lipschitz_f.or(constants.map(|c| c.lipschitz_f));
    let exact = config.inner_mode == InnerMode::Exact;
    let alpha_certificate = lipschitz_f.map(|l| alpha_certificate(config.xi, n, n_players, l, exact));

    let alpha = match config.alpha {
        AlphaMode::Fixed { alpha } => alpha,
        AlphaMode::Scaled { alpha0 } => alpha0 / (config.iterations.max(1) as f64).sqrt(),
        AlphaMode::Certified => alpha_certificate.ok_or_else(|| {
            Error::Config(vec!["a certified alpha needs lipschitz_f for games without exact constants".into()])
        })?,
    };
    let alpha_certified = alpha_certificate.is_some_and(|c| alpha <= c * (1.0 + 1e-12));
    if !alpha_certified {
        if !config.allow_uncertified_alpha {
            return Err(match alpha_certificate {
                Some(certificate) => Error::AlphaNotCertified { alpha, certificate },
                None => Error::Config(vec![
                    "lipschitz_f is required to certify alpha for games without exact constants".into(),
                ]),
            });
        }
        warn!("alpha = {alpha:e} is not certified (certificate {alpha_certificate:?})");
    }

    let (mut gamma, mut bound, mut q, mut sigma_bar) = (None, None, None, None);
    if let Some(g) = graph {
        check_dim("graph nodes", n_players, g.n_nodes())?;
        sigma_bar = Some(g.sigma_bar());
    }
    if !exact {
        let g = graph.ok_or_else(|| Error::Config(vec!["inexact mode needs a communication graph".into()]))?;
        if let Some(c) = &constants {
            bound = Some(gamma_bound(c, g.sigma_bar())?);
        }
        let step = match (config.gamma, bound) {
            (Some(step), _) => step,
            (None, Some(b)) => DEFAULT_GAMMA_FRACTION * b,
            (None, None) => {
                return Err(Error::Config(vec![
                    "regulator.gamma is required for games without exact constants".into(),
                ]))
            }
        };
        if let Some(b) = bound {
            if step >= b {
                warn!("gamma = {step:e} is not below the certified bound {b:e}");
            }
        }
        if let Some(c) = &constants {
            q = Some(q_factor(step, c, n_players, g.sigma_bar()));
        }
        gamma = Some(step);
    }

    let theta0 = match &config.theta0 {
        Some(t) => {
            check_dim("theta0", n, t.len())?;
            if !game.theta_set().contains(t) {
                return Err(Error::Config(vec![format!("regulator.theta0 {t:?} lies outside the decision set")]));
            }
            t.clone()
        }
        None => game.theta_set().midpoint(),
    };

    Ok(ResolvedSettings {
        alpha,
        alpha_certificate,
        alpha_certified,
        lipschitz_f,
        constants,
        gamma,
        gamma_bound: bound,
        q,
        sigma_bar,
        theta0,
        n_players,
        theta_dim: n,
    })
}

/// A complete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub config: RegulatorConfig,
    pub settings: ResolvedSettings,
    pub records: Vec<IterationRecord>,
    pub final_theta: Vec<f64>,
    /// Diagnostic iterate with the smallest stationarity norm.
    pub best_theta: Vec<f64>,
    pub best_k: Option<usize>,
    pub wall_time_s: f64,
}

impl RunTrace {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_csv(w, self.settings.theta_dim, self.settings.n_players, &self.records)
    }

    /// Summary without the per-iteration records.
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            config: self.config.clone(),
            settings: self.settings.clone(),
            iterations: self.records.len(),
            final_theta: self.final_theta.clone(),
            best_theta: self.best_theta.clone(),
            best_k: self.best_k,
            wall_time_s: self.wall_time_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RegulatorConfig,
    pub settings: ResolvedSettings,
    pub iterations: usize,
    pub final_theta: Vec<f64>,
    pub best_theta: Vec<f64>,
    pub best_k: Option<usize>,
    pub wall_time_s: f64,
}

/// Stream id of the stationarity diagnostic at iteration `k`; the
/// perturbation directions use stream 0.
pub fn diagnostic_stream(k: usize) -> u64 {
    ((k as u64) + 1) << 24
}

fn at_iteration(k: usize, e: Error) -> Error {
    match e {
        Error::Divergence { iteration, context } => Error::Divergence {
            iteration: k,
            context: format!("inner round {iteration}: {context}"),
        },
        other => other,
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Run the outer loop for `config.iterations` steps.
pub fn run(config: &RegulatorConfig, game: &dyn Game, graph: Option<&CommGraph>) -> Result<RunTrace> {
    let start = Instant::now();
    let settings = resolve(config, game, graph)?;
    let n = settings.theta_dim;
    let xi = config.xi;
    let theta_set = game.theta_set();
    let exact = config.inner_mode == InnerMode::Exact;
    let schedule = CompiledSchedule::new(&config.schedule, settings.q.filter(|q| *q < 1.0))?;
    let certificate = match (&settings.constants, settings.q) {
        (Some(c), Some(q)) => Some(Certificate { q, strategy_bound: c.strategy_bound }),
        _ => None,
    };
    let exact_oracle = |t: &[f64]| centralized_ne(game, t, config.exact_tol, EXACT_MAX_ITER);
    let operator = game.operator_constants();

    let mut sampler = SphereSampler::new(n, config.seed)?;
    let mut theta = settings.theta0.clone();
    let mut warm: Option<EstimateState> = None;
    let mut records = Vec::with_capacity(config.iterations);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;

    for k in 0..config.iterations {
        let u = sampler.sample_unit_sphere();
        let t_k = if exact {
            schedule.rounds(k, config.schedule_floor).unwrap_or(config.schedule_floor)
        } else {
            schedule.rounds(k, config.schedule_floor)?
        };
        let pert: Vec<f64> = theta.iter().zip(&u).map(|(t, v)| t + xi * v).collect();

        let (x_pert, x_base, eps_bound) = if exact {
            let x_pert = exact_oracle(&pert).map_err(|e| at_iteration(k, e))?;
            let x_base = exact_oracle(&theta).map_err(|e| at_iteration(k, e))?;
            let bound = match operator {
                Some(op) => {
                    let r = ne_residual(game, &x_base, &theta, RESIDUAL_PROBE)?;
                    let e = (1.0 + RESIDUAL_PROBE * op.l) / (RESIDUAL_PROBE * op.mu) * r;
                    e * e
                }
                None => f64::INFINITY,
            };
            (x_pert, x_base, bound)
        } else {
            let graph = graph.expect("resolved settings guarantee a graph");
            let gamma = settings.gamma.expect("resolved settings guarantee gamma");
            let init = match (&warm, config.warm_start) {
                (Some(state), true) => state.clone(),
                _ => EstimateState::cold(game),
            };
            let bound = match (&certificate, &settings.constants, config.warm_start && warm.is_some()) {
                (Some(c), _, false) => c.cold_bound(&init, t_k),
                (Some(c), Some(consts), true) => {
                    warm_start_epsilon_bound(game, &init, &theta, consts, c.q, t_k).unwrap_or(f64::INFINITY)
                }
                _ => f64::INFINITY,
            };
            let res_pert = ne_seek(game, graph, &pert, gamma, t_k, init.clone(), None).map_err(|e| at_iteration(k, e))?;
            let mut solver = crate::consensus::DistributedNe::new(game, graph, &theta, gamma, init)?;
            for _ in 0..t_k {
                solver.step().map_err(|e| at_iteration(k, e))?;
            }
            let state = solver.into_state();
            let x_base = state.own_strategies(game);
            if config.warm_start {
                warm = Some(state);
            }
            (res_pert.x, x_base, bound)
        };

        let f_pert: f64 = player_costs(game, &x_pert, &pert)?.iter().sum();
        let costs = player_costs(game, &x_base, &theta)?;
        let social: f64 = costs.iter().sum();
        let zo = two_point_estimate(f_pert, social, &u, xi)?;
        let moreau = moreau_gradient(&theta, theta_set, xi)?;
        let grad_norm = zo.iter().zip(&moreau).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
        let dist_theta = theta_set.distance(&theta)?;

        let diag = config.diag_every > 0 && k % config.diag_every == 0;
        let (eps_measured, stat) = if diag {
            let measured = match operator {
                Some(_) => {
                    let exact_x = exact_oracle(&theta).map_err(|e| at_iteration(k, e))?;
                    Some(dist_sq(&x_base, &exact_x))
                }
                None => None,
            };
            let est = mc_stationarity_par(game, &theta, xi, config.diag_samples, &exact_oracle, config.seed, diagnostic_stream(k))
                .map_err(|e| at_iteration(k, e))?;
            (measured, Some(est.norm()))
        } else {
            (None, None)
        };
        if let Some(s) = stat {
            if best.as_ref().is_none_or(|(_, b, _)| s < *b) {
                best = Some((k, s, theta.clone()));
            }
        }

        records.push(IterationRecord {
            k,
            theta: theta.clone(),
            t_k,
            epsilon_k_bound: eps_bound,
            epsilon_k_measured: eps_measured,
            social_cost: social,
            player_costs: costs,
            grad_norm,
            dist_theta,
            stat_mc_norm: stat,
        });

        theta = theta_step(&theta, &zo, theta_set, xi, settings.alpha).map_err(|e| at_iteration(k, e))?;
    }

    let (best_k, best_theta) = match best {
        Some((k, _, t)) => (Some(k), t),
        None => (None, theta.clone()),
    };
    Ok(RunTrace {
        config: config.clone(),
        settings,
        records,
        final_theta: theta,
        best_theta,
        best_k,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
