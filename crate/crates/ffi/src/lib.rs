//! C ABI for `socialopt`.
//!
//! Every fallible function returns a [`SocialoptStatus`] and writes results
//! through caller-provided pointers. On failure the message is available from
//! [`socialopt_last_error_message`] on the same thread. Objects are opaque
//! handles released by their `_free` function; passing NULL to a `_free`
//! function is a no-op.
//!
//! Array arguments are `(pointer, length)` pairs; lengths must match the
//! game's dimensions exactly. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use socialopt::consensus::{centralized_ne, gamma_bound, ne_seek, q_factor, Certificate, EstimateState};
use socialopt::experiments::{build_ev_game, EvChargingParams, ExperimentConfig, GameConfig};
use socialopt::game::{estimate_constants, metropolis_graph, social_cost, CommGraph, GameConstants, QuadraticGame};
use socialopt::regulator::{run, RunTrace};
use socialopt::{Error, Game, Result};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocialoptStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, wrong array length or out-of-range value.
    InvalidArgument = 1,
    /// Malformed or inconsistent configuration, including an uncertified step size.
    Config = 2,
    NotStronglyMonotone = 3,
    /// Disconnected or non-doubly-stochastic communication graph.
    Graph = 4,
    Divergence = 5,
    NoCertificate = 6,
    MaxIterations = 7,
    OracleMismatch = 8,
    Io = 9,
    /// A Rust panic was caught at the boundary.
    Panic = 10,
}

impl From<&Error> for SocialoptStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::DimensionMismatch { .. } | Error::InvalidArgument(_) => Self::InvalidArgument,
            Error::Config(_) | Error::Json(_) | Error::AlphaNotCertified { .. } => Self::Config,
            Error::NotStronglyMonotone { .. } => Self::NotStronglyMonotone,
            Error::GraphNotConnected { .. } | Error::InvalidGraph(_) => Self::Graph,
            Error::Divergence { .. } => Self::Divergence,
            Error::NoCertificate { .. } => Self::NoCertificate,
            Error::MaxIterations { .. } => Self::MaxIterations,
            Error::OracleMismatch(_) => Self::OracleMismatch,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Regularity constants of a game.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SocialoptConstants {
    pub mu: f64,
    pub l: f64,
    pub l_prime: f64,
    pub l_theta: f64,
    pub cost_lipschitz_x: f64,
    pub cost_lipschitz_theta: f64,
    pub strategy_bound: f64,
    pub lipschitz_f: f64,
}

impl From<GameConstants> for SocialoptConstants {
    fn from(c: GameConstants) -> Self {
        Self {
            mu: c.mu,
            l: c.l,
            l_prime: c.l_prime,
            l_theta: c.l_theta,
            cost_lipschitz_x: c.cost_lipschitz_x,
            cost_lipschitz_theta: c.cost_lipschitz_theta,
            strategy_bound: c.strategy_bound,
            lipschitz_f: c.lipschitz_f,
        }
    }
}

impl From<SocialoptConstants> for GameConstants {
    fn from(c: SocialoptConstants) -> Self {
        Self {
            mu: c.mu,
            l: c.l,
            l_prime: c.l_prime,
            l_theta: c.l_theta,
            cost_lipschitz_x: c.cost_lipschitz_x,
            cost_lipschitz_theta: c.cost_lipschitz_theta,
            strategy_bound: c.strategy_bound,
            lipschitz_f: c.lipschitz_f,
        }
    }
}

/// Diagnostics of [`socialopt_ne_seek`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SocialoptNeInfo {
    pub residual: f64,
    pub consensus_gap: f64,
    /// Certified bound on the squared distance to the equilibrium; infinite without contraction.
    pub epsilon_bound: f64,
    pub q: f64,
    pub iterations: usize,
}

/// Opaque game handle.
pub struct SocialoptGame {
    inner: QuadraticGame,
}

/// Opaque communication-graph handle.
pub struct SocialoptGraph {
    inner: CommGraph,
}

/// Opaque regulator-run handle.
pub struct SocialoptTrace {
    inner: RunTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<()>) -> SocialoptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            SocialoptStatus::Ok
        }
        Ok(Err(e)) => {
            let status = SocialoptStatus::from(&e);
            set_last_error(e.to_string());
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SocialoptStatus::Panic
        }
    }
}

fn null(what: &str) -> Error {
    Error::InvalidArgument(format!("{what} is NULL"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64]> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn output<'a>(p: *mut f64, len: usize, expected: usize, what: &'static str) -> Result<&'a mut [f64]> {
    if len != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found: len,
        });
    }
    if len == 0 {
        Ok(&mut [])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts_mut(p, len))
    }
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Error::InvalidArgument(format!("{what} is not UTF-8: {e}")))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_box<T>(out: *mut *mut T, value: T) -> Result<()> {
    if out.is_null() {
        return Err(null("output handle pointer"));
    }
    out.write(Box::into_raw(Box::new(value)));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn socialopt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn socialopt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Two-player closed-form example game.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_example1(out: *mut *mut SocialoptGame) -> SocialoptStatus {
    guard(|| {
        let inner = socialopt::oracles::example1_quadratic();
        put_box(out, SocialoptGame { inner })
    })
}

/// Electric-vehicle charging game with default coefficients.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_ev_charging(
    n_players: usize,
    periods: usize,
    out: *mut *mut SocialoptGame,
) -> SocialoptStatus {
    guard(|| {
        let params = EvChargingParams {
            n_players,
            dim: periods,
            ..Default::default()
        };
        let inner = build_ev_game(&params)?.1;
        put_box(out, SocialoptGame { inner })
    })
}

/// Game from the JSON `game` object of an experiment configuration.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_from_json(json: *const c_char, out: *mut *mut SocialoptGame) -> SocialoptStatus {
    guard(|| {
        let text = string(json, "json")?;
        let cfg: GameConfig = serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let violations = cfg.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        put_box(out, SocialoptGame { inner: cfg.build()? })
    })
}

#[no_mangle]
pub unsafe extern "C" fn socialopt_game_free(game: *mut SocialoptGame) {
    free(game);
}

/// Number of players; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_n_players(game: *const SocialoptGame) -> usize {
    game.as_ref().map_or(0, |g| g.inner.n_players())
}

/// Joint strategy dimension; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_total_dim(game: *const SocialoptGame) -> usize {
    game.as_ref().map_or(0, |g| g.inner.total_dim())
}

/// Decision dimension; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_theta_dim(game: *const SocialoptGame) -> usize {
    game.as_ref().map_or(0, |g| g.inner.theta_dim())
}

/// Exact constants, with cost Lipschitz constants taken over the decision
/// set enlarged by `theta_probe_radius`.
#[no_mangle]
pub unsafe extern "C" fn socialopt_game_constants(
    game: *const SocialoptGame,
    theta_probe_radius: f64,
    out: *mut SocialoptConstants,
) -> SocialoptStatus {
    guard(|| {
        let g = &deref(game, "game")?.inner;
        let c = estimate_constants(g.params(), g.strategy_sets(), g.theta_set(), theta_probe_radius)?;
        put(out, c.into(), "out")
    })
}

/// Sum of all players' costs.
#[no_mangle]
pub unsafe extern "C" fn socialopt_social_cost(
    game: *const SocialoptGame,
    x: *const f64,
    x_len: usize,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
) -> SocialoptStatus {
    guard(|| {
        let g = &deref(game, "game")?.inner;
        let v = social_cost(g, input(x, x_len, "x")?, input(theta, theta_len, "theta")?)?;
        put(out, v, "out")
    })
}

/// Complete graph with uniform weights `1/n`.
#[no_mangle]
pub unsafe extern "C" fn socialopt_graph_complete(n_nodes: usize, out: *mut *mut SocialoptGraph) -> SocialoptStatus {
    guard(|| put_box(out, SocialoptGraph { inner: CommGraph::complete(n_nodes)? }))
}

/// Random connected graph with Metropolis weights.
#[no_mangle]
pub unsafe extern "C" fn socialopt_graph_metropolis(
    n_nodes: usize,
    edge_probability: f64,
    seed: u64,
    out: *mut *mut SocialoptGraph,
) -> SocialoptStatus {
    guard(|| {
        let inner = metropolis_graph(n_nodes, edge_probability, seed)?;
        put_box(out, SocialoptGraph { inner })
    })
}

/// Graph from a row-major `n_nodes x n_nodes` doubly stochastic weight matrix.
#[no_mangle]
pub unsafe extern "C" fn socialopt_graph_from_matrix(
    n_nodes: usize,
    weights: *const f64,
    out: *mut *mut SocialoptGraph,
) -> SocialoptStatus {
    guard(|| {
        let len = n_nodes.checked_mul(n_nodes).ok_or_else(|| Error::InvalidArgument("n_nodes too large".into()))?;
        let w = input(weights, len, "weights")?;
        let m = DMatrix::from_row_slice(n_nodes, n_nodes, w);
        put_box(out, SocialoptGraph { inner: CommGraph::new(m)? })
    })
}

#[no_mangle]
pub unsafe extern "C" fn socialopt_graph_free(graph: *mut SocialoptGraph) {
    free(graph);
}

/// Number of nodes; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_graph_n_nodes(graph: *const SocialoptGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.n_nodes())
}

/// Second-largest singular value of the weight matrix.
#[no_mangle]
pub unsafe extern "C" fn socialopt_graph_sigma_bar(graph: *const SocialoptGraph, out: *mut f64) -> SocialoptStatus {
    guard(|| put(out, deref(graph, "graph")?.inner.sigma_bar(), "out"))
}

/// Supremum of certified consensus step sizes.
#[no_mangle]
pub unsafe extern "C" fn socialopt_gamma_bound(
    constants: *const SocialoptConstants,
    sigma_bar: f64,
    out: *mut f64,
) -> SocialoptStatus {
    guard(|| {
        let c: GameConstants = (*deref(constants, "constants")?).into();
        put(out, gamma_bound(&c, sigma_bar)?, "out")
    })
}

/// Contraction factor of one consensus round at step `gamma`.
#[no_mangle]
pub unsafe extern "C" fn socialopt_q_factor(
    gamma: f64,
    constants: *const SocialoptConstants,
    n_players: usize,
    sigma_bar: f64,
    out: *mut f64,
) -> SocialoptStatus {
    guard(|| {
        let c: GameConstants = (*deref(constants, "constants")?).into();
        put(out, q_factor(gamma, &c, n_players, sigma_bar), "out")
    })
}

/// Full-information equilibrium by projected gradient iterations.
#[no_mangle]
pub unsafe extern "C" fn socialopt_centralized_ne(
    game: *const SocialoptGame,
    theta: *const f64,
    theta_len: usize,
    tol: f64,
    max_iter: usize,
    x_out: *mut f64,
    x_len: usize,
) -> SocialoptStatus {
    guard(|| {
        let g = &deref(game, "game")?.inner;
        let out = output(x_out, x_len, g.total_dim(), "x_out")?;
        let x = centralized_ne(g, input(theta, theta_len, "theta")?, tol, max_iter)?;
        out.copy_from_slice(&x);
        Ok(())
    })
}

/// `t_max` rounds of distributed equilibrium seeking from a zero start.
/// `info` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_ne_seek(
    game: *const SocialoptGame,
    graph: *const SocialoptGraph,
    theta: *const f64,
    theta_len: usize,
    gamma: f64,
    t_max: usize,
    x_out: *mut f64,
    x_len: usize,
    info: *mut SocialoptNeInfo,
) -> SocialoptStatus {
    guard(|| {
        let g = &deref(game, "game")?.inner;
        let graph = &deref(graph, "graph")?.inner;
        let out = output(x_out, x_len, g.total_dim(), "x_out")?;
        let theta = input(theta, theta_len, "theta")?;
        let constants = estimate_constants(g.params(), g.strategy_sets(), g.theta_set(), 0.0)?;
        let cert = Certificate::new(gamma, &constants, graph);
        let res = ne_seek(g, graph, theta, gamma, t_max, EstimateState::cold(g), Some(&cert))?;
        out.copy_from_slice(&res.x);
        if !info.is_null() {
            info.write(SocialoptNeInfo {
                residual: res.residual,
                consensus_gap: res.consensus_gap,
                epsilon_bound: res.epsilon_bound,
                q: cert.q,
                iterations: res.iterations,
            });
        }
        Ok(())
    })
}

/// Regulator run described by a JSON experiment configuration with a
/// `regulator` section. No files are written.
#[no_mangle]
pub unsafe extern "C" fn socialopt_run(config_json: *const c_char, out: *mut *mut SocialoptTrace) -> SocialoptStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_json(string(config_json, "config_json")?)?;
        cfg.validate()?;
        let reg = cfg
            .effective_regulator()
            .ok_or_else(|| Error::Config(vec!["configuration has no \"regulator\" section".into()]))?;
        let game = cfg.game.build()?;
        let graph = cfg.graph.build(game.n_players())?;
        let inner = run(&reg, &game, Some(&graph))?;
        put_box(out, SocialoptTrace { inner })
    })
}

#[no_mangle]
pub unsafe extern "C" fn socialopt_trace_free(trace: *mut SocialoptTrace) {
    free(trace);
}

/// Number of recorded iterations; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_trace_len(trace: *const SocialoptTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.records.len())
}

/// Decision dimension of the run; 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn socialopt_trace_theta_dim(trace: *const SocialoptTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.final_theta.len())
}

/// Decision after the last update.
#[no_mangle]
pub unsafe extern "C" fn socialopt_trace_final_theta(
    trace: *const SocialoptTrace,
    theta_out: *mut f64,
    theta_len: usize,
) -> SocialoptStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        output(theta_out, theta_len, t.final_theta.len(), "theta_out")?.copy_from_slice(&t.final_theta);
        Ok(())
    })
}

/// Write the trace as CSV to `path`.
#[no_mangle]
pub unsafe extern "C" fn socialopt_trace_write_csv(trace: *const SocialoptTrace, path: *const c_char) -> SocialoptStatus {
    guard(|| {
        let t = &deref(trace, "trace")?.inner;
        let file = std::fs::File::create(string(path, "path")?)?;
        t.write_csv(std::io::BufWriter::new(file))
    })
}
