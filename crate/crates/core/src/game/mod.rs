//! Parametric N-player games, their strategy sets and communication graphs.
//!
//! A game is anything implementing [`Game`]: per-player costs `f_i(x, theta)`
//! and own-strategy partial gradients `grad_i f_i(x, theta)`, evaluated on the
//! joint strategy `x` (players' blocks concatenated in order) and the
//! regulator decision `theta`. Two implementations ship with the crate:
//! [`GameSpec`], built from closures, and [`QuadraticGame`], whose affine
//! pseudo-gradient admits exact constants through [`estimate_constants`].

mod constants;
mod graph;
mod quadratic;
mod set;

pub use constants::{estimate_constants, GameConstants, EXACT_CORNER_LIMIT};
pub use graph::{metropolis_graph, CommGraph, METROPOLIS_MAX_ATTEMPTS};
pub use quadratic::{PlayerCost, QuadraticGame, QuadraticGameParams};
pub use set::BoxSet;

use crate::error::{check_dim, Error, Result};

/// Strong monotonicity and Lipschitz moduli of the pseudo-gradient in `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorConstants {
    pub mu: f64,
    pub l: f64,
}

/// An N-player game parametrized by the regulator decision `theta`.
///
/// Implementations must accept any `x` of length [`Game::total_dim`] and any
/// `theta` of length [`Game::theta_dim`]; dimension checks happen in the free
/// functions of this module.
pub trait Game: Send + Sync {
    /// Strategy dimension of each player.
    fn dims(&self) -> &[usize];

    fn theta_dim(&self) -> usize;

    /// Cost of `player` at joint strategy `x` and decision `theta`.
    fn cost(&self, player: usize, x: &[f64], theta: &[f64]) -> f64;

    /// Partial gradient of the player's cost with respect to its own block,
    /// written into `out` (length `dims()[player]`).
    fn partial_gradient(&self, player: usize, x: &[f64], theta: &[f64], out: &mut [f64]);

    fn strategy_set(&self, player: usize) -> &BoxSet;

    fn theta_set(&self) -> &BoxSet;

    /// Moduli used by the full-information solver, when known.
    fn operator_constants(&self) -> Option<OperatorConstants> {
        None
    }

    /// The quadratic representation, when the game has one.
    fn as_quadratic(&self) -> Option<&QuadraticGame> {
        None
    }

    fn n_players(&self) -> usize {
        self.dims().len()
    }

    fn total_dim(&self) -> usize {
        self.dims().iter().sum()
    }

    /// Start index of each player's block in the joint strategy.
    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n_players());
        let mut acc = 0;
        for d in self.dims() {
            offsets.push(acc);
            acc += d;
        }
        offsets
    }

    /// Joint strategy set `X = X_1 x ... x X_N`.
    fn joint_set(&self) -> BoxSet {
        BoxSet::product((0..self.n_players()).map(|i| self.strategy_set(i)))
            .expect("strategy sets are nonempty")
    }
}

pub type CostFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type GradFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// A game defined by user-supplied cost and partial-gradient closures.
pub struct GameSpec {
    dims: Vec<usize>,
    theta_dim: usize,
    costs: Vec<CostFn>,
    grads: Vec<GradFn>,
    strategy_sets: Vec<BoxSet>,
    theta_set: BoxSet,
    operator_constants: Option<OperatorConstants>,
}

impl std::fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSpec")
            .field("dims", &self.dims)
            .field("theta_dim", &self.theta_dim)
            .field("strategy_sets", &self.strategy_sets)
            .field("theta_set", &self.theta_set)
            .finish_non_exhaustive()
    }
}

impl GameSpec {
    pub fn new(
        costs: Vec<CostFn>,
        grads: Vec<GradFn>,
        strategy_sets: Vec<BoxSet>,
        theta_set: BoxSet,
    ) -> Result<Self> {
        let n = strategy_sets.len();
        if n == 0 {
            return Err(Error::InvalidArgument("a game needs at least one player".into()));
        }
        check_dim("cost evaluators", n, costs.len())?;
        check_dim("gradient evaluators", n, grads.len())?;
        Ok(Self {
            dims: strategy_sets.iter().map(BoxSet::dim).collect(),
            theta_dim: theta_set.dim(),
            costs,
            grads,
            strategy_sets,
            theta_set,
            operator_constants: None,
        })
    }

    /// Attach the moduli `mu` (strong monotonicity) and `l` (Lipschitz) of
    /// the pseudo-gradient, enabling the full-information solver.
    pub fn with_operator_constants(mut self, mu: f64, l: f64) -> Result<Self> {
        if !(mu > 0.0) || !(l >= mu) {
            return Err(Error::InvalidArgument(format!(
                "operator constants need 0 < mu <= l, got mu = {mu}, l = {l}"
            )));
        }
        self.operator_constants = Some(OperatorConstants { mu, l });
        Ok(self)
    }
}

impl Game for GameSpec {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn theta_dim(&self) -> usize {
        self.theta_dim
    }

    fn cost(&self, player: usize, x: &[f64], theta: &[f64]) -> f64 {
        (self.costs[player])(x, theta)
    }

    fn partial_gradient(&self, player: usize, x: &[f64], theta: &[f64], out: &mut [f64]) {
        (self.grads[player])(x, theta, out)
    }

    fn strategy_set(&self, player: usize) -> &BoxSet {
        &self.strategy_sets[player]
    }

    fn theta_set(&self) -> &BoxSet {
        &self.theta_set
    }

    fn operator_constants(&self) -> Option<OperatorConstants> {
        self.operator_constants
    }
}

pub(crate) fn check_point(game: &dyn Game, x: &[f64], theta: &[f64]) -> Result<()> {
    check_dim("joint strategy", game.total_dim(), x.len())?;
    check_dim("theta", game.theta_dim(), theta.len())
}

/// Pseudo-gradient `G(x, theta)`: every player's own partial gradient, stacked.
pub fn pseudo_gradient(game: &dyn Game, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_point(game, x, theta)?;
    let mut out = vec![0.0; game.total_dim()];
    pseudo_gradient_into(game, x, theta, &mut out);
    Ok(out)
}

pub(crate) fn pseudo_gradient_into(game: &dyn Game, x: &[f64], theta: &[f64], out: &mut [f64]) {
    let mut start = 0;
    for (i, d) in game.dims().iter().enumerate() {
        game.partial_gradient(i, x, theta, &mut out[start..start + d]);
        start += d;
    }
}

/// Each player's cost at `(x, theta)`.
pub fn player_costs(game: &dyn Game, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_point(game, x, theta)?;
    Ok((0..game.n_players()).map(|i| game.cost(i, x, theta)).collect())
}

/// Social cost `sum_i f_i(x, theta)`.
pub fn social_cost(game: &dyn Game, x: &[f64], theta: &[f64]) -> Result<f64> {
    Ok(player_costs(game, x, theta)?.iter().sum())
}
