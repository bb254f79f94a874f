//! Distributed Nash-equilibrium seeking under partial-decision information.
//!
//! Every player keeps an estimate of the whole joint strategy. One round
//! mixes estimates over the communication graph, moves the player's own block
//! along its partial gradient evaluated at the mixed estimate, and keeps the
//! mixed estimates of everybody else. With a step below [`gamma_bound`] the
//! stacked estimates contract linearly towards `1_N (x) x(theta)` at rate
//! [`q_factor`], which yields the [`epsilon_bound`] accuracy certificate.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::game::{check_point, pseudo_gradient_into, CommGraph, Game, GameConstants};

/// Probe step of the natural-map residual reported in [`NeResult`].
pub const RESIDUAL_PROBE: f64 = 1.0;

/// Below this, `sigma_bar` is treated as zero (consensus exact in one hop).
pub const SIGMA_ZERO: f64 = 1e-12;

/// Supremum of certified inner step sizes.
///
/// `min{1, s/(3l), 2mu/l^2, 2mu(1 - s^2)/a}` with `s = sigma_bar` and
/// `a = s^2 (2ll' + l'^2 + 4mu l' + 2l^2) + 2(l^2 l'^2 + mu l'^2 + 2l^2 l'^2) s^2 + 2 l^2 l'^2 s^2`.
/// Steps must be strictly below the returned value. For `sigma_bar = 0` the
/// consensus terms are dropped and the bound is `min{1, 2mu/l^2}`.
pub fn gamma_bound(constants: &GameConstants, sigma_bar: f64) -> Result<f64> {
    let GameConstants { mu, l, l_prime: lp, .. } = *constants;
    if !(0.0..1.0).contains(&sigma_bar) {
        return Err(Error::InvalidArgument(format!(
            "sigma_bar must lie in [0, 1), got {sigma_bar}"
        )));
    }
    let monotone = 2.0 * mu / (l * l);
    let bound = if sigma_bar < SIGMA_ZERO {
        monotone.min(1.0)
    } else {
        let s2 = sigma_bar * sigma_bar;
        let a = s2 * (2.0 * l * lp + lp * lp + 4.0 * mu * lp + 2.0 * l * l)
            + 2.0 * (l * l * lp * lp + mu * lp * lp + 2.0 * l * l * lp * lp) * s2
            + 2.0 * l * l * lp * lp * s2;
        [1.0, sigma_bar / (3.0 * l), monotone, 2.0 * mu * (1.0 - s2) / a]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };
    if bound > 0.0 && bound.is_finite() {
        Ok(bound)
    } else {
        Err(Error::InvalidArgument(format!("step-size bound is not positive: {bound}")))
    }
}

/// The symmetric 2x2 contraction matrix `Q_gamma`, row-major.
pub fn q_matrix(gamma: f64, constants: &GameConstants, n_players: usize, sigma_bar: f64) -> [[f64; 2]; 2] {
    let GameConstants { mu, l, l_prime: lp, .. } = *constants;
    let n = n_players as f64;
    let q11 = 1.0 - 2.0 * gamma * mu / n + gamma * gamma * l * l / n;
    let q12 = (gamma * (l + lp) + gamma * gamma * l * lp) * sigma_bar / n.sqrt();
    let q22 = (1.0 + 2.0 * gamma * l + gamma * gamma * l * l) * sigma_bar * sigma_bar;
    [[q11, q12], [q12, q22]]
}

/// Spectral norm of `Q_gamma` via the closed-form symmetric 2x2 eigenvalues.
///
/// Values `>= 1` mean the step is too large for a certificate; the caller
/// decides what to do with them.
pub fn q_factor(gamma: f64, constants: &GameConstants, n_players: usize, sigma_bar: f64) -> f64 {
    let [[a, b], [_, c]] = q_matrix(gamma, constants, n_players, sigma_bar);
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean + radius).abs().max((mean - radius).abs())
}

/// Accuracy certificate `2 (|x_0|^2 + N B_X^2) q^t` for a cold start.
pub fn epsilon_bound(init_norm_sq: f64, n_players: usize, strategy_bound: f64, q: f64, t_k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::NoCertificate { q });
    }
    let exponent = i32::try_from(t_k).unwrap_or(i32::MAX);
    Ok(2.0 * (init_norm_sq + n_players as f64 * strategy_bound * strategy_bound) * q.powi(exponent))
}

/// Stacked estimates of all players.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateState {
    // d x N: column i is player i's estimate of the joint strategy
    columns: DMatrix<f64>,
    iteration: usize,
}

impl EstimateState {
    /// Every player estimates every block at the midpoint of its box.
    pub fn cold(game: &dyn Game) -> Self {
        let mid = game.joint_set().midpoint();
        let n = game.n_players();
        Self {
            columns: DMatrix::from_fn(mid.len(), n, |r, _| mid[r]),
            iteration: 0,
        }
    }

    /// From an `N x d` matrix whose row `i` is player `i`'s estimate.
    pub fn from_rows(rows: DMatrix<f64>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial estimates must be finite".into()));
        }
        Ok(Self {
            columns: rows.transpose(),
            iteration: 0,
        })
    }

    pub fn n_players(&self) -> usize {
        self.columns.ncols()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `N x d` matrix, row `i` = player `i`'s estimate.
    pub fn estimates(&self) -> DMatrix<f64> {
        self.columns.transpose()
    }

    /// Player `i`'s estimate of the joint strategy.
    pub fn estimate(&self, player: usize) -> &[f64] {
        let d = self.columns.nrows();
        &self.columns.as_slice()[player * d..(player + 1) * d]
    }

    /// Row-concatenated estimates, length `N d`.
    pub fn stacked(&self) -> Vec<f64> {
        self.columns.as_slice().to_vec()
    }

    pub fn norm_sq(&self) -> f64 {
        self.columns.norm_squared()
    }

    /// Joint strategy made of each player's own block.
    pub fn own_strategies(&self, game: &dyn Game) -> Vec<f64> {
        let mut x = Vec::with_capacity(game.total_dim());
        for (i, (start, d)) in game.offsets().into_iter().zip(game.dims()).enumerate() {
            x.extend_from_slice(&self.estimate(i)[start..start + d]);
        }
        x
    }

    /// `max_{i,j} |x_i - x_j|` over estimate vectors.
    pub fn consensus_gap(&self) -> f64 {
        let n = self.n_players();
        let mut gap: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d2: f64 = self
                    .estimate(i)
                    .iter()
                    .zip(self.estimate(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                gap = gap.max(d2.sqrt());
            }
        }
        gap
    }

    /// `|x - 1_N (x) target|^2`.
    pub fn distance_sq_to(&self, target: &[f64]) -> f64 {
        (0..self.n_players())
            .map(|i| {
                self.estimate(i)
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Data of the cold-start accuracy certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub q: f64,
    pub strategy_bound: f64,
}

impl Certificate {
    pub fn new(gamma: f64, constants: &GameConstants, graph: &CommGraph) -> Self {
        Self {
            q: q_factor(gamma, constants, graph.n_nodes(), graph.sigma_bar()),
            strategy_bound: constants.strategy_bound,
        }
    }

    /// `2 (|x_0|^2 + N B_X^2) q^t`, or `+inf` without contraction.
    pub fn cold_bound(&self, init: &EstimateState, t: usize) -> f64 {
        epsilon_bound(init.norm_sq(), init.n_players(), self.strategy_bound, self.q, t)
            .unwrap_or(f64::INFINITY)
    }
}

/// Outcome of [`ne_seek`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeResult {
    /// Each player's own block, concatenated.
    pub x: Vec<f64>,
    /// Natural-map residual of `x` with probe [`RESIDUAL_PROBE`].
    pub residual: f64,
    pub iterations: usize,
    /// Certified bound on `|x - x(theta)|^2`; `+inf` without a certificate.
    pub epsilon_bound: f64,
    pub consensus_gap: f64,
}

/// Synchronous rounds of distributed NE seeking at a fixed `theta`.
pub struct DistributedNe<'a> {
    game: &'a dyn Game,
    mixing_t: DMatrix<f64>,
    theta: Vec<f64>,
    gamma: f64,
    offsets: Vec<usize>,
    state: EstimateState,
    grad: Vec<f64>,
}

impl<'a> DistributedNe<'a> {
    pub fn new(
        game: &'a dyn Game,
        graph: &CommGraph,
        theta: &[f64],
        gamma: f64,
        init: EstimateState,
    ) -> Result<Self> {
        check_dim("theta", game.theta_dim(), theta.len())?;
        check_dim("graph nodes", game.n_players(), graph.n_nodes())?;
        check_dim("estimate players", game.n_players(), init.n_players())?;
        check_dim("estimate length", game.total_dim(), init.columns.nrows())?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            game,
            mixing_t: graph.adjacency().transpose(),
            theta: theta.to_vec(),
            gamma,
            offsets: game.offsets(),
            grad: vec![0.0; game.dims().iter().copied().max().unwrap_or(0)],
            state: init,
        })
    }

    pub fn state(&self) -> &EstimateState {
        &self.state
    }

    pub fn into_state(self) -> EstimateState {
        self.state
    }

    /// One round for all players.
    pub fn step(&mut self) -> Result<()> {
        let mixed = &self.state.columns * &self.mixing_t;
        let mut next = mixed.clone();
        let d = mixed.nrows();
        for (i, &start) in self.offsets.iter().enumerate() {
            let di = self.game.dims()[i];
            let estimate = &mixed.as_slice()[i * d..(i + 1) * d];
            let grad = &mut self.grad[..di];
            self.game.partial_gradient(i, estimate, &self.theta, grad);
            let own = &mut next.as_mut_slice()[i * d + start..i * d + start + di];
            for (o, g) in own.iter_mut().zip(grad.iter()) {
                *o -= self.gamma * g;
            }
            self.game.strategy_set(i).project_in_place(own);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: self.state.iteration,
                context: "non-finite estimate in distributed NE seeking".into(),
            });
        }
        self.state.columns = next;
        self.state.iteration += 1;
        Ok(())
    }
}

/// Run exactly `t_max` rounds from `init`.
///
/// A step at or above the certified bound is allowed; the certificate then
/// usually reports `+inf`.
pub fn ne_seek(
    game: &dyn Game,
    graph: &CommGraph,
    theta: &[f64],
    gamma: f64,
    t_max: usize,
    init: EstimateState,
    certificate: Option<&Certificate>,
) -> Result<NeResult> {
    let init_norm_sq = init.norm_sq();
    let n = init.n_players();
    let mut solver = DistributedNe::new(game, graph, theta, gamma, init)?;
    for _ in 0..t_max {
        solver.step()?;
    }
    let state = solver.into_state();
    let x = state.own_strategies(game);
    let residual = ne_residual(game, &x, theta, RESIDUAL_PROBE)?;
    let epsilon_bound = certificate
        .and_then(|c| epsilon_bound(init_norm_sq, n, c.strategy_bound, c.q, t_max).ok())
        .unwrap_or(f64::INFINITY);
    Ok(NeResult {
        x,
        residual,
        iterations: t_max,
        epsilon_bound,
        consensus_gap: state.consensus_gap(),
    })
}

/// Certificate for a warm start: the initial distance to `1 (x) x(theta)` is
/// bounded through the natural-map error bound
/// `|y - x(theta)| <= (1 + p l) / (p mu) |r_p(y)|` at the warm own strategies `y`.
pub fn warm_start_epsilon_bound(
    game: &dyn Game,
    init: &EstimateState,
    theta: &[f64],
    constants: &GameConstants,
    q: f64,
    t: usize,
) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::NoCertificate { q });
    }
    let y = init.own_strategies(game);
    let probe = RESIDUAL_PROBE;
    let residual = ne_residual(game, &y, theta, probe)?;
    let to_solution = (1.0 + probe * constants.l) / (probe * constants.mu) * residual;
    let spread = init.distance_sq_to(&y).sqrt();
    let initial = spread + (init.n_players() as f64).sqrt() * to_solution;
    Ok(initial * initial * q.powi(i32::try_from(t).unwrap_or(i32::MAX)))
}

/// Natural-map residual `|x - Pi_X(x - p G(x, theta))|`; zero exactly at the NE.
pub fn ne_residual(game: &dyn Game, x: &[f64], theta: &[f64], gamma_probe: f64) -> Result<f64> {
    check_point(game, x, theta)?;
    if !(gamma_probe > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "residual probe must be positive, got {gamma_probe}"
        )));
    }
    let mut g = vec![0.0; x.len()];
    pseudo_gradient_into(game, x, theta, &mut g);
    Ok(natural_step_distance(game, x, &g, gamma_probe))
}

fn natural_step_distance(game: &dyn Game, x: &[f64], g: &[f64], step: f64) -> f64 {
    let mut sq = 0.0;
    let mut start = 0;
    let mut trial = Vec::new();
    for (i, &d) in game.dims().iter().enumerate() {
        trial.clear();
        trial.extend((start..start + d).map(|k| x[k] - step * g[k]));
        game.strategy_set(i).project_in_place(&mut trial);
        sq += trial
            .iter()
            .zip(&x[start..start + d])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        start += d;
    }
    sq.sqrt()
}

/// Full-information projected pseudo-gradient iteration with step
/// `min(1, mu / l^2)`, stopped once the residual falls below `tol`.
pub fn centralized_ne(game: &dyn Game, theta: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let ops = game.operator_constants().ok_or_else(|| {
        Error::InvalidArgument("the full-information solver needs the operator constants mu and l".into())
    })?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let joint = game.joint_set();
    let mut x = joint.midpoint();
    check_point(game, &x, theta)?;
    let step = (ops.mu / (ops.l * ops.l)).min(1.0);
    let mut g = vec![0.0; x.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        pseudo_gradient_into(game, &x, theta, &mut g);
        let mut next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        joint.project_in_place(&mut next);
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if !moved.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                context: "non-finite iterate in the full-information solver".into(),
            });
        }
        // |r_1(x)| <= |r_step(x)| / step for step <= 1
        residual = moved / step;
        if residual <= tol {
            return Ok(x);
        }
        x = next;
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{example1_ne, example1_quadratic, example1_spec};
    use nalgebra::Matrix2;

    fn unit_constants() -> GameConstants {
        GameConstants::new(1.0, 1.0, 0.0, 0.0, 0.0, 1.0).unwrap()
    }

    fn example1_constants() -> GameConstants {
        GameConstants::new(2.0, 2.0, 2.0 * 2f64.sqrt(), 2.0, 2.0, 2f64.sqrt()).unwrap()
    }

    #[test]
    fn gamma_bound_unit_constants() {
        // a = 9/4 + 2 + 1/2 = 19/4; min{1, 1/6, 2, 6/19} = 1/6
        let g = gamma_bound(&unit_constants(), 0.5).unwrap();
        assert!((g - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_bound_vanishes_with_sigma() {
        let c = unit_constants();
        let g = gamma_bound(&c, 1e-6).unwrap();
        assert!((g - 1e-6 / 3.0).abs() < 1e-18);
    }

    #[test]
    fn gamma_bound_degenerate_graph() {
        assert_eq!(gamma_bound(&example1_constants(), 0.0).unwrap(), 1.0);
        assert!(gamma_bound(&example1_constants(), 1.0).is_err());
    }

    #[test]
    fn q_factor_diagonal_case() {
        let c = example1_constants();
        let q = q_factor(0.3, &c, 2, 0.0);
        assert!((q - (1.0 - 2.0 * 0.3 * 2.0 / 2.0 + 0.09 * 4.0 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn q_factor_matches_eigen_decomposition() {
        // mu = l = l' = 1, N = 1, sigma = 1/2, gamma = 0.1:
        // Q = [[0.81, 0.105], [0.105, 0.3025]]
        let c = unit_constants();
        let m = q_matrix(0.1, &c, 1, 0.5);
        assert!((m[0][0] - 0.81).abs() < 1e-15);
        assert!((m[0][1] - 0.105).abs() < 1e-15);
        assert!((m[1][1] - 0.3025).abs() < 1e-15);
        let oracle = Matrix2::new(0.81, 0.105, 0.105, 0.3025)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, v: &f64| a.max(v.abs()));
        let q = q_factor(0.1, &c, 1, 0.5);
        assert!((q - oracle).abs() < 1e-14);
        assert!((q - 0.830_866_2).abs() < 1e-6);
    }

    #[test]
    fn certified_step_contracts_for_example1() {
        let c = example1_constants();
        let bound = gamma_bound(&c, 0.0).unwrap();
        assert!(q_factor(0.5 * bound, &c, 2, 0.0) < 1.0);
        // the supremum itself is not a contraction here
        assert!(q_factor(bound, &c, 2, 0.0) >= 1.0 - 1e-15);
    }

    #[test]
    fn epsilon_bound_values() {
        assert_eq!(epsilon_bound(1.0, 2, 1.0, 0.5, 0).unwrap(), 6.0);
        assert!((epsilon_bound(1.0, 2, 1.0, 0.5, 3).unwrap() - 0.75).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for t in 0..50 {
            let v = epsilon_bound(2.0, 3, 1.5, 0.9, t).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(matches!(epsilon_bound(1.0, 2, 1.0, 1.0, 3), Err(Error::NoCertificate { .. })));
    }

    #[test]
    fn zero_rounds_return_initial_strategies() {
        let game = example1_spec();
        let graph = CommGraph::complete(2).unwrap();
        let init = EstimateState::from_rows(DMatrix::from_row_slice(2, 2, &[0.7, 0.9, 0.8, 0.75])).unwrap();
        let res = ne_seek(&game, &graph, &[0.5], 0.5, 0, init, None).unwrap();
        assert_eq!(res.x, vec![0.7, 0.75]);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.epsilon_bound, f64::INFINITY);
    }

    #[test]
    fn distributed_reaches_closed_form() {
        let game = example1_spec();
        let graph = CommGraph::complete(2).unwrap();
        for (theta, expected) in [(0.9, 0.9), (0.3, 2.0 / 3.0)] {
            let res = ne_seek(&game, &graph, &[theta], 0.1, 400, EstimateState::cold(&game), None).unwrap();
            for v in &res.x {
                assert!((v - expected).abs() < 1e-6, "theta {theta}: {v}");
            }
            assert!(res.consensus_gap < 1e-6);
        }
    }

    #[test]
    fn residual_characterizes_equilibrium() {
        let game = example1_spec();
        let c = 2.0 / 3.0;
        assert!(ne_residual(&game, &[c, c], &[0.3], 0.1).unwrap() < 1e-12);
        assert!(ne_residual(&game, &[1.0, 1.0], &[0.3], 0.1).unwrap() > 0.0);
        // interior point with zero pseudo-gradient
        assert!(ne_residual(&game, &[0.8, 0.8], &[0.8], 0.1).unwrap() < 1e-15);
        // both directions on closed-form points
        for k in 0..=20 {
            let theta = k as f64 / 20.0;
            let x = example1_ne(theta);
            let r = ne_residual(&game, &x, &[theta], 0.1).unwrap();
            let g = crate::game::pseudo_gradient(&game, &x, &[theta]).unwrap();
            let fixed: Vec<f64> = game.joint_set().project(&[x[0] - 0.1 * g[0], x[1] - 0.1 * g[1]]).unwrap();
            assert!(r < 1e-12);
            assert!((fixed[0] - x[0]).abs() < 1e-12 && (fixed[1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn centralized_matches_closed_form() {
        let game = example1_quadratic();
        let x = centralized_ne(&game, &[0.8], 1e-12, 1000).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-10 && (x[1] - 0.8).abs() < 1e-10);
        let x = centralized_ne(&game, &[0.0], 1e-12, 1000).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!(centralized_ne(&example1_spec(), &[0.0], 1e-9, 10).is_err());
    }

    #[test]
    fn centralized_reports_iteration_limit() {
        let game = crate::experiments::build_ev_game(&Default::default()).unwrap().1;
        let err = centralized_ne(&game, &[2.0], 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::MaxIterations { iterations: 3, .. }));
    }

    #[test]
    fn warm_start_bound_is_valid() {
        let game = example1_quadratic();
        let graph = CommGraph::complete(2).unwrap();
        let c = example1_constants();
        let gamma = 0.25;
        let q = q_factor(gamma, &c, 2, 0.0);
        let warm = EstimateState::from_rows(DMatrix::from_row_slice(2, 2, &[0.95, 0.7, 0.9, 0.8])).unwrap();
        let theta = [0.85];
        let exact = example1_ne(0.85);
        for t in [1, 3, 8] {
            let bound = warm_start_epsilon_bound(&game, &warm, &theta, &c, q, t).unwrap();
            let res = ne_seek(&game, &graph, &theta, gamma, t, warm.clone(), None).unwrap();
            let err: f64 = res.x.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum();
            assert!(err <= bound, "t = {t}: {err} > {bound}");
        }
    }
}
