//! Ground truth for tests: the closed-form two-player example, brute-force
//! grid search over the decision set, finite-difference smoothed gradients and
//! the regression fixture file.
//!
//! Nothing in here is used by the algorithms themselves.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::consensus::centralized_ne;
use crate::error::{Error, Result};
use crate::experiments::{build_ev_game, EvChargingParams};
use crate::game::{player_costs, pseudo_gradient, social_cost, BoxSet, Game, GameSpec, PlayerCost, QuadraticGame, QuadraticGameParams};
use crate::smoothing::{check_xi, Moments, SmoothedGradientEstimate, SphereSampler};

/// Lower end of both players' strategy interval in the two-player example.
pub const EXAMPLE1_LOWER: f64 = 2.0 / 3.0;

/// Largest decision dimension accepted by [`grid_search_theta`].
pub const GRID_MAX_THETA_DIM: usize = 2;

/// Iteration budget of the full-information solves inside the oracles.
pub const ORACLE_MAX_ITER: usize = 1_000_000;

fn example1_sets() -> (Vec<BoxSet>, BoxSet) {
    let x = BoxSet::uniform(1, EXAMPLE1_LOWER, 1.0).expect("valid interval");
    (vec![x.clone(), x], BoxSet::uniform(1, 0.0, 1.0).expect("valid interval"))
}

/// `f_i = x_i^2 - 2 x_{-i} - 2 x_i theta` on `[2/3, 1]^2`, `Theta = [0, 1]`,
/// from closures.
pub fn example1_spec() -> GameSpec {
    let (sets, theta_set) = example1_sets();
    let cost = |i: usize| -> crate::game::CostFn {
        Box::new(move |x: &[f64], t: &[f64]| x[i] * x[i] - 2.0 * x[1 - i] - 2.0 * x[i] * t[0])
    };
    let grad = |i: usize| -> crate::game::GradFn {
        Box::new(move |x: &[f64], t: &[f64], out: &mut [f64]| out[0] = 2.0 * x[i] - 2.0 * t[0])
    };
    GameSpec::new(vec![cost(0), cost(1)], vec![grad(0), grad(1)], sets, theta_set).expect("two players")
}

/// The same game in quadratic form (`M = 2I`, `T = -2 * 1`, `r = 0`).
pub fn example1_quadratic() -> QuadraticGame {
    let costs = (0..2)
        .map(|i| {
            let mut c = PlayerCost::zeros(2, 1);
            c.quad[(i, i)] = 2.0;
            c.bilinear[(i, 0)] = -2.0;
            c.linear[1 - i] = -2.0;
            c
        })
        .collect();
    let params = QuadraticGameParams::from_costs(vec![1, 1], 1, costs).expect("consistent dimensions");
    let (sets, theta_set) = example1_sets();
    QuadraticGame::new(params, sets, theta_set).expect("strongly monotone")
}

/// `x_i(theta) = clamp(theta, 2/3, 1)` for both players.
pub fn example1_ne(theta: f64) -> Vec<f64> {
    let v = theta.clamp(EXAMPLE1_LOWER, 1.0);
    vec![v, v]
}

/// Social cost at equilibrium: `-(8/3) theta - 16/9` on `[0, 2/3]`,
/// `-2 theta^2 - 4 theta` on `[2/3, 1]`.
pub fn example1_social(theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "closed-form social cost is defined on [0, 1], got {theta}"
        )));
    }
    Ok(if theta <= EXAMPLE1_LOWER {
        -8.0 / 3.0 * theta - 16.0 / 9.0
    } else {
        -2.0 * theta * theta - 4.0 * theta
    })
}

/// Grid points of `set`, `points_per_dim` per coordinate, lexicographic order
/// (first coordinate slowest).
pub fn theta_grid(set: &BoxSet, points_per_dim: usize) -> Vec<Vec<f64>> {
    let axis = |j: usize| -> Vec<f64> {
        let (lo, hi) = (set.lower()[j], set.upper()[j]);
        if points_per_dim <= 1 {
            return vec![lo];
        }
        (0..points_per_dim)
            .map(|p| {
                if p + 1 == points_per_dim {
                    hi
                } else {
                    lo + (hi - lo) * p as f64 / (points_per_dim - 1) as f64
                }
            })
            .collect()
    };
    let mut grid = vec![Vec::new()];
    for j in 0..set.dim() {
        let values = axis(j);
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    grid
}

/// Brute-force minimizer of `theta -> social_cost(x(theta), theta)` over a
/// grid of `theta_set`, with equilibria from [`centralized_ne`]. Ties go to
/// the lexicographically smallest grid point.
pub fn grid_search_theta(
    game: &dyn Game,
    theta_set: &BoxSet,
    grid_points_per_dim: usize,
    ne_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    if theta_set.dim() > GRID_MAX_THETA_DIM {
        return Err(Error::InvalidArgument(format!(
            "grid search is limited to decisions of dimension {GRID_MAX_THETA_DIM}, got {}",
            theta_set.dim()
        )));
    }
    if grid_points_per_dim == 0 {
        return Err(Error::InvalidArgument("grid needs at least one point".into()));
    }
    let grid = theta_grid(theta_set, grid_points_per_dim);
    let values: Vec<Result<f64>> = grid
        .par_iter()
        .map(|theta| {
            let x = centralized_ne(game, theta, ne_tol, ORACLE_MAX_ITER)?;
            social_cost(game, &x, theta)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let (i, v) = best.expect("nonempty grid");
    Ok((grid[i].clone(), v))
}

/// Central differences (step `h`) of the ball-smoothed value of `f`, with the
/// same ball draws on both sides of every coordinate.
pub fn fd_smoothed_gradient<F>(
    f: F,
    theta: &[f64],
    xi: f64,
    h: f64,
    samples: usize,
    sampler: &mut SphereSampler,
) -> Result<SmoothedGradientEstimate>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    check_xi(xi)?;
    if !(h > 0.0) || samples == 0 {
        return Err(Error::InvalidArgument("need h > 0 and at least one sample".into()));
    }
    let n = theta.len();
    let mut moments = Moments::new(n);
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut diff = vec![0.0; n];
    for _ in 0..samples {
        let nu = sampler.sample_unit_ball();
        for j in 0..n {
            for k in 0..n {
                let base = theta[k] + xi * nu[k];
                let shift = if k == j { h } else { 0.0 };
                plus[k] = base + shift;
                minus[k] = base - shift;
            }
            diff[j] = (f(&plus)? - f(&minus)?) / (2.0 * h);
        }
        moments.push(&diff);
    }
    Ok(SmoothedGradientEstimate {
        mean: moments.mean(),
        std_err: moments.std_err(),
        samples,
        moreau_term: vec![0.0; n],
    })
}

/// One fixture entry: an oracle evaluated at a recorded input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub oracle: String,
    pub input: serde_json::Value,
    pub value: serde_json::Value,
}

/// Regression fixtures keyed by `oracle:sha256(input)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    pub generator: String,
    pub version: String,
    pub entries: BTreeMap<String, FixtureEntry>,
}

impl FixtureFile {
    fn insert(&mut self, oracle: &str, input: serde_json::Value, value: serde_json::Value) {
        self.entries.insert(
            fixture_key(oracle, &input),
            FixtureEntry {
                oracle: oracle.to_string(),
                input,
                value,
            },
        );
    }

    pub fn get(&self, oracle: &str, input: &serde_json::Value) -> Option<&serde_json::Value> {
        self.entries.get(&fixture_key(oracle, input)).map(|e| &e.value)
    }
}

pub fn fixture_key(oracle: &str, input: &serde_json::Value) -> String {
    let digest = Sha256::digest(input.to_string().as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("{oracle}:{hex}")
}

/// Grid resolution of the frozen EV-charging optimum.
pub const EV_GRID_POINTS: usize = 401;

/// Tolerance of the equilibrium solves behind the fixtures.
pub const FIXTURE_NE_TOL: f64 = 1e-11;

/// Re-run every oracle that backs a frozen regression value.
pub fn generate_fixtures() -> Result<FixtureFile> {
    use serde_json::json;
    let mut file = FixtureFile {
        generator: "socialopt fixtures".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        entries: BTreeMap::new(),
    };
    for k in 0..=10 {
        let theta = k as f64 / 10.0;
        file.insert("example1_ne", json!({ "theta": theta }), json!(example1_ne(theta)));
        file.insert("example1_social", json!({ "theta": theta }), json!(example1_social(theta)?));
    }
    let game = example1_quadratic();
    let (theta, value) = grid_search_theta(&game, game.theta_set(), 1001, FIXTURE_NE_TOL)?;
    file.insert(
        "grid_search_theta",
        json!({ "game": "example1", "points": 1001 }),
        json!({ "theta": theta, "social_cost": value }),
    );

    let params = EvChargingParams::default();
    let (_, ev) = build_ev_game(&params)?;
    let n = ev.total_dim();
    let zero = vec![0.0; n];
    file.insert(
        "ev_player_costs",
        json!({ "x": "zeros", "theta": 0.0 }),
        json!(player_costs(&ev, &zero, &[0.0])?),
    );
    file.insert(
        "ev_pseudo_gradient",
        json!({ "x": "zeros", "theta": 1.0 }),
        json!(pseudo_gradient(&ev, &zero, &[1.0])?),
    );
    let (theta, value) = grid_search_theta(&ev, ev.theta_set(), EV_GRID_POINTS, FIXTURE_NE_TOL)?;
    file.insert(
        "grid_search_theta",
        json!({ "game": "ev_charging", "params": params, "points": EV_GRID_POINTS }),
        json!({ "theta": theta, "social_cost": value }),
    );
    Ok(file)
}

/// Location of the committed fixture file.
pub fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("oracles.json")
}
