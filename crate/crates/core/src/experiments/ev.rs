//! Aggregative electric-vehicle charging game.
//!
//! Player `i` (1-based) pays
//! `c_i |x_i - d_i 1|^2 + a_i 1'x_i + lambda |x_i - xbar|^2 + r theta 1'x_i`
//! with `c_i = 4 + i`, `d_i = 7 + 2i`, `a_i = 10 + i` and `xbar` the
//! coordinate-wise mean of all players' schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BoxSet, CostFn, Game, GameSpec, GradFn, PlayerCost, QuadraticGame, QuadraticGameParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvChargingParams {
    pub n_players: usize,
    /// Charging periods per player.
    pub dim: usize,
    pub lambda: f64,
    pub r: f64,
    /// Upper charging limit per period; the lower limit is 0.
    pub x_upper: f64,
    pub theta_lower: f64,
    pub theta_upper: f64,
}

impl Default for EvChargingParams {
    fn default() -> Self {
        Self {
            n_players: 10,
            dim: 1,
            lambda: 0.1,
            r: 1.0,
            x_upper: 25.0,
            theta_lower: 1.0,
            theta_upper: 3.0,
        }
    }
}

impl EvChargingParams {
    /// `c_i`, with `player` 0-based.
    pub fn c(player: usize) -> f64 {
        5.0 + player as f64
    }

    /// Target demand `d_i`.
    pub fn target(player: usize) -> f64 {
        9.0 + 2.0 * player as f64
    }

    /// `a_i`.
    pub fn a(player: usize) -> f64 {
        11.0 + player as f64
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_players == 0 {
            v.push("game.params.n_players must be positive".into());
        }
        if self.dim == 0 {
            v.push("game.params.dim must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            v.push(format!("game.params.lambda must be nonnegative, got {}", self.lambda));
        }
        if !self.r.is_finite() {
            v.push("game.params.r must be finite".into());
        }
        if !(self.x_upper >= 0.0 && self.x_upper.is_finite()) {
            v.push(format!("game.params.x_upper must be nonnegative, got {}", self.x_upper));
        }
        if !(self.theta_lower <= self.theta_upper) {
            v.push(format!(
                "game.params: empty decision interval [{}, {}]",
                self.theta_lower, self.theta_upper
            ));
        }
        v
    }
}

/// Closure and quadratic representations of the charging game.
pub fn build_ev_game(params: &EvChargingParams) -> Result<(GameSpec, QuadraticGame)> {
    let violations = params.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let EvChargingParams {
        n_players: n,
        dim,
        lambda,
        r,
        ..
    } = *params;
    let sets = vec![BoxSet::uniform(dim, 0.0, params.x_upper)?; n];
    let theta_set = BoxSet::uniform(1, params.theta_lower, params.theta_upper)?;
    let nf = n as f64;

    let mut costs = Vec::with_capacity(n);
    for i in 0..n {
        let (c, target, a) = (EvChargingParams::c(i), EvChargingParams::target(i), EvChargingParams::a(i));
        let mut cost = PlayerCost::zeros(n * dim, 1);
        for k in 0..dim {
            let own = i * dim + k;
            cost.quad[(own, own)] += 2.0 * c;
            // lambda (w'y)^2 with w = e_i - 1/N on period k
            for j in 0..n {
                for l in 0..n {
                    let wj = f64::from(u8::from(j == i)) - 1.0 / nf;
                    let wl = f64::from(u8::from(l == i)) - 1.0 / nf;
                    cost.quad[(j * dim + k, l * dim + k)] += 2.0 * lambda * wj * wl;
                }
            }
            cost.linear[own] = a - 2.0 * c * target;
            cost.bilinear[(own, 0)] = r;
        }
        cost.constant = dim as f64 * c * target * target;
        costs.push(cost);
    }
    let params_q = QuadraticGameParams::from_costs(vec![dim; n], 1, costs)?;
    let quadratic = QuadraticGame::new(params_q, sets.clone(), theta_set.clone())?;

    let mean = move |x: &[f64], k: usize| (0..n).map(|j| x[j * dim + k]).sum::<f64>() / nf;
    let cost_fns: Vec<CostFn> = (0..n)
        .map(|i| -> CostFn {
            let (c, target, a) = (EvChargingParams::c(i), EvChargingParams::target(i), EvChargingParams::a(i));
            Box::new(move |x: &[f64], theta: &[f64]| {
                (0..dim)
                    .map(|k| {
                        let y = x[i * dim + k];
                        let dev = y - mean(x, k);
                        c * (y - target).powi(2) + a * y + lambda * dev * dev + r * theta[0] * y
                    })
                    .sum()
            })
        })
        .collect();
    let grad_fns: Vec<GradFn> = (0..n)
        .map(|i| -> GradFn {
            let (c, target, a) = (EvChargingParams::c(i), EvChargingParams::target(i), EvChargingParams::a(i));
            Box::new(move |x: &[f64], theta: &[f64], out: &mut [f64]| {
                for (k, o) in out.iter_mut().enumerate() {
                    let y = x[i * dim + k];
                    let dev = y - mean(x, k);
                    *o = 2.0 * c * (y - target) + a + 2.0 * lambda * (1.0 - 1.0 / nf) * dev + r * theta[0];
                }
            })
        })
        .collect();
    let ops = quadratic.operator_constants().expect("quadratic games carry their moduli");
    let spec = GameSpec::new(cost_fns, grad_fns, sets, theta_set)?.with_operator_constants(ops.mu, ops.l)?;
    Ok((spec, quadratic))
}
