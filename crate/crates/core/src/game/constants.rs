use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadratic::spectral_norm;
use super::{BoxSet, QuadraticGameParams};
use crate::error::{check_dim, Error, Result};

/// Largest joint-strategy dimension for which Lipschitz constants are
/// obtained by exact corner enumeration.
pub const EXACT_CORNER_LIMIT: usize = 20;

// one extra coordinate for a scalar theta
const EXACT_DOMAIN_LIMIT: usize = EXACT_CORNER_LIMIT + 1;

/// Regularity constants of a game over its (enlarged) domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    /// Strong monotonicity modulus of the pseudo-gradient.
    pub mu: f64,
    /// Lipschitz modulus of the pseudo-gradient in `x`.
    pub l: f64,
    /// Lipschitz modulus of the extended pseudo-gradient, `mu <= l' <= l`.
    pub l_prime: f64,
    /// Lipschitz modulus of the pseudo-gradient in `theta`.
    pub l_theta: f64,
    /// Lipschitz constant of each cost in `x` over the strategy set.
    pub cost_lipschitz_x: f64,
    /// Lipschitz constant of each cost in `theta`.
    pub cost_lipschitz_theta: f64,
    /// Bound on the joint-strategy norm over the strategy set.
    pub strategy_bound: f64,
    /// Lipschitz constant of `theta -> f_i(x(theta), theta)`.
    pub lipschitz_f: f64,
}

impl GameConstants {
    /// Build from the primitive constants; `l' = l` and `L_F` is composed.
    pub fn new(
        mu: f64,
        l: f64,
        l_theta: f64,
        cost_lipschitz_x: f64,
        cost_lipschitz_theta: f64,
        strategy_bound: f64,
    ) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::NotStronglyMonotone { mu });
        }
        let values = [l, l_theta, cost_lipschitz_x, cost_lipschitz_theta, strategy_bound];
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || l < mu {
            return Err(Error::InvalidArgument(format!(
                "game constants must be finite, nonnegative and satisfy mu <= l: {values:?}"
            )));
        }
        Ok(Self {
            mu,
            l,
            l_prime: l,
            l_theta,
            cost_lipschitz_x,
            cost_lipschitz_theta,
            strategy_bound,
            lipschitz_f: cost_lipschitz_x * l_theta / mu + cost_lipschitz_theta,
        })
    }
}

/// Exact constants of a quadratic game.
///
/// The cost Lipschitz constants are certified over `X x (Theta + r B)`, with
/// `r = theta_probe_radius`; the ball is covered by its bounding box.
pub fn estimate_constants(
    game: &QuadraticGameParams,
    strategy_sets: &[BoxSet],
    theta_set: &BoxSet,
    theta_probe_radius: f64,
) -> Result<GameConstants> {
    check_dim("strategy sets", game.dims().len(), strategy_sets.len())?;
    check_dim("theta set", game.theta_dim(), theta_set.dim())?;
    let mu = game.monotonicity_modulus();
    if !(mu > 0.0) {
        return Err(Error::NotStronglyMonotone { mu });
    }
    let l = game.lipschitz_modulus();
    let l_theta = spectral_norm(game.t());

    let joint = BoxSet::product(strategy_sets)?;
    check_dim("joint strategy set", game.m().ncols(), joint.dim())?;
    let theta_box = theta_set.enlarged(theta_probe_radius)?;
    let domain = BoxSet::product([&joint, &theta_box])?;

    let mut lip_x: f64 = 0.0;
    let mut lip_theta: f64 = 0.0;
    for cost in game.costs() {
        let mut grad_x = cost.quad.clone().resize_horizontally(domain.dim(), 0.0);
        grad_x
            .columns_mut(joint.dim(), theta_box.dim())
            .copy_from(&cost.bilinear);
        lip_x = lip_x.max(max_affine_norm(&grad_x, &cost.linear, &domain));
        lip_theta = lip_theta.max(max_affine_norm(
            &cost.bilinear.transpose(),
            &cost.theta_linear,
            &joint,
        ));
    }

    GameConstants::new(mu, l, l_theta, lip_x, lip_theta, joint.max_norm())
}

/// `max_{z in domain} |A z + c|`.
///
/// Exact (corner enumeration in Gray-code order) for small domains, otherwise
/// the per-row maxima `|c_j + A_j mid| + sum_k |A_jk| half_k`, which bound the
/// norm from above.
fn max_affine_norm(a: &DMatrix<f64>, c: &DVector<f64>, domain: &BoxSet) -> f64 {
    if domain.dim() <= EXACT_DOMAIN_LIMIT {
        max_affine_norm_corners(a, c, domain)
    } else {
        max_affine_norm_separable(a, c, domain)
    }
}

fn max_affine_norm_corners(a: &DMatrix<f64>, c: &DVector<f64>, domain: &BoxSet) -> f64 {
    let (lo, hi) = (domain.lower(), domain.upper());
    let dim = domain.dim();
    let mut value = c + a * DVector::from_column_slice(lo);
    let mut at_upper = vec![false; dim];
    let mut best = value.norm_squared();
    let mut best_corner = at_upper.clone();
    for step in 1u64..(1u64 << dim) {
        let j = step.trailing_zeros() as usize;
        let delta = if at_upper[j] { lo[j] - hi[j] } else { hi[j] - lo[j] };
        at_upper[j] = !at_upper[j];
        value.axpy(delta, &a.column(j), 1.0);
        let norm = value.norm_squared();
        if norm > best {
            best = norm;
            best_corner.copy_from_slice(&at_upper);
        }
    }
    let corner: Vec<f64> = best_corner
        .iter()
        .enumerate()
        .map(|(j, &up)| if up { hi[j] } else { lo[j] })
        .collect();
    (c + a * DVector::from_vec(corner)).norm()
}

fn max_affine_norm_separable(a: &DMatrix<f64>, c: &DVector<f64>, domain: &BoxSet) -> f64 {
    let mid = DVector::from_vec(domain.midpoint());
    let half: Vec<f64> = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(lo, hi)| 0.5 * (hi - lo))
        .collect();
    let center = c + a * mid;
    center
        .iter()
        .enumerate()
        .map(|(row, v)| {
            let spread: f64 = half.iter().enumerate().map(|(k, h)| a[(row, k)].abs() * h).sum();
            (v.abs() + spread).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PlayerCost;
    use crate::oracles::example1_quadratic;
    use crate::Game;

    #[test]
    fn example1_constants() {
        let game = example1_quadratic();
        let c = estimate_constants(game.params(), game.strategy_sets(), game.theta_set(), 1e-3).unwrap();
        assert!((c.mu - 2.0).abs() < 1e-12);
        assert!((c.l - 2.0).abs() < 1e-12);
        assert!((c.l_theta - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.l_prime, c.l);
        // grad_x f_1 = (2 x_1 - 2 theta, -2), largest at x_1 = 1, theta = -r.
        let expected_lx = ((2.0 + 2e-3f64).powi(2) + 4.0).sqrt();
        assert!((c.cost_lipschitz_x - expected_lx).abs() < 1e-12);
        // d f_i / d theta = -2 x_i.
        assert!((c.cost_lipschitz_theta - 2.0).abs() < 1e-12);
        assert!((c.strategy_bound - 2f64.sqrt()).abs() < 1e-12);
        let lf = c.cost_lipschitz_x * c.l_theta / c.mu + c.cost_lipschitz_theta;
        assert_eq!(c.lipschitz_f, lf);
    }

    #[test]
    fn identity_game_constants() {
        let costs = (0..2)
            .map(|i| {
                let mut c = PlayerCost::zeros(2, 1);
                c.quad[(i, i)] = 1.0;
                c
            })
            .collect();
        let params = QuadraticGameParams::from_costs(vec![1, 1], 1, costs).unwrap();
        let sets = vec![BoxSet::uniform(1, -1.0, 1.0).unwrap(); 2];
        let c = estimate_constants(&params, &sets, &BoxSet::uniform(1, 0.0, 1.0).unwrap(), 0.0).unwrap();
        assert!((c.mu - 1.0).abs() < 1e-12);
        assert!((c.l - 1.0).abs() < 1e-12);
        assert_eq!(c.l_theta, 0.0);
        assert!(c.mu <= c.l_prime && c.l_prime <= c.l);
    }

    #[test]
    fn separable_bound_dominates_corner_maximum() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 0.0, -1.5]);
        let c = DVector::from_vec(vec![0.2, -0.7]);
        let domain = BoxSet::new(vec![-1.0, 0.0, 2.0], vec![1.5, 1.0, 3.0]).unwrap();
        let exact = max_affine_norm_corners(&a, &c, &domain);
        let bound = max_affine_norm_separable(&a, &c, &domain);
        assert!(bound >= exact - 1e-12);
        // brute force over corners, independent of the Gray-code walk
        let mut brute: f64 = 0.0;
        for mask in 0..8 {
            let z: Vec<f64> = (0..3)
                .map(|j| if mask & (1 << j) != 0 { domain.upper()[j] } else { domain.lower()[j] })
                .collect();
            brute = brute.max((&c + &a * DVector::from_vec(z)).norm());
        }
        assert!((brute - exact).abs() < 1e-12);
    }
}
