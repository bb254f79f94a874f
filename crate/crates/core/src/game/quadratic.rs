use nalgebra::{DMatrix, DVector};

use super::{BoxSet, Game, OperatorConstants};
use crate::error::{check_dim, Error, Result};

/// Coefficients of one player's cost
/// `f(x, theta) = 1/2 x'Qx + x'C theta + b'x + h'theta + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerCost {
    /// `d x d`; symmetrized on construction.
    pub quad: DMatrix<f64>,
    /// `d x n`.
    pub bilinear: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub theta_linear: DVector<f64>,
    pub constant: f64,
}

impl PlayerCost {
    pub fn zeros(d: usize, n: usize) -> Self {
        Self {
            quad: DMatrix::zeros(d, d),
            bilinear: DMatrix::zeros(d, n),
            linear: DVector::zeros(d),
            theta_linear: DVector::zeros(n),
            constant: 0.0,
        }
    }

    fn validate(&self, d: usize, n: usize) -> Result<()> {
        check_dim("quadratic term rows", d, self.quad.nrows())?;
        check_dim("quadratic term columns", d, self.quad.ncols())?;
        check_dim("bilinear term rows", d, self.bilinear.nrows())?;
        check_dim("bilinear term columns", n, self.bilinear.ncols())?;
        check_dim("linear term", d, self.linear.len())?;
        check_dim("theta linear term", n, self.theta_linear.len())
    }

    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let theta = DVector::from_column_slice(theta);
        0.5 * x.dot(&(&self.quad * &x))
            + x.dot(&(&self.bilinear * &theta))
            + self.linear.dot(&x)
            + self.theta_linear.dot(&theta)
            + self.constant
    }

    /// Gradient with respect to the full joint strategy.
    pub fn grad_x(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        &self.quad * DVector::from_column_slice(x)
            + &self.bilinear * DVector::from_column_slice(theta)
            + &self.linear
    }

    /// Gradient with respect to `theta` (independent of `theta`).
    pub fn grad_theta(&self, x: &[f64]) -> DVector<f64> {
        self.bilinear.transpose() * DVector::from_column_slice(x) + &self.theta_linear
    }
}

/// Quadratic game data: per-player costs and the affine pseudo-gradient
/// `G(x, theta) = M x + T theta + r` they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGameParams {
    m: DMatrix<f64>,
    t: DMatrix<f64>,
    r: DVector<f64>,
    costs: Vec<PlayerCost>,
    dims: Vec<usize>,
}

impl QuadraticGameParams {
    /// Assemble from per-player costs; `M`, `T`, `r` are the own-block rows of
    /// each player's gradient.
    pub fn from_costs(dims: Vec<usize>, theta_dim: usize, costs: Vec<PlayerCost>) -> Result<Self> {
        check_dim("player costs", dims.len(), costs.len())?;
        if dims.is_empty() || dims.contains(&0) || theta_dim == 0 {
            return Err(Error::InvalidArgument(
                "players and theta need positive dimensions".into(),
            ));
        }
        let d: usize = dims.iter().sum();
        let mut costs = costs;
        for cost in &mut costs {
            cost.validate(d, theta_dim)?;
            let sym = (&cost.quad + cost.quad.transpose()) * 0.5;
            cost.quad = sym;
        }
        let mut m = DMatrix::zeros(d, d);
        let mut t = DMatrix::zeros(d, theta_dim);
        let mut r = DVector::zeros(d);
        let mut start = 0;
        for (cost, &di) in costs.iter().zip(&dims) {
            for row in start..start + di {
                m.row_mut(row).copy_from(&cost.quad.row(row));
                t.row_mut(row).copy_from(&cost.bilinear.row(row));
                r[row] = cost.linear[row];
            }
            start += di;
        }
        Ok(Self { m, t, r, costs, dims })
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn costs(&self) -> &[PlayerCost] {
        &self.costs
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn theta_dim(&self) -> usize {
        self.t.ncols()
    }

    /// `M x + T theta + r`.
    pub fn affine_pseudo_gradient(&self, x: &[f64], theta: &[f64]) -> DVector<f64> {
        &self.m * DVector::from_column_slice(x)
            + &self.t * DVector::from_column_slice(theta)
            + &self.r
    }

    /// Smallest eigenvalue of the symmetric part of `M`.
    pub fn monotonicity_modulus(&self) -> f64 {
        let sym = (&self.m + self.m.transpose()) * 0.5;
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Spectral norm of `M`.
    pub fn lipschitz_modulus(&self) -> f64 {
        spectral_norm(&self.m)
    }
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Quadratic game with box strategy sets and a box regulator set.
#[derive(Debug, Clone)]
pub struct QuadraticGame {
    params: QuadraticGameParams,
    strategy_sets: Vec<BoxSet>,
    theta_set: BoxSet,
    operator: OperatorConstants,
}

impl QuadraticGame {
    /// Fails with [`Error::NotStronglyMonotone`] unless the symmetric part of
    /// `M` is positive definite.
    pub fn new(params: QuadraticGameParams, strategy_sets: Vec<BoxSet>, theta_set: BoxSet) -> Result<Self> {
        check_dim("strategy sets", params.dims.len(), strategy_sets.len())?;
        for (set, &d) in strategy_sets.iter().zip(&params.dims) {
            check_dim("strategy set", d, set.dim())?;
        }
        check_dim("theta set", params.theta_dim(), theta_set.dim())?;
        let mu = params.monotonicity_modulus();
        if !(mu > 0.0) {
            return Err(Error::NotStronglyMonotone { mu });
        }
        let l = params.lipschitz_modulus();
        Ok(Self {
            params,
            strategy_sets,
            theta_set,
            operator: OperatorConstants { mu, l },
        })
    }

    pub fn params(&self) -> &QuadraticGameParams {
        &self.params
    }

    pub fn strategy_sets(&self) -> &[BoxSet] {
        &self.strategy_sets
    }
}

impl Game for QuadraticGame {
    fn dims(&self) -> &[usize] {
        &self.params.dims
    }

    fn theta_dim(&self) -> usize {
        self.params.theta_dim()
    }

    fn cost(&self, player: usize, x: &[f64], theta: &[f64]) -> f64 {
        self.params.costs[player].eval(x, theta)
    }

    fn partial_gradient(&self, player: usize, x: &[f64], theta: &[f64], out: &mut [f64]) {
        let start: usize = self.params.dims[..player].iter().sum();
        let (m, t, r) = (&self.params.m, &self.params.t, &self.params.r);
        for (k, o) in out.iter_mut().enumerate() {
            let row = start + k;
            let mut acc = r[row];
            for (j, xj) in x.iter().enumerate() {
                acc += m[(row, j)] * xj;
            }
            for (j, th) in theta.iter().enumerate() {
                acc += t[(row, j)] * th;
            }
            *o = acc;
        }
    }

    fn strategy_set(&self, player: usize) -> &BoxSet {
        &self.strategy_sets[player]
    }

    fn theta_set(&self) -> &BoxSet {
        &self.theta_set
    }

    fn operator_constants(&self) -> Option<OperatorConstants> {
        Some(self.operator)
    }

    fn as_quadratic(&self) -> Option<&QuadraticGame> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::pseudo_gradient;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `f_i = 1/2 x_i^2`, so `M = I`, `T = 0`, `r = 0`.
    fn identity_game(n: usize) -> QuadraticGame {
        let costs = (0..n)
            .map(|i| {
                let mut c = PlayerCost::zeros(n, 1);
                c.quad[(i, i)] = 1.0;
                c
            })
            .collect();
        let params = QuadraticGameParams::from_costs(vec![1; n], 1, costs).unwrap();
        QuadraticGame::new(
            params,
            vec![BoxSet::uniform(1, -10.0, 10.0).unwrap(); n],
            BoxSet::uniform(1, 0.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_pseudo_gradient() {
        let game = identity_game(3);
        let x = [0.3, -1.7, 4.2];
        assert_eq!(pseudo_gradient(&game, &x, &[0.5]).unwrap(), x.to_vec());
        assert_eq!(game.params().m(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn rejects_non_monotone() {
        let mut c0 = PlayerCost::zeros(2, 1);
        c0.quad[(0, 0)] = 1.0;
        c0.quad[(0, 1)] = 3.0;
        let mut c1 = PlayerCost::zeros(2, 1);
        c1.quad[(1, 1)] = 1.0;
        c1.quad[(1, 0)] = 3.0;
        let params = QuadraticGameParams::from_costs(vec![1, 1], 1, vec![c0, c1]).unwrap();
        let sets = vec![BoxSet::uniform(1, 0.0, 1.0).unwrap(); 2];
        let err = QuadraticGame::new(params, sets, BoxSet::uniform(1, 0.0, 1.0).unwrap());
        assert!(matches!(err, Err(Error::NotStronglyMonotone { .. })));
    }

    fn random_game(seed: u64) -> QuadraticGame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = vec![2, 1, 2];
        let d = 5;
        let n = 2;
        let costs = (0..dims.len())
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                PlayerCost {
                    quad: &a * a.transpose() + DMatrix::identity(d, d) * 4.0,
                    bilinear: DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0)),
                    linear: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                    theta_linear: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                    constant: rng.random_range(-1.0..1.0),
                }
            })
            .collect();
        let params = QuadraticGameParams::from_costs(dims.clone(), n, costs).unwrap();
        let sets = dims.iter().map(|&k| BoxSet::uniform(k, -1.0, 1.0).unwrap()).collect();
        QuadraticGame::new(params, sets, BoxSet::uniform(n, 0.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn trait_gradient_matches_affine_form() {
        let game = random_game(11);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let th: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = pseudo_gradient(&game, &x, &th).unwrap();
            let b = game.params().affine_pseudo_gradient(&x, &th);
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn own_block_gradient_matches_finite_differences() {
        let game = random_game(5);
        let x = [0.1, -0.4, 0.7, 0.2, -0.9];
        let th = [0.3, 0.6];
        let g = pseudo_gradient(&game, &x, &th).unwrap();
        let offsets = game.offsets();
        let h = 1e-6;
        for (i, &start) in offsets.iter().enumerate() {
            for k in 0..game.dims()[i] {
                let mut xp = x;
                let mut xm = x;
                xp[start + k] += h;
                xm[start + k] -= h;
                let fd = (game.cost(i, &xp, &th) - game.cost(i, &xm, &th)) / (2.0 * h);
                assert!((fd - g[start + k]).abs() < 1e-7, "player {i} coord {k}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn strong_monotonicity_holds_on_random_pairs(
            seed in 0u64..50,
            xs in proptest::collection::vec(-5.0..5.0f64, 10),
            th in proptest::collection::vec(-2.0..2.0f64, 2),
        ) {
            let game = random_game(seed);
            let mu = game.operator_constants().unwrap().mu;
            let (x, y) = xs.split_at(5);
            let gx = game.params().affine_pseudo_gradient(x, &th);
            let gy = game.params().affine_pseudo_gradient(y, &th);
            let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let lhs: f64 = (gx - gy).iter().zip(&diff).map(|(g, d)| g * d).sum();
            let rhs = mu * diff.iter().map(|d| d * d).sum::<f64>();
            prop_assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
