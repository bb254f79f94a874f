//! Uniform smoothing, the two-point sphere estimator, Moreau smoothing of the
//! feasible-set indicator and Monte-Carlo estimates of the smoothed gradient.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::game::{social_cost, BoxSet, Game};

/// Draws per worker chunk in [`mc_stationarity_par`].
pub const CHUNK_SAMPLES: usize = 1024;

/// Seeded source of sphere and ball directions.
#[derive(Debug, Clone)]
pub struct SphereSampler {
    rng: ChaCha8Rng,
    dim: usize,
}

impl SphereSampler {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        Self::with_stream(dim, seed, 0)
    }

    /// Independent sampler sharing `seed` but reading ChaCha stream `stream`.
    pub fn with_stream(dim: usize, seed: u64, stream: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("sampler dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self { rng, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Uniform on the unit sphere: a normalized standard normal draw.
    pub fn sample_unit_sphere(&mut self) -> Vec<f64> {
        loop {
            let mut u: Vec<f64> = (0..self.dim).map(|_| self.rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-300 {
                u.iter_mut().for_each(|v| *v /= norm);
                return u;
            }
        }
    }

    /// Uniform on the unit ball: a sphere draw scaled by `U^(1/n)`.
    pub fn sample_unit_ball(&mut self) -> Vec<f64> {
        let mut u = self.sample_unit_sphere();
        let radius = self.rng.random::<f64>().powf(1.0 / self.dim as f64);
        u.iter_mut().for_each(|v| *v *= radius);
        u
    }
}

/// `(n / xi) (g_pert - g_base) u`.
pub fn two_point_estimate(g_pert: f64, g_base: f64, u: &[f64], xi: f64) -> Result<Vec<f64>> {
    check_xi(xi)?;
    let scale = u.len() as f64 / xi * (g_pert - g_base);
    Ok(u.iter().map(|v| scale * v).collect())
}

/// Gradient of the Moreau smoothing of the indicator of `theta_set`:
/// `(theta - Pi(theta)) / xi`.
pub fn moreau_gradient(theta: &[f64], theta_set: &BoxSet, xi: f64) -> Result<Vec<f64>> {
    check_xi(xi)?;
    let p = theta_set.project(theta)?;
    Ok(theta.iter().zip(&p).map(|(t, q)| (t - q) / xi).collect())
}

pub(crate) fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("smoothing parameter must be positive, got {xi}")))
    }
}

/// `(1/M) sum_m F(theta + xi nu_m)` over ball draws.
pub fn mc_smoothed_value<F>(mut f: F, theta: &[f64], xi: f64, samples: usize, sampler: &mut SphereSampler) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    check_xi(xi)?;
    check_dim("theta", sampler.dim(), theta.len())?;
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut sum = 0.0;
    let mut point = vec![0.0; theta.len()];
    for _ in 0..samples {
        let nu = sampler.sample_unit_ball();
        for ((p, t), v) in point.iter_mut().zip(theta).zip(&nu) {
            *p = t + xi * v;
        }
        sum += f(&point)?;
    }
    Ok(sum / samples as f64)
}

/// Monte-Carlo estimate of a smoothed gradient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothedGradientEstimate {
    /// Estimated gradient, Moreau term included.
    pub mean: Vec<f64>,
    /// Per-coordinate standard error of the random part.
    pub std_err: Vec<f64>,
    pub samples: usize,
    /// Deterministic Moreau term contained in `mean`.
    pub moreau_term: Vec<f64>,
}

impl SmoothedGradientEstimate {
    pub fn norm(&self) -> f64 {
        self.mean.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `mean` with the Moreau term removed.
    pub fn random_part(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.moreau_term).map(|(m, r)| m - r).collect()
    }
}

/// Running per-coordinate first and second moments.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

impl Moments {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            count: 0,
        }
    }

    pub(crate) fn push(&mut self, v: &[f64]) {
        for ((s, q), x) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(v) {
            *s += x;
            *q += x * x;
        }
        self.count += 1;
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        for (s, o) in self.sum.iter_mut().zip(&other.sum) {
            *s += o;
        }
        for (s, o) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *s += o;
        }
        self.count += other.count;
    }

    pub(crate) fn mean(&self) -> Vec<f64> {
        let m = self.count as f64;
        self.sum.iter().map(|s| s / m).collect()
    }

    pub(crate) fn std_err(&self) -> Vec<f64> {
        let m = self.count as f64;
        if self.count < 2 {
            return vec![0.0; self.sum.len()];
        }
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let mean = s / m;
                let var = ((q - m * mean * mean) / (m - 1.0)).max(0.0);
                (var / m).sqrt()
            })
            .collect()
    }
}

/// Social cost at the equilibrium returned by `oracle`, memoized by the exact
/// bits of `theta` (for scalar decisions only two perturbed points exist).
struct SocialAtEquilibrium<'a, O: ?Sized> {
    game: &'a dyn Game,
    oracle: &'a O,
    cache: HashMap<Vec<u64>, f64>,
}

impl<'a, O> SocialAtEquilibrium<'a, O>
where
    O: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    fn new(game: &'a dyn Game, oracle: &'a O) -> Self {
        Self {
            game,
            oracle,
            cache: HashMap::new(),
        }
    }

    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        let key: Vec<u64> = theta.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let x = (self.oracle)(theta)?;
        let v = social_cost(self.game, &x, theta)?;
        self.cache.insert(key, v);
        Ok(v)
    }
}

fn stationarity_sample<O>(
    social: &mut SocialAtEquilibrium<'_, O>,
    theta: &[f64],
    base: f64,
    xi: f64,
    sampler: &mut SphereSampler,
    point: &mut [f64],
) -> Result<Vec<f64>>
where
    O: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    let u = sampler.sample_unit_sphere();
    for ((p, t), v) in point.iter_mut().zip(theta).zip(&u) {
        *p = t + xi * v;
    }
    let pert = social.value(point)?;
    two_point_estimate(pert, base, &u, xi)
}

/// `grad F_hat(theta) + grad chi_hat(theta)` from `samples` fresh sphere draws,
/// evaluating the social cost at the equilibria returned by `ne_oracle`.
pub fn mc_stationarity<O>(
    game: &dyn Game,
    theta: &[f64],
    xi: f64,
    samples: usize,
    ne_oracle: &O,
    sampler: &mut SphereSampler,
) -> Result<SmoothedGradientEstimate>
where
    O: Fn(&[f64]) -> Result<Vec<f64>> + ?Sized,
{
    check_stationarity_args(game, theta, xi, samples)?;
    check_dim("sampler", game.theta_dim(), sampler.dim())?;
    let mut social = SocialAtEquilibrium::new(game, ne_oracle);
    let base = social.value(theta)?;
    let mut moments = Moments::new(theta.len());
    let mut point = vec![0.0; theta.len()];
    for _ in 0..samples {
        let est = stationarity_sample(&mut social, theta, base, xi, sampler, &mut point)?;
        moments.push(&est);
    }
    finish(game, theta, xi, moments)
}

/// Parallel [`mc_stationarity`]: chunk `c` of [`CHUNK_SAMPLES`] draws reads
/// stream `stream_base + c` of `seed`; chunks are reduced in index order, so
/// the result does not depend on the number of threads.
pub fn mc_stationarity_par<O>(
    game: &dyn Game,
    theta: &[f64],
    xi: f64,
    samples: usize,
    ne_oracle: &O,
    seed: u64,
    stream_base: u64,
) -> Result<SmoothedGradientEstimate>
where
    O: Fn(&[f64]) -> Result<Vec<f64>> + Sync + ?Sized,
{
    check_stationarity_args(game, theta, xi, samples)?;
    let base = {
        let x = ne_oracle(theta)?;
        social_cost(game, &x, theta)?
    };
    let chunks = samples.div_ceil(CHUNK_SAMPLES);
    let partial: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut sampler = SphereSampler::with_stream(theta.len(), seed, stream_base + c as u64)?;
            let mut social = SocialAtEquilibrium::new(game, ne_oracle);
            let mut moments = Moments::new(theta.len());
            let mut point = vec![0.0; theta.len()];
            let count = CHUNK_SAMPLES.min(samples - c * CHUNK_SAMPLES);
            for _ in 0..count {
                let est = stationarity_sample(&mut social, theta, base, xi, &mut sampler, &mut point)?;
                moments.push(&est);
            }
            Ok(moments)
        })
        .collect();
    let mut moments = Moments::new(theta.len());
    for m in partial {
        moments.merge(&m?);
    }
    finish(game, theta, xi, moments)
}

fn check_stationarity_args(game: &dyn Game, theta: &[f64], xi: f64, samples: usize) -> Result<()> {
    check_xi(xi)?;
    check_dim("theta", game.theta_dim(), theta.len())?;
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    Ok(())
}

fn finish(game: &dyn Game, theta: &[f64], xi: f64, moments: Moments) -> Result<SmoothedGradientEstimate> {
    let moreau_term = moreau_gradient(theta, game.theta_set(), xi)?;
    let mean = moments.mean().iter().zip(&moreau_term).map(|(a, b)| a + b).collect();
    Ok(SmoothedGradientEstimate {
        mean,
        std_err: moments.std_err(),
        samples: moments.count,
        moreau_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{example1_ne, example1_social};

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn sphere_draws_are_unit_and_centered() {
        let mut s = SphereSampler::new(3, 11).unwrap();
        let m = 100_000;
        let mut mean = [0.0; 3];
        let mut second = [[0.0; 3]; 3];
        for _ in 0..m {
            let u = s.sample_unit_sphere();
            assert!((norm(&u) - 1.0).abs() < 1e-12);
            for i in 0..3 {
                mean[i] += u[i] / m as f64;
                for j in 0..3 {
                    second[i][j] += u[i] * u[j] / m as f64;
                }
            }
        }
        for i in 0..3 {
            assert!(mean[i].abs() < 4.0 / (m as f64).sqrt());
            for j in 0..3 {
                let target = if i == j { 1.0 / 3.0 } else { 0.0 };
                // Var(u_i u_j) <= 1/3 for unit vectors
                assert!((second[i][j] - target).abs() < 5.0 * (1.0 / 3.0f64 / m as f64).sqrt());
            }
        }
    }

    #[test]
    fn ball_draws() {
        let mut s = SphereSampler::new(1, 3).unwrap();
        let m = 100_000;
        let mut abs_mean = 0.0;
        for _ in 0..m {
            let v = s.sample_unit_ball();
            assert!(v[0].abs() <= 1.0);
            abs_mean += v[0].abs() / m as f64;
        }
        // |nu| uniform on [0, 1], sd 1/sqrt(12)
        assert!((abs_mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / m as f64).sqrt());

        let mut s = SphereSampler::new(3, 5).unwrap();
        let inside = (0..m).filter(|_| norm(&s.sample_unit_ball()) <= 0.5).count() as f64 / m as f64;
        let p = 0.125;
        assert!((inside - p).abs() < 4.0 * (p * (1.0 - p) / m as f64).sqrt());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = SphereSampler::with_stream(2, 7, 3).unwrap();
        let mut b = SphereSampler::with_stream(2, 7, 3).unwrap();
        let mut c = SphereSampler::with_stream(2, 7, 4).unwrap();
        let (ua, ub, uc) = (a.sample_unit_sphere(), b.sample_unit_sphere(), c.sample_unit_sphere());
        assert_eq!(ua, ub);
        assert_ne!(ua, uc);
    }

    #[test]
    fn two_point_cases() {
        assert_eq!(two_point_estimate(1.5, 1.5, &[0.6, 0.8], 0.1).unwrap(), vec![0.0, 0.0]);
        assert!(two_point_estimate(1.0, 0.0, &[1.0], 0.0).is_err());
        // linear g(z) = c.z has mean n (c.u) u -> c
        let c = [1.0, -2.0, 0.5];
        let xi = 0.01;
        let mut s = SphereSampler::new(3, 1).unwrap();
        let mut m = Moments::new(3);
        for _ in 0..100_000 {
            let u = s.sample_unit_sphere();
            let diff = xi * c.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            let est = two_point_estimate(diff, 0.0, &u, xi).unwrap();
            // |c| = 2.29 < 3 so the norm bound n L_g holds with L_g = |c|
            assert!(norm(&est) <= 3.0 * norm(&c) + 1e-12);
            m.push(&est);
        }
        for ((mean, se), target) in m.mean().iter().zip(m.std_err()).zip(c) {
            assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target}");
        }
    }

    #[test]
    fn two_point_norm_bound_for_unit_lipschitz() {
        let mut s = SphereSampler::new(3, 2).unwrap();
        for _ in 0..1000 {
            let u = s.sample_unit_sphere();
            let z = [0.3, -0.1, 0.7];
            let g = |p: &[f64]| norm(p);
            let pert: Vec<f64> = z.iter().zip(&u).map(|(a, b)| a + 0.05 * b).collect();
            let est = two_point_estimate(g(&pert), g(&z), &u, 0.05).unwrap();
            assert!(norm(&est) <= 3.0 + 1e-12);
        }
    }

    #[test]
    fn moreau_cases() {
        let set = BoxSet::uniform(1, 1.0, 3.0).unwrap();
        assert_eq!(moreau_gradient(&[2.0], &set, 0.5).unwrap(), vec![0.0]);
        assert_eq!(moreau_gradient(&[4.0], &set, 0.5).unwrap(), vec![2.0]);
        let set = BoxSet::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let mut s = SphereSampler::new(2, 9).unwrap();
        for _ in 0..1000 {
            let a: Vec<f64> = s.sample_unit_ball().iter().map(|v| 3.0 * v).collect();
            let b: Vec<f64> = s.sample_unit_ball().iter().map(|v| 3.0 * v).collect();
            let ga = moreau_gradient(&a, &set, 0.2).unwrap();
            let gb = moreau_gradient(&b, &set, 0.2).unwrap();
            let lhs = norm(&[ga[0] - gb[0], ga[1] - gb[1]]);
            assert!(lhs <= norm(&[a[0] - b[0], a[1] - b[1]]) / 0.2 + 1e-12);
        }
    }

    #[test]
    fn smoothed_value_cases() {
        let mut s = SphereSampler::new(2, 4).unwrap();
        let v = mc_smoothed_value(|_| Ok(3.25), &[0.1, 0.2], 0.5, 100, &mut s).unwrap();
        assert_eq!(v, 3.25);

        let f = |p: &[f64]| Ok(2.0 * p[0] - p[1]);
        let m = 20_000;
        let v = mc_smoothed_value(f, &[0.1, 0.2], 0.5, m, &mut s).unwrap();
        // |f(theta + xi nu) - f(theta)| <= xi sqrt(5)
        assert!((v - 0.0).abs() < 3.0 * 0.5 * 5f64.sqrt() / (m as f64).sqrt());

        let mut s = SphereSampler::new(1, 8).unwrap();
        let social = |t: &[f64]| example1_social(t[0]);
        let xi = 1e-3;
        for theta in [0.2, 0.5, 0.9] {
            let v = mc_smoothed_value(social, &[theta], xi, 1000, &mut s).unwrap();
            assert!((v - example1_social(theta).unwrap()).abs() <= xi * 2.0 * 6.0);
        }
    }

    #[test]
    fn stationarity_on_example1() {
        let game = crate::oracles::example1_quadratic();
        let oracle = |t: &[f64]| Ok(example1_ne(t[0]));
        let mut s = SphereSampler::new(1, 21).unwrap();
        let est = mc_stationarity(&game, &[0.9], 1e-3, 2000, &oracle, &mut s).unwrap();
        assert!((est.mean[0] + 7.6).abs() < (3.0 * est.std_err[0]).max(0.05));
        assert_eq!(est.moreau_term, vec![0.0]);
        let est = mc_stationarity(&game, &[0.3], 1e-3, 2000, &oracle, &mut s).unwrap();
        assert!((est.mean[0] + 8.0 / 3.0).abs() < (3.0 * est.std_err[0]).max(0.05));
        // outside Theta the Moreau term enters
        let est = mc_stationarity(&game, &[1.01], 1e-3, 100, &oracle, &mut s).unwrap();
        assert!((est.moreau_term[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_estimate_is_thread_independent() {
        let game = crate::oracles::example1_quadratic();
        let oracle = |t: &[f64]| Ok(example1_ne(t[0]));
        let a = mc_stationarity_par(&game, &[0.8], 1e-3, 5000, &oracle, 4, 100).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| mc_stationarity_par(&game, &[0.8], 1e-3, 5000, &oracle, 4, 100))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples, 5000);
        assert!((a.mean[0] + 7.2).abs() < 0.05);
    }
}
