use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Resampling budget of [`metropolis_graph`].
pub const METROPOLIS_MAX_ATTEMPTS: usize = 10_000;

const STOCHASTIC_TOL: f64 = 1e-10;

/// Doubly stochastic, strongly connected communication graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    adjacency: DMatrix<f64>,
    sigma_bar: f64,
}

impl CommGraph {
    /// Validate an adjacency matrix: square, nonnegative, positive diagonal,
    /// doubly stochastic and strongly connected.
    pub fn new(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 || adjacency.ncols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency must be square and nonempty, got {}x{}",
                adjacency.nrows(),
                adjacency.ncols()
            )));
        }
        if adjacency.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidGraph("negative or non-finite weight".into()));
        }
        if let Some(i) = (0..n).find(|&i| adjacency[(i, i)] <= 0.0) {
            return Err(Error::InvalidGraph(format!("a_{i}{i} must be positive")));
        }
        for i in 0..n {
            let row: f64 = adjacency.row(i).sum();
            let col: f64 = adjacency.column(i).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidGraph(format!(
                    "not doubly stochastic at index {i}: row sum {row}, column sum {col}"
                )));
            }
        }
        if !strongly_connected(&adjacency) {
            return Err(Error::InvalidGraph("graph is not strongly connected".into()));
        }
        let sigma_bar = second_singular_value(&adjacency);
        if !(sigma_bar < 1.0) {
            return Err(Error::InvalidGraph(format!("sigma_bar = {sigma_bar} is not below 1")));
        }
        Ok(Self {
            adjacency,
            sigma_bar,
        })
    }

    /// Complete graph with Metropolis weights: every entry `1/n`.
    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        Self::new(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Second-largest singular value of the adjacency matrix (0 for one node).
    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }
}

fn second_singular_value(a: &DMatrix<f64>) -> f64 {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s.get(1).copied().unwrap_or(0.0).max(0.0)
}

/// Every node reaches every other node along edges `j -> i` with `a_ij > 0`.
fn strongly_connected(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                let weight = if forward { a[(w, v)] } else { a[(v, w)] };
                if weight > 0.0 && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Random undirected graph with edge probability `edge_probability` and
/// Metropolis weights `a_ij = 1 / (1 + max(deg_i, deg_j))`, resampled until
/// connected.
pub fn metropolis_graph(n_players: usize, edge_probability: f64, rng_seed: u64) -> Result<CommGraph> {
    if n_players == 0 {
        return Err(Error::InvalidArgument("graph needs at least one node".into()));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge probability must lie in (0, 1], got {edge_probability}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..METROPOLIS_MAX_ATTEMPTS {
        let mut edges = vec![vec![false; n_players]; n_players];
        for i in 0..n_players {
            for j in i + 1..n_players {
                let linked = rng.random_bool(edge_probability);
                edges[i][j] = linked;
                edges[j][i] = linked;
            }
        }
        let adjacency = metropolis_weights(&edges);
        if strongly_connected(&adjacency) {
            return CommGraph::new(adjacency);
        }
    }
    Err(Error::GraphNotConnected {
        attempts: METROPOLIS_MAX_ATTEMPTS,
    })
}

fn metropolis_weights(edges: &[Vec<bool>]) -> DMatrix<f64> {
    let n = edges.len();
    let degree: Vec<usize> = edges.iter().map(|row| row.iter().filter(|e| **e).count()).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && edges[i][j] {
                a[(i, j)] = 1.0 / (1.0 + degree[i].max(degree[j]) as f64);
            }
        }
        let off: f64 = a.row(i).sum();
        a[(i, i)] = 1.0 - off;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reachability oracle: `(I + A)^(N-1)` is entrywise positive.
    fn power_connected(a: &DMatrix<f64>) -> bool {
        let n = a.nrows();
        let base = DMatrix::identity(n, n) + a;
        let mut acc = DMatrix::identity(n, n);
        for _ in 0..n.saturating_sub(1) {
            acc = &acc * &base;
        }
        acc.iter().all(|v| *v > 0.0)
    }

    #[test]
    fn two_nodes_full_probability() {
        let g = metropolis_graph(2, 1.0, 0).unwrap();
        for v in g.adjacency().iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!(g.sigma_bar().abs() < 1e-12);
    }

    #[test]
    fn complete_three_nodes() {
        let g = metropolis_graph(3, 1.0, 9).unwrap();
        for v in g.adjacency().iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(g.n_nodes(), 3);
    }

    #[test]
    fn rejects_disconnected_and_non_stochastic() {
        let disconnected = DMatrix::identity(3, 3);
        assert!(CommGraph::new(disconnected).is_err());
        let lopsided = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        assert!(CommGraph::new(lopsided).is_err());
        assert!(metropolis_graph(4, 0.0, 1).is_err());
    }

    #[test]
    fn sigma_bar_of_a_ring() {
        // lazy ring on 4 nodes: eigenvalues 1, 1/3, 1/3, -1/3
        let mut a = DMatrix::zeros(4, 4);
        for i in 0..4 {
            a[(i, i)] = 1.0 / 3.0;
            a[(i, (i + 1) % 4)] = 1.0 / 3.0;
            a[(i, (i + 3) % 4)] = 1.0 / 3.0;
        }
        let g = CommGraph::new(a).unwrap();
        assert!((g.sigma_bar() - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metropolis_output_is_certified(n in 2usize..12, p in 0.15..1.0f64, seed in 0u64..1000) {
            let g = metropolis_graph(n, p, seed).unwrap();
            let a = g.adjacency();
            for i in 0..n {
                prop_assert!((a.row(i).sum() - 1.0).abs() < 1e-12);
                prop_assert!((a.column(i).sum() - 1.0).abs() < 1e-12);
                prop_assert!(a[(i, i)] > 0.0);
            }
            prop_assert!(power_connected(a));
            prop_assert!(g.sigma_bar() >= 0.0 && g.sigma_bar() < 1.0);
            let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
            s.sort_by(|x, y| y.total_cmp(x));
            prop_assert!((s[0] - 1.0).abs() < 1e-10);
            prop_assert!((s[1] - g.sigma_bar()).abs() < 1e-12);
        }
    }
}
