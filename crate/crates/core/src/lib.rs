//! Social optimization over noncooperative games.
//!
//! A regulator picks a decision `theta` to minimize the players' total cost
//! at the Nash equilibrium `x(theta)` that the decision induces. The players
//! reach that equilibrium themselves through distributed NE seeking over a
//! communication graph ([`consensus`]); the regulator only observes costs and
//! runs a zeroth-order method on a smoothed problem ([`smoothing`],
//! [`regulator`]).
//!
//! ```
//! use socialopt::oracles::{example1_ne, example1_quadratic};
//! use socialopt::consensus::{ne_seek, EstimateState};
//! use socialopt::game::CommGraph;
//!
//! let game = example1_quadratic();
//! let graph = CommGraph::complete(2).unwrap();
//! let res = ne_seek(&game, &graph, &[0.9], 0.25, 200, EstimateState::cold(&game), None).unwrap();
//! assert!((res.x[0] - example1_ne(0.9)[0]).abs() < 1e-9);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod consensus;
pub mod error;
pub mod experiments;
pub mod game;
pub mod oracles;
pub mod regulator;
pub mod smoothing;

pub use error::{Error, Result};
pub use game::Game;
