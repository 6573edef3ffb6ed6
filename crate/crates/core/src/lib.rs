//! Limit distributions of game dynamics over the sink equilibria of a
//! normal-form game.
//!
//! * [`game`]: games, response graphs, sink equilibria and the Conley-Markov chain.
//! * [`epsmc`]: epsilon-Markov chains and the exact limit hitting probabilities.
//! * [`solver`]: stationary distributions, absorption probabilities, fixed-epsilon oracle.
//! * [`dynamics`]: noisy replicator dynamics and limit-distribution estimation.
//! * [`dot`]: Graphviz export of response graphs.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dot;
pub mod dynamics;
pub mod epsmc;
pub mod error;
pub mod game;
pub mod graph;
pub mod known_games;
pub mod par;
pub mod solver;

pub use epsmc::{limit_hitting_probabilities, oracle_hitting_matrix, EpsilonMc, HittingMatrix};
pub use error::{Error, Result};
pub use game::{build_cmc, random_game, sink_equilibria, Game, ProfileId, UtilityDistribution};
pub use par::Execution;
