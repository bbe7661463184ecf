//! Network inference from node time series.
//!
//! Simulates Voter and coupled-map-lattice dynamics on small-world graphs and
//! recovers the hidden interaction graph, either in full (reconstruction) or
//! for a set of unobserved nodes (completion), by jointly fitting a
//! Gumbel-softmax adjacency generator, a message-passing dynamics learner and
//! learnable initial states.

pub mod autodiff;
pub mod data;
mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod gumbel;
pub mod model;
pub mod rng;
pub mod sim;
pub mod train;

pub use error::{Error, Result};
