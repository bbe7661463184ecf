use super::{AdjacencyMatrix, Graph};
use crate::error::{Error, Result};
use crate::rng;

/// A graph split into observed and missing nodes.
///
/// Nodes are reindexed canonically: observed nodes (ascending original index)
/// occupy `0..n-m` and missing nodes (ascending original index) occupy `n-m..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedGraph {
    /// Full graph in canonical labels.
    pub full: Graph,
    /// `order[k]` is the original label of canonical node `k`.
    pub order: Vec<usize>,
    pub missing_count: usize,
    pub seed: u64,
    /// Adjacency among observed nodes only (canonical labels `0..n-m`).
    pub a_o: AdjacencyMatrix,
}

impl PartitionedGraph {
    /// Builds the partition from an explicit list of observed original labels.
    pub fn from_observed(g: &Graph, observed: &[usize], seed: u64) -> Result<Self> {
        let n = g.n();
        let mut is_observed = vec![false; n];
        for &v in observed {
            if v >= n || is_observed[v] {
                return Err(Error::invalid(format!("observed node {v} invalid or repeated")));
            }
            is_observed[v] = true;
        }
        if observed.is_empty() {
            return Err(Error::invalid("partition needs at least one observed node"));
        }
        let mut obs: Vec<usize> = observed.to_vec();
        obs.sort_unstable();
        let missing: Vec<usize> = (0..n).filter(|&v| !is_observed[v]).collect();
        let order: Vec<usize> = obs.iter().chain(missing.iter()).copied().collect();
        let full = g.relabel(&order)?;
        let observed_count = obs.len();
        let canonical_obs: Vec<usize> = (0..observed_count).collect();
        let a_o = full.to_adjacency().submatrix(&canonical_obs);
        Ok(Self {
            full,
            order,
            missing_count: missing.len(),
            seed,
            a_o,
        })
    }

    pub fn n(&self) -> usize {
        self.full.n()
    }

    pub fn observed_count(&self) -> usize {
        self.n() - self.missing_count
    }

    /// Original labels of the observed nodes, in canonical order.
    pub fn observed(&self) -> &[usize] {
        &self.order[..self.observed_count()]
    }

    /// Original labels of the missing nodes, in canonical order.
    pub fn missing(&self) -> &[usize] {
        &self.order[self.observed_count()..]
    }
}

/// Removes `m` uniformly chosen nodes (and their edges) from the observed view.
pub fn partition(g: &Graph, m: usize, seed: u64) -> Result<PartitionedGraph> {
    if m >= g.n() {
        return Err(Error::invalid(format!(
            "cannot remove {m} of {} nodes; at least one must stay observed",
            g.n()
        )));
    }
    let mut rng = rng::seeded(seed);
    let missing = rand::seq::index::sample(&mut rng, g.n(), m).into_vec();
    let mut is_missing = vec![false; g.n()];
    for v in missing {
        is_missing[v] = true;
    }
    let observed: Vec<usize> = (0..g.n()).filter(|&v| !is_missing[v]).collect();
    PartitionedGraph::from_observed(g, &observed, seed)
}
