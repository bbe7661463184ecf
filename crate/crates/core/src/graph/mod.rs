//! Undirected graphs, adjacency matrices, observed/missing partitions and
//! node alignment for completion scoring.

mod align;
mod io;
mod partition;
mod ws;

pub use align::{align_missing, apply_alignment, row_hamming, NodeAlignment};
pub use io::{read_edges_csv, read_partition_json, write_edges_csv, write_partition_json, PartitionFile};
pub use partition::{partition, PartitionedGraph};
pub use ws::generate_ws;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple undirected graph on nodes `0..n`. Edges are stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            if !g.add_edge(i, j)? {
                return Err(Error::invalid(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(g)
    }

    /// Inserts `{i, j}`; returns `false` if it was already present.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        if i == j {
            return Err(Error::invalid(format!("self-loop on node {i}")));
        }
        if i >= self.n || j >= self.n {
            return Err(Error::invalid(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.n
            )));
        }
        Ok(self.edges.insert(ordered(i, j)))
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        self.edges.remove(&ordered(i, j))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&ordered(i, j))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for &(i, j) in &self.edges {
            out[i].push(j);
            out[j].push(i);
        }
        for list in &mut out {
            list.sort_unstable();
        }
        out
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    pub fn to_adjacency(&self) -> AdjacencyMatrix {
        let mut values = vec![0.0; self.n * self.n];
        for &(i, j) in &self.edges {
            values[i * self.n + j] = 1.0;
            values[j * self.n + i] = 1.0;
        }
        AdjacencyMatrix {
            n: self.n,
            values,
            mode: AdjacencyMode::Binary,
        }
    }

    /// Relabels nodes: node `order[k]` of `self` becomes node `k`.
    pub fn relabel(&self, order: &[usize]) -> Result<Graph> {
        if order.len() != self.n {
            return Err(Error::invalid("relabel order length differs from node count"));
        }
        let mut inverse = vec![usize::MAX; self.n];
        for (new, &old) in order.iter().enumerate() {
            if old >= self.n || inverse[old] != usize::MAX {
                return Err(Error::invalid("relabel order is not a permutation"));
            }
            inverse[old] = new;
        }
        Graph::from_edges(self.n, self.edges().map(|(i, j)| (inverse[i], inverse[j])))
    }
}

fn ordered(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// Entries in {0, 1}.
    Binary,
    /// Entries in [0, 1]; learned slots lie strictly inside (0, 1).
    Soft,
}

/// Dense row-major `n x n` adjacency with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    values: Vec<f64>,
    mode: AdjacencyMode,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
            mode: AdjacencyMode::Binary,
        }
    }

    pub fn new(n: usize, values: Vec<f64>, mode: AdjacencyMode) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid(format!(
                "adjacency of dimension {n} needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if i == j && v != 0.0 {
                    return Err(Error::invalid(format!("nonzero diagonal entry at {i}")));
                }
                let ok = match mode {
                    AdjacencyMode::Binary => v == 0.0 || v == 1.0,
                    AdjacencyMode::Soft => (0.0..=1.0).contains(&v),
                };
                if !ok {
                    return Err(Error::invalid(format!(
                        "entry ({i}, {j}) = {v} not valid for {mode:?} adjacency"
                    )));
                }
            }
        }
        Ok(Self { n, values, mode })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> AdjacencyMode {
        self.mode
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Rounds at 0.5 into a binary matrix.
    pub fn threshold(&self) -> AdjacencyMatrix {
        let values = self
            .values
            .iter()
            .map(|&v| if v > 0.5 { 1.0 } else { 0.0 })
            .collect();
        AdjacencyMatrix {
            n: self.n,
            values,
            mode: AdjacencyMode::Binary,
        }
    }

    /// Binary row `i` as 0/1 bytes. Soft entries are thresholded at 0.5.
    pub fn binary_row(&self, i: usize) -> Vec<u8> {
        self.row(i).iter().map(|&v| u8::from(v > 0.5)).collect()
    }

    /// Edge set of a binary matrix, reading the upper triangle.
    pub fn to_graph(&self) -> Result<Graph> {
        let mut g = Graph::empty(self.n);
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) > 0.5 {
                    g.add_edge(i, j)?;
                }
            }
        }
        Ok(g)
    }

    /// Restriction to the given rows/columns, in the given order.
    pub fn submatrix(&self, nodes: &[usize]) -> AdjacencyMatrix {
        let m = nodes.len();
        let mut values = vec![0.0; m * m];
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                values[a * m + b] = self.get(i, j);
            }
        }
        AdjacencyMatrix {
            n: m,
            values,
            mode: self.mode,
        }
    }

    /// Symmetric relabeling: entry `(a, b)` of the result is `(perm[a], perm[b])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> AdjacencyMatrix {
        self.submatrix(perm)
    }
}
