//! Dataset views used by training and evaluation: dense `f64` records over a
//! chosen node set, plus mini-batch assembly.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::PartitionedGraph;
use crate::sim::{Dataset, Split};

/// Records restricted to a node subset, `[sample][time][node][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    n: usize,
    d: usize,
    len: usize,
    data: Vec<f64>,
    pub split: Split,
}

impl Series {
    /// Every node, in dataset order.
    pub fn full(ds: &Dataset) -> Self {
        let nodes: Vec<usize> = (0..ds.n()).collect();
        Self::select(ds, &nodes)
    }

    /// Only the given dataset nodes, in the given order.
    pub fn select(ds: &Dataset, nodes: &[usize]) -> Self {
        let (n, d, len) = (nodes.len(), ds.d(), ds.states_per_record());
        let mut data = Vec::with_capacity(ds.sample_count() * len * n * d);
        for s in 0..ds.sample_count() {
            for t in 0..len {
                let state = ds.state(s, t);
                for &node in nodes {
                    data.extend(state[node * d..(node + 1) * d].iter().map(|&v| f64::from(v)));
                }
            }
        }
        Self {
            n,
            d,
            len,
            data,
            split: ds.split.clone(),
        }
    }

    pub fn from_parts(n: usize, d: usize, len: usize, data: Vec<f64>, split: Split) -> Result<Self> {
        if n * d * len == 0 || data.len() % (n * d * len) != 0 {
            return Err(Error::shape("series", format!("{} values for n={n}, d={d}, len={len}", data.len())));
        }
        split.validate(data.len() / (n * d * len))?;
        Ok(Self { n, d, len, data, split })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// States per record.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.data.len() / (self.n * self.d * self.len)
    }

    pub fn state(&self, s: usize, t: usize) -> &[f64] {
        let w = self.n * self.d;
        let start = (s * self.len + t) * w;
        &self.data[start..start + w]
    }

    /// States at time `t` for the given samples, `[rows.len() * n, d]`.
    pub fn batch_at(&self, rows: &[usize], t: usize) -> Tensor {
        let mut out = Vec::with_capacity(rows.len() * self.n * self.d);
        for &s in rows {
            out.extend_from_slice(self.state(s, t));
        }
        Tensor::new(&[rows.len() * self.n, self.d], out).expect("batch shape")
    }
}

/// Observed-node time series of a completion instance, in canonical order.
/// Missing-node states are never copied into this structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub series: Series,
    pub partition: PartitionedGraph,
}

impl ObservedData {
    /// `ds` is indexed by original node labels; `partition.order` maps canonical to original.
    pub fn new(ds: &Dataset, partition: &PartitionedGraph) -> Result<Self> {
        if partition.n() != ds.n() {
            return Err(Error::invalid(format!(
                "partition of {} nodes for a dataset of {}",
                partition.n(),
                ds.n()
            )));
        }
        Ok(Self {
            series: Series::select(ds, partition.observed()),
            partition: partition.clone(),
        })
    }
}

/// Missing-node states in canonical order; only evaluation code should build this.
pub fn missing_truth(ds: &Dataset, partition: &PartitionedGraph) -> Series {
    Series::select(ds, partition.missing())
}

/// Cycles through a shuffled index set in fixed-size batches, reshuffling after every pass.
#[derive(Debug, Clone)]
pub struct BatchCursor {
    indices: Vec<usize>,
    pos: usize,
    rng: crate::rng::Rng,
}

impl BatchCursor {
    pub fn new(indices: &[usize], seed: u64) -> Self {
        let mut c = Self {
            indices: indices.to_vec(),
            pos: 0,
            rng: crate::rng::seeded(seed),
        };
        c.shuffle();
        c
    }

    fn shuffle(&mut self) {
        use rand::seq::SliceRandom;
        self.indices.shuffle(&mut self.rng);
        self.pos = 0;
    }

    /// Next batch of up to `size` distinct indices.
    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        if self.indices.is_empty() {
            return Vec::new();
        }
        if self.pos >= self.indices.len() {
            self.shuffle();
        }
        let end = (self.pos + size).min(self.indices.len());
        let out = self.indices[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}
