use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{simulate, Dynamics};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

/// Generation parameters for [`build_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub dynamics: Dynamics,
    pub simulations: usize,
    pub steps: usize,
    /// Transitions per sample for Voter (normally 1); states per record for CML.
    pub record_length: usize,
}

impl DatasetSpec {
    /// Consecutive states stored per sample.
    pub fn states_per_record(&self) -> usize {
        match self.dynamics {
            Dynamics::Voter => self.record_length + 1,
            Dynamics::Cml(_) => self.record_length,
        }
    }

    pub fn records_per_simulation(&self) -> usize {
        if self.record_length == 0 {
            0
        } else {
            self.steps / self.record_length
        }
    }

    pub fn sample_count(&self) -> usize {
        self.simulations * self.records_per_simulation()
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_length == 0 {
            return Err(Error::invalid("record_length must be at least 1"));
        }
        if self.simulations == 0 {
            return Err(Error::invalid("simulation count must be at least 1"));
        }
        if self.steps % self.record_length != 0 {
            return Err(Error::invalid(format!(
                "record_length {} does not divide steps {}",
                self.record_length, self.steps
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be at least 1"));
        }
        if let Dynamics::Cml(p) = &self.dynamics {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Shuffles `0..count` and cuts it 70/15/15; validation and test each get
    /// `floor(0.15 * count)` samples and training keeps the rest.
    pub fn shuffled(count: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..count).collect();
        idx.shuffle(&mut rng::seeded(seed));
        let held = count * 15 / 100;
        let test = idx.split_off(count - held);
        let val = idx.split_off(count - 2 * held);
        Split { train: idx, val, test }
    }

    pub fn validate(&self, count: usize) -> Result<()> {
        let mut seen = vec![false; count];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= count || seen[i] {
                return Err(Error::invalid(format!("split index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("splits do not cover every sample"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: DatasetSpec,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
}

/// Samples of a model on a fixed graph, stored as `f32` in
/// `[sample][time][node][dim]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub meta: DatasetMeta,
    pub split: Split,
    states: Vec<f32>,
}

impl Dataset {
    pub fn from_parts(graph: Graph, meta: DatasetMeta, split: Split, states: Vec<f32>) -> Result<Self> {
        if meta.n != graph.n() || meta.d != meta.spec.dynamics.state_dim() {
            return Err(Error::invalid("dataset meta does not match graph or model"));
        }
        let ds = Dataset {
            graph,
            meta,
            split,
            states,
        };
        let expected = ds.sample_count() * ds.sample_width();
        if ds.states.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} state values, found {}",
                ds.states.len()
            )));
        }
        ds.split.validate(ds.sample_count())?;
        Ok(ds)
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.meta.spec.dynamics
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn d(&self) -> usize {
        self.meta.d
    }

    pub fn sample_count(&self) -> usize {
        self.meta.spec.sample_count()
    }

    pub fn states_per_record(&self) -> usize {
        self.meta.spec.states_per_record()
    }

    fn sample_width(&self) -> usize {
        self.states_per_record() * self.n() * self.d()
    }

    pub fn states(&self) -> &[f32] {
        &self.states
    }

    /// All states of sample `s`, `[time][node][dim]`.
    pub fn record(&self, s: usize) -> &[f32] {
        let w = self.sample_width();
        &self.states[s * w..(s + 1) * w]
    }

    /// States of sample `s` at time `t`, `[node][dim]`.
    pub fn state(&self, s: usize, t: usize) -> &[f32] {
        let w = self.n() * self.d();
        &self.record(s)[t * w..(t + 1) * w]
    }
}

/// Runs `spec.simulations` independent simulations on `g` and slices them into samples.
pub fn build_dataset(g: &Graph, spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let n = g.n();
    let d = spec.dynamics.state_dim();
    let per_record = spec.states_per_record();
    let width = n * d;
    let mut states = Vec::with_capacity(spec.sample_count() * per_record * width);
    for sim in 0..spec.simulations {
        let sim_seed = rng::derive_seed(seed, sim as u64);
        let mut init_rng = rng::stream(sim_seed, 0);
        let init: Vec<f64> = match spec.dynamics {
            Dynamics::Voter => (0..n).map(|_| f64::from(u8::from(init_rng.random_bool(0.5)))).collect(),
            Dynamics::Cml(_) => (0..n).map(|_| init_rng.random::<f64>()).collect(),
        };
        let traj = simulate(g, &spec.dynamics, &init, spec.steps, rng::derive_seed(sim_seed, 1))?;
        for r in 0..spec.records_per_simulation() {
            let start = r * spec.record_length;
            for t in start..start + per_record {
                states.extend(traj.at(t).iter().map(|&v| v as f32));
            }
        }
    }
    let meta = DatasetMeta {
        spec: *spec,
        n,
        d,
        seed,
    };
    let split = Split::shuffled(spec.sample_count(), rng::derive_seed(seed, u64::MAX));
    Dataset::from_parts(g.clone(), meta, split, states)
}
