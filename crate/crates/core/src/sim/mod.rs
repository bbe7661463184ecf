//! Ground-truth network dynamics: the Voter model and coupled map lattices.

mod dataset;
mod io;

pub use dataset::{build_dataset, Dataset, DatasetMeta, DatasetSpec, Split};
pub use io::{load_dataset, save_dataset};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// `x'(i) = (1-eps) f(x_i) + eps/|N_i| * sum_j x_i f(x_j)`
    PaperLiteral,
    /// `x'(i) = (1-eps) f(x_i) + eps/|N_i| * sum_j f(x_j)`
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmlParams {
    pub eps: f64,
    pub lambda: f64,
    pub coupling_form: CouplingForm,
}

impl Default for CmlParams {
    fn default() -> Self {
        Self {
            eps: 0.2,
            lambda: 3.5,
            coupling_form: CouplingForm::PaperLiteral,
        }
    }
}

impl CmlParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eps) {
            return Err(Error::invalid(format!("coupling eps={} outside [0, 1]", self.eps)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::invalid(format!("logistic lambda={} must be positive", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    Voter,
    Cml(CmlParams),
}

impl Dynamics {
    /// State dimension per node: one-hot pairs for Voter, scalars for CML.
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::Voter => 2,
            Dynamics::Cml(_) => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Dynamics::Voter)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dynamics::Voter => "voter",
            Dynamics::Cml(_) => "cml",
        }
    }
}

/// One run of a model: `states[t][node][dim]` for `t = 0..=steps`, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dynamics: Dynamics,
    pub n: usize,
    pub d: usize,
    pub states: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len() / (self.n * self.d).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Node states at time `t`, `n * d` values.
    pub fn at(&self, t: usize) -> &[f64] {
        let w = self.n * self.d;
        &self.states[t * w..(t + 1) * w]
    }
}

/// One synchronous Voter update: each node with neighbors adopts opinion 1
/// with probability equal to the fraction of its neighbors holding 1.
/// Isolated nodes keep their opinion.
pub fn voter_step<R: Rng + ?Sized>(g: &Graph, state: &[u8], rng: &mut R) -> Result<Vec<u8>> {
    check_len(g, state.len())?;
    if state.iter().any(|&s| s > 1) {
        return Err(Error::invalid("voter states must be 0 or 1"));
    }
    Ok(voter_step_lists(&g.neighbors(), state, rng))
}

fn voter_step_lists<R: Rng + ?Sized>(neighbors: &[Vec<usize>], state: &[u8], rng: &mut R) -> Vec<u8> {
    neighbors
        .iter()
        .zip(state)
        .map(|(nbrs, &own)| {
            if nbrs.is_empty() {
                return own;
            }
            let ones = nbrs.iter().filter(|&&j| state[j] == 1).count();
            let u: f64 = rng.random();
            u8::from(u < ones as f64 / nbrs.len() as f64)
        })
        .collect()
}

pub fn logistic_map(x: f64, lambda: f64) -> f64 {
    lambda * x * (1.0 - x)
}

/// One coupled-map-lattice update.
pub fn cml_step(g: &Graph, state: &[f64], params: &CmlParams) -> Result<Vec<f64>> {
    check_len(g, state.len())?;
    Ok(cml_step_lists(&g.neighbors(), state, params))
}

fn cml_step_lists(neighbors: &[Vec<usize>], state: &[f64], params: &CmlParams) -> Vec<f64> {
    let f: Vec<f64> = state.iter().map(|&x| logistic_map(x, params.lambda)).collect();
    neighbors
        .iter()
        .enumerate()
        .map(|(i, nbrs)| {
            let local = (1.0 - params.eps) * f[i];
            if nbrs.is_empty() {
                return local;
            }
            let coupled: f64 = nbrs.iter().map(|&j| f[j]).sum();
            let coupled = match params.coupling_form {
                CouplingForm::PaperLiteral => state[i] * coupled,
                CouplingForm::Standard => coupled,
            };
            local + params.eps / nbrs.len() as f64 * coupled
        })
        .collect()
}

fn check_len(g: &Graph, len: usize) -> Result<()> {
    if len != g.n() {
        return Err(Error::invalid(format!(
            "state of length {len} for a graph with {} nodes",
            g.n()
        )));
    }
    Ok(())
}

/// Iterates the model `steps` times from `init` (one value per node; 0/1 for Voter).
/// Voter output is expanded to one-hot `[p(0), p(1)]` per node.
pub fn simulate(g: &Graph, dynamics: &Dynamics, init: &[f64], steps: usize, seed: u64) -> Result<Trajectory> {
    check_len(g, init.len())?;
    let neighbors = g.neighbors();
    let n = g.n();
    let d = dynamics.state_dim();
    let mut states = Vec::with_capacity((steps + 1) * n * d);
    match dynamics {
        Dynamics::Voter => {
            let mut s: Vec<u8> = init
                .iter()
                .map(|&v| match v {
                    v if v == 0.0 => Ok(0),
                    v if v == 1.0 => Ok(1),
                    _ => Err(Error::invalid(format!("voter initial state {v} is not 0 or 1"))),
                })
                .collect::<Result<_>>()?;
            let mut rng = rng::seeded(seed);
            push_one_hot(&mut states, &s);
            for _ in 0..steps {
                s = voter_step_lists(&neighbors, &s, &mut rng);
                push_one_hot(&mut states, &s);
            }
        }
        Dynamics::Cml(params) => {
            params.validate()?;
            if init.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("CML initial state must be finite"));
            }
            let mut s = init.to_vec();
            states.extend_from_slice(&s);
            for _ in 0..steps {
                s = cml_step_lists(&neighbors, &s, params);
                states.extend_from_slice(&s);
            }
        }
    }
    Ok(Trajectory {
        dynamics: *dynamics,
        n,
        d,
        states,
    })
}

fn push_one_hot(out: &mut Vec<f64>, s: &[u8]) {
    for &v in s {
        if v == 1 {
            out.extend_from_slice(&[0.0, 1.0]);
        } else {
            out.extend_from_slice(&[1.0, 0.0]);
        }
    }
}
