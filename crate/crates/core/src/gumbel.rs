//! Binary Gumbel-softmax generator of adjacency matrices.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, AdjacencyMode};
use crate::rng;

pub const LOGITS_NAME: &str = "gumbel.logits";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    FullMatrix,
    UpperTriangleSymmetric,
    CompletionBlocks,
}

/// Which cells carry parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    /// One slot per ordered pair `i != j`.
    FullMatrix,
    /// One slot per unordered pair shared by `(i, j)` and `(j, i)`.
    UpperTriangleSymmetric,
    /// Symmetric slots for pairs touching a missing node; the leading
    /// observed block is the fixed binary matrix `observed`.
    CompletionBlocks { observed: AdjacencyMatrix },
}

impl Layout {
    pub fn kind(&self) -> LayoutKind {
        match self {
            Layout::FullMatrix => LayoutKind::FullMatrix,
            Layout::UpperTriangleSymmetric => LayoutKind::UpperTriangleSymmetric,
            Layout::CompletionBlocks { .. } => LayoutKind::CompletionBlocks,
        }
    }
}

/// Standard Gumbel draw `-log(-log(u))`, `u` clamped to `[1e-12, 1 - 1e-12]`.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    gumbel_from_uniform(rng.random::<f64>())
}

pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(1e-12, 1.0 - 1e-12);
    -(-u.ln()).ln()
}

/// Exponential interpolation from `tau_start` at epoch 0 to `tau_end` at `total`.
pub fn anneal(tau_start: f64, tau_end: f64, epoch: usize, total: usize) -> f64 {
    if total == 0 {
        return tau_end;
    }
    let frac = epoch.min(total) as f64 / total as f64;
    tau_start * (tau_end / tau_start).powf(frac)
}

#[derive(Debug, Clone)]
pub struct GumbelGenerator {
    n: usize,
    layout: Layout,
    /// `[slots, 2]`: column 0 is the edge logit, column 1 the no-edge logit.
    logits: Parameter,
    /// For every cell of the `n x n` matrix: a slot index, or `slots` (constant 0)
    /// or `slots + 1` (constant 1).
    cells: Arc<[usize]>,
    /// Row index of each slot's edge probability in the flattened softmax output.
    edge_column: Arc<[usize]>,
    pub tau: f64,
}

impl GumbelGenerator {
    /// Logits drawn i.i.d. from N(0, 1).
    pub fn new(n: usize, layout: Layout, tau: f64, seed: u64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("temperature {tau} must be positive")));
        }
        let mut cells = vec![0usize; n * n];
        let mut slot_cells: Vec<Vec<usize>> = Vec::new();
        let mut add_slot = |cs: Vec<usize>| {
            slot_cells.push(cs);
        };
        match &layout {
            Layout::FullMatrix => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            add_slot(vec![i * n + j]);
                        }
                    }
                }
            }
            Layout::UpperTriangleSymmetric => {
                for i in 0..n {
                    for j in i + 1..n {
                        add_slot(vec![i * n + j, j * n + i]);
                    }
                }
            }
            Layout::CompletionBlocks { observed } => {
                let k = observed.n();
                if k > n || observed.mode() != AdjacencyMode::Binary {
                    return Err(Error::invalid("observed block must be binary and at most n x n"));
                }
                for i in 0..n {
                    for j in i + 1..n {
                        if j >= k {
                            add_slot(vec![i * n + j, j * n + i]);
                        }
                    }
                }
            }
        }
        let slots = slot_cells.len();
        for c in cells.iter_mut() {
            *c = slots;
        }
        if let Layout::CompletionBlocks { observed } = &layout {
            for i in 0..observed.n() {
                for j in 0..observed.n() {
                    if observed.get(i, j) == 1.0 {
                        cells[i * n + j] = slots + 1;
                    }
                }
            }
        }
        for (s, cs) in slot_cells.iter().enumerate() {
            for &c in cs {
                cells[c] = s;
            }
        }
        let mut rng = rng::seeded(seed);
        let init: Vec<f64> = (0..slots * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self {
            n,
            layout,
            logits: Parameter::new(LOGITS_NAME, Tensor::new(&[slots, 2], init)?),
            cells: cells.into(),
            edge_column: (0..slots).map(|s| 2 * s).collect(),
            tau,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn slot_count(&self) -> usize {
        self.logits.value().shape()[0]
    }

    /// Slot that drives cell `(i, j)`, `None` for constant cells.
    pub fn slot_of(&self, i: usize, j: usize) -> Option<usize> {
        let c = self.cells[i * self.n + j];
        (c < self.slot_count()).then_some(c)
    }

    pub fn logits(&self) -> &Parameter {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Parameter {
        &mut self.logits
    }

    /// Fresh Gumbel noise for every logit, `[slots, 2]`.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor {
        let data = (0..self.slot_count() * 2).map(|_| gumbel_noise(rng)).collect();
        Tensor::new(&[self.slot_count(), 2], data).expect("noise shape")
    }

    /// Places the logits on `tape`.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Var {
        self.logits.bind(tape, track)
    }

    /// Soft edge values per slot, `[slots]`, for bound logits `l` and the given noise.
    pub fn soft_slots(&self, tape: &mut Tape, l: Var, noise: &Tensor) -> Result<Var> {
        let g = tape.constant(noise.clone());
        let perturbed = tape.add(l, g)?;
        let scaled = tape.scale(perturbed, 1.0 / self.tau);
        let probs = tape.softmax(scaled)?;
        let flat = tape.reshape(probs, &[self.slot_count() * 2])?;
        tape.gather(flat, self.edge_column.clone())
    }

    /// Places per-slot values into a flattened `[n * n]` adjacency.
    pub fn render(&self, tape: &mut Tape, slots: Var) -> Result<Var> {
        let consts = tape.constant(Tensor::new(&[2], vec![0.0, 1.0])?);
        let all = tape.concat(&[slots, consts], 0)?;
        tape.gather(all, self.cells.clone())
    }

    /// Differentiable soft sample, flattened `[n * n]`.
    pub fn sample_soft_var(&self, tape: &mut Tape, l: Var, noise: &Tensor) -> Result<Var> {
        let s = self.soft_slots(tape, l, noise)?;
        self.render(tape, s)
    }

    /// Binary sample whose gradient passes straight through the rounding.
    pub fn sample_hard_var(&self, tape: &mut Tape, l: Var, noise: &Tensor) -> Result<Var> {
        let s = self.soft_slots(tape, l, noise)?;
        let h = tape.round_straight_through(s);
        self.render(tape, h)
    }

    pub fn sample_soft<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AdjacencyMatrix> {
        let noise = self.draw_noise(rng);
        let mut tape = Tape::new();
        let l = self.bind(&mut tape, false);
        let v = self.sample_soft_var(&mut tape, l, &noise)?;
        AdjacencyMatrix::new(self.n, tape.value(v).data().to_vec(), AdjacencyMode::Soft)
    }

    pub fn sample_hard<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AdjacencyMatrix> {
        let noise = self.draw_noise(rng);
        let mut tape = Tape::new();
        let l = self.bind(&mut tape, false);
        let v = self.sample_hard_var(&mut tape, l, &noise)?;
        AdjacencyMatrix::new(self.n, tape.value(v).data().to_vec(), AdjacencyMode::Binary)
    }

    /// Noise-free `sigmoid(l_edge - l_noedge)` per cell; constant cells keep their value.
    pub fn edge_probabilities(&self) -> AdjacencyMatrix {
        let l = self.logits.value().data();
        let slots = self.slot_count();
        let values = self
            .cells
            .iter()
            .map(|&c| match c {
                c if c < slots => sigmoid(l[2 * c] - l[2 * c + 1]),
                c => (c - slots) as f64,
            })
            .collect();
        AdjacencyMatrix::new(self.n, values, AdjacencyMode::Soft).expect("probabilities are valid")
    }
}
