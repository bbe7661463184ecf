//! Message-passing dynamics learner and the learnable initial states of missing nodes.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::rng;

/// Dense layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<(Parameter, Parameter)>,
}

pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// `sizes` lists the input width followed by every layer's output width.
    /// Weights and biases start uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(prefix: &str, sizes: &[usize], rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-bound..bound)).collect() };
                let weight = Tensor::new(&[w[0], w[1]], draw(w[0] * w[1])).expect("weight shape");
                let bias = Tensor::new(&[w[1]], draw(w[1])).expect("bias shape");
                (
                    Parameter::new(format!("{prefix}.{k}.w"), weight),
                    Parameter::new(format!("{prefix}.{k}.b"), bias),
                )
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].0.value().shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").1.value().len()
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.layers.iter().flat_map(|(w, b)| [w, b])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers.iter_mut().flat_map(|(w, b)| [w, b])
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> BoundMlp {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|(w, b)| (w.bind(tape, track), b.bind(tape, track)))
                .collect(),
        }
    }
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.affine(h, w, b)?;
            if k + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Softmax,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerShape {
    pub d: usize,
    /// Hidden widths of the edge network followed by the message width.
    pub edge_sizes: Vec<usize>,
    pub node_hidden: usize,
    pub head: Head,
}

impl LearnerShape {
    pub fn new(d: usize, head: Head) -> Self {
        Self {
            d,
            edge_sizes: vec![64, 32, 16, 8],
            node_hidden: 32,
            head,
        }
    }
}

/// `x_i' = head(node_mlp([x_i ; sum_j adj_ji * edge_mlp([x_j ; x_i])]))`.
#[derive(Debug, Clone)]
pub struct DynamicsLearner {
    shape: LearnerShape,
    edge_mlp: Mlp,
    node_mlp: Mlp,
}

pub struct BoundLearner {
    edge: BoundMlp,
    node: BoundMlp,
}

impl BoundLearner {
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.edge.vars().chain(self.node.vars())
    }
}

/// Row indices for the ordered pairs `(j -> i)`, `j != i`, of `batch` stacked graphs.
struct PairIndex {
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    cell: Arc<[usize]>,
}

impl PairIndex {
    fn new(n: usize, batch: usize) -> Self {
        let pairs = n * n.saturating_sub(1);
        let mut src = Vec::with_capacity(batch * pairs);
        let mut dst = Vec::with_capacity(batch * pairs);
        let mut cell = Vec::with_capacity(batch * pairs);
        for b in 0..batch {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        src.push(b * n + j);
                        dst.push(b * n + i);
                        cell.push(j * n + i);
                    }
                }
            }
        }
        Self {
            src: src.into(),
            dst: dst.into(),
            cell: cell.into(),
        }
    }
}

impl DynamicsLearner {
    pub fn new(shape: LearnerShape, seed: u64) -> Result<Self> {
        if shape.d == 0 || shape.edge_sizes.is_empty() || shape.node_hidden == 0 {
            return Err(Error::invalid("learner widths must be positive"));
        }
        let mut rng = rng::seeded(seed);
        let mut edge_sizes = vec![2 * shape.d];
        edge_sizes.extend(&shape.edge_sizes);
        let edge_mlp = Mlp::new("dyn.edge_mlp", &edge_sizes, &mut rng)?;
        let msg = edge_mlp.output_width();
        let node_mlp = Mlp::new("dyn.node_mlp", &[shape.d + msg, shape.node_hidden, shape.d], &mut rng)?;
        Ok(Self {
            shape,
            edge_mlp,
            node_mlp,
        })
    }

    pub fn shape(&self) -> &LearnerShape {
        &self.shape
    }

    pub fn d(&self) -> usize {
        self.shape.d
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.edge_mlp.params().chain(self.node_mlp.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.edge_mlp.params_mut().chain(self.node_mlp.params_mut()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value().len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, track: bool) -> BoundLearner {
        BoundLearner {
            edge: self.edge_mlp.bind(tape, track),
            node: self.node_mlp.bind(tape, track),
        }
    }

    /// Adds gradients for every bound learner variable into the parameter buffers.
    pub fn accumulate(&mut self, bound: &BoundLearner, grads: &crate::autodiff::Gradients) -> Result<()> {
        for (p, v) in self.params_mut().into_iter().zip(bound.vars()) {
            p.accumulate_from(grads, v)?;
        }
        Ok(())
    }

    /// One step for `batch` graphs sharing the flattened `[n * n]` adjacency `adj`.
    /// `x` is `[batch * n, d]`, graph-major.
    pub fn step_var(&self, tape: &mut Tape, bound: &BoundLearner, adj: Var, x: Var, n: usize, batch: usize) -> Result<Var> {
        let d = self.d();
        if tape.value(x).shape() != [batch * n, d] {
            return Err(Error::shape(
                "dynamics_step",
                format!("states {:?} for {batch} graphs of {n} nodes with d={d}", tape.value(x).shape()),
            ));
        }
        if tape.value(adj).len() != n * n {
            return Err(Error::shape(
                "dynamics_step",
                format!("adjacency of {} entries for {n} nodes", tape.value(adj).len()),
            ));
        }
        let msg = self.edge_mlp.output_width();
        let h = if n > 1 {
            let idx = PairIndex::new(n, batch);
            let xj = tape.gather(x, idx.src)?;
            let xi = tape.gather(x, idx.dst)?;
            let pair = tape.concat(&[xj, xi], 1)?;
            let m = bound.edge.forward(tape, pair)?;
            let w = tape.gather(adj, idx.cell)?;
            let weighted = tape.mul_rows(m, w)?;
            let grouped = tape.reshape(weighted, &[batch * n, n - 1, msg])?;
            tape.sum_axis(grouped, 1)?
        } else {
            tape.constant(Tensor::zeros(&[batch * n, msg]))
        };
        let inp = tape.concat(&[x, h], 1)?;
        let out = bound.node.forward(tape, inp)?;
        match self.shape.head {
            Head::Softmax => tape.softmax(out),
            Head::Identity => Ok(out),
        }
    }

    /// `p` chained steps; prediction `t` is fed back as input for `t + 1`.
    pub fn rollout_var(&self, tape: &mut Tape, bound: &BoundLearner, adj: Var, x0: Var, n: usize, batch: usize, p: usize) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(p);
        let mut x = x0;
        for _ in 0..p {
            x = self.step_var(tape, bound, adj, x, n, batch)?;
            out.push(x);
        }
        Ok(out)
    }

    /// Single-graph step on plain values; `states` is `[n][d]` flattened.
    pub fn dynamics_step(&self, adj: &AdjacencyMatrix, states: &[f64]) -> Result<Vec<f64>> {
        Ok(self.rollout(adj, states, 1)?.pop().expect("one step"))
    }

    pub fn rollout(&self, adj: &AdjacencyMatrix, x0: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
        let n = adj.n();
        if x0.len() != n * self.d() {
            return Err(Error::shape(
                "dynamics_step",
                format!("{} state values for {n} nodes with d={}", x0.len(), self.d()),
            ));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let a = tape.constant(Tensor::new(&[n * n], adj.values().to_vec())?);
        let x = tape.constant(Tensor::new(&[n, self.d()], x0.to_vec())?);
        let steps = self.rollout_var(&mut tape, &bound, a, x, n, 1, p)?;
        Ok(steps.into_iter().map(|v| tape.value(v).data().to_vec()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho {
    /// Per-node sigmoid, normalized to sum 1.
    SigmoidOnehot,
    Identity,
}

/// Learnable initial states `gamma` for the missing nodes of every sample,
/// stored as `[samples, missing * d]`.
#[derive(Debug, Clone)]
pub struct InitialStateLearner {
    gamma: Parameter,
    missing: usize,
    d: usize,
    rho: Rho,
}

impl InitialStateLearner {
    /// Raw values start from N(0, 1) for `SigmoidOnehot` and uniform on [0, 1] for `Identity`.
    pub fn new(name: &str, samples: usize, missing: usize, d: usize, rho: Rho, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let len = samples * missing * d;
        let data: Vec<f64> = match rho {
            Rho::SigmoidOnehot => (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
            Rho::Identity => (0..len).map(|_| rng.random::<f64>()).collect(),
        };
        Self {
            gamma: Parameter::new(name, Tensor::new(&[samples, missing * d], data).expect("gamma shape")),
            missing,
            d,
            rho,
        }
    }

    pub fn from_raw(name: &str, raw: Tensor, missing: usize, d: usize, rho: Rho) -> Result<Self> {
        if raw.shape().len() != 2 || raw.shape()[1] != missing * d {
            return Err(Error::shape("initial_states", format!("{:?} for {missing} nodes with d={d}", raw.shape())));
        }
        Ok(Self {
            gamma: Parameter::new(name, raw),
            missing,
            d,
            rho,
        })
    }

    pub fn samples(&self) -> usize {
        self.gamma.value().shape()[0]
    }

    pub fn missing(&self) -> usize {
        self.missing
    }

    pub fn rho(&self) -> Rho {
        self.rho
    }

    pub fn param(&self) -> &Parameter {
        &self.gamma
    }

    pub fn param_mut(&mut self) -> &mut Parameter {
        &mut self.gamma
    }

    fn row_width(&self) -> usize {
        self.missing * self.d
    }

    /// Raw rows for the given samples as a leaf, `[rows.len(), missing * d]`.
    pub fn bind_rows(&self, tape: &mut Tape, rows: &[usize], track: bool) -> Result<Var> {
        let w = self.row_width();
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            if r >= self.samples() {
                return Err(Error::invalid(format!("sample {r} of {}", self.samples())));
            }
            data.extend_from_slice(&self.gamma.value().data()[r * w..(r + 1) * w]);
        }
        Ok(tape.leaf(Tensor::new(&[rows.len(), w], data)?, track))
    }

    /// Applies `rho` to bound raw rows; output `[rows * missing, d]`.
    pub fn render_var(&self, tape: &mut Tape, raw: Var) -> Result<Var> {
        let rows = tape.value(raw).shape()[0];
        let x = tape.reshape(raw, &[rows * self.missing, self.d])?;
        match self.rho {
            Rho::Identity => Ok(x),
            Rho::SigmoidOnehot => {
                let s = tape.sigmoid(x);
                let total = tape.sum_axis(s, 1)?;
                let inv = tape.reciprocal(total);
                tape.mul_rows(s, inv)
            }
        }
    }

    /// Rendered initial states of sample `s`, `[missing][d]` flattened.
    pub fn render(&self, s: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let raw = self.bind_rows(&mut tape, &[s], false)?;
        let v = self.render_var(&mut tape, raw)?;
        Ok(tape.value(v).data().to_vec())
    }
}

/// Observed block followed by the missing block, `[n][d]` flattened.
pub fn concat_states(x_o: &[f64], x_m: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 || x_o.len() % d != 0 || x_m.len() % d != 0 {
        return Err(Error::shape("concat_states", format!("{} + {} values with d={d}", x_o.len(), x_m.len())));
    }
    let mut out = x_o.to_vec();
    out.extend_from_slice(x_m);
    Ok(out)
}

/// Per-graph concatenation on the tape: `x_o` is `[batch * n_o, d]`, `x_m`
/// `[batch * m, d]`; the result is `[batch * (n_o + m), d]`, graph-major.
pub fn concat_states_var(tape: &mut Tape, x_o: Var, x_m: Var, batch: usize, d: usize) -> Result<Var> {
    let lo = tape.value(x_o).len();
    let lm = tape.value(x_m).len();
    if batch == 0 || lo % (batch * d) != 0 || lm % (batch * d) != 0 {
        return Err(Error::shape("concat_states", format!("{lo} + {lm} values for {batch} graphs with d={d}")));
    }
    let o = tape.reshape(x_o, &[batch, lo / batch])?;
    let m = tape.reshape(x_m, &[batch, lm / batch])?;
    let joined = tape.concat(&[o, m], 1)?;
    tape.reshape(joined, &[(lo + lm) / d, d])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_ws, AdjacencyMode};

    fn random_states(n: usize, d: usize, rng: &mut rng::Rng) -> Vec<f64> {
        (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    fn random_soft_adj(n: usize, rng: &mut rng::Rng) -> AdjacencyMatrix {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    v[i * n + j] = rng.random_range(0.0..1.0);
                }
            }
        }
        AdjacencyMatrix::new(n, v, AdjacencyMode::Soft).unwrap()
    }

    #[test]
    fn parameter_count() {
        let l = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 0).unwrap();
        let edge = (4 * 64 + 64) + (64 * 32 + 32) + (32 * 16 + 16) + (16 * 8 + 8);
        let node = (10 * 32 + 32) + (32 * 2 + 2);
        assert_eq!(l.parameter_count(), edge + node);
    }

    #[test]
    fn empty_adjacency_gives_node_local_output() {
        let l = DynamicsLearner::new(LearnerShape::new(1, Head::Identity), 1).unwrap();
        let zero = AdjacencyMatrix::zeros(4);
        let a = l.dynamics_step(&zero, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = l.dynamics_step(&zero, &[0.1, 0.9, 0.7, 0.4]).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[3], b[3]);
        assert_ne!(a[1], b[1]);
    }

    #[test]
    fn softmax_head_rows_sum_to_one_through_rollout() {
        let l = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 2).unwrap();
        let mut rng = rng::seeded(1);
        let adj = random_soft_adj(6, &mut rng);
        let x = random_states(6, 2, &mut rng);
        for step in l.rollout(&adj, &x, 5).unwrap() {
            for row in step.chunks(2) {
                assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rollout_is_composition_of_steps() {
        let l = DynamicsLearner::new(LearnerShape::new(1, Head::Identity), 3).unwrap();
        let g = generate_ws(8, 4, 0.2, 0).unwrap().to_adjacency();
        let mut rng = rng::seeded(2);
        let x = random_states(8, 1, &mut rng);
        assert!(l.rollout(&g, &x, 0).unwrap().is_empty());
        let r = l.rollout(&g, &x, 2).unwrap();
        assert_eq!(r[1], l.dynamics_step(&g, &r[0]).unwrap());
        assert_eq!(r, l.rollout(&g, &x, 2).unwrap());
    }

    #[test]
    fn permutation_equivariance() {
        let l = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 4).unwrap();
        let mut rng = rng::seeded(3);
        let n = 7;
        for _ in 0..10 {
            let adj = random_soft_adj(n, &mut rng);
            let x = random_states(n, 2, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let padj = adj.permuted(&perm);
            let px: Vec<f64> = perm.iter().flat_map(|&p| x[p * 2..p * 2 + 2].to_vec()).collect();
            let out = l.dynamics_step(&adj, &x).unwrap();
            let pout = l.dynamics_step(&padj, &px).unwrap();
            for (a, &p) in perm.iter().enumerate() {
                for k in 0..2 {
                    assert!((pout[a * 2 + k] - out[p * 2 + k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn binary_and_soft_adjacency_agree_on_0_1_values() {
        let l = DynamicsLearner::new(LearnerShape::new(1, Head::Identity), 5).unwrap();
        let g = generate_ws(8, 4, 0.2, 0).unwrap().to_adjacency();
        let soft = AdjacencyMatrix::new(8, g.values().to_vec(), AdjacencyMode::Soft).unwrap();
        let mut rng = rng::seeded(4);
        let x = random_states(8, 1, &mut rng);
        assert_eq!(l.dynamics_step(&g, &x).unwrap(), l.dynamics_step(&soft, &x).unwrap());
    }

    #[test]
    fn batched_step_matches_single_graph_steps() {
        let l = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 6).unwrap();
        let mut rng = rng::seeded(5);
        let adj = random_soft_adj(5, &mut rng);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| random_states(5, 2, &mut rng)).collect();
        let mut tape = Tape::new();
        let bound = l.bind(&mut tape, false);
        let a = tape.constant(Tensor::new(&[25], adj.values().to_vec()).unwrap());
        let x = tape.constant(Tensor::new(&[15, 2], xs.concat()).unwrap());
        let out = l.step_var(&mut tape, &bound, a, x, 5, 3).unwrap();
        for (b, xb) in xs.iter().enumerate() {
            let single = l.dynamics_step(&adj, xb).unwrap();
            assert_eq!(&tape.value(out).data()[b * 10..(b + 1) * 10], single.as_slice());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let l = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 6).unwrap();
        assert!(l.dynamics_step(&AdjacencyMatrix::zeros(3), &[0.5; 8]).is_err());
    }

    /// Gradients w.r.t. parameters, adjacency and states against central differences.
    #[test]
    fn step_gradients_match_finite_differences() {
        let mut rng = rng::seeded(7);
        let n = 5;
        for case in 0..3u64 {
            let head = if case % 2 == 0 { Head::Softmax } else { Head::Identity };
            let d = if head == Head::Softmax { 2 } else { 1 };
            let mut l = DynamicsLearner::new(LearnerShape::new(d, head), case).unwrap();
            let adj = random_soft_adj(n, &mut rng).values().to_vec();
            let x = random_states(n, d, &mut rng);
            let w: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eval = |l: &DynamicsLearner, adj: &[f64], x: &[f64], track: bool| {
                let mut tape = Tape::new();
                let bound = l.bind(&mut tape, track);
                let a = tape.leaf(Tensor::new(&[n * n], adj.to_vec()).unwrap(), track);
                let xv = tape.leaf(Tensor::new(&[n, d], x.to_vec()).unwrap(), track);
                let out = l.rollout_var(&mut tape, &bound, a, xv, n, 1, 2).unwrap()[1];
                let wv = tape.constant(Tensor::new(&[n, d], w.clone()).unwrap());
                let prod = tape.mul(out, wv).unwrap();
                let loss = tape.sum(prod);
                let value = tape.value(loss).item();
                let grads = if track { Some(tape.backward(loss).unwrap()) } else { None };
                (value, grads.map(|g| {
                    let params: Vec<Vec<f64>> = bound.vars().map(|v| g.get(v).unwrap().to_vec()).collect();
                    (params, g.get(a).unwrap().to_vec(), g.get(xv).unwrap().to_vec())
                }))
            };
            let (_, g) = eval(&l, &adj, &x, true);
            let (gp, ga, gx) = g.unwrap();
            let h = 1e-6;
            let close = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0) < 1e-5;
            for k in 0..n * n {
                let (mut up, mut down) = (adj.clone(), adj.clone());
                up[k] += h;
                down[k] -= h;
                let num = (eval(&l, &up, &x, false).0 - eval(&l, &down, &x, false).0) / (2.0 * h);
                assert!(close(ga[k], num), "adj {k}: {} vs {num}", ga[k]);
            }
            for k in 0..n * d {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[k] += h;
                down[k] -= h;
                let num = (eval(&l, &adj, &up, false).0 - eval(&l, &adj, &down, false).0) / (2.0 * h);
                assert!(close(gx[k], num), "x {k}: {} vs {num}", gx[k]);
            }
            // spot-check a few entries of every parameter
            for (pi, grad) in gp.iter().enumerate() {
                for k in [0, grad.len() / 2, grad.len() - 1] {
                    let orig = l.params()[pi].value().data()[k];
                    l.params_mut()[pi].value_mut().data_mut()[k] = orig + h;
                    let up = eval(&l, &adj, &x, false).0;
                    l.params_mut()[pi].value_mut().data_mut()[k] = orig - h;
                    let down = eval(&l, &adj, &x, false).0;
                    l.params_mut()[pi].value_mut().data_mut()[k] = orig;
                    let num = (up - down) / (2.0 * h);
                    assert!(close(grad[k], num), "param {pi}[{k}]: {} vs {num}", grad[k]);
                }
            }
        }
    }

    #[test]
    fn render_examples() {
        let raw = Tensor::new(&[1, 2], vec![0.3, -1.2]).unwrap();
        let id = InitialStateLearner::from_raw("init.gamma", raw, 2, 1, Rho::Identity).unwrap();
        assert_eq!(id.render(0).unwrap(), vec![0.3, -1.2]);
        let raw = Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap();
        let oh = InitialStateLearner::from_raw("init.gamma", raw, 1, 2, Rho::SigmoidOnehot).unwrap();
        assert_eq!(oh.render(0).unwrap(), vec![0.5, 0.5]);
        assert!(oh.render(1).is_err());
    }

    #[test]
    fn sigmoid_onehot_rows_are_distributions() {
        let l = InitialStateLearner::new("init.gamma", 50, 3, 2, Rho::SigmoidOnehot, 9);
        for s in 0..50 {
            for row in l.render(s).unwrap().chunks(2) {
                assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
                assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concat_examples() {
        let x_o = vec![0.1, 0.2, 0.3];
        assert_eq!(concat_states(&x_o, &[], 1).unwrap(), x_o);
        let joined = concat_states(&[0.1, 0.2], &[0.9], 1).unwrap();
        assert_eq!(&joined[..2], &[0.1, 0.2]);
        assert_eq!(&joined[2..], &[0.9]);
        assert!(concat_states(&[0.1, 0.2, 0.3], &[0.9], 2).is_err());
    }

    #[test]
    fn gradient_flows_into_missing_block() {
        let l = DynamicsLearner::new(LearnerShape::new(1, Head::Identity), 11).unwrap();
        let init = InitialStateLearner::new("init.gamma", 2, 1, 1, Rho::Identity, 3);
        let adj = generate_ws(4, 2, 0.0, 0).unwrap().to_adjacency();
        let observed = vec![0.2, 0.4, 0.6, 0.3, 0.5, 0.7];
        let eval = |init: &InitialStateLearner, track: bool| {
            let mut tape = Tape::new();
            let bound = l.bind(&mut tape, false);
            let a = tape.constant(Tensor::new(&[16], adj.values().to_vec()).unwrap());
            let xo = tape.constant(Tensor::new(&[6, 1], observed.clone()).unwrap());
            let raw = init.bind_rows(&mut tape, &[1, 0], track).unwrap();
            let xm = init.render_var(&mut tape, raw).unwrap();
            let x = concat_states_var(&mut tape, xo, xm, 2, 1).unwrap();
            let out = l.step_var(&mut tape, &bound, a, x, 4, 2).unwrap();
            // loss only on observed node 0 of each graph
            let first = tape.gather(out, vec![0usize, 4].into()).unwrap();
            let sq = tape.square(first);
            let loss = tape.sum(sq);
            let v = tape.value(loss).item();
            (v, if track { tape.backward(loss).unwrap().get(raw).map(|g| g.to_vec()) } else { None })
        };
        let (_, g) = eval(&init, true);
        let g = g.unwrap();
        assert!(g.iter().all(|v| v.abs() > 0.0));
        let h = 1e-6;
        for (k, row) in [1usize, 0].iter().enumerate() {
            let mut up = init.clone();
            up.param_mut().value_mut().data_mut()[*row] += h;
            let mut down = init.clone();
            down.param_mut().value_mut().data_mut()[*row] -= h;
            let num = (eval(&up, false).0 - eval(&down, false).0) / (2.0 * h);
            assert!((g[k] - num).abs() < 1e-6, "{} vs {num}", g[k]);
        }
    }
}
