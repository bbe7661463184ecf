//! Optimization of the generator, dynamics learner and initial states.

mod complete;
mod recon;

pub use complete::{optimize_test_states, train_completion, Completion, CompletionTrainer, GAMMA_NAME};
pub use recon::{train_reconstruction, Reconstruction, ReconTrainer};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameter, Tape, Tensor, Var};
use crate::data::Series;
use crate::error::{Error, Result};
use crate::gumbel::LayoutKind;
use crate::model::{Head, LearnerShape};
use crate::sim::Dynamics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    NllDiscrete,
    MseContinuous,
}

impl LossKind {
    pub fn for_dynamics(dynamics: &Dynamics) -> Self {
        if dynamics.is_discrete() {
            LossKind::NllDiscrete
        } else {
            LossKind::MseContinuous
        }
    }
}

/// What one phase round means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundUnit {
    /// One mini-batch Adam step.
    Batch,
    /// One shuffled pass over the phase's records, in mini-batch steps.
    Pass,
}

impl RoundUnit {
    /// Adam steps that make up `rounds` rounds over `pool` records.
    pub fn steps(self, rounds: usize, pool: usize, batch_size: usize) -> usize {
        match self {
            RoundUnit::Batch => rounds,
            RoundUnit::Pass => rounds * pool.div_ceil(batch_size.max(1)).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Records per autodiff tape; batches are evaluated chunk by chunk.
    pub chunk_size: usize,
    /// Rollout length `P`; at most the record length minus one.
    pub horizon: usize,
    pub round_unit: RoundUnit,
    /// Dynamics-learner rounds per epoch.
    pub dyn_rounds: usize,
    /// Initial-state rounds per epoch (completion only).
    pub state_rounds: usize,
    /// Generator rounds per epoch.
    pub net_rounds: usize,
    pub lr_dyn: f64,
    pub lr_state: f64,
    pub lr_net: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    pub loss_kind: LossKind,
    pub layout: LayoutKind,
    pub edge_sizes: Vec<usize>,
    pub node_hidden: usize,
    /// Epochs without a `min_delta` validation improvement before stopping.
    pub patience: usize,
    pub min_delta: f64,
    /// Keep the missing nodes' initial states at their random initialization.
    pub skip_state_phase: bool,
    /// Adam steps for the test-split initial states.
    pub test_state_rounds: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_dynamics(dynamics: &Dynamics) -> Self {
        let discrete = dynamics.is_discrete();
        Self {
            epochs: 40,
            batch_size: 128,
            chunk_size: 32,
            horizon: if discrete { 1 } else { 9 },
            round_unit: if discrete { RoundUnit::Batch } else { RoundUnit::Pass },
            dyn_rounds: 30,
            state_rounds: 10,
            net_rounds: 10,
            lr_dyn: 0.001,
            lr_state: 0.1,
            lr_net: 0.1,
            tau_start: 5.0,
            tau_end: 0.5,
            loss_kind: LossKind::for_dynamics(dynamics),
            layout: LayoutKind::UpperTriangleSymmetric,
            edge_sizes: vec![64, 32, 16, 8],
            node_hidden: 32,
            patience: 10,
            min_delta: 1e-5,
            skip_state_phase: !discrete,
            test_state_rounds: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr_dyn", self.lr_dyn),
            ("lr_state", self.lr_state),
            ("lr_net", self.lr_net),
            ("tau_end", self.tau_end),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau_start < self.tau_end {
            return Err(Error::invalid("tau_start must be at least tau_end"));
        }
        if self.batch_size == 0 || self.chunk_size == 0 {
            return Err(Error::invalid("batch_size and chunk_size must be positive"));
        }
        if self.edge_sizes.is_empty() || self.edge_sizes.contains(&0) || self.node_hidden == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn learner_shape(&self, d: usize) -> LearnerShape {
        LearnerShape {
            d,
            edge_sizes: self.edge_sizes.clone(),
            node_hidden: self.node_hidden,
            head: match self.loss_kind {
                LossKind::NllDiscrete => Head::Softmax,
                LossKind::MseContinuous => Head::Identity,
            },
        }
    }

    fn steps(&self, rounds: usize, pool: usize) -> usize {
        self.round_unit.steps(rounds, pool, self.batch_size)
    }

    fn check_horizon(&self, series: &Series) -> Result<()> {
        if self.horizon + 1 > series.len() {
            return Err(Error::invalid(format!(
                "horizon {} needs records of at least {} states, found {}",
                self.horizon,
                self.horizon + 1,
                series.len()
            )));
        }
        Ok(())
    }
}

/// Mean loss of `pred` against `truth`, both `[rows, d]`.
pub fn loss_var(tape: &mut Tape, pred: Var, truth: Var, kind: LossKind) -> Result<Var> {
    let shape = tape.value(pred).shape().to_vec();
    if shape != tape.value(truth).shape() || shape.len() != 2 {
        return Err(Error::shape(
            "loss",
            format!("{:?} vs {:?}", shape, tape.value(truth).shape()),
        ));
    }
    match kind {
        LossKind::MseContinuous => {
            let diff = tape.sub(pred, truth)?;
            let sq = tape.square(diff);
            tape.mean(sq)
        }
        LossKind::NllDiscrete => {
            let logp = tape.log_clamped(pred, 1e-12);
            let picked = tape.mul(logp, truth)?;
            let total = tape.sum(picked);
            Ok(tape.scale(total, -1.0 / shape[0] as f64))
        }
    }
}

/// [`loss_var`] on plain tensors.
pub fn compute_loss(pred: &Tensor, truth: &Tensor, kind: LossKind) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let t = tape.constant(truth.clone());
    let l = loss_var(&mut tape, p, t, kind)?;
    Ok(tape.value(l).item())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,auc_if_monitored\n");
        for r in &self.epochs {
            let auc = r.auc.map(|a| format!("{a:.17e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.17e},{:.17e},{}", r.epoch, r.train_loss, r.val_loss, auc);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Tracks the best validation loss and the patience counter.
struct EarlyStop {
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
    patience: usize,
    min_delta: f64,
}

impl EarlyStop {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
            patience: cfg.patience,
            min_delta: cfg.min_delta,
        }
    }

    /// Returns whether `val` is a new best.
    fn observe(&mut self, epoch: usize, val: f64) -> bool {
        let improved = val < self.best - self.min_delta || self.best_epoch.is_none();
        if val < self.best {
            self.best = val;
            self.best_epoch = Some(epoch);
            self.stale = if improved { 0 } else { self.stale + 1 };
            return true;
        }
        self.stale += 1;
        false
    }

    fn should_stop(&self) -> bool {
        self.patience > 0 && self.stale >= self.patience
    }
}

/// Splits `rows` into consecutive chunks and runs `f(chunk, weight)` on each,
/// where `weight` is the chunk's share of the batch. Returns the weighted sum.
fn for_chunks(rows: &[usize], chunk: usize, mut f: impl FnMut(&[usize], f64) -> Result<f64>) -> Result<f64> {
    let total = rows.len() as f64;
    let mut sum = 0.0;
    for c in rows.chunks(chunk.max(1)) {
        sum += f(c, c.len() as f64 / total)?;
    }
    Ok(sum)
}

/// Loss of rolled-out predictions against the recorded states at `t = 1..=P`.
/// With `keep` set, only those rows of each prediction enter the loss.
fn rollout_loss(
    tape: &mut Tape,
    preds: &[Var],
    series: &Series,
    rows: &[usize],
    keep: Option<&std::sync::Arc<[usize]>>,
    kind: LossKind,
) -> Result<Var> {
    let mut p = Vec::with_capacity(preds.len());
    let mut t = Vec::with_capacity(preds.len());
    for (step, &pred) in preds.iter().enumerate() {
        let pred = match keep {
            Some(idx) => tape.gather(pred, idx.clone())?,
            None => pred,
        };
        p.push(pred);
        t.push(tape.constant(series.batch_at(rows, step + 1)));
    }
    let p = tape.concat(&p, 0)?;
    let t = tape.concat(&t, 0)?;
    loss_var(tape, p, t, kind)
}

fn zero_all(params: &mut [&mut Parameter]) {
    for p in params.iter_mut() {
        p.zero_grad();
    }
}
