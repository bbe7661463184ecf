use std::sync::Arc;

use super::{for_chunks, rollout_loss, zero_all, EarlyStop, EpochRecord, LossKind, TrainConfig, TrainHistory};
use crate::autodiff::{fingerprint, Adam, Tape, Tensor, Var};
use crate::data::{BatchCursor, ObservedData, Series};
use crate::error::{Error, Result};
use crate::eval::aligned_missing_auc;
use crate::graph::AdjacencyMatrix;
use crate::gumbel::{anneal, GumbelGenerator, Layout};
use crate::model::{concat_states_var, BoundLearner, DynamicsLearner, InitialStateLearner, Rho};
use crate::rng;

pub const GAMMA_NAME: &str = "init.gamma";

/// Trained completion artifacts. `states` holds one row per dataset sample;
/// rows outside the training and validation splits are never fitted.
#[derive(Debug, Clone)]
pub struct Completion {
    pub learner: DynamicsLearner,
    pub generator: GumbelGenerator,
    pub states: InitialStateLearner,
    pub history: TrainHistory,
}

fn rho_for(kind: LossKind) -> Rho {
    match kind {
        LossKind::NllDiscrete => Rho::SigmoidOnehot,
        LossKind::MseContinuous => Rho::Identity,
    }
}

/// Rows `k * n + i` for the observed nodes `i < observed` of `batch` stacked graphs.
fn observed_rows(batch: usize, n: usize, observed: usize) -> Arc<[usize]> {
    (0..batch).flat_map(|k| (0..observed).map(move |i| k * n + i)).collect()
}

/// Rolls out the full graph from `x_o ⊕ rho(raw)` and scores the observed nodes only.
#[allow(clippy::too_many_arguments)]
fn observed_loss(
    tape: &mut Tape,
    learner: &DynamicsLearner,
    bound: &BoundLearner,
    adj: Var,
    states: &InitialStateLearner,
    raw: Var,
    series: &Series,
    rows: &[usize],
    n: usize,
    horizon: usize,
    kind: LossKind,
) -> Result<Var> {
    let b = rows.len();
    let xo = tape.constant(series.batch_at(rows, 0));
    let xm = states.render_var(tape, raw)?;
    let x0 = concat_states_var(tape, xo, xm, b, series.d())?;
    let preds = learner.rollout_var(tape, bound, adj, x0, n, b, horizon)?;
    let keep = observed_rows(b, n, series.n());
    rollout_loss(tape, &preds, series, rows, Some(&keep), kind)
}

/// The three-phase completion procedure over observed data only.
pub struct CompletionTrainer {
    cfg: TrainConfig,
    series: Series,
    n: usize,
    missing: usize,
    kind: LossKind,
    a_o: Tensor,
    pub learner: DynamicsLearner,
    pub generator: GumbelGenerator,
    pub states: InitialStateLearner,
    adam_dyn: Adam,
    adam_state: Adam,
    adam_net: Adam,
    cursor: BatchCursor,
    state_cursor: BatchCursor,
    noise_rng: rng::Rng,
}

impl CompletionTrainer {
    pub fn new(obs: &ObservedData, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let series = obs.series.clone();
        cfg.check_horizon(&series)?;
        if series.split.train.is_empty() {
            return Err(Error::Training("empty training split".into()));
        }
        let part = &obs.partition;
        let (n, missing) = (part.n(), part.missing_count);
        if series.n() != n - missing {
            return Err(Error::invalid("observed series does not match the partition"));
        }
        let seed = cfg.seed;
        let learner = DynamicsLearner::new(cfg.learner_shape(series.d()), rng::derive_seed(seed, 1))?;
        let generator = GumbelGenerator::new(
            n,
            Layout::CompletionBlocks {
                observed: part.a_o.clone(),
            },
            cfg.tau_start,
            rng::derive_seed(seed, 2),
        )?;
        let states = InitialStateLearner::new(
            GAMMA_NAME,
            series.sample_count(),
            missing,
            series.d(),
            rho_for(cfg.loss_kind),
            rng::derive_seed(seed, 6),
        );
        let fitted: Vec<usize> = series.split.train.iter().chain(&series.split.val).copied().collect();
        let no = series.n();
        Ok(Self {
            a_o: Tensor::new(&[no * no], part.a_o.values().to_vec())?,
            cursor: BatchCursor::new(&series.split.train, rng::derive_seed(seed, 3)),
            state_cursor: BatchCursor::new(&fitted, rng::derive_seed(seed, 8)),
            noise_rng: rng::seeded(rng::derive_seed(seed, 4)),
            kind: cfg.loss_kind,
            adam_dyn: Adam::new(cfg.lr_dyn),
            adam_state: Adam::new(cfg.lr_state),
            adam_net: Adam::new(cfg.lr_net),
            cfg: cfg.clone(),
            series,
            n,
            missing,
            learner,
            generator,
            states,
        })
    }

    pub fn learner_fingerprint(&self) -> String {
        fingerprint(self.learner.params())
    }

    pub fn generator_fingerprint(&self) -> String {
        fingerprint([self.generator.logits()])
    }

    pub fn states_fingerprint(&self) -> String {
        fingerprint([self.states.param()])
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.generator.tau = anneal(self.cfg.tau_start, self.cfg.tau_end, epoch, self.cfg.epochs);
    }

    fn observed_batch(&mut self, rows: &[usize], train: bool) -> Result<f64> {
        let (no, p, chunk, kind) = (self.series.n(), self.cfg.horizon, self.cfg.chunk_size, self.kind);
        let Self {
            series, learner, a_o, ..
        } = self;
        if train {
            zero_all(&mut learner.params_mut());
        }
        for_chunks(rows, chunk, |c, weight| {
            let mut tape = Tape::new();
            let bound = learner.bind(&mut tape, train);
            let adj = tape.constant(a_o.clone());
            let x0 = tape.constant(series.batch_at(c, 0));
            let preds = learner.rollout_var(&mut tape, &bound, adj, x0, no, c.len(), p)?;
            let loss = rollout_loss(&mut tape, &preds, series, c, None, kind)?;
            let value = tape.value(loss).item();
            if train {
                let scaled = tape.scale(loss, weight);
                let grads = tape.backward(scaled)?;
                learner.accumulate(&bound, &grads)?;
            }
            Ok(value * weight)
        })
    }

    fn full_batch(&mut self, rows: &[usize], noise: &Tensor, hard: bool, train_state: bool, train_net: bool) -> Result<f64> {
        let (n, p, chunk, kind) = (self.n, self.cfg.horizon, self.cfg.chunk_size, self.kind);
        let Self {
            series,
            learner,
            generator,
            states,
            ..
        } = self;
        if train_state {
            states.param_mut().zero_grad();
        }
        if train_net {
            generator.logits_mut().zero_grad();
        }
        for_chunks(rows, chunk, |c, weight| {
            let mut tape = Tape::new();
            let bound = learner.bind(&mut tape, false);
            let l = generator.bind(&mut tape, train_net);
            let adj = if hard {
                generator.sample_hard_var(&mut tape, l, noise)?
            } else {
                generator.sample_soft_var(&mut tape, l, noise)?
            };
            let raw = states.bind_rows(&mut tape, c, train_state)?;
            let loss = observed_loss(&mut tape, learner, &bound, adj, states, raw, series, c, n, p, kind)?;
            let value = tape.value(loss).item();
            if train_state || train_net {
                let scaled = tape.scale(loss, weight);
                let grads = tape.backward(scaled)?;
                if train_state {
                    if let Some(g) = grads.get(raw) {
                        states.param_mut().accumulate_rows(c, g)?;
                    }
                }
                if train_net {
                    generator.logits_mut().accumulate_from(&grads, l)?;
                }
            }
            Ok(value * weight)
        })
    }

    /// Learner rounds on the observed subgraph `A_o` and observed states.
    pub fn dynamics_phase(&mut self, rounds: usize) -> Result<f64> {
        let steps = self.cfg.steps(rounds, self.series.split.train.len());
        let mut total = 0.0;
        for _ in 0..steps {
            let rows = self.cursor.next_batch(self.cfg.batch_size);
            total += self.observed_batch(&rows, true)?;
            self.adam_dyn.step(&mut self.learner.params_mut())?;
        }
        Ok(if steps > 0 { total / steps as f64 } else { 0.0 })
    }

    /// Initial-state rounds: fresh soft adjacency per round, only `gamma` moves.
    pub fn state_phase(&mut self, rounds: usize) -> Result<f64> {
        if self.missing == 0 {
            return Ok(0.0);
        }
        let steps = self.cfg.steps(rounds, self.series.split.train.len() + self.series.split.val.len());
        let mut total = 0.0;
        for _ in 0..steps {
            let rows = self.state_cursor.next_batch(self.cfg.batch_size);
            let noise = self.generator.draw_noise(&mut self.noise_rng);
            total += self.full_batch(&rows, &noise, false, true, false)?;
            self.adam_state.step(&mut [self.states.param_mut()])?;
        }
        Ok(if steps > 0 { total / steps as f64 } else { 0.0 })
    }

    /// Structure rounds: hard samples with straight-through gradients, only the logits move.
    pub fn structure_phase(&mut self, rounds: usize) -> Result<f64> {
        if self.missing == 0 {
            return Ok(0.0);
        }
        let steps = self.cfg.steps(rounds, self.series.split.train.len());
        let mut total = 0.0;
        for _ in 0..steps {
            let rows = self.cursor.next_batch(self.cfg.batch_size);
            let noise = self.generator.draw_noise(&mut self.noise_rng);
            total += self.full_batch(&rows, &noise, true, false, true)?;
            self.adam_net.step(&mut [self.generator.logits_mut()])?;
        }
        Ok(if steps > 0 { total / steps as f64 } else { 0.0 })
    }

    /// Observed-node loss on the validation split under a fixed-seed hard sample.
    pub fn validation_loss(&mut self) -> Result<f64> {
        let rows = if self.series.split.val.is_empty() {
            self.series.split.train.clone()
        } else {
            self.series.split.val.clone()
        };
        if self.missing == 0 {
            return self.observed_batch(&rows, false);
        }
        let noise = self
            .generator
            .draw_noise(&mut rng::seeded(rng::derive_seed(self.cfg.seed, 5)));
        self.full_batch(&rows, &noise, true, false, false)
    }

    /// One epoch of the three phases; returns the training loss reported for the epoch.
    pub fn epoch(&mut self, epoch: usize) -> Result<f64> {
        self.set_epoch(epoch);
        let dyn_loss = self.dynamics_phase(self.cfg.dyn_rounds)?;
        if self.missing == 0 {
            return Ok(dyn_loss);
        }
        if !self.cfg.skip_state_phase {
            self.state_phase(self.cfg.state_rounds)?;
        }
        self.structure_phase(self.cfg.net_rounds)
    }
}

/// Runs completion training. `truth` (canonical full adjacency) only feeds the
/// AUC monitor column of the history.
pub fn train_completion(obs: &ObservedData, cfg: &TrainConfig, truth: Option<&AdjacencyMatrix>) -> Result<Completion> {
    let mut t = CompletionTrainer::new(obs, cfg)?;
    if t.missing == 0 {
        log::warn!("no missing nodes; training the dynamics learner on the observed graph only");
    }
    let observed_count = obs.series.n();
    let mut history = TrainHistory::default();
    let mut stop = EarlyStop::new(cfg);
    let mut best = (t.learner.clone(), t.generator.clone(), t.states.clone());
    for epoch in 0..cfg.epochs {
        let train_loss = t.epoch(epoch)?;
        let val_loss = t.validation_loss()?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        let auc = match truth {
            Some(a) if t.missing > 0 => aligned_missing_auc(&t.generator.edge_probabilities(), a, observed_count).ok(),
            _ => None,
        };
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e} auc {auc:?}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            auc,
        });
        if stop.observe(epoch, val_loss) {
            best = (t.learner.clone(), t.generator.clone(), t.states.clone());
        }
        if stop.should_stop() {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = stop.best_epoch;
    Ok(Completion {
        learner: best.0,
        generator: best.1,
        states: best.2,
        history,
    })
}

/// Fits fresh initial states for `rows` of `series` (observed nodes) with the
/// learner and adjacency held fixed. Returns the states (row `k` belongs to
/// `rows[k]`) and the final observed-node loss over all rows.
pub fn optimize_test_states(
    learner: &DynamicsLearner,
    adj: &AdjacencyMatrix,
    series: &Series,
    rows: &[usize],
    cfg: &TrainConfig,
) -> Result<(InitialStateLearner, f64)> {
    let n = adj.n();
    if n < series.n() {
        return Err(Error::invalid("adjacency smaller than the observed node set"));
    }
    let missing = n - series.n();
    let d = series.d();
    let mut states = InitialStateLearner::new(
        GAMMA_NAME,
        rows.len(),
        missing,
        d,
        rho_for(cfg.loss_kind),
        rng::derive_seed(cfg.seed, 7),
    );
    if cfg.horizon == 0 || rows.is_empty() {
        return Ok((states, 0.0));
    }
    if cfg.horizon + 1 > series.len() {
        return Err(Error::invalid("horizon exceeds the record length"));
    }
    let adj_t = Tensor::new(&[n * n], adj.values().to_vec())?;
    let local: Vec<usize> = (0..rows.len()).collect();
    let run = |states: &mut InitialStateLearner, batch: &[usize], train: bool| -> Result<f64> {
        if train {
            states.param_mut().zero_grad();
        }
        for_chunks(batch, cfg.chunk_size, |c, weight| {
            let global: Vec<usize> = c.iter().map(|&k| rows[k]).collect();
            let mut tape = Tape::new();
            let bound = learner.bind(&mut tape, false);
            let a = tape.constant(adj_t.clone());
            let raw = states.bind_rows(&mut tape, c, train && missing > 0)?;
            let loss = observed_loss(&mut tape, learner, &bound, a, states, raw, series, &global, n, cfg.horizon, cfg.loss_kind)?;
            let value = tape.value(loss).item();
            if train && missing > 0 {
                let scaled = tape.scale(loss, weight);
                let grads = tape.backward(scaled)?;
                if let Some(g) = grads.get(raw) {
                    states.param_mut().accumulate_rows(c, g)?;
                }
            }
            Ok(value * weight)
        })
    };
    if missing > 0 {
        let mut adam = Adam::new(cfg.lr_state);
        let mut cursor = BatchCursor::new(&local, rng::derive_seed(cfg.seed, 9));
        for _ in 0..cfg.test_state_rounds {
            let batch = cursor.next_batch(cfg.batch_size);
            run(&mut states, &batch, true)?;
            adam.step(&mut [states.param_mut()])?;
        }
    }
    let loss = run(&mut states, &local, false)?;
    Ok((states, loss))
}
