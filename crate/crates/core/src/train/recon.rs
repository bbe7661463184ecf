use super::{for_chunks, rollout_loss, zero_all, EarlyStop, EpochRecord, LossKind, TrainConfig, TrainHistory};
use crate::autodiff::{fingerprint, Adam, Tape, Tensor};
use crate::data::{BatchCursor, Series};
use crate::error::{Error, Result};
use crate::eval::metrics::{auc, upper_mask};
use crate::graph::AdjacencyMatrix;
use crate::gumbel::{anneal, GumbelGenerator, Layout, LayoutKind};
use crate::model::DynamicsLearner;
use crate::rng;
use crate::sim::Dataset;

/// Trained reconstruction artifacts.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub generator: GumbelGenerator,
    pub learner: DynamicsLearner,
    pub history: TrainHistory,
}

/// Alternating training of the dynamics learner and the generator on fully observed data.
pub struct ReconTrainer {
    cfg: TrainConfig,
    series: Series,
    kind: LossKind,
    pub learner: DynamicsLearner,
    pub generator: GumbelGenerator,
    adam_dyn: Adam,
    adam_net: Adam,
    cursor: BatchCursor,
    noise_rng: rng::Rng,
}

impl ReconTrainer {
    pub fn new(series: Series, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_horizon(&series)?;
        if series.split.train.is_empty() {
            return Err(Error::Training("empty training split".into()));
        }
        let layout = match cfg.layout {
            LayoutKind::FullMatrix => Layout::FullMatrix,
            LayoutKind::UpperTriangleSymmetric => Layout::UpperTriangleSymmetric,
            LayoutKind::CompletionBlocks => {
                return Err(Error::invalid("reconstruction needs a full or symmetric layout"))
            }
        };
        let seed = cfg.seed;
        let learner = DynamicsLearner::new(cfg.learner_shape(series.d()), rng::derive_seed(seed, 1))?;
        let generator = GumbelGenerator::new(series.n(), layout, cfg.tau_start, rng::derive_seed(seed, 2))?;
        Ok(Self {
            cursor: BatchCursor::new(&series.split.train, rng::derive_seed(seed, 3)),
            noise_rng: rng::seeded(rng::derive_seed(seed, 4)),
            kind: cfg.loss_kind,
            adam_dyn: Adam::new(cfg.lr_dyn),
            adam_net: Adam::new(cfg.lr_net),
            cfg: cfg.clone(),
            series,
            learner,
            generator,
        })
    }

    pub fn learner_fingerprint(&self) -> String {
        fingerprint(self.learner.params())
    }

    pub fn generator_fingerprint(&self) -> String {
        fingerprint([self.generator.logits()])
    }

    /// Loss of one batch; gradients go to the learner, the generator, or neither.
    fn batch(&mut self, rows: &[usize], noise: &Tensor, hard: bool, train_dyn: bool, train_net: bool) -> Result<f64> {
        let (n, p, chunk, kind) = (self.series.n(), self.cfg.horizon, self.cfg.chunk_size, self.kind);
        let Self {
            series,
            learner,
            generator,
            ..
        } = self;
        if train_dyn {
            zero_all(&mut learner.params_mut());
        }
        if train_net {
            generator.logits_mut().zero_grad();
        }
        let loss = for_chunks(rows, chunk, |c, weight| {
            let mut tape = Tape::new();
            let bound = learner.bind(&mut tape, train_dyn);
            let l = generator.bind(&mut tape, train_net);
            let adj = if hard {
                generator.sample_hard_var(&mut tape, l, noise)?
            } else {
                generator.sample_soft_var(&mut tape, l, noise)?
            };
            let x0 = tape.constant(series.batch_at(c, 0));
            let preds = learner.rollout_var(&mut tape, &bound, adj, x0, n, c.len(), p)?;
            let loss = rollout_loss(&mut tape, &preds, series, c, None, kind)?;
            let value = tape.value(loss).item();
            if train_dyn || train_net {
                let scaled = tape.scale(loss, weight);
                let grads = tape.backward(scaled)?;
                if train_dyn {
                    learner.accumulate(&bound, &grads)?;
                }
                if train_net {
                    generator.logits_mut().accumulate_from(&grads, l)?;
                }
            }
            Ok(value * weight)
        })?;
        Ok(loss)
    }

    /// `rounds` rounds on the learner under fresh soft samples; the generator is frozen.
    pub fn dynamics_phase(&mut self, rounds: usize) -> Result<f64> {
        let steps = self.cfg.steps(rounds, self.series.split.train.len());
        let mut total = 0.0;
        for _ in 0..steps {
            let rows = self.cursor.next_batch(self.cfg.batch_size);
            let noise = self.generator.draw_noise(&mut self.noise_rng);
            total += self.batch(&rows, &noise, false, true, false)?;
            self.adam_dyn.step(&mut self.learner.params_mut())?;
        }
        Ok(if steps > 0 { total / steps as f64 } else { 0.0 })
    }

    /// `rounds` rounds on the generator logits; the learner is frozen.
    pub fn structure_phase(&mut self, rounds: usize) -> Result<f64> {
        let steps = self.cfg.steps(rounds, self.series.split.train.len());
        let mut total = 0.0;
        for _ in 0..steps {
            let rows = self.cursor.next_batch(self.cfg.batch_size);
            let noise = self.generator.draw_noise(&mut self.noise_rng);
            total += self.batch(&rows, &noise, false, false, true)?;
            self.adam_net.step(&mut [self.generator.logits_mut()])?;
        }
        Ok(if steps > 0 { total / steps as f64 } else { 0.0 })
    }

    /// Loss on the validation split (training split if empty) under a fixed-seed hard sample.
    pub fn validation_loss(&mut self) -> Result<f64> {
        let rows = if self.series.split.val.is_empty() {
            self.series.split.train.clone()
        } else {
            self.series.split.val.clone()
        };
        let noise = self
            .generator
            .draw_noise(&mut rng::seeded(rng::derive_seed(self.cfg.seed, 5)));
        self.batch(&rows, &noise, true, false, false)
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.generator.tau = anneal(self.cfg.tau_start, self.cfg.tau_end, epoch, self.cfg.epochs);
    }
}

/// Runs reconstruction training. `truth` only feeds the AUC monitor column of the history.
pub fn train_reconstruction(ds: &Dataset, cfg: &TrainConfig, truth: Option<&AdjacencyMatrix>) -> Result<Reconstruction> {
    let mut t = ReconTrainer::new(Series::full(ds), cfg)?;
    let mut history = TrainHistory::default();
    let mut stop = EarlyStop::new(cfg);
    let mut best = (t.learner.clone(), t.generator.clone());
    let mask = upper_mask(ds.n());
    for epoch in 0..cfg.epochs {
        t.set_epoch(epoch);
        let _ = t.dynamics_phase(cfg.dyn_rounds)?;
        let train_loss = t.structure_phase(cfg.net_rounds)?;
        let val_loss = t.validation_loss()?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        let auc = truth.and_then(|a| auc(&t.generator.edge_probabilities(), a, &mask).ok());
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e} auc {auc:?}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            auc,
        });
        if stop.observe(epoch, val_loss) {
            best = (t.learner.clone(), t.generator.clone());
        }
        if stop.should_stop() {
            history.stopped_early = true;
            break;
        }
    }
    history.best_epoch = stop.best_epoch;
    Ok(Reconstruction {
        learner: best.0,
        generator: best.1,
        history,
    })
}
