//! Network and state metrics, and the scoring pipelines for trained runs.

pub mod metrics;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::{missing_truth, ObservedData, Series};
use crate::error::{Error, Result};
use crate::graph::{align_missing, apply_alignment, AdjacencyMatrix, NodeAlignment, PartitionedGraph};
use crate::gumbel::{GumbelGenerator, LayoutKind};
use crate::model::{concat_states_var, DynamicsLearner};
use crate::rng;
use crate::sim::Dataset;
use crate::train::{optimize_test_states, TrainConfig};
use metrics::{acc_net, acc_states, acc_states_sampled, auc, missing_mask, tpr_fpr, upper_mask, Mask, StateKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruct,
    Complete,
}

/// Every metric of a run; `None` serializes as `null` for undefined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub auc: Option<f64>,
    pub acc_net: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub acc_states: Option<f64>,
    /// `discrete` reports `1 - MAE`, `continuous` reports MSE.
    pub state_kind: StateKind,
    pub missing_auc: Option<f64>,
    pub missing_acc_net: Option<f64>,
    pub missing_tpr: Option<f64>,
    pub missing_fpr: Option<f64>,
    pub missing_acc_states: Option<f64>,
    pub observed_acc_states: Option<f64>,
    pub test_state_loss: Option<f64>,
    pub alignment: Option<NodeAlignment>,
}

impl MetricsReport {
    fn empty(task: Task, state_kind: StateKind) -> Self {
        Self {
            task,
            auc: None,
            acc_net: None,
            tpr: None,
            fpr: None,
            acc_states: None,
            state_kind,
            missing_auc: None,
            missing_acc_net: None,
            missing_tpr: None,
            missing_fpr: None,
            missing_acc_states: None,
            observed_acc_states: None,
            test_state_loss: None,
            alignment: None,
        }
    }
}

/// Options shared by both evaluation pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Seed of the hard adjacency sample and of sampled states.
    pub seed: u64,
    pub horizon: usize,
    pub state_kind: StateKind,
    /// Draw discrete states from the predicted distributions instead of argmax.
    pub stochastic_states: bool,
}

impl EvalOptions {
    pub fn new(cfg: &TrainConfig, dynamics: &crate::sim::Dynamics) -> Self {
        Self {
            seed: rng::derive_seed(cfg.seed, 100),
            horizon: cfg.horizon,
            state_kind: if dynamics.is_discrete() {
                StateKind::Discrete
            } else {
                StateKind::Continuous
            },
            stochastic_states: false,
        }
    }

    fn states(&self, pred: &[f64], truth: &[f64], d: usize, stream: u64) -> Result<f64> {
        if self.stochastic_states && self.state_kind == StateKind::Discrete {
            acc_states_sampled(pred, truth, d, &mut rng::stream(self.seed, stream))
        } else {
            acc_states(pred, truth, d, self.state_kind)
        }
    }
}

/// `Ok(None)` for undefined metrics, errors otherwise propagate.
fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn eval_rows(series: &Series) -> Vec<usize> {
    let s = &series.split;
    [&s.test, &s.val, &s.train]
        .into_iter()
        .find(|r| !r.is_empty())
        .cloned()
        .unwrap_or_default()
}

fn net_metrics(probs: &AdjacencyMatrix, sampled: &AdjacencyMatrix, truth: &AdjacencyMatrix, mask: &Mask) -> Result<[Option<f64>; 4]> {
    let a = defined(auc(probs, truth, mask))?;
    let acc = defined(acc_net(sampled, truth, mask))?;
    let (tpr, fpr) = tpr_fpr(sampled, truth, mask)?;
    Ok([a, acc, tpr, fpr])
}

/// Scores a reconstruction: AUC from edge probabilities, ACC(net)/TPR/FPR
/// from one hard sample, ACC(states) from test-split rollouts on that sample.
pub fn evaluate_reconstruction(
    generator: &GumbelGenerator,
    learner: &DynamicsLearner,
    series: &Series,
    truth: &AdjacencyMatrix,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let n = truth.n();
    if generator.n() != n || series.n() != n {
        return Err(Error::invalid("generator, data and truth disagree on the node count"));
    }
    let mask = match generator.layout().kind() {
        LayoutKind::FullMatrix => (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect(),
        _ => upper_mask(n),
    };
    let probs = generator.edge_probabilities();
    let hard = generator.sample_hard(&mut rng::seeded(opts.seed))?;
    let [a, acc, tpr, fpr] = net_metrics(&probs, &hard, truth, &mask)?;
    let mut report = MetricsReport::empty(Task::Reconstruct, opts.state_kind);
    report.auc = a;
    report.acc_net = acc;
    report.tpr = tpr;
    report.fpr = fpr;

    let rows = eval_rows(series);
    if opts.horizon > 0 && !rows.is_empty() {
        let mut pred = Vec::new();
        let mut want = Vec::new();
        for c in rows.chunks(128) {
            let mut tape = Tape::new();
            let bound = learner.bind(&mut tape, false);
            let adj = tape.constant(Tensor::new(&[n * n], hard.values().to_vec())?);
            let x0 = tape.constant(series.batch_at(c, 0));
            let steps = learner.rollout_var(&mut tape, &bound, adj, x0, n, c.len(), opts.horizon)?;
            for (t, v) in steps.iter().enumerate() {
                pred.extend_from_slice(tape.value(*v).data());
                want.extend_from_slice(series.batch_at(c, t + 1).data());
            }
        }
        report.acc_states = defined(opts.states(&pred, &want, series.d(), 0))?;
    }
    Ok(report)
}

/// Missing-block AUC after aligning the thresholded estimate to `truth`.
pub fn aligned_missing_auc(probs: &AdjacencyMatrix, truth: &AdjacencyMatrix, observed_count: usize) -> Result<f64> {
    let alignment = align_missing(&probs.threshold(), truth, observed_count)?;
    let aligned = apply_alignment(probs, &alignment)?;
    auc(&aligned, truth, &missing_mask(truth.n(), observed_count))
}

/// Scores a completion. Test-split initial states are fitted first with the
/// learner and a fixed hard adjacency sample frozen; the estimate is then
/// aligned to the ground truth and only pairs touching missing nodes are scored.
pub fn evaluate_completion(
    generator: &GumbelGenerator,
    learner: &DynamicsLearner,
    partition: &PartitionedGraph,
    ds: &Dataset,
    cfg: &TrainConfig,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let obs = ObservedData::new(ds, partition)?;
    let truth = partition.full.to_adjacency();
    let n = truth.n();
    let no = partition.observed_count();
    let m = partition.missing_count;
    let d = ds.d();
    if generator.n() != n {
        return Err(Error::invalid("generator and partition disagree on the node count"));
    }
    let probs = generator.edge_probabilities();
    let hard = generator.sample_hard(&mut rng::seeded(opts.seed))?;
    let alignment = align_missing(&probs.threshold(), &truth, no)?;
    let mut report = MetricsReport::empty(Task::Complete, opts.state_kind);
    if m > 0 {
        let mask = missing_mask(n, no);
        let [a, acc, tpr, fpr] = net_metrics(
            &apply_alignment(&probs, &alignment)?,
            &apply_alignment(&hard, &alignment)?,
            &truth,
            &mask,
        )?;
        report.missing_auc = a;
        report.missing_acc_net = acc;
        report.missing_tpr = tpr;
        report.missing_fpr = fpr;
    }

    let rows = eval_rows(&obs.series);
    let mut test_cfg = cfg.clone();
    test_cfg.horizon = opts.horizon;
    let (states, loss) = optimize_test_states(learner, &hard, &obs.series, &rows, &test_cfg)?;
    report.test_state_loss = Some(loss);

    if opts.horizon > 0 && !rows.is_empty() {
        let hidden = missing_truth(ds, partition);
        let (mut obs_pred, mut obs_want, mut miss_pred, mut miss_want) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let local: Vec<usize> = (0..rows.len()).collect();
        for c in local.chunks(128) {
            let global: Vec<usize> = c.iter().map(|&k| rows[k]).collect();
            let mut tape = Tape::new();
            let bound = learner.bind(&mut tape, false);
            let adj = tape.constant(Tensor::new(&[n * n], hard.values().to_vec())?);
            let xo = tape.constant(obs.series.batch_at(&global, 0));
            let raw = states.bind_rows(&mut tape, c, false)?;
            let xm = states.render_var(&mut tape, raw)?;
            let x0 = concat_states_var(&mut tape, xo, xm, c.len(), d)?;
            let steps = learner.rollout_var(&mut tape, &bound, adj, x0, n, c.len(), opts.horizon)?;
            let mut frames = vec![x0];
            frames.extend(steps);
            for (t, v) in frames.iter().enumerate() {
                let values = tape.value(*v).data();
                for (b, &s) in global.iter().enumerate() {
                    let graph = &values[b * n * d..(b + 1) * n * d];
                    if t > 0 {
                        obs_pred.extend_from_slice(&graph[..no * d]);
                        obs_want.extend_from_slice(obs.series.state(s, t));
                    }
                    let truth_t = hidden.state(s, t);
                    for (k, &target) in alignment.mapping.iter().enumerate() {
                        let e = no + k;
                        miss_pred.extend_from_slice(&graph[e * d..(e + 1) * d]);
                        let h = target - no;
                        miss_want.extend_from_slice(&truth_t[h * d..(h + 1) * d]);
                    }
                }
            }
        }
        report.observed_acc_states = defined(opts.states(&obs_pred, &obs_want, d, 1))?;
        if m > 0 {
            report.missing_acc_states = defined(opts.states(&miss_pred, &miss_want, d, 2))?;
        }
    }
    report.alignment = Some(alignment);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_ws, partition, AdjacencyMode};
    use crate::gumbel::Layout;
    use crate::model::{Head, LearnerShape};
    use crate::sim::{build_dataset, DatasetSpec, Dynamics};

    /// Generator whose probabilities match `truth` up to a margin.
    fn confident_generator(truth: &AdjacencyMatrix, layout: Layout) -> GumbelGenerator {
        let n = truth.n();
        let mut g = GumbelGenerator::new(n, layout, 0.5, 0).unwrap();
        let mut edge = vec![false; g.slot_count()];
        for i in 0..n {
            for j in 0..n {
                if let Some(s) = g.slot_of(i, j) {
                    edge[s] = truth.get(i, j) == 1.0;
                }
            }
        }
        for (pair, e) in g.logits_mut().value_mut().data_mut().chunks_mut(2).zip(edge) {
            pair[0] = if e { 30.0 } else { -30.0 };
            pair[1] = 0.0;
        }
        g
    }

    #[test]
    fn perfect_reconstruction_scores() {
        let g = generate_ws(10, 4, 0.2, 3).unwrap();
        let truth = g.to_adjacency();
        let gen = confident_generator(&truth, Layout::UpperTriangleSymmetric);
        let spec = DatasetSpec {
            dynamics: Dynamics::Voter,
            simulations: 5,
            steps: 10,
            record_length: 1,
        };
        let ds = build_dataset(&g, &spec, 1).unwrap();
        let learner = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 0).unwrap();
        let cfg = TrainConfig::for_dynamics(&Dynamics::Voter);
        let opts = EvalOptions::new(&cfg, &Dynamics::Voter);
        let r = evaluate_reconstruction(&gen, &learner, &Series::full(&ds), &truth, &opts).unwrap();
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.acc_net, Some(1.0));
        assert_eq!((r.tpr, r.fpr), (Some(1.0), Some(0.0)));
        assert!(r.acc_states.is_some());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["missing_auc"].is_null());
    }

    #[test]
    fn perfect_completion_estimate_scores_with_identity_alignment() {
        let g = generate_ws(10, 4, 0.2, 4).unwrap();
        let part = partition(&g, 1, 2).unwrap();
        let truth = part.full.to_adjacency();
        let gen = confident_generator(&truth, Layout::CompletionBlocks { observed: part.a_o.clone() });
        let spec = DatasetSpec {
            dynamics: Dynamics::Voter,
            simulations: 4,
            steps: 10,
            record_length: 1,
        };
        let ds = build_dataset(&g, &spec, 1).unwrap();
        let learner = DynamicsLearner::new(LearnerShape::new(2, Head::Softmax), 0).unwrap();
        let mut cfg = TrainConfig::for_dynamics(&Dynamics::Voter);
        cfg.test_state_rounds = 2;
        let opts = EvalOptions::new(&cfg, &Dynamics::Voter);
        let r = evaluate_completion(&gen, &learner, &part, &ds, &cfg, &opts).unwrap();
        assert_eq!(r.missing_auc, Some(1.0));
        assert_eq!(r.missing_acc_net, Some(1.0));
        assert!(r.alignment.as_ref().unwrap().is_identity());
        assert!(r.missing_acc_states.is_some() && r.observed_acc_states.is_some());
    }

    #[test]
    fn completion_metrics_invariant_to_missing_relabeling() {
        let mut rng = rng::seeded(5);
        for case in 0..20u64 {
            let g = generate_ws(12, 4, 0.3, case).unwrap();
            let part = partition(&g, 4, case).unwrap();
            let truth = part.full.to_adjacency();
            let n = 12;
            let no = 8;
            // noisy symmetric estimate that keeps the observed block exact
            let mut v = truth.values().to_vec();
            for (i, j) in missing_mask(n, no) {
                let p: f64 = 0.6 * truth.get(i, j) + 0.4 * rand::Rng::random::<f64>(&mut rng);
                v[i * n + j] = p;
                v[j * n + i] = p;
            }
            let est = AdjacencyMatrix::new(n, v, AdjacencyMode::Soft).unwrap();
            let base = aligned_missing_auc(&est, &truth, no).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[no..], &mut rng);
            let relabeled = est.permuted(&perm);
            let again = aligned_missing_auc(&relabeled, &truth, no).unwrap();
            assert!((base - again).abs() < 1e-12, "case {case}: {base} vs {again}");
        }
    }
}
