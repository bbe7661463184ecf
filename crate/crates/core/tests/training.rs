use netinfer::autodiff::fingerprint;
use netinfer::data::{ObservedData, Series};
use netinfer::graph::{generate_ws, partition, PartitionedGraph};
use netinfer::sim::{build_dataset, CmlParams, Dataset, DatasetSpec, Dynamics};
use netinfer::train::{
    optimize_test_states, train_completion, train_reconstruction, CompletionTrainer, ReconTrainer, TrainConfig,
};

fn voter_data() -> (Dataset, PartitionedGraph) {
    let g = generate_ws(8, 4, 0.2, 11).unwrap();
    let spec = DatasetSpec {
        dynamics: Dynamics::Voter,
        simulations: 10,
        steps: 8,
        record_length: 1,
    };
    let ds = build_dataset(&g, &spec, 12).unwrap();
    let part = partition(&g, 2, 13).unwrap();
    (ds, part)
}

fn cml_data() -> Dataset {
    let g = generate_ws(6, 2, 0.2, 21).unwrap();
    let d = Dynamics::Cml(CmlParams::default());
    let spec = DatasetSpec {
        dynamics: d,
        simulations: 6,
        steps: 20,
        record_length: 5,
    };
    build_dataset(&g, &spec, 22).unwrap()
}

fn small_cfg(d: &Dynamics) -> TrainConfig {
    let mut cfg = TrainConfig::for_dynamics(d);
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.chunk_size = 8;
    cfg.dyn_rounds = 2;
    cfg.state_rounds = 2;
    cfg.net_rounds = 2;
    cfg.edge_sizes = vec![8, 4];
    cfg.node_hidden = 6;
    cfg.test_state_rounds = 3;
    cfg.seed = 5;
    cfg
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let ds = cml_data();
    let mut cfg = small_cfg(ds.dynamics());
    cfg.horizon = 3;
    cfg.epochs = 0;
    let fresh = ReconTrainer::new(Series::full(&ds), &cfg).unwrap();
    let r = train_reconstruction(&ds, &cfg, None).unwrap();
    assert!(r.history.is_empty());
    assert_eq!(fingerprint(r.learner.params()), fresh.learner_fingerprint());
    assert_eq!(fingerprint([r.generator.logits()]), fresh.generator_fingerprint());
}

#[test]
fn reconstruction_phases_touch_only_their_parameters() {
    let ds = cml_data();
    let mut cfg = small_cfg(ds.dynamics());
    cfg.horizon = 3;
    let mut t = ReconTrainer::new(Series::full(&ds), &cfg).unwrap();
    let (l0, g0) = (t.learner_fingerprint(), t.generator_fingerprint());
    t.dynamics_phase(2).unwrap();
    let (l1, g1) = (t.learner_fingerprint(), t.generator_fingerprint());
    assert_ne!(l0, l1);
    assert_eq!(g0, g1);
    t.structure_phase(2).unwrap();
    assert_eq!(l1, t.learner_fingerprint());
    assert_ne!(g1, t.generator_fingerprint());
    let (l2, g2) = (t.learner_fingerprint(), t.generator_fingerprint());
    t.validation_loss().unwrap();
    assert_eq!((l2, g2), (t.learner_fingerprint(), t.generator_fingerprint()));
}

#[test]
fn completion_phases_touch_only_their_parameters() {
    let (ds, part) = voter_data();
    let obs = ObservedData::new(&ds, &part).unwrap();
    let cfg = small_cfg(ds.dynamics());
    let mut t = CompletionTrainer::new(&obs, &cfg).unwrap();
    let snap = |t: &CompletionTrainer| (t.learner_fingerprint(), t.states_fingerprint(), t.generator_fingerprint());
    let s0 = snap(&t);
    t.dynamics_phase(2).unwrap();
    let s1 = snap(&t);
    assert_ne!(s0.0, s1.0);
    assert_eq!((&s0.1, &s0.2), (&s1.1, &s1.2));
    t.state_phase(2).unwrap();
    let s2 = snap(&t);
    assert_ne!(s1.1, s2.1);
    assert_eq!((&s1.0, &s1.2), (&s2.0, &s2.2));
    t.structure_phase(2).unwrap();
    let s3 = snap(&t);
    assert_ne!(s2.2, s3.2);
    assert_eq!((&s2.0, &s2.1), (&s3.0, &s3.1));
}

#[test]
fn two_epoch_runs_are_bitwise_reproducible() {
    let (ds, part) = voter_data();
    let cfg = small_cfg(ds.dynamics());
    let truth = part.full.to_adjacency();
    let obs = ObservedData::new(&ds, &part).unwrap();
    let a = train_completion(&obs, &cfg, Some(&truth)).unwrap();
    let b = train_completion(&obs, &cfg, Some(&truth)).unwrap();
    assert_eq!(a.history.to_csv(), b.history.to_csv());
    for (x, y) in a.history.epochs.iter().zip(&b.history.epochs) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
    }
    assert_eq!(fingerprint(a.learner.params()), fingerprint(b.learner.params()));
    assert_eq!(fingerprint([a.states.param()]), fingerprint([b.states.param()]));

    let mut other = cfg.clone();
    other.seed += 1;
    let c = train_completion(&obs, &other, Some(&truth)).unwrap();
    assert_ne!(a.history.to_csv(), c.history.to_csv());
}

#[test]
fn observed_view_never_carries_missing_states() {
    let (ds, part) = voter_data();
    let obs = ObservedData::new(&ds, &part).unwrap();
    assert_eq!(obs.series.n(), part.observed_count());
    let observed = part.observed();
    for s in 0..ds.sample_count() {
        for t in 0..ds.states_per_record() {
            let full = ds.state(s, t);
            let view = obs.series.state(s, t);
            let expect: Vec<f64> = observed
                .iter()
                .flat_map(|&v| full[v * 2..v * 2 + 2].iter().map(|&x| f64::from(x)))
                .collect();
            assert_eq!(view, &expect[..]);
        }
    }
}

#[test]
fn test_state_fit_leaves_learner_and_graph_untouched() {
    let (ds, part) = voter_data();
    let obs = ObservedData::new(&ds, &part).unwrap();
    let cfg = small_cfg(ds.dynamics());
    let c = train_completion(&obs, &cfg, None).unwrap();
    let adj = c.generator.sample_hard(&mut netinfer::rng::seeded(1)).unwrap();
    let before = (fingerprint(c.learner.params()), adj.clone());
    let rows = obs.series.split.test.clone();
    let (states, loss) = optimize_test_states(&c.learner, &adj, &obs.series, &rows, &cfg).unwrap();
    assert_eq!(before, (fingerprint(c.learner.params()), adj.clone()));
    assert_eq!(states.samples(), rows.len());
    assert!(loss.is_finite() && loss > 0.0);

    let mut flat = cfg.clone();
    flat.horizon = 0;
    let (idle, zero) = optimize_test_states(&c.learner, &adj, &obs.series, &rows, &flat).unwrap();
    assert_eq!(zero, 0.0);
    let init = netinfer::model::InitialStateLearner::new(
        netinfer::train::GAMMA_NAME,
        rows.len(),
        part.missing_count,
        2,
        netinfer::model::Rho::SigmoidOnehot,
        netinfer::rng::derive_seed(cfg.seed, 7),
    );
    assert_eq!(fingerprint([idle.param()]), fingerprint([init.param()]));
}

#[test]
fn completion_without_missing_nodes_degrades_gracefully() {
    let (ds, _) = voter_data();
    let part = partition(&ds.graph, 0, 1).unwrap();
    let obs = ObservedData::new(&ds, &part).unwrap();
    let cfg = small_cfg(ds.dynamics());
    let c = train_completion(&obs, &cfg, None).unwrap();
    assert_eq!(c.history.len(), 2);
    assert_eq!(c.generator.slot_count(), 0);
}
