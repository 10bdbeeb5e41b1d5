mod common;

use std::collections::HashMap;

use greedy_dep::decode::{evaluate_model, greedy_parse};
use greedy_dep::model::{Hyper, Init, Model, Vocab};
use greedy_dep::training::{
    apg_gradient, baseline_fn, reinforce_gradient, reward_fn, sample_trajectories, sample_trajectory, train_rl,
    train_supervised, update_memory, Instance, RlConfig, Strategy, SupervisedConfig, TrainError, Trajectory, Weighting,
};
use greedy_dep::transitions::{IndexedTree, SystemKind};
use greedy_dep::{PunctConvention, Sentence, Token};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_model, toy_corpus};

fn traj(id: usize, reward: f64) -> Trajectory {
    Trajectory {
        actions: vec![id],
        tree: IndexedTree {
            heads: vec![],
            labels: vec![],
        },
        reward,
        log_prob: 0.0,
    }
}

fn rewards(m: &[Trajectory]) -> Vec<f64> {
    let mut r: Vec<f64> = m.iter().map(|t| t.reward).collect();
    r.sort_by(f64::total_cmp);
    r
}

#[test]
fn memory_replaces_minimum_only_when_strictly_better() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = vec![traj(0, 3.0), traj(1, 5.0)];
    update_memory(&mut m, vec![traj(2, 4.0)], 2, 0.0, &mut rng);
    assert_eq!(rewards(&m), [4.0, 5.0]);
    update_memory(&mut m, vec![traj(3, 2.0)], 2, 0.0, &mut rng);
    assert_eq!(rewards(&m), [4.0, 5.0]);
    update_memory(&mut m, vec![traj(4, 4.0)], 2, 0.0, &mut rng);
    assert_eq!(rewards(&m), [4.0, 5.0]);
    assert!(m.iter().any(|t| t.actions == [2]), "ties keep the incumbent");
}

#[test]
fn memory_skips_duplicate_derivations() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = vec![traj(0, 1.0)];
    update_memory(&mut m, vec![traj(0, 1.0), traj(1, 2.0)], 4, 0.0, &mut rng);
    assert_eq!(m.len(), 2);
}

#[test]
fn full_forgetting_with_one_slot_is_fresh_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut m = vec![traj(0, 9.0)];
    update_memory(&mut m, vec![traj(1, 1.0)], 1, 1.0, &mut rng);
    assert_eq!(m, vec![traj(1, 1.0)]);
}

proptest! {
    #[test]
    fn memory_invariants(
        k in 1usize..6,
        start in prop::collection::vec(0u8..10, 0..6),
        cands in prop::collection::vec(0u8..10, 0..8),
        seed in 0u64..10_000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m: Vec<Trajectory> = start.iter().take(k).enumerate().map(|(i, &r)| traj(i, r as f64)).collect();
        let before = m.clone();
        let cands: Vec<Trajectory> = cands.iter().enumerate().map(|(i, &r)| traj(100 + i, r as f64)).collect();
        update_memory(&mut m, cands.clone(), k, 0.0, &mut rng);
        prop_assert!(m.len() <= k);
        // Reference: the same greedy insertion done by hand.
        let mut expect = before.clone();
        for c in cands {
            if expect.len() < k {
                expect.push(c);
            } else {
                let (i, min) = expect.iter().enumerate().map(|(i, t)| (i, t.reward)).fold(
                    (usize::MAX, f64::INFINITY),
                    |a, b| if b.1 < a.1 { b } else { a },
                );
                if c.reward > min {
                    expect[i] = c;
                }
            }
        }
        prop_assert_eq!(rewards(&m), rewards(&expect));
        // Nothing is lost without forgetting: the minimum never drops.
        if before.len() == k {
            let old_min = rewards(&before)[0];
            prop_assert!(rewards(&m)[0] >= old_min);
        }
    }
}

#[test]
fn reward_and_baseline_count_scored_tokens() {
    let s = Sentence::new(
        "r",
        vec![
            Token::new("He", "PRP", 2, "nsubj"),
            Token::new("left", "VBD", 0, "root"),
            Token::new(".", ".", 2, "punct"),
        ],
    );
    let mut pred = s.gold_tree();
    assert_eq!(reward_fn(&pred, &s, PunctConvention::Ptb).unwrap(), 2.0);
    assert_eq!(baseline_fn(&s, PunctConvention::Ptb), 1.0);
    pred.labels[0] = "dobj".into();
    pred.heads[2] = 1;
    assert_eq!(reward_fn(&pred, &s, PunctConvention::Ptb).unwrap(), 1.0);
    pred.heads.pop();
    assert!(matches!(
        reward_fn(&pred, &s, PunctConvention::Ptb),
        Err(TrainError::ArityMismatch { .. })
    ));
}

#[test]
fn apg_matches_finite_differences_of_the_set_objective() {
    let corpus = toy_corpus(40, 4);
    let short: Vec<&Sentence> = corpus
        .iter()
        .filter(|s| s.len() <= 5 && s.gold_tree().is_projective())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for draw in 0..6 {
        let mut model = random_model(SystemKind::ArcStandard, &corpus, 8, 10, 0.5, &mut rng);
        let system = model.transition_system();
        let inst = Instance::new(&model, &system, short[draw % short.len()], PunctConvention::Ptb);
        let set = sample_trajectories(&model, &system, &inst, 4, &mut rng).unwrap();
        let b = inst.baseline();
        // J(θ) = Σ (r − b) · P(traj; θ)
        let objective = |m: &Model| -> f64 {
            set.iter()
                .map(|t| {
                    let mut c = greedy_dep::Configuration::initial(inst.len()).unwrap();
                    let mut lp = 0.0;
                    for &a in &t.actions {
                        let out = m.forward(&m.features(&c, &inst.enc), &system.legal_mask(&c)).unwrap();
                        lp += out.log_probs[a];
                        c = system.apply_id(&c, a).unwrap();
                    }
                    (t.reward - b) * lp.exp()
                })
                .sum()
        };
        let total_p: f64 = set.iter().map(|t| t.log_prob.exp()).sum();
        let raw = apg_gradient(&model, &system, &inst, &set, Weighting::Raw)
            .unwrap()
            .to_dense(&model);
        let norm = apg_gradient(&model, &system, &inst, &set, Weighting::Normalized)
            .unwrap()
            .to_dense(&model);
        let h = 1e-4;
        for _ in 0..40 {
            let t = rng.gen_range(3..6);
            let i = rng.gen_range(0..model.params.tensors()[t].data.len());
            let orig = model.params.tensors()[t].data[i];
            model.params.tensors_mut()[t].data[i] = orig + h;
            let up = objective(&model);
            model.params.tensors_mut()[t].data[i] = orig - h;
            let down = objective(&model);
            model.params.tensors_mut()[t].data[i] = orig;
            let numeric = -(up - down) / (2.0 * h);
            let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            worst = worst.max(rel(raw.tensors()[t].data[i], numeric));
            worst = worst.max(rel(norm.tensors()[t].data[i], numeric / total_p));
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn zero_advantage_gives_zero_gradient() {
    let corpus = toy_corpus(20, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = random_model(SystemKind::ArcStandard, &corpus, 8, 10, 0.5, &mut rng);
    let system = model.transition_system();
    let inst = Instance::new(&model, &system, &corpus[0], PunctConvention::Ptb);
    let mut set = sample_trajectories(&model, &system, &inst, 3, &mut rng).unwrap();
    for t in &mut set {
        t.reward = inst.baseline();
    }
    assert!(apg_gradient(&model, &system, &inst, &set, Weighting::Normalized)
        .unwrap()
        .is_zero());
}

/// One token and two labels: the only choice is the label of the root arc.
fn bandit(seed: u64) -> (Model, Instance) {
    let s = Sentence::new("b", vec![Token::new("go", "VB", 0, "root")]);
    let other = Sentence::new("o", vec![Token::new("stop", "VB", 0, "aux")]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(SystemKind::ArcStandard, &[s.clone(), other], 4, 6, 0.8, &mut rng);
    let system = model.transition_system();
    let inst = Instance::new(&model, &system, &s, PunctConvention::Ptb);
    (model, inst)
}

#[test]
fn reinforce_is_unbiased_on_a_bandit() {
    let (model, inst) = bandit(3);
    let system = model.transition_system();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Enumerate both derivations for the exact expectation.
    let mut all: Vec<Trajectory> = Vec::new();
    while all.len() < 2 {
        let t = sample_trajectory(&model, &system, &inst, &mut rng).unwrap().unwrap();
        if !all.iter().any(|a| a.actions == t.actions) {
            all.push(t);
        }
    }
    let p: f64 = all.iter().map(|t| t.log_prob.exp()).sum();
    assert!((p - 1.0).abs() < 1e-9);
    let exact = apg_gradient(&model, &system, &inst, &all, Weighting::Raw).unwrap();
    let n = 4000;
    let mut mean = model.zero_gradient();
    for _ in 0..n {
        let (g, _) = reinforce_gradient(&model, &system, &inst, &mut rng).unwrap();
        mean.add_scaled(&g, 1.0 / n as f64);
    }
    let mut diff = mean.clone();
    diff.add_scaled(&exact, -1.0);
    let rel = (diff.norm_sq() / exact.norm_sq()).sqrt();
    assert!(rel < 0.1, "relative deviation {rel}");
}

#[test]
fn sampling_follows_policy_probabilities() {
    let corpus = toy_corpus(20, 4);
    let two = Sentence::new(
        "two",
        vec![
            Token::new("dogs", "NNS", 2, "nsubj"),
            Token::new("bark", "VBP", 0, "root"),
        ],
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut sentences = corpus.clone();
    sentences.push(two.clone());
    let model = random_model(SystemKind::ArcStandard, &sentences[..3], 6, 8, 0.8, &mut rng);
    let system = model.transition_system();
    let inst = Instance::new(&model, &system, &two, PunctConvention::Ptb);
    let n = 20_000;
    let mut counts: HashMap<Vec<usize>, (usize, f64)> = HashMap::new();
    for _ in 0..n {
        let t = sample_trajectory(&model, &system, &inst, &mut rng).unwrap().unwrap();
        let e = counts.entry(t.actions).or_insert((0, t.log_prob.exp()));
        e.0 += 1;
    }
    for (count, p) in counts.values() {
        assert!((*count as f64 / n as f64 - p).abs() < 0.02);
    }
}

#[test]
fn near_deterministic_policy_yields_one_distinct_trajectory() {
    let corpus = toy_corpus(20, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut model = random_model(SystemKind::ArcStandard, &corpus, 8, 10, 0.5, &mut rng);
    for x in &mut model.params.w2.data {
        *x *= 1e4;
    }
    let system = model.transition_system();
    let s = &corpus[0];
    let inst = Instance::new(&model, &system, s, PunctConvention::Ptb);
    let set = sample_trajectories(&model, &system, &inst, 8, &mut rng).unwrap();
    assert_eq!(set.len(), 1);
    let (_, trace) = greedy_parse(&model, &system, s).unwrap();
    assert_eq!(set[0].actions, trace.actions);
}

fn small_model(kind: SystemKind, train: &[Sentence], lr: f64) -> Model {
    let hyper = Hyper {
        dim: 12,
        hidden: 32,
        learning_rate: lr,
        ..Default::default()
    };
    Model::new(kind, Vocab::build(train, 1), hyper, Init::default())
}

#[test]
fn supervised_training_memorizes_a_tiny_corpus() {
    let corpus: Vec<Sentence> = toy_corpus(30, 7)
        .into_iter()
        .filter(|s| s.gold_tree().is_projective())
        .take(10)
        .collect();
    let mut model = small_model(SystemKind::ArcStandard, &corpus, 0.05);
    let cfg = SupervisedConfig {
        epochs: 150,
        batch_size: 32,
        dropout: 0.0,
        ..Default::default()
    };
    let losses = train_supervised(&mut model, &corpus, &cfg).unwrap();
    assert_eq!(losses.len(), 150);
    assert!(losses.last().unwrap() < &losses[0]);
    let report = evaluate_model(&model, &corpus, PunctConvention::Ptb).unwrap();
    assert_eq!(report.las, 100.0);
}

#[test]
fn zero_epochs_leave_the_model_untouched() {
    let corpus = toy_corpus(10, 7);
    let mut model = small_model(SystemKind::ArcEager, &corpus, 0.05);
    let before = model.clone();
    let cfg = SupervisedConfig {
        epochs: 0,
        ..Default::default()
    };
    assert!(train_supervised(&mut model, &corpus, &cfg).unwrap().is_empty());
    assert_eq!(model, before);
}

#[test]
fn rl_config_rejects_bad_values() {
    let bad_k = RlConfig {
        k: 0,
        ..Default::default()
    };
    assert!(matches!(bad_k.validate(), Err(TrainError::Config(_))));
    let bad_rho = RlConfig {
        rho: 1.5,
        ..Default::default()
    };
    assert!(bad_rho.validate().is_err());
    assert_eq!("rl-memory".parse::<Strategy>().unwrap(), Strategy::RlMemory);
    assert!("rl-best".parse::<Strategy>().is_err());
}

#[test]
fn rl_training_is_reproducible_across_thread_counts() {
    let corpus = toy_corpus(40, 8);
    let (train, dev) = corpus.split_at(30);
    let mut model = small_model(SystemKind::ArcStandard, train, 0.02);
    let sl = SupervisedConfig {
        epochs: 5,
        dropout: 0.0,
        ..Default::default()
    };
    train_supervised(&mut model, train, &sl).unwrap();
    for strategy in [
        Strategy::RlMemory,
        Strategy::RlRandom,
        Strategy::RlOracle,
        Strategy::Reinforce,
    ] {
        let cfg = RlConfig {
            strategy,
            k: 3,
            batch_size: 20,
            updates: 4,
            eval_every: 2,
            seed: 9,
            ..Default::default()
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let mut log = Vec::new();
            let out = pool
                .install(|| train_rl(model.clone(), train, dev, &cfg, Some(&mut log)))
                .unwrap();
            (out, String::from_utf8(log).unwrap())
        };
        let (a, log_a) = run(1);
        let (b, log_b) = run(3);
        assert_eq!(a.model, b.model, "{strategy}");
        assert_eq!(log_a, log_b);
        assert_eq!(a.log.len(), 4);
        assert_eq!(log_a.lines().count(), 5);
        assert!(a.log[1].dev.is_some() && a.log[0].dev.is_none());
        assert_eq!(
            a.best_dev_las,
            a.log.iter().filter_map(|l| l.dev.map(|d| d.1)).reduce(f64::max)
        );
        assert_ne!(a.model, model, "{strategy} moved no parameter");
    }
}

#[test]
fn rl_oracle_only_raises_oracle_probability() {
    let corpus: Vec<Sentence> = toy_corpus(12, 9)
        .into_iter()
        .filter(|s| s.gold_tree().is_projective())
        .collect();
    let mut model = small_model(SystemKind::ArcStandard, &corpus, 0.02);
    let system = model.transition_system();
    let inst = Instance::new(&model, &system, &corpus[0], PunctConvention::Ptb);
    let oracle = greedy_dep::training::oracle_trajectory(&model, &system, &inst)
        .unwrap()
        .unwrap();
    let grad = apg_gradient(
        &model,
        &system,
        &inst,
        std::slice::from_ref(&oracle),
        Weighting::Normalized,
    )
    .unwrap();
    model.adagrad_step(&grad, 0.0).unwrap();
    let after = greedy_dep::training::oracle_trajectory(&model, &system, &inst)
        .unwrap()
        .unwrap();
    assert!(after.log_prob > oracle.log_prob);
}
