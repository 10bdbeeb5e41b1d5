mod common;

use common::{actions, waves_labels, waves_sentence};
use greedy_dep::analysis::detect_decision_errors;
use greedy_dep::decode::{evaluate, greedy_parse};
use greedy_dep::dynamic_oracle::{action_cost, LossMode};
use greedy_dep::model::{extract_features, Hyper, Init, Model, Vocab, NULL_ID, ROOT_ID};
use greedy_dep::training::{reward_fn, train_supervised, SupervisedConfig};
use greedy_dep::transitions::{Configuration, SystemKind, TransitionSystem};
use greedy_dep::{Action, DepTree, PunctConvention};

fn system() -> TransitionSystem {
    TransitionSystem::new(SystemKind::ArcStandard, waves_labels())
}

const GOLD_WALK: [&str; 16] = [
    "SH", "SH", "L:nsubj", "SH", "SH", "R:dep", "R:dobj", "SH", "SH", "SH", "SH", "L:nn", "L:det", "R:pobj", "R:prep",
    "R:root",
];

const ERROR_WALK: [&str; 16] = [
    "SH", "SH", "L:nsubj", "SH", "R:dobj", "SH", "SH", "SH", "SH", "SH", "L:nn", "L:det", "R:pobj", "R:dep", "R:dep",
    "R:root",
];

const SINGLE_ERROR_WALK: [&str; 16] = [
    "SH", "SH", "L:nsubj", "SH", "SH", "R:dep", "R:dobj", "SH", "SH", "SH", "SH", "R:amod", "L:det", "R:pobj",
    "R:prep", "R:root",
];

fn run(spec: &[&str]) -> (Vec<Configuration>, Vec<Action>) {
    let sys = system();
    let acts = actions(sys.labels(), spec);
    let mut c = Configuration::initial(8).unwrap();
    let mut configs = vec![c.clone()];
    for &a in &acts {
        c = sys.apply(&c, a).unwrap();
        configs.push(c.clone());
    }
    (configs, acts)
}

#[test]
fn static_oracle_reproduces_walkthrough() {
    let sys = system();
    let gold = sys.labels().index_tree(&waves_sentence().gold_tree());
    let oracle = sys.static_oracle(&gold).unwrap();
    assert_eq!(oracle, actions(sys.labels(), &GOLD_WALK));
    let (configs, _) = run(&GOLD_WALK);
    // After LEFT_nsubj the stack is <root> hit and hit -> waves exists.
    assert_eq!(configs[3].stack(), &[0, 2]);
    assert_eq!(configs[3].arc(1).unwrap().head, 2);
    // Step 7 pops stocks after it collected themselves.
    assert_eq!(configs[7].stack(), &[0, 2]);
    assert_eq!(configs[7].arc(4).unwrap().head, 3);
}

#[test]
fn step_three_features() {
    let s = waves_sentence();
    let mut vocab = Vocab::build(std::slice::from_ref(&s), 1);
    vocab.labels = waves_labels();
    let enc = vocab.encode(&s);
    let (configs, _) = run(&GOLD_WALK);
    let f = extract_features(&configs[3], &enc, &vocab);
    assert_eq!(f.words()[0], enc.words[2], "s1 = hit");
    assert_eq!(f.words()[1], ROOT_ID);
    assert_eq!(f.words()[6], enc.words[1], "lc1(s1) = waves");
    let nsubj = vocab.labels.id("nsubj").unwrap();
    assert_eq!(f.labels()[0], vocab.label_feature(nsubj));
    assert!(f.labels()[1..].iter().all(|&l| l == NULL_ID));
}

#[test]
fn erroneous_walk_yields_two_head_errors() {
    let sys = system();
    let (configs, _) = run(&ERROR_WALK);
    let tree = sys.extract_tree(configs.last().unwrap()).unwrap();
    assert_eq!(tree.heads, vec![2, 0, 2, 2, 4, 8, 8, 5]);
    let s = waves_sentence();
    let report = evaluate(
        std::slice::from_ref(&s),
        std::slice::from_ref(&tree),
        PunctConvention::Ptb,
    )
    .unwrap();
    assert_eq!(report.uas, 75.0);
    assert!(reward_fn(&tree, &s, PunctConvention::Ptb).unwrap() <= 6.0);
}

#[test]
fn erroneous_walk_decision_errors() {
    // Premature RIGHT_dobj (5') makes themselves unattachable; RIGHT_dep
    // themselves -> on (14') is the second loss-increasing step. The SHIFT
    // of "on" at 7' costs nothing: "on" could still take themselves as a
    // dependent, which loses nothing beyond what 5' already lost.
    let sys = system();
    let gold = sys.labels().index_tree(&waves_sentence().gold_tree());
    let ids: Vec<usize> = actions(sys.labels(), &ERROR_WALK)
        .into_iter()
        .map(|a| sys.action_id(a).unwrap())
        .collect();
    let errs = detect_decision_errors(&sys, &ids, &gold, LossMode::Labeled).unwrap();
    let steps: Vec<usize> = errs.iter().map(|e| e.step + 1).collect();
    assert_eq!(steps, vec![5, 14]);
    assert_eq!(errs.iter().map(|e| e.cost).sum::<usize>(), 2);
    let (configs, acts) = run(&ERROR_WALK);
    assert_eq!(
        action_cost(&sys, &configs[6], acts[6], &gold, LossMode::Labeled).unwrap(),
        0
    );
}

#[test]
fn single_decision_error_costs_three() {
    let sys = system();
    let gold = sys.labels().index_tree(&waves_sentence().gold_tree());
    let (configs, acts) = run(&SINGLE_ERROR_WALK);
    let tree = sys.extract_indexed(configs.last().unwrap()).unwrap();
    assert_eq!(tree.heads, vec![2, 0, 2, 3, 2, 7, 5, 7]);
    assert_eq!(tree.errors_against(&gold, true), 3);
    let ids: Vec<usize> = acts.iter().map(|&a| sys.action_id(a).unwrap()).collect();
    let errs = detect_decision_errors(&sys, &ids, &gold, LossMode::Labeled).unwrap();
    assert_eq!(errs.len(), 1);
    assert_eq!((errs[0].step, errs[0].cost), (11, 3));
}

#[test]
fn memorizing_model_parses_gold() {
    let s = waves_sentence();
    let vocab = Vocab::build(std::slice::from_ref(&s), 1);
    let hyper = Hyper {
        dim: 8,
        hidden: 16,
        learning_rate: 0.05,
        ..Hyper::default()
    };
    let mut m = Model::new(SystemKind::ArcStandard, vocab, hyper, Init::default());
    let cfg = SupervisedConfig {
        epochs: 300,
        batch_size: 16,
        dropout: 0.0,
        ..SupervisedConfig::default()
    };
    train_supervised(&mut m, std::slice::from_ref(&s), &cfg).unwrap();
    let sys = m.transition_system();
    let (tree, trace) = greedy_parse(&m, &sys, &s).unwrap();
    assert_eq!(tree, s.gold_tree());
    assert_eq!(trace.actions.len(), 16);
    let gold: DepTree = s.gold_tree();
    assert_eq!(greedy_parse(&m, &sys, &s).unwrap().0, gold);
}
