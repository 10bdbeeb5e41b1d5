mod common;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use greedy_dep::analysis::{
    aggregate, alternative_propagation_count, analyze_corpus, avoided_errors, corrected_pass, detect_decision_errors,
    repair_parse, repair_with, AnalysisError, RepairRecord,
};
use greedy_dep::dynamic_oracle::LossMode;
use greedy_dep::model::{Hyper, Init, Model, ModelError, PolicyOutput, Vocab};
use greedy_dep::training::{train_supervised, SupervisedConfig};
use greedy_dep::transitions::{Configuration, IndexedTree, LabelSet, SystemKind, TransitionSystem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_projective, toy_corpus};

fn system(n_labels: usize) -> TransitionSystem {
    let labels = (0..n_labels).map(|i| format!("l{i}")).collect();
    TransitionSystem::new(SystemKind::ArcStandard, LabelSet::from_labels(labels))
}

/// A deterministic policy whose logits are a hash of the configuration.
fn hashed_policy(
    system: &TransitionSystem,
    salt: u64,
) -> impl Fn(&Configuration) -> Result<PolicyOutput, ModelError> + '_ {
    move |c: &Configuration| {
        let legal = system.legal_mask(c);
        let logits: Vec<f64> = (0..legal.len())
            .map(|a| {
                let mut h = DefaultHasher::new();
                (salt, c.stack(), c.buffer().collect::<Vec<_>>(), a).hash(&mut h);
                c.arcs()
                    .map(|(d, arc)| (d, arc.head, arc.label))
                    .collect::<Vec<_>>()
                    .hash(&mut h);
                (h.finish() % 1000) as f64 / 100.0
            })
            .collect();
        Ok(PolicyOutput::from_logits(&logits, &legal))
    }
}

fn check_record(sys: &TransitionSystem, gold: &IndexedTree, rec: &RepairRecord, salt: u64) {
    assert!(!rec.flagged);
    assert_eq!(rec.remaining[0], rec.original_decision_errors);
    assert_eq!(*rec.remaining.last().unwrap(), 0);
    assert_eq!(rec.propagated_errors * rec.new_errors, 0);
    assert_eq!(
        rec.original_decision_errors + rec.new_errors,
        rec.fixed_decisions + rec.propagated_errors
    );
    let policy = hashed_policy(sys, salt);
    let first = corrected_pass(sys, &policy, gold, 0, LossMode::Labeled).unwrap();
    let total: usize = first.errors.iter().map(|e| e.cost).sum();
    assert_eq!(
        total, rec.original_arc_errors,
        "decision costs add up to the arc errors"
    );
    assert_eq!(
        detect_decision_errors(sys, &first.actions, gold, LossMode::Labeled).unwrap(),
        first.errors
    );
    let last = corrected_pass(sys, &policy, gold, rec.passes() - 1, LossMode::Labeled).unwrap();
    assert_eq!(&last.tree, gold);
    assert_eq!(last.forced, rec.fixed_decisions);
    // Whenever no correction leaves the count unchanged or higher, a
    // sentence without propagated errors has no multi-error correction.
    let monotone = rec.remaining.windows(2).all(|w| w[0] > w[1]);
    if monotone && rec.propagated_errors == 0 {
        assert_eq!(rec.multi_error_corrections(), 0);
    }
}

#[test]
fn repair_reaches_gold_under_scripted_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut propagated, mut new, mut multi) = (0, 0, 0);
    for salt in 0..400u64 {
        let n = rng.gen_range(1..=10);
        let sys = system(2);
        let gold = random_projective(&mut rng, n, 2);
        let policy = hashed_policy(&sys, salt);
        let rec = repair_with(&sys, &policy, &gold, "s", None, LossMode::Labeled).unwrap();
        check_record(&sys, &gold, &rec, salt);
        propagated += rec.propagated_errors;
        new += rec.new_errors;
        multi += rec.multi_error_corrections();
    }
    // The scripted policies exercise every branch of the bookkeeping.
    assert!(propagated > 0 && new > 0 && multi > 0, "{propagated} {new} {multi}");
}

#[test]
fn gold_following_policy_has_no_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = system(2);
    let gold = random_projective(&mut rng, 7, 2);
    let oracle = sys.static_oracle(&gold).unwrap();
    let policy = |c: &Configuration| {
        let legal = sys.legal_mask(c);
        let step = c.num_arcs() + (c.len() - c.buffer_len());
        let mut logits = vec![0.0; legal.len()];
        logits[sys.action_id(oracle[step]).unwrap()] = 10.0;
        Ok(PolicyOutput::from_logits(&logits, &legal))
    };
    let rec = repair_with(&sys, &policy, &gold, "g", None, LossMode::Labeled).unwrap();
    assert_eq!(rec.remaining, vec![0]);
    assert_eq!((rec.original_arc_errors, rec.fixed_decisions), (0, 0));
}

#[test]
fn depth_limit_flags_the_record() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sys = system(2);
    for salt in 0..50u64 {
        let gold = random_projective(&mut rng, 8, 2);
        let policy = hashed_policy(&sys, salt);
        let full = repair_with(&sys, &policy, &gold, "d", None, LossMode::Labeled).unwrap();
        if full.passes() > 2 {
            let cut = repair_with(&sys, &policy, &gold, "d", Some(1), LossMode::Labeled).unwrap();
            assert!(cut.flagged);
            assert_eq!(aggregate(&[cut]).flagged, 1);
            return;
        }
    }
    panic!("no sentence needed more than one correction");
}

#[test]
fn non_projective_gold_is_refused() {
    let sys = system(1);
    let gold = IndexedTree {
        heads: vec![3, 4, 0, 3],
        labels: vec![0; 4],
    };
    let policy = hashed_policy(&sys, 0);
    assert!(matches!(
        repair_with(&sys, &policy, &gold, "np", None, LossMode::Labeled),
        Err(AnalysisError::NonProjective(_))
    ));
}

fn record(id: &str, loss: usize, dec: usize, prop: usize, new: usize) -> RepairRecord {
    RepairRecord {
        id: id.into(),
        original_arc_errors: loss,
        original_unlabeled_arc_errors: loss,
        original_decision_errors: dec,
        fixed_decisions: dec + new - prop,
        propagated_errors: prop,
        new_errors: new,
        remaining: vec![dec, 0],
        flagged: false,
    }
}

#[test]
fn aggregate_reproduces_table_ratios() {
    // Totals 7069 loss, 5177 decision errors, 1399 propagated, 411 new.
    let records = vec![
        record("a", 4000, 3000, 1000, 0),
        record("b", 3069, 2177, 399, 0),
        record("c", 0, 0, 0, 411),
    ];
    let r = aggregate(&records);
    assert_eq!(
        (r.total_loss, r.decision_errors, r.err_prop, r.new_errors),
        (7069, 5177, 1399, 411)
    );
    let mut out = Vec::new();
    r.write_summary(&mut out, false).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("Loss/error\t1.37\n"), "{text}");
    assert!(text.contains("Err. Prop. (%)\t27.0\n"), "{text}");
    assert!(!text.contains("Multi-error"));
}

proptest! {
    #[test]
    fn aggregate_is_additive(
        a in prop::collection::vec((0usize..50, 0usize..30, 0usize..10), 0..8),
        b in prop::collection::vec((0usize..50, 0usize..30, 0usize..10), 0..8),
    ) {
        let mk = |v: &[(usize, usize, usize)]| -> Vec<RepairRecord> {
            v.iter().map(|&(l, d, p)| record("x", l, d, p.min(d), 0)).collect()
        };
        let (ra, rb) = (mk(&a), mk(&b));
        let both: Vec<RepairRecord> = ra.iter().chain(&rb).cloned().collect();
        let (x, y, z) = (aggregate(&ra), aggregate(&rb), aggregate(&both));
        prop_assert_eq!(z.total_loss, x.total_loss + y.total_loss);
        prop_assert_eq!(z.decision_errors, x.decision_errors + y.decision_errors);
        prop_assert_eq!(z.err_prop, x.err_prop + y.err_prop);
        prop_assert_eq!(z.sentences, x.sentences + y.sentences);
        prop_assert!(z.err_prop_pct >= 0.0 && z.err_prop_pct <= 100.0);
    }
}

#[test]
fn alternative_count_reads_the_pass_history() {
    let mut a = record("a", 5, 4, 2, 0);
    a.remaining = vec![4, 2, 1, 0];
    let mut b = record("b", 3, 3, 1, 0);
    b.remaining = vec![3, 1, 0];
    assert_eq!(alternative_propagation_count(&[a.clone(), b.clone()]), 2);
    assert_eq!(aggregate(&[a, b]).alternative, 2);
}

#[test]
fn avoided_errors_split() {
    let base = vec![
        record("a", 6, 5, 2, 0),
        record("b", 2, 2, 0, 0),
        record("c", 1, 1, 1, 0),
    ];
    let other = vec![record("a", 2, 1, 0, 0), record("b", 3, 3, 0, 0)];
    let r = avoided_errors(&base, &other);
    assert_eq!((r.avoided, r.propagated), (4, 2));
    assert!((r.pct - 50.0).abs() < 1e-12);
}

#[test]
fn trained_model_analysis_terminates_everywhere() {
    let corpus = toy_corpus(160, 21);
    let (train, test) = corpus.split_at(120);
    let hyper = Hyper {
        dim: 12,
        hidden: 32,
        learning_rate: 0.02,
        ..Default::default()
    };
    let mut model = Model::new(SystemKind::ArcStandard, Vocab::build(train, 1), hyper, Init::default());
    let cfg = SupervisedConfig {
        epochs: 4,
        dropout: 0.0,
        ..Default::default()
    };
    train_supervised(&mut model, train, &cfg).unwrap();
    let (records, skipped) = analyze_corpus(&model, test, None, LossMode::Labeled).unwrap();
    assert_eq!(records.len() + skipped, test.len());
    assert!(records.iter().all(|r| !r.flagged));
    let report = aggregate(&records);
    assert!(report.decision_errors > 0);
    assert!(report.total_loss >= report.decision_errors);

    let eager = Model::new(SystemKind::ArcEager, Vocab::build(train, 1), hyper, Init::default());
    assert!(matches!(
        repair_parse(&eager, &test[0], None, LossMode::Labeled),
        Err(AnalysisError::NotArcStandard(_))
    ));
}
