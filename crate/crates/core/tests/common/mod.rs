#![allow(dead_code)]

use std::collections::HashMap;

use greedy_dep::dynamic_oracle::LossMode;
use greedy_dep::transitions::{Action, Configuration, IndexedTree, LabelSet, TransitionSystem};
use rand::Rng;

/// Random projective tree over `n` tokens: every span is split into
/// contiguous subtrees hanging off the same parent.
pub fn random_projective<R: Rng>(rng: &mut R, n: usize, n_labels: usize) -> IndexedTree {
    fn forest<R: Rng>(rng: &mut R, a: usize, b: usize, parent: usize, heads: &mut [usize]) {
        if a > b {
            return;
        }
        let end = rng.gen_range(a..=b);
        tree(rng, a, end, parent, heads);
        forest(rng, end + 1, b, parent, heads);
    }
    fn tree<R: Rng>(rng: &mut R, a: usize, b: usize, parent: usize, heads: &mut [usize]) {
        let root = rng.gen_range(a..=b);
        heads[root - 1] = parent;
        forest(rng, a, root - 1, root, heads);
        forest(rng, root + 1, b, root, heads);
    }
    let mut heads = vec![0; n];
    tree(rng, 1, n, 0, &mut heads);
    let labels = (0..n).map(|_| rng.gen_range(0..n_labels)).collect();
    IndexedTree { heads, labels }
}

/// Random (possibly non-projective) tree with a single root.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, n_labels: usize) -> IndexedTree {
    let mut order: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut heads = vec![0; n];
    for (pos, &tok) in order.iter().enumerate() {
        heads[tok - 1] = if pos == 0 { 0 } else { order[rng.gen_range(0..pos)] };
    }
    let labels = (0..n).map(|_| rng.gen_range(0..n_labels)).collect();
    IndexedTree { heads, labels }
}

/// Exhaustive search over every completion of a configuration, memoised on
/// (stack, buffer) since the arcs already built cannot change.
pub struct BruteForce<'a> {
    pub system: &'a TransitionSystem,
    pub gold: &'a IndexedTree,
    pub mode: LossMode,
    memo: HashMap<(Vec<usize>, Vec<usize>), usize>,
}

impl<'a> BruteForce<'a> {
    pub fn new(system: &'a TransitionSystem, gold: &'a IndexedTree, mode: LossMode) -> Self {
        BruteForce {
            system,
            gold,
            mode,
            memo: HashMap::new(),
        }
    }

    fn wrong(&self, head: usize, dep: usize, label: usize) -> usize {
        usize::from(self.gold.head(dep) != head || (self.mode.labeled() && self.gold.label(dep) != label))
    }

    /// Fewest wrong arcs among those still to be built.
    fn future(&mut self, c: &Configuration) -> usize {
        if self.system.is_terminal(c) {
            return 0;
        }
        let key = (c.stack().to_vec(), c.buffer().collect::<Vec<_>>());
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = usize::MAX;
        for a in self.system.legal_actions(c) {
            let next = self.system.apply(c, a).unwrap();
            let step = match a {
                Action::Left(l) | Action::Right(l) => {
                    let (dep, arc) = next
                        .arcs()
                        .find(|&(d, _)| c.arc(d).is_none())
                        .expect("arc action adds an arc");
                    self.wrong(arc.head, dep, l)
                }
                _ => 0,
            };
            best = best.min(step + self.future(&next));
        }
        self.memo.insert(key, best);
        best
    }

    pub fn min_loss(&mut self, c: &Configuration) -> usize {
        let fixed: usize = c.arcs().map(|(d, a)| self.wrong(a.head, d, a.label)).sum();
        fixed + self.future(c)
    }
}

/// Every (stack, buffer, unlabeled arcs) state reachable from the initial
/// configuration; arc labels are drawn at random along the way.
pub fn reachable_configs<R: Rng>(system: &TransitionSystem, n: usize, rng: &mut R) -> Vec<Configuration> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut todo = vec![Configuration::initial(n).unwrap()];
    let n_labels = system.labels().len();
    while let Some(c) = todo.pop() {
        let key: (Vec<usize>, Vec<usize>, Vec<Option<usize>>) = (
            c.stack().to_vec(),
            c.buffer().collect(),
            (1..=n).map(|d| c.arc(d).map(|a| a.head)).collect(),
        );
        if !seen.insert(key) {
            continue;
        }
        let kinds = [Action::Shift, Action::Left(0), Action::Right(0)];
        for kind in kinds {
            let a = kind.with_label(rng.gen_range(0..n_labels));
            if system.is_legal(&c, a) {
                todo.push(system.apply(&c, a).unwrap());
            }
        }
        out.push(c);
    }
    out
}

use greedy_dep::treebank::{Sentence, Token};

/// "waves hit stocks themselves on the Big Board" with its gold tree.
pub fn waves_sentence() -> Sentence {
    let rows = [
        ("waves", "NNS", 2, "nsubj"),
        ("hit", "VBD", 0, "root"),
        ("stocks", "NNS", 2, "dobj"),
        ("themselves", "PRP", 3, "dep"),
        ("on", "IN", 2, "prep"),
        ("the", "DT", 8, "det"),
        ("Big", "NNP", 8, "nn"),
        ("Board", "NNP", 5, "pobj"),
    ];
    Sentence::new(
        "waves",
        rows.iter().map(|&(f, p, h, l)| Token::new(f, p, h, l)).collect(),
    )
}

pub fn waves_labels() -> LabelSet {
    LabelSet::from_labels(
        ["amod", "dep", "det", "dobj", "nn", "nsubj", "pobj", "prep", "root"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )
}

/// Parses an action list like `["SH", "L:nsubj", "R:dobj"]`.
pub fn actions(labels: &LabelSet, spec: &[&str]) -> Vec<Action> {
    spec.iter()
        .map(|s| match s.split_once(':') {
            None if *s == "SH" => Action::Shift,
            Some(("L", l)) => Action::Left(labels.id(l).expect("known label")),
            Some(("R", l)) => Action::Right(labels.id(l).expect("known label")),
            _ => panic!("bad action {s}"),
        })
        .collect()
}

use greedy_dep::model::{Hyper, Init, Model, Vocab};
use greedy_dep::synth;
use greedy_dep::transitions::SystemKind;

/// A small synthetic treebank.
pub fn toy_corpus(n: usize, seed: u64) -> Vec<Sentence> {
    synth::generate(&synth::SynthConfig {
        sentences: n,
        seed,
        ..Default::default()
    })
}

/// Model over the vocabulary of `sentences` with every parameter drawn
/// uniformly from ±`scale` (embeddings) or ±`scale / 2` (dense layers).
pub fn random_model<R: Rng>(
    kind: SystemKind,
    sentences: &[Sentence],
    dim: usize,
    hidden: usize,
    scale: f64,
    rng: &mut R,
) -> Model {
    let hyper = Hyper {
        dim,
        hidden,
        ..Default::default()
    };
    let mut model = Model::new(kind, Vocab::build(sentences, 1), hyper, Init::default());
    for (i, t) in model.params.tensors_mut().into_iter().enumerate() {
        let s = if i < 3 { scale } else { scale / 2.0 };
        for x in &mut t.data {
            *x = rng.gen_range(-s..s);
        }
    }
    model
}

/// Random walk of legal actions from the initial configuration, returning
/// every configuration visited (terminal one included).
pub fn random_walk<R: Rng>(system: &TransitionSystem, n: usize, rng: &mut R) -> Vec<Configuration> {
    let mut c = Configuration::initial(n).unwrap();
    let mut out = vec![c.clone()];
    while !system.is_terminal(&c) && out.len() <= system.max_steps(n) {
        let legal = system.legal_actions(&c);
        let a = legal[rng.gen_range(0..legal.len())];
        c = system.apply(&c, a).unwrap();
        out.push(c.clone());
    }
    out
}
