//! Feature extraction and the policy network.
//!
//! Configurations are described by 48 sparse features (18 words, 18 tags,
//! 12 arc labels) which are embedded, concatenated and fed through one
//! hidden layer with a cubic activation. The output layer scores every
//! action of the transition system; the softmax is taken over legal actions
//! only, so illegal actions get exactly zero probability.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::transitions::{Configuration, LabelSet, SystemKind, TransitionSystem, UNKNOWN_LABEL};
use crate::treebank::Sentence;

pub const NULL_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const ROOT_ID: usize = 2;
const RESERVED: [&str; 3] = ["<null>", "<unk>", "<root>"];

pub const NUM_WORD_FEATURES: usize = 18;
pub const NUM_TAG_FEATURES: usize = 18;
pub const NUM_LABEL_FEATURES: usize = 12;
pub const NUM_FEATURES: usize = NUM_WORD_FEATURES + NUM_TAG_FEATURES + NUM_LABEL_FEATURES;

const MAGIC: &[u8; 4] = b"GDPM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("model file corrupt at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("unsupported model format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("model was trained for {found}, but {expected} was requested")]
    SystemMismatch { expected: SystemKind, found: SystemKind },
    #[error("no legal action in this configuration")]
    NoLegalAction,
    #[error("legality mask has {got} entries, model scores {expected} actions")]
    MaskLength { expected: usize, got: usize },
    #[error("gradient contains non-finite values; update skipped")]
    NonFiniteGradient,
    #[error("embedding file line {line}: {message}")]
    Embeddings { line: usize, message: String },
}

/// Word normalization: lowercase, and any number-like token becomes `<num>`.
pub fn normalize_word(form: &str) -> String {
    let has_digit = form.chars().any(|c| c.is_ascii_digit());
    let numeric = form
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, ',' | '.' | '-' | '/' | ':'));
    if has_digit && numeric {
        "<num>".to_owned()
    } else {
        form.to_lowercase()
    }
}

/// A frozen string-to-id table whose first three ids are NULL, UNK and ROOT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Table {
    fn with_reserved() -> Self {
        let mut t = Table {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            t.insert(r.to_owned());
        }
        t
    }

    fn from_names(names: Vec<String>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Table { names, index }
    }

    fn insert(&mut self, name: String) -> usize {
        let next = self.names.len();
        *self.index.entry(name.clone()).or_insert_with(|| {
            self.names.push(name);
            next
        })
    }

    /// Id of `name`, or UNK.
    pub fn id(&self, name: &str) -> usize {
        self.index.get(name).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Word, tag and label vocabularies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pub words: Table,
    pub tags: Table,
    pub labels: LabelSet,
}

impl Vocab {
    /// Builds vocabularies from a training treebank, keeping normalized word
    /// forms seen at least `min_count` times.
    pub fn build(sentences: &[Sentence], min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        let mut tags = Table::with_reserved();
        for s in sentences {
            for t in &s.tokens {
                let w = normalize_word(&t.form);
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
                tags.insert(t.tag().to_owned());
            }
        }
        let mut words = Table::with_reserved();
        for w in order {
            if counts[&w] >= min_count {
                words.insert(w);
            }
        }
        Vocab {
            words,
            tags,
            labels: LabelSet::from_sentences(sentences),
        }
    }

    /// Size of the label feature vocabulary: the reserved ids plus one id
    /// per dependency label.
    pub fn label_feature_count(&self) -> usize {
        RESERVED.len() + self.labels.len()
    }

    pub fn label_feature(&self, label: usize) -> usize {
        if label == UNKNOWN_LABEL || label >= self.labels.len() {
            UNK_ID
        } else {
            RESERVED.len() + label
        }
    }

    pub fn encode(&self, sentence: &Sentence) -> EncodedSentence {
        let mut words = vec![ROOT_ID];
        let mut tags = vec![ROOT_ID];
        for t in &sentence.tokens {
            words.push(self.words.id(&normalize_word(&t.form)));
            tags.push(self.tags.id(t.tag()));
        }
        EncodedSentence { words, tags }
    }
}

/// Word and tag ids of a sentence; index 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub tags: Vec<usize>,
}

/// The 48 feature ids: words, then tags, then labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FeatureVector(pub [usize; NUM_FEATURES]);

impl FeatureVector {
    pub fn words(&self) -> &[usize] {
        &self.0[..NUM_WORD_FEATURES]
    }

    pub fn tags(&self) -> &[usize] {
        &self.0[NUM_WORD_FEATURES..NUM_WORD_FEATURES + NUM_TAG_FEATURES]
    }

    pub fn labels(&self) -> &[usize] {
        &self.0[NUM_WORD_FEATURES + NUM_TAG_FEATURES..]
    }
}

/// Feature template: s1..s3 and b1..b3, then for each of s1 and s2 the
/// children lc1, rc1, lc2, rc2, lc1(lc1), rc1(rc1). Words and tags use all
/// 18 positions, labels only the 12 child positions.
pub fn extract_features(c: &Configuration, sentence: &EncodedSentence, vocab: &Vocab) -> FeatureVector {
    let mut pos: [Option<usize>; 18] = [None; 18];
    for i in 0..3 {
        pos[i] = c.stack_top(i);
        pos[3 + i] = c.buffer_front(i);
    }
    for (k, s) in [c.stack_top(0), c.stack_top(1)].into_iter().enumerate() {
        let base = 6 + 6 * k;
        if let Some(s) = s {
            let lc1 = c.left_child(s, 1);
            let rc1 = c.right_child(s, 1);
            pos[base] = lc1;
            pos[base + 1] = rc1;
            pos[base + 2] = c.left_child(s, 2);
            pos[base + 3] = c.right_child(s, 2);
            pos[base + 4] = lc1.and_then(|x| c.left_child(x, 1));
            pos[base + 5] = rc1.and_then(|x| c.right_child(x, 1));
        }
    }
    let mut f = [NULL_ID; NUM_FEATURES];
    for (i, p) in pos.iter().enumerate() {
        if let Some(t) = *p {
            f[i] = sentence.words[t];
            f[NUM_WORD_FEATURES + i] = sentence.tags[t];
            if i >= 6 {
                let label = c.arc(t).map_or(UNKNOWN_LABEL, |a| a.label);
                f[NUM_WORD_FEATURES + NUM_TAG_FEATURES + i - 6] = vocab.label_feature(label);
            }
        }
    }
    FeatureVector(f)
}

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform<R: Rng>(rows: usize, cols: usize, range: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| if range > 0.0 { rng.gen_range(-range..range) } else { 0.0 })
            .collect();
        Tensor { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// All trainable parameters. The same layout is used for the AdaGrad
/// accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub word_emb: Tensor,
    pub tag_emb: Tensor,
    pub label_emb: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
}

impl Params {
    pub fn tensors(&self) -> [&Tensor; 6] {
        [
            &self.word_emb,
            &self.tag_emb,
            &self.label_emb,
            &self.w1,
            &self.b1,
            &self.w2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.word_emb,
            &mut self.tag_emb,
            &mut self.label_emb,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
        ]
    }

    fn zeros_like(&self) -> Params {
        let z = |t: &Tensor| Tensor::zeros(t.rows, t.cols);
        Params {
            word_emb: z(&self.word_emb),
            tag_emb: z(&self.tag_emb),
            label_emb: z(&self.label_emb),
            w1: z(&self.w1),
            b1: z(&self.b1),
            w2: z(&self.w2),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Parameter gradient. Embedding gradients are sparse: only rows referenced
/// by some feature are present.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub word_emb: HashMap<usize, Vec<f64>>,
    pub tag_emb: HashMap<usize, Vec<f64>>,
    pub label_emb: HashMap<usize, Vec<f64>>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl Gradient {
    pub fn add(&mut self, other: &Gradient) {
        self.add_scaled(other, 1.0);
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (mine, theirs) in self.sparse_mut().into_iter().zip(other.sparse()) {
            for (&r, row) in theirs {
                let dst = mine.entry(r).or_insert_with(|| vec![0.0; row.len()]);
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += scale * s;
                }
            }
        }
        for (mine, theirs) in [
            (&mut self.w1, &other.w1),
            (&mut self.b1, &other.b1),
            (&mut self.w2, &other.w2),
        ] {
            for (d, s) in mine.iter_mut().zip(theirs) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.sparse_mut() {
            for row in m.values_mut() {
                row.iter_mut().for_each(|x| *x *= factor);
            }
        }
        for v in [&mut self.w1, &mut self.b1, &mut self.w2] {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn sparse(&self) -> [&HashMap<usize, Vec<f64>>; 3] {
        [&self.word_emb, &self.tag_emb, &self.label_emb]
    }

    fn sparse_mut(&mut self) -> [&mut HashMap<usize, Vec<f64>>; 3] {
        [&mut self.word_emb, &mut self.tag_emb, &mut self.label_emb]
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.sparse()
            .into_iter()
            .flat_map(|m| m.values().flatten().copied())
            .chain(self.w1.iter().chain(&self.b1).chain(&self.w2).copied())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|x| x * x).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|x| x == 0.0)
    }

    /// Dense copy laid out like [`Params::tensors`].
    pub fn to_dense(&self, model: &Model) -> Params {
        let mut p = model.params.zeros_like();
        for (t, m) in [&mut p.word_emb, &mut p.tag_emb, &mut p.label_emb]
            .into_iter()
            .zip(self.sparse())
        {
            for (&r, row) in m {
                t.row_mut(r).copy_from_slice(row);
            }
        }
        p.w1.data.copy_from_slice(&self.w1);
        p.b1.data.copy_from_slice(&self.b1);
        p.w2.data.copy_from_slice(&self.w2);
        p
    }
}

/// Probabilities over the full action inventory; illegal actions are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub legal: Vec<bool>,
}

impl PolicyOutput {
    /// Softmax of `logits` restricted to the legal actions.
    pub fn from_logits(logits: &[f64], legal: &[bool]) -> Self {
        masked_softmax(logits, legal)
    }

    /// Most probable legal action; ties go to the lowest id.
    pub fn argmax(&self) -> usize {
        let mut best = None;
        for (i, (&p, &ok)) in self.probs.iter().zip(&self.legal).enumerate() {
            if ok && best.is_none_or(|b: usize| p > self.probs[b]) {
                best = Some(i);
            }
        }
        best.expect("at least one legal action")
    }

    /// Draws an action id from the distribution.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for (i, (&p, &ok)) in self.probs.iter().zip(&self.legal).enumerate() {
            if !ok || p == 0.0 {
                continue;
            }
            acc += p;
            last = Some(i);
            if u < acc {
                return i;
            }
        }
        last.unwrap_or_else(|| self.argmax())
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Hidden layer after the cube and dropout.
    pub h: Vec<f64>,
    /// Dropout multipliers (0 or 1/(1-rate)); empty when dropout is off.
    pub keep: Vec<f64>,
    pub output: PolicyOutput,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub l2: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            dim: 50,
            hidden: 200,
            learning_rate: 0.01,
            epsilon: 1e-6,
            l2: 1e-8,
        }
    }
}

/// Initialization ranges. Embeddings are uniform in ±`embedding`; the dense
/// layers are uniform in ±`dense_scale`/√fan_in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Init {
    pub embedding: f64,
    pub dense_scale: f64,
    pub seed: u64,
}

impl Default for Init {
    fn default() -> Self {
        Init {
            embedding: 0.01,
            dense_scale: 1.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub system: SystemKind,
    pub vocab: Vocab,
    pub hyper: Hyper,
    pub params: Params,
    pub accum: Params,
}

impl Model {
    pub fn new(system: SystemKind, vocab: Vocab, hyper: Hyper, init: Init) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let n_actions = TransitionSystem::new(system, vocab.labels.clone()).num_actions();
        let d = hyper.dim;
        let input = NUM_FEATURES * d;
        let e = init.embedding;
        let params = Params {
            word_emb: Tensor::uniform(vocab.words.len(), d, e, &mut rng),
            tag_emb: Tensor::uniform(vocab.tags.len(), d, e, &mut rng),
            label_emb: Tensor::uniform(vocab.label_feature_count(), d, e, &mut rng),
            w1: Tensor::uniform(hyper.hidden, input, init.dense_scale / (input as f64).sqrt(), &mut rng),
            b1: Tensor::zeros(1, hyper.hidden),
            w2: Tensor::uniform(
                n_actions,
                hyper.hidden,
                init.dense_scale / (hyper.hidden as f64).sqrt(),
                &mut rng,
            ),
        };
        let accum = params.zeros_like();
        Model {
            system,
            vocab,
            hyper,
            params,
            accum,
        }
    }

    pub fn transition_system(&self) -> TransitionSystem {
        TransitionSystem::new(self.system, self.vocab.labels.clone())
    }

    pub fn num_actions(&self) -> usize {
        self.params.w2.rows
    }

    pub fn features(&self, c: &Configuration, sentence: &EncodedSentence) -> FeatureVector {
        extract_features(c, sentence, &self.vocab)
    }

    pub fn zero_gradient(&self) -> Gradient {
        Gradient {
            word_emb: HashMap::new(),
            tag_emb: HashMap::new(),
            label_emb: HashMap::new(),
            w1: vec![0.0; self.params.w1.data.len()],
            b1: vec![0.0; self.params.b1.data.len()],
            w2: vec![0.0; self.params.w2.data.len()],
        }
    }

    fn embed(&self, f: &FeatureVector) -> Vec<f64> {
        let d = self.hyper.dim;
        let mut x = Vec::with_capacity(NUM_FEATURES * d);
        for (i, &id) in f.0.iter().enumerate() {
            x.extend_from_slice(self.embedding_table(i).row(id));
        }
        x
    }

    fn embedding_table(&self, feature: usize) -> &Tensor {
        if feature < NUM_WORD_FEATURES {
            &self.params.word_emb
        } else if feature < NUM_WORD_FEATURES + NUM_TAG_FEATURES {
            &self.params.tag_emb
        } else {
            &self.params.label_emb
        }
    }

    pub fn forward(&self, f: &FeatureVector, legal: &[bool]) -> Result<PolicyOutput, ModelError> {
        Ok(self.forward_cached(f, legal)?.output)
    }

    pub fn forward_cached(&self, f: &FeatureVector, legal: &[bool]) -> Result<Activations, ModelError> {
        self.run(f, legal, None::<(&mut ChaCha8Rng, f64)>)
    }

    /// Forward pass with inverted dropout on the hidden layer.
    pub fn forward_dropout<R: Rng>(
        &self,
        f: &FeatureVector,
        legal: &[bool],
        rate: f64,
        rng: &mut R,
    ) -> Result<Activations, ModelError> {
        self.run(f, legal, Some((rng, rate)))
    }

    fn run<R: Rng>(
        &self,
        f: &FeatureVector,
        legal: &[bool],
        dropout: Option<(&mut R, f64)>,
    ) -> Result<Activations, ModelError> {
        let n_actions = self.num_actions();
        if legal.len() != n_actions {
            return Err(ModelError::MaskLength {
                expected: n_actions,
                got: legal.len(),
            });
        }
        if !legal.iter().any(|&l| l) {
            return Err(ModelError::NoLegalAction);
        }
        let x = self.embed(f);
        let w1 = &self.params.w1;
        let z: Vec<f64> = (0..w1.rows)
            .map(|r| dot(w1.row(r), &x) + self.params.b1.data[r])
            .collect();
        let mut h: Vec<f64> = z.iter().map(|v| v * v * v).collect();
        let mut keep = Vec::new();
        if let Some((rng, rate)) = dropout {
            if rate > 0.0 {
                let scale = 1.0 / (1.0 - rate);
                keep = (0..h.len())
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { scale })
                    .collect();
                h.iter_mut().zip(&keep).for_each(|(v, k)| *v *= k);
            }
        }
        let w2 = &self.params.w2;
        let logits: Vec<f64> = (0..n_actions).map(|a| dot(w2.row(a), &h)).collect();
        let output = masked_softmax(&logits, legal);
        Ok(Activations { x, z, h, keep, output })
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative with
    /// respect to each log-probability is `dlogp` (entries for illegal
    /// actions are ignored).
    pub fn backward(&self, f: &FeatureVector, act: &Activations, dlogp: &[f64], grad: &mut Gradient) {
        let out = &act.output;
        let total: f64 = dlogp.iter().zip(&out.legal).filter(|(_, &l)| l).map(|(g, _)| g).sum();
        let dlogit: Vec<f64> = (0..out.probs.len())
            .map(|j| {
                if out.legal[j] {
                    dlogp[j] - out.probs[j] * total
                } else {
                    0.0
                }
            })
            .collect();
        if dlogit.iter().all(|&g| g == 0.0) {
            return;
        }
        let hidden = act.h.len();
        let w2 = &self.params.w2;
        let mut dh = vec![0.0; hidden];
        for (a, &g) in dlogit.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, &act.h, &mut grad.w2[a * hidden..(a + 1) * hidden]);
            axpy(g, w2.row(a), &mut dh);
        }
        let dz: Vec<f64> = (0..hidden)
            .map(|i| {
                let k = if act.keep.is_empty() { 1.0 } else { act.keep[i] };
                dh[i] * k * 3.0 * act.z[i] * act.z[i]
            })
            .collect();
        let input = act.x.len();
        let w1 = &self.params.w1;
        let mut dx = vec![0.0; input];
        for (r, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b1[r] += g;
            axpy(g, &act.x, &mut grad.w1[r * input..(r + 1) * input]);
            axpy(g, w1.row(r), &mut dx);
        }
        let d = self.hyper.dim;
        for (i, &id) in f.0.iter().enumerate() {
            let table = if i < NUM_WORD_FEATURES {
                &mut grad.word_emb
            } else if i < NUM_WORD_FEATURES + NUM_TAG_FEATURES {
                &mut grad.tag_emb
            } else {
                &mut grad.label_emb
            };
            let row = table.entry(id).or_insert_with(|| vec![0.0; d]);
            for (dst, s) in row.iter_mut().zip(&dx[i * d..(i + 1) * d]) {
                *dst += s;
            }
        }
    }

    /// One AdaGrad step, `θ ← θ − α·g/√(G+ε)` with `G ← G + g²`, where
    /// `g` includes the L2 term `l2·θ` (pass 0 to disable). Embedding
    /// rows not present in the gradient are left alone.
    pub fn adagrad_step(&mut self, grad: &Gradient, l2: f64) -> Result<(), ModelError> {
        if !grad.all_finite() {
            log::warn!("non-finite gradient, skipping update");
            return Err(ModelError::NonFiniteGradient);
        }
        let Hyper {
            learning_rate: lr,
            epsilon: eps,
            ..
        } = self.hyper;
        let step = |theta: &mut [f64], acc: &mut [f64], g: &[f64]| {
            for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(g) {
                let g = g + l2 * *t;
                if g == 0.0 {
                    continue;
                }
                *a += g * g;
                *t -= lr * g / (*a + eps).sqrt();
            }
        };
        let Params {
            word_emb,
            tag_emb,
            label_emb,
            w1,
            b1,
            w2,
        } = &mut self.params;
        let [aw, at, al, a1, ab, a2] = self.accum.tensors_mut();
        for (t, a, g) in [
            (word_emb, aw, &grad.word_emb),
            (tag_emb, at, &grad.tag_emb),
            (label_emb, al, &grad.label_emb),
        ] {
            for (&r, row) in g {
                step(t.row_mut(r), a.row_mut(r), row);
            }
        }
        step(&mut w1.data, &mut a1.data, &grad.w1);
        step(&mut b1.data, &mut ab.data, &grad.b1);
        step(&mut w2.data, &mut a2.data, &grad.w2);
        Ok(())
    }

    /// Overwrites word embeddings with pretrained vectors (matched on the
    /// normalized form). Returns how many rows were replaced.
    pub fn load_pretrained(&mut self, vectors: &HashMap<String, Vec<f64>>) -> Result<usize, ModelError> {
        let mut replaced = 0;
        for (w, v) in vectors {
            if v.len() != self.hyper.dim {
                return Err(ModelError::Embeddings {
                    line: 0,
                    message: format!(
                        "vector for {w:?} has {} values, model dim is {}",
                        v.len(),
                        self.hyper.dim
                    ),
                });
            }
            let key = normalize_word(w);
            if self.vocab.words.contains(&key) {
                let id = self.vocab.words.id(&key);
                self.params.word_emb.row_mut(id).copy_from_slice(v);
                replaced += 1;
            }
        }
        Ok(replaced)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Serializes the model: a little-endian header (magic, version, system,
    /// sizes, hyperparameters), the vocabulary tables, then the parameters
    /// and AdaGrad accumulators.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[self.system.code()])?;
        for n in [
            self.hyper.dim,
            self.hyper.hidden,
            self.vocab.words.len(),
            self.vocab.tags.len(),
            self.vocab.labels.len(),
            self.num_actions(),
        ] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for x in [self.hyper.learning_rate, self.hyper.epsilon, self.hyper.l2] {
            w.write_all(&x.to_le_bytes())?;
        }
        let names = self
            .vocab
            .words
            .names
            .iter()
            .chain(&self.vocab.tags.names)
            .chain(self.vocab.labels.names());
        for s in names {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
        }
        for t in self.params.tensors().into_iter().chain(self.accum.tensors()) {
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Loads a model, optionally checking it was trained for `expected`.
    pub fn load(path: impl AsRef<Path>, expected: Option<SystemKind>) -> Result<Model, ModelError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r, expected)
    }

    pub fn read_from<R: Read>(r: &mut R, expected: Option<SystemKind>) -> Result<Model, ModelError> {
        let mut r = ByteReader { inner: r, offset: 0 };
        let magic = r.bytes(4)?;
        if magic != MAGIC {
            return Err(r.corrupt(0, "bad magic, not a model file"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Version(version));
        }
        let code_at = r.offset;
        let code = r.bytes(1)?[0];
        let system = SystemKind::from_code(code)
            .ok_or_else(|| r.corrupt(code_at, &format!("unknown transition system id {code}")))?;
        if let Some(expected) = expected {
            if expected != system {
                return Err(ModelError::SystemMismatch {
                    expected,
                    found: system,
                });
            }
        }
        let sizes_at = r.offset;
        let mut sizes = [0usize; 6];
        for s in &mut sizes {
            *s = r.u32()? as usize;
        }
        let [dim, hidden, n_words, n_tags, n_labels, n_actions] = sizes;
        if dim == 0 || hidden == 0 || n_words < 3 || n_tags < 3 {
            return Err(r.corrupt(sizes_at, "implausible dimensions"));
        }
        let hyper = Hyper {
            dim,
            hidden,
            learning_rate: r.f64()?,
            epsilon: r.f64()?,
            l2: r.f64()?,
        };
        let words = Table::from_names(r.strings(n_words)?);
        let tags = Table::from_names(r.strings(n_tags)?);
        let labels = LabelSet::from_labels(r.strings(n_labels)?);
        let vocab = Vocab { words, tags, labels };
        if TransitionSystem::new(system, vocab.labels.clone()).num_actions() != n_actions {
            return Err(r.corrupt(sizes_at, "action count does not match the label set"));
        }
        let shapes = [
            (n_words, dim),
            (n_tags, dim),
            (vocab.label_feature_count(), dim),
            (hidden, NUM_FEATURES * dim),
            (1, hidden),
            (n_actions, hidden),
        ];
        let params = r.params(&shapes)?;
        let accum = r.params(&shapes)?;
        if !params.all_finite() {
            return Err(r.corrupt(r.offset, "non-finite parameter values"));
        }
        Ok(Model {
            system,
            vocab,
            hyper,
            params,
            accum,
        })
    }
}

struct ByteReader<'a, R> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> ByteReader<'_, R> {
    fn corrupt(&self, offset: u64, message: &str) -> ModelError {
        ModelError::Format {
            offset,
            message: message.to_owned(),
        }
    }

    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, ModelError> {
        let mut buf = vec![0; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => self.corrupt(self.offset, "unexpected end of file"),
            _ => ModelError::Io(e),
        })?;
        self.offset += n as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().expect("8 bytes")))
    }

    fn strings(&mut self, n: usize) -> Result<Vec<String>, ModelError> {
        (0..n)
            .map(|_| {
                let at = self.offset;
                let len = self.u32()? as usize;
                if len > 1 << 20 {
                    return Err(self.corrupt(at, "string length out of range"));
                }
                String::from_utf8(self.bytes(len)?).map_err(|_| self.corrupt(at, "string is not UTF-8"))
            })
            .collect()
    }

    fn tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor, ModelError> {
        let raw = self.bytes(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Tensor { rows, cols, data })
    }

    fn params(&mut self, shapes: &[(usize, usize); 6]) -> Result<Params, ModelError> {
        let mut t = Vec::with_capacity(6);
        for &(r, c) in shapes {
            t.push(self.tensor(r, c)?);
        }
        let [word_emb, tag_emb, label_emb, w1, b1, w2]: [Tensor; 6] = t.try_into().expect("six tensors");
        Ok(Params {
            word_emb,
            tag_emb,
            label_emb,
            w1,
            b1,
            w2,
        })
    }
}

/// Reads a text embedding file: one token per line followed by its values,
/// whitespace separated. All vectors must have the same length.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<HashMap<String, Vec<f64>>, ModelError> {
    let mut out = HashMap::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Result<Vec<f64>, _> = parts.map(str::parse).collect();
        let values = values.map_err(|e| ModelError::Embeddings {
            line: i + 1,
            message: format!("{e}"),
        })?;
        if *dim.get_or_insert(values.len()) != values.len() || values.is_empty() {
            return Err(ModelError::Embeddings {
                line: i + 1,
                message: format!("expected {} values, found {}", dim.unwrap_or(0), values.len()),
            });
        }
        out.insert(token.to_owned(), values);
    }
    Ok(out)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>, ModelError> {
    read_embeddings(BufReader::new(File::open(path)?))
}

fn masked_softmax(logits: &[f64], legal: &[bool]) -> PolicyOutput {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .zip(legal)
        .filter(|(_, &l)| l)
        .map(|(&x, _)| (x - max).exp())
        .sum();
    let log_z = max + sum.ln();
    let mut probs = vec![0.0; logits.len()];
    let mut log_probs = vec![f64::NEG_INFINITY; logits.len()];
    for j in 0..logits.len() {
        if legal[j] {
            log_probs[j] = logits[j] - log_z;
            probs[j] = log_probs[j].exp();
        }
    }
    PolicyOutput {
        probs,
        log_probs,
        legal: legal.to_vec(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
