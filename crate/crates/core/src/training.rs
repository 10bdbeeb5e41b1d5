//! Supervised training on oracle derivations, REINFORCE, and approximate
//! policy gradient over trajectory sets (oracle, random samples, or a
//! per-sentence memory of the best samples seen so far).

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::decode::{evaluate_model, DecodeError};
use crate::model::{Activations, EncodedSentence, FeatureVector, Gradient, Model, ModelError};
use crate::transitions::{Configuration, IndexedTree, TransitionError, TransitionSystem};
use crate::treebank::{is_projective, DepTree, PunctConvention, Sentence};

/// Sentences per work unit when gradients are computed in parallel. Units
/// are summed in a fixed order so results do not depend on the thread count.
const CHUNK: usize = 8;
const SL_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no usable training sentences")]
    NoTrainingData,
    #[error("predicted tree has {predicted} tokens, gold has {gold}")]
    ArityMismatch { predicted: usize, gold: usize },
    #[error("trajectory does not fit sentence {sentence}: {reason}")]
    TrajectoryMismatch { sentence: String, reason: String },
    #[error("failed to write training log: {0}")]
    Log(#[from] std::io::Error),
}

/// A training sentence in indexed form.
#[derive(Clone, Debug)]
pub struct Instance {
    pub id: String,
    pub enc: EncodedSentence,
    pub gold: IndexedTree,
    /// Punctuation flags by 1-based token index.
    pub punct: Vec<bool>,
    /// Static oracle action ids, when the gold tree is derivable.
    pub oracle: Option<Vec<usize>>,
    pub projective: bool,
}

impl Instance {
    pub fn new(model: &Model, system: &TransitionSystem, sentence: &Sentence, punct: PunctConvention) -> Self {
        let gold = system.labels().index_tree(&sentence.gold_tree());
        let oracle = system.static_oracle(&gold).ok().map(|acts| {
            acts.into_iter()
                .map(|a| system.action_id(a).expect("oracle actions are in the inventory"))
                .collect()
        });
        Instance {
            id: sentence.id.clone(),
            enc: model.vocab.encode(sentence),
            projective: is_projective(&gold.heads),
            gold,
            punct: sentence.punctuation_mask(punct),
            oracle,
        }
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn scored(&self) -> usize {
        self.punct[1..].iter().filter(|&&p| !p).count()
    }

    /// Correct labeled arcs on non-punctuation tokens.
    pub fn reward(&self, predicted: &IndexedTree) -> f64 {
        (1..=self.len())
            .filter(|&d| {
                !self.punct[d] && predicted.head(d) == self.gold.head(d) && predicted.label(d) == self.gold.label(d)
            })
            .count() as f64
    }

    pub fn baseline(&self) -> f64 {
        0.5 * self.scored() as f64
    }
}

pub fn prepare(model: &Model, sentences: &[Sentence], punct: PunctConvention) -> Vec<Instance> {
    let system = model.transition_system();
    sentences
        .par_iter()
        .map(|s| Instance::new(model, &system, s, punct))
        .collect()
}

/// Number of tokens with correct head and label, punctuation excluded.
pub fn reward_fn(predicted: &DepTree, gold: &Sentence, punct: PunctConvention) -> Result<f64, TrainError> {
    if predicted.len() != gold.len() {
        return Err(TrainError::ArityMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mask = gold.punctuation_mask(punct);
    Ok(gold
        .tokens
        .iter()
        .enumerate()
        .filter(|&(i, t)| !mask[i + 1] && predicted.heads[i] == t.head && predicted.labels[i] == t.label)
        .count() as f64)
}

/// Half the number of scored tokens: the reward of a 50% LAS parse.
pub fn baseline_fn(sentence: &Sentence, punct: PunctConvention) -> f64 {
    0.5 * sentence.scored_tokens(punct) as f64
}

/// A complete derivation: action ids, the resulting tree, its reward and
/// its log-probability at the time it was produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub tree: IndexedTree,
    pub reward: f64,
    pub log_prob: f64,
}

/// Follows the policy by sampling until termination. Returns `None` when the
/// step cap is hit.
pub fn sample_trajectory<R: Rng>(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
    rng: &mut R,
) -> Result<Option<Trajectory>, TrainError> {
    let mut c = Configuration::initial(inst.len())?;
    let cap = system.max_steps(inst.len());
    let mut actions = Vec::new();
    let mut log_prob = 0.0;
    while !system.is_terminal(&c) {
        if actions.len() >= cap {
            log::debug!("sentence {}: sampled derivation hit the step cap", inst.id);
            return Ok(None);
        }
        let out = model.forward(&model.features(&c, &inst.enc), &system.legal_mask(&c))?;
        let a = out.sample(rng);
        log_prob += out.log_probs[a];
        actions.push(a);
        c = system.apply_id(&c, a)?;
    }
    let tree = system.extract_indexed(&c)?;
    Ok(Some(Trajectory {
        reward: inst.reward(&tree),
        actions,
        tree,
        log_prob,
    }))
}

/// Up to `k` distinct trajectories, drawing at most `3k` samples.
pub fn sample_trajectories<R: Rng>(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Trajectory>, TrainError> {
    let mut out: Vec<Trajectory> = Vec::with_capacity(k);
    for _ in 0..3 * k {
        if out.len() == k {
            break;
        }
        if let Some(t) = sample_trajectory(model, system, inst, rng)? {
            if !out.iter().any(|o| o.actions == t.actions) {
                out.push(t);
            }
        }
    }
    Ok(out)
}

/// The static oracle derivation as a trajectory, scored under the current model.
pub fn oracle_trajectory(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
) -> Result<Option<Trajectory>, TrainError> {
    let Some(actions) = inst.oracle.clone() else {
        return Ok(None);
    };
    let steps = replay(model, system, inst, &actions)?;
    let log_prob = steps.iter().map(|s| s.1.output.log_probs[s.2]).sum();
    Ok(Some(Trajectory {
        reward: inst.reward(&inst.gold),
        tree: inst.gold.clone(),
        actions,
        log_prob,
    }))
}

type Step = (FeatureVector, Activations, usize);

/// Re-runs an action sequence under the current parameters.
fn replay(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
    actions: &[usize],
) -> Result<Vec<Step>, TrainError> {
    let mismatch = |reason: String| TrainError::TrajectoryMismatch {
        sentence: inst.id.clone(),
        reason,
    };
    let mut c = Configuration::initial(inst.len())?;
    let mut steps = Vec::with_capacity(actions.len());
    for &a in actions {
        let f = model.features(&c, &inst.enc);
        let act = model.forward_cached(&f, &system.legal_mask(&c))?;
        if !act.output.legal.get(a).copied().unwrap_or(false) {
            return Err(mismatch(format!("action {a} illegal at step {}", steps.len())));
        }
        c = system.apply_id(&c, a)?;
        steps.push((f, act, a));
    }
    if !system.is_terminal(&c) {
        return Err(mismatch("derivation does not terminate".into()));
    }
    Ok(steps)
}

/// How trajectory probabilities weight their advantage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    /// Trajectory probabilities renormalized over the set (softmax of log-probs).
    #[default]
    Normalized,
    /// Raw products of step probabilities.
    Raw,
}

impl FromStr for Weighting {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normalized" => Ok(Weighting::Normalized),
            "raw" => Ok(Weighting::Raw),
            other => Err(TrainError::Config(format!("unknown weighting {other:?}"))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Normalized => "normalized",
            Weighting::Raw => "raw",
        })
    }
}

/// Gradient of the negated objective
/// `Σ_U (r − b) · w(traj) · Σ_i log p(a_i | s_i)` with the weights held
/// fixed, i.e. the descent direction for the approximate policy gradient.
/// Weights are recomputed under the current parameters.
pub fn apg_gradient(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
    set: &[Trajectory],
    weighting: Weighting,
) -> Result<Gradient, TrainError> {
    if set.is_empty() {
        return Err(TrainError::TrajectoryMismatch {
            sentence: inst.id.clone(),
            reason: "empty trajectory set".into(),
        });
    }
    let baseline = inst.baseline();
    let replays = set
        .iter()
        .map(|t| replay(model, system, inst, &t.actions))
        .collect::<Result<Vec<_>, _>>()?;
    let log_probs: Vec<f64> = replays
        .iter()
        .map(|steps| steps.iter().map(|(_, act, a)| act.output.log_probs[*a]).sum())
        .collect();
    let weights: Vec<f64> = match weighting {
        Weighting::Raw => log_probs.iter().map(|lp| lp.exp()).collect(),
        Weighting::Normalized => {
            let max = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = log_probs.iter().map(|lp| (lp - max).exp()).sum();
            log_probs.iter().map(|lp| (lp - max).exp() / z).collect()
        }
    };
    let mut grad = model.zero_gradient();
    let mut dlogp = vec![0.0; model.num_actions()];
    for ((t, steps), w) in set.iter().zip(&replays).zip(weights) {
        let coeff = -(t.reward - baseline) * w;
        if coeff == 0.0 {
            continue;
        }
        for (f, act, a) in steps {
            dlogp[*a] = coeff;
            model.backward(f, act, &dlogp, &mut grad);
            dlogp[*a] = 0.0;
        }
    }
    Ok(grad)
}

/// Single-sample REINFORCE: `−(r − b) · Σ_i ∇ log p(a_i | s_i)` for one
/// sampled derivation. Returns the zero gradient and `None` if sampling hit
/// the step cap.
pub fn reinforce_gradient<R: Rng>(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
    rng: &mut R,
) -> Result<(Gradient, Option<Trajectory>), TrainError> {
    let Some(t) = sample_trajectory(model, system, inst, rng)? else {
        return Ok((model.zero_gradient(), None));
    };
    let grad = apg_gradient(model, system, inst, std::slice::from_ref(&t), Weighting::Normalized)?;
    Ok((grad, Some(t)))
}

/// Forgets each stored trajectory with probability `rho`, then offers the
/// candidates one by one: a candidate fills a free slot, or replaces the
/// lowest-reward trajectory if its reward is strictly higher. Candidates
/// whose action sequence is already stored are skipped.
pub fn update_memory<R: Rng>(
    memory: &mut Vec<Trajectory>,
    candidates: Vec<Trajectory>,
    k: usize,
    rho: f64,
    rng: &mut R,
) {
    memory.retain(|_| rng.gen::<f64>() >= rho);
    for cand in candidates {
        if memory.iter().any(|m| m.actions == cand.actions) {
            continue;
        }
        if memory.len() < k {
            memory.push(cand);
            continue;
        }
        let Some((worst, min)) = memory
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.reward))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            continue;
        };
        if cand.reward > min {
            memory[worst] = cand;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Reinforce,
    RlOracle,
    RlRandom,
    RlMemory,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Reinforce => "reinforce",
            Strategy::RlOracle => "rl-oracle",
            Strategy::RlRandom => "rl-random",
            Strategy::RlMemory => "rl-memory",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Strategy::Reinforce,
            Strategy::RlOracle,
            Strategy::RlRandom,
            Strategy::RlMemory,
        ]
        .into_iter()
        .find(|x| x.name() == s)
        .ok_or_else(|| TrainError::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub rho: f64,
    pub batch_size: usize,
    pub updates: usize,
    pub seed: u64,
    pub weighting: Weighting,
    /// Dev evaluation interval in updates (0 disables selection).
    pub eval_every: usize,
    pub punct: PunctConvention,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            strategy: Strategy::RlMemory,
            k: 8,
            rho: 0.01,
            batch_size: 512,
            updates: 1000,
            seed: 1,
            weighting: Weighting::Normalized,
            eval_every: 50,
            punct: PunctConvention::Ptb,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.k < 1 {
            return Err(TrainError::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(TrainError::Config("rho must lie in [0, 1]".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateLog {
    pub update: usize,
    pub mean_reward: f64,
    pub mean_advantage: f64,
    /// Dev (UAS, LAS) when evaluated at this update.
    pub dev: Option<(f64, f64)>,
}

impl UpdateLog {
    pub const HEADER: &'static str = "update\tmean_reward\tmean_advantage\tdev_uas\tdev_las";

    pub fn tsv(&self) -> String {
        let (uas, las) = self.dev.map_or((String::new(), String::new()), |(u, l)| {
            (format!("{u:.2}"), format!("{l:.2}"))
        });
        format!(
            "{}\t{:.4}\t{:.4}\t{uas}\t{las}",
            self.update, self.mean_reward, self.mean_advantage
        )
    }
}

pub struct RlOutcome {
    /// The snapshot with the best dev LAS, or the final model without a dev set.
    pub model: Model,
    pub log: Vec<UpdateLog>,
    pub best_dev_las: Option<f64>,
    pub best_update: usize,
}

struct SentenceResult {
    index: usize,
    memory: Option<Vec<Trajectory>>,
    rewards: Vec<f64>,
    baseline: f64,
}

/// Gradient (if any trajectory contributed), rewards of the set, and the
/// updated memory.
type SentenceUpdate = (Option<Gradient>, Vec<f64>, Option<Vec<Trajectory>>);

fn sentence_update(
    model: &Model,
    system: &TransitionSystem,
    inst: &Instance,
    cfg: &RlConfig,
    memory: Option<Vec<Trajectory>>,
    seed: u64,
) -> Result<SentenceUpdate, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (set, memory) = match cfg.strategy {
        Strategy::Reinforce => {
            let (g, t) = reinforce_gradient(model, system, inst, &mut rng)?;
            let rewards = t.map(|t| vec![t.reward]).unwrap_or_default();
            let g = (!rewards.is_empty()).then_some(g);
            return Ok((g, rewards, None));
        }
        Strategy::RlOracle => (oracle_trajectory(model, system, inst)?.into_iter().collect(), None),
        Strategy::RlRandom => (sample_trajectories(model, system, inst, cfg.k, &mut rng)?, None),
        Strategy::RlMemory => {
            let fresh = sample_trajectories(model, system, inst, cfg.k, &mut rng)?;
            let mut m = memory.unwrap_or_default();
            update_memory(&mut m, fresh, cfg.k, cfg.rho, &mut rng);
            (m.clone(), Some(m))
        }
    };
    let set: Vec<Trajectory> = set;
    if set.is_empty() {
        return Ok((None, Vec::new(), memory));
    }
    let g = apg_gradient(model, system, inst, &set, cfg.weighting)?;
    Ok((Some(g), set.iter().map(|t| t.reward).collect(), memory))
}

/// Policy-gradient training. Each update draws `batch_size` sentences,
/// builds a trajectory set per sentence according to the strategy, averages
/// the per-sentence gradients and takes one AdaGrad step (no L2). Every
/// `eval_every` updates the model is scored on `dev` and the best snapshot
/// is kept.
pub fn train_rl(
    mut model: Model,
    train: &[Sentence],
    dev: &[Sentence],
    cfg: &RlConfig,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<RlOutcome, TrainError> {
    cfg.validate()?;
    if model.accum.tensors().iter().all(|t| t.data.iter().all(|&x| x == 0.0)) {
        log::warn!("model does not look pretrained; policy-gradient training works best from a supervised model");
    }
    let system = model.transition_system();
    let instances = prepare(&model, train, cfg.punct);
    let eligible: Vec<usize> = (0..instances.len())
        .filter(|&i| {
            let inst = &instances[i];
            let derivable = !system.kind().needs_projective() || inst.projective;
            let has_oracle = cfg.strategy != Strategy::RlOracle || inst.oracle.is_some();
            derivable && has_oracle && inst.scored() > 0
        })
        .collect();
    if eligible.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    log::info!(
        "{}: {} of {} sentences usable, {} updates of {}",
        cfg.strategy,
        eligible.len(),
        instances.len(),
        cfg.updates,
        cfg.batch_size.min(eligible.len())
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut memory: HashMap<usize, Vec<Trajectory>> = HashMap::new();
    let mut log = Vec::with_capacity(cfg.updates);
    let mut best: Option<(f64, usize, Model)> = None;
    if let Some(w) = log_sink.as_deref_mut() {
        writeln!(w, "{}", UpdateLog::HEADER)?;
    }
    for update in 1..=cfg.updates {
        let picked: Vec<usize> = eligible
            .choose_multiple(&mut rng, cfg.batch_size.min(eligible.len()))
            .copied()
            .collect();
        let work: Vec<(usize, u64, Option<Vec<Trajectory>>)> =
            picked.into_iter().map(|i| (i, rng.gen(), memory.remove(&i))).collect();
        let snapshot = &model;
        let chunks: Vec<(Gradient, usize, Vec<SentenceResult>)> = work
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grad = snapshot.zero_gradient();
                let mut contributing = 0;
                let mut results = Vec::with_capacity(chunk.len());
                for (i, seed, mem) in chunk {
                    let inst = &instances[*i];
                    let (g, rewards, mem) = sentence_update(snapshot, &system, inst, cfg, mem.clone(), *seed)?;
                    if let Some(g) = g {
                        grad.add(&g);
                        contributing += 1;
                    }
                    results.push(SentenceResult {
                        index: *i,
                        memory: mem,
                        rewards,
                        baseline: inst.baseline(),
                    });
                }
                Ok((grad, contributing, results))
            })
            .collect::<Result<_, TrainError>>()?;
        let mut grad = model.zero_gradient();
        let mut contributing = 0;
        let (mut reward_sum, mut adv_sum, mut count) = (0.0, 0.0, 0usize);
        for (g, c, results) in chunks {
            grad.add(&g);
            contributing += c;
            for r in results {
                for &x in &r.rewards {
                    reward_sum += x;
                    adv_sum += x - r.baseline;
                    count += 1;
                }
                if let Some(m) = r.memory {
                    memory.insert(r.index, m);
                }
            }
        }
        if contributing > 0 {
            grad.scale(1.0 / contributing as f64);
            if let Err(e) = model.adagrad_step(&grad, 0.0) {
                log::warn!("update {update}: {e}");
            }
        }
        let evaluate_now =
            !dev.is_empty() && cfg.eval_every > 0 && (update % cfg.eval_every == 0 || update == cfg.updates);
        let dev_score = if evaluate_now {
            let r = evaluate_model(&model, dev, cfg.punct)?;
            if best.as_ref().is_none_or(|b| r.las > b.0) {
                best = Some((r.las, update, model.clone()));
            }
            log::info!("update {update}: dev UAS {:.2} LAS {:.2}", r.uas, r.las);
            Some((r.uas, r.las))
        } else {
            None
        };
        let mean = |x: f64| if count == 0 { 0.0 } else { x / count as f64 };
        let entry = UpdateLog {
            update,
            mean_reward: mean(reward_sum),
            mean_advantage: mean(adv_sum),
            dev: dev_score,
        };
        if let Some(w) = log_sink.as_deref_mut() {
            writeln!(w, "{}", entry.tsv())?;
        }
        log.push(entry);
    }
    Ok(match best {
        Some((las, update, best_model)) => RlOutcome {
            model: best_model,
            log,
            best_dev_las: Some(las),
            best_update: update,
        },
        None => RlOutcome {
            model,
            log,
            best_dev_las: None,
            best_update: cfg.updates,
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedConfig {
    pub epochs: usize,
    /// Oracle (configuration, action) pairs per mini-batch.
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
    pub punct: PunctConvention,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        SupervisedConfig {
            epochs: 20,
            batch_size: 256,
            dropout: 0.5,
            seed: 1,
            punct: PunctConvention::Ptb,
        }
    }
}

/// One oracle decision: features, legal actions and the gold action.
#[derive(Clone, Debug)]
pub struct Example {
    pub features: FeatureVector,
    pub legal: Vec<bool>,
    pub action: usize,
}

/// Oracle examples of every derivable sentence.
pub fn oracle_examples(model: &Model, instances: &[Instance]) -> Result<Vec<Example>, TrainError> {
    let system = model.transition_system();
    let per_sentence = instances
        .par_iter()
        .filter_map(|inst| inst.oracle.as_ref().map(|o| (inst, o)))
        .map(|(inst, oracle)| {
            let mut c = Configuration::initial(inst.len())?;
            let mut out = Vec::with_capacity(oracle.len());
            for &a in oracle {
                out.push(Example {
                    features: model.features(&c, &inst.enc),
                    legal: system.legal_mask(&c),
                    action: a,
                });
                c = system.apply_id(&c, a)?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Mean negative log-likelihood of the oracle actions and its gradient.
pub fn nll_gradient<R: Rng>(
    model: &Model,
    examples: &[Example],
    dropout: f64,
    rng: &mut R,
) -> Result<(Gradient, f64), TrainError> {
    let mut grad = model.zero_gradient();
    let mut loss = 0.0;
    let mut dlogp = vec![0.0; model.num_actions()];
    for ex in examples {
        let act = if dropout > 0.0 {
            model.forward_dropout(&ex.features, &ex.legal, dropout, rng)?
        } else {
            model.forward_cached(&ex.features, &ex.legal)?
        };
        loss -= act.output.log_probs[ex.action];
        dlogp[ex.action] = -1.0;
        model.backward(&ex.features, &act, &dlogp, &mut grad);
        dlogp[ex.action] = 0.0;
    }
    if !examples.is_empty() {
        let n = examples.len() as f64;
        grad.scale(1.0 / n);
        loss /= n;
    }
    Ok((grad, loss))
}

/// Mini-batch AdaGrad on the oracle derivations (negative log-likelihood
/// plus L2). Returns the mean training loss of each epoch.
pub fn train_supervised(
    model: &mut Model,
    sentences: &[Sentence],
    cfg: &SupervisedConfig,
) -> Result<Vec<f64>, TrainError> {
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be at least 1".into()));
    }
    let instances = prepare(model, sentences, cfg.punct);
    let mut examples = oracle_examples(model, &instances)?;
    if examples.is_empty() {
        return Err(TrainError::NoTrainingData);
    }
    let derivable = instances.iter().filter(|i| i.oracle.is_some()).count();
    log::info!(
        "supervised: {derivable} of {} sentences derivable, {} oracle decisions",
        instances.len(),
        examples.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        examples.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            let seed: u64 = rng.gen();
            let snapshot = &*model;
            let parts = batch
                .par_chunks(SL_CHUNK)
                .enumerate()
                .map(|(j, part)| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let (mut g, loss) = nll_gradient(snapshot, part, cfg.dropout, &mut r)?;
                    let w = part.len() as f64 / batch.len() as f64;
                    g.scale(w);
                    Ok((g, loss * part.len() as f64))
                })
                .collect::<Result<Vec<_>, TrainError>>()?;
            let mut grad = model.zero_gradient();
            for (g, l) in parts {
                grad.add(&g);
                total += l;
            }
            if let Err(e) = model.adagrad_step(&grad, model.hyper.l2) {
                log::warn!("epoch {epoch}: {e}");
            }
        }
        let mean = total / examples.len() as f64;
        log::info!("epoch {epoch}: loss {mean:.4}");
        losses.push(mean);
    }
    Ok(losses)
}
