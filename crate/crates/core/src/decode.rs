//! Greedy decoding and attachment scores.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{EncodedSentence, Model, ModelError, PolicyOutput};
use crate::transitions::{Configuration, IndexedTree, TransitionError, TransitionSystem};
use crate::treebank::{DepTree, PunctConvention, Sentence};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sentence {sentence}: no terminal configuration after {steps} steps")]
    StepCap { sentence: String, steps: usize },
    #[error("model was trained for {model}, decoder configured for {system}")]
    Incompatible { model: String, system: String },
    #[error("gold has {gold} sentences but system output has {system}")]
    Misaligned { gold: usize, system: usize },
    #[error("sentence {sentence}: gold has {gold} tokens, system tree has {system}")]
    ArityMismatch {
        sentence: String,
        gold: usize,
        system: usize,
    },
}

/// The action sequence chosen while decoding, with its total log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub actions: Vec<usize>,
    pub log_prob: f64,
    pub tree: IndexedTree,
}

/// Policy distribution at a configuration.
pub fn policy(
    model: &Model,
    system: &TransitionSystem,
    c: &Configuration,
    sentence: &EncodedSentence,
) -> Result<PolicyOutput, ModelError> {
    model.forward(&model.features(c, sentence), &system.legal_mask(c))
}

pub fn check_compatible(model: &Model, system: &TransitionSystem) -> Result<(), DecodeError> {
    if model.system != system.kind() || &model.vocab.labels != system.labels() {
        return Err(DecodeError::Incompatible {
            model: model.system.to_string(),
            system: system.kind().to_string(),
        });
    }
    Ok(())
}

/// Parses by repeatedly taking the most probable legal action.
pub fn greedy_parse(
    model: &Model,
    system: &TransitionSystem,
    sentence: &Sentence,
) -> Result<(DepTree, Trace), DecodeError> {
    check_compatible(model, system)?;
    let enc = model.vocab.encode(sentence);
    let mut c = Configuration::for_sentence(sentence)?;
    let cap = system.max_steps(sentence.len());
    let mut actions = Vec::new();
    let mut log_prob = 0.0;
    while !system.is_terminal(&c) {
        if actions.len() >= cap {
            return Err(DecodeError::StepCap {
                sentence: sentence.id.clone(),
                steps: cap,
            });
        }
        let out = policy(model, system, &c, &enc)?;
        let a = out.argmax();
        log_prob += out.log_probs[a];
        actions.push(a);
        c = system.apply_id(&c, a)?;
    }
    let tree = system.extract_indexed(&c)?;
    Ok((
        system.labels().to_dep_tree(&tree),
        Trace {
            actions,
            log_prob,
            tree,
        },
    ))
}

/// Greedy parses of a whole corpus, in input order.
pub fn parse_corpus(model: &Model, sentences: &[Sentence]) -> Result<Vec<DepTree>, DecodeError> {
    let system = model.transition_system();
    sentences
        .par_iter()
        .map(|s| greedy_parse(model, &system, s).map(|(t, _)| t))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceScore {
    pub id: String,
    pub scored: usize,
    pub correct_heads: usize,
    pub correct_labeled: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub uas: f64,
    pub las: f64,
    pub token_count: usize,
    pub per_sentence: Vec<SentenceScore>,
}

impl EvalReport {
    pub fn from_scores(per_sentence: Vec<SentenceScore>) -> Self {
        let token_count: usize = per_sentence.iter().map(|s| s.scored).sum();
        let heads: usize = per_sentence.iter().map(|s| s.correct_heads).sum();
        let labeled: usize = per_sentence.iter().map(|s| s.correct_labeled).sum();
        let pct = |x: usize| {
            if token_count == 0 {
                0.0
            } else {
                100.0 * x as f64 / token_count as f64
            }
        };
        EvalReport {
            uas: pct(heads),
            las: pct(labeled),
            token_count,
            per_sentence,
        }
    }

    /// One row per sentence: id, scored tokens, correct heads, correct labeled.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "id\tscored\tcorrect_heads\tcorrect_labeled")?;
        for s in &self.per_sentence {
            writeln!(w, "{}\t{}\t{}\t{}", s.id, s.scored, s.correct_heads, s.correct_labeled)?;
        }
        Ok(())
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sentences: {}", self.per_sentence.len())?;
        writeln!(f, "scored tokens: {}", self.token_count)?;
        writeln!(f, "UAS: {:.2}", self.uas)?;
        write!(f, "LAS: {:.2}", self.las)
    }
}

/// Scores one tree against a gold sentence, skipping punctuation.
pub fn score_sentence(gold: &Sentence, system: &DepTree, punct: PunctConvention) -> Result<SentenceScore, DecodeError> {
    if gold.len() != system.len() {
        return Err(DecodeError::ArityMismatch {
            sentence: gold.id.clone(),
            gold: gold.len(),
            system: system.len(),
        });
    }
    let mask = gold.punctuation_mask(punct);
    let mut score = SentenceScore {
        id: gold.id.clone(),
        scored: 0,
        correct_heads: 0,
        correct_labeled: 0,
    };
    for (i, t) in gold.tokens.iter().enumerate() {
        if mask[i + 1] {
            continue;
        }
        score.scored += 1;
        if t.head == system.heads[i] {
            score.correct_heads += 1;
            if t.label == system.labels[i] {
                score.correct_labeled += 1;
            }
        }
    }
    Ok(score)
}

pub fn evaluate(gold: &[Sentence], system: &[DepTree], punct: PunctConvention) -> Result<EvalReport, DecodeError> {
    if gold.len() != system.len() {
        return Err(DecodeError::Misaligned {
            gold: gold.len(),
            system: system.len(),
        });
    }
    let scores = gold
        .iter()
        .zip(system)
        .map(|(g, s)| score_sentence(g, s, punct))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_scores(scores))
}

/// Parses `sentences` greedily and scores the result.
pub fn evaluate_model(
    model: &Model,
    sentences: &[Sentence],
    punct: PunctConvention,
) -> Result<EvalReport, DecodeError> {
    let trees = parse_corpus(model, sentences)?;
    evaluate(sentences, &trees, punct)
}
