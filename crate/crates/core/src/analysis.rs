//! How much of a greedy parser's error comes from error propagation.
//!
//! A decision error is a step whose action raises the minimal reachable
//! loss. A sentence is reparsed repeatedly; pass `r` replaces the model's
//! choice at the first `r` decision errors it meets with a zero-cost action
//! and otherwise follows the model greedily. The first pass that yields the
//! gold tree tells how many corrections were really needed: if fewer than
//! the number of original decision errors, the rest were propagated.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::decode::{self, check_compatible, DecodeError};
use crate::dynamic_oracle::{action_costs, min_loss, LossMode, OracleError};
use crate::model::{Model, ModelError, PolicyOutput};
use crate::transitions::{Configuration, IndexedTree, SystemKind, TransitionError, TransitionSystem};
use crate::treebank::{is_projective, Sentence};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Transition(#[from] TransitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("error analysis needs an arc-standard model, got {0}")]
    NotArcStandard(SystemKind),
    #[error("sentence {0} is non-projective")]
    NonProjective(String),
    #[error("sentence {sentence}: no terminal configuration after {steps} steps")]
    StepCap { sentence: String, steps: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecisionError {
    pub step: usize,
    pub cost: usize,
}

/// Loss-increasing steps of an arc-standard derivation given as action ids.
pub fn detect_decision_errors(
    system: &TransitionSystem,
    actions: &[usize],
    gold: &IndexedTree,
    mode: LossMode,
) -> Result<Vec<DecisionError>, AnalysisError> {
    if system.kind() != SystemKind::ArcStandard {
        return Err(AnalysisError::NotArcStandard(system.kind()));
    }
    let mut c = Configuration::initial(gold.len())?;
    let mut loss = min_loss(&c, gold, mode)?;
    let mut out = Vec::new();
    for (step, &a) in actions.iter().enumerate() {
        c = system.apply_id(&c, a)?;
        let after = min_loss(&c, gold, mode)?;
        if after > loss {
            out.push(DecisionError {
                step,
                cost: after - loss,
            });
        }
        loss = after;
    }
    Ok(out)
}

/// One parse with up to `corrections` forced repairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Pass {
    pub actions: Vec<usize>,
    pub tree: IndexedTree,
    /// Repairs actually made.
    pub forced: usize,
    /// Decision errors left in the derivation (steps where the model's own
    /// choice increased the loss).
    pub errors: Vec<DecisionError>,
}

/// Greedy parse in which the first `corrections` decision errors are
/// replaced by the most probable zero-cost action.
pub fn corrected_pass<P>(
    system: &TransitionSystem,
    policy: &P,
    gold: &IndexedTree,
    corrections: usize,
    mode: LossMode,
) -> Result<Pass, AnalysisError>
where
    P: Fn(&Configuration) -> Result<PolicyOutput, ModelError>,
{
    let mut c = Configuration::initial(gold.len())?;
    let mut loss = min_loss(&c, gold, mode)?;
    let cap = system.max_steps(gold.len());
    let mut actions = Vec::new();
    let mut forced = 0;
    let mut errors = Vec::new();
    while !system.is_terminal(&c) {
        if actions.len() >= cap {
            return Err(AnalysisError::StepCap {
                sentence: String::new(),
                steps: cap,
            });
        }
        let out = policy(&c)?;
        let a = out.argmax();
        let mut next = system.apply_id(&c, a)?;
        let mut after = min_loss(&next, gold, mode)?;
        let mut chosen = a;
        if after > loss {
            if forced < corrections {
                let mut best: Option<usize> = None;
                for (action, cost) in action_costs(system, &c, gold, mode)? {
                    let id = system.action_id(action).expect("legal action has an id");
                    if cost == 0 && best.is_none_or(|b| out.probs[id] > out.probs[b]) {
                        best = Some(id);
                    }
                }
                chosen = best.expect("a zero-cost action always exists");
                next = system.apply_id(&c, chosen)?;
                after = loss;
                forced += 1;
            } else {
                errors.push(DecisionError {
                    step: actions.len(),
                    cost: after - loss,
                });
            }
        }
        actions.push(chosen);
        loss = after;
        c = next;
    }
    Ok(Pass {
        actions,
        tree: system.extract_indexed(&c)?,
        forced,
        errors,
    })
}

/// Outcome of repairing one sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepairRecord {
    pub id: String,
    pub original_arc_errors: usize,
    pub original_unlabeled_arc_errors: usize,
    pub original_decision_errors: usize,
    pub fixed_decisions: usize,
    pub propagated_errors: usize,
    pub new_errors: usize,
    /// Remaining decision errors after each pass, starting with the
    /// uncorrected parse.
    pub remaining: Vec<usize>,
    /// Set when the gold tree was not reached within the depth limit.
    pub flagged: bool,
}

impl RepairRecord {
    pub fn passes(&self) -> usize {
        self.remaining.len()
    }

    /// Corrections that removed two or more decision errors at once.
    pub fn multi_error_corrections(&self) -> usize {
        self.remaining.windows(2).filter(|w| w[0] >= w[1] + 2).count()
    }
}

/// Repairs a sentence one extra correction per pass until it parses to
/// gold. `max_depth` defaults to twice the sentence length.
pub fn repair_parse(
    model: &Model,
    sentence: &Sentence,
    max_depth: Option<usize>,
    mode: LossMode,
) -> Result<RepairRecord, AnalysisError> {
    if model.system != SystemKind::ArcStandard {
        return Err(AnalysisError::NotArcStandard(model.system));
    }
    let system = model.transition_system();
    check_compatible(model, &system)?;
    let gold = system.labels().index_tree(&sentence.gold_tree());
    let enc = model.vocab.encode(sentence);
    let policy = |c: &Configuration| decode::policy(model, &system, c, &enc);
    repair_with(&system, &policy, &gold, &sentence.id, max_depth, mode)
}

/// [`repair_parse`] for an arbitrary policy.
pub fn repair_with<P>(
    system: &TransitionSystem,
    policy: &P,
    gold: &IndexedTree,
    id: &str,
    max_depth: Option<usize>,
    mode: LossMode,
) -> Result<RepairRecord, AnalysisError>
where
    P: Fn(&Configuration) -> Result<PolicyOutput, ModelError>,
{
    if system.kind() != SystemKind::ArcStandard {
        return Err(AnalysisError::NotArcStandard(system.kind()));
    }
    if !is_projective(&gold.heads) {
        return Err(AnalysisError::NonProjective(id.to_owned()));
    }
    let run = |r| {
        corrected_pass(system, policy, gold, r, mode).map_err(|e| match e {
            AnalysisError::StepCap { steps, .. } => AnalysisError::StepCap {
                sentence: id.to_owned(),
                steps,
            },
            other => other,
        })
    };
    let first = run(0)?;
    let original = first.errors.len();
    let mut record = RepairRecord {
        id: id.to_owned(),
        original_arc_errors: first.tree.errors_against(gold, true),
        original_unlabeled_arc_errors: first.tree.errors_against(gold, false),
        original_decision_errors: original,
        fixed_decisions: 0,
        propagated_errors: 0,
        new_errors: 0,
        remaining: vec![original],
        flagged: false,
    };
    let max_depth = max_depth.unwrap_or(2 * gold.len());
    let mut pass = first;
    let mut r = 0;
    while pass.tree.errors_against(gold, mode.labeled()) > 0 {
        r += 1;
        if r > max_depth {
            record.flagged = true;
            return Ok(record);
        }
        pass = run(r)?;
        record.remaining.push(pass.errors.len());
    }
    record.fixed_decisions = pass.forced;
    record.propagated_errors = original.saturating_sub(pass.forced);
    record.new_errors = pass.forced.saturating_sub(original);
    Ok(record)
}

/// Records for every projective sentence, in input order, and the number of
/// non-projective sentences skipped.
pub fn analyze_corpus(
    model: &Model,
    sentences: &[Sentence],
    max_depth: Option<usize>,
    mode: LossMode,
) -> Result<(Vec<RepairRecord>, usize), AnalysisError> {
    if model.system != SystemKind::ArcStandard {
        return Err(AnalysisError::NotArcStandard(model.system));
    }
    let results: Vec<Option<RepairRecord>> = sentences
        .par_iter()
        .map(|s| match repair_parse(model, s, max_depth, mode) {
            Ok(r) => Ok(Some(r)),
            Err(AnalysisError::NonProjective(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    Ok((results.into_iter().flatten().collect(), skipped))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PropagationReport {
    pub sentences: usize,
    pub flagged: usize,
    pub total_loss: usize,
    pub total_unlabeled_loss: usize,
    pub decision_errors: usize,
    pub err_prop: usize,
    pub new_errors: usize,
    pub loss_per_error: f64,
    pub err_prop_pct: f64,
    /// Corrections that removed two or more decision errors at once.
    pub alternative: usize,
}

/// Sums the records (flagged ones are counted but left out) and computes
/// the two ratios, which are 0 when there are no decision errors.
pub fn aggregate(records: &[RepairRecord]) -> PropagationReport {
    let mut r = PropagationReport::default();
    for rec in records {
        if rec.flagged {
            r.flagged += 1;
            continue;
        }
        r.sentences += 1;
        r.total_loss += rec.original_arc_errors;
        r.total_unlabeled_loss += rec.original_unlabeled_arc_errors;
        r.decision_errors += rec.original_decision_errors;
        r.err_prop += rec.propagated_errors;
        r.new_errors += rec.new_errors;
        r.alternative += rec.multi_error_corrections();
    }
    if r.decision_errors > 0 {
        r.loss_per_error = r.total_loss as f64 / r.decision_errors as f64;
        r.err_prop_pct = 100.0 * r.err_prop as f64 / r.decision_errors as f64;
    }
    r
}

/// Number of corrections that reduced the remaining decision errors by more
/// than one.
pub fn alternative_propagation_count(records: &[RepairRecord]) -> usize {
    records
        .iter()
        .filter(|r| !r.flagged)
        .map(RepairRecord::multi_error_corrections)
        .sum()
}

impl PropagationReport {
    /// Table rows; `alternative` adds the multi-error correction count.
    pub fn write_summary<W: Write>(&self, mut w: W, alternative: bool) -> io::Result<()> {
        writeln!(w, "Sentences\t{}", self.sentences)?;
        if self.flagged > 0 {
            writeln!(w, "Unresolved\t{}", self.flagged)?;
        }
        writeln!(w, "Total Loss\t{}", self.total_loss)?;
        writeln!(w, "Total Loss (unlabeled)\t{}", self.total_unlabeled_loss)?;
        writeln!(w, "Dec. Errors\t{}", self.decision_errors)?;
        writeln!(w, "Err. Prop.\t{}", self.err_prop)?;
        writeln!(w, "New errors\t{}", self.new_errors)?;
        writeln!(w, "Loss/error\t{:.2}", self.loss_per_error)?;
        writeln!(w, "Err. Prop. (%)\t{:.1}", self.err_prop_pct)?;
        if alternative {
            writeln!(w, "Multi-error fixes\t{}", self.alternative)?;
        }
        Ok(())
    }
}

impl fmt::Display for PropagationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_summary(&mut buf, true).map_err(|_| fmt::Error)?;
        f.write_str(String::from_utf8_lossy(&buf).trim_end())
    }
}

pub fn write_records<W: Write>(mut w: W, records: &[RepairRecord]) -> io::Result<()> {
    writeln!(
        w,
        "id\toriginal_arc_errors\toriginal_decision_errors\tfixed_decisions\tpropagated_errors\tnew_errors\tpasses"
    )?;
    for r in records {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}{}",
            r.id,
            r.original_arc_errors,
            r.original_decision_errors,
            r.fixed_decisions,
            r.propagated_errors,
            r.new_errors,
            r.passes(),
            if r.flagged { "\tunresolved" } else { "" }
        )?;
    }
    Ok(())
}

/// Decision errors made by one model but not another, and how many of
/// those were propagated errors under the first model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AvoidedErrors {
    pub avoided: usize,
    pub propagated: usize,
    pub pct: f64,
}

/// Per sentence, `avoided = max(0, dec_base − dec_other)` and the propagated
/// share is `min(avoided, propagated_base)`. Records are matched by id.
pub fn avoided_errors(base: &[RepairRecord], other: &[RepairRecord]) -> AvoidedErrors {
    let by_id: std::collections::HashMap<&str, &RepairRecord> = other.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut out = AvoidedErrors::default();
    for b in base.iter().filter(|r| !r.flagged) {
        let Some(o) = by_id.get(b.id.as_str()).filter(|o| !o.flagged) else {
            continue;
        };
        let avoided = b.original_decision_errors.saturating_sub(o.original_decision_errors);
        out.avoided += avoided;
        out.propagated += avoided.min(b.propagated_errors);
    }
    if out.avoided > 0 {
        out.pct = 100.0 * out.propagated as f64 / out.avoided as f64;
    }
    out
}
