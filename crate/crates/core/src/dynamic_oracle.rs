//! Exact dynamic oracle for the arc-standard system.
//!
//! The loss of a configuration is the smallest number of arc errors any
//! completion can end with. Arcs already in the configuration are fixed, so
//! only the heads of the tokens still on the stack or in the buffer are
//! open. Those are assigned by a tabular search over the ways the remaining
//! items can be combined:
//!
//! * the buffer is processed as fresh input, so any projective subtree over
//!   a contiguous buffer span can be built on top of the stack. Best scores
//!   for such spans come from Eisner-style span tables;
//! * the stack can only be consumed from the top. A state `(i, j, h)` says
//!   that stack items `i..=k` together with the first `j` buffer tokens have
//!   been folded into one subtree headed by `h`. That subtree either absorbs
//!   the next buffer span (as head or as dependent of the span's head) or is
//!   combined with stack item `i - 1`.
//!
//! Labels never restrict reachability: a correct head can always be given
//! the correct label, so the labeled loss differs from the unlabeled one
//! only by label mistakes on arcs that already exist.

use thiserror::Error;

use crate::transitions::{Action, Configuration, IndexedTree, SystemKind, TransitionSystem};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("configuration has {config} tokens but the gold tree has {gold}")]
    ArityMismatch { config: usize, gold: usize },
    #[error("the dynamic oracle is only defined for arc-standard, not {0}")]
    UnsupportedSystem(SystemKind),
    #[error("illegal action: {0}")]
    Illegal(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossMode {
    Unlabeled,
    #[default]
    Labeled,
}

impl LossMode {
    pub fn labeled(self) -> bool {
        matches!(self, LossMode::Labeled)
    }
}

const NEG: i32 = i32::MIN / 4;

/// Minimal number of arc errors over all terminating completions of `config`.
pub fn min_loss(config: &Configuration, gold: &IndexedTree, mode: LossMode) -> Result<usize, OracleError> {
    let n = gold.len();
    if config.len() != n {
        return Err(OracleError::ArityMismatch {
            config: config.len(),
            gold: n,
        });
    }
    let mut fixed_wrong = 0;
    let mut open = 0;
    for dep in 1..=n {
        match config.arc(dep) {
            Some(arc) => {
                if arc.head != gold.head(dep) || (mode.labeled() && arc.label != gold.label(dep)) {
                    fixed_wrong += 1;
                }
            }
            None => open += 1,
        }
    }
    let best = best_open_heads(config, gold);
    debug_assert!(best <= open);
    Ok(fixed_wrong + open - best)
}

/// Maximal number of open tokens that can still receive their gold head.
fn best_open_heads(config: &Configuration, gold: &IndexedTree) -> usize {
    let stack = config.stack();
    let buffer: Vec<usize> = config.buffer().collect();
    let k = stack.len() - 1;
    let m = buffer.len();
    if k == 0 && m == 0 {
        return 0;
    }
    let gh = |t: usize| gold.head(t);
    let spans = SpanTables::new(&buffer, gold);

    if k == 0 {
        // Build one subtree over the whole buffer and attach its head to the root.
        return (1..=m)
            .map(|z| spans.rooted(1, m, z) + i32::from(gh(buffer[z - 1]) == 0))
            .max()
            .unwrap_or(0)
            .max(0) as usize;
    }

    let n1 = gold.len() + 1;
    // value[(i, j, h)]: stack items i..=k (1-based stack positions) plus
    // buffer tokens 1..=j folded into a subtree headed by token h
    let idx = |i: usize, j: usize, h: usize| ((i - 1) * (m + 1) + j) * n1 + h;
    let mut value = vec![NEG; k * (m + 1) * n1];
    value[idx(k, 0, stack[k])] = 0;
    let mut best = NEG;

    // heads that can appear at (i, j): stack items i..=k and buffer tokens 1..=j
    let mut heads_at: Vec<usize> = Vec::with_capacity(k + m + 1);
    for j in 0..=m {
        for i in (1..=k).rev() {
            heads_at.clear();
            heads_at.extend_from_slice(&stack[i..=k]);
            heads_at.extend_from_slice(&buffer[..j]);
            for &h in &heads_at {
                let v = value[idx(i, j, h)];
                if v == NEG {
                    continue;
                }
                for jj in (j + 1)..=m {
                    // h takes the head of the span j+1..=jj as a right dependent
                    let gain = spans.best_under(j + 1, jj, h);
                    if gain > NEG {
                        let slot = &mut value[idx(i, jj, h)];
                        *slot = (*slot).max(v + gain);
                    }
                    // buffer token jj, with its left part j+1..jj-1, becomes the head
                    let z = buffer[jj - 1];
                    let left = spans.left_complete(j + 1, jj);
                    if left > NEG {
                        let slot = &mut value[idx(i, jj, z)];
                        *slot = (*slot).max(v + left + i32::from(gh(h) == z));
                    }
                }
                let below = stack[i - 1];
                if i >= 2 {
                    // RIGHT: below -> h
                    let slot = &mut value[idx(i - 1, j, below)];
                    *slot = (*slot).max(v + i32::from(gh(h) == below));
                    // LEFT: h -> below
                    let slot = &mut value[idx(i - 1, j, h)];
                    *slot = (*slot).max(v + i32::from(gh(below) == h));
                } else if j == m {
                    // attach to the root once the buffer is empty
                    best = best.max(v + i32::from(gh(h) == 0));
                }
            }
        }
    }
    best.max(0) as usize
}

/// Eisner span tables over the buffer, 1-based positions.
struct SpanTables {
    m: usize,
    /// complete span a..=c headed at c
    cl: Vec<i32>,
    /// complete span a..=c headed at a
    cr: Vec<i32>,
    /// max over roots z of the best tree over a..=c rooted at z
    any_root: Vec<i32>,
    /// for heads outside the span: best tree over a..=c whose root's gold head is `h`, plus one
    with_head: Vec<Vec<(usize, i32)>>,
}

impl SpanTables {
    fn new(buffer: &[usize], gold: &IndexedTree) -> Self {
        let m = buffer.len();
        let w = m + 2;
        let at = |a: usize, c: usize| a * w + c;
        let mut cl = vec![NEG; w * w];
        let mut cr = vec![NEG; w * w];
        let mut il = vec![NEG; w * w];
        let mut ir = vec![NEG; w * w];
        let score = |h: usize, d: usize| i32::from(gold.head(buffer[d - 1]) == buffer[h - 1]);
        for a in 1..=m {
            cl[at(a, a)] = 0;
            cr[at(a, a)] = 0;
        }
        for len in 1..m {
            for a in 1..=(m - len) {
                let c = a + len;
                let mut best_split = NEG;
                for q in a..c {
                    best_split = best_split.max(cr[at(a, q)] + cl[at(q + 1, c)]);
                }
                ir[at(a, c)] = best_split + score(a, c);
                il[at(a, c)] = best_split + score(c, a);
                let mut v = NEG;
                for q in (a + 1)..=c {
                    v = v.max(ir[at(a, q)] + cr[at(q, c)]);
                }
                cr[at(a, c)] = v;
                let mut v = NEG;
                for q in a..c {
                    v = v.max(cl[at(a, q)] + il[at(q, c)]);
                }
                cl[at(a, c)] = v;
            }
        }
        let mut any_root = vec![NEG; w * w];
        let mut with_head = vec![Vec::new(); w * w];
        for a in 1..=m {
            for c in a..=m {
                let slot = at(a, c);
                let mut heads: Vec<(usize, i32)> = Vec::new();
                for z in a..=c {
                    let v = cl[at(a, z)] + cr[at(z, c)];
                    any_root[slot] = any_root[slot].max(v);
                    let h = gold.head(buffer[z - 1]);
                    match heads.iter_mut().find(|(hh, _)| *hh == h) {
                        Some((_, best)) => *best = (*best).max(v + 1),
                        None => heads.push((h, v + 1)),
                    }
                }
                with_head[slot] = heads;
            }
        }
        SpanTables {
            m,
            cl,
            cr,
            any_root,
            with_head,
        }
    }

    fn at(&self, a: usize, c: usize) -> usize {
        a * (self.m + 2) + c
    }

    fn rooted(&self, a: usize, c: usize, z: usize) -> i32 {
        self.cl[self.at(a, z)] + self.cr[self.at(z, c)]
    }

    fn left_complete(&self, a: usize, c: usize) -> i32 {
        self.cl[self.at(a, c)]
    }

    /// Best score of a subtree over a..=c attached as a dependent of `head`.
    fn best_under(&self, a: usize, c: usize, head: usize) -> i32 {
        let slot = self.at(a, c);
        let matched = self.with_head[slot]
            .iter()
            .find(|(h, _)| *h == head)
            .map(|&(_, v)| v)
            .unwrap_or(NEG);
        self.any_root[slot].max(matched)
    }
}

fn require_arc_standard(system: &TransitionSystem) -> Result<(), OracleError> {
    match system.kind() {
        SystemKind::ArcStandard => Ok(()),
        other => Err(OracleError::UnsupportedSystem(other)),
    }
}

/// Increase in minimal loss caused by taking `action` in `config`.
pub fn action_cost(
    system: &TransitionSystem,
    config: &Configuration,
    action: Action,
    gold: &IndexedTree,
    mode: LossMode,
) -> Result<usize, OracleError> {
    require_arc_standard(system)?;
    let before = min_loss(config, gold, mode)?;
    let next = system
        .apply(config, action)
        .map_err(|e| OracleError::Illegal(e.to_string()))?;
    let after = min_loss(&next, gold, mode)?;
    debug_assert!(after >= before, "loss decreased from {before} to {after}");
    Ok(after.saturating_sub(before))
}

/// Costs of every legal action, in inventory order. Arc actions that only
/// differ in their label share one loss computation.
pub fn action_costs(
    system: &TransitionSystem,
    config: &Configuration,
    gold: &IndexedTree,
    mode: LossMode,
) -> Result<Vec<(Action, usize)>, OracleError> {
    require_arc_standard(system)?;
    if config.len() != gold.len() {
        return Err(OracleError::ArityMismatch {
            config: config.len(),
            gold: gold.len(),
        });
    }
    let before = min_loss(config, gold, mode)?;
    let mut out = Vec::new();
    let mask = system.legal_mask(config);
    let n_labels = system.labels().len();
    let kinds = [Action::Shift, Action::Left(0), Action::Right(0)];
    for kind in kinds {
        let Some(first) = system.action_id(kind) else {
            continue;
        };
        if !mask[first] {
            continue;
        }
        if kind == Action::Shift {
            let next = system
                .apply(config, kind)
                .map_err(|e| OracleError::Illegal(e.to_string()))?;
            out.push((kind, min_loss(&next, gold, mode)? - before));
            continue;
        }
        if n_labels == 0 {
            continue;
        }
        let (head, dep) = arc_endpoints(config, kind);
        let head_ok = gold.head(dep) == head;
        let gold_label = gold.label(dep);
        let probe_label = if head_ok && gold_label < n_labels {
            gold_label
        } else {
            0
        };
        let next = system
            .apply(config, kind.with_label(probe_label))
            .map_err(|e| OracleError::Illegal(e.to_string()))?;
        let probe = min_loss(&next, gold, mode)?;
        let probe_wrong = mode.labeled() && head_ok && probe_label != gold_label;
        for label in 0..n_labels {
            let wrong = mode.labeled() && head_ok && label != gold_label;
            let after = probe + usize::from(wrong) - usize::from(probe_wrong);
            out.push((kind.with_label(label), after - before));
        }
    }
    Ok(out)
}

/// (head, dependent) of the arc an arc-standard LEFT/RIGHT would create.
fn arc_endpoints(config: &Configuration, action: Action) -> (usize, usize) {
    let s1 = config.stack_top(0).expect("legal arc action");
    let s2 = config.stack_top(1).expect("legal arc action");
    match action {
        Action::Left(_) => (s1, s2),
        _ => (s2, s1),
    }
}

/// Legal actions that keep the minimal loss unchanged.
pub fn zero_cost_actions(
    system: &TransitionSystem,
    config: &Configuration,
    gold: &IndexedTree,
    mode: LossMode,
) -> Result<Vec<Action>, OracleError> {
    Ok(action_costs(system, config, gold, mode)?
        .into_iter()
        .filter(|&(_, c)| c == 0)
        .map(|(a, _)| a)
        .collect())
}
