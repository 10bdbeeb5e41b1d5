//! Parser configurations and the arc-standard, arc-eager (with UNSHIFT) and
//! swap-standard transition systems.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::treebank::{DepTree, Sentence};

/// Label id used for gold labels that are missing from a [`LabelSet`]. It
/// never matches the label of any action.
pub const UNKNOWN_LABEL: usize = usize::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransitionError {
    #[error("cannot build a configuration for an empty sentence")]
    EmptySentence,
    #[error("illegal action {action}: {rule}")]
    Illegal { action: String, rule: &'static str },
    #[error("configuration is not terminal")]
    NotTerminal,
    #[error("no {system} derivation exists for this tree: {reason}")]
    NoDerivation { system: SystemKind, reason: String },
    #[error("unknown transition system '{0}'")]
    UnknownSystem(String),
    #[error("action id {0} outside the action inventory")]
    UnknownAction(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemKind {
    ArcStandard,
    ArcEager,
    SwapStandard,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::ArcStandard => "arc-standard",
            SystemKind::ArcEager => "arc-eager",
            SystemKind::SwapStandard => "swap-standard",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            SystemKind::ArcStandard => 0,
            SystemKind::ArcEager => 1,
            SystemKind::SwapStandard => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SystemKind::ArcStandard),
            1 => Some(SystemKind::ArcEager),
            2 => Some(SystemKind::SwapStandard),
            _ => None,
        }
    }

    /// Whether the static oracle can only derive projective trees.
    pub fn needs_projective(self) -> bool {
        !matches!(self, SystemKind::SwapStandard)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = TransitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arc-standard" => Ok(SystemKind::ArcStandard),
            "arc-eager" => Ok(SystemKind::ArcEager),
            "swap-standard" => Ok(SystemKind::SwapStandard),
            other => Err(TransitionError::UnknownSystem(other.to_owned())),
        }
    }
}

/// The dependency label inventory of a treebank. Labels are referred to by
/// their position in the sorted list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Self {
        let set: BTreeSet<&str> = sentences
            .into_iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.label.as_str()))
            .collect();
        LabelSet {
            labels: set.into_iter().map(str::to_owned).collect(),
        }
    }

    pub fn from_labels(labels: Vec<String>) -> Self {
        let set: BTreeSet<String> = labels.into_iter().collect();
        LabelSet {
            labels: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn name(&self, id: usize) -> &str {
        self.labels.get(id).map(String::as_str).unwrap_or("_")
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    /// Maps a string tree onto label ids; unknown labels become [`UNKNOWN_LABEL`].
    pub fn index_tree(&self, tree: &DepTree) -> IndexedTree {
        IndexedTree {
            heads: tree.heads.clone(),
            labels: tree
                .labels
                .iter()
                .map(|l| self.id(l).unwrap_or(UNKNOWN_LABEL))
                .collect(),
        }
    }

    pub fn to_dep_tree(&self, tree: &IndexedTree) -> DepTree {
        DepTree {
            heads: tree.heads.clone(),
            labels: tree.labels.iter().map(|&l| self.name(l).to_owned()).collect(),
        }
    }
}

/// A dependency tree with label ids; same indexing as [`DepTree`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexedTree {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

impl IndexedTree {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn head(&self, dep: usize) -> usize {
        self.heads[dep - 1]
    }

    pub fn label(&self, dep: usize) -> usize {
        self.labels[dep - 1]
    }

    /// Number of tokens whose head (and, if `labeled`, label) differs from `gold`.
    pub fn errors_against(&self, gold: &IndexedTree, labeled: bool) -> usize {
        (1..=self.len())
            .filter(|&d| self.head(d) != gold.head(d) || (labeled && self.label(d) != gold.label(d)))
            .count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Shift,
    Left(usize),
    Right(usize),
    Reduce,
    Swap,
    Unshift,
}

impl Action {
    pub fn label(self) -> Option<usize> {
        match self {
            Action::Left(l) | Action::Right(l) => Some(l),
            _ => None,
        }
    }

    pub fn with_label(self, label: usize) -> Action {
        match self {
            Action::Left(_) => Action::Left(label),
            Action::Right(_) => Action::Right(label),
            other => other,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Shift => f.write_str("SHIFT"),
            Action::Left(l) => write!(f, "LEFT_{l}"),
            Action::Right(l) => write!(f, "RIGHT_{l}"),
            Action::Reduce => f.write_str("REDUCE"),
            Action::Swap => f.write_str("SWAP"),
            Action::Unshift => f.write_str("UNSHIFT"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Arc {
    pub head: usize,
    pub label: usize,
}

/// Parser state: stack, buffer and the arcs built so far.
///
/// Token 0 is the root symbol and always sits at the bottom of the stack.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    stack: Vec<usize>,
    /// Stored reversed: the last element is the front of the buffer.
    buffer: Vec<usize>,
    arcs: Vec<Option<Arc>>,
    /// Arc-eager only: set once the buffer has been exhausted, after which
    /// SHIFT is no longer available.
    exhausted: bool,
}

impl Configuration {
    pub fn initial(n: usize) -> Result<Self, TransitionError> {
        if n == 0 {
            return Err(TransitionError::EmptySentence);
        }
        Ok(Configuration {
            stack: vec![0],
            buffer: (1..=n).rev().collect(),
            arcs: vec![None; n + 1],
            exhausted: false,
        })
    }

    pub fn for_sentence(sentence: &Sentence) -> Result<Self, TransitionError> {
        Self::initial(sentence.len())
    }

    /// Number of tokens in the sentence, excluding the root.
    pub fn len(&self) -> usize {
        self.arcs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stack from bottom to top.
    pub fn stack(&self) -> &[usize] {
        &self.stack
    }

    /// The `i`-th stack element counted from the top (0 = top).
    pub fn stack_top(&self, i: usize) -> Option<usize> {
        self.stack.len().checked_sub(i + 1).map(|p| self.stack[p])
    }

    /// The `i`-th buffer element counted from the front (0 = front).
    pub fn buffer_front(&self, i: usize) -> Option<usize> {
        self.buffer.len().checked_sub(i + 1).map(|p| self.buffer[p])
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Buffer in front-to-back order.
    pub fn buffer(&self) -> impl DoubleEndedIterator<Item = usize> + ExactSizeIterator + '_ {
        self.buffer.iter().rev().copied()
    }

    pub fn arc(&self, dep: usize) -> Option<Arc> {
        self.arcs[dep]
    }

    pub fn has_head(&self, token: usize) -> bool {
        self.arcs[token].is_some()
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, Arc)> + '_ {
        self.arcs.iter().enumerate().filter_map(|(d, a)| a.map(|a| (d, a)))
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().filter(|a| a.is_some()).count()
    }

    /// The `nth` (1-based) leftmost dependent of `head` lying to its left.
    pub fn left_child(&self, head: usize, nth: usize) -> Option<usize> {
        (1..head)
            .filter(|&d| matches!(self.arcs[d], Some(a) if a.head == head))
            .nth(nth - 1)
    }

    /// The `nth` (1-based) rightmost dependent of `head` lying to its right.
    pub fn right_child(&self, head: usize, nth: usize) -> Option<usize> {
        (head + 1..self.arcs.len())
            .rev()
            .filter(|&d| matches!(self.arcs[d], Some(a) if a.head == head))
            .nth(nth - 1)
    }

    pub fn buffer_exhausted(&self) -> bool {
        self.exhausted
    }

    fn add_arc(&mut self, head: usize, dep: usize, label: usize) {
        debug_assert!(self.arcs[dep].is_none(), "token {dep} already has a head");
        self.arcs[dep] = Some(Arc { head, label });
    }

    fn pop_buffer(&mut self) -> usize {
        let b = self.buffer.pop().expect("buffer nonempty");
        if self.buffer.is_empty() {
            self.exhausted = true;
        }
        b
    }
}

/// A transition system over a fixed label inventory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionSystem {
    kind: SystemKind,
    labels: LabelSet,
}

impl TransitionSystem {
    pub fn new(kind: SystemKind, labels: LabelSet) -> Self {
        TransitionSystem { kind, labels }
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    /// Action inventory size: `2·|labels|` arc actions plus SHIFT and the
    /// system-specific extras.
    pub fn num_actions(&self) -> usize {
        2 * self.labels.len()
            + match self.kind {
                SystemKind::ArcStandard => 1,
                SystemKind::ArcEager => 3,
                SystemKind::SwapStandard => 2,
            }
    }

    /// Inventory order: SHIFT, LEFT_*, RIGHT_*, then REDUCE/UNSHIFT or SWAP.
    pub fn action(&self, id: usize) -> Result<Action, TransitionError> {
        let l = self.labels.len();
        let extra = id.checked_sub(1 + 2 * l);
        let action = match id {
            0 => Action::Shift,
            i if i <= l => Action::Left(i - 1),
            i if i <= 2 * l => Action::Right(i - 1 - l),
            _ => match (self.kind, extra) {
                (SystemKind::ArcEager, Some(0)) => Action::Reduce,
                (SystemKind::ArcEager, Some(1)) => Action::Unshift,
                (SystemKind::SwapStandard, Some(0)) => Action::Swap,
                _ => return Err(TransitionError::UnknownAction(id)),
            },
        };
        Ok(action)
    }

    pub fn action_id(&self, action: Action) -> Option<usize> {
        let l = self.labels.len();
        match (self.kind, action) {
            (_, Action::Shift) => Some(0),
            (_, Action::Left(x)) if x < l => Some(1 + x),
            (_, Action::Right(x)) if x < l => Some(1 + l + x),
            (SystemKind::ArcEager, Action::Reduce) => Some(1 + 2 * l),
            (SystemKind::ArcEager, Action::Unshift) => Some(2 + 2 * l),
            (SystemKind::SwapStandard, Action::Swap) => Some(1 + 2 * l),
            _ => None,
        }
    }

    pub fn actions(&self) -> Vec<Action> {
        (0..self.num_actions())
            .map(|i| self.action(i).expect("id within inventory"))
            .collect()
    }

    pub fn action_name(&self, action: Action) -> String {
        match action {
            Action::Left(l) => format!("LEFT_{}", self.labels.name(l)),
            Action::Right(l) => format!("RIGHT_{}", self.labels.name(l)),
            other => other.to_string(),
        }
    }

    /// Legality ignoring the label argument.
    pub fn check(&self, c: &Configuration, action: Action) -> Result<(), &'static str> {
        let stack_len = c.stack.len();
        let has_buffer = !c.buffer.is_empty();
        match self.kind {
            SystemKind::ArcStandard | SystemKind::SwapStandard => match action {
                Action::Shift if !has_buffer => Err("SHIFT needs a nonempty buffer"),
                Action::Shift => Ok(()),
                Action::Left(_) if stack_len < 3 => Err("LEFT needs two stack elements above the root"),
                Action::Left(_) => Ok(()),
                Action::Right(_) if stack_len < 2 => Err("RIGHT needs two stack elements"),
                Action::Right(_) if stack_len == 2 && has_buffer => Err("RIGHT onto the root requires an empty buffer"),
                Action::Right(_) => Ok(()),
                Action::Swap if self.kind == SystemKind::SwapStandard => {
                    if stack_len < 3 {
                        return Err("SWAP needs two stack elements above the root");
                    }
                    let s1 = c.stack[stack_len - 1];
                    let s2 = c.stack[stack_len - 2];
                    if s2 < s1 {
                        Ok(())
                    } else {
                        Err("SWAP requires the second stack element to precede the top")
                    }
                }
                _ => Err("action not in this transition system"),
            },
            SystemKind::ArcEager => {
                let top = c.stack[stack_len - 1];
                match action {
                    Action::Shift if !has_buffer => Err("SHIFT needs a nonempty buffer"),
                    Action::Shift if c.exhausted => Err("SHIFT is unavailable once the buffer has been exhausted"),
                    Action::Shift => Ok(()),
                    Action::Left(_) if !has_buffer => Err("LEFT needs a nonempty buffer"),
                    Action::Left(_) if top == 0 => Err("LEFT cannot make the root a dependent"),
                    Action::Left(_) if c.has_head(top) => Err("LEFT needs a stack top without a head"),
                    Action::Left(_) => Ok(()),
                    Action::Right(_) if !has_buffer => Err("RIGHT needs a nonempty buffer"),
                    Action::Right(_) => Ok(()),
                    Action::Reduce if top == 0 => Err("REDUCE cannot pop the root"),
                    Action::Reduce if !c.has_head(top) => Err("REDUCE needs a stack top with a head"),
                    Action::Reduce => Ok(()),
                    Action::Unshift if has_buffer => Err("UNSHIFT needs an empty buffer"),
                    Action::Unshift if top == 0 => Err("UNSHIFT cannot move the root"),
                    Action::Unshift if c.has_head(top) => Err("UNSHIFT needs a stack top without a head"),
                    Action::Unshift => Ok(()),
                    _ => Err("action not in this transition system"),
                }
            }
        }
    }

    pub fn is_legal(&self, c: &Configuration, action: Action) -> bool {
        self.action_id(action).is_some() && self.check(c, action).is_ok()
    }

    pub fn legal_actions(&self, c: &Configuration) -> Vec<Action> {
        self.actions()
            .into_iter()
            .filter(|&a| self.check(c, a).is_ok())
            .collect()
    }

    /// Legality of every action id, in inventory order.
    pub fn legal_mask(&self, c: &Configuration) -> Vec<bool> {
        let l = self.labels.len();
        let mut mask = Vec::with_capacity(self.num_actions());
        mask.push(self.check(c, Action::Shift).is_ok());
        let left = self.check(c, Action::Left(0)).is_ok();
        mask.extend(std::iter::repeat_n(left, l));
        let right = self.check(c, Action::Right(0)).is_ok();
        mask.extend(std::iter::repeat_n(right, l));
        match self.kind {
            SystemKind::ArcStandard => {}
            SystemKind::ArcEager => {
                mask.push(self.check(c, Action::Reduce).is_ok());
                mask.push(self.check(c, Action::Unshift).is_ok());
            }
            SystemKind::SwapStandard => mask.push(self.check(c, Action::Swap).is_ok()),
        }
        mask
    }

    pub fn apply(&self, c: &Configuration, action: Action) -> Result<Configuration, TransitionError> {
        let mut next = c.clone();
        self.apply_in_place(&mut next, action)?;
        Ok(next)
    }

    pub fn apply_in_place(&self, c: &mut Configuration, action: Action) -> Result<(), TransitionError> {
        if self.action_id(action).is_none() {
            return Err(TransitionError::Illegal {
                action: action.to_string(),
                rule: "action not in the inventory of this system",
            });
        }
        self.check(c, action).map_err(|rule| TransitionError::Illegal {
            action: self.action_name(action),
            rule,
        })?;
        let top = *c.stack.last().expect("root is never popped");
        match (self.kind, action) {
            (SystemKind::ArcEager, Action::Shift) => {
                let b = c.pop_buffer();
                c.stack.push(b);
            }
            (SystemKind::ArcEager, Action::Left(l)) => {
                let b = c.buffer_front(0).expect("checked");
                c.add_arc(b, top, l);
                c.stack.pop();
            }
            (SystemKind::ArcEager, Action::Right(l)) => {
                let b = c.pop_buffer();
                c.add_arc(top, b, l);
                c.stack.push(b);
            }
            (SystemKind::ArcEager, Action::Reduce) => {
                c.stack.pop();
            }
            (SystemKind::ArcEager, Action::Unshift) => {
                c.stack.pop();
                c.buffer.push(top);
            }
            (_, Action::Shift) => {
                let b = c.pop_buffer();
                c.stack.push(b);
            }
            (_, Action::Left(l)) => {
                let s2 = c.stack.remove(c.stack.len() - 2);
                c.add_arc(top, s2, l);
            }
            (_, Action::Right(l)) => {
                c.stack.pop();
                let s2 = *c.stack.last().expect("checked");
                c.add_arc(s2, top, l);
            }
            (_, Action::Swap) => {
                let s2 = c.stack.remove(c.stack.len() - 2);
                c.buffer.push(s2);
            }
            _ => unreachable!("legality checked above"),
        }
        Ok(())
    }

    pub fn apply_id(&self, c: &Configuration, id: usize) -> Result<Configuration, TransitionError> {
        self.apply(c, self.action(id)?)
    }

    pub fn is_terminal(&self, c: &Configuration) -> bool {
        c.buffer.is_empty() && c.stack.len() == 1
    }

    /// Upper bound on the length of any derivation over `n` tokens.
    pub fn max_steps(&self, n: usize) -> usize {
        match self.kind {
            SystemKind::SwapStandard => 4 * n + 8 + n * n.saturating_sub(1),
            _ => 4 * n + 8,
        }
    }

    pub fn extract_indexed(&self, c: &Configuration) -> Result<IndexedTree, TransitionError> {
        if !self.is_terminal(c) {
            return Err(TransitionError::NotTerminal);
        }
        let mut heads = Vec::with_capacity(c.len());
        let mut labels = Vec::with_capacity(c.len());
        for dep in 1..=c.len() {
            let arc = c.arcs[dep].ok_or(TransitionError::NotTerminal)?;
            heads.push(arc.head);
            labels.push(arc.label);
        }
        Ok(IndexedTree { heads, labels })
    }

    pub fn extract_tree(&self, c: &Configuration) -> Result<DepTree, TransitionError> {
        Ok(self.labels.to_dep_tree(&self.extract_indexed(c)?))
    }

    /// The canonical action sequence deriving `gold`.
    pub fn static_oracle(&self, gold: &IndexedTree) -> Result<Vec<Action>, TransitionError> {
        let no_derivation = |reason: &str| TransitionError::NoDerivation {
            system: self.kind,
            reason: reason.to_owned(),
        };
        if self.kind.needs_projective() && !crate::treebank::is_projective(&gold.heads) {
            return Err(no_derivation("tree is non-projective"));
        }
        if gold.labels.iter().any(|&l| l >= self.labels.len()) {
            return Err(no_derivation("tree uses a label outside the label set"));
        }
        let mut c = Configuration::initial(gold.len())?;
        let mut actions = Vec::new();
        let order = match self.kind {
            SystemKind::SwapStandard => projective_order(&gold.heads),
            _ => Vec::new(),
        };
        let limit = self.max_steps(gold.len());
        while !self.is_terminal(&c) {
            let action = match self.kind {
                SystemKind::ArcStandard => oracle_arc_standard(&c, gold),
                SystemKind::ArcEager => oracle_arc_eager(&c, gold),
                SystemKind::SwapStandard => oracle_swap(&c, gold, &order),
            };
            let action = action.ok_or_else(|| no_derivation("oracle is stuck"))?;
            self.apply_in_place(&mut c, action)
                .map_err(|e| no_derivation(&e.to_string()))?;
            actions.push(action);
            if actions.len() > limit {
                return Err(no_derivation("derivation exceeds the step bound"));
            }
        }
        Ok(actions)
    }
}

fn collected_all_dependents(c: &Configuration, gold: &IndexedTree, token: usize) -> bool {
    (1..=gold.len()).all(|d| gold.head(d) != token || c.has_head(d))
}

fn oracle_arc_standard(c: &Configuration, gold: &IndexedTree) -> Option<Action> {
    let n = c.stack.len();
    if n >= 3 {
        let s1 = c.stack[n - 1];
        let s2 = c.stack[n - 2];
        if gold.head(s2) == s1 && collected_all_dependents(c, gold, s2) {
            return Some(Action::Left(gold.label(s2)));
        }
    }
    if n >= 2 {
        let s1 = c.stack[n - 1];
        let s2 = c.stack[n - 2];
        if gold.head(s1) == s2 && collected_all_dependents(c, gold, s1) && (s2 != 0 || c.buffer.is_empty()) {
            return Some(Action::Right(gold.label(s1)));
        }
    }
    (!c.buffer.is_empty()).then_some(Action::Shift)
}

fn oracle_arc_eager(c: &Configuration, gold: &IndexedTree) -> Option<Action> {
    let top = *c.stack.last()?;
    let Some(b) = c.buffer_front(0) else {
        // Buffer exhausted: every remaining stack token should already have its head.
        return (top != 0 && c.has_head(top)).then_some(Action::Reduce);
    };
    if top != 0 && !c.has_head(top) && gold.head(top) == b {
        return Some(Action::Left(gold.label(top)));
    }
    if gold.head(b) == top {
        return Some(Action::Right(gold.label(b)));
    }
    let below = &c.stack[..c.stack.len() - 1];
    let relates_below = below
        .iter()
        .any(|&k| gold.head(b) == k || (k != 0 && gold.head(k) == b));
    if top != 0 && c.has_head(top) && relates_below {
        return Some(Action::Reduce);
    }
    if c.exhausted {
        return None;
    }
    Some(Action::Shift)
}

fn oracle_swap(c: &Configuration, gold: &IndexedTree, order: &[usize]) -> Option<Action> {
    let n = c.stack.len();
    if n >= 3 {
        let s1 = c.stack[n - 1];
        let s2 = c.stack[n - 2];
        if gold.head(s2) == s1 && collected_all_dependents(c, gold, s2) {
            return Some(Action::Left(gold.label(s2)));
        }
    }
    if n >= 2 {
        let s1 = c.stack[n - 1];
        let s2 = c.stack[n - 2];
        if gold.head(s1) == s2 && collected_all_dependents(c, gold, s1) && (s2 != 0 || c.buffer.is_empty()) {
            return Some(Action::Right(gold.label(s1)));
        }
    }
    if n >= 3 {
        let s1 = c.stack[n - 1];
        let s2 = c.stack[n - 2];
        if order[s1] < order[s2] {
            return Some(Action::Swap);
        }
    }
    (!c.buffer.is_empty()).then_some(Action::Shift)
}

/// Position of each token (index 0 = root) in the in-order traversal of the tree.
pub fn projective_order(heads: &[usize]) -> Vec<usize> {
    let n = heads.len();
    let mut children = vec![Vec::new(); n + 1];
    for (i, &h) in heads.iter().enumerate() {
        children[h].push(i + 1);
    }
    let mut order = vec![0; n + 1];
    let mut next = 0;
    // iterative in-order walk: left dependents, the head, right dependents
    enum Visit {
        Expand(usize),
        Emit(usize),
    }
    let mut todo = vec![Visit::Expand(0)];
    while let Some(v) = todo.pop() {
        match v {
            Visit::Emit(t) => {
                order[t] = next;
                next += 1;
            }
            Visit::Expand(t) => {
                let kids = &children[t];
                for &r in kids.iter().rev().filter(|&&k| k > t) {
                    todo.push(Visit::Expand(r));
                }
                todo.push(Visit::Emit(t));
                for &l in kids.iter().rev().filter(|&&k| k < t) {
                    todo.push(Visit::Expand(l));
                }
            }
        }
    }
    order
}
