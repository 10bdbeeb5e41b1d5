//! Greedy transition-based dependency parsing with a feed-forward policy
//! network, trained by supervised learning or by policy gradient
//! (REINFORCE and approximate policy gradient over trajectory sets), plus a
//! dynamic-oracle based analysis of how much of a parser's error mass comes
//! from error propagation.
//!
//! The main entry points are:
//!
//! * [`treebank`]: CoNLL-X/CoNLL-U I/O and tree predicates.
//! * [`transitions`]: arc-standard, arc-eager (with UNSHIFT) and swap-standard.
//! * [`dynamic_oracle`]: exact minimal completion loss for arc-standard.
//! * [`model`]: feature extraction and the cube-activation policy network.
//! * [`training`]: supervised, REINFORCE and approximate policy gradient training.
//! * [`decode`]: greedy parsing and attachment scores.
//! * [`analysis`]: decision errors, recursive repair and propagation statistics.
//! * [`synth`]: a toy grammar that generates annotated sentences.
//! * [`config`]: flat `key = value` configuration files.

pub mod analysis;
pub mod config;
pub mod decode;
pub mod dynamic_oracle;
pub mod model;
pub mod synth;
pub mod training;
pub mod transitions;
pub mod treebank;

pub use transitions::{Action, Configuration, IndexedTree, LabelSet, SystemKind, TransitionSystem};
pub use treebank::{DepTree, Format, PunctConvention, Sentence, Token};
