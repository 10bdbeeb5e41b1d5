//! A small probabilistic grammar of English-like sentences with gold
//! dependency trees, for experiments when no treebank is at hand.
//!
//! Trees follow Stanford-style basic dependencies with PTB fine tags and
//! UPOS coarse tags. The grammar has genuine attachment ambiguity: whether a
//! prepositional phrase modifies the verb or the preceding noun depends on
//! the preposition and the semantic class of its object, with some noise,
//! and coordination can attach at either of two nouns. Word frequencies are
//! Zipfian so held-out data contains unseen words. A small fraction of
//! sentences extrapose a relative clause, which makes them non-projective.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::treebank::{Sentence, Token};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub seed: u64,
    /// Probability of extraposing a relative clause (non-projective tree).
    pub non_projective_rate: f64,
    /// Probability that a PP or conjunct attaches against the lexical preference.
    pub attachment_noise: f64,
    /// Maximum clause embedding depth.
    pub max_depth: usize,
    /// Prefix for sentence ids.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 500,
            seed: 1,
            non_projective_rate: 0.03,
            attachment_noise: 0.1,
            max_depth: 2,
            id_prefix: "syn".to_owned(),
        }
    }
}

pub struct Corpus {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

/// Train/dev/test splits drawn from the same grammar with different seeds.
pub fn corpus(train: usize, dev: usize, test: usize, seed: u64) -> Corpus {
    let split = |n: usize, k: u64, prefix: &str| {
        generate(&SynthConfig {
            sentences: n,
            seed: seed.wrapping_mul(1_000_003).wrapping_add(k),
            id_prefix: prefix.to_owned(),
            ..SynthConfig::default()
        })
    };
    Corpus {
        train: split(train, 0, "train"),
        dev: split(dev, 1, "dev"),
        test: split(test, 2, "test"),
    }
}

pub fn generate(cfg: &SynthConfig) -> Vec<Sentence> {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.sentences)
        .map(|i| {
            let mut g = Gen {
                lex: &lex,
                rng: &mut rng,
                cfg,
                nodes: Vec::new(),
            };
            g.sentence(format!("{}-{}", cfg.id_prefix, i + 1))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Person,
    Thing,
    Place,
    Time,
}

const CLASSES: [Class; 4] = [Class::Person, Class::Thing, Class::Place, Class::Time];

struct Noun {
    form: String,
    class: Class,
}

struct Verb {
    stem: String,
    transitive: bool,
    clausal: bool,
}

struct Lexicon {
    nouns: Vec<Noun>,
    noun_weights: WeightedIndex<f64>,
    names: Vec<String>,
    adjectives: Vec<String>,
    adj_weights: WeightedIndex<f64>,
    verbs: Vec<Verb>,
    verb_weights: WeightedIndex<f64>,
    adverbs: Vec<&'static str>,
}

const REAL_NOUNS: [(&str, Class); 40] = [
    ("company", Class::Thing),
    ("market", Class::Place),
    ("investor", Class::Person),
    ("share", Class::Thing),
    ("price", Class::Thing),
    ("year", Class::Time),
    ("week", Class::Time),
    ("analyst", Class::Person),
    ("bank", Class::Place),
    ("city", Class::Place),
    ("official", Class::Person),
    ("report", Class::Thing),
    ("month", Class::Time),
    ("trader", Class::Person),
    ("board", Class::Thing),
    ("plant", Class::Place),
    ("bond", Class::Thing),
    ("quarter", Class::Time),
    ("office", Class::Place),
    ("president", Class::Person),
    ("group", Class::Person),
    ("stock", Class::Thing),
    ("deal", Class::Thing),
    ("court", Class::Place),
    ("day", Class::Time),
    ("manager", Class::Person),
    ("fund", Class::Thing),
    ("state", Class::Place),
    ("session", Class::Time),
    ("lawyer", Class::Person),
    ("contract", Class::Thing),
    ("exchange", Class::Place),
    ("morning", Class::Time),
    ("worker", Class::Person),
    ("loan", Class::Thing),
    ("country", Class::Place),
    ("decade", Class::Time),
    ("buyer", Class::Person),
    ("product", Class::Thing),
    ("region", Class::Place),
];

const REAL_VERBS: [(&str, bool, bool); 24] = [
    ("report", true, true),
    ("buy", true, false),
    ("sell", true, false),
    ("rise", false, false),
    ("fall", false, false),
    ("say", false, true),
    ("expect", true, true),
    ("hold", true, false),
    ("close", false, false),
    ("acquire", true, false),
    ("announce", true, true),
    ("trade", false, false),
    ("lend", true, false),
    ("build", true, false),
    ("believe", false, true),
    ("hire", true, false),
    ("move", false, false),
    ("offer", true, false),
    ("gain", true, false),
    ("note", false, true),
    ("open", true, false),
    ("approve", true, false),
    ("decline", false, false),
    ("claim", true, true),
];

const ADJECTIVES: [&str; 24] = [
    "big", "small", "new", "old", "major", "local", "federal", "strong", "weak", "early", "late", "large", "foreign",
    "public", "private", "recent", "high", "low", "net", "annual", "free", "short", "long", "chief",
];

const ADVERBS: [&str; 10] = [
    "also", "still", "sharply", "quickly", "recently", "slightly", "again", "already", "nearly", "later",
];

const PREPOSITIONS: [&str; 8] = ["in", "on", "at", "with", "for", "from", "by", "about"];

/// Whether a PP headed by `prep` with an object of `class` prefers the verb.
fn prefers_verb(prep: &str, class: Class) -> bool {
    match (prep, class) {
        (_, Class::Time) => true,
        ("in" | "at" | "from", Class::Place) => true,
        ("with" | "by", Class::Person) => true,
        ("for", Class::Person) => false,
        ("on" | "about", _) => false,
        ("with", Class::Thing) => true,
        _ => false,
    }
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 2.0))).expect("nonempty lexicon")
}

impl Lexicon {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        const ONSETS: [&str; 16] = [
            "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
        ];
        const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
        let word = |rng: &mut ChaCha8Rng, syllables: usize| {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
                w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
            }
            w.push_str(["n", "r", "x", "t"][rng.gen_range(0..4)]);
            w
        };
        let mut nouns: Vec<Noun> = REAL_NOUNS
            .iter()
            .map(|&(f, class)| Noun {
                form: f.to_owned(),
                class,
            })
            .collect();
        for i in 0..260 {
            nouns.push(Noun {
                form: word(&mut rng, 2),
                class: CLASSES[i % 4],
            });
        }
        let names = (0..60)
            .map(|_| {
                let w = word(&mut rng, 2);
                let mut c = w.chars();
                let first = c.next().expect("nonempty").to_ascii_uppercase();
                std::iter::once(first).chain(c).collect()
            })
            .collect();
        let mut adjectives: Vec<String> = ADJECTIVES.iter().map(|s| s.to_string()).collect();
        for _ in 0..60 {
            adjectives.push(format!("{}ic", word(&mut rng, 1)));
        }
        let mut verbs: Vec<Verb> = REAL_VERBS
            .iter()
            .map(|&(s, transitive, clausal)| Verb {
                stem: s.to_owned(),
                transitive,
                clausal,
            })
            .collect();
        for i in 0..80 {
            verbs.push(Verb {
                stem: word(&mut rng, 1),
                transitive: i % 3 != 0,
                clausal: i % 7 == 0,
            });
        }
        Lexicon {
            noun_weights: zipf(nouns.len()),
            adj_weights: zipf(adjectives.len()),
            verb_weights: zipf(verbs.len()),
            nouns,
            names,
            adjectives,
            verbs,
            adverbs: ADVERBS.to_vec(),
        }
    }
}

struct Node {
    form: String,
    pos: &'static str,
    cpos: &'static str,
    label: &'static str,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Gen<'a, R> {
    lex: &'a Lexicon,
    rng: &'a mut R,
    cfg: &'a SynthConfig,
    nodes: Vec<Node>,
}

impl<R: Rng> Gen<'_, R> {
    fn node(&mut self, form: impl Into<String>, pos: &'static str, cpos: &'static str, label: &'static str) -> usize {
        self.nodes.push(Node {
            form: form.into(),
            pos,
            cpos,
            label,
            left: Vec::new(),
            right: Vec::new(),
        });
        self.nodes.len() - 1
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen::<f64>() < p
    }

    fn sentence(&mut self, id: String) -> Sentence {
        let root = self.clause(0, "root");
        let period = self.node(".", ".", "PUNCT", "punct");
        self.nodes[root].right.push(period);
        let mut order = Vec::new();
        self.linearize(root, &mut order);
        if self.chance(self.cfg.non_projective_rate) {
            self.extrapose(root, &mut order);
        }
        let mut position = vec![0; self.nodes.len()];
        for (i, &n) in order.iter().enumerate() {
            position[n] = i + 1;
        }
        let mut heads = vec![0; self.nodes.len()];
        for (h, node) in self.nodes.iter().enumerate() {
            for &d in node.left.iter().chain(&node.right) {
                heads[d] = position[h];
            }
        }
        let tokens = order
            .iter()
            .map(|&n| {
                let node = &self.nodes[n];
                let mut t = Token::new(&node.form, node.pos, heads[n], node.label);
                t.cpos = node.cpos.to_owned();
                t
            })
            .collect();
        Sentence::new(id, tokens)
    }

    fn linearize(&self, n: usize, out: &mut Vec<usize>) {
        for &l in &self.nodes[n].left {
            self.linearize(l, out);
        }
        out.push(n);
        for &r in &self.nodes[n].right {
            self.linearize(r, out);
        }
    }

    /// Moves the first relative clause of the subject to just before the
    /// final punctuation, crossing the main verb's arcs.
    fn extrapose(&self, root: usize, order: &mut Vec<usize>) {
        let Some(&subj) = self.nodes[root].left.iter().find(|&&l| self.nodes[l].label == "nsubj") else {
            return;
        };
        let Some(&rel) = self.nodes[subj].right.iter().find(|&&r| self.nodes[r].label == "rcmod") else {
            return;
        };
        if self.nodes[root].right.len() < 2 {
            return;
        }
        let mut span = Vec::new();
        self.linearize(rel, &mut span);
        order.retain(|n| !span.contains(n));
        let at = order.len() - 1;
        order.splice(at..at, span);
    }

    fn clause(&mut self, depth: usize, label: &'static str) -> usize {
        let vi = self.lex.verb_weights.sample(self.rng);
        let verb = &self.lex.verbs[vi];
        let (transitive, clausal) = (verb.transitive, verb.clausal);
        let stem = verb.stem.clone();
        let modal = self.chance(0.15);
        let v = if modal {
            self.node(stem, "VB", "VERB", label)
        } else if self.chance(0.5) {
            self.node(format!("{stem}ed"), "VBD", "VERB", label)
        } else {
            self.node(format!("{stem}s"), "VBZ", "VERB", label)
        };
        if depth > 0 && label == "ccomp" && self.chance(0.7) {
            let mark = self.node("that", "IN", "SCONJ", "mark");
            self.nodes[v].left.push(mark);
        }
        let subj = self.noun_phrase(depth, "nsubj", true);
        self.nodes[v].left.insert(0, subj);
        if modal {
            let m = ["will", "could", "may", "would"][self.rng.gen_range(0..4)];
            let aux = self.node(m, "MD", "AUX", "aux");
            self.nodes[v].left.push(aux);
        }
        if self.chance(0.1) {
            let adv = self.lex.adverbs[self.rng.gen_range(0..self.lex.adverbs.len())];
            let a = self.node(adv, "RB", "ADV", "advmod");
            self.nodes[v].left.push(a);
        }
        let mut last_noun = None;
        if transitive && self.chance(0.85) {
            let obj = self.noun_phrase(depth, "dobj", false);
            self.nodes[v].right.push(obj);
            last_noun = Some(obj);
        }
        let pps = [0.45, 0.2].iter().filter(|&&p| self.chance(p)).count();
        for _ in 0..pps {
            let prep = PREPOSITIONS[self.rng.gen_range(0..PREPOSITIONS.len())];
            let (pp, class) = self.prep_phrase(prep, depth);
            let mut to_verb = last_noun.is_none() || prefers_verb(prep, class);
            if self.chance(self.cfg.attachment_noise) {
                to_verb = !to_verb;
            }
            match last_noun {
                Some(n) if !to_verb => self.nodes[n].right.push(pp),
                _ => self.nodes[v].right.push(pp),
            }
        }
        if self.chance(0.15) {
            let adv = self.lex.adverbs[self.rng.gen_range(0..self.lex.adverbs.len())];
            let a = self.node(adv, "RB", "ADV", "advmod");
            self.nodes[v].right.push(a);
        }
        if clausal && depth < self.cfg.max_depth && self.chance(0.7) {
            if self.chance(0.3) {
                let comma = self.node(",", ",", "PUNCT", "punct");
                self.nodes[v].right.push(comma);
            }
            let c = self.clause(depth + 1, "ccomp");
            self.nodes[v].right.push(c);
        }
        v
    }

    fn prep_phrase(&mut self, prep: &'static str, depth: usize) -> (usize, Class) {
        let p = self.node(prep, "IN", "ADP", "prep");
        let (obj, class) = self.simple_np("pobj");
        self.nodes[p].right.push(obj);
        if depth < self.cfg.max_depth && self.chance(0.1) {
            let inner_prep = PREPOSITIONS[self.rng.gen_range(0..PREPOSITIONS.len())];
            let (inner, _) = self.prep_phrase(inner_prep, depth + 1);
            self.nodes[obj].right.push(inner);
        }
        (p, class)
    }

    fn noun_phrase(&mut self, depth: usize, label: &'static str, subject: bool) -> usize {
        if self.chance(0.08) {
            let pron = ["it", "they", "he", "she", "we"][self.rng.gen_range(0..5)];
            return self.node(pron, "PRP", "PRON", label);
        }
        let (head, _) = self.simple_np(label);
        if self.chance(0.12) {
            let of = self.node("of", "IN", "ADP", "prep");
            let (inner, _) = self.simple_np("pobj");
            self.nodes[of].right.push(inner);
            self.nodes[head].right.push(of);
            if self.chance(0.4) {
                self.coordinate(head, Some(inner));
            }
        } else if self.chance(0.1) {
            self.coordinate(head, None);
        }
        if subject && depth < self.cfg.max_depth && self.chance(0.12) {
            let wh = self.node("that", "WDT", "PRON", "nsubj");
            let vi = self.lex.verb_weights.sample(self.rng);
            let stem = self.lex.verbs[vi].stem.clone();
            let rel = self.node(format!("{stem}ed"), "VBD", "VERB", "rcmod");
            self.nodes[rel].left.push(wh);
            let (obj, _) = self.simple_np("dobj");
            self.nodes[rel].right.push(obj);
            self.nodes[head].right.push(rel);
        }
        head
    }

    /// Adds "and/or X" to either `first` or, if given, the nested noun `second`.
    fn coordinate(&mut self, first: usize, second: Option<usize>) {
        let target = match second {
            Some(s) if !self.chance(0.5 + self.cfg.attachment_noise) => s,
            _ => first,
        };
        let cc = ["and", "or", "but"][self.rng.gen_range(0..3)];
        let c = self.node(cc, "CC", "CCONJ", "cc");
        let (conj, _) = self.simple_np("conj");
        self.nodes[target].right.push(c);
        self.nodes[target].right.push(conj);
    }

    fn simple_np(&mut self, label: &'static str) -> (usize, Class) {
        if self.chance(0.1) {
            let name = self.lex.names[self.rng.gen_range(0..self.lex.names.len())].clone();
            return (self.node(name, "NNP", "PROPN", label), Class::Person);
        }
        if self.chance(0.06) {
            let n = self.number();
            let head = self.simple_noun(label);
            let num = self.node(n, "CD", "NUM", "num");
            self.nodes[head.0].left.push(num);
            return head;
        }
        let (head, class) = self.simple_noun(label);
        let mut left = Vec::new();
        if self.chance(0.7) {
            let det = ["the", "a", "this", "some", "every", "its"][self.rng.gen_range(0..6)];
            let (pos, cpos, lab) = if det == "its" {
                ("PRP$", "PRON", "poss")
            } else {
                ("DT", "DET", "det")
            };
            left.push(self.node(det, pos, cpos, lab));
        }
        let adjs = [0.3, 0.1].iter().filter(|&&p| self.chance(p)).count();
        for _ in 0..adjs {
            let a = self.lex.adj_weights.sample(self.rng);
            let form = self.lex.adjectives[a].clone();
            left.push(self.node(form, "JJ", "ADJ", "amod"));
        }
        if self.chance(0.15) {
            let (nn, _) = self.simple_noun("nn");
            left.push(nn);
        }
        self.nodes[head].left.extend(left);
        (head, class)
    }

    fn simple_noun(&mut self, label: &'static str) -> (usize, Class) {
        let i = self.lex.noun_weights.sample(self.rng);
        let noun = &self.lex.nouns[i];
        let class = noun.class;
        let form = noun.form.clone();
        let id = if self.chance(0.3) {
            self.node(format!("{form}s"), "NNS", "NOUN", label)
        } else {
            self.node(form, "NN", "NOUN", label)
        };
        (id, class)
    }

    fn number(&mut self) -> String {
        match self.rng.gen_range(0..3) {
            0 => self.rng.gen_range(2..100).to_string(),
            1 => format!("{},{:03}", self.rng.gen_range(1..20), self.rng.gen_range(0..1000)),
            _ => format!("{}.{}", self.rng.gen_range(1..50), self.rng.gen_range(0..10)),
        }
    }
}
