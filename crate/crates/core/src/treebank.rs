//! CoNLL-X / CoNLL-U treebank reading and writing, plus the tree predicates
//! used throughout the parser (projectivity, punctuation).

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// PTB tags treated as punctuation by the Stanford dependency scorer.
pub const PTB_PUNCTUATION: [&str; 5] = ["``", "''", ",", ".", ":"];

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("sentence {sentence}, line {line}: {message}")]
    Malformed {
        sentence: String,
        line: usize,
        message: String,
    },
    #[error("sentence {sentence}: {message}")]
    InvalidTree { sentence: String, message: String },
    #[error("{sentences} sentences but {trees} trees")]
    ArityMismatch { sentences: usize, trees: usize },
}

/// The two supported column layouts. Both have ten tab-separated columns;
/// they differ in comment handling and in the meaning of the tag columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    ConllX,
    ConllU,
}

impl Format {
    /// Guess the format from a file extension, defaulting to CoNLL-X.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("conllu") => Format::ConllU,
            _ => Format::ConllX,
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "conllx" => Ok(Format::ConllX),
            "conllu" => Ok(Format::ConllU),
            other => Err(format!("unknown treebank format '{other}'")),
        }
    }
}

/// Which tag column and tag set identify punctuation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PunctConvention {
    /// Fine-grained (5th column) tag in [`PTB_PUNCTUATION`].
    #[default]
    Ptb,
    /// Coarse (4th column) tag equal to `PUNCT`.
    Ud,
}

impl FromStr for PunctConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ptb" => Ok(PunctConvention::Ptb),
            "ud" => Ok(PunctConvention::Ud),
            other => Err(format!("unknown punctuation convention '{other}'")),
        }
    }
}

impl fmt::Display for PunctConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PunctConvention::Ptb => "ptb",
            PunctConvention::Ud => "ud",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub form: String,
    pub lemma: String,
    /// Coarse tag (CPOSTAG / UPOS).
    pub cpos: String,
    /// Fine tag (POSTAG / XPOS).
    pub pos: String,
    pub feats: String,
    /// Gold head; 0 is the artificial root.
    pub head: usize,
    pub label: String,
}

impl Token {
    pub fn new(form: &str, pos: &str, head: usize, label: &str) -> Self {
        Token {
            form: form.to_owned(),
            lemma: "_".to_owned(),
            cpos: pos.to_owned(),
            pos: pos.to_owned(),
            feats: "_".to_owned(),
            head,
            label: label.to_owned(),
        }
    }

    /// The tag used as a parser feature: the fine tag when present,
    /// otherwise the coarse one.
    pub fn tag(&self) -> &str {
        if self.pos == "_" {
            &self.cpos
        } else {
            &self.pos
        }
    }
}

pub fn is_punctuation(token: &Token, convention: PunctConvention) -> bool {
    match convention {
        PunctConvention::Ptb => PTB_PUNCTUATION.contains(&token.pos.as_str()),
        PunctConvention::Ud => token.cpos == "PUNCT",
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Sentence { id: id.into(), tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// 1-based token access.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    pub fn gold_tree(&self) -> DepTree {
        DepTree {
            heads: self.tokens.iter().map(|t| t.head).collect(),
            labels: self.tokens.iter().map(|t| t.label.clone()).collect(),
        }
    }

    /// Punctuation flags, indexed by 1-based token position (entry 0 is the root).
    pub fn punctuation_mask(&self, convention: PunctConvention) -> Vec<bool> {
        std::iter::once(false)
            .chain(self.tokens.iter().map(|t| is_punctuation(t, convention)))
            .collect()
    }

    pub fn scored_tokens(&self, convention: PunctConvention) -> usize {
        self.tokens.iter().filter(|t| !is_punctuation(t, convention)).count()
    }
}

/// A dependency tree over a sentence. `heads[i]` and `labels[i]` describe
/// token `i + 1`; a head of 0 attaches to the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepTree {
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl DepTree {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Head of the 1-based token `dep`.
    pub fn head(&self, dep: usize) -> usize {
        self.heads[dep - 1]
    }

    pub fn label(&self, dep: usize) -> &str {
        &self.labels[dep - 1]
    }

    /// Checks heads are in range, there are no self-loops and no cycles.
    pub fn validate(&self) -> Result<(), String> {
        validate_heads(&self.heads)
    }

    pub fn is_projective(&self) -> bool {
        is_projective(&self.heads)
    }
}

/// Range, self-loop and cycle checks over a head vector.
pub fn validate_heads(heads: &[usize]) -> Result<(), String> {
    let n = heads.len();
    for (i, &h) in heads.iter().enumerate() {
        let dep = i + 1;
        if h > n {
            return Err(format!("token {dep} has out-of-range head {h}"));
        }
        if h == dep {
            return Err(format!("token {dep} has a self-loop"));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = heads[cur - 1];
        }
        if state[cur] == 1 {
            return Err(format!("cycle through token {cur}"));
        }
        for node in path {
            state[node] = 2;
        }
    }
    Ok(())
}

/// A tree is projective when every head dominates all tokens lying between
/// itself and each of its dependents. `heads` must describe a valid tree.
pub fn is_projective(heads: &[usize]) -> bool {
    let n = heads.len();
    let dominates = |h: usize, mut t: usize| {
        while t != 0 {
            if t == h {
                return true;
            }
            t = heads[t - 1];
        }
        h == 0
    };
    for dep in 1..=n {
        let head = heads[dep - 1];
        let (lo, hi) = if head < dep { (head, dep) } else { (dep, head) };
        if ((lo + 1)..hi).any(|t| !dominates(head, t)) {
            return false;
        }
    }
    true
}

/// Reads all sentences from a CoNLL-X or CoNLL-U file.
///
/// Multiword-token ranges and empty nodes are skipped, comments are ignored
/// except for `# sent_id = ...`. Sentences with more than one root are
/// dropped with a warning; every other validation failure is an error.
pub fn load_conll(path: impl AsRef<Path>, format: Format) -> Result<Vec<Sentence>, TreebankError> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    read_conll(reader, format)
}

pub fn read_conll<R: BufRead>(reader: R, format: Format) -> Result<Vec<Sentence>, TreebankError> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, String)> = Vec::new();
    let mut comment_id: Option<String> = None;
    let mut ordinal = 0;

    let mut flush = |block: &mut Vec<(usize, String)>,
                     comment_id: &mut Option<String>,
                     sentences: &mut Vec<Sentence>|
     -> Result<(), TreebankError> {
        if block.is_empty() {
            *comment_id = None;
            return Ok(());
        }
        ordinal += 1;
        let id = comment_id.take().unwrap_or_else(|| format!("s{ordinal}"));
        if let Some(sentence) = parse_block(&id, block)? {
            sentences.push(sentence);
        }
        block.clear();
        Ok(())
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            flush(&mut block, &mut comment_id, &mut sentences)?;
        } else if trimmed.starts_with('#') && block.is_empty() {
            if format == Format::ConllU {
                if let Some(rest) = trimmed.strip_prefix("# sent_id") {
                    let value = rest.trim_start().trim_start_matches('=').trim();
                    if !value.is_empty() {
                        comment_id = Some(value.to_owned());
                    }
                }
            }
        } else {
            block.push((lineno + 1, trimmed.to_owned()));
        }
    }
    flush(&mut block, &mut comment_id, &mut sentences)?;
    Ok(sentences)
}

fn parse_block(id: &str, lines: &[(usize, String)]) -> Result<Option<Sentence>, TreebankError> {
    let malformed = |line: usize, message: String| TreebankError::Malformed {
        sentence: id.to_owned(),
        line,
        message,
    };

    let mut tokens = Vec::new();
    for (lineno, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(malformed(*lineno, format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| malformed(*lineno, format!("bad token id '{}'", cols[0])))?;
        if index != tokens.len() + 1 {
            return Err(malformed(*lineno, format!("token id {index} out of sequence")));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| malformed(*lineno, format!("bad head '{}'", cols[6])))?;
        if head == index {
            return Err(malformed(*lineno, format!("self-loop on token {index}")));
        }
        if cols[7].is_empty() || cols[7] == "_" {
            return Err(malformed(*lineno, "missing dependency label".to_owned()));
        }
        tokens.push(Token {
            form: cols[1].to_owned(),
            lemma: cols[2].to_owned(),
            cpos: cols[3].to_owned(),
            pos: cols[4].to_owned(),
            feats: cols[5].to_owned(),
            head,
            label: cols[7].to_owned(),
        });
    }

    let n = tokens.len();
    if n == 0 {
        return Ok(None);
    }
    for (i, token) in tokens.iter().enumerate() {
        if token.head > n {
            return Err(malformed(
                line_of(lines, i + 1),
                format!("head {} out of range (sentence has {n} tokens)", token.head),
            ));
        }
    }
    let heads: Vec<usize> = tokens.iter().map(|t| t.head).collect();
    validate_heads(&heads).map_err(|message| TreebankError::InvalidTree {
        sentence: id.to_owned(),
        message,
    })?;
    let roots = heads.iter().filter(|&&h| h == 0).count();
    if roots != 1 {
        log::warn!("skipping sentence {id}: {roots} root attachments");
        return Ok(None);
    }
    Ok(Some(Sentence::new(id, tokens)))
}

fn line_of(lines: &[(usize, String)], token: usize) -> usize {
    lines
        .iter()
        .filter(|(_, l)| {
            let id = l.split('\t').next().unwrap_or("");
            !id.contains('-') && !id.contains('.')
        })
        .nth(token - 1)
        .map(|(n, _)| *n)
        .unwrap_or(0)
}

/// Writes sentences with the heads and labels taken from `trees`.
pub fn write_conll(
    path: impl AsRef<Path>,
    sentences: &[Sentence],
    trees: &[DepTree],
    format: Format,
) -> Result<(), TreebankError> {
    let mut writer = BufWriter::new(File::create(path.as_ref())?);
    write_conll_to(&mut writer, sentences, trees, format)?;
    writer.flush()?;
    Ok(())
}

pub fn write_conll_to<W: Write>(
    writer: &mut W,
    sentences: &[Sentence],
    trees: &[DepTree],
    format: Format,
) -> Result<(), TreebankError> {
    if sentences.len() != trees.len() {
        return Err(TreebankError::ArityMismatch {
            sentences: sentences.len(),
            trees: trees.len(),
        });
    }
    for (sentence, tree) in sentences.iter().zip(trees) {
        if tree.len() != sentence.len() {
            return Err(TreebankError::InvalidTree {
                sentence: sentence.id.clone(),
                message: format!("tree has {} tokens, sentence has {}", tree.len(), sentence.len()),
            });
        }
        if format == Format::ConllU {
            writeln!(writer, "# sent_id = {}", sentence.id)?;
        }
        for (i, token) in sentence.tokens.iter().enumerate() {
            writeln!(
                writer,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t_\t_",
                i + 1,
                token.form,
                token.lemma,
                token.cpos,
                token.pos,
                token.feats,
                tree.heads[i],
                tree.labels[i],
            )?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Writes sentences with their own gold annotation.
pub fn write_gold(path: impl AsRef<Path>, sentences: &[Sentence], format: Format) -> Result<(), TreebankError> {
    let trees: Vec<DepTree> = sentences.iter().map(Sentence::gold_tree).collect();
    write_conll(path, sentences, &trees, format)
}
