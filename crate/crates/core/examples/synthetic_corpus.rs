// Generates the synthetic English-like treebank used for desk-scale
// experiments and writes train/dev/test splits as CoNLL-X.

use std::collections::HashSet;

use greedy_dep::synth;
use greedy_dep::treebank::{write_gold, Format};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1);
    let corpus = synth::corpus(500, 150, 150, 1);
    let train = &corpus.train;
    let tokens: usize = train.iter().map(|s| s.len()).sum();
    let words: HashSet<&str> = train
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.form.as_str()))
        .collect();
    let labels: HashSet<&str> = train
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.label.as_str()))
        .collect();
    let nonproj = train.iter().filter(|s| !s.gold_tree().is_projective()).count();
    println!("train sentences: {}", train.len());
    println!("mean length: {:.1}", tokens as f64 / train.len() as f64);
    println!("word types: {}  labels: {}", words.len(), labels.len());
    println!("non-projective: {nonproj}");
    let first = &train[0];
    for (i, t) in first.tokens.iter().enumerate() {
        println!("{}\t{}\t{}\t{}\t{}", i + 1, t.form, t.pos, t.head, t.label);
    }
    if let Some(dir) = out {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir)?;
        write_gold(dir.join("train.conll"), &corpus.train, Format::ConllX)?;
        write_gold(dir.join("dev.conll"), &corpus.dev, Format::ConllX)?;
        write_gold(dir.join("test.conll"), &corpus.test, Format::ConllX)?;
        println!("written to {}", dir.display());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
