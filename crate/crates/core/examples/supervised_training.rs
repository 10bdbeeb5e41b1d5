// Trains a small arc-standard parser on the oracle derivations of a
// synthetic treebank, evaluates it, and checks that a saved copy parses
// identically.

use greedy_dep::decode::{evaluate_model, parse_corpus};
use greedy_dep::model::{Hyper, Init, Model, Vocab};
use greedy_dep::synth;
use greedy_dep::training::{train_supervised, SupervisedConfig};
use greedy_dep::{PunctConvention, SystemKind};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth::corpus(200, 60, 0, 7);
    let hyper = Hyper {
        dim: 16,
        hidden: 64,
        ..Hyper::default()
    };
    let mut model = Model::new(
        SystemKind::ArcStandard,
        Vocab::build(&corpus.train, 1),
        hyper,
        Init::default(),
    );
    let cfg = SupervisedConfig {
        epochs: 6,
        ..SupervisedConfig::default()
    };
    let losses = train_supervised(&mut model, &corpus.train, &cfg)?;
    for (epoch, loss) in losses.iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", epoch + 1);
    }
    let report = evaluate_model(&model, &corpus.dev, PunctConvention::Ptb)?;
    println!("dev UAS {:.2}  LAS {:.2}", report.uas, report.las);

    let path = std::env::temp_dir().join(format!("greedy-dep-example-{}.model", std::process::id()));
    model.save(&path)?;
    let loaded = Model::load(&path, Some(SystemKind::ArcStandard))?;
    std::fs::remove_file(&path)?;
    assert_eq!(parse_corpus(&model, &corpus.dev)?, parse_corpus(&loaded, &corpus.dev)?);
    println!("saved model reproduces every parse");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
