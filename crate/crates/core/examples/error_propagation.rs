// Repairs the parses of a supervised model one decision at a time and
// prints how many of its decision errors were caused by earlier ones.

use greedy_dep::analysis::{aggregate, analyze_corpus};
use greedy_dep::dynamic_oracle::LossMode;
use greedy_dep::model::{Hyper, Init, Model, Vocab};
use greedy_dep::synth;
use greedy_dep::training::{train_supervised, SupervisedConfig};
use greedy_dep::SystemKind;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth::corpus(200, 0, 80, 5);
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
        epochs: 4,
        ..SupervisedConfig::default()
    };
    train_supervised(&mut model, &corpus.train, &cfg)?;

    let (records, skipped) = analyze_corpus(&model, &corpus.test, None, LossMode::Labeled)?;
    println!("analyzed {} sentences, skipped {skipped} non-projective", records.len());
    let worst = records
        .iter()
        .max_by_key(|r| r.original_decision_errors)
        .expect("some records");
    println!(
        "hardest sentence {}: {} decision errors, remaining per pass {:?}",
        worst.id, worst.original_decision_errors, worst.remaining
    );
    println!();
    println!("{}", aggregate(&records));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
