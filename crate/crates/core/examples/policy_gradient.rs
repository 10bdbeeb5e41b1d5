// Fine-tunes one supervised parser with each policy-gradient strategy and
// reports dev LAS before and after.

use greedy_dep::decode::evaluate_model;
use greedy_dep::model::{Hyper, Init, Model, Vocab};
use greedy_dep::synth;
use greedy_dep::training::{train_rl, train_supervised, RlConfig, Strategy, SupervisedConfig};
use greedy_dep::{PunctConvention, SystemKind};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth::corpus(200, 60, 0, 3);
    let hyper = Hyper {
        dim: 16,
        hidden: 64,
        ..Hyper::default()
    };
    let mut sl = Model::new(
        SystemKind::ArcStandard,
        Vocab::build(&corpus.train, 1),
        hyper,
        Init::default(),
    );
    let cfg = SupervisedConfig {
        epochs: 6,
        ..SupervisedConfig::default()
    };
    train_supervised(&mut sl, &corpus.train, &cfg)?;
    let base = evaluate_model(&sl, &corpus.dev, PunctConvention::Ptb)?;
    println!("{:<10} dev LAS {:.2}", "sl", base.las);

    sl.hyper.learning_rate = 0.001;
    for strategy in [
        Strategy::Reinforce,
        Strategy::RlOracle,
        Strategy::RlRandom,
        Strategy::RlMemory,
    ] {
        let cfg = RlConfig {
            strategy,
            k: 4,
            batch_size: 16,
            updates: 10,
            eval_every: 5,
            ..RlConfig::default()
        };
        let out = train_rl(sl.clone(), &corpus.train, &corpus.dev, &cfg, None)?;
        let last = out.log.last().expect("at least one update");
        println!(
            "{:<10} dev LAS {:.2} (update {})  mean reward {:.2}",
            strategy.name(),
            out.best_dev_las.unwrap_or(f64::NAN),
            out.best_update,
            last.mean_reward
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
