// A non-projective tree: arc-standard and arc-eager have no derivation for
// it, the swap system does.

use greedy_dep::transitions::{Configuration, LabelSet, SystemKind, TransitionSystem};
use greedy_dep::treebank::is_projective;
use greedy_dep::{Sentence, Token};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // "A hearing is scheduled on the issue today": the PP attaches to the
    // noun across the verb.
    let s = Sentence::new(
        "np",
        vec![
            Token::new("A", "DT", 2, "det"),
            Token::new("hearing", "NN", 4, "nsubjpass"),
            Token::new("is", "VBZ", 4, "auxpass"),
            Token::new("scheduled", "VBN", 0, "root"),
            Token::new("on", "IN", 2, "prep"),
            Token::new("the", "DT", 7, "det"),
            Token::new("issue", "NN", 5, "pobj"),
            Token::new("today", "NN", 4, "tmod"),
        ],
    );
    let gold_tree = s.gold_tree();
    println!("projective: {}", is_projective(&gold_tree.heads));
    let labels = LabelSet::from_sentences([&s]);
    for kind in [SystemKind::ArcStandard, SystemKind::ArcEager, SystemKind::SwapStandard] {
        let system = TransitionSystem::new(kind, labels.clone());
        let gold = labels.index_tree(&gold_tree);
        match system.static_oracle(&gold) {
            Err(e) => println!("{kind}: {e}"),
            Ok(actions) => {
                let mut c = Configuration::for_sentence(&s)?;
                for &a in &actions {
                    c = system.apply(&c, a)?;
                }
                assert_eq!(system.extract_tree(&c)?, gold_tree);
                let names: Vec<String> = actions.iter().map(|&a| system.action_name(a)).collect();
                println!("{kind}: {} actions", actions.len());
                println!("  {}", names.join(" "));
            }
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
