// Follows a derivation with a PP-attachment mistake and prints, at every
// step, the zero-cost actions and the minimal reachable loss.

use greedy_dep::dynamic_oracle::{action_costs, min_loss, LossMode};
use greedy_dep::transitions::{Action, Configuration, LabelSet, SystemKind, TransitionSystem};
use greedy_dep::{Sentence, Token};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let s = Sentence::new(
        "pp",
        vec![
            Token::new("She", "PRP", 2, "nsubj"),
            Token::new("saw", "VBD", 0, "root"),
            Token::new("stars", "NNS", 2, "dobj"),
            Token::new("with", "IN", 2, "prep"),
            Token::new("binoculars", "NNS", 4, "pobj"),
        ],
    );
    let labels = LabelSet::from_sentences([&s]);
    let system = TransitionSystem::new(SystemKind::ArcStandard, labels.clone());
    let gold = labels.index_tree(&s.gold_tree());
    let l = |name: &str| labels.id(name).expect("label in set");
    // Attaches the PP to "stars" instead of "saw".
    let walk = [
        Action::Shift,
        Action::Shift,
        Action::Left(l("nsubj")),
        Action::Shift,
        Action::Shift,
        Action::Shift,
        Action::Right(l("pobj")),
        Action::Right(l("prep")),
        Action::Right(l("dobj")),
        Action::Right(l("root")),
    ];
    let mut c = Configuration::for_sentence(&s)?;
    for (step, &a) in walk.iter().enumerate() {
        let before = min_loss(&c, &gold, LossMode::Labeled)?;
        let costs = action_costs(&system, &c, &gold, LossMode::Labeled)?;
        let zero: Vec<String> = costs
            .iter()
            .filter(|&&(_, cost)| cost == 0)
            .map(|&(x, _)| system.action_name(x))
            .collect();
        let cost = costs.iter().find(|&&(x, _)| x == a).map_or(0, |&(_, c)| c);
        c = system.apply(&c, a)?;
        let after = min_loss(&c, &gold, LossMode::Labeled)?;
        let mark = if after > before { "  <- decision error" } else { "" };
        println!(
            "{:>2} {:<10} cost {cost}  loss {before}->{after}  zero-cost: {}{mark}",
            step + 1,
            system.action_name(a),
            zero.join(" ")
        );
    }
    let tree = system.extract_indexed(&c)?;
    println!("arc errors: {}", tree.errors_against(&gold, true));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
