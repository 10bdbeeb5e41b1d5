// Walks the arc-standard static oracle through a short sentence and prints
// every configuration along the way.

use greedy_dep::transitions::{Configuration, LabelSet, SystemKind, TransitionSystem};
use greedy_dep::{Sentence, Token};

fn sentence() -> Sentence {
    Sentence::new(
        "example",
        vec![
            Token::new("waves", "NNS", 2, "nsubj"),
            Token::new("hit", "VBD", 0, "root"),
            Token::new("stocks", "NNS", 2, "dobj"),
            Token::new("themselves", "PRP", 3, "dep"),
            Token::new("on", "IN", 2, "prep"),
            Token::new("the", "DT", 8, "det"),
            Token::new("Big", "NNP", 8, "nn"),
            Token::new("Board", "NNP", 5, "pobj"),
        ],
    )
}

fn show(c: &Configuration, s: &Sentence) -> String {
    let word = |i: usize| {
        if i == 0 {
            "ROOT".to_owned()
        } else {
            s.token(i).form.clone()
        }
    };
    let stack: Vec<String> = c.stack().iter().map(|&i| word(i)).collect();
    let buffer: Vec<String> = c.buffer().map(word).collect();
    format!("[{}] | [{}]", stack.join(" "), buffer.join(" "))
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let s = sentence();
    let labels = LabelSet::from_sentences([&s]);
    let system = TransitionSystem::new(SystemKind::ArcStandard, labels);
    let gold = system.labels().index_tree(&s.gold_tree());
    let actions = system.static_oracle(&gold)?;

    let mut c = Configuration::for_sentence(&s)?;
    println!("{:>3}  {:<14} {}", 0, "", show(&c, &s));
    for (i, &a) in actions.iter().enumerate() {
        c = system.apply(&c, a)?;
        println!("{:>3}  {:<14} {}", i + 1, system.action_name(a), show(&c, &s));
    }
    let tree = system.extract_tree(&c)?;
    assert_eq!(tree, s.gold_tree());
    println!("{} actions for {} words", actions.len(), s.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
