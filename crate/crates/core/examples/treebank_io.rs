// Reads CoNLL-U text, scores a perturbed copy against it, and writes the
// result back out.

use std::io::Cursor;

use greedy_dep::decode::evaluate;
use greedy_dep::treebank::{read_conll, write_conll_to, Format};
use greedy_dep::PunctConvention;

const TEXT: &str = "# sent_id = s1
1\tDogs\tdog\tNOUN\tNNS\t_\t2\tnsubj\t_\t_
2\tbark\tbark\tVERB\tVBP\t_\t0\troot\t_\t_
3\t.\t.\tPUNCT\t.\t_\t2\tpunct\t_\t_

# sent_id = s2
1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_
2\tcat\tcat\tNOUN\tNN\t_\t3\tnsubj\t_\t_
3\tsleeps\tsleep\tVERB\tVBZ\t_\t0\troot\t_\t_
4\tsoundly\tsoundly\tADV\tRB\t_\t3\tadvmod\t_\t_
5\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let gold = read_conll(Cursor::new(TEXT), Format::ConllU)?;
    let mut system: Vec<_> = gold.iter().map(|s| s.gold_tree()).collect();
    // One wrong head and one wrong label.
    system[1].heads[3] = 2;
    system[1].labels[1] = "dobj".into();
    for punct in [PunctConvention::Ptb, PunctConvention::Ud] {
        let report = evaluate(&gold, &system, punct)?;
        println!(
            "{punct}: UAS {:.2} LAS {:.2} over {} tokens",
            report.uas, report.las, report.token_count
        );
    }
    let mut out = Vec::new();
    write_conll_to(&mut out, &gold, &system, Format::ConllU)?;
    print!("{}", String::from_utf8(out)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
