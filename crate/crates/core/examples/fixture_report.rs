use polagree::detector::{builtin_fixture, score_fixture};
use polagree::Lexicon;

fn main() {
    let lex = Lexicon::builtin();
    let report = score_fixture(&builtin_fixture(), &lex);
    for s in &report.per_attribute {
        println!("{:?}", s);
    }
    for m in &report.mismatches {
        println!("{} gold={} found={}", m.0, m.1, m.2);
    }
}
