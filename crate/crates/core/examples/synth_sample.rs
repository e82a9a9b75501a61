use polagree::detector::Detector;
use polagree::morpho::Lexicon;
use polagree::synth::{Grammar, GroupWeights};

fn main() {
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let g = Grammar::builtin(&det).unwrap();
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let pairs = g.generate(n, &GroupWeights::Uniform, 7).unwrap();
    let mut bad = 0;
    for p in &pairs {
        let d = det.detect(&p.src, &p.tgt).attrs;
        if d != p.attrs {
            bad += 1;
            if bad < 20 {
                println!("MISMATCH {} | {} | {} vs {}", p.src, p.tgt, p.attrs, d);
            }
        } else if n <= 50 {
            println!("{} | {} | {}", p.src, p.tgt, p.attrs);
        }
    }
    for (s, t) in g.generate_ambivalent_pairs(n.min(10), 3) {
        println!("AMB {s} | {t} | {}", det.detect(&s, &t).attrs);
    }
    println!("mismatches {bad}/{n}");
}
