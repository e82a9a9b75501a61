use std::time::Instant;

use polagree::conditioning::ConditioningMode;
use polagree::corpus::balanced_split;
use polagree::detector::Detector;
use polagree::metrics::{agree, TypedHypothesis};
use polagree::morpho::Lexicon;
use polagree::synth::{Grammar, GroupWeights};
use polagree_nmt::{finetune, pretrain, ModelConfig, TrainConfig, Translator};

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20000);
    let pre_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let ft_epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mode = args.get(4).map(|s| s.parse::<ConditioningMode>().unwrap()).unwrap_or(ConditioningMode::TagEnc);
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let g = Grammar::builtin(&det).unwrap();
    let corpus = g.generate(n, &GroupWeights::Uniform, 1).unwrap();
    let split = balanced_split(&corpus, 20, 1).unwrap();
    let train: Vec<(String, String)> = split.remainder.iter().map(|p| (p.src.clone(), p.tgt.clone())).collect();
    let dev: Vec<(String, String)> = split.dev.iter().map(|p| (p.src.clone(), p.tgt.clone())).collect();
    let cfg = TrainConfig { epochs: pre_epochs, dev_limit: Some(140), ..Default::default() };
    let t = Instant::now();
    let base = pretrain(&ModelConfig::default(), &cfg, &train, &dev).unwrap();
    println!("pretrain {:.1}s vocab {} steps {}", t.elapsed().as_secs_f64(), base.bpe.vocab_size(), base.adam.step);
    let cfg = TrainConfig { epochs: ft_epochs, dev_limit: Some(140), ..Default::default() };
    let t = Instant::now();
    let ft = finetune(&base, mode, &cfg, &split.remainder, &split.dev, &det).unwrap();
    println!("finetune {:.1}s", t.elapsed().as_secs_f64());
    for r in &ft.history {
        println!("{:?}", r);
    }
    let tr = Translator::new(&ft.model, &ft.bpe, ft.mode);
    let t = Instant::now();
    let hyps = tr.greedy_batch(&split.test.iter().map(|p| (p.src.as_str(), p.attrs)).collect::<Vec<_>>());
    println!("greedy test {:.1}s", t.elapsed().as_secs_f64());
    let typed: Vec<TypedHypothesis> = split
        .test
        .iter()
        .zip(&hyps)
        .flat_map(|(p, h)| p.attrs.types().into_iter().map(move |t| TypedHypothesis { hypothesis: h.clone(), requested: t, source: p.src.clone() }))
        .collect();
    println!("test agree {:?}", agree(&typed, &det));
    for (p, h) in split.test.iter().zip(&hyps).take(8) {
        println!("{} | {} | {} | {}", p.src, p.attrs, p.tgt, h);
    }
}
