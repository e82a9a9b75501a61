use polagree::attributes::ContextGroup;
use polagree::detector::Detector;
use polagree::synth::{Grammar, GroupWeights};
use polagree::Lexicon;

fn group_counts(weights: &GroupWeights, n: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let g = Grammar::builtin(&det).unwrap();
    let pairs = g.generate(n, weights, seed).unwrap();
    let mut counts = vec![0usize; ContextGroup::COUNT];
    for p in &pairs {
        assert_eq!(det.detect(&p.src, &p.tgt).attrs, p.attrs, "{} | {}", p.src, p.tgt);
        counts[p.group.unwrap().index()] += 1;
    }
    (weights.probabilities().unwrap(), counts)
}

#[test]
fn uniform_groups_within_three_sigma() {
    let n = 14_000;
    let (p, counts) = group_counts(&GroupWeights::Uniform, n, 21);
    for (pi, c) in p.iter().zip(&counts) {
        let mean = n as f64 * pi;
        let sd = (n as f64 * pi * (1.0 - pi)).sqrt();
        assert!((*c as f64 - mean).abs() <= 3.0 * sd, "{counts:?}");
    }
}

fn chi_square(p: &[f64], counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    p.iter()
        .zip(counts)
        .map(|(pi, &c)| {
            let e = n as f64 * pi;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[test]
fn paper_shape_frequencies_pass_chi_square() {
    let (p, counts) = group_counts(&GroupWeights::PaperShape, 20_000, 1);
    let chi2 = chi_square(&p, &counts);
    // Upper 1% point of chi-square with 13 degrees of freedom.
    assert!(chi2 < 27.688, "chi2 {chi2} counts {counts:?}");
}

#[test]
fn chi_square_statistic_averages_near_its_degrees_of_freedom() {
    let seeds = 10u64..30;
    let total: f64 = seeds
        .clone()
        .map(|s| {
            let (p, counts) = group_counts(&GroupWeights::PaperShape, 10_000, s);
            chi_square(&p, &counts)
        })
        .sum();
    let mean = total / (seeds.end - seeds.start) as f64;
    // The mean of 20 draws has standard deviation sqrt(26 / 20) around 13.
    assert!((mean - 13.0).abs() < 4.0 * (26.0f64 / 20.0).sqrt(), "mean {mean}");
}

#[test]
fn ambivalent_gold_targets_are_unmarked() {
    let lex = Lexicon::builtin();
    let det = Detector::new(&lex);
    let g = Grammar::builtin(&det).unwrap();
    let pairs = g.generate_ambivalent_pairs(1000, 9);
    assert_eq!(pairs, g.generate_ambivalent_pairs(1000, 9));
    let excluded = &g.file().excluded_source_tokens;
    for (s, t) in &pairs {
        assert!(det.detect(s, t).attrs.is_empty(), "{s} | {t}");
        let lower = s.to_lowercase();
        assert!(lower.split(|c: char| !c.is_alphanumeric()).all(|w| !excluded.iter().any(|e| e == w)), "{s}");
    }
}
