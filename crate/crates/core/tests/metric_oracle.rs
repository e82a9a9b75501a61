use polagree::metrics::{bleu, chrf};
use serde_json::Value;

fn fixture() -> (Vec<String>, Vec<String>, Value) {
    let tsv = include_str!("../data/metric_fixture.tsv");
    let (hyps, refs) = tsv
        .lines()
        .map(|l| {
            let (h, r) = l.split_once('\t').unwrap();
            (h.to_string(), r.to_string())
        })
        .unzip();
    let scores = serde_json::from_str(include_str!("../data/metric_fixture_scores.json")).unwrap();
    (hyps, refs, scores)
}

#[test]
fn corpus_scores_match_frozen_reference_values() {
    let (hyps, refs, frozen) = fixture();
    assert_eq!(hyps.len(), 50);
    let c = chrf(&hyps, &refs).unwrap();
    let b = bleu(&hyps, &refs).unwrap();
    assert!((c - frozen["chrf"].as_f64().unwrap()).abs() <= 0.1, "chrF {c}");
    assert!((b - frozen["bleu"].as_f64().unwrap()).abs() <= 0.1, "BLEU {b}");
    let c10 = chrf(&hyps[..10], &refs[..10]).unwrap();
    let b10 = bleu(&hyps[..10], &refs[..10]).unwrap();
    assert!((c10 - frozen["first10_chrf"].as_f64().unwrap()).abs() <= 0.1, "chrF {c10}");
    assert!((b10 - frozen["first10_bleu"].as_f64().unwrap()).abs() <= 0.1, "BLEU {b10}");
}

#[test]
fn sentence_chrf_matches_frozen_values() {
    let (hyps, refs, frozen) = fixture();
    let expected = frozen["sentence_chrf"].as_array().unwrap();
    for (i, (h, r)) in hyps.iter().zip(&refs).enumerate() {
        let got = chrf(&[h], &[r]).unwrap();
        let want = expected[i].as_f64().unwrap();
        assert!((got - want).abs() <= 1e-6, "pair {i}: {got} vs {want}");
    }
}

#[test]
fn identity_is_exactly_one_hundred() {
    let (_, refs, _) = fixture();
    assert_eq!(chrf(&refs, &refs).unwrap(), 100.0);
    assert_eq!(bleu(&refs, &refs).unwrap(), 100.0);
}
