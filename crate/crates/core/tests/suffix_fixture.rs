use polagree::morpho::{analyze_token, MorphFeatures};
use polagree::Lexicon;

#[test]
fn suffix_rules_match_the_curated_forms() {
    let lex = Lexicon::builtin();
    let rows: Vec<(&str, MorphFeatures)> = include_str!("../data/suffix_fixture.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let (s, f) = l.split_once('\t').unwrap();
            (s, MorphFeatures::parse_feature_string(f).unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 100);
    let mut misses = Vec::new();
    for (surface, gold) in &rows {
        assert!(lex.lookup(surface).is_none(), "{surface} is in the lexicon");
        let got = *analyze_token(surface, &lex).first();
        if got != *gold {
            misses.push(format!("{surface}: {got} vs {gold}"));
        }
    }
    assert!(misses.len() <= 5, "{misses:#?}");
}

#[test]
fn unknown_words_without_a_matching_suffix_fall_back() {
    let lex = Lexicon::builtin();
    let t = analyze_token("stół", &lex);
    assert_eq!(t.candidates, vec![MorphFeatures::NONE]);
}
