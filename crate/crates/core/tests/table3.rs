use polagree::attributes::Attribute;
use polagree::detector::detect;
use polagree::morpho::Lexicon;

const ROWS: &str = include_str!("../data/table3.tsv");

#[test]
fn example_pairs_are_annotated_with_evidence() {
    let lex = Lexicon::builtin();
    assert_eq!(ROWS.lines().count(), 14);
    for line in ROWS.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        let (attrs, evidence) = detect(f[0], f[1], &lex);
        for (k, a) in Attribute::ALL.iter().enumerate() {
            let got = attrs.get(*a).map(|t| t.tag().trim_matches(['<', '>']).to_string());
            match f[2 + k] {
                "*" => {}
                "x" => assert_eq!(got, None, "{}: {a:?}", f[1]),
                want => {
                    assert_eq!(got.as_deref(), Some(want), "{}: {a:?}", f[1]);
                    assert!(evidence.iter().any(|e| e.attr.attribute() == *a), "{}: {a:?} without evidence", f[1]);
                }
            }
        }
    }
}
