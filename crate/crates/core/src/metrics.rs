//! Translation quality metrics, the Agree score, AmbID and paired bootstrap
//! resampling.
//!
//! [`chrf`] is chrF++ (character 6-grams, word 2-grams, β = 2) and [`bleu`] is
//! 4-gram corpus BLEU over the `13a` tokenization without smoothing. Both
//! follow the conventions of the sacreBLEU reference scorer.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeSet, AttributeType};
use crate::detector::{Agreement, Detector};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("no segments to score")]
    Empty,
}

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
pub const BETA: f64 = 2.0;
pub const BLEU_ORDER: usize = 4;

fn check_lengths(hyps: usize, refs: usize) -> Result<(), MetricError> {
    if hyps != refs {
        return Err(MetricError::LengthMismatch { hyps, refs });
    }
    if hyps == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn count_ngrams<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut out = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// (hypothesis total, reference total, clipped matches).
fn match_stats<T: std::hash::Hash + Eq + Clone>(hyp: &[T], r: &[T], n: usize) -> [u64; 3] {
    let h = count_ngrams(hyp, n);
    let rc = count_ngrams(r, n);
    let total_h: usize = h.values().sum();
    let total_r: usize = rc.values().sum();
    let matches: usize = h
        .iter()
        .map(|(k, c)| (*c).min(rc.get(k).copied().unwrap_or(0)))
        .sum();
    [total_h as u64, total_r as u64, matches as u64]
}

const CHRF_PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Whitespace split with one leading or trailing punctuation mark peeled off.
fn chrf_words(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for w in s.split_whitespace() {
        let mut chars = w.chars();
        let first = chars.next().unwrap();
        if chars.next().is_none() {
            out.push(w);
            continue;
        }
        let last = w.chars().next_back().unwrap();
        if CHRF_PUNCT.contains(last) {
            let cut = w.len() - last.len_utf8();
            out.push(&w[..cut]);
            out.push(&w[cut..]);
        } else if CHRF_PUNCT.contains(first) {
            let cut = first.len_utf8();
            out.push(&w[..cut]);
            out.push(&w[cut..]);
        } else {
            out.push(w);
        }
    }
    out
}

/// Sufficient statistics of one segment: a `[hyp, ref, match]` triple per
/// order, character orders first.
pub type ChrfStats = [[u64; 3]; CHAR_ORDER + WORD_ORDER];

pub fn chrf_segment_stats(hyp: &str, reference: &str) -> ChrfStats {
    let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw = chrf_words(hyp);
    let rw = chrf_words(reference);
    let mut out = [[0u64; 3]; CHAR_ORDER + WORD_ORDER];
    for n in 1..=CHAR_ORDER {
        out[n - 1] = match_stats(&hc, &rc, n);
    }
    for n in 1..=WORD_ORDER {
        out[CHAR_ORDER + n - 1] = match_stats(&hw, &rw, n);
    }
    out
}

/// chrF++ from summed statistics: precision and recall are averaged over the
/// orders present on both sides, then combined into an F-β score.
pub fn chrf_from_stats(stats: &ChrfStats) -> f64 {
    let factor = BETA * BETA;
    let (mut avg_p, mut avg_r, mut effective) = (0.0, 0.0, 0usize);
    for &[h, r, m] in stats {
        if h > 0 && r > 0 {
            avg_p += m as f64 / h as f64;
            avg_r += m as f64 / r as f64;
            effective += 1;
        }
    }
    if effective == 0 {
        return 0.0;
    }
    avg_p /= effective as f64;
    avg_r /= effective as f64;
    if avg_p + avg_r == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + factor) * avg_p * avg_r / (factor * avg_p + avg_r)
}

fn add_stats(acc: &mut ChrfStats, s: &ChrfStats) {
    for (a, b) in acc.iter_mut().zip(s) {
        for k in 0..3 {
            a[k] += b[k];
        }
    }
}

/// Corpus-level chrF++ in [0, 100].
pub fn chrf<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<f64, MetricError> {
    check_lengths(hyps.len(), refs.len())?;
    let mut total = [[0u64; 3]; CHAR_ORDER + WORD_ORDER];
    for (h, r) in hyps.iter().zip(refs) {
        add_stats(&mut total, &chrf_segment_stats(h.as_ref(), r.as_ref()));
    }
    Ok(chrf_from_stats(&total))
}

fn regexes_13a() -> &'static [(Regex, &'static str); 4] {
    static RE: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            (Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").unwrap(), " $1 "),
            (Regex::new(r"([^0-9])([\.,])").unwrap(), "$1 $2 "),
            (Regex::new(r"([\.,])([^0-9])").unwrap(), " $1 $2"),
            (Regex::new(r"([0-9])(-)").unwrap(), "$1 $2 "),
        ]
    })
}

/// The `13a` tokenizer used for BLEU.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if s.contains('&') {
        s = s
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut s = format!(" {s} ");
    for (re, rep) in regexes_13a() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().map(str::to_string).collect()
}

/// Corpus BLEU in [0, 100].
pub fn bleu<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<f64, MetricError> {
    check_lengths(hyps.len(), refs.len())?;
    let mut correct = [0u64; BLEU_ORDER];
    let mut total = [0u64; BLEU_ORDER];
    let (mut sys_len, mut ref_len) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        let ht = tokenize_13a(h.as_ref());
        let rt = tokenize_13a(r.as_ref());
        sys_len += ht.len() as u64;
        ref_len += rt.len() as u64;
        for n in 1..=BLEU_ORDER {
            let [th, _, m] = match_stats(&ht, &rt, n);
            total[n - 1] += th;
            correct[n - 1] += m;
        }
    }
    if sys_len == 0 || correct.iter().zip(&total).any(|(c, t)| *t == 0 || *c == 0) {
        return Ok(0.0);
    }
    let log_mean = (0..BLEU_ORDER)
        .map(|n| (correct[n] as f64 / total[n] as f64).ln())
        .sum::<f64>()
        / BLEU_ORDER as f64;
    let bp = if sys_len < ref_len {
        (1.0 - ref_len as f64 / sys_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * bp * log_mean.exp())
}

/// Maps each present field through [`AttributeType::reverse`].
pub fn reverse_set(attrs: &AttributeSet) -> AttributeSet {
    let mut out = AttributeSet::EMPTY;
    for t in attrs.types() {
        out.insert(t.reverse());
    }
    out
}

/// Counts of agreement outcomes over a hypothesis list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreeCounts {
    pub agrees: usize,
    pub contradicts: usize,
    pub unmarked: usize,
}

impl AgreeCounts {
    pub fn push(&mut self, a: Agreement) {
        match a {
            Agreement::Agrees => self.agrees += 1,
            Agreement::Contradicts => self.contradicts += 1,
            Agreement::Unmarked => self.unmarked += 1,
        }
    }

    /// Agreed over agreed plus contradicted, as a percentage; `None` when no
    /// hypothesis is marked either way.
    pub fn score(&self) -> Option<f64> {
        let denom = self.agrees + self.contradicts;
        (denom > 0).then(|| 100.0 * self.agrees as f64 / denom as f64)
    }
}

/// One hypothesis produced under a requested type, with its English source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedHypothesis {
    pub hypothesis: String,
    pub requested: AttributeType,
    pub source: String,
}

pub fn agree_counts(hyps: &[TypedHypothesis], detector: &Detector) -> AgreeCounts {
    let mut counts = AgreeCounts::default();
    for h in hyps {
        counts.push(detector.agree_check(&h.hypothesis, h.requested, &h.source));
    }
    counts
}

/// The Agree score; `None` means not applicable.
pub fn agree(hyps: &[TypedHypothesis], detector: &Detector) -> Option<f64> {
    agree_counts(hyps, detector).score()
}

/// Translates each ambivalent source under `attrs` and under its reverse and
/// scores the first list against the second.
pub fn ambid<F>(mut translate: F, sources: &[String], attrs: &AttributeSet) -> Result<f64, MetricError>
where
    F: FnMut(&str, &AttributeSet) -> String,
{
    let rev = reverse_set(attrs);
    let forward: Vec<String> = sources.iter().map(|s| translate(s, attrs)).collect();
    let backward: Vec<String> = sources.iter().map(|s| translate(s, &rev)).collect();
    chrf(&forward, &backward)
}

/// Result of paired bootstrap resampling on chrF++.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub best: String,
    pub scores: BTreeMap<String, f64>,
    /// Fraction of resamples in which each system scored at least as high as
    /// the best system.
    pub win_rate: BTreeMap<String, f64>,
    pub tied: Vec<String>,
}

/// Paired bootstrap over sentence indices: a system is tied with the best
/// when it scores at least as high as the best in more than `alpha` of the
/// resamples. The best system is always in its own tie set.
pub fn bootstrap_equivalence<R: AsRef<str>>(
    hyp_sets: &BTreeMap<String, Vec<String>>,
    refs: &[R],
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapResult, MetricError> {
    let mut stats: BTreeMap<&str, Vec<ChrfStats>> = BTreeMap::new();
    let mut scores = BTreeMap::new();
    for (name, hyps) in hyp_sets {
        check_lengths(hyps.len(), refs.len())?;
        let seg: Vec<ChrfStats> = hyps
            .iter()
            .zip(refs)
            .map(|(h, r)| chrf_segment_stats(h, r.as_ref()))
            .collect();
        let mut total = [[0u64; 3]; CHAR_ORDER + WORD_ORDER];
        seg.iter().for_each(|s| add_stats(&mut total, s));
        scores.insert(name.clone(), chrf_from_stats(&total));
        stats.insert(name.as_str(), seg);
    }
    let best = scores
        .iter()
        .fold(None::<(&String, f64)>, |acc, (k, v)| match acc {
            Some((_, bv)) if bv >= *v => acc,
            _ => Some((k, *v)),
        })
        .map(|(k, _)| k.clone())
        .ok_or(MetricError::Empty)?;

    let n = refs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins: BTreeMap<&str, usize> = stats.keys().map(|k| (*k, 0)).collect();
    let mut sample = vec![0usize; n];
    for _ in 0..n_resamples {
        sample.iter_mut().for_each(|i| *i = rng.gen_range(0..n));
        let resampled: BTreeMap<&str, f64> = stats
            .iter()
            .map(|(name, seg)| {
                let mut total = [[0u64; 3]; CHAR_ORDER + WORD_ORDER];
                sample.iter().for_each(|&i| add_stats(&mut total, &seg[i]));
                (*name, chrf_from_stats(&total))
            })
            .collect();
        let best_score = resampled[best.as_str()];
        for (name, s) in &resampled {
            if *s >= best_score {
                *wins.get_mut(name).unwrap() += 1;
            }
        }
    }
    let win_rate: BTreeMap<String, f64> = wins
        .iter()
        .map(|(k, w)| (k.to_string(), *w as f64 / n_resamples.max(1) as f64))
        .collect();
    let tied = win_rate
        .iter()
        .filter(|(k, r)| **k == best || **r > alpha)
        .map(|(k, _)| k.clone())
        .collect();
    Ok(BootstrapResult {
        best,
        scores,
        win_rate,
        tied,
    })
}

/// Scores of one system under one evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub chrf: f64,
    pub bleu: f64,
    /// `None` when no hypothesis carried marking of the requested types.
    pub agree: Option<f64>,
    pub ambid: Option<f64>,
    pub per_group: BTreeMap<String, f64>,
}

impl ScoreReport {
    pub fn is_within_ranges(&self) -> bool {
        let unit = |x: f64| (0.0..=100.0).contains(&x);
        unit(self.chrf)
            && unit(self.bleu)
            && self.agree.is_none_or(unit)
            && self.ambid.is_none_or(unit)
            && self.per_group.values().all(|v| unit(*v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morpho::Lexicon;

    #[test]
    fn identity_scores_one_hundred() {
        let s = vec!["Jestem amatorką.".to_string(), "Mylą się państwo.".to_string()];
        assert_eq!(chrf(&s, &s).unwrap(), 100.0);
        assert_eq!(bleu(&s, &s).unwrap(), 100.0);
    }

    #[test]
    fn disjoint_scores_zero() {
        assert_eq!(chrf(&["abc"], &["xyz"]).unwrap(), 0.0);
        assert_eq!(bleu(&["abc def"], &["xyz uvw"]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert_eq!(
            chrf(&["a"], &["a", "b"]),
            Err(MetricError::LengthMismatch { hyps: 1, refs: 2 })
        );
        assert_eq!(bleu::<&str, &str>(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn word_split_peels_one_mark() {
        assert_eq!(chrf_words("Hej, (ty) !"), vec!["Hej", ",", "(ty", ")", "!"]);
        assert_eq!(chrf_words("\"cześć"), vec!["\"", "cześć"]);
    }

    #[test]
    fn tokenizer_13a_splits_punctuation_but_not_numbers() {
        assert_eq!(tokenize_13a("Hello, world."), vec!["Hello", ",", "world", "."]);
        assert_eq!(tokenize_13a("3.14 and 1,000"), vec!["3.14", "and", "1,000"]);
        assert_eq!(tokenize_13a("Pete'a?"), vec!["Pete'a", "?"]);
        assert_eq!(tokenize_13a("a &amp; b"), vec!["a", "&", "b"]);
        assert_eq!(tokenize_13a("10-20"), vec!["10", "-", "20"]);
    }

    #[test]
    fn agree_formula() {
        let mut c = AgreeCounts::default();
        for a in [Agreement::Agrees; 3] {
            c.push(a);
        }
        c.push(Agreement::Contradicts);
        for _ in 0..6 {
            c.push(Agreement::Unmarked);
        }
        assert_eq!(c.score(), Some(75.0));
        assert_eq!(AgreeCounts { unmarked: 4, ..Default::default() }.score(), None);
        assert_eq!(AgreeCounts { agrees: 2, ..Default::default() }.score(), Some(100.0));
    }

    #[test]
    fn agree_through_the_detector() {
        let lex = Lexicon::builtin();
        let det = Detector::new(&lex);
        let h = |hyp: &str, t| TypedHypothesis {
            hypothesis: hyp.to_string(),
            requested: t,
            source: String::new(),
        };
        let hyps = vec![
            h("Jestem amatorką.", AttributeType::SpFeminine),
            h("Byłam zmęczona.", AttributeType::SpFeminine),
            h("Byłem zmęczony.", AttributeType::SpFeminine),
            h("Niebo jest niebieskie.", AttributeType::SpFeminine),
        ];
        let counts = agree_counts(&hyps, &det);
        assert_eq!(counts, AgreeCounts { agrees: 2, contradicts: 1, unmarked: 1 });
    }

    #[test]
    fn reverse_set_examples() {
        let p = |s: &str| AttributeSet::parse_list(s).unwrap();
        assert_eq!(reverse_set(&p("il:masculine singular formal")), p("il:feminine plural informal"));
        assert_eq!(reverse_set(&p("il:mixed plural formal")), p("il:feminine singular informal"));
        assert_eq!(reverse_set(&AttributeSet::EMPTY), AttributeSet::EMPTY);
    }

    #[test]
    fn ambid_of_attribute_blind_and_echoing_translators() {
        let srcs: Vec<String> = vec!["The sky is blue.".into(), "The dog was old.".into()];
        let attrs = AttributeSet::parse_list("sp:feminine il:feminine singular informal").unwrap();
        assert_eq!(ambid(|s, _| s.to_uppercase(), &srcs, &attrs).unwrap(), 100.0);
        let echo = ambid(|s, a| format!("{s} {a}"), &srcs, &attrs).unwrap();
        assert!(echo < 100.0);
    }

    #[test]
    fn bootstrap_ties() {
        let refs: Vec<String> = (0..30).map(|i| format!("zdanie numer {i} jest dobre")).collect();
        let mut sets = BTreeMap::new();
        sets.insert("a".to_string(), refs.clone());
        sets.insert("b".to_string(), refs.clone());
        let r = bootstrap_equivalence(&sets, &refs, 1000, 0.05, 1).unwrap();
        assert_eq!(r.tied, vec!["a".to_string(), "b".to_string()]);

        let mut sets = BTreeMap::new();
        sets.insert("good".to_string(), refs.clone());
        sets.insert("empty".to_string(), vec![String::new(); refs.len()]);
        let r = bootstrap_equivalence(&sets, &refs, 1000, 0.05, 1).unwrap();
        assert_eq!(r.best, "good");
        assert_eq!(r.tied, vec!["good".to_string()]);
    }

    #[test]
    fn reports_check_ranges() {
        let mut r = ScoreReport {
            chrf: 50.0,
            bleu: 20.0,
            agree: None,
            ambid: Some(100.0),
            per_group: BTreeMap::new(),
        };
        assert!(r.is_within_ranges());
        r.agree = Some(101.0);
        assert!(!r.is_within_ranges());
    }
}
