//! The two test protocols: complete context and isolated attribute.

use std::collections::BTreeMap;

use polagree::attributes::{Attribute, AttributeSet};
use polagree::corpus::AnnotatedPair;
use polagree::detector::Detector;
use polagree::metrics::{agree, ambid, bleu, reverse_set, bootstrap_equivalence, chrf, BootstrapResult, MetricError, ScoreReport, TypedHypothesis};
use serde::{Deserialize, Serialize};

use crate::decode::Translator;
use crate::scalar::Scalar;

/// Hypotheses and scores of one protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub report: ScoreReport,
    pub hypotheses: Vec<String>,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEvaluation {
    pub mode: String,
    pub isolated: ProtocolResult,
    pub complete: ProtocolResult,
}

/// Test cases of the isolated protocol: each pair once per attribute it
/// specifies, revealing only that attribute.
pub fn isolated_cases(test: &[AnnotatedPair]) -> Vec<(usize, AttributeSet)> {
    let mut out = Vec::new();
    for (i, p) in test.iter().enumerate() {
        for a in Attribute::ALL {
            let iso = p.attrs.isolate(a);
            if !iso.is_empty() {
                out.push((i, iso));
            }
        }
    }
    out
}

/// The attribute set paired with the `i`th ambivalent source.
pub fn ambivalent_attrs(i: usize) -> AttributeSet {
    let sets: Vec<AttributeSet> = AttributeSet::all_legal().into_iter().filter(|a| !a.is_empty()).collect();
    sets[i % sets.len()]
}

fn score(
    items: &[(&str, AttributeSet)],
    hyps: Vec<String>,
    refs: Vec<String>,
    keys: &[String],
    detector: &Detector<'_>,
) -> Result<ProtocolResult, MetricError> {
    let typed: Vec<TypedHypothesis> = items
        .iter()
        .zip(&hyps)
        .flat_map(|((src, attrs), h)| {
            attrs.types().into_iter().map(move |t| TypedHypothesis {
                hypothesis: h.clone(),
                requested: t,
                source: src.to_string(),
            })
        })
        .collect();
    let mut grouped: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
    for ((k, h), r) in keys.iter().zip(&hyps).zip(&refs) {
        let e = grouped.entry(k).or_default();
        e.0.push(h);
        e.1.push(r);
    }
    let mut per_group = BTreeMap::new();
    for (k, (h, r)) in grouped {
        per_group.insert(k.to_string(), chrf(&h, &r)?);
    }
    Ok(ProtocolResult {
        report: ScoreReport {
            chrf: chrf(&hyps, &refs)?,
            bleu: bleu(&hyps, &refs)?,
            agree: agree(&typed, detector),
            ambid: None,
            per_group,
        },
        hypotheses: hyps,
        references: refs,
    })
}

/// Scores one translator under both protocols, plus AmbID on `ambivalent`
/// when it is non-empty. Complete-context chrF is broken down per context
/// group; isolated chrF per revealed type.
pub fn evaluate<T: Scalar>(
    translator: &Translator<'_, T>,
    test: &[AnnotatedPair],
    ambivalent: &[String],
    detector: &Detector<'_>,
    beam: usize,
) -> Result<ModeEvaluation, MetricError> {
    let translate = |items: &[(&str, AttributeSet)]| -> Vec<String> {
        translator.translate_batch(items, beam).into_iter().map(|h| h.text).collect()
    };

    let items: Vec<(&str, AttributeSet)> = test.iter().map(|p| (p.src.as_str(), p.attrs)).collect();
    let keys: Vec<String> = test.iter().map(|p| p.group.map_or("none".to_string(), |g| g.id())).collect();
    let refs: Vec<String> = test.iter().map(|p| p.tgt.clone()).collect();
    let mut complete = score(&items, translate(&items), refs, &keys, detector)?;

    let cases = isolated_cases(test);
    let items: Vec<(&str, AttributeSet)> = cases.iter().map(|(i, a)| (test[*i].src.as_str(), *a)).collect();
    let keys: Vec<String> = cases.iter().map(|(_, a)| a.types()[0].tag().to_string()).collect();
    let refs: Vec<String> = cases.iter().map(|(i, _)| test[*i].tgt.clone()).collect();
    let isolated = score(&items, translate(&items), refs, &keys, detector)?;

    if !ambivalent.is_empty() {
        complete.report.ambid = Some(ambid_batched(translator, ambivalent, beam)?);
    }
    Ok(ModeEvaluation {
        mode: translator.mode.name().to_string(),
        isolated,
        complete,
    })
}

/// AmbID with a different fully specified set per source, cycling through
/// the legal non-empty sets.
pub fn ambid_batched<T: Scalar>(translator: &Translator<'_, T>, sources: &[String], beam: usize) -> Result<f64, MetricError> {
    let forward: Vec<(&str, AttributeSet)> = sources.iter().enumerate().map(|(i, s)| (s.as_str(), ambivalent_attrs(i))).collect();
    let backward: Vec<(&str, AttributeSet)> =
        forward.iter().map(|(s, a)| (*s, reverse_set(a))).collect();
    let f: Vec<String> = translator.translate_batch(&forward, beam).into_iter().map(|h| h.text).collect();
    let b: Vec<String> = translator.translate_batch(&backward, beam).into_iter().map(|h| h.text).collect();
    chrf(&f, &b)
}

/// AmbID through the per-sentence metric interface with one set for all
/// sources.
pub fn ambid_single<T: Scalar>(translator: &Translator<'_, T>, sources: &[String], attrs: &AttributeSet, beam: usize) -> Result<f64, MetricError> {
    ambid(|s, a| translator.translate(s, a, beam).text, sources, attrs)
}

/// Bootstrap tie sets over several systems' hypotheses for shared references.
pub fn tie_set(systems: &BTreeMap<String, Vec<String>>, refs: &[String], n: usize, seed: u64) -> Result<BootstrapResult, MetricError> {
    bootstrap_equivalence(systems, refs, n, 0.05, seed)
}
