//! Parallel corpus ingestion, annotation, per-epoch masking and balanced
//! dev/test construction.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{Attribute, AttributeSet, ContextGroup, SpeakerGender};
use crate::detector::{Detector, Evidence};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("misaligned input: {src} source lines but {tgt} target lines")]
    Misaligned { src: usize, tgt: usize },
    #[error("line {line}: expected `source TAB target`")]
    BadTsv { line: usize },
    #[error("group {group} has {have} pairs, {need} needed")]
    InsufficientGroup { group: String, have: usize, need: usize },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub src: String,
    pub tgt: String,
    pub attrs: AttributeSet,
    pub group: Option<ContextGroup>,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
}

impl AnnotatedPair {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>, attrs: AttributeSet, evidence: Vec<Evidence>) -> Self {
        AnnotatedPair {
            src: src.into(),
            tgt: tgt.into(),
            group: attrs.group(),
            attrs,
            evidence,
        }
    }

    pub fn is_annotated(&self) -> bool {
        !self.attrs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub src: String,
    pub tgt: String,
    pub presented_attrs: AttributeSet,
}

/// Text normalisation applied to both sides before annotation. The shipped
/// rules are the identity.
pub fn normalize(text: &str) -> String {
    text.to_string()
}

/// Reads two aligned one-sentence-per-line files.
pub fn read_parallel(src: impl AsRef<Path>, tgt: impl AsRef<Path>) -> Result<Vec<(String, String)>, CorpusError> {
    let s: Vec<String> = std::fs::read_to_string(src)?.lines().map(str::to_string).collect();
    let t: Vec<String> = std::fs::read_to_string(tgt)?.lines().map(str::to_string).collect();
    if s.len() != t.len() {
        return Err(CorpusError::Misaligned { src: s.len(), tgt: t.len() });
    }
    Ok(s.into_iter().zip(t).collect())
}

/// Reads `source TAB target` lines.
pub fn read_tsv<R: BufRead>(reader: R) -> Result<Vec<(String, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or(CorpusError::BadTsv { line: i + 1 })?;
        out.push((s.to_string(), t.to_string()));
    }
    Ok(out)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Pair counts per group and per evidence rule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsReport {
    pub total: usize,
    pub unannotated: usize,
    pub per_group: BTreeMap<String, usize>,
    /// Pairs by attribute and rule that produced the evidence.
    pub per_rule: BTreeMap<String, usize>,
}

impl CountsReport {
    pub fn from_pairs(pairs: &[AnnotatedPair]) -> Self {
        let mut r = CountsReport {
            total: pairs.len(),
            ..Default::default()
        };
        for g in ContextGroup::all() {
            r.per_group.insert(g.id(), 0);
        }
        for p in pairs {
            match p.group {
                Some(g) => *r.per_group.entry(g.id()).or_default() += 1,
                None => r.unannotated += 1,
            }
            let mut seen = HashSet::new();
            for e in &p.evidence {
                let key = format!("{}\t{}", e.attr.attribute(), e.rule);
                if seen.insert(key.clone()) {
                    *r.per_rule.entry(key).or_default() += 1;
                }
            }
        }
        r
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("group\tcount\n");
        for g in ContextGroup::all() {
            out.push_str(&format!("{}\t{}\n", g.id(), self.per_group.get(&g.id()).unwrap_or(&0)));
        }
        out.push_str(&format!("none\t{}\n", self.unannotated));
        out
    }
}

/// Runs the detector on every pair.
pub fn annotate(pairs: &[(String, String)], detector: &Detector) -> (Vec<AnnotatedPair>, CountsReport) {
    let out: Vec<AnnotatedPair> = pairs
        .iter()
        .map(|(s, t)| {
            let (s, t) = (normalize(s), normalize(t));
            let d = detector.detect(&s, &t);
            AnnotatedPair::new(s, t, d.attrs, d.evidence)
        })
        .collect();
    let report = CountsReport::from_pairs(&out);
    (out, report)
}

/// Like [`annotate`] but for separately read source and target lists.
pub fn annotate_aligned(src: &[String], tgt: &[String], detector: &Detector) -> Result<(Vec<AnnotatedPair>, CountsReport), CorpusError> {
    if src.len() != tgt.len() {
        return Err(CorpusError::Misaligned { src: src.len(), tgt: tgt.len() });
    }
    let pairs: Vec<(String, String)> = src.iter().cloned().zip(tgt.iter().cloned()).collect();
    Ok(annotate(&pairs, detector))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskOptions {
    /// Mask the speaker and interlocutor parts independently instead of the
    /// whole set.
    pub per_part: bool,
}

/// A uniformly random group, with a uniformly optional speaker added to
/// interlocutor groups.
pub fn random_legal_set(rng: &mut impl Rng) -> AttributeSet {
    let groups = ContextGroup::all();
    let g = groups[rng.gen_range(0..groups.len())];
    let mut set = g.attributes();
    if let ContextGroup::Interlocutor(_) = g {
        set.sp_gender = match rng.gen_range(0..3) {
            0 => None,
            1 => Some(SpeakerGender::Feminine),
            _ => Some(SpeakerGender::Masculine),
        };
    }
    set
}

fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(b"maskepch");
    ChaCha8Rng::from_seed(key)
}

/// The per-epoch training stream: half of the annotated pairs lose their
/// annotation, half of the unannotated pairs receive a random legal set.
pub fn mask_for_epoch(pairs: &[AnnotatedPair], epoch: u64, seed: u64) -> Vec<TrainingExample> {
    mask_for_epoch_with(pairs, epoch, seed, MaskOptions::default())
}

pub fn mask_for_epoch_with(pairs: &[AnnotatedPair], epoch: u64, seed: u64, options: MaskOptions) -> Vec<TrainingExample> {
    let mut rng = epoch_rng(seed, epoch);
    let annotated: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].is_annotated()).collect();
    let unannotated: Vec<usize> = (0..pairs.len()).filter(|&i| !pairs[i].is_annotated()).collect();

    let mut presented: Vec<AttributeSet> = pairs.iter().map(|p| p.attrs).collect();
    if options.per_part {
        for part in [Attribute::SpGender, Attribute::IlGender] {
            let chosen: Vec<usize> = annotated.choose_multiple(&mut rng, annotated.len() / 2).copied().collect();
            for i in chosen {
                let a = &mut presented[i];
                if part == Attribute::SpGender {
                    a.sp_gender = None;
                } else {
                    *a = a.speaker_part();
                }
            }
        }
    } else {
        let chosen: Vec<usize> = annotated.choose_multiple(&mut rng, annotated.len() / 2).copied().collect();
        for i in chosen {
            presented[i] = AttributeSet::EMPTY;
        }
    }
    let mut chosen: Vec<usize> = unannotated.choose_multiple(&mut rng, unannotated.len() / 2).copied().collect();
    chosen.sort_unstable();
    for i in chosen {
        presented[i] = random_legal_set(&mut rng);
    }
    pairs
        .iter()
        .zip(presented)
        .map(|(p, a)| TrainingExample {
            src: p.src.clone(),
            tgt: p.tgt.clone(),
            presented_attrs: a,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub dev: Vec<AnnotatedPair>,
    pub test: Vec<AnnotatedPair>,
    pub remainder: Vec<AnnotatedPair>,
}

/// Dev and test sets with `per_group` pairs from each of the 14 groups.
/// Exact duplicates are collapsed first and never cross the split.
pub fn balanced_split(pairs: &[AnnotatedPair], per_group: usize, seed: u64) -> Result<Split, CorpusError> {
    let mut seen = HashSet::new();
    let unique: Vec<usize> = (0..pairs.len())
        .filter(|&i| seen.insert((pairs[i].src.as_str(), pairs[i].tgt.as_str())))
        .collect();
    let mut by_group: BTreeMap<ContextGroup, Vec<usize>> = BTreeMap::new();
    for &i in &unique {
        if let Some(g) = pairs[i].group {
            by_group.entry(g).or_default().push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split::default();
    let mut held: HashSet<(&str, &str)> = HashSet::new();
    for g in ContextGroup::all() {
        let members = by_group.get(&g).map(Vec::as_slice).unwrap_or(&[]);
        if members.len() < 2 * per_group {
            return Err(CorpusError::InsufficientGroup {
                group: g.id(),
                have: members.len(),
                need: 2 * per_group,
            });
        }
        let mut order = members.to_vec();
        order.shuffle(&mut rng);
        for (k, &i) in order[..2 * per_group].iter().enumerate() {
            held.insert((pairs[i].src.as_str(), pairs[i].tgt.as_str()));
            if k < per_group {
                split.dev.push(pairs[i].clone());
            } else {
                split.test.push(pairs[i].clone());
            }
        }
    }
    split.remainder = pairs
        .iter()
        .filter(|p| !held.contains(&(p.src.as_str(), p.tgt.as_str())))
        .cloned()
        .collect();
    Ok(split)
}

/// Keeps only the fields of one attribute.
pub fn isolate_attribute(attrs: &AttributeSet, which: Attribute) -> AttributeSet {
    attrs.isolate(which)
}
