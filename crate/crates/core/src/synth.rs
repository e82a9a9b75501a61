//! Procedural English to Polish corpus with gold attribute labels.
//!
//! A [`Grammar`] holds slot lexicons and templates. Each template has one
//! English pattern and one Polish pattern per attribute set; placeholders are
//! `{slot.key}`, `{slot.key|cap}` or `{slot.prefix@other}`, the last reading
//! the key `prefix + other.agr` so that a word agrees with another slot.
//! Loading runs the detector over every template variant and lexeme and
//! rejects the grammar if any rendering fails to detect back to its label.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::{AttributeSet, ContextGroup, InterlocutorRow, SpeakerGender};
use crate::corpus::AnnotatedPair;
use crate::detector::Detector;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("grammar json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("template {template}: {message}")]
    Template { template: String, message: String },
    #[error("template {template}: `{target}` detects as {found}, labelled {expected}")]
    ClosedLoop {
        template: String,
        target: String,
        expected: String,
        found: String,
    },
    #[error("no template covers group {0}")]
    Uncovered(String),
    #[error("bad weights: {0}")]
    Weights(String),
}

pub type Lexeme = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub slots: BTreeMap<String, String>,
    pub en: String,
    /// Attribute-set string to Polish pattern.
    pub targets: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbivalentTemplate {
    pub id: String,
    pub slots: BTreeMap<String, String>,
    pub en: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarFile {
    pub lexicon: BTreeMap<String, Vec<Lexeme>>,
    pub templates: Vec<Template>,
    pub ambivalent: Vec<AmbivalentTemplate>,
    #[serde(default)]
    pub excluded_source_tokens: Vec<String>,
}

/// Sampling weights over the 14 context groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupWeights {
    Uniform,
    /// Proportional to the training-set counts of the real corpus.
    PaperShape,
    /// Keyed by [`ContextGroup::id`]; missing groups get zero.
    Custom(BTreeMap<String, f64>),
}

impl GroupWeights {
    pub fn weights(&self) -> Result<Vec<f64>, SynthError> {
        let w = match self {
            GroupWeights::Uniform => vec![1.0; ContextGroup::COUNT],
            GroupWeights::PaperShape => ContextGroup::all().iter().map(paper_count).collect(),
            GroupWeights::Custom(m) => ContextGroup::all()
                .iter()
                .map(|g| m.get(&g.id()).copied().unwrap_or(0.0))
                .collect(),
        };
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(SynthError::Weights(format!("{w:?}")));
        }
        Ok(w)
    }

    pub fn probabilities(&self) -> Result<Vec<f64>, SynthError> {
        let w = self.weights()?;
        let s: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / s).collect())
    }
}

/// Training pairs per group in the real corpus, in thousands.
fn paper_count(g: &ContextGroup) -> f64 {
    use InterlocutorRow as R;
    match g {
        ContextGroup::Speaker(SpeakerGender::Feminine) => 419.9,
        ContextGroup::Speaker(SpeakerGender::Masculine) => 743.6,
        ContextGroup::Interlocutor(r) => match r {
            R::FemininePluralInformal => 9.3,
            R::MasculinePluralInformal => 73.8,
            R::PluralInformal => 315.9,
            R::SingularInformal => 326.8,
            R::FeminineSingularInformal => 273.0,
            R::MasculineSingularInformal => 498.7,
            R::FemininePluralFormal => 0.7,
            R::MasculinePluralFormal => 2.7,
            R::MixedPluralFormal => 5.7,
            R::FeminineSingularFormal => 63.0,
            R::MasculineSingularFormal => 144.0,
            R::Formal => 33.5,
        },
    }
}

#[derive(Debug, Clone)]
struct Variant {
    template: usize,
    attrs: AttributeSet,
    pattern: String,
}

/// A validated grammar.
#[derive(Debug, Clone)]
pub struct Grammar {
    file: GrammarFile,
    /// Variants per group index.
    by_group: Vec<Vec<Variant>>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot { slot: &'a str, key: &'a str, agree: Option<&'a str>, cap: bool },
}

fn parse_pattern(p: &str) -> Result<Vec<Piece<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = p;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Text(&rest[..open]));
        }
        let close = rest[open..].find('}').ok_or_else(|| format!("unclosed placeholder in `{p}`"))? + open;
        let inner = &rest[open + 1..close];
        let (inner, cap) = match inner.strip_suffix("|cap") {
            Some(i) => (i, true),
            None => (inner, false),
        };
        let (slot, key) = inner.split_once('.').ok_or_else(|| format!("placeholder `{inner}` lacks a key"))?;
        let (key, agree) = match key.split_once('@') {
            Some((prefix, other)) => (prefix, Some(other)),
            None => (key, None),
        };
        out.push(Piece::Slot { slot, key, agree, cap });
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    Ok(out)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn render(pattern: &str, fill: &BTreeMap<&str, &Lexeme>) -> Result<String, String> {
    let mut out = String::new();
    for piece in parse_pattern(pattern)? {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot { slot, key, agree, cap } => {
                let lex = fill.get(slot).ok_or_else(|| format!("unknown slot `{slot}`"))?;
                let key = match agree {
                    Some(other) => {
                        let o = fill.get(other).ok_or_else(|| format!("unknown slot `{other}`"))?;
                        let agr = o.get("agr").ok_or_else(|| format!("slot `{other}` has no agr"))?;
                        format!("{key}{agr}")
                    }
                    None => key.to_string(),
                };
                let form = lex
                    .get(&key)
                    .ok_or_else(|| format!("lexeme `{}` lacks form `{key}`", lex.get("id").map_or("?", |s| s)))?;
                if cap {
                    out.push_str(&capitalize(form));
                } else {
                    out.push_str(form);
                }
            }
        }
    }
    Ok(capitalize(&out))
}

/// Every slot filling that varies one slot at a time from the first lexemes.
fn probe_fillings<'a>(
    slots: &'a BTreeMap<String, String>,
    lexicon: &'a BTreeMap<String, Vec<Lexeme>>,
) -> Result<Vec<BTreeMap<&'a str, &'a Lexeme>>, String> {
    let mut base = BTreeMap::new();
    for (name, class) in slots {
        let list = lexicon.get(class).ok_or_else(|| format!("unknown class `{class}`"))?;
        base.insert(name.as_str(), list.first().ok_or_else(|| format!("class `{class}` is empty"))?);
    }
    let mut out = vec![base.clone()];
    for (name, class) in slots {
        for lex in lexicon[class].iter().skip(1) {
            let mut f = base.clone();
            f.insert(name.as_str(), lex);
            out.push(f);
        }
    }
    Ok(out)
}

fn random_filling<'a>(
    slots: &'a BTreeMap<String, String>,
    lexicon: &'a BTreeMap<String, Vec<Lexeme>>,
    rng: &mut impl Rng,
) -> BTreeMap<&'a str, &'a Lexeme> {
    slots
        .iter()
        .map(|(name, class)| {
            let list = &lexicon[class];
            (name.as_str(), &list[rng.gen_range(0..list.len())])
        })
        .collect()
}

fn words_lower(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

impl Grammar {
    pub fn parse(json: &str, detector: &Detector) -> Result<Self, SynthError> {
        let file: GrammarFile = serde_json::from_str(json)?;
        Self::from_file(file, detector)
    }

    /// The grammar shipped with the crate.
    pub fn builtin(detector: &Detector) -> Result<Self, SynthError> {
        Self::parse(include_str!("../data/grammar.json"), detector)
    }

    pub fn from_file(file: GrammarFile, detector: &Detector) -> Result<Self, SynthError> {
        let groups = ContextGroup::all();
        let mut by_group: Vec<Vec<Variant>> = vec![Vec::new(); groups.len()];
        for (ti, t) in file.templates.iter().enumerate() {
            let err = |message: String| SynthError::Template {
                template: t.id.clone(),
                message,
            };
            let fills = probe_fillings(&t.slots, &file.lexicon).map_err(err)?;
            for (key, pattern) in &t.targets {
                let attrs = AttributeSet::parse_list(key).map_err(|e| err(e.to_string()))?;
                let group = attrs
                    .group()
                    .filter(|_| attrs.is_legal())
                    .ok_or_else(|| err(format!("`{key}` is not a legal context")))?;
                for fill in &fills {
                    let en = render(&t.en, fill).map_err(err)?;
                    let tgt = render(pattern, fill).map_err(err)?;
                    let found = detector.detect(&en, &tgt).attrs;
                    if found != attrs {
                        return Err(SynthError::ClosedLoop {
                            template: t.id.clone(),
                            target: tgt,
                            expected: attrs.to_string(),
                            found: found.to_string(),
                        });
                    }
                }
                let gi = group.index();
                by_group[gi].push(Variant {
                    template: ti,
                    attrs,
                    pattern: pattern.clone(),
                });
            }
        }
        for (g, v) in groups.iter().zip(&by_group) {
            if v.is_empty() {
                return Err(SynthError::Uncovered(g.id()));
            }
        }
        let excluded: Vec<String> = file.excluded_source_tokens.iter().map(|s| s.to_lowercase()).collect();
        for t in &file.ambivalent {
            let err = |message: String| SynthError::Template {
                template: t.id.clone(),
                message,
            };
            for fill in probe_fillings(&t.slots, &file.lexicon).map_err(err)? {
                let en = render(&t.en, &fill).map_err(err)?;
                let tgt = render(&t.target, &fill).map_err(err)?;
                if let Some(w) = words_lower(&en).into_iter().find(|w| excluded.contains(w)) {
                    return Err(err(format!("source `{en}` contains excluded token `{w}`")));
                }
                let found = detector.detect(&en, &tgt).attrs;
                if !found.is_empty() {
                    return Err(SynthError::ClosedLoop {
                        template: t.id.clone(),
                        target: tgt,
                        expected: AttributeSet::EMPTY.to_string(),
                        found: found.to_string(),
                    });
                }
            }
        }
        Ok(Grammar { file, by_group })
    }

    pub fn file(&self) -> &GrammarFile {
        &self.file
    }

    /// Number of (template, attribute set) variants per group, in group order.
    pub fn variant_counts(&self) -> Vec<usize> {
        self.by_group.iter().map(Vec::len).collect()
    }

    /// Samples `n` labelled pairs: a group by weight, a template covering
    /// it, one of that template's variants for the group, then slot fillers.
    pub fn generate(&self, n: usize, weights: &GroupWeights, seed: u64) -> Result<Vec<AnnotatedPair>, SynthError> {
        let dist = WeightedIndex::new(weights.weights()?).map_err(|e| SynthError::Weights(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let gi = dist.sample(&mut rng);
            let variants = &self.by_group[gi];
            let mut templates: Vec<usize> = variants.iter().map(|v| v.template).collect();
            templates.dedup();
            let ti = templates[rng.gen_range(0..templates.len())];
            let options: Vec<&Variant> = variants.iter().filter(|v| v.template == ti).collect();
            let v = options[rng.gen_range(0..options.len())];
            let t = &self.file.templates[ti];
            let fill = random_filling(&t.slots, &self.file.lexicon, &mut rng);
            let en = render(&t.en, &fill).expect("validated template");
            let tgt = render(&v.pattern, &fill).expect("validated template");
            out.push(AnnotatedPair::new(en, tgt, v.attrs, Vec::new()));
        }
        Ok(out)
    }

    /// Sources whose translations carry no attribute marking, with their
    /// gold translations.
    pub fn generate_ambivalent_pairs(&self, n: usize, seed: u64) -> Vec<(String, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x616d_6269_7661_6c74);
        let amb = &self.file.ambivalent;
        (0..n)
            .map(|_| {
                let t = &amb[rng.gen_range(0..amb.len())];
                let fill = random_filling(&t.slots, &self.file.lexicon, &mut rng);
                (
                    render(&t.en, &fill).expect("validated template"),
                    render(&t.target, &fill).expect("validated template"),
                )
            })
            .collect()
    }

    pub fn generate_ambivalent(&self, n: usize, seed: u64) -> Vec<String> {
        self.generate_ambivalent_pairs(n, seed).into_iter().map(|(s, _)| s).collect()
    }

    /// A training corpus: `n` pairs of which `unannotated_fraction` are
    /// ambivalent (empty attributes) and the rest labelled, shuffled together.
    pub fn generate_corpus(
        &self,
        n: usize,
        unannotated_fraction: f64,
        weights: &GroupWeights,
        seed: u64,
    ) -> Result<Vec<AnnotatedPair>, SynthError> {
        let m = ((n as f64) * unannotated_fraction.clamp(0.0, 1.0)).round() as usize;
        let mut out = self.generate(n - m, weights, seed)?;
        out.extend(
            self.generate_ambivalent_pairs(m, seed.wrapping_add(1))
                .into_iter()
                .map(|(s, t)| AnnotatedPair::new(s, t, AttributeSet::EMPTY, Vec::new())),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
        rand::seq::SliceRandom::shuffle(out.as_mut_slice(), &mut rng);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morpho::Lexicon;

    fn grammar(lex: &Lexicon) -> Grammar {
        Grammar::builtin(&Detector::new(lex)).unwrap()
    }

    #[test]
    fn builtin_grammar_passes_the_closed_loop() {
        let lex = Lexicon::builtin();
        let g = grammar(&lex);
        assert!(g.variant_counts().iter().all(|&c| c > 0));
    }

    #[test]
    fn zero_and_determinism() {
        let lex = Lexicon::builtin();
        let g = grammar(&lex);
        assert!(g.generate(0, &GroupWeights::Uniform, 1).unwrap().is_empty());
        let a = g.generate(50, &GroupWeights::Uniform, 4).unwrap();
        assert_eq!(a, g.generate(50, &GroupWeights::Uniform, 4).unwrap());
        assert_ne!(a, g.generate(50, &GroupWeights::Uniform, 5).unwrap());
        assert_eq!(g.generate_ambivalent(20, 3), g.generate_ambivalent(20, 3));
    }

    #[test]
    fn placeholders() {
        let mut a = Lexeme::new();
        a.insert("sg.f".into(), "zmęczona".into());
        a.insert("en".into(), "tired".into());
        let mut n = Lexeme::new();
        n.insert("agr".into(), "sg.f".into());
        let fill: BTreeMap<&str, &Lexeme> = [("a", &a), ("n", &n)].into_iter().collect();
        assert_eq!(render("{a.@n}!", &fill).unwrap(), "Zmęczona!");
        assert_eq!(render("you are {a.en|cap}", &fill).unwrap(), "You are Tired");
        assert!(render("{a.pl}", &fill).is_err());
        assert!(render("{a.en", &fill).is_err());
    }

    #[test]
    fn a_mislabelled_template_is_rejected_by_name() {
        let lex = Lexicon::builtin();
        let det = Detector::new(&lex);
        let mut file: GrammarFile = serde_json::from_str(include_str!("../data/grammar.json")).unwrap();
        file.templates[0].targets.insert("sp:masculine".into(), "Byłam {a.sg.f}.".into());
        match Grammar::from_file(file, &det) {
            Err(SynthError::ClosedLoop { template, .. }) => assert_eq!(template, "sp-was-adj"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn paper_shape_weights_follow_counts() {
        let p = GroupWeights::PaperShape.probabilities().unwrap();
        let groups = ContextGroup::all();
        let masc = groups.iter().position(|g| *g == ContextGroup::Speaker(SpeakerGender::Masculine)).unwrap();
        let fem = groups.iter().position(|g| *g == ContextGroup::Speaker(SpeakerGender::Feminine)).unwrap();
        assert!(p[masc] > p[fem]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
