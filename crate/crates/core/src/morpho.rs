//! Lightweight Polish morphological analysis.
//!
//! Tokens are analysed against a [`Lexicon`] (a TSV of surface forms) and,
//! failing that, against a small table of inflectional suffix rules. Every
//! token keeps an ordered list of candidate analyses; consumers pick the first
//! candidate compatible with whatever pattern they are matching. Externally
//! analysed text can be read from CoNLL-U with [`load_conllu`].

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MorphError {
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("conllu line {line}: {message}")]
    Conllu { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! feature_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} value `{}`", stringify!($name), s)),
                }
            }
        }
    };
}

feature_enum!(Person { First => "1", Second => "2", Third => "3" });
feature_enum!(Number { Singular => "sg", Plural => "pl" });
feature_enum!(
    /// Grammatical gender. Virile (masculine-personal) and non-virile are the
    /// plural genders.
    Gender {
        Feminine => "fem",
        Masculine => "masc",
        Virile => "vir",
        Nonvirile => "nonvir",
        Neuter => "neut",
    }
);
feature_enum!(Tense {
    Past => "past",
    Present => "pres",
    Future => "fut",
    Imperative => "imp",
    Infinitive => "inf",
});
feature_enum!(WordClass {
    Verb => "verb",
    Adjective => "adj",
    Noun => "noun",
    Pronoun => "pron",
    Honorific => "hon",
    Particle => "part",
    Other => "other",
});
feature_enum!(Case {
    Nominative => "nom",
    Vocative => "voc",
    Instrumental => "inst",
    Other => "oth",
});

/// One candidate analysis of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MorphFeatures {
    pub person: Option<Person>,
    pub number: Option<Number>,
    pub gender: Option<Gender>,
    pub tense: Option<Tense>,
    pub word_class: WordClass,
    pub case: Option<Case>,
}

impl Default for MorphFeatures {
    fn default() -> Self {
        MorphFeatures::NONE
    }
}

impl MorphFeatures {
    /// The fallback candidate: nothing known.
    pub const NONE: MorphFeatures = MorphFeatures {
        person: None,
        number: None,
        gender: None,
        tense: None,
        word_class: WordClass::Other,
        case: None,
    };

    pub fn of_class(word_class: WordClass) -> Self {
        MorphFeatures {
            word_class,
            ..MorphFeatures::NONE
        }
    }

    pub fn with_person(mut self, p: Person) -> Self {
        self.person = Some(p);
        self
    }

    pub fn with_number(mut self, n: Number) -> Self {
        self.number = Some(n);
        self
    }

    pub fn with_gender(mut self, g: Gender) -> Self {
        self.gender = Some(g);
        self
    }

    pub fn with_tense(mut self, t: Tense) -> Self {
        self.tense = Some(t);
        self
    }

    pub fn with_case(mut self, c: Case) -> Self {
        self.case = Some(c);
        self
    }

    pub fn is_none(&self) -> bool {
        *self == MorphFeatures::NONE
    }

    /// Checks the gender/number and person/class invariants.
    pub fn validate(&self) -> Result<(), String> {
        match self.gender {
            Some(Gender::Virile | Gender::Nonvirile) if self.number != Some(Number::Plural) => {
                return Err(format!("gender {} requires plural number", self.gender.unwrap()));
            }
            Some(Gender::Feminine | Gender::Masculine | Gender::Neuter)
                if self.number == Some(Number::Plural) && self.word_class != WordClass::Noun =>
            {
                return Err(format!(
                    "gender {} in plural is only allowed on nouns",
                    self.gender.unwrap()
                ));
            }
            _ => {}
        }
        if matches!(self.person, Some(Person::First | Person::Second))
            && !matches!(self.word_class, WordClass::Verb | WordClass::Pronoun)
        {
            return Err(format!(
                "person {} requires a verb or pronoun",
                self.person.unwrap()
            ));
        }
        Ok(())
    }

    /// Coerces externally supplied features into the invariants: plural
    /// masculine becomes virile, other plural genders non-virile (except on
    /// nouns), and 1st/2nd person is dropped from non-verbal classes.
    pub fn normalized(mut self) -> Self {
        if self.number == Some(Number::Plural) && self.word_class != WordClass::Noun {
            self.gender = match self.gender {
                Some(Gender::Masculine | Gender::Virile) => Some(Gender::Virile),
                Some(_) => Some(Gender::Nonvirile),
                None => None,
            };
        }
        if self.number != Some(Number::Plural)
            && matches!(self.gender, Some(Gender::Virile | Gender::Nonvirile))
        {
            self.gender = None;
        }
        if matches!(self.person, Some(Person::First | Person::Second))
            && !matches!(self.word_class, WordClass::Verb | WordClass::Pronoun)
        {
            self.person = None;
        }
        self
    }

    /// Serialises to the lexicon feature string, e.g. `class=verb|person=1|number=sg`.
    pub fn to_feature_string(&self) -> String {
        let mut parts = vec![format!("class={}", self.word_class)];
        if let Some(p) = self.person {
            parts.push(format!("person={p}"));
        }
        if let Some(n) = self.number {
            parts.push(format!("number={n}"));
        }
        if let Some(g) = self.gender {
            parts.push(format!("gender={g}"));
        }
        if let Some(t) = self.tense {
            parts.push(format!("tense={t}"));
        }
        if let Some(c) = self.case {
            parts.push(format!("case={c}"));
        }
        parts.join("|")
    }

    pub fn parse_feature_string(s: &str) -> Result<Self, String> {
        let mut f = MorphFeatures::NONE;
        for part in s.split('|').filter(|p| !p.is_empty() && *p != "_") {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("feature `{part}` is not key=value"))?;
            match key {
                "class" => f.word_class = value.parse()?,
                "person" => f.person = Some(value.parse()?),
                "number" => f.number = Some(value.parse()?),
                "gender" => f.gender = Some(value.parse()?),
                "tense" => f.tense = Some(value.parse()?),
                "case" => f.case = Some(value.parse()?),
                _ => return Err(format!("unknown feature key `{key}`")),
            }
        }
        f.validate()?;
        Ok(f)
    }
}

impl fmt::Display for MorphFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_feature_string())
    }
}

/// One analysed token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphToken {
    pub surface: String,
    /// Character span `[start, end)` within the sentence.
    pub start: usize,
    pub end: usize,
    /// Whitespace between the previous token (or sentence start) and this one.
    pub leading: String,
    pub candidates: Vec<MorphFeatures>,
    pub lemma: Option<String>,
    /// Lemma per candidate, aligned with `candidates`.
    #[serde(default)]
    pub lemmas: Vec<Option<String>>,
}

impl MorphToken {
    pub fn first(&self) -> &MorphFeatures {
        &self.candidates[0]
    }

    /// First candidate satisfying `pred`, with its lemma.
    pub fn find(&self, pred: impl Fn(&MorphFeatures) -> bool) -> Option<(&MorphFeatures, Option<&str>)> {
        self.candidates
            .iter()
            .enumerate()
            .find(|(_, c)| pred(c))
            .map(|(i, c)| (c, self.lemmas.get(i).and_then(|l| l.as_deref())))
    }

    pub fn lower(&self) -> String {
        self.surface.to_lowercase()
    }

    pub fn is_punctuation(&self) -> bool {
        self.surface.chars().all(|c| !c.is_alphanumeric())
    }

    pub fn is_capitalized(&self) -> bool {
        self.surface.chars().next().is_some_and(char::is_uppercase)
    }
}

/// A tokenised sentence. Token surfaces and their `leading` whitespace,
/// followed by `trailing`, reproduce the original text exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<MorphToken>,
    pub trailing: String,
}

impl Sentence {
    pub fn reconstruct(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&t.leading);
            out.push_str(&t.surface);
        }
        out.push_str(&self.trailing);
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl std::ops::Deref for Sentence {
    type Target = [MorphToken];

    fn deref(&self) -> &Self::Target {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub lemma: String,
    pub features: MorphFeatures,
}

/// Surface-form lexicon plus the closed set of honorific inflections.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<LexEntry>>,
    /// Noun lemmas whose grammatical gender never varies across their forms.
    pub inflexible_nouns: BTreeSet<String>,
}

/// The Pan+ honorific inflections with their fixed gender and number.
/// Possessive `pański` forms refer to a masculine singular addressee
/// whatever the gender of the possessed noun.
const HONORIFICS: &[(&str, &str, Gender, Number)] = &[
    ("pan", "pan", Gender::Masculine, Number::Singular),
    ("pana", "pan", Gender::Masculine, Number::Singular),
    ("panu", "pan", Gender::Masculine, Number::Singular),
    ("panem", "pan", Gender::Masculine, Number::Singular),
    ("pański", "pan", Gender::Masculine, Number::Singular),
    ("pańska", "pan", Gender::Masculine, Number::Singular),
    ("pańskie", "pan", Gender::Masculine, Number::Singular),
    ("pańskiego", "pan", Gender::Masculine, Number::Singular),
    ("pańskiej", "pan", Gender::Masculine, Number::Singular),
    ("pańskiemu", "pan", Gender::Masculine, Number::Singular),
    ("pańskim", "pan", Gender::Masculine, Number::Singular),
    ("pańską", "pan", Gender::Masculine, Number::Singular),
    ("pańscy", "pan", Gender::Masculine, Number::Singular),
    ("pańskich", "pan", Gender::Masculine, Number::Singular),
    ("pańskimi", "pan", Gender::Masculine, Number::Singular),
    ("pańsku", "pan", Gender::Masculine, Number::Singular),
    ("pani", "pani", Gender::Feminine, Number::Singular),
    ("panią", "pani", Gender::Feminine, Number::Singular),
    ("panowie", "panowie", Gender::Virile, Number::Plural),
    ("panów", "panowie", Gender::Virile, Number::Plural),
    ("panom", "panowie", Gender::Virile, Number::Plural),
    ("panami", "panowie", Gender::Virile, Number::Plural),
    ("panach", "panowie", Gender::Virile, Number::Plural),
    ("panie", "panie", Gender::Nonvirile, Number::Plural),
    ("pań", "panie", Gender::Nonvirile, Number::Plural),
    ("paniom", "panie", Gender::Nonvirile, Number::Plural),
    ("paniami", "panie", Gender::Nonvirile, Number::Plural),
    ("paniach", "panie", Gender::Nonvirile, Number::Plural),
    ("państwo", "państwo", Gender::Virile, Number::Plural),
    ("państwa", "państwo", Gender::Virile, Number::Plural),
    ("państwu", "państwo", Gender::Virile, Number::Plural),
    ("państwem", "państwo", Gender::Virile, Number::Plural),
    ("państwie", "państwo", Gender::Virile, Number::Plural),
];

/// Lemmas of the honorific set.
pub const HONORIFIC_LEMMAS: [&str; 5] = ["pan", "pani", "panowie", "panie", "państwo"];

impl Lexicon {
    /// An empty lexicon holding only the honorifics.
    pub fn new() -> Self {
        let mut lex = Lexicon::default();
        for &(surface, lemma, gender, number) in HONORIFICS {
            let features = MorphFeatures::of_class(WordClass::Honorific)
                .with_gender(gender)
                .with_number(number);
            lex.entries.entry(surface.to_string()).or_default().push(LexEntry {
                lemma: lemma.to_string(),
                features,
            });
        }
        // `panie` is also the vocative of `pan`.
        lex.entries.get_mut("panie").unwrap().push(LexEntry {
            lemma: "pan".to_string(),
            features: MorphFeatures::of_class(WordClass::Honorific)
                .with_gender(Gender::Masculine)
                .with_number(Number::Singular)
                .with_case(Case::Vocative),
        });
        lex
    }

    /// Parses the TSV format: `surface TAB lemma TAB features`, `#` comments.
    pub fn parse(text: &str) -> Result<Self, MorphError> {
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(MorphError::Lexicon {
                    line: line_no,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let features = MorphFeatures::parse_feature_string(cols[2])
                .map_err(|message| MorphError::Lexicon { line: line_no, message })?;
            let surface = cols[0].to_lowercase();
            if lex.is_honorific_form(&surface) {
                continue;
            }
            lex.add(&surface, cols[1], features);
        }
        lex.inflexible_nouns = lex.fixed_gender_nouns();
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MorphError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/lexicon.tsv")).expect("bundled lexicon parses")
    }

    pub fn add(&mut self, surface: &str, lemma: &str, features: MorphFeatures) {
        let list = self.entries.entry(surface.to_lowercase()).or_default();
        let entry = LexEntry {
            lemma: lemma.to_string(),
            features,
        };
        if !list.contains(&entry) {
            list.push(entry);
        }
    }

    pub fn lookup(&self, lower: &str) -> Option<&[LexEntry]> {
        self.entries.get(lower).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_honorific_form(&self, lower: &str) -> bool {
        HONORIFICS.iter().any(|h| h.0 == lower)
    }

    /// Every (surface, entry) pair, sorted by surface.
    pub fn iter_sorted(&self) -> Vec<(&str, &LexEntry)> {
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        keys.into_iter()
            .flat_map(|k| self.entries[k].iter().map(move |e| (k.as_str(), e)))
            .collect()
    }

    /// Genders recorded for a noun lemma across all its forms.
    pub fn noun_genders(&self, lemma: &str) -> BTreeSet<Gender> {
        let mut out = BTreeSet::new();
        for entries in self.entries.values() {
            for e in entries {
                if e.lemma == lemma && e.features.word_class == WordClass::Noun {
                    if let Some(g) = e.features.gender {
                        out.insert(singular_gender(g));
                    }
                }
            }
        }
        out
    }

    /// Noun lemmas recorded with exactly one gender.
    pub fn fixed_gender_nouns(&self) -> BTreeSet<String> {
        let mut genders: HashMap<&str, BTreeSet<Gender>> = HashMap::new();
        for entries in self.entries.values() {
            for e in entries {
                if e.features.word_class == WordClass::Noun {
                    let set = genders.entry(e.lemma.as_str()).or_default();
                    if let Some(g) = e.features.gender {
                        set.insert(singular_gender(g));
                    }
                }
            }
        }
        genders
            .into_iter()
            .filter(|(_, g)| g.len() == 1)
            .map(|(l, _)| l.to_string())
            .collect()
    }

    pub fn is_fixed_gender_noun(&self, lemma: &str) -> bool {
        self.inflexible_nouns.contains(lemma)
    }

    /// Serialises back to the TSV format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (surface, e) in self.iter_sorted() {
            if self.is_honorific_form(surface) {
                continue;
            }
            out.push_str(&format!("{surface}\t{}\t{}\n", e.lemma, e.features));
        }
        out
    }
}

/// Folds the plural genders onto the singular ones: virile onto masculine,
/// non-virile onto feminine.
fn singular_gender(g: Gender) -> Gender {
    match g {
        Gender::Virile => Gender::Masculine,
        Gender::Nonvirile => Gender::Feminine,
        g => g,
    }
}

struct SuffixRule {
    suffix: &'static str,
    features: MorphFeatures,
}

const fn verb(person: Person, number: Number, gender: Option<Gender>, tense: Option<Tense>) -> MorphFeatures {
    MorphFeatures {
        person: Some(person),
        number: Some(number),
        gender,
        tense,
        word_class: WordClass::Verb,
        case: None,
    }
}

const fn adj(number: Number, gender: Gender, case: Option<Case>) -> MorphFeatures {
    MorphFeatures {
        person: None,
        number: Some(number),
        gender: Some(gender),
        tense: None,
        word_class: WordClass::Adjective,
        case,
    }
}

use Gender::{Feminine as Fem, Masculine as Masc, Neuter as Neut, Nonvirile as NonVir, Virile as Vir};
use Number::{Plural as Pl, Singular as Sg};
use Person::{First, Second};

/// Verbal suffix rules, longest suffix first.
const VERB_RULES: &[SuffixRule] = &[
    SuffixRule { suffix: "łybyście", features: verb(Second, Pl, Some(NonVir), None) },
    SuffixRule { suffix: "libyście", features: verb(Second, Pl, Some(Vir), None) },
    SuffixRule { suffix: "łyście", features: verb(Second, Pl, Some(NonVir), Some(Tense::Past)) },
    SuffixRule { suffix: "liście", features: verb(Second, Pl, Some(Vir), Some(Tense::Past)) },
    SuffixRule { suffix: "łabym", features: verb(First, Sg, Some(Fem), None) },
    SuffixRule { suffix: "łabyś", features: verb(Second, Sg, Some(Fem), None) },
    SuffixRule { suffix: "łbym", features: verb(First, Sg, Some(Masc), None) },
    SuffixRule { suffix: "łbyś", features: verb(Second, Sg, Some(Masc), None) },
    SuffixRule { suffix: "łam", features: verb(First, Sg, Some(Fem), Some(Tense::Past)) },
    SuffixRule { suffix: "łem", features: verb(First, Sg, Some(Masc), Some(Tense::Past)) },
    SuffixRule { suffix: "łaś", features: verb(Second, Sg, Some(Fem), Some(Tense::Past)) },
    SuffixRule { suffix: "łeś", features: verb(Second, Sg, Some(Masc), Some(Tense::Past)) },
    SuffixRule { suffix: "cie", features: verb(Second, Pl, None, Some(Tense::Present)) },
    SuffixRule { suffix: "sz", features: verb(Second, Sg, None, Some(Tense::Present)) },
    SuffixRule { suffix: "am", features: verb(First, Sg, None, Some(Tense::Present)) },
    SuffixRule { suffix: "ę", features: verb(First, Sg, None, Some(Tense::Present)) },
];

/// Low-confidence adjectival endings, tried only when no verbal rule fires.
const ADJECTIVE_RULES: &[(&str, &[MorphFeatures])] = &[
    ("ymi", &[adj(Pl, NonVir, Some(Case::Instrumental))]),
    ("imi", &[adj(Pl, NonVir, Some(Case::Instrumental))]),
    ("ym", &[adj(Sg, Masc, Some(Case::Instrumental))]),
    ("im", &[adj(Sg, Masc, Some(Case::Instrumental))]),
    ("ą", &[adj(Sg, Fem, Some(Case::Instrumental))]),
    ("a", &[adj(Sg, Fem, Some(Case::Nominative))]),
    ("y", &[adj(Sg, Masc, Some(Case::Nominative)), adj(Pl, NonVir, Some(Case::Nominative))]),
    ("i", &[adj(Pl, Vir, Some(Case::Nominative)), adj(Sg, Masc, Some(Case::Nominative))]),
    ("e", &[adj(Pl, NonVir, Some(Case::Nominative)), adj(Sg, Neut, Some(Case::Nominative))]),
];

fn suffix_candidates(lower: &str) -> Vec<MorphFeatures> {
    let chars = lower.chars().count();
    for rule in VERB_RULES {
        // The stem must keep at least two characters.
        if lower.ends_with(rule.suffix) && chars >= rule.suffix.chars().count() + 2 {
            return vec![rule.features];
        }
    }
    for (suffix, feats) in ADJECTIVE_RULES {
        if lower.ends_with(suffix) && chars >= suffix.chars().count() + 3 {
            return feats.to_vec();
        }
    }
    Vec::new()
}

/// Analyses one word. Lexicon hits win; otherwise suffix rules fire;
/// otherwise the token gets the all-none fallback candidate.
pub fn analyze_token(surface: &str, lexicon: &Lexicon) -> MorphToken {
    let lower = surface.to_lowercase();
    let (candidates, lemmas): (Vec<MorphFeatures>, Vec<Option<String>>) = if !surface
        .chars()
        .any(char::is_alphanumeric)
    {
        (vec![MorphFeatures::NONE], vec![None])
    } else if let Some(entries) = lexicon.lookup(&lower) {
        entries
            .iter()
            .map(|e| (e.features, Some(e.lemma.clone())))
            .unzip()
    } else {
        let c = suffix_candidates(&lower);
        if c.is_empty() {
            (vec![MorphFeatures::NONE], vec![None])
        } else {
            let n = c.len();
            (c, vec![None; n])
        }
    };
    let chars = surface.chars().count();
    MorphToken {
        surface: surface.to_string(),
        start: 0,
        end: chars,
        leading: String::new(),
        lemma: lemmas[0].clone(),
        candidates,
        lemmas,
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '’' | '-')
}

/// Splits text into word and punctuation tokens with their char spans and
/// leading whitespace; returns the tokens and the trailing whitespace.
pub fn tokenize(text: &str) -> (Vec<(usize, usize, String, String)>, String) {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut leading = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            leading.push(c);
            i += 1;
            continue;
        }
        let start = i;
        if is_word_char(c) {
            i += 1;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if is_joiner(chars[i]) && i + 1 < chars.len() && is_word_char(chars[i + 1]) {
                    i += 2;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        let surface: String = chars[start..i].iter().collect();
        out.push((start, i, surface, std::mem::take(&mut leading)));
    }
    (out, leading)
}

/// Tokenises and analyses a sentence.
pub fn analyze_sentence(text: &str, lexicon: &Lexicon) -> Sentence {
    let (raw, trailing) = tokenize(text);
    let tokens = raw
        .into_iter()
        .map(|(start, end, surface, leading)| {
            let mut tok = analyze_token(&surface, lexicon);
            tok.start = start;
            tok.end = end;
            tok.leading = leading;
            tok
        })
        .collect();
    Sentence { tokens, trailing }
}

fn upos_class(upos: &str, lemma: &str) -> WordClass {
    if HONORIFIC_LEMMAS.contains(&lemma.to_lowercase().as_str()) {
        return WordClass::Honorific;
    }
    match upos {
        "VERB" | "AUX" => WordClass::Verb,
        "ADJ" | "DET" => WordClass::Adjective,
        "NOUN" | "PROPN" => WordClass::Noun,
        "PRON" => WordClass::Pronoun,
        "PART" => WordClass::Particle,
        _ => WordClass::Other,
    }
}

fn conllu_features(upos: &str, lemma: &str, feats: &str) -> MorphFeatures {
    let mut f = MorphFeatures::of_class(upos_class(upos, lemma));
    if feats == "_" {
        return f;
    }
    for kv in feats.split('|') {
        let Some((key, value)) = kv.split_once('=') else {
            continue;
        };
        match key {
            "Gender" => {
                f.gender = match value {
                    "Fem" => Some(Gender::Feminine),
                    "Masc" => Some(Gender::Masculine),
                    "Neut" => Some(Gender::Neuter),
                    _ => f.gender,
                }
            }
            "Number" => {
                f.number = match value {
                    "Sing" => Some(Number::Singular),
                    "Plur" => Some(Number::Plural),
                    _ => f.number,
                }
            }
            "Person" => {
                f.person = match value {
                    "1" => Some(Person::First),
                    "2" => Some(Person::Second),
                    "3" => Some(Person::Third),
                    _ => f.person,
                }
            }
            "Tense" => {
                f.tense = match value {
                    "Past" => Some(Tense::Past),
                    "Pres" => Some(Tense::Present),
                    "Fut" => Some(Tense::Future),
                    _ => f.tense,
                }
            }
            "Case" => {
                f.case = Some(match value {
                    "Nom" => Case::Nominative,
                    "Voc" => Case::Vocative,
                    "Ins" => Case::Instrumental,
                    _ => Case::Other,
                })
            }
            _ => {}
        }
    }
    f.normalized()
}

/// Reads CoNLL-U: ten tab-separated columns per token row, `#` comments,
/// blank lines between sentences. Multiword range rows (`1-2`) and empty
/// nodes (`1.1`) are skipped.
pub fn load_conllu<R: BufRead>(reader: R) -> Result<Vec<Sentence>, MorphError> {
    let mut sentences = Vec::new();
    let mut current = Sentence::default();
    let mut offset = 0usize;
    let mut space_before = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.tokens.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            offset = 0;
            space_before = false;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(MorphError::Conllu {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        if id.parse::<usize>().is_err() {
            return Err(MorphError::Conllu {
                line: line_no,
                message: format!("invalid token id `{id}`"),
            });
        }
        let form = cols[1];
        let lemma = cols[2];
        let features = conllu_features(cols[3], lemma, cols[5]);
        let leading = if space_before { " ".to_string() } else { String::new() };
        if space_before {
            offset += 1;
        }
        let len = form.chars().count();
        let lemma_opt = (lemma != "_").then(|| lemma.to_string());
        current.tokens.push(MorphToken {
            surface: form.to_string(),
            start: offset,
            end: offset + len,
            leading,
            candidates: vec![features],
            lemma: lemma_opt.clone(),
            lemmas: vec![lemma_opt],
        });
        offset += len;
        space_before = !cols[9].split('|').any(|m| m == "SpaceAfter=No");
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}
