//! Rule-based detection of speaker and interlocutor attributes in Polish
//! target sentences.
//!
//! Speaker gender comes from first-person-singular forms that carry gender
//! (past and conditional verbs) and from adjectives or instrumental nouns
//! predicated of a first-person copula. Interlocutor attributes come from
//! second-person pronouns and verbs, from predicates of second-person copulas,
//! from vocatives, and from the Pan+ honorifics, which fix gender and number
//! and imply formal address. A `proszę` that the English source does not
//! explain with "please" marks a formal request.
//!
//! Conflicting evidence is resolved by majority; ties leave the attribute
//! absent. The result is then pruned to a legal combination.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::attributes::{
    Attribute, AttributeSet, AttributeType, Formality, InterlocutorGender, InterlocutorNumber,
    SpeakerGender,
};
use crate::morpho::{
    analyze_sentence, Case, Gender, Lexicon, MorphToken, Number, Person, Tense,
    WordClass,
};

/// A piece of evidence: a character span of the target sentence that
/// expresses an attribute type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub start: usize,
    pub end: usize,
    pub attr: AttributeType,
    #[serde(default)]
    pub rule: String,
}

impl Evidence {
    fn token(tok: &MorphToken, attr: AttributeType, rule: &str) -> Self {
        Evidence {
            start: tok.start,
            end: tok.end,
            attr,
            rule: rule.to_string(),
        }
    }
}

/// Result of checking one hypothesis against one type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agreement {
    Agrees,
    Contradicts,
    Unmarked,
}

const COPULA_LEMMAS: &[&str] = &["być", "zostać", "zostawać", "czuć", "stać"];

const PREPOSITIONS: &[&str] = &[
    "z", "ze", "w", "we", "na", "do", "od", "dla", "o", "przy", "po", "za", "przed", "pod", "nad",
    "bez", "u", "przez", "obok", "koło", "między", "jak", "niż", "wobec", "według",
];

const CLAUSE_BREAKERS: &[&str] = &[
    "i", "ale", "że", "bo", "a", "lecz", "albo", "lub", "gdy", "kiedy", "jeśli", "jeżeli",
    "który", "która", "które", "którzy", "którą", "którego", "gdzie", "choć", "chociaż", "więc",
];

const DETERMINERS: &[&str] = &[
    "ten", "ta", "tamten", "tamta", "tej", "tego", "temu", "tym", "tą", "tę", "ci", "te",
    "tych", "tymi", "tamci", "tamte", "tamtej", "tamtego", "jakiś", "jakaś", "jacyś", "jakieś",
    "jakiejś", "jakiegoś", "każdy", "każda", "każdego", "każdej", "żaden", "żadna", "inny", "inna",
    "inni", "inne", "pewien", "pewna", "jeden", "jedna",
];

/// Evidence with the stopword filter optionally disabled; used for the
/// first corpus pass that collects noun-based evidence.
#[derive(Debug, Clone, Copy)]
pub struct DetectorOptions {
    pub use_stopwords: bool,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions { use_stopwords: true }
    }
}

/// Speaker gender with its supporting evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeakerDetection {
    pub gender: SpeakerGender,
    pub evidence: Vec<Evidence>,
}

/// Interlocutor attributes with supporting evidence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterlocutorDetection {
    pub gender: Option<InterlocutorGender>,
    pub number: Option<InterlocutorNumber>,
    pub formality: Option<Formality>,
    pub evidence: Vec<Evidence>,
}

/// Detected attributes of one sentence pair.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Detection {
    pub attrs: AttributeSet,
    pub evidence: Vec<Evidence>,
    /// Lemmas of nouns used as gender evidence.
    pub noun_lemmas: Vec<String>,
}

pub struct Detector<'a> {
    lexicon: &'a Lexicon,
    options: DetectorOptions,
}

fn lower(tok: &MorphToken) -> String {
    tok.surface.to_lowercase()
}

fn is_boundary(tok: &MorphToken) -> bool {
    tok.is_punctuation() || CLAUSE_BREAKERS.contains(&lower(tok).as_str())
}

/// Index ranges of clauses, split at punctuation and subordinating words.
fn clauses(tokens: &[MorphToken]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if is_boundary(t) {
            if start < i {
                out.push(start..i);
            }
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(start..tokens.len());
    }
    out
}

fn is_copula(tok: &MorphToken, person: Person) -> Option<Number> {
    tok.find(|c| c.word_class == WordClass::Verb && c.person == Some(person))
        .filter(|(_, lemma)| lemma.is_some_and(|l| COPULA_LEMMAS.contains(&l)))
        .and_then(|(c, _)| c.number)
}

const MODAL_LEMMAS: &[&str] = &["musieć", "móc", "chcieć", "mieć", "woleć"];

/// A modal carrying the person, followed in the clause by an infinitive copula
/// (`musisz być`).
fn is_modal_copula(tokens: &[MorphToken], clause: &std::ops::Range<usize>, i: usize, person: Person) -> Option<Number> {
    let (c, _) = tokens[i]
        .find(|c| c.word_class == WordClass::Verb && c.person == Some(person))
        .filter(|(_, lemma)| lemma.is_some_and(|l| MODAL_LEMMAS.contains(&l)))?;
    let number = c.number?;
    (i + 1..clause.end)
        .any(|j| {
            tokens[j]
                .find(|c| c.tense == Some(Tense::Infinitive))
                .is_some_and(|(_, l)| l.is_some_and(|l| COPULA_LEMMAS.contains(&l)))
        })
        .then_some(number)
}

/// An auxiliary that pairs with an l-participle: future `będę` or the
/// conditional clitic `bym`.
fn is_future_aux(tok: &MorphToken, person: Person) -> Option<Number> {
    tok.find(|c| {
        c.word_class == WordClass::Verb
            && c.person == Some(person)
            && matches!(c.tense, Some(Tense::Future) | None)
    })
    .filter(|(c, lemma)| *lemma == Some("by") || (*lemma == Some("być") && c.tense == Some(Tense::Future)))
    .and_then(|(c, _)| c.number)
}

fn gender_matches_number(g: Gender, n: Number) -> bool {
    match n {
        Number::Singular => matches!(g, Gender::Feminine | Gender::Masculine),
        Number::Plural => matches!(g, Gender::Virile | Gender::Nonvirile),
    }
}

fn preceded_by_preposition(tokens: &[MorphToken], clause_start: usize, i: usize) -> bool {
    let mut j = i;
    while j > clause_start {
        j -= 1;
        let t = &tokens[j];
        let l = lower(t);
        if PREPOSITIONS.contains(&l.as_str()) {
            return true;
        }
        // Walk back over modifiers of the same phrase.
        if t.first().word_class == WordClass::Adjective {
            continue;
        }
        return false;
    }
    false
}

/// A predicate linked to a copula: `(token index, gender, is noun, lemma)`.
struct Predicate {
    index: usize,
    gender: Gender,
    noun_lemma: Option<String>,
    rule: &'static str,
}

impl<'a> Detector<'a> {
    pub fn new(lexicon: &'a Lexicon) -> Self {
        Detector {
            lexicon,
            options: DetectorOptions::default(),
        }
    }

    pub fn with_options(lexicon: &'a Lexicon, options: DetectorOptions) -> Self {
        Detector { lexicon, options }
    }

    pub fn lexicon(&self) -> &Lexicon {
        self.lexicon
    }

    fn is_stopword(&self, lemma: &str) -> bool {
        self.options.use_stopwords && self.lexicon.is_fixed_gender_noun(lemma)
    }

    /// Gendered predicates of a copula (or participles of a future
    /// auxiliary) in the given person, clause by clause.
    fn predicates(&self, tokens: &[MorphToken], person: Person) -> (Vec<(Predicate, Number)>, Vec<String>) {
        let mut out = Vec::new();
        let mut noun_lemmas = Vec::new();
        for clause in clauses(tokens) {
            let aux = clause
                .clone()
                .find_map(|i| is_future_aux(&tokens[i], person).map(|n| (i, n)));
            let copula = clause
                .clone()
                .find_map(|i| is_copula(&tokens[i], person).map(|n| (i, n)))
                .or_else(|| {
                    clause
                        .clone()
                        .find_map(|i| is_modal_copula(tokens, &clause, i, person).map(|n| (i, n)))
                })
                .or(aux);
            let Some((cop_idx, number)) = copula else {
                continue;
            };
            let mut consumed = BTreeSet::new();
            for i in clause.clone() {
                if i == cop_idx || consumed.contains(&i) {
                    continue;
                }
                let tok = &tokens[i];
                if tok.first().word_class == WordClass::Honorific {
                    continue;
                }
                if aux.is_some() {
                    if let Some((c, _)) = tok.find(|c| {
                        c.word_class == WordClass::Verb
                            && c.tense == Some(Tense::Past)
                            && c.person.is_none_or(|p| p == Person::Third)
                            && c.number == Some(number)
                            && c.gender.is_some_and(|g| gender_matches_number(g, number))
                    }) {
                        out.push((
                            Predicate {
                                index: i,
                                gender: c.gender.unwrap(),
                                noun_lemma: None,
                                rule: "participle",
                            },
                            number,
                        ));
                        continue;
                    }
                }
                if preceded_by_preposition(tokens, clause.start, i) {
                    continue;
                }
                let adjective = tok.find(|c| {
                    c.word_class == WordClass::Adjective
                        && c.number == Some(number)
                        && c.gender.is_some_and(|g| gender_matches_number(g, number))
                        && matches!(c.case, None | Some(Case::Nominative) | Some(Case::Instrumental))
                });
                let noun = tok
                    .find(|c| {
                        c.word_class == WordClass::Noun
                            && c.case == Some(Case::Instrumental)
                            && c.number == Some(number)
                            && c.gender.is_some()
                    })
                    .filter(|(c, _)| c.gender != Some(Gender::Neuter));
                if let Some((c, _)) = adjective {
                    // An adjective modifying a following noun belongs to that noun.
                    if let Some(next) = tokens.get(i + 1).filter(|_| i + 1 < clause.end) {
                        if next.first().word_class == WordClass::Noun {
                            let noun_next = next.find(|n| n.word_class == WordClass::Noun);
                            if let Some((_, Some(lemma))) = noun_next {
                                let lemma = lemma.to_string();
                                noun_lemmas.push(lemma.clone());
                                if self.is_stopword(&lemma) {
                                    consumed.insert(i + 1);
                                    continue;
                                }
                            }
                            continue;
                        }
                    }
                    out.push((
                        Predicate {
                            index: i,
                            gender: c.gender.unwrap(),
                            noun_lemma: None,
                            rule: "predicate-adjective",
                        },
                        number,
                    ));
                } else if let Some((c, lemma)) = noun {
                    let gender = match (c.gender.unwrap(), number) {
                        (Gender::Feminine, Number::Plural) => Gender::Nonvirile,
                        (Gender::Masculine, Number::Plural) => Gender::Virile,
                        (g, _) => g,
                    };
                    if !gender_matches_number(gender, number) {
                        continue;
                    }
                    let lemma = lemma.map(str::to_string);
                    if let Some(l) = &lemma {
                        noun_lemmas.push(l.clone());
                        if self.is_stopword(l) {
                            continue;
                        }
                    }
                    out.push((
                        Predicate {
                            index: i,
                            gender,
                            noun_lemma: lemma,
                            rule: "predicate-noun",
                        },
                        number,
                    ));
                }
            }
        }
        (out, noun_lemmas)
    }

    /// Speaker gender from first-person-singular evidence.
    pub fn detect_speaker(&self, tokens: &[MorphToken]) -> Option<SpeakerDetection> {
        self.speaker_with_nouns(tokens).0
    }

    fn speaker_with_nouns(&self, tokens: &[MorphToken]) -> (Option<SpeakerDetection>, Vec<String>) {
        let mut fem = Vec::new();
        let mut masc = Vec::new();
        for tok in tokens {
            if let Some((c, _)) = tok.find(|c| {
                c.word_class == WordClass::Verb
                    && c.person == Some(Person::First)
                    && c.number == Some(Number::Singular)
                    && matches!(c.gender, Some(Gender::Feminine | Gender::Masculine))
            }) {
                match c.gender {
                    Some(Gender::Feminine) => fem.push(Evidence::token(tok, AttributeType::SpFeminine, "verb-1sg")),
                    _ => masc.push(Evidence::token(tok, AttributeType::SpMasculine, "verb-1sg")),
                }
            }
        }
        let (preds, nouns) = self.predicates(tokens, Person::First);
        for (p, number) in preds {
            if number != Number::Singular {
                continue;
            }
            let tok = &tokens[p.index];
            match p.gender {
                Gender::Feminine => fem.push(Evidence::token(tok, AttributeType::SpFeminine, p.rule)),
                Gender::Masculine => masc.push(Evidence::token(tok, AttributeType::SpMasculine, p.rule)),
                _ => {}
            }
            let _ = p.noun_lemma;
        }
        let result = match fem.len().cmp(&masc.len()) {
            std::cmp::Ordering::Greater => Some(SpeakerDetection {
                gender: SpeakerGender::Feminine,
                evidence: fem,
            }),
            std::cmp::Ordering::Less => Some(SpeakerDetection {
                gender: SpeakerGender::Masculine,
                evidence: masc,
            }),
            std::cmp::Ordering::Equal => None,
        };
        (result, nouns)
    }

    /// Interlocutor gender, number and formality. `source` is the English
    /// side; when empty the formal-request rule is disabled.
    pub fn detect_interlocutor(&self, source: &str, tokens: &[MorphToken]) -> Option<InterlocutorDetection> {
        self.interlocutor_with_nouns(source, tokens).0
    }

    fn interlocutor_with_nouns(
        &self,
        source: &str,
        tokens: &[MorphToken],
    ) -> (Option<InterlocutorDetection>, Vec<String>) {
        use AttributeType as T;
        let mut formal_ev: Vec<Evidence> = Vec::new();
        let mut informal_ev: Vec<Evidence> = Vec::new();
        let mut formal_number: Vec<Evidence> = Vec::new();
        let mut formal_gender: Vec<Evidence> = Vec::new();
        let mut informal_number: Vec<Evidence> = Vec::new();
        let mut informal_gender: Vec<Evidence> = Vec::new();

        for (i, tok) in tokens.iter().enumerate() {
            let first = tok.first();
            let l = lower(tok);
            if first.word_class == WordClass::Honorific {
                let next = tokens.get(i + 1);
                // Title use: honorific followed by a capitalised name.
                if next.is_some_and(|n| !n.is_punctuation() && n.is_capitalized()) {
                    continue;
                }
                if i > 0 && DETERMINERS.contains(&lower(&tokens[i - 1]).as_str()) {
                    continue;
                }
                let next_is_vocative = next.is_some_and(|n| {
                    n.find(|c| c.word_class == WordClass::Noun && c.case == Some(Case::Vocative))
                        .is_some()
                });
                let (cand, lemma) = if next_is_vocative {
                    tok.find(|c| c.case == Some(Case::Vocative))
                        .unwrap_or((first, tok.lemmas.first().and_then(|l| l.as_deref())))
                } else {
                    (first, tok.lemmas.first().and_then(|l| l.as_deref()))
                };
                formal_ev.push(Evidence::token(tok, T::Formal, "honorific"));
                let number = cand.number.unwrap_or(Number::Singular);
                let gender_type = if lemma == Some("państwo") {
                    T::IlMixed
                } else {
                    match cand.gender {
                        Some(Gender::Feminine | Gender::Nonvirile) => T::IlFeminine,
                        _ => T::IlMasculine,
                    }
                };
                formal_gender.push(Evidence::token(tok, gender_type, "honorific"));
                formal_number.push(Evidence::token(
                    tok,
                    if number == Number::Plural { T::Plural } else { T::Singular },
                    "honorific",
                ));
                continue;
            }

            // `ci` before a virile plural is the demonstrative.
            if l == "ci"
                && tokens
                    .get(i + 1)
                    .is_some_and(|n| n.find(|c| c.gender == Some(Gender::Virile)).is_some())
            {
                continue;
            }

            // Second-person pronouns and possessives.
            if let Some((c, _)) = tok.find(|c| c.word_class == WordClass::Pronoun && c.person == Some(Person::Second)) {
                informal_ev.push(Evidence::token(tok, T::Informal, "pronoun-2"));
                if let Some(n) = c.number {
                    informal_number.push(Evidence::token(tok, number_type(n), "pronoun-2"));
                }
                continue;
            }

            // Second-person verbs.
            if let Some((c, _)) = tok.find(|c| c.word_class == WordClass::Verb && c.person == Some(Person::Second)) {
                informal_ev.push(Evidence::token(tok, T::Informal, "verb-2"));
                if let Some(n) = c.number {
                    informal_number.push(Evidence::token(tok, number_type(n), "verb-2"));
                }
                if let Some(g) = c.gender.and_then(il_gender_type) {
                    informal_gender.push(Evidence::token(tok, g, "verb-2"));
                }
                continue;
            }

            // Vocatives of personal nouns.
            if first.word_class == WordClass::Noun && first.case == Some(Case::Vocative) {
                informal_ev.push(Evidence::token(tok, T::Informal, "vocative"));
                if let Some(n) = first.number {
                    informal_number.push(Evidence::token(tok, number_type(n), "vocative"));
                }
                let gender = match (first.gender, first.number) {
                    (Some(Gender::Feminine), Some(Number::Plural)) => Some(Gender::Nonvirile),
                    (Some(Gender::Masculine), Some(Number::Plural)) => Some(Gender::Virile),
                    (g, _) => g,
                };
                let lemma_ok = tok
                    .lemmas
                    .first()
                    .and_then(|l| l.as_deref())
                    .is_none_or(|l| !self.is_stopword(l));
                if lemma_ok {
                    if let Some(g) = gender.and_then(il_gender_type) {
                        informal_gender.push(Evidence::token(tok, g, "vocative"));
                    }
                }
            }
        }

        let (preds, nouns) = self.predicates(tokens, Person::Second);
        for (p, _) in preds {
            if let Some(g) = il_gender_type(p.gender) {
                informal_gender.push(Evidence::token(&tokens[p.index], g, p.rule));
            }
        }

        // Formal request: `proszę` in the target without "please" in the source.
        let source_has_please = source
            .split(|c: char| !c.is_alphabetic())
            .any(|w| w.eq_ignore_ascii_case("please"));
        if !source.trim().is_empty() && !source_has_please && informal_ev.is_empty() {
            if let Some(tok) = tokens.iter().find(|t| lower(t) == "proszę") {
                formal_ev.push(Evidence::token(tok, T::Formal, "formal-request"));
            }
        }

        let formality = match formal_ev.len().cmp(&informal_ev.len()) {
            std::cmp::Ordering::Greater => Some(Formality::Formal),
            std::cmp::Ordering::Less => Some(Formality::Informal),
            std::cmp::Ordering::Equal => None,
        };
        let (number_ev, gender_ev, formality_ev) = match formality {
            Some(Formality::Formal) => (formal_number, formal_gender, formal_ev),
            Some(Formality::Informal) => (informal_number, informal_gender, informal_ev),
            None => (Vec::new(), Vec::new(), Vec::new()),
        };

        let number_choice = majority(&number_ev);
        let gender_choice = majority(&gender_ev);

        let mut det = InterlocutorDetection {
            formality,
            ..Default::default()
        };
        det.evidence.extend(formality_ev);
        if let Some(t) = number_choice {
            det.number = Some(match t {
                T::Singular => InterlocutorNumber::Singular,
                _ => InterlocutorNumber::Plural,
            });
            det.evidence.extend(number_ev.into_iter().filter(|e| e.attr == t));
        }
        if let Some(t) = gender_choice {
            det.gender = Some(match t {
                T::IlFeminine => InterlocutorGender::Feminine,
                T::IlMasculine => InterlocutorGender::Masculine,
                _ => InterlocutorGender::Mixed,
            });
            det.evidence.extend(gender_ev.into_iter().filter(|e| e.attr == t));
        }
        let present = det.formality.is_some() || det.number.is_some() || det.gender.is_some();
        (present.then_some(det), nouns)
    }

    /// Full detection over a sentence pair.
    pub fn detect(&self, source: &str, target: &str) -> Detection {
        let sentence = analyze_sentence(target, self.lexicon);
        self.detect_tokens(source, &sentence)
    }

    pub fn detect_tokens(&self, source: &str, tokens: &[MorphToken]) -> Detection {
        let (speaker, mut nouns) = self.speaker_with_nouns(tokens);
        let (interlocutor, il_nouns) = self.interlocutor_with_nouns(source, tokens);
        nouns.extend(il_nouns);
        nouns.sort();
        nouns.dedup();

        let mut attrs = AttributeSet::default();
        let mut evidence = Vec::new();
        if let Some(sp) = speaker {
            attrs.sp_gender = Some(sp.gender);
            evidence.extend(sp.evidence);
        }
        if let Some(il) = interlocutor {
            attrs.il_gender = il.gender;
            attrs.il_number = il.number;
            attrs.formality = il.formality;
            evidence.extend(il.evidence);
        }
        let attrs = legalize(attrs, &evidence);
        evidence.retain(|e| attrs.contains(e.attr));
        evidence.sort();
        evidence.dedup();
        Detection {
            attrs,
            evidence,
            noun_lemmas: nouns,
        }
    }

    pub fn agree_check(&self, hypothesis: &str, t: AttributeType, source: &str) -> Agreement {
        let found = self.detect(source, hypothesis).attrs;
        if found.contains(t) {
            Agreement::Agrees
        } else if found.contains(t.reverse()) {
            Agreement::Contradicts
        } else {
            Agreement::Unmarked
        }
    }
}

fn number_type(n: Number) -> AttributeType {
    match n {
        Number::Singular => AttributeType::Singular,
        Number::Plural => AttributeType::Plural,
    }
}

fn il_gender_type(g: Gender) -> Option<AttributeType> {
    match g {
        Gender::Feminine | Gender::Nonvirile => Some(AttributeType::IlFeminine),
        Gender::Masculine | Gender::Virile => Some(AttributeType::IlMasculine),
        Gender::Neuter => None,
    }
}

/// The strictly most frequent type among the evidence, if any.
fn majority(evidence: &[Evidence]) -> Option<AttributeType> {
    let mut counts: BTreeMap<AttributeType, usize> = BTreeMap::new();
    for e in evidence {
        *counts.entry(e.attr).or_default() += 1;
    }
    let max = counts.values().copied().max()?;
    let mut winners = counts.iter().filter(|(_, c)| **c == max);
    let (first, _) = winners.next()?;
    if winners.next().is_some() {
        None
    } else {
        Some(*first)
    }
}

/// Drops interlocutor fields until the combination is legal, keeping as
/// many fields as possible and preferring the better-evidenced ones.
fn legalize(attrs: AttributeSet, evidence: &[Evidence]) -> AttributeSet {
    if attrs.is_legal() {
        return attrs;
    }
    let fields = [Attribute::IlGender, Attribute::IlNumber, Attribute::Formality];
    let support = |a: Attribute| {
        attrs
            .get(a)
            .map(|t| evidence.iter().filter(|e| e.attr == t).count())
            .unwrap_or(0)
    };
    let mut best: Option<(usize, usize, AttributeSet)> = None;
    for mask in 0u8..8 {
        let mut candidate = attrs;
        let mut kept = 0;
        let mut score = 0;
        for (bit, field) in fields.iter().enumerate() {
            if mask & (1 << bit) == 0 {
                candidate.clear(*field);
            } else if attrs.get(*field).is_some() {
                kept += 1;
                score += support(*field);
            }
        }
        if !candidate.is_legal() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((k, s, _)) => (kept, score) > (*k, *s),
        };
        if better {
            best = Some((kept, score, candidate));
        }
    }
    best.map(|(_, _, s)| s).unwrap_or_else(|| attrs.speaker_part())
}

/// Detects the attributes of a source/target pair.
pub fn detect(source: &str, target: &str, lexicon: &Lexicon) -> (AttributeSet, Vec<Evidence>) {
    let d = Detector::new(lexicon).detect(source, target);
    (d.attrs, d.evidence)
}

pub fn detect_speaker(tokens: &[MorphToken], lexicon: &Lexicon) -> Option<SpeakerDetection> {
    Detector::new(lexicon).detect_speaker(tokens)
}

pub fn detect_interlocutor(
    source: &str,
    tokens: &[MorphToken],
    lexicon: &Lexicon,
) -> Option<InterlocutorDetection> {
    Detector::new(lexicon).detect_interlocutor(source, tokens)
}

pub fn agree_check(hypothesis: &str, t: AttributeType, source: &str, lexicon: &Lexicon) -> Agreement {
    Detector::new(lexicon).agree_check(hypothesis, t, source)
}

/// Counts reported by [`build_stopwords`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordReport {
    pub first_pass_sentences: usize,
    pub unique_lemmas: usize,
    pub stopwords: usize,
    pub surviving_sentences: usize,
}

/// Output of the two-pass stopword filter.
#[derive(Debug, Clone, Default)]
pub struct StopwordFilter {
    pub stopwords: BTreeSet<String>,
    pub kept: Vec<(String, String)>,
    pub report: StopwordReport,
}

/// Two-pass filtering of noun-based gender evidence. The first pass keeps
/// pairs whose gender evidence involves a predicative noun; noun lemmas the
/// lexicon records with a single gender become stopwords; the second pass
/// drops pairs that lose all gender evidence once stopwords are ignored.
pub fn build_stopwords<I>(pairs: I, lexicon: &Lexicon) -> StopwordFilter
where
    I: IntoIterator<Item = (String, String)>,
{
    let raw = Detector::with_options(lexicon, DetectorOptions { use_stopwords: false });
    let filtered = Detector::new(lexicon);
    let fixed = lexicon.fixed_gender_nouns();

    let mut first_pass = Vec::new();
    let mut lemmas = BTreeSet::new();
    for (src, tgt) in pairs {
        let d = raw.detect(&src, &tgt);
        if d.noun_lemmas.is_empty() {
            continue;
        }
        lemmas.extend(d.noun_lemmas.iter().cloned());
        first_pass.push((src, tgt, d.attrs));
    }
    let stopwords: BTreeSet<String> = lemmas.iter().filter(|l| fixed.contains(*l)).cloned().collect();

    let mut kept = Vec::new();
    for (src, tgt, raw_attrs) in &first_pass {
        let d = filtered.detect(src, tgt);
        let had_gender = raw_attrs.sp_gender.is_some() || raw_attrs.il_gender.is_some();
        let has_gender = d.attrs.sp_gender.is_some() || d.attrs.il_gender.is_some();
        if !had_gender || has_gender {
            kept.push((src.clone(), tgt.clone()));
        }
    }
    let report = StopwordReport {
        first_pass_sentences: first_pass.len(),
        unique_lemmas: lemmas.len(),
        stopwords: stopwords.len(),
        surviving_sentences: kept.len(),
    };
    StopwordFilter {
        stopwords,
        kept,
        report,
    }
}

/// One labelled pair of the detector fixture (JSONL).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub src: String,
    pub tgt: String,
    pub attrs: AttributeSet,
    #[serde(default)]
    pub evidence: Vec<Evidence>,
}

pub fn parse_labeled_jsonl(text: &str) -> Result<Vec<LabeledPair>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Precision and recall for one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub attribute: Attribute,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub per_attribute: Vec<AttributeScore>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    /// Pairs whose detection differs from the gold set, for inspection.
    pub mismatches: Vec<(String, AttributeSet, AttributeSet)>,
}

/// Scores detection against gold labels: per attribute, a detection is a
/// true positive when it names the gold type; precision divides by all
/// detections of the attribute, recall by all gold labels for it.
pub fn score_fixture(pairs: &[LabeledPair], lexicon: &Lexicon) -> FixtureReport {
    let det = Detector::new(lexicon);
    let mut tp = [0usize; 4];
    let mut pred = [0usize; 4];
    let mut gold = [0usize; 4];
    let mut mismatches = Vec::new();
    for pair in pairs {
        let found = det.detect(&pair.src, &pair.tgt).attrs;
        if found != pair.attrs {
            mismatches.push((pair.tgt.clone(), pair.attrs, found));
        }
        for (k, a) in Attribute::ALL.iter().enumerate() {
            let f = found.get(*a);
            let g = pair.attrs.get(*a);
            if f.is_some() {
                pred[k] += 1;
            }
            if g.is_some() {
                gold[k] += 1;
            }
            if f.is_some() && f == g {
                tp[k] += 1;
            }
        }
    }
    let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    let per_attribute: Vec<AttributeScore> = Attribute::ALL
        .iter()
        .enumerate()
        .map(|(k, a)| AttributeScore {
            attribute: *a,
            true_positives: tp[k],
            predicted: pred[k],
            gold: gold[k],
            precision: ratio(tp[k], pred[k]),
            recall: ratio(tp[k], gold[k]),
        })
        .collect();
    let mean_precision = per_attribute.iter().map(|s| s.precision).sum::<f64>() / 4.0;
    let mean_recall = per_attribute.iter().map(|s| s.recall).sum::<f64>() / 4.0;
    FixtureReport {
        per_attribute,
        mean_precision,
        mean_recall,
        mismatches,
    }
}

/// The fixture shipped with the crate.
pub fn builtin_fixture() -> Vec<LabeledPair> {
    parse_labeled_jsonl(include_str!("../data/detector_fixture.jsonl")).expect("bundled fixture parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        Lexicon::builtin()
    }

    fn set(s: &str) -> AttributeSet {
        AttributeSet::parse_list(s).unwrap()
    }

    #[test]
    fn speaker_examples() {
        let l = lex();
        let d = Detector::new(&l);
        for (tgt, gender, ev) in [
            ("Jestem amatorką.", SpeakerGender::Feminine, "amatorką"),
            ("Jestem całkiem sam.", SpeakerGender::Masculine, "sam"),
            ("Przyniosłem ci coś.", SpeakerGender::Masculine, "Przyniosłem"),
        ] {
            let s = analyze_sentence(tgt, &l);
            let sp = d.detect_speaker(&s).unwrap_or_else(|| panic!("no speaker in {tgt}"));
            assert_eq!(sp.gender, gender, "{tgt}");
            let chars: Vec<char> = tgt.chars().collect();
            let spans: Vec<String> = sp
                .evidence
                .iter()
                .map(|e| chars[e.start..e.end].iter().collect())
                .collect();
            assert!(spans.iter().any(|s| s == ev), "{tgt}: {spans:?}");
        }
    }

    #[test]
    fn interlocutor_examples() {
        let l = lex();
        assert_eq!(detect("You are wrong.", "Mylą się państwo.", &l).0, set("il:mixed plural formal"));
        assert_eq!(detect("Are you sick?", "Jesteś chora?", &l).0, set("il:feminine singular informal"));
        assert_eq!(detect("Go ahead.", "Proszę kontynuować.", &l).0, set("formal"));
    }

    #[test]
    fn please_in_source_disables_request_rule() {
        let l = lex();
        assert_eq!(detect("Please go ahead.", "Proszę kontynuować.", &l).0, AttributeSet::EMPTY);
        assert_eq!(detect("", "Proszę kontynuować.", &l).0, AttributeSet::EMPTY);
    }

    #[test]
    fn composite_examples() {
        let l = lex();
        assert_eq!(detect("I'm an amateur.", "Jestem amatorką.", &l).0, set("sp:feminine"));
        assert_eq!(
            detect("Have you met Pete?", "Poznaliście Pete'a?", &l).0,
            set("il:masculine plural informal")
        );
        assert_eq!(detect("The sky is blue.", "Niebo jest niebieskie.", &l).0, AttributeSet::EMPTY);
    }

    #[test]
    fn title_use_is_not_formal_address() {
        let l = lex();
        assert_eq!(detect("Ms Smith is here.", "Pani Smith tu jest.", &l).0, AttributeSet::EMPTY);
        assert_eq!(detect("That lady is nice.", "Ta pani jest miła.", &l).0, AttributeSet::EMPTY);
    }

    #[test]
    fn agree_check_examples() {
        let l = lex();
        use AttributeType as T;
        assert_eq!(agree_check("Jestem amatorką.", T::SpFeminine, "I'm an amateur.", &l), Agreement::Agrees);
        assert_eq!(agree_check("Jestem amatorką.", T::SpMasculine, "I'm an amateur.", &l), Agreement::Contradicts);
        assert_eq!(agree_check("Niebo jest niebieskie.", T::SpFeminine, "The sky is blue.", &l), Agreement::Unmarked);
        // Mixed reverses to feminine.
        assert_eq!(agree_check("Dla pani martini?", T::IlMixed, "Martini for you?", &l), Agreement::Contradicts);
    }

    #[test]
    fn tie_leaves_speaker_absent() {
        let l = lex();
        assert_eq!(detect("I was and I was.", "Byłam i byłem.", &l).0.sp_gender, None);
        assert_eq!(
            detect("I came, I saw, I came.", "Przyszłam, byłem, byłam.", &l).0.sp_gender,
            Some(SpeakerGender::Feminine)
        );
    }

    #[test]
    fn majority_vote_for_interlocutor_number() {
        let l = lex();
        // Two plural verbs against one singular.
        let (attrs, _) = detect(
            "Go help her. Maybe you will figure it out together.",
            "Idź jej pomóc. Może razem to rozgryziecie, zrozumiecie.",
            &l,
        );
        assert_eq!(attrs.il_number, Some(InterlocutorNumber::Plural));
    }

    #[test]
    fn stopword_pass() {
        let l = lex();
        let pairs = vec![
            ("I'm a coward.".to_string(), "Jestem tchórzem.".to_string()),
            ("I'm an amateur.".to_string(), "Jestem amatorką.".to_string()),
        ];
        let out = build_stopwords(pairs, &l);
        assert!(out.stopwords.contains("tchórz"));
        assert!(!out.stopwords.contains("amator"));
        assert_eq!(out.kept, vec![("I'm an amateur.".to_string(), "Jestem amatorką.".to_string())]);
        assert_eq!(out.report.first_pass_sentences, 2);
        assert_eq!(out.report.unique_lemmas, 2);
        assert_eq!(out.report.stopwords, 1);
        assert_eq!(out.report.surviving_sentences, 1);

        let empty = build_stopwords(Vec::new(), &l);
        assert!(empty.stopwords.is_empty() && empty.kept.is_empty());
    }

    #[test]
    fn every_detected_type_has_evidence_within_the_sentence() {
        let l = lex();
        for pair in builtin_fixture() {
            let (attrs, evidence) = detect(&pair.src, &pair.tgt, &l);
            let n = pair.tgt.chars().count();
            for t in attrs.types() {
                assert!(evidence.iter().any(|e| e.attr == t), "{}: {t} without evidence", pair.tgt);
            }
            assert!(evidence.iter().all(|e| e.start < e.end && e.end <= n));
            assert!(attrs.is_legal());
        }
    }
}
