//! Speaker and interlocutor attributes, their types and the legal combinations.
//!
//! Four attributes are controlled: speaker gender, interlocutor gender,
//! interlocutor number and formality. Each has a small closed set of types;
//! the nine types are enumerated in [`AttributeType::ALL`], whose order is the
//! canonical order used for tags, embedding rows and inference.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttributeError {
    #[error("unknown attribute type `{0}`")]
    UnknownType(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown context group `{0}`")]
    UnknownGroup(String),
    #[error("conflicting types for {attribute}: {first} and {second}")]
    Conflict {
        attribute: Attribute,
        first: AttributeType,
        second: AttributeType,
    },
}

/// The four controlled attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    SpGender,
    IlGender,
    IlNumber,
    Formality,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::SpGender,
        Attribute::IlGender,
        Attribute::IlNumber,
        Attribute::Formality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::SpGender => "sp_gender",
            Attribute::IlGender => "il_gender",
            Attribute::IlNumber => "il_number",
            Attribute::Formality => "formality",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = AttributeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sp_gender" | "sp" | "spgender" => Ok(Attribute::SpGender),
            "il_gender" | "ilgender" => Ok(Attribute::IlGender),
            "il_number" | "ilnumber" => Ok(Attribute::IlNumber),
            "formality" => Ok(Attribute::Formality),
            _ => Err(AttributeError::UnknownAttribute(s.to_string())),
        }
    }
}

/// One of the nine attribute types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeType {
    SpFeminine,
    SpMasculine,
    IlFeminine,
    IlMasculine,
    IlMixed,
    Singular,
    Plural,
    Informal,
    Formal,
}

impl AttributeType {
    /// Canonical order; also the row order of type embedding tables.
    pub const ALL: [AttributeType; 9] = [
        AttributeType::SpFeminine,
        AttributeType::SpMasculine,
        AttributeType::IlFeminine,
        AttributeType::IlMasculine,
        AttributeType::IlMixed,
        AttributeType::Singular,
        AttributeType::Plural,
        AttributeType::Informal,
        AttributeType::Formal,
    ];

    pub const COUNT: usize = 9;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Name without brackets, e.g. `sp:feminine`.
    pub fn name(self) -> &'static str {
        match self {
            AttributeType::SpFeminine => "sp:feminine",
            AttributeType::SpMasculine => "sp:masculine",
            AttributeType::IlFeminine => "il:feminine",
            AttributeType::IlMasculine => "il:masculine",
            AttributeType::IlMixed => "il:mixed",
            AttributeType::Singular => "singular",
            AttributeType::Plural => "plural",
            AttributeType::Informal => "informal",
            AttributeType::Formal => "formal",
        }
    }

    /// Tag surface form, e.g. `<sp:feminine>`.
    pub fn tag(self) -> &'static str {
        match self {
            AttributeType::SpFeminine => "<sp:feminine>",
            AttributeType::SpMasculine => "<sp:masculine>",
            AttributeType::IlFeminine => "<il:feminine>",
            AttributeType::IlMasculine => "<il:masculine>",
            AttributeType::IlMixed => "<il:mixed>",
            AttributeType::Singular => "<singular>",
            AttributeType::Plural => "<plural>",
            AttributeType::Informal => "<informal>",
            AttributeType::Formal => "<formal>",
        }
    }

    pub fn attribute(self) -> Attribute {
        match self {
            AttributeType::SpFeminine | AttributeType::SpMasculine => Attribute::SpGender,
            AttributeType::IlFeminine | AttributeType::IlMasculine | AttributeType::IlMixed => {
                Attribute::IlGender
            }
            AttributeType::Singular | AttributeType::Plural => Attribute::IlNumber,
            AttributeType::Informal | AttributeType::Formal => Attribute::Formality,
        }
    }

    /// The reverse type. Interlocutor gender is asymmetric: both masculine and
    /// mixed reverse to feminine, feminine reverses to masculine.
    pub fn reverse(self) -> AttributeType {
        match self {
            AttributeType::SpFeminine => AttributeType::SpMasculine,
            AttributeType::SpMasculine => AttributeType::SpFeminine,
            AttributeType::IlFeminine => AttributeType::IlMasculine,
            AttributeType::IlMasculine => AttributeType::IlFeminine,
            AttributeType::IlMixed => AttributeType::IlFeminine,
            AttributeType::Singular => AttributeType::Plural,
            AttributeType::Plural => AttributeType::Singular,
            AttributeType::Informal => AttributeType::Formal,
            AttributeType::Formal => AttributeType::Informal,
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.tag() == tag)
    }
}

impl fmt::Display for AttributeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttributeType {
    type Err = AttributeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bare = s
            .strip_prefix('<')
            .and_then(|s| s.strip_suffix('>'))
            .unwrap_or(s);
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == bare)
            .ok_or_else(|| AttributeError::UnknownType(s.to_string()))
    }
}

impl Serialize for AttributeType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AttributeType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeakerGender {
    Feminine,
    Masculine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterlocutorGender {
    Feminine,
    Masculine,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterlocutorNumber {
    Singular,
    Plural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formality {
    Informal,
    Formal,
}

/// Up to four attribute values; absent fields carry no information.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeSet {
    #[serde(rename = "sp", default)]
    pub sp_gender: Option<SpeakerGender>,
    #[serde(default)]
    pub il_gender: Option<InterlocutorGender>,
    #[serde(default)]
    pub il_number: Option<InterlocutorNumber>,
    #[serde(default)]
    pub formality: Option<Formality>,
}

impl AttributeSet {
    pub const EMPTY: AttributeSet = AttributeSet {
        sp_gender: None,
        il_gender: None,
        il_number: None,
        formality: None,
    };

    /// Builds a set from individual types; two types of one attribute conflict.
    pub fn from_types<I>(types: I) -> Result<Self, AttributeError>
    where
        I: IntoIterator<Item = AttributeType>,
    {
        let mut set = AttributeSet::default();
        for t in types {
            if let Some(prev) = set.get(t.attribute()) {
                if prev != t {
                    return Err(AttributeError::Conflict {
                        attribute: t.attribute(),
                        first: prev,
                        second: t,
                    });
                }
            }
            set.insert(t);
        }
        Ok(set)
    }

    /// Parses a whitespace, comma or `+` separated list of types; `{}`, `-`
    /// and the empty string denote the empty set.
    pub fn parse_list(s: &str) -> Result<Self, AttributeError> {
        let types = s
            .split(|c: char| c.is_whitespace() || c == ',' || c == '+')
            .filter(|p| !p.is_empty() && *p != "{}" && *p != "-")
            .map(str::parse)
            .collect::<Result<Vec<AttributeType>, _>>()?;
        Self::from_types(types)
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::EMPTY
    }

    pub fn len(&self) -> usize {
        self.types().len()
    }

    pub fn insert(&mut self, t: AttributeType) {
        match t {
            AttributeType::SpFeminine => self.sp_gender = Some(SpeakerGender::Feminine),
            AttributeType::SpMasculine => self.sp_gender = Some(SpeakerGender::Masculine),
            AttributeType::IlFeminine => self.il_gender = Some(InterlocutorGender::Feminine),
            AttributeType::IlMasculine => self.il_gender = Some(InterlocutorGender::Masculine),
            AttributeType::IlMixed => self.il_gender = Some(InterlocutorGender::Mixed),
            AttributeType::Singular => self.il_number = Some(InterlocutorNumber::Singular),
            AttributeType::Plural => self.il_number = Some(InterlocutorNumber::Plural),
            AttributeType::Informal => self.formality = Some(Formality::Informal),
            AttributeType::Formal => self.formality = Some(Formality::Formal),
        }
    }

    pub fn clear(&mut self, attribute: Attribute) {
        match attribute {
            Attribute::SpGender => self.sp_gender = None,
            Attribute::IlGender => self.il_gender = None,
            Attribute::IlNumber => self.il_number = None,
            Attribute::Formality => self.formality = None,
        }
    }

    pub fn get(&self, attribute: Attribute) -> Option<AttributeType> {
        match attribute {
            Attribute::SpGender => self.sp_gender.map(|g| match g {
                SpeakerGender::Feminine => AttributeType::SpFeminine,
                SpeakerGender::Masculine => AttributeType::SpMasculine,
            }),
            Attribute::IlGender => self.il_gender.map(|g| match g {
                InterlocutorGender::Feminine => AttributeType::IlFeminine,
                InterlocutorGender::Masculine => AttributeType::IlMasculine,
                InterlocutorGender::Mixed => AttributeType::IlMixed,
            }),
            Attribute::IlNumber => self.il_number.map(|n| match n {
                InterlocutorNumber::Singular => AttributeType::Singular,
                InterlocutorNumber::Plural => AttributeType::Plural,
            }),
            Attribute::Formality => self.formality.map(|f| match f {
                Formality::Informal => AttributeType::Informal,
                Formality::Formal => AttributeType::Formal,
            }),
        }
    }

    pub fn contains(&self, t: AttributeType) -> bool {
        self.get(t.attribute()) == Some(t)
    }

    /// Present types in canonical order.
    pub fn types(&self) -> Vec<AttributeType> {
        Attribute::ALL.iter().filter_map(|a| self.get(*a)).collect()
    }

    /// Keep only the selected attribute.
    pub fn isolate(&self, attribute: Attribute) -> AttributeSet {
        let mut out = AttributeSet::default();
        if let Some(t) = self.get(attribute) {
            out.insert(t);
        }
        out
    }

    pub fn speaker_part(&self) -> AttributeSet {
        self.isolate(Attribute::SpGender)
    }

    pub fn interlocutor_part(&self) -> AttributeSet {
        AttributeSet {
            sp_gender: None,
            ..*self
        }
    }

    /// Whether the interlocutor fields form one of the twelve interlocutor
    /// rows (or are all absent). The speaker field is always independent.
    pub fn is_legal(&self) -> bool {
        let il = self.interlocutor_part();
        il.is_empty() || InterlocutorRow::ALL.iter().any(|row| row.attributes() == il)
    }

    /// The context group: the interlocutor row when interlocutor fields are
    /// present, otherwise the speaker group, otherwise none.
    pub fn group(&self) -> Option<ContextGroup> {
        let il = self.interlocutor_part();
        if !il.is_empty() {
            return InterlocutorRow::ALL
                .iter()
                .find(|row| row.attributes() == il)
                .map(|row| ContextGroup::Interlocutor(*row));
        }
        self.sp_gender.map(ContextGroup::Speaker)
    }

    /// Every legal set: optional speaker crossed with an optional interlocutor row.
    pub fn all_legal() -> Vec<AttributeSet> {
        let speakers = [None, Some(SpeakerGender::Feminine), Some(SpeakerGender::Masculine)];
        let mut out = Vec::with_capacity(39);
        for sp in speakers {
            out.push(AttributeSet {
                sp_gender: sp,
                ..AttributeSet::EMPTY
            });
            for row in InterlocutorRow::ALL {
                out.push(AttributeSet {
                    sp_gender: sp,
                    ..row.attributes()
                });
            }
        }
        out
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let types = self.types();
        if types.is_empty() {
            return f.write_str("{}");
        }
        let names: Vec<&str> = types.iter().map(|t| t.name()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// The twelve interlocutor combinations that occur in annotated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InterlocutorRow {
    FemininePluralInformal,
    MasculinePluralInformal,
    PluralInformal,
    SingularInformal,
    FeminineSingularInformal,
    MasculineSingularInformal,
    FemininePluralFormal,
    MasculinePluralFormal,
    MixedPluralFormal,
    FeminineSingularFormal,
    MasculineSingularFormal,
    Formal,
}

impl InterlocutorRow {
    pub const ALL: [InterlocutorRow; 12] = [
        InterlocutorRow::FemininePluralInformal,
        InterlocutorRow::MasculinePluralInformal,
        InterlocutorRow::PluralInformal,
        InterlocutorRow::SingularInformal,
        InterlocutorRow::FeminineSingularInformal,
        InterlocutorRow::MasculineSingularInformal,
        InterlocutorRow::FemininePluralFormal,
        InterlocutorRow::MasculinePluralFormal,
        InterlocutorRow::MixedPluralFormal,
        InterlocutorRow::FeminineSingularFormal,
        InterlocutorRow::MasculineSingularFormal,
        InterlocutorRow::Formal,
    ];

    pub fn attributes(self) -> AttributeSet {
        use Formality::*;
        use InterlocutorGender as G;
        use InterlocutorNumber as N;
        let (g, n, f) = match self {
            InterlocutorRow::FemininePluralInformal => (Some(G::Feminine), Some(N::Plural), Informal),
            InterlocutorRow::MasculinePluralInformal => (Some(G::Masculine), Some(N::Plural), Informal),
            InterlocutorRow::PluralInformal => (None, Some(N::Plural), Informal),
            InterlocutorRow::SingularInformal => (None, Some(N::Singular), Informal),
            InterlocutorRow::FeminineSingularInformal => (Some(G::Feminine), Some(N::Singular), Informal),
            InterlocutorRow::MasculineSingularInformal => (Some(G::Masculine), Some(N::Singular), Informal),
            InterlocutorRow::FemininePluralFormal => (Some(G::Feminine), Some(N::Plural), Formal),
            InterlocutorRow::MasculinePluralFormal => (Some(G::Masculine), Some(N::Plural), Formal),
            InterlocutorRow::MixedPluralFormal => (Some(G::Mixed), Some(N::Plural), Formal),
            InterlocutorRow::FeminineSingularFormal => (Some(G::Feminine), Some(N::Singular), Formal),
            InterlocutorRow::MasculineSingularFormal => (Some(G::Masculine), Some(N::Singular), Formal),
            InterlocutorRow::Formal => (None, None, Formal),
        };
        AttributeSet {
            sp_gender: None,
            il_gender: g,
            il_number: n,
            formality: Some(f),
        }
    }
}

/// One of the fourteen context groups: two speaker groups and twelve
/// interlocutor rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContextGroup {
    Speaker(SpeakerGender),
    Interlocutor(InterlocutorRow),
}

impl ContextGroup {
    pub const COUNT: usize = 14;

    pub fn all() -> [ContextGroup; 14] {
        let mut out = [ContextGroup::Speaker(SpeakerGender::Feminine); 14];
        out[1] = ContextGroup::Speaker(SpeakerGender::Masculine);
        for (i, row) in InterlocutorRow::ALL.iter().enumerate() {
            out[i + 2] = ContextGroup::Interlocutor(*row);
        }
        out
    }

    pub fn index(self) -> usize {
        match self {
            ContextGroup::Speaker(SpeakerGender::Feminine) => 0,
            ContextGroup::Speaker(SpeakerGender::Masculine) => 1,
            ContextGroup::Interlocutor(row) => 2 + row as usize,
        }
    }

    /// The attribute set that defines the group.
    pub fn attributes(self) -> AttributeSet {
        match self {
            ContextGroup::Speaker(g) => AttributeSet {
                sp_gender: Some(g),
                ..AttributeSet::EMPTY
            },
            ContextGroup::Interlocutor(row) => row.attributes(),
        }
    }

    /// Stable identifier, the defining types joined by commas.
    pub fn id(self) -> String {
        self.attributes()
            .types()
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for ContextGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for ContextGroup {
    type Err = AttributeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let set = AttributeSet::parse_list(s).map_err(|_| AttributeError::UnknownGroup(s.to_string()))?;
        ContextGroup::all()
            .into_iter()
            .find(|g| g.attributes() == set)
            .ok_or_else(|| AttributeError::UnknownGroup(s.to_string()))
    }
}

impl Serialize for ContextGroup {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for ContextGroup {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
