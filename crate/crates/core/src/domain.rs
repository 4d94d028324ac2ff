//! Entity-matching domain types: records, pairs, pools and labels.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use indexmap::IndexMap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("record has no attributes")]
    EmptyRecord,
    #[error("attribute name must be nonempty")]
    EmptyAttributeName,
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("duplicate pair id `{0}`")]
    DuplicatePairId(String),
    #[error("pair id must be nonempty")]
    EmptyPairId,
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(i64),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

/// Match / non-match decision. Serialized as the integer `1` / `0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub enum BinaryLabel {
    NonMatch,
    Match,
}

impl BinaryLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            BinaryLabel::NonMatch => 0,
            BinaryLabel::Match => 1,
        }
    }

    pub fn is_match(self) -> bool {
        self == BinaryLabel::Match
    }

    pub fn flipped(self) -> Self {
        match self {
            BinaryLabel::NonMatch => BinaryLabel::Match,
            BinaryLabel::Match => BinaryLabel::NonMatch,
        }
    }

    /// The word used for this label inside rendered demonstrations.
    pub fn answer_word(self) -> &'static str {
        match self {
            BinaryLabel::NonMatch => "no",
            BinaryLabel::Match => "yes",
        }
    }
}

impl From<bool> for BinaryLabel {
    fn from(is_match: bool) -> Self {
        if is_match {
            BinaryLabel::Match
        } else {
            BinaryLabel::NonMatch
        }
    }
}

impl TryFrom<i64> for BinaryLabel {
    type Error = DomainError;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(BinaryLabel::NonMatch),
            1 => Ok(BinaryLabel::Match),
            other => Err(DomainError::InvalidLabel(other)),
        }
    }
}

impl From<BinaryLabel> for u8 {
    fn from(label: BinaryLabel) -> u8 {
        label.as_u8()
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Opaque identifier of a pair within a pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairId(String);

impl PairId {
    pub fn new(id: impl Into<String>) -> Self {
        PairId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PairId {
    fn from(s: &str) -> Self {
        PairId(s.to_string())
    }
}

impl From<String> for PairId {
    fn from(s: String) -> Self {
        PairId(s)
    }
}

/// One entity, as an ordered attribute map (e.g. title, authors, venue, year).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct EntityRecord {
    attributes: IndexMap<String, String>,
}

impl EntityRecord {
    pub fn new<K, V, I>(attributes: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut map = IndexMap::new();
        for (name, value) in attributes {
            let name = name.into();
            if name.is_empty() {
                return Err(DomainError::EmptyAttributeName);
            }
            if map.contains_key(&name) {
                return Err(DomainError::DuplicateAttribute(name));
            }
            map.insert(name, value.into());
        }
        if map.is_empty() {
            return Err(DomainError::EmptyRecord);
        }
        Ok(EntityRecord { attributes: map })
    }

    pub fn attributes(&self) -> impl Iterator<Item = (&str, &str)> {
        self.attributes.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// `attribute: value` lines in attribute order.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (i, (k, v)) in self.attributes.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
        }
        out
    }
}

impl<'de> Deserialize<'de> for EntityRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RecordVisitor;

        impl<'de> Visitor<'de> for RecordVisitor {
            type Value = EntityRecord;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonempty map of attribute names to text values")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<EntityRecord, A::Error> {
                let mut entries: Vec<(String, String)> = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, AttributeValue>()? {
                    entries.push((k, v.0));
                }
                EntityRecord::new(entries).map_err(serde::de::Error::custom)
            }
        }

        deserializer.deserialize_map(RecordVisitor)
    }
}

/// Attribute values may arrive as strings or bare numbers (`"year": 2004`).
struct AttributeValue(String);

impl<'de> Deserialize<'de> for AttributeValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
            Bool(bool),
            Null(()),
        }
        Ok(AttributeValue(match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s,
            Raw::Int(i) => i.to_string(),
            Raw::Float(x) => x.to_string(),
            Raw::Bool(b) => b.to_string(),
            Raw::Null(()) => String::new(),
        }))
    }
}

/// A candidate ⟨left, right⟩ with an optional gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityPair {
    pub id: PairId,
    pub left: EntityRecord,
    pub right: EntityRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<BinaryLabel>,
}

impl EntityPair {
    pub fn new(id: impl Into<PairId>, left: EntityRecord, right: EntityRecord) -> Self {
        EntityPair {
            id: id.into(),
            left,
            right,
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: BinaryLabel) -> Self {
        self.gold = Some(gold);
        self
    }
}

/// An ordered collection of pairs with unique ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct SamplingPool {
    pairs: Vec<EntityPair>,
}

impl SamplingPool {
    pub fn new(pairs: Vec<EntityPair>) -> Result<Self, DomainError> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for pair in &pairs {
            if pair.id.as_str().is_empty() {
                return Err(DomainError::EmptyPairId);
            }
            if !seen.insert(pair.id.clone()) {
                return Err(DomainError::DuplicatePairId(pair.id.to_string()));
            }
        }
        Ok(SamplingPool { pairs })
    }

    pub fn pairs(&self) -> &[EntityPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, id: &PairId) -> Option<&EntityPair> {
        self.pairs.iter().find(|p| &p.id == id)
    }

    pub fn contains(&self, id: &PairId) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &PairId> {
        self.pairs.iter().map(|p| &p.id)
    }

    /// Parses line-delimited JSON, one pair per line. Blank lines are skipped.
    pub fn from_jsonl_str(text: &str, origin: &str) -> Result<Self, DomainError> {
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let pair: EntityPair = serde_json::from_str(line).map_err(|e| DomainError::Parse {
                path: origin.to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            pairs.push(pair);
        }
        SamplingPool::new(pairs)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, DomainError> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| DomainError::Io {
            path: display.clone(),
            message: e.to_string(),
        })?;
        let mut text = String::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| DomainError::Io {
                path: display.clone(),
                message: e.to_string(),
            })?;
            text.push_str(&line);
            text.push('\n');
        }
        SamplingPool::from_jsonl_str(&text, &display)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for pair in &self.pairs {
            out.push_str(&serde_json::to_string(pair).expect("pair serializes"));
            out.push('\n');
        }
        out
    }
}

impl<'de> Deserialize<'de> for SamplingPool {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<EntityPair>::deserialize(deserializer)?;
        SamplingPool::new(pairs).map_err(serde::de::Error::custom)
    }
}

/// Committee result for one pair: votes in temperature-schedule order, R⁺ and H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub pair_id: PairId,
    pub votes: Vec<BinaryLabel>,
    pub positive_ratio: f64,
    pub entropy: f64,
    /// Votes that could not be parsed and were replaced by the minority label.
    #[serde(default)]
    pub unparseable_votes: usize,
}
