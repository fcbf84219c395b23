//! The UAS data model: record types, closed-vocabulary ontology, strict
//! parsing and canonical serialization, plus the JSON-Lines corpus manifest.

mod manifest;
mod ontology;
mod parse;

pub use manifest::{read_manifest, write_jsonl_line, CorpusEntry, DomainTag, ManifestError, ManifestReader};
pub use ontology::{ContradictionRule, Ontology, OntologyError};
pub use parse::{parse_uas, parse_uas_lenient, parse_uas_value, ParseMode, SchemaError};

use serde::{Deserialize, Serialize};

/// Dotted paths of every leaf field, in canonical order.
pub mod paths {
    pub const TRANSCRIPTION: &str = "transcription";
    pub const AGE: &str = "paralinguistics.age";
    pub const GENDER: &str = "paralinguistics.gender";
    pub const EMOTION: &str = "paralinguistics.emotion";
    pub const ACCENT: &str = "paralinguistics.accent";
    pub const PROSODY: &str = "paralinguistics.prosody";
    pub const TIMBRE: &str = "paralinguistics.timbre";
    pub const DESCRIPTION: &str = "nonLinguisticEvents.description";
    pub const DISCRETE_EVENTS: &str = "nonLinguisticEvents.discreteEvents";
    pub const CONTINUOUS_EVENTS: &str = "nonLinguisticEvents.continuousEvents";

    pub const PARALINGUISTIC: [&str; 6] = [AGE, GENDER, EMOTION, ACCENT, PROSODY, TIMBRE];

    /// The nine auditable leaf fields (everything except the transcription).
    pub const AUDITABLE: [&str; 9] = [
        AGE,
        GENDER,
        EMOTION,
        ACCENT,
        PROSODY,
        TIMBRE,
        DESCRIPTION,
        DISCRETE_EVENTS,
        CONTINUOUS_EVENTS,
    ];
}

/// One audio clip's structured annotation.
///
/// Field declaration order is the canonical key order; `serialize_canonical`
/// relies on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct UasRecord {
    pub transcription: Option<String>,
    pub paralinguistics: Paralinguistics,
    pub non_linguistic_events: NonLinguisticEvents,
}

/// Speaker-level attributes. Categorical values are kept as text so that
/// out-of-vocabulary labels survive parsing and reach the ontology check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Paralinguistics {
    pub age: Option<String>,
    pub gender: Option<String>,
    pub emotion: Option<String>,
    pub accent: Option<String>,
    pub prosody: Option<String>,
    pub timbre: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct NonLinguisticEvents {
    pub description: String,
    pub discrete_events: Vec<AcousticEvent>,
    pub continuous_events: Vec<AcousticEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcousticEvent {
    pub label: String,
    pub characteristic: String,
}

impl AcousticEvent {
    pub fn new(label: impl Into<String>, characteristic: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            characteristic: characteristic.into(),
        }
    }
}

impl Paralinguistics {
    /// Values in canonical order, paired with their dotted paths.
    pub fn entries(&self) -> [(&'static str, Option<&str>); 6] {
        [
            (paths::AGE, self.age.as_deref()),
            (paths::GENDER, self.gender.as_deref()),
            (paths::EMOTION, self.emotion.as_deref()),
            (paths::ACCENT, self.accent.as_deref()),
            (paths::PROSODY, self.prosody.as_deref()),
            (paths::TIMBRE, self.timbre.as_deref()),
        ]
    }

    pub fn all_absent(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_none())
    }

    pub fn all_present(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_some())
    }

    /// Looks up a paralinguistic value by dotted path.
    pub fn get(&self, path: &str) -> Option<&str> {
        self.entries()
            .into_iter()
            .find(|(p, _)| *p == path)
            .and_then(|(_, v)| v)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Option<String>> {
        match path {
            paths::AGE => Some(&mut self.age),
            paths::GENDER => Some(&mut self.gender),
            paths::EMOTION => Some(&mut self.emotion),
            paths::ACCENT => Some(&mut self.accent),
            paths::PROSODY => Some(&mut self.prosody),
            paths::TIMBRE => Some(&mut self.timbre),
            _ => None,
        }
    }
}

impl NonLinguisticEvents {
    /// Every event across both lists, tagged with its dotted path.
    pub fn all_events(&self) -> impl Iterator<Item = (String, &AcousticEvent)> {
        let discrete = self
            .discrete_events
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("{}[{i}]", paths::DISCRETE_EVENTS), e));
        let continuous = self
            .continuous_events
            .iter()
            .enumerate()
            .map(|(i, e)| (format!("{}[{i}]", paths::CONTINUOUS_EVENTS), e));
        discrete.chain(continuous)
    }
}

impl UasRecord {
    /// True iff the transcription is present and non-blank.
    pub fn is_speech(&self) -> bool {
        is_speech(self)
    }
}

pub fn is_speech(record: &UasRecord) -> bool {
    record
        .transcription
        .as_deref()
        .is_some_and(|t| !t.trim().is_empty())
}

/// Deterministic compact rendering with fixed key order and explicit nulls.
pub fn serialize_canonical(record: &UasRecord) -> String {
    // Struct serialization cannot fail: all keys are strings, no maps.
    serde_json::to_string(record).expect("UasRecord serialization is infallible")
}
