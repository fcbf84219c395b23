use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OntologyError {
    #[error("{0} is empty")]
    EmptySet(&'static str),
    #[error("{set} contains duplicate label {label:?}")]
    DuplicateLabel { set: &'static str, label: String },
    #[error("contradiction rule for {gender:?} has an empty forbidden phrase")]
    EmptyPhrase { gender: String },
    #[error("contradiction rule names gender {0:?}, which is not in genderSet")]
    UnknownGender(String),
    #[error("cannot parse ontology document: {0}")]
    Parse(String),
}

/// A gender label paired with a phrase that contradicts it when found in the
/// timbre or prosody description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContradictionRule {
    pub gender: String,
    pub forbidden: String,
}

/// Closed vocabularies for the categorical fields and the gender/voice
/// contradiction lexicon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Ontology {
    pub emotion_set: Vec<String>,
    pub age_set: Vec<String>,
    pub gender_set: Vec<String>,
    #[serde(default)]
    pub contradiction_lexicon: Vec<ContradictionRule>,
}

pub const DEFAULT_EMOTIONS: [&str; 7] = [
    "Anger",
    "Disgust",
    "Sadness",
    "Happiness",
    "Neutral",
    "Surprise",
    "Fear",
];
pub const DEFAULT_AGES: [&str; 3] = ["Child", "Adult", "Elderly"];
pub const DEFAULT_GENDERS: [&str; 2] = ["Male", "Female"];

const DEFAULT_LEXICON: [(&str, &str); 8] = [
    ("Male", "feminine"),
    ("Male", "female voice"),
    ("Male", "high-pitched feminine"),
    ("Male", "girlish"),
    ("Female", "masculine"),
    ("Female", "male voice"),
    ("Female", "deep masculine"),
    ("Female", "baritone"),
];

impl Default for Ontology {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            emotion_set: owned(&DEFAULT_EMOTIONS),
            age_set: owned(&DEFAULT_AGES),
            gender_set: owned(&DEFAULT_GENDERS),
            contradiction_lexicon: DEFAULT_LEXICON
                .iter()
                .map(|(g, f)| ContradictionRule {
                    gender: g.to_string(),
                    forbidden: f.to_string(),
                })
                .collect(),
        }
    }
}

impl Ontology {
    /// Parses a TOML document and checks the set invariants.
    pub fn from_toml(text: &str) -> Result<Self, OntologyError> {
        let ontology: Ontology = toml::from_str(text).map_err(|e| OntologyError::Parse(e.to_string()))?;
        ontology.check()?;
        Ok(ontology)
    }

    pub fn check(&self) -> Result<(), OntologyError> {
        for (name, set) in [
            ("emotionSet", &self.emotion_set),
            ("ageSet", &self.age_set),
            ("genderSet", &self.gender_set),
        ] {
            if set.is_empty() {
                return Err(OntologyError::EmptySet(name));
            }
            let mut seen = HashSet::new();
            for label in set {
                if !seen.insert(label.as_str()) {
                    return Err(OntologyError::DuplicateLabel {
                        set: name,
                        label: label.clone(),
                    });
                }
            }
        }
        for rule in &self.contradiction_lexicon {
            if !self.gender_set.contains(&rule.gender) {
                return Err(OntologyError::UnknownGender(rule.gender.clone()));
            }
            if rule.forbidden.trim().is_empty() {
                return Err(OntologyError::EmptyPhrase {
                    gender: rule.gender.clone(),
                });
            }
        }
        Ok(())
    }

    /// Closed set for a categorical dotted path, if the path is categorical.
    pub fn closed_set(&self, path: &str) -> Option<&[String]> {
        match path {
            super::paths::AGE => Some(&self.age_set),
            super::paths::GENDER => Some(&self.gender_set),
            super::paths::EMOTION => Some(&self.emotion_set),
            _ => None,
        }
    }

    pub fn is_emotion(&self, label: &str) -> bool {
        self.emotion_set.iter().any(|l| l == label)
    }

    pub fn is_age(&self, label: &str) -> bool {
        self.age_set.iter().any(|l| l == label)
    }

    pub fn is_gender(&self, label: &str) -> bool {
        self.gender_set.iter().any(|l| l == label)
    }

    /// First forbidden phrase for `gender` occurring in `text`, matched
    /// case-insensitively on word boundaries.
    pub fn find_contradiction<'a>(&'a self, gender: &str, text: &str) -> Option<&'a str> {
        let haystack = text.to_lowercase();
        self.contradiction_lexicon
            .iter()
            .filter(|r| r.gender == gender)
            .map(|r| r.forbidden.as_str())
            .find(|phrase| contains_phrase(&haystack, &phrase.to_lowercase()))
    }
}

/// Substring search that only accepts matches flanked by non-alphanumeric
/// characters, so "male voice" does not fire inside "female voice".
fn contains_phrase(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut start = 0;
    while let Some(pos) = haystack[start..].find(needle) {
        let at = start + pos;
        let end = at + needle.len();
        let before_ok = haystack[..at].chars().next_back().is_none_or(|c| !c.is_alphanumeric());
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        start = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}
