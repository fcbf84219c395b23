use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use super::QaField;

const DEFAULT_BANK: &str = include_str!("../../data/qa_templates.json");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("cannot parse template bank: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("template bank has no {section} templates for {field}")]
    Missing { section: &'static str, field: String },
    #[error("yes/no template for {0} lacks a {{value}} placeholder")]
    NoPlaceholder(String),
}

/// Question templates and distractor pools, keyed by dotted field path.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TemplateBank {
    pub direct: BTreeMap<String, Vec<String>>,
    pub multiple_choice: BTreeMap<String, Vec<String>>,
    /// Each template contains a `{value}` placeholder.
    pub yes_no: BTreeMap<String, Vec<String>>,
    pub existence: BTreeMap<String, Vec<String>>,
    /// Phrase substituted for a categorical label in yes/no questions.
    #[serde(default)]
    pub value_words: BTreeMap<String, String>,
    /// Free-text pools; `events` serves both event lists.
    #[serde(default)]
    pub distractors: BTreeMap<String, Vec<String>>,
}

impl Default for TemplateBank {
    fn default() -> Self {
        Self::from_json(DEFAULT_BANK).expect("bundled template bank is valid")
    }
}

impl TemplateBank {
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let bank: TemplateBank = serde_json::from_str(text)?;
        bank.check()?;
        Ok(bank)
    }

    fn check(&self) -> Result<(), TemplateError> {
        let need = |section: &'static str, map: &BTreeMap<String, Vec<String>>, field: QaField| {
            if map.get(field.path()).is_none_or(|v| v.is_empty()) {
                Err(TemplateError::Missing {
                    section,
                    field: field.path().to_string(),
                })
            } else {
                Ok(())
            }
        };
        for field in QaField::ALL {
            need("direct", &self.direct, field)?;
            if field != QaField::Transcription {
                need("yesNo", &self.yes_no, field)?;
            }
        }
        for field in [QaField::Age, QaField::Gender, QaField::Emotion] {
            need("multipleChoice", &self.multiple_choice, field)?;
        }
        for field in [QaField::Transcription, QaField::DiscreteEvents, QaField::ContinuousEvents] {
            need("existence", &self.existence, field)?;
        }
        for (field, templates) in &self.yes_no {
            if templates.iter().any(|t| !t.contains("{value}")) {
                return Err(TemplateError::NoPlaceholder(field.clone()));
            }
        }
        Ok(())
    }

    pub fn direct(&self, field: QaField) -> &[String] {
        self.direct.get(field.path()).map_or(&[], Vec::as_slice)
    }

    pub fn multiple_choice(&self, field: QaField) -> &[String] {
        self.multiple_choice.get(field.path()).map_or(&[], Vec::as_slice)
    }

    pub fn yes_no(&self, field: QaField) -> &[String] {
        self.yes_no.get(field.path()).map_or(&[], Vec::as_slice)
    }

    pub fn existence(&self, field: QaField) -> &[String] {
        self.existence.get(field.path()).map_or(&[], Vec::as_slice)
    }

    pub fn distractors(&self, field: QaField) -> &[String] {
        let key = match field {
            QaField::DiscreteEvents | QaField::ContinuousEvents => "events",
            other => other.path(),
        };
        self.distractors.get(key).map_or(&[], Vec::as_slice)
    }

    /// Yes/no phrasing for a label, falling back to the lowercased label.
    pub fn value_word(&self, label: &str) -> String {
        self.value_words
            .get(label)
            .cloned()
            .unwrap_or_else(|| label.to_lowercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_bank_has_three_paraphrases_everywhere() {
        let bank = TemplateBank::default();
        for field in QaField::ALL {
            assert!(bank.direct(field).len() >= 3, "{field:?}");
            if field != QaField::Transcription {
                assert!(bank.yes_no(field).len() >= 3, "{field:?}");
                assert!(bank.multiple_choice(field).len() >= 3, "{field:?}");
            }
        }
        for field in [QaField::Transcription, QaField::DiscreteEvents, QaField::ContinuousEvents] {
            assert!(bank.existence(field).len() >= 3);
        }
    }

    #[test]
    fn overrides_are_checked() {
        assert!(matches!(TemplateBank::from_json("{"), Err(TemplateError::Parse(_))));
        let mut value: serde_json::Value = serde_json::from_str(DEFAULT_BANK).unwrap();
        value["direct"]["paralinguistics.age"] = serde_json::json!([]);
        assert!(matches!(
            TemplateBank::from_json(&value.to_string()),
            Err(TemplateError::Missing { section: "direct", .. })
        ));
        let mut value: serde_json::Value = serde_json::from_str(DEFAULT_BANK).unwrap();
        value["yesNo"]["paralinguistics.age"] = serde_json::json!(["Is it?"]);
        assert!(matches!(
            TemplateBank::from_json(&value.to_string()),
            Err(TemplateError::NoPlaceholder(_))
        ));
    }

    #[test]
    fn value_words() {
        let bank = TemplateBank::default();
        assert_eq!(bank.value_word("Anger"), "angry");
        assert_eq!(bank.value_word("Curious"), "curious");
    }
}
