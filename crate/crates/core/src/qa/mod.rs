//! Template-driven question/answer generation from validated records.
//!
//! Three item kinds are produced: direct questions answered by a field's
//! value, multiple-choice questions with distractors from the field's
//! vocabulary, and yes/no verification questions.

mod chat;
mod templates;

pub use chat::{build_qa_prompt, generate_via_backend, serialize_chat, ChatExchange, LlmQaError, QA_TEMPLATE};
pub use templates::{TemplateBank, TemplateError};

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::schema::{paths, Ontology, UasRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum QaField {
    Transcription,
    Age,
    Gender,
    Emotion,
    Accent,
    Prosody,
    Timbre,
    Description,
    DiscreteEvents,
    ContinuousEvents,
}

impl QaField {
    pub const ALL: [QaField; 10] = [
        QaField::Transcription,
        QaField::Age,
        QaField::Gender,
        QaField::Emotion,
        QaField::Accent,
        QaField::Prosody,
        QaField::Timbre,
        QaField::Description,
        QaField::DiscreteEvents,
        QaField::ContinuousEvents,
    ];

    /// The nine leaf fields enabled by default.
    pub const DEFAULT: [QaField; 9] = [
        QaField::Age,
        QaField::Gender,
        QaField::Emotion,
        QaField::Accent,
        QaField::Prosody,
        QaField::Timbre,
        QaField::Description,
        QaField::DiscreteEvents,
        QaField::ContinuousEvents,
    ];

    pub fn path(self) -> &'static str {
        match self {
            QaField::Transcription => paths::TRANSCRIPTION,
            QaField::Age => paths::AGE,
            QaField::Gender => paths::GENDER,
            QaField::Emotion => paths::EMOTION,
            QaField::Accent => paths::ACCENT,
            QaField::Prosody => paths::PROSODY,
            QaField::Timbre => paths::TIMBRE,
            QaField::Description => paths::DESCRIPTION,
            QaField::DiscreteEvents => paths::DISCRETE_EVENTS,
            QaField::ContinuousEvents => paths::CONTINUOUS_EVENTS,
        }
    }

    pub fn from_path(path: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.path() == path)
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, QaField::Age | QaField::Gender | QaField::Emotion)
    }

    pub fn is_paralinguistic(self) -> bool {
        matches!(
            self,
            QaField::Age | QaField::Gender | QaField::Emotion | QaField::Accent | QaField::Prosody | QaField::Timbre
        )
    }

    pub fn is_event_list(self) -> bool {
        matches!(self, QaField::DiscreteEvents | QaField::ContinuousEvents)
    }
}

impl From<QaField> for String {
    fn from(f: QaField) -> String {
        f.path().to_string()
    }
}

impl TryFrom<String> for QaField {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        QaField::from_path(&s).ok_or_else(|| format!("unknown field path {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QaKind {
    Direct,
    MultipleChoice,
    YesNo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOption {
    pub letter: char,
    pub text: String,
}

impl std::fmt::Display for McqOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}. {}", self.letter, self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QaItem {
    pub kind: QaKind,
    /// Question stem; multiple-choice options are kept separately.
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<McqOption>>,
    pub answer: String,
    pub source_field: QaField,
    pub record_id: String,
    /// Value a yes/no question asks about; `None` for presence questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<String>,
}

impl QaItem {
    /// Question text as shown to a model, with options inline.
    pub fn prompt_text(&self) -> String {
        match &self.options {
            Some(options) if !options.is_empty() => {
                let rendered: Vec<String> = options.iter().map(ToString::to_string).collect();
                format!("{} {}", self.question, rendered.join(" "))
            }
            _ => self.question.clone(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QaError {
    #[error("field {0} is absent in the record")]
    FieldAbsent(&'static str),
    #[error("field {field} has {available} distractors, {needed} needed")]
    InsufficientDistractors {
        field: &'static str,
        available: usize,
        needed: usize,
    },
    #[error("optionsPerMcq must be 3 or 4, got {0}")]
    OptionCount(usize),
    #[error("itemsPerRecord must be positive")]
    NoItems,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct QaGenConfig {
    pub options_per_mcq: usize,
    pub items_per_record: usize,
    pub rng_seed: u64,
    pub fields_enabled: BTreeSet<QaField>,
    /// Allow multiple-choice items for free-text fields, drawing options
    /// from the template bank's distractor pools.
    pub free_text_mcq: bool,
}

impl Default for QaGenConfig {
    fn default() -> Self {
        Self {
            options_per_mcq: 4,
            items_per_record: 6,
            rng_seed: 0,
            fields_enabled: QaField::DEFAULT.into_iter().collect(),
            free_text_mcq: false,
        }
    }
}

impl QaGenConfig {
    pub fn check(&self) -> Result<(), QaError> {
        if !(3..=4).contains(&self.options_per_mcq) {
            return Err(QaError::OptionCount(self.options_per_mcq));
        }
        if self.items_per_record == 0 {
            return Err(QaError::NoItems);
        }
        Ok(())
    }
}

/// Per-record generator seeded from `(seed, record_id)`, so output does not
/// depend on processing order.
pub fn record_rng(seed: u64, record_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(record_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

pub const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

/// True when `text` contains `token` as a whole word, ignoring case.
pub fn mentions(text: &str, token: &str) -> bool {
    let token = token.to_lowercase();
    let words: Vec<String> = token.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(String::from).collect();
    if words.is_empty() {
        return false;
    }
    let text_words: Vec<String> = text
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect();
    text_words.windows(words.len()).any(|w| w == words.as_slice())
}

/// Owns the vocabulary and templates used to build items.
#[derive(Debug, Clone)]
pub struct QaGenerator {
    pub ontology: Ontology,
    pub bank: TemplateBank,
    pub config: QaGenConfig,
}

enum FieldValue<'a> {
    Text(&'a str),
    Events(Vec<&'a str>),
}

impl QaGenerator {
    pub fn new(ontology: Ontology, bank: TemplateBank, config: QaGenConfig) -> Result<Self, QaError> {
        config.check()?;
        Ok(Self { ontology, bank, config })
    }

    fn value<'a>(&self, record: &'a UasRecord, field: QaField) -> Option<FieldValue<'a>> {
        let nle = &record.non_linguistic_events;
        let labels = |events: &'a [crate::schema::AcousticEvent]| events.iter().map(|e| e.label.as_str()).collect();
        match field {
            QaField::Transcription => record.transcription.as_deref().map(FieldValue::Text),
            QaField::Description => Some(FieldValue::Text(&nle.description)),
            QaField::DiscreteEvents => Some(FieldValue::Events(labels(&nle.discrete_events))),
            QaField::ContinuousEvents => Some(FieldValue::Events(labels(&nle.continuous_events))),
            para => record.paralinguistics.get(para.path()).map(FieldValue::Text),
        }
    }

    fn item(&self, kind: QaKind, question: String, answer: String, field: QaField, record_id: &str) -> QaItem {
        QaItem {
            kind,
            question,
            options: None,
            answer,
            source_field: field,
            record_id: record_id.to_string(),
            probe: None,
        }
    }

    /// Question from the field's template bank, answered by its exact value.
    pub fn gen_direct_qa<R: Rng + ?Sized>(
        &self,
        record_id: &str,
        record: &UasRecord,
        field: QaField,
        rng: &mut R,
    ) -> Result<QaItem, QaError> {
        let value = self.value(record, field).ok_or(QaError::FieldAbsent(field.path()))?;
        let answer = match value {
            FieldValue::Text(t) => t.to_string(),
            FieldValue::Events(labels) if labels.is_empty() => "None".to_string(),
            FieldValue::Events(labels) => labels.join(", "),
        };
        let question = self.stem(self.bank.direct(field), field, &answer, rng);
        Ok(self.item(QaKind::Direct, question, answer, field, record_id))
    }

    /// Picks a template, skipping any that would reveal a categorical answer.
    fn stem<R: Rng + ?Sized>(&self, templates: &[String], field: QaField, answer: &str, rng: &mut R) -> String {
        let safe: Vec<&String> = if field.is_categorical() {
            templates.iter().filter(|t| !mentions(t, answer)).collect()
        } else {
            templates.iter().collect()
        };
        safe.choose(rng)
            .map(|s| s.to_string())
            .unwrap_or_else(|| "Which option best matches the audio?".to_string())
    }

    /// Multiple choice with the correct letter placed uniformly at random.
    /// Categorical fields draw distractors from their closed set, so gender
    /// always yields two options and age at most three.
    pub fn gen_multiple_choice<R: Rng + ?Sized>(
        &self,
        record_id: &str,
        record: &UasRecord,
        field: QaField,
        rng: &mut R,
    ) -> Result<QaItem, QaError> {
        let value = self.value(record, field).ok_or(QaError::FieldAbsent(field.path()))?;
        let (truth, pool): (String, Vec<&str>) = match (&value, self.ontology.closed_set(field.path())) {
            (FieldValue::Text(v), Some(set)) => {
                (v.to_string(), set.iter().map(String::as_str).filter(|l| l != v).collect())
            }
            (FieldValue::Text(v), None) => {
                let pool = self
                    .bank
                    .distractors(field)
                    .iter()
                    .map(String::as_str)
                    .filter(|d| !d.eq_ignore_ascii_case(v))
                    .collect();
                (v.to_string(), pool)
            }
            (FieldValue::Events(labels), _) => {
                let truth = labels.choose(rng).ok_or(QaError::FieldAbsent(field.path()))?.to_string();
                let pool = self
                    .bank
                    .distractors(field)
                    .iter()
                    .map(String::as_str)
                    .filter(|d| !labels.iter().any(|l| l.eq_ignore_ascii_case(d)))
                    .collect();
                (truth, pool)
            }
        };

        let wanted = self.config.options_per_mcq;
        let count = if field.is_categorical() {
            wanted.min(pool.len() + 1)
        } else {
            wanted
        };
        if count < 2 || pool.len() < count - 1 {
            return Err(QaError::InsufficientDistractors {
                field: field.path(),
                available: pool.len(),
                needed: count.max(2) - 1,
            });
        }

        let mut texts: Vec<String> = pool.choose_multiple(rng, count - 1).map(|s| s.to_string()).collect();
        texts.shuffle(rng);
        let position = rng.random_range(0..count);
        texts.insert(position, truth.clone());
        let options: Vec<McqOption> = texts
            .into_iter()
            .zip(LETTERS)
            .map(|(text, letter)| McqOption { letter, text })
            .collect();
        let answer = options[position].to_string();
        let question = self.stem(self.bank.multiple_choice(field), field, &truth, rng);
        let mut item = self.item(QaKind::MultipleChoice, question, answer, field, record_id);
        item.options = Some(options);
        Ok(item)
    }

    /// Yes/no verification. Half the time the true value is asked about;
    /// otherwise a false value is sampled. Absent speech and empty event
    /// lists turn into presence questions answered "No".
    pub fn gen_yesno<R: Rng + ?Sized>(&self, record_id: &str, record: &UasRecord, field: QaField, rng: &mut R) -> QaItem {
        let truthful = rng.random_bool(0.5);
        let presence = |this: &Self, field: QaField, yes: bool, rng: &mut R| {
            let q = this.bank.existence(field).choose(rng).cloned().unwrap_or_default();
            this.item(QaKind::YesNo, q, yes_no(yes), field, record_id)
        };

        if field == QaField::Transcription || (field.is_paralinguistic() && !record.is_speech()) {
            return presence(self, QaField::Transcription, record.is_speech(), rng);
        }
        let Some(value) = self.value(record, field) else {
            // Speech with a missing subfield; only reachable for unvalidated records.
            return presence(self, QaField::Transcription, record.is_speech(), rng);
        };

        let (probe, answer_yes) = match value {
            FieldValue::Text(v) => {
                let falses: Vec<&str> = match self.ontology.closed_set(field.path()) {
                    Some(set) => set.iter().map(String::as_str).filter(|l| *l != v).collect(),
                    None => self
                        .bank
                        .distractors(field)
                        .iter()
                        .map(String::as_str)
                        .filter(|d| !d.eq_ignore_ascii_case(v))
                        .collect(),
                };
                match falses.choose(rng) {
                    Some(f) if !truthful => (f.to_string(), false),
                    _ => (v.to_string(), true),
                }
            }
            FieldValue::Events(labels) if labels.is_empty() => {
                return presence(self, field, false, rng);
            }
            FieldValue::Events(labels) => {
                let falses: Vec<&str> = self
                    .bank
                    .distractors(field)
                    .iter()
                    .map(String::as_str)
                    .filter(|d| !labels.iter().any(|l| l.eq_ignore_ascii_case(d)))
                    .collect();
                match falses.choose(rng) {
                    Some(f) if !truthful => (f.to_string(), false),
                    _ if rng.random_bool(0.5) => return presence(self, field, true, rng),
                    _ => (labels.choose(rng).expect("non-empty").to_string(), true),
                }
            }
        };

        let phrase = if field.is_categorical() {
            self.bank.value_word(&probe)
        } else {
            probe.clone()
        };
        let template = self.bank.yes_no(field).choose(rng).cloned().unwrap_or_default();
        let mut item = self.item(
            QaKind::YesNo,
            template.replace("{value}", &phrase),
            yes_no(answer_yes),
            field,
            record_id,
        );
        item.probe = Some(probe);
        item
    }

    fn kinds_for(&self, record: &UasRecord, field: QaField) -> Vec<QaKind> {
        if field.is_categorical() {
            return vec![QaKind::Direct, QaKind::MultipleChoice, QaKind::YesNo];
        }
        let mut kinds = vec![QaKind::Direct, QaKind::YesNo];
        let mcq_ok = match field {
            QaField::Transcription => false,
            QaField::DiscreteEvents | QaField::ContinuousEvents => {
                matches!(self.value(record, field), Some(FieldValue::Events(ref l)) if !l.is_empty())
            }
            _ => true,
        };
        if self.config.free_text_mcq && mcq_ok && self.bank.distractors(field).len() + 1 >= self.config.options_per_mcq {
            kinds.insert(1, QaKind::MultipleChoice);
        }
        kinds
    }

    /// Mixed-kind items covering every enabled field present in the record,
    /// as far as `itemsPerRecord` allows. Deterministic in the rng.
    pub fn gen_for_record<R: Rng + ?Sized>(&self, record_id: &str, record: &UasRecord, rng: &mut R) -> Vec<QaItem> {
        let speech = record.is_speech();
        // (field, allowed kinds); `Transcription` with only YesNo doubles as
        // the speech-absence question for no-speech records.
        let mut candidates: Vec<(QaField, Vec<QaKind>)> = Vec::new();
        for &field in &self.config.fields_enabled {
            let present = match field {
                QaField::Transcription => speech,
                f if f.is_paralinguistic() => speech && record.paralinguistics.get(f.path()).is_some(),
                _ => true,
            };
            if present {
                candidates.push((field, self.kinds_for(record, field)));
            }
        }
        let wants_absence = self
            .config
            .fields_enabled
            .iter()
            .any(|f| f.is_paralinguistic() || *f == QaField::Transcription);
        if !speech && wants_absence {
            candidates.push((QaField::Transcription, vec![QaKind::YesNo]));
        }
        if candidates.is_empty() {
            return Vec::new();
        }

        candidates.shuffle(rng);
        let n = self.config.items_per_record;
        let mut selected: Vec<(QaField, Vec<QaKind>)>;
        if n >= candidates.len() {
            selected = candidates.clone();
            while selected.len() < n {
                selected.push(candidates.choose(rng).expect("non-empty").clone());
            }
        } else {
            selected = candidates[..n].to_vec();
            let has_mcq = |s: &[(QaField, Vec<QaKind>)]| s.iter().any(|(_, k)| k.contains(&QaKind::MultipleChoice));
            if !has_mcq(&selected) {
                if let Some(extra) = candidates[n..].iter().find(|(_, k)| k.contains(&QaKind::MultipleChoice)) {
                    // Keep the most restrictive kinds: drop an unrestricted slot.
                    let drop = selected.iter().rposition(|(_, k)| k.len() > 1).unwrap_or(n - 1);
                    selected[drop] = extra.clone();
                }
            }
        }

        // Guarantee each kind at least once where possible, then fill randomly.
        let mut kinds: Vec<Option<QaKind>> = vec![None; selected.len()];
        let mut order: Vec<usize> = (0..selected.len()).collect();
        order.shuffle(rng);
        for wanted in [QaKind::MultipleChoice, QaKind::Direct, QaKind::YesNo] {
            if let Some(&i) = order
                .iter()
                .find(|&&i| kinds[i].is_none() && selected[i].1.contains(&wanted))
            {
                kinds[i] = Some(wanted);
            }
        }
        for (slot, (_, allowed)) in kinds.iter_mut().zip(&selected) {
            if slot.is_none() {
                *slot = allowed.choose(rng).copied();
            }
        }

        selected
            .iter()
            .zip(kinds)
            .map(|((field, _), kind)| {
                let kind = kind.expect("every candidate allows a kind");
                let made = match kind {
                    QaKind::Direct => self.gen_direct_qa(record_id, record, *field, rng),
                    QaKind::MultipleChoice => self.gen_multiple_choice(record_id, record, *field, rng),
                    QaKind::YesNo => Ok(self.gen_yesno(record_id, record, *field, rng)),
                };
                made.unwrap_or_else(|_| self.gen_yesno(record_id, record, *field, rng))
            })
            .collect()
    }

    /// Generates items with the per-record rng derived from the config seed.
    pub fn generate(&self, record_id: &str, record: &UasRecord) -> Vec<QaItem> {
        let mut rng = record_rng(self.config.rng_seed, record_id);
        self.gen_for_record(record_id, record, &mut rng)
    }
}

fn yes_no(yes: bool) -> String {
    if yes { "Yes" } else { "No" }.to_string()
}
