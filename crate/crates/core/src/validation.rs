//! Automated quality gate for synthesized records.
//!
//! Four checks run in a fixed order and every finding is collected:
//! ontology membership, transcription integrity, logical consistency, and
//! duration/content alignment. A record is accepted iff no check fires.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::schema::{paths, CorpusEntry, DomainTag, Ontology, ParseMode, UasRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    OntologyViolation,
    TranscriptionMismatch,
    NullRuleViolation,
    GenderTimbreContradiction,
    DuplicateEventLabel,
    DurationContentMismatch,
    EmptyField,
    /// Model output that could not be extracted or parsed as a UAS document.
    /// Only the synthesis pipeline emits this code.
    MalformedOutput,
}

impl ViolationCode {
    /// The codes produced by the four record checks.
    pub const RECORD_CHECKS: [ViolationCode; 7] = [
        ViolationCode::OntologyViolation,
        ViolationCode::TranscriptionMismatch,
        ViolationCode::NullRuleViolation,
        ViolationCode::GenderTimbreContradiction,
        ViolationCode::DuplicateEventLabel,
        ViolationCode::DurationContentMismatch,
        ViolationCode::EmptyField,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::OntologyViolation => "OntologyViolation",
            ViolationCode::TranscriptionMismatch => "TranscriptionMismatch",
            ViolationCode::NullRuleViolation => "NullRuleViolation",
            ViolationCode::GenderTimbreContradiction => "GenderTimbreContradiction",
            ViolationCode::DuplicateEventLabel => "DuplicateEventLabel",
            ViolationCode::DurationContentMismatch => "DurationContentMismatch",
            ViolationCode::EmptyField => "EmptyField",
            ViolationCode::MalformedOutput => "MalformedOutput",
        }
    }
}

impl std::fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub field: String,
    pub detail: String,
}

impl Violation {
    pub fn new(code: ViolationCode, field: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            code,
            field: field.into(),
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub record_id: String,
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    /// Lenient-mode downgrades; never affect the verdict.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(record_id: impl Into<String>, violations: Vec<Violation>, warnings: Vec<Violation>) -> Self {
        let verdict = if violations.is_empty() { Verdict::Accept } else { Verdict::Reject };
        Self {
            record_id: record_id.into(),
            verdict,
            violations,
            warnings,
        }
    }

    pub fn is_accept(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    pub fn has_code(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("entry {0} has no uas record")]
    MissingUas(String),
    #[error("entry {0} is tagged speech but has no groundTruthTranscription")]
    MissingGroundTruth(String),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AlignmentThresholds {
    pub max_discrete_events_per_second: f64,
    pub max_description_words_per_second: f64,
    pub min_duration_seconds: f64,
}

impl Default for AlignmentThresholds {
    fn default() -> Self {
        Self {
            max_discrete_events_per_second: 2.0,
            max_description_words_per_second: 8.0,
            min_duration_seconds: 0.2,
        }
    }
}

impl AlignmentThresholds {
    pub fn check(&self) -> Result<(), ValidationError> {
        for (name, v) in [
            ("maxDiscreteEventsPerSecond", self.max_discrete_events_per_second),
            ("maxDescriptionWordsPerSecond", self.max_description_words_per_second),
            ("minDurationSeconds", self.min_duration_seconds),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ValidationError::InvalidThresholds(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One `OntologyViolation` per categorical value outside its closed set.
pub fn check_ontology(record: &UasRecord, ontology: &Ontology) -> Vec<Violation> {
    let p = &record.paralinguistics;
    let mut out = Vec::new();
    for (path, value) in [(paths::AGE, &p.age), (paths::GENDER, &p.gender), (paths::EMOTION, &p.emotion)] {
        let Some(value) = value else { continue };
        let set = ontology.closed_set(path).expect("categorical path");
        if !set.iter().any(|l| l == value) {
            out.push(Violation::new(
                ViolationCode::OntologyViolation,
                path,
                format!("{value:?} is not one of {}", set.join(", ")),
            ));
        }
    }
    out
}

/// Exact match after NFC normalization; no case or punctuation folding.
pub fn check_transcription_integrity(record: &UasRecord, ground_truth: &str) -> Vec<Violation> {
    let expected: String = ground_truth.nfc().collect();
    match record.transcription.as_deref() {
        Some(t) if t.nfc().eq(expected.chars()) => Vec::new(),
        Some(t) => vec![Violation::new(
            ViolationCode::TranscriptionMismatch,
            paths::TRANSCRIPTION,
            format!("transcription {t:?} differs from ground truth {ground_truth:?}"),
        )],
        None => vec![Violation::new(
            ViolationCode::TranscriptionMismatch,
            paths::TRANSCRIPTION,
            format!("transcription is null but ground truth is {ground_truth:?}"),
        )],
    }
}

/// Strict-mode consistency check.
pub fn check_logical_consistency(record: &UasRecord, ontology: &Ontology) -> Vec<Violation> {
    check_logical_consistency_with(record, ontology, ParseMode::Strict).0
}

/// Consistency check returning `(violations, warnings)`. In lenient mode a
/// missing accent, prosody or timbre on a speech record is only a warning.
pub fn check_logical_consistency_with(
    record: &UasRecord,
    ontology: &Ontology,
    mode: ParseMode,
) -> (Vec<Violation>, Vec<Violation>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    let p = &record.paralinguistics;
    let speech = record.is_speech();

    // Null rule.
    if !speech && record.transcription.is_some() {
        out.push(Violation::new(
            ViolationCode::NullRuleViolation,
            paths::TRANSCRIPTION,
            "blank transcription must be null",
        ));
    }
    for (path, value) in p.entries() {
        match (speech, value) {
            (false, Some(v)) => out.push(Violation::new(
                ViolationCode::NullRuleViolation,
                path,
                format!("no speech, but {path} is {v:?}"),
            )),
            (true, None) => {
                let v = Violation::new(ViolationCode::NullRuleViolation, path, format!("speech present, but {path} is null"));
                let free_text = matches!(path, paths::ACCENT | paths::PROSODY | paths::TIMBRE);
                if mode == ParseMode::Lenient && free_text {
                    warnings.push(v);
                } else {
                    out.push(v);
                }
            }
            (true, Some(v)) if v.trim().is_empty() && !is_categorical(path) => {
                out.push(Violation::new(ViolationCode::EmptyField, path, "empty string"));
            }
            _ => {}
        }
    }

    // Gender against voice descriptors.
    if let Some(gender) = p.gender.as_deref() {
        let text = format!("{} {}", p.timbre.as_deref().unwrap_or(""), p.prosody.as_deref().unwrap_or(""));
        if let Some(phrase) = ontology.find_contradiction(gender, &text) {
            out.push(Violation::new(
                ViolationCode::GenderTimbreContradiction,
                paths::GENDER,
                format!("gender {gender:?} contradicts voice description containing {phrase:?}"),
            ));
        }
    }

    let nle = &record.non_linguistic_events;
    if nle.description.trim().is_empty() {
        out.push(Violation::new(ViolationCode::EmptyField, paths::DESCRIPTION, "empty description"));
    }
    let mut seen = HashSet::new();
    for (path, event) in nle.all_events() {
        if event.label.trim().is_empty() {
            out.push(Violation::new(ViolationCode::EmptyField, format!("{path}.label"), "empty label"));
        } else if !seen.insert(event.label.trim().to_lowercase()) {
            out.push(Violation::new(
                ViolationCode::DuplicateEventLabel,
                format!("{path}.label"),
                format!("label {:?} already used", event.label),
            ));
        }
        if event.characteristic.trim().is_empty() {
            out.push(Violation::new(
                ViolationCode::EmptyField,
                format!("{path}.characteristic"),
                "empty characteristic",
            ));
        }
    }

    out.sort_by(|a, b| a.field.cmp(&b.field).then(a.code.cmp(&b.code)));
    (out, warnings)
}

fn is_categorical(path: &str) -> bool {
    matches!(path, paths::AGE | paths::GENDER | paths::EMOTION)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Flags descriptions or event lists too dense for the clip length.
pub fn check_duration_alignment(record: &UasRecord, duration_seconds: f64, thresholds: &AlignmentThresholds) -> Vec<Violation> {
    if duration_seconds < thresholds.min_duration_seconds {
        return vec![Violation::new(
            ViolationCode::DurationContentMismatch,
            "durationSeconds",
            format!(
                "clip of {duration_seconds}s is shorter than the {}s minimum",
                thresholds.min_duration_seconds
            ),
        )];
    }
    let nle = &record.non_linguistic_events;
    let mut out = Vec::new();
    let events = nle.discrete_events.len() as f64;
    let event_budget = thresholds.max_discrete_events_per_second * duration_seconds;
    if events > event_budget {
        out.push(Violation::new(
            ViolationCode::DurationContentMismatch,
            paths::DISCRETE_EVENTS,
            format!("{events} discrete events exceed {event_budget} allowed for {duration_seconds}s"),
        ));
    }
    let words = word_count(&nle.description) as f64;
    let word_budget = thresholds.max_description_words_per_second * duration_seconds;
    if words > word_budget {
        out.push(Violation::new(
            ViolationCode::DurationContentMismatch,
            paths::DESCRIPTION,
            format!("{words}-word description exceeds {word_budget} allowed for {duration_seconds}s"),
        ));
    }
    out.sort_by(|a, b| a.field.cmp(&b.field));
    out
}

/// Bundles the configuration the checks need.
#[derive(Debug, Clone, Default)]
pub struct Validator {
    pub ontology: Ontology,
    pub thresholds: AlignmentThresholds,
    pub mode: ParseMode,
}

impl Validator {
    pub fn new(ontology: Ontology, thresholds: AlignmentThresholds, mode: ParseMode) -> Self {
        Self {
            ontology,
            thresholds,
            mode,
        }
    }

    /// Runs all checks on a record that has not been attached to an entry yet.
    pub fn validate_record(&self, entry: &CorpusEntry, record: &UasRecord) -> Result<ValidationReport, ValidationError> {
        let mut violations = check_ontology(record, &self.ontology);
        match entry.ground_truth_transcription.as_deref() {
            Some(gt) => violations.extend(check_transcription_integrity(record, gt)),
            None if entry.domain_tag == DomainTag::Speech => {
                return Err(ValidationError::MissingGroundTruth(entry.id.clone()))
            }
            None => {}
        }
        let (logical, warnings) = check_logical_consistency_with(record, &self.ontology, self.mode);
        violations.extend(logical);
        violations.extend(check_duration_alignment(record, entry.duration_seconds, &self.thresholds));

        let mut seen = HashSet::new();
        violations.retain(|v| seen.insert((v.code, v.field.clone())));
        Ok(ValidationReport::from_violations(entry.id.clone(), violations, warnings))
    }

    pub fn validate(&self, entry: &CorpusEntry) -> Result<ValidationReport, ValidationError> {
        let record = entry
            .uas
            .as_ref()
            .ok_or_else(|| ValidationError::MissingUas(entry.id.clone()))?;
        self.validate_record(entry, record)
    }
}

/// Strict-mode validation of a manifest entry.
pub fn validate(
    entry: &CorpusEntry,
    ontology: &Ontology,
    thresholds: &AlignmentThresholds,
) -> Result<ValidationReport, ValidationError> {
    Validator::new(ontology.clone(), *thresholds, ParseMode::Strict).validate(entry)
}
