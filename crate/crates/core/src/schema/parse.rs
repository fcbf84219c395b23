use serde_json::{Map, Value};
use thiserror::Error;

use super::{AcousticEvent, NonLinguisticEvents, Paralinguistics, UasRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema shape error at {path}: {message}")]
    SchemaShape { path: String, message: String },
}

impl SchemaError {
    fn shape(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError::SchemaShape {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// How unknown keys are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Unknown keys become warnings instead of errors.
    Lenient,
}

/// Strict parse of a single UAS JSON object.
pub fn parse_uas(text: &str) -> Result<UasRecord, SchemaError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SchemaError::MalformedDocument(e.to_string()))?;
    let mut warnings = Vec::new();
    parse_uas_value(&value, ParseMode::Strict, &mut warnings)
}

/// Lenient parse; returns the record together with unknown-key warnings.
pub fn parse_uas_lenient(text: &str) -> Result<(UasRecord, Vec<String>), SchemaError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SchemaError::MalformedDocument(e.to_string()))?;
    let mut warnings = Vec::new();
    let record = parse_uas_value(&value, ParseMode::Lenient, &mut warnings)?;
    Ok((record, warnings))
}

/// Converts an already-decoded JSON value into a record. Only type shape is
/// checked here; semantic rules belong to the validator.
pub fn parse_uas_value(value: &Value, mode: ParseMode, warnings: &mut Vec<String>) -> Result<UasRecord, SchemaError> {
    let root = as_object(value, "$")?;
    check_keys(root, "$", &["transcription", "paralinguistics", "nonLinguisticEvents"], mode, warnings)?;

    let transcription = optional_string(root, "transcription", "transcription")?;

    let paralinguistics = match required(root, "paralinguistics", "paralinguistics")? {
        Value::Null => Paralinguistics::default(),
        v => {
            let obj = as_object(v, "paralinguistics")?;
            check_keys(
                obj,
                "paralinguistics",
                &["age", "gender", "emotion", "accent", "prosody", "timbre"],
                mode,
                warnings,
            )?;
            let field = |k: &str| optional_string(obj, k, &format!("paralinguistics.{k}"));
            Paralinguistics {
                age: field("age")?,
                gender: field("gender")?,
                emotion: field("emotion")?,
                accent: field("accent")?,
                prosody: field("prosody")?,
                timbre: field("timbre")?,
            }
        }
    };

    let nle_value = required(root, "nonLinguisticEvents", "nonLinguisticEvents")?;
    let nle = as_object(nle_value, "nonLinguisticEvents")?;
    check_keys(
        nle,
        "nonLinguisticEvents",
        &["description", "discreteEvents", "continuousEvents"],
        mode,
        warnings,
    )?;
    let description = match required(nle, "description", "nonLinguisticEvents.description")? {
        Value::String(s) => s.clone(),
        other => {
            return Err(SchemaError::shape(
                "nonLinguisticEvents.description",
                format!("expected string, found {}", kind(other)),
            ))
        }
    };
    let discrete_events = events(nle, "discreteEvents", mode, warnings)?;
    let continuous_events = events(nle, "continuousEvents", mode, warnings)?;

    Ok(UasRecord {
        transcription,
        paralinguistics,
        non_linguistic_events: NonLinguisticEvents {
            description,
            discrete_events,
            continuous_events,
        },
    })
}

fn events(
    parent: &Map<String, Value>,
    key: &str,
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<Vec<AcousticEvent>, SchemaError> {
    let path = format!("nonLinguisticEvents.{key}");
    let items = match required(parent, key, &path)? {
        Value::Array(items) => items,
        other => return Err(SchemaError::shape(path, format!("expected array, found {}", kind(other)))),
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let item_path = format!("{path}[{i}]");
            let obj = as_object(item, &item_path)?;
            check_keys(obj, &item_path, &["label", "characteristic"], mode, warnings)?;
            let text = |k: &str| {
                let p = format!("{item_path}.{k}");
                match required(obj, k, &p)? {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(SchemaError::shape(p, format!("expected string, found {}", kind(other)))),
                }
            };
            Ok(AcousticEvent {
                label: text("label")?,
                characteristic: text("characteristic")?,
            })
        })
        .collect()
}

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>, SchemaError> {
    value
        .as_object()
        .ok_or_else(|| SchemaError::shape(path, format!("expected object, found {}", kind(value))))
}

fn required<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, SchemaError> {
    obj.get(key).ok_or_else(|| SchemaError::shape(path, "missing required key"))
}

/// Missing and null both map to `None`.
fn optional_string(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>, SchemaError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(SchemaError::shape(
            path,
            format!("expected string or null, found {}", kind(other)),
        )),
    }
}

fn check_keys(
    obj: &Map<String, Value>,
    path: &str,
    allowed: &[&str],
    mode: ParseMode,
    warnings: &mut Vec<String>,
) -> Result<(), SchemaError> {
    for key in obj.keys() {
        if allowed.contains(&key.as_str()) {
            continue;
        }
        let at = if path == "$" { key.clone() } else { format!("{path}.{key}") };
        match mode {
            ParseMode::Strict => return Err(SchemaError::shape(at, "unknown key")),
            ParseMode::Lenient => warnings.push(format!("unknown key {at}")),
        }
    }
    Ok(())
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
