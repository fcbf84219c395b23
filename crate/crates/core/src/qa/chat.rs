use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{QaItem, LETTERS};
use crate::schema::{serialize_canonical, UasRecord};
use crate::synthesis::{
    complete_with_retry, extract_json_array, ModelBackend, ModelRequest, RequestError, RequestKind,
    QA_MAX_TOKENS,
};

pub const QA_TEMPLATE: &str = include_str!("../../prompts/qa.txt");

/// One user/assistant turn pair in chat format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatExchange {
    pub user_text: String,
    pub assistant_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ContentPart {
    #[serde(rename = "type")]
    kind: String,
    text: String,
}

#[derive(Serialize)]
struct UserTurn<'a> {
    role: &'static str,
    content: [TextPart<'a>; 1],
}

#[derive(Serialize)]
struct TextPart<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    text: &'a str,
}

#[derive(Serialize)]
struct AssistantTurn<'a> {
    role: &'static str,
    content: &'a str,
}

impl ChatExchange {
    /// Single-line JSON with keys in role, content order.
    pub fn to_json(&self) -> String {
        let doc = (
            UserTurn {
                role: "user",
                content: [TextPart {
                    kind: "text",
                    text: &self.user_text,
                }],
            },
            AssistantTurn {
                role: "assistant",
                content: &self.assistant_text,
            },
        );
        serde_json::to_string(&doc).expect("chat document serializes")
    }

    /// Accepts the two-turn array shape. User content may be a string or a
    /// list of text parts, which are joined with spaces.
    pub fn from_value(value: &Value) -> Result<Self, String> {
        let turns = value.as_array().ok_or("chat document is not an array")?;
        let [user, assistant] = turns.as_slice() else {
            return Err(format!("expected 2 turns, got {}", turns.len()));
        };
        let role = |turn: &Value, want: &str| {
            if turn.get("role").and_then(Value::as_str) == Some(want) {
                Ok(())
            } else {
                Err(format!("expected a {want} turn"))
            }
        };
        role(user, "user")?;
        role(assistant, "assistant")?;
        Ok(Self {
            user_text: content_text(user.get("content"))?,
            assistant_text: content_text(assistant.get("content"))?,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Self::from_value(&value)
    }
}

fn content_text(content: Option<&Value>) -> Result<String, String> {
    match content {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(parts @ Value::Array(_)) => {
            let parts: Vec<ContentPart> = serde_json::from_value(parts.clone()).map_err(|e| e.to_string())?;
            Ok(parts
                .into_iter()
                .filter(|p| p.kind == "text")
                .map(|p| p.text)
                .collect::<Vec<_>>()
                .join(" "))
        }
        _ => Err("turn has no content".into()),
    }
}

impl From<&QaItem> for ChatExchange {
    fn from(item: &QaItem) -> Self {
        Self {
            user_text: item.prompt_text(),
            assistant_text: item.answer.clone(),
        }
    }
}

/// Compact single-line chat document for one item.
pub fn serialize_chat(item: &QaItem) -> String {
    ChatExchange::from(item).to_json()
}

pub fn build_qa_prompt(record: &UasRecord, correct_letter: char) -> Result<ModelRequest, RequestError> {
    if !LETTERS.contains(&correct_letter) {
        return Err(RequestError::InvalidOptionLetter(correct_letter));
    }
    // `${uas}` last so a record containing the other placeholder stays intact.
    let prompt = QA_TEMPLATE
        .replace("${correct_option}", &correct_letter.to_string())
        .replace("${uas}", &serialize_canonical(record));
    Ok(ModelRequest {
        kind: RequestKind::QaGen,
        prompt,
        audio_ref: None,
        max_output_tokens: QA_MAX_TOKENS,
        temperature: 0.0,
        entry_id: None,
    })
}

#[derive(Debug, Error)]
pub enum LlmQaError {
    #[error(transparent)]
    Request(#[from] RequestError),
    #[error("backend failed after {attempts} attempts: {message}")]
    Backend { attempts: u32, message: String },
    #[error("model output is not a chat exchange: {0}")]
    Malformed(String),
    #[error("model answered {got:?}, expected option {want}")]
    WrongLetter { want: char, got: String },
}

/// Asks the backend for one multiple-choice exchange whose answer must sit
/// at `correct_letter`.
pub fn generate_via_backend(
    backend: &dyn ModelBackend,
    record_id: &str,
    record: &UasRecord,
    correct_letter: char,
    max_retries: u32,
) -> Result<ChatExchange, LlmQaError> {
    let request = build_qa_prompt(record, correct_letter)?.with_entry_id(record_id);
    let done = complete_with_retry(backend, &request, max_retries).map_err(|f| LlmQaError::Backend {
        attempts: f.attempts,
        message: f.error.to_string(),
    })?;
    let json = extract_json_array(&done.text).map_err(|e| LlmQaError::Malformed(e.to_string()))?;
    let exchange = ChatExchange::parse(json).map_err(LlmQaError::Malformed)?;
    let answer = exchange.assistant_text.trim_start();
    if !answer.starts_with(correct_letter) || answer[1..].chars().next().is_some_and(char::is_alphanumeric) {
        return Err(LlmQaError::WrongLetter {
            want: correct_letter,
            got: exchange.assistant_text.clone(),
        });
    }
    Ok(exchange)
}
