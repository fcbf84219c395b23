//! Caption → structured synthesis → validation, driven through a pluggable
//! model backend.

mod backend;
mod extract;
mod pipeline;

pub use backend::{
    complete_with_retry, BackendConfig, BackendError, Completion, FailedCompletion, HttpBackend, MockBackend,
    ModelBackend,
};
pub use extract::{extract_json, extract_json_array, ExtractError};
pub use pipeline::{
    run_pipeline, BackendFailure, FailureStage, JsonlSink, PipelineError, PipelineOptions, PipelineRunSummary,
    PipelineSink, VecSink,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::CorpusEntry;

/// Template for the acoustic captioner. No canonical captioner prompt is
/// published, so this one is authored to cover the six speaker attributes
/// and the acoustic scene.
pub const CAPTION_TEMPLATE: &str = include_str!("../../prompts/caption.txt");
/// Caption-to-UAS conversion prompt.
pub const SYNTHESIS_TEMPLATE: &str = include_str!("../../prompts/synthesis.txt");

pub const DEFAULT_CAPTION_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_SYNTHESIS_TEMPERATURE: f64 = 0.0;
pub const CAPTION_MAX_TOKENS: u32 = 1024;
pub const SYNTHESIS_MAX_TOKENS: u32 = 2048;
pub const QA_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Caption,
    Synthesis,
    QaGen,
}

impl RequestKind {
    /// Directory name used by the mock backend's fixture layout.
    pub fn fixture_dir(self) -> &'static str {
        match self {
            RequestKind::Caption => "caption",
            RequestKind::Synthesis => "synthesis",
            RequestKind::QaGen => "qagen",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub kind: RequestKind,
    pub prompt: String,
    /// Only caption requests carry audio.
    pub audio_ref: Option<String>,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Manifest id the request was built for. Used for fixture lookup and
    /// logging; never sent over the wire.
    pub entry_id: Option<String>,
}

impl ModelRequest {
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }

    pub fn with_entry_id(mut self, id: impl Into<String>) -> Self {
        self.entry_id = Some(id.into());
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("entry has an empty audioRef")]
    EmptyAudioRef,
    #[error("caption is empty")]
    EmptyCaption,
    #[error("correct option letter must be A-D, got {0:?}")]
    InvalidOptionLetter(char),
}

pub fn build_caption_request(entry: &CorpusEntry) -> Result<ModelRequest, RequestError> {
    if entry.audio_ref.trim().is_empty() {
        return Err(RequestError::EmptyAudioRef);
    }
    Ok(ModelRequest {
        kind: RequestKind::Caption,
        prompt: CAPTION_TEMPLATE.to_string(),
        audio_ref: Some(entry.audio_ref.clone()),
        max_output_tokens: CAPTION_MAX_TOKENS,
        temperature: DEFAULT_CAPTION_TEMPERATURE,
        entry_id: Some(entry.id.clone()),
    })
}

/// Renders the conversion prompt followed by the caption and, for speech,
/// the ground-truth transcription with a verbatim-copy instruction.
pub fn build_synthesis_request(caption: &str, ground_truth: Option<&str>) -> Result<ModelRequest, RequestError> {
    if caption.trim().is_empty() {
        return Err(RequestError::EmptyCaption);
    }
    let mut prompt = String::with_capacity(SYNTHESIS_TEMPLATE.len() + caption.len() + 256);
    prompt.push_str(SYNTHESIS_TEMPLATE);
    prompt.push_str("\nAudio description:\n");
    prompt.push_str(caption.trim_end());
    prompt.push('\n');
    if let Some(gt) = ground_truth {
        prompt.push_str(
            "\nGround-truth transcription. Copy it verbatim, character for character, into the `transcription` field:\n",
        );
        prompt.push_str(gt);
        prompt.push('\n');
    }
    Ok(ModelRequest {
        kind: RequestKind::Synthesis,
        prompt,
        audio_ref: None,
        max_output_tokens: SYNTHESIS_MAX_TOKENS,
        temperature: DEFAULT_SYNTHESIS_TEMPERATURE,
        entry_id: None,
    })
}
