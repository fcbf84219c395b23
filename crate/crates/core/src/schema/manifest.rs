use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{parse_uas_value, ParseMode, UasRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Speech,
    Music,
    Environment,
}

impl DomainTag {
    pub const ALL: [DomainTag; 3] = [DomainTag::Speech, DomainTag::Music, DomainTag::Environment];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Speech => "speech",
            DomainTag::Music => "music",
            DomainTag::Environment => "environment",
        }
    }
}

/// One manifest line: an audio reference plus its (eventual) annotation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusEntry {
    pub id: String,
    pub audio_ref: String,
    pub duration_seconds: f64,
    pub ground_truth_transcription: Option<String>,
    pub domain_tag: DomainTag,
    pub uas: Option<UasRecord>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawEntry {
    id: String,
    audio_ref: String,
    duration_seconds: f64,
    #[serde(default)]
    ground_truth_transcription: Option<String>,
    domain_tag: DomainTag,
    #[serde(default)]
    uas: Option<Value>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("read error: {0}")]
    Io(#[from] io::Error),
}

impl ManifestError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ManifestError::Line { line, .. } => Some(*line),
            ManifestError::Io(_) => None,
        }
    }
}

impl CorpusEntry {
    /// Decodes one manifest line. The embedded `uas` object follows the same
    /// rules as a standalone UAS document.
    pub fn from_json(text: &str, mode: ParseMode) -> Result<Self, String> {
        let raw: RawEntry = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if !(raw.duration_seconds >= 0.0) || !raw.duration_seconds.is_finite() {
            return Err(format!("durationSeconds must be a finite non-negative number, got {}", raw.duration_seconds));
        }
        let uas = match raw.uas {
            None | Some(Value::Null) => None,
            Some(v) => {
                let mut warnings = Vec::new();
                let record = parse_uas_value(&v, mode, &mut warnings).map_err(|e| format!("uas: {e}"))?;
                for w in warnings {
                    log::warn!("entry {}: {w}", raw.id);
                }
                Some(record)
            }
        };
        Ok(CorpusEntry {
            id: raw.id,
            audio_ref: raw.audio_ref,
            duration_seconds: raw.duration_seconds,
            ground_truth_transcription: raw.ground_truth_transcription,
            domain_tag: raw.domain_tag,
            uas,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("CorpusEntry serialization is infallible")
    }
}

/// Streaming JSON-Lines manifest reader. Blank lines are skipped; ids must be
/// unique across the stream.
pub struct ManifestReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    mode: ParseMode,
    seen: HashSet<String>,
}

impl<R: BufRead> ManifestReader<R> {
    pub fn new(reader: R, mode: ParseMode) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            mode,
            seen: HashSet::new(),
        }
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<CorpusEntry, ManifestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            let entry = match CorpusEntry::from_json(&line, self.mode) {
                Ok(e) => e,
                Err(message) => return Some(Err(ManifestError::Line { line: line_no, message })),
            };
            if !self.seen.insert(entry.id.clone()) {
                return Some(Err(ManifestError::Line {
                    line: line_no,
                    message: format!("duplicate id {:?}", entry.id),
                }));
            }
            return Some(Ok(entry));
        }
    }
}

/// Reads a whole manifest, stopping at the first bad line.
pub fn read_manifest<R: BufRead>(reader: R, mode: ParseMode) -> Result<Vec<CorpusEntry>, ManifestError> {
    ManifestReader::new(reader, mode).collect()
}

pub fn write_jsonl_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}
