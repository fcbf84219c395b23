use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    build_caption_request, build_synthesis_request, complete_with_retry, extract_json, ModelBackend,
    DEFAULT_CAPTION_TEMPERATURE, DEFAULT_SYNTHESIS_TEMPERATURE,
};
use crate::schema::{parse_uas_value, write_jsonl_line, CorpusEntry, ManifestError};
use crate::validation::{ValidationError, ValidationReport, Validator, Violation, ViolationCode};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub workers: usize,
    /// Extra attempts per backend call; `None` uses the backend's own setting.
    pub max_retries: Option<u32>,
    /// Fresh conversion samples to draw after a rejection before giving up.
    pub retry_rejected: u32,
    pub caption_temperature: f64,
    pub synthesis_temperature: f64,
    /// Temperature for re-synthesis after a rejection; kept above zero so the
    /// retry can differ from the rejected sample.
    pub retry_temperature: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            max_retries: None,
            retry_rejected: 0,
            caption_temperature: DEFAULT_CAPTION_TEMPERATURE,
            synthesis_temperature: DEFAULT_SYNTHESIS_TEMPERATURE,
            retry_temperature: DEFAULT_CAPTION_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Caption,
    Synthesis,
}

/// An entry dropped because a backend call never succeeded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BackendFailure {
    pub record_id: String,
    pub stage: FailureStage,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineRunSummary {
    pub total: usize,
    pub captioned: usize,
    pub synthesized: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub backend_failures: usize,
    /// Number of rejected entries whose final report carries each code.
    pub rejections_by_code: BTreeMap<ViolationCode, usize>,
}

impl PipelineRunSummary {
    pub fn reconciles(&self) -> bool {
        self.accepted + self.rejected + self.backend_failures == self.total
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("writing output: {0}")]
    Sink(#[from] io::Error),
    #[error("workers must be at least 1")]
    NoWorkers,
}

/// Receives pipeline results in manifest order.
pub trait PipelineSink {
    fn accepted(&mut self, entry: &CorpusEntry) -> io::Result<()>;
    fn rejected(&mut self, report: &ValidationReport) -> io::Result<()>;
    fn failed(&mut self, failure: &BackendFailure) -> io::Result<()>;
}

#[derive(Debug, Default)]
pub struct VecSink {
    pub accepted: Vec<CorpusEntry>,
    pub rejected: Vec<ValidationReport>,
    pub failed: Vec<BackendFailure>,
}

impl PipelineSink for VecSink {
    fn accepted(&mut self, entry: &CorpusEntry) -> io::Result<()> {
        self.accepted.push(entry.clone());
        Ok(())
    }

    fn rejected(&mut self, report: &ValidationReport) -> io::Result<()> {
        self.rejected.push(report.clone());
        Ok(())
    }

    fn failed(&mut self, failure: &BackendFailure) -> io::Result<()> {
        self.failed.push(failure.clone());
        Ok(())
    }
}

/// Writes each stream as JSON-Lines.
pub struct JsonlSink<A, R, F> {
    pub accepted: A,
    pub rejected: R,
    pub failed: F,
}

impl<A: Write, R: Write, F: Write> PipelineSink for JsonlSink<A, R, F> {
    fn accepted(&mut self, entry: &CorpusEntry) -> io::Result<()> {
        write_jsonl_line(&mut self.accepted, entry)
    }

    fn rejected(&mut self, report: &ValidationReport) -> io::Result<()> {
        write_jsonl_line(&mut self.rejected, report)
    }

    fn failed(&mut self, failure: &BackendFailure) -> io::Result<()> {
        write_jsonl_line(&mut self.failed, failure)
    }
}

enum Outcome {
    Accepted(CorpusEntry),
    Rejected(ValidationReport),
    Failed(BackendFailure),
}

struct Processed {
    captioned: bool,
    synthesized: bool,
    outcome: Outcome,
}

/// Entries buffered per worker before results are flushed in order.
const CHUNK_PER_WORKER: usize = 32;

/// Runs every manifest entry through captioning, synthesis, parsing and
/// validation. Per-entry problems end up in the sink; only manifest and
/// output errors abort the run. Output order follows input order for any
/// worker count.
pub fn run_pipeline<I>(
    manifest: I,
    backend: &dyn ModelBackend,
    validator: &Validator,
    options: &PipelineOptions,
    sink: &mut dyn PipelineSink,
) -> Result<PipelineRunSummary, PipelineError>
where
    I: IntoIterator<Item = Result<CorpusEntry, ManifestError>>,
{
    if options.workers == 0 {
        return Err(PipelineError::NoWorkers);
    }
    let workers = backend
        .concurrency_limit()
        .map_or(options.workers, |limit| options.workers.min(limit.max(1)));
    let chunk_size = workers * CHUNK_PER_WORKER;

    let mut summary = PipelineRunSummary::default();
    let mut entries = manifest.into_iter();
    loop {
        let mut chunk = Vec::with_capacity(chunk_size);
        for item in entries.by_ref().take(chunk_size) {
            chunk.push(item?);
        }
        if chunk.is_empty() {
            break;
        }
        for processed in process_chunk(&chunk, backend, validator, options, workers) {
            summary.total += 1;
            summary.captioned += usize::from(processed.captioned);
            summary.synthesized += usize::from(processed.synthesized);
            match processed.outcome {
                Outcome::Accepted(entry) => {
                    summary.accepted += 1;
                    sink.accepted(&entry)?;
                }
                Outcome::Rejected(report) => {
                    summary.rejected += 1;
                    let mut codes: Vec<_> = report.violations.iter().map(|v| v.code).collect();
                    codes.sort();
                    codes.dedup();
                    for code in codes {
                        *summary.rejections_by_code.entry(code).or_default() += 1;
                    }
                    sink.rejected(&report)?;
                }
                Outcome::Failed(failure) => {
                    summary.backend_failures += 1;
                    sink.failed(&failure)?;
                }
            }
        }
    }
    debug_assert!(summary.reconciles());
    Ok(summary)
}

fn process_chunk(
    chunk: &[CorpusEntry],
    backend: &dyn ModelBackend,
    validator: &Validator,
    options: &PipelineOptions,
    workers: usize,
) -> Vec<Processed> {
    if workers == 1 || chunk.len() == 1 {
        return chunk.iter().map(|e| process_entry(e, backend, validator, options)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Processed>>> = chunk.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(chunk.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = chunk.get(i) else { break };
                let processed = process_entry(entry, backend, validator, options);
                *slots[i].lock().expect("slot lock") = Some(processed);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

fn process_entry(
    entry: &CorpusEntry,
    backend: &dyn ModelBackend,
    validator: &Validator,
    options: &PipelineOptions,
) -> Processed {
    let retries = options.max_retries.unwrap_or_else(|| backend.max_retries());
    let failed = |stage, attempts, error: String, captioned| Processed {
        captioned,
        synthesized: false,
        outcome: Outcome::Failed(BackendFailure {
            record_id: entry.id.clone(),
            stage,
            attempts,
            error,
        }),
    };

    let caption_request = match build_caption_request(entry) {
        Ok(r) => r.with_temperature(options.caption_temperature),
        Err(e) => return failed(FailureStage::Caption, 0, e.to_string(), false),
    };
    let caption = match complete_with_retry(backend, &caption_request, retries) {
        Ok(c) => c.text,
        Err(f) => return failed(FailureStage::Caption, f.attempts, f.error.to_string(), false),
    };

    let synthesis_request = match build_synthesis_request(&caption, entry.ground_truth_transcription.as_deref()) {
        Ok(r) => r.with_entry_id(entry.id.clone()),
        Err(e) => return failed(FailureStage::Synthesis, 0, e.to_string(), true),
    };

    let mut last_report = None;
    for round in 0..=options.retry_rejected {
        let temperature = if round == 0 {
            options.synthesis_temperature
        } else {
            options.retry_temperature
        };
        let request = synthesis_request.clone().with_temperature(temperature);
        let output = match complete_with_retry(backend, &request, retries) {
            Ok(c) => c.text,
            Err(f) if last_report.is_none() => {
                return failed(FailureStage::Synthesis, f.attempts, f.error.to_string(), true)
            }
            // A later re-synthesis failed; keep the rejection we already have.
            Err(_) => break,
        };
        match assess(entry, &output, validator) {
            Ok(accepted) => {
                return Processed {
                    captioned: true,
                    synthesized: true,
                    outcome: Outcome::Accepted(accepted),
                }
            }
            Err(report) => last_report = Some(report),
        }
    }
    Processed {
        captioned: true,
        synthesized: true,
        outcome: Outcome::Rejected(last_report.expect("at least one synthesis round ran")),
    }
}

/// Extract, parse and validate one synthesis output.
fn assess(entry: &CorpusEntry, output: &str, validator: &Validator) -> Result<CorpusEntry, ValidationReport> {
    let malformed = |detail: String| {
        ValidationReport::from_violations(
            entry.id.clone(),
            vec![Violation::new(ViolationCode::MalformedOutput, "$", detail)],
            vec![],
        )
    };
    let json = extract_json(output).map_err(|e| malformed(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| malformed(e.to_string()))?;
    let mut warnings = Vec::new();
    let record = parse_uas_value(&value, validator.mode, &mut warnings).map_err(|e| malformed(e.to_string()))?;
    for w in warnings {
        log::warn!("entry {}: {w}", entry.id);
    }
    let report = match validator.validate_record(entry, &record) {
        Ok(report) => report,
        Err(e @ ValidationError::MissingGroundTruth(_)) => ValidationReport::from_violations(
            entry.id.clone(),
            vec![Violation::new(ViolationCode::TranscriptionMismatch, "transcription", e.to_string())],
            vec![],
        ),
        Err(e) => malformed(e.to_string()),
    };
    if report.is_accept() {
        let mut accepted = entry.clone();
        accepted.uas = Some(record);
        Ok(accepted)
    } else {
        Err(report)
    }
}
