//! Human verification of sampled records: stratified sampling, majority-vote
//! consensus over annotator judgments, and per-field accuracy with Wilson
//! score intervals.

mod service;
mod stats;
mod store;

pub use service::{audit_router, serve, ServiceConfig, ServiceState};
pub use stats::{wilson_interval, StatsError, DEFAULT_Z};
pub use store::{read_judgments, JudgmentSet, JudgmentStore, StoreError};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, SubsecRound, Utc};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{paths, AcousticEvent, CorpusEntry, DomainTag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditField {
    pub field_path: String,
    pub displayed_value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditTask {
    pub task_id: String,
    pub entry_id: String,
    pub audio_ref: String,
    pub domain_tag: DomainTag,
    pub fields: Vec<AuditField>,
    pub assigned_annotators: Vec<String>,
}

impl AuditTask {
    pub fn has_field(&self, path: &str) -> bool {
        self.fields.iter().any(|f| f.field_path == path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditVerdict {
    Correct,
    Incorrect,
    Unsure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditJudgment {
    pub task_id: String,
    pub annotator_id: String,
    pub field_path: String,
    pub verdict: AuditVerdict,
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

impl AuditJudgment {
    /// Truncates the timestamp to whole seconds, filling in `now` if unset.
    pub fn stamped(mut self, now: DateTime<Utc>) -> Self {
        self.submitted_at = Some(self.submitted_at.unwrap_or(now).trunc_subsecs(0));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Consensus {
    Correct,
    NotCorrect,
    Pending,
}

/// How `Unsure` votes enter the majority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum UnsurePolicy {
    /// Unsure counts against: Correct needs a strict majority of all votes.
    #[default]
    NotCorrect,
    /// Unsure abstains: Correct needs more Correct than Incorrect votes.
    Abstain,
}

pub const DEFAULT_ANNOTATORS_PER_TASK: usize = 3;

/// Consensus over the verdicts for one (task, field), given how many votes
/// a decision needs.
pub fn consensus_with(verdicts: &[AuditVerdict], required: usize, policy: UnsurePolicy) -> Consensus {
    if verdicts.len() < required.max(1) {
        return Consensus::Pending;
    }
    let correct = verdicts.iter().filter(|v| **v == AuditVerdict::Correct).count();
    let incorrect = verdicts.iter().filter(|v| **v == AuditVerdict::Incorrect).count();
    let wins = match policy {
        UnsurePolicy::NotCorrect => 2 * correct > verdicts.len(),
        UnsurePolicy::Abstain => correct > incorrect,
    };
    if wins {
        Consensus::Correct
    } else {
        Consensus::NotCorrect
    }
}

/// Three-annotator majority with Unsure counted as not Correct.
pub fn consensus(verdicts: &[AuditVerdict]) -> Consensus {
    consensus_with(verdicts, DEFAULT_ANNOTATORS_PER_TASK, UnsurePolicy::NotCorrect)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("corpus has {available} entries, {requested} requested")]
    CorpusTooSmall { requested: usize, available: usize },
    #[error("sample size must be positive")]
    EmptySample,
    #[error("annotators per task must be odd, got {0}")]
    EvenPanel(usize),
    #[error("roster has {roster} annotators, {per_task} needed per task")]
    RosterTooSmall { roster: usize, per_task: usize },
    #[error("duplicate annotator id {0:?}")]
    DuplicateAnnotator(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SampleConfig {
    pub n: usize,
    pub rng_seed: u64,
    pub roster: Vec<String>,
    pub annotators_per_task: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n: 400,
            rng_seed: 0,
            roster: vec!["a1".into(), "a2".into(), "a3".into()],
            annotators_per_task: DEFAULT_ANNOTATORS_PER_TASK,
        }
    }
}

impl SampleConfig {
    pub fn check(&self) -> Result<(), AuditError> {
        if self.n == 0 {
            return Err(AuditError::EmptySample);
        }
        if self.annotators_per_task % 2 == 0 {
            return Err(AuditError::EvenPanel(self.annotators_per_task));
        }
        if self.roster.len() < self.annotators_per_task {
            return Err(AuditError::RosterTooSmall {
                roster: self.roster.len(),
                per_task: self.annotators_per_task,
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &self.roster {
            if !seen.insert(id) {
                return Err(AuditError::DuplicateAnnotator(id.clone()));
            }
        }
        Ok(())
    }
}

/// Proportional per-stratum quotas: floors first, then one extra each to
/// the largest strata until `n` is reached.
pub fn stratum_quotas(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| (s as u128 * n as u128 / total as u128) as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut left = n.saturating_sub(quotas.iter().sum());
    while left > 0 {
        let before = left;
        for &i in &order {
            if left > 0 && quotas[i] < sizes[i] {
                quotas[i] += 1;
                left -= 1;
            }
        }
        if left == before {
            break;
        }
    }
    quotas
}

fn render_events(events: &[AcousticEvent]) -> String {
    if events.is_empty() {
        return "[]".to_string();
    }
    events
        .iter()
        .map(|e| format!("{} ({})", e.label, e.characteristic))
        .collect::<Vec<_>>()
        .join("; ")
}

/// The nine auditable values of an entry, in report order. Missing values
/// render as `null`.
pub fn render_fields(entry: &CorpusEntry) -> Vec<AuditField> {
    paths::AUDITABLE
        .iter()
        .map(|&path| {
            let value = entry.uas.as_ref().and_then(|uas| {
                let nle = &uas.non_linguistic_events;
                match path {
                    paths::DESCRIPTION => Some(nle.description.clone()),
                    paths::DISCRETE_EVENTS => Some(render_events(&nle.discrete_events)),
                    paths::CONTINUOUS_EVENTS => Some(render_events(&nle.continuous_events)),
                    p => uas.paralinguistics.get(p).map(str::to_string),
                }
            });
            AuditField {
                field_path: path.to_string(),
                displayed_value: value.unwrap_or_else(|| "null".to_string()),
            }
        })
        .collect()
}

/// Stratified sample by domain tag. Tasks come out in corpus order and are
/// assigned panels from the roster in rotation.
pub fn sample_audit_set<I>(corpus: I, config: &SampleConfig) -> Result<Vec<AuditTask>, AuditError>
where
    I: IntoIterator<Item = CorpusEntry>,
{
    config.check()?;
    let entries: Vec<CorpusEntry> = corpus.into_iter().collect();
    if entries.len() < config.n {
        return Err(AuditError::CorpusTooSmall {
            requested: config.n,
            available: entries.len(),
        });
    }

    let strata: Vec<Vec<usize>> = DomainTag::ALL
        .iter()
        .map(|tag| (0..entries.len()).filter(|&i| entries[i].domain_tag == *tag).collect())
        .collect();
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let quotas = stratum_quotas(&sizes, config.n);

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(config.n);
    for (members, quota) in strata.iter().zip(quotas) {
        chosen.extend(index::sample(&mut rng, members.len(), quota).into_iter().map(|k| members[k]));
    }
    chosen.sort_unstable();

    let width = config.n.to_string().len().max(4);
    let roster = &config.roster;
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            let entry = &entries[i];
            AuditTask {
                task_id: format!("task-{k:0width$}"),
                entry_id: entry.id.clone(),
                audio_ref: entry.audio_ref.clone(),
                domain_tag: entry.domain_tag,
                fields: render_fields(entry),
                assigned_annotators: (0..config.annotators_per_task)
                    .map(|j| roster[(k * config.annotators_per_task + j) % roster.len()].clone())
                    .collect(),
            }
        })
        .collect())
}

/// Accuracy of one field over tasks with a decided consensus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldAccuracy {
    pub field_path: String,
    pub domain: String,
    pub label: String,
    /// Tasks with a decided consensus.
    pub n: usize,
    pub successes: usize,
    pub not_correct: usize,
    pub pending: usize,
    pub accuracy: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    /// False while any task is still pending for this field.
    pub complete: bool,
}

pub fn field_display(path: &str) -> (&'static str, &'static str) {
    match path {
        paths::AGE => ("Paralinguistics", "Age"),
        paths::GENDER => ("Paralinguistics", "Gender"),
        paths::EMOTION => ("Paralinguistics", "Emotion"),
        paths::ACCENT => ("Paralinguistics", "Accent"),
        paths::PROSODY => ("Paralinguistics", "Prosody"),
        paths::TIMBRE => ("Paralinguistics", "Timbre"),
        paths::DESCRIPTION => ("Non-linguistic Events", "Description"),
        paths::DISCRETE_EVENTS => ("Non-linguistic Events", "Discrete Events"),
        paths::CONTINUOUS_EVENTS => ("Non-linguistic Events", "Continuous Events"),
        _ => ("", "Transcription"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub policy: UnsurePolicy,
    pub z: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            policy: UnsurePolicy::NotCorrect,
            z: DEFAULT_Z,
        }
    }
}

/// Per-field consensus counts and Wilson intervals, one row per auditable
/// field in fixed order.
pub fn field_accuracy_report(judgments: &JudgmentSet, tasks: &[AuditTask], options: ReportOptions) -> Vec<FieldAccuracy> {
    paths::AUDITABLE
        .iter()
        .map(|&path| {
            let (domain, label) = field_display(path);
            let (mut successes, mut not_correct, mut pending) = (0, 0, 0);
            for task in tasks {
                let required = task.assigned_annotators.len();
                match consensus_with(&judgments.verdicts(&task.task_id, path), required, options.policy) {
                    Consensus::Correct => successes += 1,
                    Consensus::NotCorrect => not_correct += 1,
                    Consensus::Pending => pending += 1,
                }
            }
            let n = successes + not_correct;
            let interval = wilson_interval(successes as u64, n as u64, options.z).ok();
            FieldAccuracy {
                field_path: path.to_string(),
                domain: domain.to_string(),
                label: label.to_string(),
                n,
                successes,
                not_correct,
                pending,
                accuracy: (n > 0).then(|| successes as f64 / n as f64),
                ci_lower: interval.map(|(lo, _)| lo),
                ci_upper: interval.map(|(_, hi)| hi),
                complete: pending == 0 && n > 0,
            }
        })
        .collect()
}

/// Plain-text table with Domain, Field, Accuracy (%) and 95% CI columns.
pub fn render_report_table(rows: &[FieldAccuracy]) -> String {
    let mut lines: Vec<[String; 5]> = vec![[
        "Domain".into(),
        "Field".into(),
        "Accuracy (%)".into(),
        "95% CI".into(),
        "n".into(),
    ]];
    for row in rows {
        let accuracy = row.accuracy.map_or("-".to_string(), |a| format!("{:.2}", a * 100.0));
        let ci = match (row.ci_lower, row.ci_upper) {
            (Some(lo), Some(hi)) => format!("[{:.2}, {:.2}]", lo * 100.0, hi * 100.0),
            _ => "-".to_string(),
        };
        let n = if row.pending > 0 {
            format!("{} ({} pending)", row.n, row.pending)
        } else {
            row.n.to_string()
        };
        lines.push([row.domain.clone(), row.label.clone(), accuracy, ci, n]);
    }
    let mut widths = [0usize; 5];
    for line in &lines {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// Per-annotator completion counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnnotatorProgress {
    pub annotator_id: String,
    pub assigned_tasks: usize,
    pub judged_tasks: usize,
    pub judged_fields: usize,
}

pub fn annotator_progress(judgments: &JudgmentSet, tasks: &[AuditTask], annotator: &str) -> AnnotatorProgress {
    let mut progress = AnnotatorProgress {
        annotator_id: annotator.to_string(),
        assigned_tasks: 0,
        judged_tasks: 0,
        judged_fields: 0,
    };
    for task in tasks {
        let judged = task
            .fields
            .iter()
            .filter(|f| judgments.get(&task.task_id, annotator, &f.field_path).is_some())
            .count();
        progress.judged_fields += judged;
        if task.assigned_annotators.iter().any(|a| a == annotator) {
            progress.assigned_tasks += 1;
        }
        if judged == task.fields.len() {
            progress.judged_tasks += 1;
        }
    }
    progress
}

/// Reads an audit set written one task per line.
pub fn read_audit_set(text: &str) -> Result<Vec<AuditTask>, String> {
    let mut tasks = Vec::new();
    let mut ids = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let task: AuditTask = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if ids.insert(task.task_id.clone(), i + 1).is_some() {
            return Err(format!("line {}: duplicate taskId {:?}", i + 1, task.task_id));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{NonLinguisticEvents, Paralinguistics, UasRecord};
    use AuditVerdict::*;

    #[test]
    fn consensus_examples() {
        assert_eq!(consensus(&[Correct, Correct, Incorrect]), Consensus::Correct);
        assert_eq!(consensus(&[Correct, Unsure, Incorrect]), Consensus::NotCorrect);
        assert_eq!(consensus(&[Correct, Correct]), Consensus::Pending);
        assert_eq!(consensus(&[]), Consensus::Pending);
        assert_eq!(
            consensus_with(&[Correct, Unsure, Unsure], 3, UnsurePolicy::Abstain),
            Consensus::Correct
        );
        assert_eq!(
            consensus_with(&[Correct, Unsure, Incorrect], 3, UnsurePolicy::Abstain),
            Consensus::NotCorrect
        );
    }

    #[test]
    fn quotas() {
        assert_eq!(stratum_quotas(&[2000, 1200, 800], 400), vec![200, 120, 80]);
        assert_eq!(stratum_quotas(&[5, 3, 2], 10), vec![5, 3, 2]);
        assert_eq!(stratum_quotas(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(stratum_quotas(&[7, 0, 3], 5), vec![4, 0, 1]);
        assert_eq!(stratum_quotas(&[0, 0, 0], 0), vec![0, 0, 0]);
    }

    fn entry(i: usize, tag: DomainTag) -> CorpusEntry {
        CorpusEntry {
            id: format!("e{i}"),
            audio_ref: format!("audio/e{i}.wav"),
            duration_seconds: 3.0,
            ground_truth_transcription: None,
            domain_tag: tag,
            uas: Some(UasRecord {
                transcription: None,
                paralinguistics: Paralinguistics::default(),
                non_linguistic_events: NonLinguisticEvents {
                    description: "Wind".into(),
                    discrete_events: vec![],
                    continuous_events: vec![AcousticEvent::new("Wind", "Gusty")],
                },
            }),
        }
    }

    fn corpus(speech: usize, music: usize, env: usize) -> Vec<CorpusEntry> {
        let tags = std::iter::repeat_n(DomainTag::Speech, speech)
            .chain(std::iter::repeat_n(DomainTag::Music, music))
            .chain(std::iter::repeat_n(DomainTag::Environment, env));
        tags.enumerate().map(|(i, t)| entry(i, t)).collect()
    }

    #[test]
    fn stratified_sample() {
        let config = SampleConfig::default();
        let tasks = sample_audit_set(corpus(2000, 1200, 800), &config).unwrap();
        assert_eq!(tasks.len(), 400);
        let count = |t: DomainTag| tasks.iter().filter(|x| x.domain_tag == t).count();
        assert_eq!(
            (count(DomainTag::Speech), count(DomainTag::Music), count(DomainTag::Environment)),
            (200, 120, 80)
        );
        let again = sample_audit_set(corpus(2000, 1200, 800), &config).unwrap();
        assert_eq!(tasks, again);
        for task in &tasks {
            assert_eq!(task.fields.len(), 9);
            assert_eq!(task.fields[0].displayed_value, "null");
            assert_eq!(task.fields[8].displayed_value, "Wind (Gusty)");
            assert_eq!(task.assigned_annotators, ["a1", "a2", "a3"]);
        }
    }

    #[test]
    fn sample_everything_or_fail() {
        let mut config = SampleConfig::default();
        config.n = 10;
        let tasks = sample_audit_set(corpus(5, 3, 2), &config).unwrap();
        let ids: Vec<_> = tasks.iter().map(|t| t.entry_id.clone()).collect();
        assert_eq!(ids, (0..10).map(|i| format!("e{i}")).collect::<Vec<_>>());
        config.n = 11;
        assert_eq!(
            sample_audit_set(corpus(5, 3, 2), &config),
            Err(AuditError::CorpusTooSmall { requested: 11, available: 10 })
        );
    }

    #[test]
    fn roster_rules() {
        let mut config = SampleConfig::default();
        config.annotators_per_task = 2;
        assert_eq!(config.check(), Err(AuditError::EvenPanel(2)));
        config.annotators_per_task = 5;
        assert!(matches!(config.check(), Err(AuditError::RosterTooSmall { .. })));
        config.annotators_per_task = 1;
        config.roster = vec!["x".into(), "x".into()];
        assert!(matches!(config.check(), Err(AuditError::DuplicateAnnotator(_))));
    }

    #[test]
    fn empty_report() {
        let tasks = sample_audit_set(corpus(3, 0, 0), &SampleConfig { n: 3, ..Default::default() }).unwrap();
        let rows = field_accuracy_report(&JudgmentSet::default(), &tasks, ReportOptions::default());
        assert_eq!(rows.len(), 9);
        for row in &rows {
            assert_eq!((row.n, row.pending, row.accuracy, row.ci_lower), (0, 3, None, None));
            assert!(!row.complete);
        }
        let table = render_report_table(&rows);
        assert!(table.starts_with("Domain"));
        assert!(table.contains("Continuous Events"));
    }

    #[test]
    fn judgment_wire_shape() {
        let j: AuditJudgment = serde_json::from_str(
            r#"{"taskId":"t","annotatorId":"a1","fieldPath":"paralinguistics.age","verdict":"Unsure","submittedAt":"2026-03-01T10:00:00.750Z"}"#,
        )
        .unwrap();
        let j = j.stamped(Utc::now());
        assert_eq!(
            serde_json::to_value(&j).unwrap()["submittedAt"],
            serde_json::json!("2026-03-01T10:00:00Z")
        );
    }
}
