use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{AuditJudgment, AuditVerdict};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("judgment store {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("judgment store {path}, line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

type Key = (String, String, String);

/// Latest judgment per (task, annotator, field).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JudgmentSet {
    by_key: BTreeMap<Key, AuditJudgment>,
}

impl JudgmentSet {
    /// Inserts or overwrites. Returns true when a previous judgment was replaced.
    pub fn record(&mut self, judgment: AuditJudgment) -> bool {
        let key = (
            judgment.task_id.clone(),
            judgment.field_path.clone(),
            judgment.annotator_id.clone(),
        );
        self.by_key.insert(key, judgment).is_some()
    }

    pub fn get(&self, task_id: &str, annotator_id: &str, field_path: &str) -> Option<&AuditJudgment> {
        self.by_key
            .get(&(task_id.to_string(), field_path.to_string(), annotator_id.to_string()))
    }

    /// Every annotator's verdict for one (task, field).
    pub fn verdicts(&self, task_id: &str, field_path: &str) -> Vec<AuditVerdict> {
        let lo = (task_id.to_string(), field_path.to_string(), String::new());
        self.by_key
            .range(lo..)
            .take_while(|((t, f, _), _)| t == task_id && f == field_path)
            .map(|(_, j)| j.verdict)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AuditJudgment> {
        self.by_key.values()
    }
}

impl FromIterator<AuditJudgment> for JudgmentSet {
    fn from_iter<T: IntoIterator<Item = AuditJudgment>>(iter: T) -> Self {
        let mut set = JudgmentSet::default();
        for j in iter {
            set.record(j);
        }
        set
    }
}

/// Append-only JSON-Lines judgment log. Every write is flushed to disk
/// before it is acknowledged. On open the log is replayed, and rewritten as
/// a compact snapshot once superseded lines outnumber live ones.
#[derive(Debug)]
pub struct JudgmentStore {
    path: PathBuf,
    file: File,
    judgments: JudgmentSet,
    log_lines: usize,
}

impl JudgmentStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| StoreError::Io { path: path.clone(), source };
        let (judgments, log_lines, torn_tail) = replay(&path)?;
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        let mut store = Self {
            path,
            file,
            judgments,
            log_lines,
        };
        if torn_tail || store.log_lines > 2 * store.judgments.len().max(16) {
            store.compact()?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn judgments(&self) -> &JudgmentSet {
        &self.judgments
    }

    pub fn log_lines(&self) -> usize {
        self.log_lines
    }

    /// Durably appends one judgment, then applies it.
    pub fn append(&mut self, judgment: AuditJudgment) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(&judgment).expect("judgment serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.log_lines += 1;
        self.judgments.record(judgment);
        Ok(())
    }

    /// Rewrites the log to one line per live judgment via an atomic rename.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let io_err = |source| StoreError::Io {
            path: self.path.clone(),
            source,
        };
        let mut tmp_name = self.path.as_os_str().to_owned();
        tmp_name.push(".compact");
        let tmp = PathBuf::from(tmp_name);
        {
            let mut out = io::BufWriter::new(File::create(&tmp).map_err(io_err)?);
            for j in self.judgments.iter() {
                serde_json::to_writer(&mut out, j).map_err(|e| io_err(e.into()))?;
                out.write_all(b"\n").map_err(io_err)?;
            }
            let file = out.into_inner().map_err(|e| io_err(e.into_error()))?;
            file.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, &self.path).map_err(io_err)?;
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        self.file = OpenOptions::new().append(true).open(&self.path).map_err(io_err)?;
        self.log_lines = self.judgments.len();
        Ok(())
    }
}

/// Loads the live judgments without creating or rewriting the log. A
/// missing file reads as empty.
pub fn read_judgments(path: impl AsRef<Path>) -> Result<JudgmentSet, StoreError> {
    replay(path.as_ref()).map(|(set, _, _)| set)
}

fn replay(path: &Path) -> Result<(JudgmentSet, usize, bool), StoreError> {
    let io_err = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut judgments = JudgmentSet::default();
    let mut log_lines = 0;
    let mut torn_tail = false;
    if !path.exists() {
        return Ok((judgments, 0, false));
    }
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>().map_err(io_err)?;
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AuditJudgment>(line) {
            Ok(j) => {
                judgments.record(j);
                log_lines += 1;
            }
            // A crash mid-append can leave a partial final line.
            Err(e) if i + 1 == last => {
                log::warn!("{}: dropping torn final line: {e}", path.display());
                torn_tail = true;
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((judgments, log_lines, torn_tail))
}
