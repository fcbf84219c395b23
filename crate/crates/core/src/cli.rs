//! The `uas` command line.
//!
//! Exit status: 0 on success, 1 when `validate` rejects any entry, 2 on
//! input or configuration errors, 3 when a real backend could not be
//! reached for any entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{
    field_accuracy_report, read_audit_set, read_judgments, render_report_table, sample_audit_set, JudgmentStore,
    ReportOptions, SampleConfig, ServiceConfig, ServiceState, UnsurePolicy,
};
use crate::qa::{
    generate_via_backend, record_rng, serialize_chat, QaField, QaGenConfig, QaGenerator, TemplateBank, LETTERS,
};
use crate::schema::{write_jsonl_line, CorpusEntry, ManifestReader, Ontology, ParseMode};
use crate::synthesis::{
    run_pipeline, BackendConfig, HttpBackend, JsonlSink, MockBackend, ModelBackend, PipelineOptions,
};
use crate::validation::{AlignmentThresholds, ValidationError, ValidationReport, Validator, Violation, ViolationCode};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECTIONS: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "uas", version, about = "Build, validate, question and audit UAS corpora")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GlobalArgs {
    /// TOML file with shared settings; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Ontology TOML (emotionSet, ageSet, genderSet, contradictionLexicon)
    #[arg(long, global = true, value_name = "FILE")]
    pub ontology: Option<PathBuf>,
    /// Duration-alignment thresholds TOML
    #[arg(long, global = true, value_name = "FILE")]
    pub thresholds: Option<PathBuf>,
    /// Model backend TOML (endpointUrl, modelName, authTokenEnvVar, ...)
    #[arg(long, global = true, value_name = "FILE")]
    pub backend: Option<PathBuf>,
    /// Random seed for sampling and generation
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the synthesis pipeline
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Downgrade unknown keys and missing free-text paralinguistics to warnings
    #[arg(long, global = true)]
    pub lenient: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Caption, convert and validate every manifest entry
    Synthesize(SynthesizeArgs),
    /// Validate a corpus that already carries UAS records
    Validate(ValidateArgs),
    /// Generate chat-format QA items from a validated corpus
    Qagen(QagenArgs),
    /// Human audit: sample tasks, collect judgments, report accuracy
    #[command(subcommand)]
    Audit(AuditCommand),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Input manifest (JSON-Lines of corpus entries)
    pub manifest: PathBuf,
    /// Output directory for accepted.jsonl, rejected.jsonl, failures.jsonl and summary.json
    #[arg(long, short)]
    pub out: PathBuf,
    /// Serve completions from <DIR>/<caption|synthesis>/<entryId>.txt instead of a backend
    #[arg(long, value_name = "DIR")]
    pub mock_fixtures: Option<PathBuf>,
    /// Re-synthesize a rejected record up to N more times
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub retry_rejected: u32,
    /// Retries per backend call; defaults to the backend config
    #[arg(long, value_name = "N")]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Corpus (JSON-Lines of corpus entries with uas)
    pub corpus: PathBuf,
    /// Where to write rejection reports
    #[arg(long, default_value = "rejected.jsonl")]
    pub rejected: PathBuf,
}

#[derive(Debug, Args)]
pub struct QagenArgs {
    /// Validated corpus
    pub corpus: PathBuf,
    /// Output JSON-Lines, one chat exchange per line
    pub output: PathBuf,
    #[arg(long)]
    pub items_per_record: Option<usize>,
    /// Options per multiple-choice item (3 or 4)
    #[arg(long, value_parser = clap::value_parser!(u8).range(3..=4))]
    pub options: Option<u8>,
    /// Also write <output>.meta.jsonl with recordId, sourceField and kind per line
    #[arg(long)]
    pub with_meta: bool,
    /// Comma-separated field paths to question (default: the nine leaf fields)
    #[arg(long, value_delimiter = ',')]
    pub fields: Option<Vec<String>>,
    /// Template bank JSON replacing the bundled one
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    /// Allow multiple choice on free-text fields using the distractor pools
    #[arg(long)]
    pub free_text_mcq: bool,
    /// Ask the model backend for one multiple-choice exchange per record instead
    #[arg(long)]
    pub llm: bool,
    /// Mock fixtures directory for --llm (reads qagen/<entryId>.txt)
    #[arg(long, value_name = "DIR")]
    pub mock_fixtures: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Draw a stratified audit set from a corpus
    Sample(SampleArgs),
    /// Run the judgment collection service
    Serve(ServeArgs),
    /// Print per-field accuracy with Wilson intervals
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub corpus: PathBuf,
    /// Output audit set (JSON-Lines of tasks)
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Comma-separated annotator roster
    #[arg(long, value_delimiter = ',', default_value = "a1,a2,a3")]
    pub annotators: Vec<String>,
    /// Annotators per task; must be odd
    #[arg(long, default_value_t = 3)]
    pub per_task: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Audit set written by `audit sample`
    #[arg(long)]
    pub tasks: PathBuf,
    /// Judgment log file
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Built annotation UI to serve at /
    #[arg(long, value_name = "DIR")]
    pub ui_dir: Option<PathBuf>,
    /// Directory relative audio refs resolve against
    #[arg(long, value_name = "DIR")]
    pub media_root: Option<PathBuf>,
    /// Closed roster: reject annotators not listed
    #[arg(long, value_delimiter = ',')]
    pub roster: Option<Vec<String>>,
    #[command(flatten)]
    pub stats: StatsArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    /// Also write the rows as a JSON array
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub stats: StatsArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Treat Unsure as an abstention instead of a vote against
    #[arg(long)]
    pub abstain_unsure: bool,
    /// Normal quantile for the interval
    #[arg(long, default_value_t = crate::audit::DEFAULT_Z)]
    pub z: f64,
}

impl StatsArgs {
    fn options(&self) -> ReportOptions {
        ReportOptions {
            policy: if self.abstain_unsure {
                UnsurePolicy::Abstain
            } else {
                UnsurePolicy::NotCorrect
            },
            z: self.z,
        }
    }
}

/// Contents of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub ontology_path: Option<PathBuf>,
    pub thresholds_path: Option<PathBuf>,
    pub backend_config_path: Option<PathBuf>,
    pub rng_seed: Option<u64>,
    pub worker_count: Option<usize>,
    pub strict_mode: Option<bool>,
}

/// Settings after merging the config file with flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub ontology: Ontology,
    pub thresholds: AlignmentThresholds,
    pub backend_config_path: Option<PathBuf>,
    pub rng_seed: u64,
    pub workers: usize,
    pub mode: ParseMode,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_text(path: &Path, what: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {what} {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn io_fail(e: io::Error) -> CliError {
    CliError::input(format!("write failed: {e}"))
}

impl Settings {
    pub fn resolve(global: &GlobalArgs) -> CliResult<Self> {
        let file = match &global.config {
            Some(path) => toml::from_str::<GlobalConfig>(&read_text(path, "config")?)
                .map_err(|e| CliError::input(format!("config {}: {e}", path.display())))?,
            None => GlobalConfig::default(),
        };
        let ontology = match global.ontology.as_ref().or(file.ontology_path.as_ref()) {
            Some(path) => Ontology::from_toml(&read_text(path, "ontology")?)
                .map_err(|e| CliError::input(format!("ontology {}: {e}", path.display())))?,
            None => Ontology::default(),
        };
        let thresholds = match global.thresholds.as_ref().or(file.thresholds_path.as_ref()) {
            Some(path) => {
                let t: AlignmentThresholds = toml::from_str(&read_text(path, "thresholds")?)
                    .map_err(|e| CliError::input(format!("thresholds {}: {e}", path.display())))?;
                t.check().map_err(|e| CliError::input(e.to_string()))?;
                t
            }
            None => AlignmentThresholds::default(),
        };
        let workers = global.workers.or(file.worker_count).unwrap_or(1);
        if workers == 0 {
            return Err(CliError::input("workers must be at least 1"));
        }
        let strict = !global.lenient && file.strict_mode.unwrap_or(true);
        Ok(Self {
            ontology,
            thresholds,
            backend_config_path: global.backend.clone().or(file.backend_config_path),
            rng_seed: global.seed.or(file.rng_seed).unwrap_or(0),
            workers,
            mode: if strict { ParseMode::Strict } else { ParseMode::Lenient },
        })
    }

    fn validator(&self) -> Validator {
        Validator::new(self.ontology.clone(), self.thresholds, self.mode)
    }

    fn backend(&self, mock: Option<&Path>) -> CliResult<Box<dyn ModelBackend>> {
        if let Some(dir) = mock {
            if !dir.is_dir() {
                return Err(CliError::input(format!("mock fixtures {} is not a directory", dir.display())));
            }
            return Ok(Box::new(MockBackend::new(dir)));
        }
        let path = self
            .backend_config_path
            .as_ref()
            .ok_or_else(|| CliError::input("no backend configured: pass --backend FILE or --mock-fixtures DIR"))?;
        let config = BackendConfig::from_toml(&read_text(path, "backend config")?)
            .map_err(|e| CliError::input(format!("backend config {}: {e}", path.display())))?;
        Ok(Box::new(HttpBackend::new(config).map_err(CliError::input)?))
    }
}

fn open_manifest(path: &Path, mode: ParseMode) -> CliResult<ManifestReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    Ok(ManifestReader::new(BufReader::new(file), mode))
}

fn read_corpus(path: &Path, mode: ParseMode) -> CliResult<Vec<CorpusEntry>> {
    open_manifest(path, mode)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Parses arguments, runs, and reports errors on stderr. Returns the exit status.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<u8> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Synthesize(args) => cmd_synthesize(&settings, &args),
        Command::Validate(args) => cmd_validate(&settings, &args),
        Command::Qagen(args) => cmd_qagen(&settings, &args),
        Command::Audit(AuditCommand::Sample(args)) => cmd_audit_sample(&settings, &args),
        Command::Audit(AuditCommand::Serve(args)) => cmd_audit_serve(&args),
        Command::Audit(AuditCommand::Report(args)) => cmd_audit_report(&args),
    }
}

pub fn cmd_synthesize(settings: &Settings, args: &SynthesizeArgs) -> CliResult<u8> {
    let manifest = open_manifest(&args.manifest, settings.mode)?;
    let backend = settings.backend(args.mock_fixtures.as_deref())?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::input(format!("cannot create {}: {e}", args.out.display())))?;
    let mut sink = JsonlSink {
        accepted: create(&args.out.join("accepted.jsonl"))?,
        rejected: create(&args.out.join("rejected.jsonl"))?,
        failed: create(&args.out.join("failures.jsonl"))?,
    };
    let options = PipelineOptions {
        workers: settings.workers,
        max_retries: args.max_retries,
        retry_rejected: args.retry_rejected,
        ..PipelineOptions::default()
    };
    let summary = run_pipeline(manifest, backend.as_ref(), &settings.validator(), &options, &mut sink)
        .map_err(|e| CliError::input(format!("{}: {e}", args.manifest.display())))?;
    for w in [&mut sink.accepted as &mut dyn Write, &mut sink.rejected, &mut sink.failed] {
        w.flush().map_err(io_fail)?;
    }
    let mut out = create(&args.out.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut out, &summary).map_err(|e| io_fail(e.into()))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_fail)?;

    println!(
        "total {} accepted {} rejected {} backend failures {}",
        summary.total, summary.accepted, summary.rejected, summary.backend_failures
    );
    for (code, count) in &summary.rejections_by_code {
        println!("  {code}: {count}");
    }
    if !backend.is_mock() && summary.total > 0 && summary.backend_failures == summary.total {
        eprintln!("error: backend unreachable for every entry; see failures.jsonl");
        return Ok(EXIT_BACKEND);
    }
    Ok(EXIT_OK)
}

pub fn cmd_validate(settings: &Settings, args: &ValidateArgs) -> CliResult<u8> {
    let validator = settings.validator();
    let mut out = create(&args.rejected)?;
    let mut counts: BTreeMap<ViolationCode, usize> = BTreeMap::new();
    let (mut total, mut rejected) = (0usize, 0usize);
    for item in open_manifest(&args.corpus, settings.mode)? {
        let entry = item.map_err(|e| CliError::input(format!("{}: {e}", args.corpus.display())))?;
        total += 1;
        let report = match validator.validate(&entry) {
            Ok(r) => r,
            Err(ValidationError::MissingGroundTruth(id)) => ValidationReport::from_violations(
                id,
                vec![Violation::new(
                    ViolationCode::TranscriptionMismatch,
                    "groundTruthTranscription",
                    "speech entry has no ground-truth transcription",
                )],
                vec![],
            ),
            Err(e) => return Err(CliError::input(format!("{}: entry {}: {e}", args.corpus.display(), entry.id))),
        };
        if !report.is_accept() {
            rejected += 1;
            let codes: BTreeSet<_> = report.violations.iter().map(|v| v.code).collect();
            for code in codes {
                *counts.entry(code).or_default() += 1;
            }
            write_jsonl_line(&mut out, &report).map_err(io_fail)?;
        }
    }
    out.flush().map_err(io_fail)?;
    println!("total {total} accepted {} rejected {rejected}", total - rejected);
    for code in ViolationCode::RECORD_CHECKS {
        println!("  {code}: {}", counts.get(&code).copied().unwrap_or(0));
    }
    Ok(if rejected == 0 { EXIT_OK } else { EXIT_REJECTIONS })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ItemMeta<'a> {
    record_id: &'a str,
    source_field: QaField,
    kind: crate::qa::QaKind,
}

pub fn cmd_qagen(settings: &Settings, args: &QagenArgs) -> CliResult<u8> {
    let mut config = QaGenConfig {
        rng_seed: settings.rng_seed,
        free_text_mcq: args.free_text_mcq,
        ..QaGenConfig::default()
    };
    if let Some(n) = args.items_per_record {
        config.items_per_record = n;
    }
    if let Some(k) = args.options {
        config.options_per_mcq = usize::from(k);
    }
    if let Some(fields) = &args.fields {
        config.fields_enabled = fields
            .iter()
            .map(|f| QaField::from_path(f.trim()).ok_or_else(|| CliError::input(format!("unknown field {f:?}"))))
            .collect::<CliResult<_>>()?;
    }
    let bank = match &args.templates {
        Some(path) => TemplateBank::from_json(&read_text(path, "templates")?)
            .map_err(|e| CliError::input(format!("templates {}: {e}", path.display())))?,
        None => TemplateBank::default(),
    };
    let generator =
        QaGenerator::new(settings.ontology.clone(), bank, config).map_err(|e| CliError::input(e.to_string()))?;
    let corpus = read_corpus(&args.corpus, settings.mode)?;
    let backend = if args.llm {
        Some(settings.backend(args.mock_fixtures.as_deref())?)
    } else {
        None
    };

    let mut out = create(&args.output)?;
    let mut meta = if args.with_meta {
        let mut name = args.output.as_os_str().to_owned();
        name.push(".meta.jsonl");
        Some(create(Path::new(&name))?)
    } else {
        None
    };
    let (mut items, mut skipped) = (0usize, 0usize);
    for entry in &corpus {
        let Some(record) = &entry.uas else {
            log::warn!("entry {} has no uas record; skipped", entry.id);
            skipped += 1;
            continue;
        };
        if let Some(backend) = &backend {
            let letter = LETTERS[record_rng(settings.rng_seed, &entry.id).random_range(0..LETTERS.len())];
            match generate_via_backend(backend.as_ref(), &entry.id, record, letter, backend.max_retries()) {
                Ok(exchange) => {
                    writeln!(out, "{}", exchange.to_json()).map_err(io_fail)?;
                    items += 1;
                }
                Err(e) => {
                    log::warn!("entry {}: {e}", entry.id);
                    skipped += 1;
                }
            }
            continue;
        }
        for item in generator.generate(&entry.id, record) {
            writeln!(out, "{}", serialize_chat(&item)).map_err(io_fail)?;
            if let Some(meta) = &mut meta {
                let line = ItemMeta {
                    record_id: &item.record_id,
                    source_field: item.source_field,
                    kind: item.kind,
                };
                write_jsonl_line(meta, &line).map_err(io_fail)?;
            }
            items += 1;
        }
    }
    out.flush().map_err(io_fail)?;
    if let Some(meta) = &mut meta {
        meta.flush().map_err(io_fail)?;
    }
    println!("records {} items {items} skipped {skipped}", corpus.len());
    Ok(EXIT_OK)
}

pub fn cmd_audit_sample(settings: &Settings, args: &SampleArgs) -> CliResult<u8> {
    let corpus = read_corpus(&args.corpus, settings.mode)?;
    let config = SampleConfig {
        n: args.n,
        rng_seed: settings.rng_seed,
        roster: args.annotators.iter().map(|a| a.trim().to_string()).collect(),
        annotators_per_task: args.per_task,
    };
    let tasks = sample_audit_set(corpus, &config).map_err(|e| CliError::input(e.to_string()))?;
    let mut out = create(&args.out)?;
    for task in &tasks {
        write_jsonl_line(&mut out, task).map_err(io_fail)?;
    }
    out.flush().map_err(io_fail)?;
    println!("sampled {} tasks", tasks.len());
    Ok(EXIT_OK)
}

fn load_tasks(path: &Path) -> CliResult<Vec<crate::audit::AuditTask>> {
    read_audit_set(&read_text(path, "audit set")?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn cmd_audit_serve(args: &ServeArgs) -> CliResult<u8> {
    let tasks = load_tasks(&args.tasks)?;
    let store = JudgmentStore::open(&args.store).map_err(|e| CliError::input(e.to_string()))?;
    let config = ServiceConfig {
        roster: args
            .roster
            .as_ref()
            .map(|r| r.iter().map(|a| a.trim().to_string()).collect()),
        media_root: args.media_root.clone(),
        ui_dir: args.ui_dir.clone(),
        report: args.stats.options(),
    };
    let state = ServiceState::new(tasks, store, config);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::input(format!("runtime: {e}")))?;
    runtime
        .block_on(crate::audit::serve(args.bind, state))
        .map_err(|e| CliError {
            code: EXIT_BACKEND,
            message: format!("serving on {}: {e}", args.bind),
        })?;
    Ok(EXIT_OK)
}

pub fn cmd_audit_report(args: &ReportArgs) -> CliResult<u8> {
    let tasks = load_tasks(&args.tasks)?;
    let judgments = read_judgments(&args.store).map_err(|e| CliError::input(e.to_string()))?;
    let rows = field_accuracy_report(&judgments, &tasks, args.stats.options());
    print!("{}", render_report_table(&rows));
    if let Some(path) = &args.json {
        let mut out = create(path)?;
        serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| io_fail(e.into()))?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(io_fail)?;
    }
    Ok(EXIT_OK)
}
