use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Serialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::{
    annotator_progress, field_accuracy_report, field_display, AuditJudgment, AuditTask, AuditVerdict, JudgmentStore,
    ReportOptions,
};

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// When set, annotators outside the roster get 404.
    pub roster: Option<BTreeSet<String>>,
    /// Directory that relative audio refs resolve against.
    pub media_root: Option<PathBuf>,
    /// Static annotation UI assets.
    pub ui_dir: Option<PathBuf>,
    pub report: ReportOptions,
}

pub struct ServiceState {
    tasks: Vec<AuditTask>,
    task_index: HashMap<String, usize>,
    store: Mutex<JudgmentStore>,
    config: ServiceConfig,
}

impl ServiceState {
    pub fn new(tasks: Vec<AuditTask>, store: JudgmentStore, config: ServiceConfig) -> Arc<Self> {
        let task_index = tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        Arc::new(Self {
            tasks,
            task_index,
            store: Mutex::new(store),
            config,
        })
    }

    fn known_annotator(&self, id: &str) -> bool {
        self.config.roster.as_ref().is_none_or(|r| r.contains(id))
    }

    /// Tasks the annotator is assigned to. Someone on no panel at all (only
    /// possible with an open roster) may judge any task.
    fn eligible<'a>(&'a self, annotator: &'a str) -> impl Iterator<Item = &'a AuditTask> + 'a {
        let on_any_panel = self
            .tasks
            .iter()
            .any(|t| t.assigned_annotators.iter().any(|a| a == annotator));
        self.tasks
            .iter()
            .filter(move |t| !on_any_panel || t.assigned_annotators.iter().any(|a| a == annotator))
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn audit_router(state: Arc<ServiceState>) -> Router {
    let ui_dir = state.config.ui_dir.clone();
    let router = Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/judgments", post(post_judgment))
        .route("/api/progress", get(progress))
        .route("/api/report", get(report))
        .route("/media/{entry_id}", get(media))
        .with_state(state);
    match ui_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => router,
    }
}

/// Binds and serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, state: Arc<ServiceState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("audit service listening on {}", listener.local_addr()?);
    axum::serve(listener, audit_router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FieldView<'a> {
    field_path: &'a str,
    label: &'static str,
    displayed_value: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    current_verdict: Option<AuditVerdict>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TaskView<'a> {
    task_id: &'a str,
    entry_id: &'a str,
    audio_ref: &'a str,
    audio_url: String,
    fields: Vec<FieldView<'a>>,
    assigned_annotators: &'a [String],
    progress: ProgressCounts,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ProgressCounts {
    judged_tasks: usize,
    total_tasks: usize,
}

async fn next_task(State(state): State<Arc<ServiceState>>, Query(query): Query<HashMap<String, String>>) -> Response {
    let Some(annotator) = query.get("annotator").filter(|a| !a.trim().is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing annotator query parameter");
    };
    if !state.known_annotator(annotator) {
        return error(StatusCode::NOT_FOUND, format!("unknown annotator {annotator:?}"));
    }
    let store = state.store.lock().expect("store lock");
    let judgments = store.judgments();
    let mut judged_tasks = 0;
    let mut total_tasks = 0;
    let mut next = None;
    for task in state.eligible(annotator) {
        total_tasks += 1;
        let done = task
            .fields
            .iter()
            .all(|f| judgments.get(&task.task_id, annotator, &f.field_path).is_some());
        if done {
            judged_tasks += 1;
        } else if next.is_none() {
            next = Some(task);
        }
    }
    let Some(task) = next else {
        return StatusCode::NO_CONTENT.into_response();
    };
    let view = TaskView {
        task_id: &task.task_id,
        entry_id: &task.entry_id,
        audio_ref: &task.audio_ref,
        audio_url: format!("/media/{}", task.entry_id),
        fields: task
            .fields
            .iter()
            .map(|f| FieldView {
                field_path: &f.field_path,
                label: field_display(&f.field_path).1,
                displayed_value: &f.displayed_value,
                current_verdict: judgments.get(&task.task_id, annotator, &f.field_path).map(|j| j.verdict),
            })
            .collect(),
        assigned_annotators: &task.assigned_annotators,
        progress: ProgressCounts {
            judged_tasks,
            total_tasks,
        },
    };
    Json(view).into_response()
}

async fn post_judgment(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let judgment: AuditJudgment = match serde_json::from_slice(&body) {
        Ok(j) => j,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed judgment: {e}")),
    };
    if judgment.annotator_id.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty annotatorId");
    }
    let Some(&index) = state.task_index.get(&judgment.task_id) else {
        return error(StatusCode::CONFLICT, format!("unknown taskId {:?}", judgment.task_id));
    };
    if !state.tasks[index].has_field(&judgment.field_path) {
        return error(StatusCode::CONFLICT, format!("unknown fieldPath {:?}", judgment.field_path));
    }
    if !state.known_annotator(&judgment.annotator_id) {
        return error(StatusCode::NOT_FOUND, format!("unknown annotator {:?}", judgment.annotator_id));
    }
    let judgment = judgment.stamped(Utc::now());
    let mut store = state.store.lock().expect("store lock");
    match store.append(judgment.clone()) {
        Ok(()) => Json(judgment).into_response(),
        Err(e) => {
            log::error!("{e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, "could not persist judgment")
        }
    }
}

async fn progress(State(state): State<Arc<ServiceState>>) -> Response {
    let store = state.store.lock().expect("store lock");
    let judgments = store.judgments();
    let mut annotators: BTreeSet<String> = state
        .tasks
        .iter()
        .flat_map(|t| t.assigned_annotators.iter().cloned())
        .collect();
    annotators.extend(judgments.iter().map(|j| j.annotator_id.clone()));
    if let Some(roster) = &state.config.roster {
        annotators.extend(roster.iter().cloned());
    }
    let rows: Vec<_> = annotators
        .iter()
        .map(|a| annotator_progress(judgments, &state.tasks, a))
        .collect();
    Json(json!({ "totalTasks": state.tasks.len(), "annotators": rows })).into_response()
}

async fn report(State(state): State<Arc<ServiceState>>) -> Response {
    let store = state.store.lock().expect("store lock");
    Json(field_accuracy_report(store.judgments(), &state.tasks, state.config.report)).into_response()
}

fn content_type(path: &std::path::Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("wav") => "audio/wav",
        Some("mp3") => "audio/mpeg",
        Some("flac") => "audio/flac",
        Some("ogg" | "opus") => "audio/ogg",
        Some("m4a") => "audio/mp4",
        _ => "application/octet-stream",
    }
}

async fn media(State(state): State<Arc<ServiceState>>, Path(entry_id): Path<String>) -> Response {
    let Some(task) = state.tasks.iter().find(|t| t.entry_id == entry_id) else {
        return error(StatusCode::NOT_FOUND, format!("no task for entry {entry_id:?}"));
    };
    let mut path = PathBuf::from(&task.audio_ref);
    if path.is_relative() {
        if let Some(root) = &state.config.media_root {
            path = root.join(path);
        }
    }
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], Body::from(bytes)).into_response(),
        Err(e) => {
            log::warn!("media {}: {e}", path.display());
            error(StatusCode::NOT_FOUND, "audio not available")
        }
    }
}
