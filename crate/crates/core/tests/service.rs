use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;
use uas_core::audit::{audit_router, AuditField, AuditTask, JudgmentStore, ServiceConfig, ServiceState};
use uas_core::schema::{paths, DomainTag};

fn tasks() -> Vec<AuditTask> {
    (0..3)
        .map(|i| AuditTask {
            task_id: format!("task-{i:04}"),
            entry_id: format!("e{i}"),
            audio_ref: format!("clips/e{i}.wav"),
            domain_tag: DomainTag::Speech,
            fields: paths::AUDITABLE
                .iter()
                .map(|p| AuditField {
                    field_path: p.to_string(),
                    displayed_value: format!("value of {p}"),
                })
                .collect(),
            assigned_annotators: if i == 2 {
                vec!["a1".into(), "a2".into(), "a4".into()]
            } else {
                vec!["a1".into(), "a2".into(), "a3".into()]
            },
        })
        .collect()
}

fn router(dir: &Path, config: ServiceConfig) -> Router {
    let store = JudgmentStore::open(dir.join("judgments.jsonl")).unwrap();
    audit_router(ServiceState::new(tasks(), store, config))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, bytes) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn post(app: &Router, body: &str) -> (StatusCode, Value) {
    let req = Request::post("/api/judgments")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = call(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn judgment(task: &str, annotator: &str, field: &str, verdict: &str) -> String {
    json!({"taskId": task, "annotatorId": annotator, "fieldPath": field, "verdict": verdict}).to_string()
}

async fn judge_task(app: &Router, task: &str, annotator: &str, verdict: &str) {
    for field in paths::AUDITABLE {
        let (status, _) = post(app, &judgment(task, annotator, field, verdict)).await;
        assert_eq!(status, StatusCode::OK);
    }
}

#[tokio::test]
async fn next_task_walks_assigned_tasks() {
    let tmp = TempDir::new().unwrap();
    let app = router(tmp.path(), ServiceConfig::default());

    let (status, task) = get(&app, "/api/tasks/next?annotator=a3").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["taskId"], "task-0000");
    assert_eq!(task["audioUrl"], "/media/e0");
    assert_eq!(task["fields"].as_array().unwrap().len(), 9);
    assert_eq!(task["fields"][0]["fieldPath"], paths::AGE);
    assert!(task["fields"][0].get("currentVerdict").is_none_or(Value::is_null));
    assert_eq!(task["progress"], json!({"judgedTasks": 0, "totalTasks": 2}));

    // A partially judged task stays current and shows the verdict so far.
    post(&app, &judgment("task-0000", "a3", paths::AGE, "Incorrect")).await;
    let (_, task) = get(&app, "/api/tasks/next?annotator=a3").await;
    assert_eq!(task["taskId"], "task-0000");
    assert_eq!(task["fields"][0]["currentVerdict"], "Incorrect");

    judge_task(&app, "task-0000", "a3", "Correct").await;
    let (_, task) = get(&app, "/api/tasks/next?annotator=a3").await;
    assert_eq!(task["taskId"], "task-0001");
    assert_eq!(task["progress"]["judgedTasks"], 1);

    // a3 is not on the panel for task-0002.
    judge_task(&app, "task-0001", "a3", "Correct").await;
    let (status, _) = get(&app, "/api/tasks/next?annotator=a3").await;
    assert_eq!(status, StatusCode::NO_CONTENT);

    let (status, _) = get(&app, "/api/tasks/next").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn judgment_errors() {
    let tmp = TempDir::new().unwrap();
    let roster: BTreeSet<String> = ["a1", "a2", "a3", "a4"].iter().map(|s| s.to_string()).collect();
    let app = router(
        tmp.path(),
        ServiceConfig {
            roster: Some(roster),
            ..ServiceConfig::default()
        },
    );
    assert_eq!(post(&app, "not json").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&app, r#"{"taskId": "task-0000"}"#).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        post(&app, &judgment("task-0000", "a1", paths::AGE, "Maybe")).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(post(&app, &judgment("task-0000", "", paths::AGE, "Correct")).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(post(&app, &judgment("task-9999", "a1", paths::AGE, "Correct")).await.0, StatusCode::CONFLICT);
    assert_eq!(
        post(&app, &judgment("task-0000", "a1", "paralinguistics.mood", "Correct")).await.0,
        StatusCode::CONFLICT
    );
    assert_eq!(post(&app, &judgment("task-0000", "zed", paths::AGE, "Correct")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/tasks/next?annotator=zed").await.0, StatusCode::NOT_FOUND);

    let (status, body) = post(&app, &judgment("task-0000", "a1", paths::AGE, "Unsure")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["verdict"], "Unsure");
    assert!(body["submittedAt"].is_string());
}

#[tokio::test]
async fn resubmission_overwrites_and_survives_restart() {
    let tmp = TempDir::new().unwrap();
    let app = router(tmp.path(), ServiceConfig::default());
    for a in ["a1", "a2", "a3"] {
        post(&app, &judgment("task-0000", a, paths::AGE, "Incorrect")).await;
    }
    let age = |report: &Value| report.as_array().unwrap()[0].clone();
    let (_, report) = get(&app, "/api/report").await;
    assert_eq!(age(&report)["notCorrect"], 1);
    assert_eq!(age(&report)["successes"], 0);

    // Two annotators change their minds; the latest verdict counts.
    post(&app, &judgment("task-0000", "a1", paths::AGE, "Correct")).await;
    post(&app, &judgment("task-0000", "a2", paths::AGE, "Correct")).await;
    let (_, report) = get(&app, "/api/report").await;
    assert_eq!(age(&report)["successes"], 1);
    assert_eq!(age(&report)["notCorrect"], 0);
    assert_eq!(age(&report)["pending"], 2);
    drop(app);

    let app = router(tmp.path(), ServiceConfig::default());
    let (_, after) = get(&app, "/api/report").await;
    assert_eq!(after, report);
    let (_, task) = get(&app, "/api/tasks/next?annotator=a1").await;
    assert_eq!(task["fields"][0]["currentVerdict"], "Correct");
}

#[tokio::test]
async fn progress_counts() {
    let tmp = TempDir::new().unwrap();
    let app = router(tmp.path(), ServiceConfig::default());
    judge_task(&app, "task-0002", "a4", "Correct").await;
    post(&app, &judgment("task-0000", "a1", paths::AGE, "Correct")).await;
    let (status, body) = get(&app, "/api/progress").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["totalTasks"], 3);
    let rows = body["annotators"].as_array().unwrap();
    let row = |id: &str| rows.iter().find(|r| r["annotatorId"] == id).unwrap().clone();
    assert_eq!(row("a4")["assignedTasks"], 1);
    assert_eq!(row("a4")["judgedTasks"], 1);
    assert_eq!(row("a1")["assignedTasks"], 3);
    assert_eq!(row("a1")["judgedTasks"], 0);
    assert_eq!(row("a1")["judgedFields"], 1);
}

#[tokio::test]
async fn media_and_static_ui() {
    let tmp = TempDir::new().unwrap();
    let media = tmp.path().join("media");
    fs::create_dir_all(media.join("clips")).unwrap();
    fs::write(media.join("clips/e1.wav"), b"RIFF0000WAVE").unwrap();
    let ui = tmp.path().join("ui");
    fs::create_dir_all(ui.join("assets")).unwrap();
    fs::write(ui.join("index.html"), "<!doctype html><title>audit</title>").unwrap();
    fs::write(ui.join("assets/app.js"), "console.log(1)").unwrap();

    let app = router(
        tmp.path(),
        ServiceConfig {
            media_root: Some(media),
            ui_dir: Some(ui),
            ..ServiceConfig::default()
        },
    );
    let resp = app
        .clone()
        .oneshot(Request::get("/media/e1").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "audio/wav");
    assert_eq!(resp.into_body().collect().await.unwrap().to_bytes().as_ref(), b"RIFF0000WAVE");
    assert_eq!(get(&app, "/media/e0").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/media/nope").await.0, StatusCode::NOT_FOUND);

    let (status, index) = call(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(index).unwrap().contains("<title>audit</title>"));
    let (status, js) = call(&app, Request::get("/assets/app.js").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(js, b"console.log(1)");
    let (status, _) = call(&app, Request::get("/missing.css").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_submissions_are_all_kept() {
    let tmp = TempDir::new().unwrap();
    let app = router(tmp.path(), ServiceConfig::default());
    let mut handles = Vec::new();
    for task in ["task-0000", "task-0001"] {
        for a in ["a1", "a2", "a3"] {
            let app = app.clone();
            let (task, a) = (task.to_string(), a.to_string());
            handles.push(tokio::spawn(async move { judge_task(&app, &task, &a, "Correct").await }));
        }
    }
    for h in handles {
        h.await.unwrap();
    }
    drop(app);
    let store = JudgmentStore::open(tmp.path().join("judgments.jsonl")).unwrap();
    assert_eq!(store.judgments().len(), 2 * 3 * 9);
}
