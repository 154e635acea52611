//! The chat-completions client against a local stand-in server.

mod common;

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use medthink_annotate::{
    detect_inconsistencies, group_by_image, request_rationale, CleaningConfig, ConflictKind, Error, Generator,
    HttpGenerator, PromptTemplate, State as RecordState,
};

/// Authorization header and body of one captured request.
type Captured = (Option<String>, Value);

#[derive(Clone, Default)]
struct Seen(Arc<Mutex<Vec<Captured>>>);

fn server(reply: &'static str, status: StatusCode) -> (String, Seen) {
    let seen = Seen::default();
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(move |State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>| async move {
                let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                seen.0.lock().unwrap().push((auth, body));
                (status, Json(json!({ "model": "stub", "choices": [{ "message": { "role": "assistant", "content": reply } }] })))
            }),
        )
        .with_state(seen.clone());
    let addr = common::spawn(app);
    (format!("http://{addr}/v1/chat/completions"), seen)
}

#[test]
fn sends_prompt_image_and_token() {
    let (url, seen) = server("  The heart border is widened.  ", StatusCode::OK);
    let mut gen = HttpGenerator::new(url, "vision-model");
    gen.token = Some("secret-token".into());
    let rec = common::record(0);
    let out = request_rationale(&gen, &rec, 0, &PromptTemplate::default(), std::path::Path::new(".")).unwrap();
    assert_eq!(out.candidate_rationale.as_deref(), Some("The heart border is widened."));
    assert_eq!(out.generator_id.as_deref(), Some("http:vision-model"));
    assert_eq!(out.state, RecordState::PendingReview);

    let seen = seen.0.lock().unwrap();
    let (auth, body) = &seen[0];
    assert_eq!(auth.as_deref(), Some("Bearer secret-token"));
    assert_eq!(body["model"], "vision-model");
    let content = &body["messages"][0]["content"];
    assert!(content[0]["text"].as_str().unwrap().ends_with(&format!("Question: {} Answer: {}", rec.question, rec.answer)));
    assert!(content[1]["image_url"]["url"].as_str().unwrap().starts_with("data:image/png;base64,"));
}

#[test]
fn token_comes_from_the_environment() {
    // Only this test touches the variable.
    unsafe { std::env::set_var(medthink_annotate::TOKEN_ENV, "from-env") };
    let gen = HttpGenerator::new("http://127.0.0.1:9", "m").with_env_token();
    assert_eq!(gen.token.as_deref(), Some("from-env"));
}

#[test]
fn server_errors_and_empty_replies_do_not_count() {
    let (url, _) = server("ignored", StatusCode::INTERNAL_SERVER_ERROR);
    let gen = HttpGenerator::new(url, "m");
    let rec = common::record(0);
    let out = request_rationale(&gen, &rec, 0, &PromptTemplate::default(), std::path::Path::new(".")).unwrap();
    assert_eq!((out.attempts, out.state), (0, RecordState::PendingGeneration));
    assert!(out.last_error.unwrap().contains("500"));

    let (url, _) = server("   ", StatusCode::OK);
    let out = request_rationale(&HttpGenerator::new(url, "m"), &rec, 0, &PromptTemplate::default(), std::path::Path::new("."))
        .unwrap();
    assert_eq!(out.attempts, 0);
    assert!(out.last_error.is_some());
}

#[test]
fn unreachable_endpoint_is_a_generator_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let gen = HttpGenerator::new(format!("http://{addr}/v1/chat/completions"), "m");
    assert!(matches!(gen.review("hi"), Err(Error::Generator(_))));
}

#[test]
fn consistency_review_through_the_client() {
    let (url, seen) = server("Contradiction found: [[\"s0\", \"s1\"]]", StatusCode::OK);
    let gen = HttpGenerator::new(url, "m");
    let mut a = common::sample(0);
    let mut b = common::sample(1);
    b.image = a.image.clone();
    a.question = "Is the lung clear?".into();
    b.question = "Is there an opacity in the lung?".into();
    let report = detect_inconsistencies(&group_by_image(&[a, b]), &CleaningConfig::default(), Some(&gen)).unwrap();
    assert!(!report.degraded);
    assert_eq!(report.conflicts.len(), 1);
    assert_eq!(report.conflicts[0].kind, ConflictKind::Generator { generator_id: "http:m".into() });
    let prompt = seen.0.lock().unwrap()[0].1["messages"][0]["content"].as_str().unwrap().to_string();
    assert!(prompt.contains("s0: Is the lung clear? -> yes"));
}
