use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use paperscope_core::corpus::Corpus;
use paperscope_core::embedding::{embed_corpus, EmbeddingSpace, MockEmbedder};
use paperscope_core::llm::{LlmError, Matcher, Script, ScriptedLlm};
use paperscope_core::{sample, Library, Space};
use paperscope_server::{router, RouterOptions};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture_with(llm: ScriptedLlm) -> (Router, Arc<ScriptedLlm>) {
    let (corpus, _) = Corpus::from_records(sample::generate(200, 7).records);
    let embedder = Arc::new(MockEmbedder::new(EmbeddingSpace::mock("mock", 256)));
    let vectors = Arc::new(embed_corpus(embedder.as_ref(), &corpus).unwrap());
    let llm = Arc::new(llm);
    let lib = Library::new(corpus, llm.clone());
    lib.add_space(Space::new(vectors, None, Some(embedder), None));
    (router(Arc::new(lib), &RouterOptions::default()).unwrap(), llm)
}

fn fixture() -> (Router, Arc<ScriptedLlm>) {
    fixture_with(ScriptedLlm::new())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if ctype.starts_with("application/json") {
        serde_json::from_slice(&bytes).unwrap_or(Value::Null)
    } else {
        Value::String(String::from_utf8(bytes.to_vec()).unwrap())
    };
    (status, value, ctype)
}

fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].is_string());
    assert!(v.get("detail").is_some());
}

#[tokio::test]
async fn health_reports_corpus_and_spaces() {
    let (app, _) = fixture();
    let (s, v, _) = call(&app, "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["papers"], 200);
    assert_eq!(v["spaces"], json!(["mock"]));
}

#[tokio::test]
async fn papers_listing_search_and_lookup() {
    let (app, _) = fixture();
    let (s, v, _) = call(&app, "GET", "/papers?limit=5&offset=2", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 200);
    assert_eq!(v["papers"].as_array().unwrap().len(), 5);
    assert_eq!(v["papers"][0]["id"], "p3");

    let (s, v, _) = call(&app, "POST", "/papers", Some(json!({"query": "map", "fields": ["title", "keywords"]}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["total"].as_u64().unwrap() > 0);

    let (s, v, _) = call(&app, "GET", "/papers?q=map&fields=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");
    let (s, _, _) = call(&app, "GET", "/papers?limit=abc", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v, _) = call(&app, "GET", "/papers/p1", None).await;
    assert_eq!((s, v["id"].as_str()), (StatusCode::OK, Some("p1")));
    let (s, v, _) = call(&app, "GET", "/papers/unknown", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn similar_by_seed_and_text() {
    let (app, _) = fixture();
    let (s, v, _) = call(&app, "POST", "/similar", Some(json!({"seeds": ["p1"], "k": 5}))).await;
    assert_eq!(s, StatusCode::OK);
    let hits = v["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 5);
    assert!(hits.iter().all(|h| h["paper_id"] != "p1"));

    let (s, v, _) = call(&app, "POST", "/similar", Some(json!({"title": "maps", "abstract": "geographic", "threshold": 0.1}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["hits"].as_array().unwrap().iter().all(|h| h["score"].as_f64().unwrap() > 0.1));

    let (s, v, _) = call(&app, "POST", "/similar", Some(json!({"seeds": [], "title": "", "abstract": ""}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");
    let (s, v, _) = call(&app, "POST", "/similar", Some(json!({"seeds": ["nope"]}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
    let (s, v, _) = call(&app, "POST", "/similar", Some(json!({"seeds": ["p1"], "space": "ada"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
    let (s, v, _) = call(&app, "POST", "/similar", Some(json!({"seeds": ["p1"], "k": 0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");
    let (s, _, _) = call(&app, "POST", "/similar", Some(json!({"seeds": "p1"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn projection_and_meta() {
    let (app, _) = fixture();
    let (s, v, _) = call(&app, "GET", "/projection?space=mock", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["points"].as_array().unwrap().len(), 200);
    let (s, v, _) = call(&app, "GET", "/projection?space=nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");

    let (s, v, _) = call(&app, "GET", "/meta", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.is_object());
    let (s, v, _) = call(&app, "GET", "/meta/schema", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["schema_version"], 1);
}

#[tokio::test]
async fn chat_happy_path_and_errors() {
    let (app, llm) = fixture();
    let (s, v, _) = call(&app, "POST", "/chat/s1", Some(json!({"message": "papers about geographic maps"}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(v["reply"]["text"].as_str().unwrap().contains("[[cite:"));
    assert!(!v["grounding"]["mentions"].as_array().unwrap().is_empty());
    assert_eq!(v["grounding"]["ungrounded_count"], 0);
    assert_eq!(llm.calls(), 1);

    let (s, v, _) = call(&app, "GET", "/chat/s1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["turns"].as_array().unwrap().len(), 2);
    let (s, _, _) = call(&app, "GET", "/chat/none", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v, _) = call(&app, "POST", "/chat/s1", Some(json!({"message": "  "}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");
    let (s, v, _) = call(&app, "POST", "/chat/s2", Some(json!({"message": "x".repeat(80_000)}))).await;
    assert_eq!(s, StatusCode::PAYLOAD_TOO_LARGE);
    assert_error(&v, "oversize_query");
}

#[tokio::test]
async fn provider_failure_is_502() {
    let (app, _) = fixture_with(ScriptedLlm::new().with_rule(Matcher::Any, Script::Fail(LlmError::Transient("down".into()))));
    let (s, v, _) = call(&app, "POST", "/chat/s1", Some(json!({"message": "maps"}))).await;
    assert_eq!(s, StatusCode::BAD_GATEWAY);
    assert_error(&v, "provider_error");
    // Nothing was committed.
    let (s, v, _) = call(&app, "GET", "/chat/s1", None).await;
    if s == StatusCode::OK {
        assert_eq!(v["turns"], json!([]));
    } else {
        assert_eq!(s, StatusCode::NOT_FOUND);
    }
}

#[tokio::test]
async fn saved_crud_analysis_and_export() {
    let (app, llm) = fixture();
    let (s, v, _) = call(&app, "POST", "/saved", None).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["set_id"].as_str().unwrap().to_string();

    let (s, v, _) = call(&app, "POST", &format!("/saved/{id}/litreview"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");

    for p in ["p1", "p2", "p2"] {
        let (s, _, _) = call(&app, "POST", &format!("/saved/{id}/papers"), Some(json!({"paper_id": p}))).await;
        assert_eq!(s, StatusCode::OK);
    }
    let (s, v, _) = call(&app, "GET", &format!("/saved/{id}"), None).await;
    assert_eq!((s, v["paper_ids"].clone()), (StatusCode::OK, json!(["p1", "p2"])));
    let (s, _, _) = call(&app, "POST", &format!("/saved/{id}/papers"), Some(json!({"paper_id": "zz"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _, _) = call(&app, "POST", "/saved", Some(json!({"set_id": id}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v, _) = call(&app, "POST", &format!("/saved/{id}/summarize"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["summaries"].as_array().unwrap().len(), 2);
    let before = llm.calls();
    let (s, v, _) = call(&app, "POST", &format!("/saved/{id}/litreview"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(llm.calls() - before, 3);
    assert_eq!(v["bibliography"].as_array().unwrap().len(), 2);

    let (s, v, ct) = call(&app, "GET", &format!("/saved/{id}/export?format=json"), None).await;
    assert_eq!((s, ct.as_str()), (StatusCode::OK, "application/json"));
    assert_eq!(v.as_array().unwrap().len(), 2);
    let (s, v, ct) = call(&app, "GET", &format!("/saved/{id}/export?format=bibtex"), None).await;
    assert_eq!((s, ct.as_str()), (StatusCode::OK, "application/x-bibtex"));
    assert_eq!(v.as_str().unwrap().matches('@').count(), 2);
    let (s, _, _) = call(&app, "GET", &format!("/saved/{id}/export?format=csv"), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let (s, v, _) = call(&app, "DELETE", &format!("/saved/{id}/papers/p1"), None).await;
    assert_eq!((s, v["paper_ids"].clone()), (StatusCode::OK, json!(["p2"])));
    let (s, v, _) = call(&app, "GET", "/saved", None).await;
    assert_eq!((s, v.as_array().unwrap().len()), (StatusCode::OK, 1));
    let (s, _, _) = call(&app, "DELETE", &format!("/saved/{id}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, v, _) = call(&app, "GET", &format!("/saved/{id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn templates_edit_and_reset() {
    let (app, _) = fixture();
    let (s, v, _) = call(&app, "GET", "/templates", None).await;
    assert_eq!((s, v.as_array().unwrap().len()), (StatusCode::OK, 4));
    let (s, v, _) = call(&app, "PUT", "/templates/summarize", Some(json!({"text": "no placeholder"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error(&v, "bad_request");
    let (s, v, _) = call(&app, "PUT", "/templates/summarize", Some(json!({"text": "Briefly: {papers}"}))).await;
    assert_eq!((s, v["is_default"].clone()), (StatusCode::OK, json!(false)));
    let (_, v, _) = call(&app, "GET", "/templates/summarize", None).await;
    assert_eq!(v["text"], "Briefly: {papers}");
    let (s, v, _) = call(&app, "DELETE", "/templates/summarize", None).await;
    assert_eq!((s, v["is_default"].clone()), (StatusCode::OK, json!(true)));
    let (s, v, _) = call(&app, "GET", "/templates/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn unknown_routes_and_methods_carry_api_errors() {
    let (app, _) = fixture();
    let (s, v, _) = call(&app, "GET", "/nowhere", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
    let (s, v, _) = call(&app, "DELETE", "/health", None).await;
    assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED);
    assert_error(&v, "bad_request");
}

#[tokio::test]
async fn get_routes_never_call_the_model() {
    let (app, llm) = fixture();
    call(&app, "POST", "/chat/s1", Some(json!({"message": "maps"}))).await;
    let (_, v, _) = call(&app, "POST", "/saved", Some(json!({"set_id": "mine"}))).await;
    assert_eq!(v["set_id"], "mine");
    call(&app, "POST", "/saved/mine/papers", Some(json!({"paper_id": "p1"}))).await;
    let before = llm.calls();
    for uri in [
        "/health",
        "/papers",
        "/papers?q=map",
        "/papers/p1",
        "/projection",
        "/meta",
        "/meta?q=map",
        "/meta/schema",
        "/chat/s1",
        "/saved",
        "/saved/mine",
        "/saved/mine/export?format=json",
        "/saved/mine/export?format=bibtex",
        "/templates",
        "/templates/chat_system",
    ] {
        let (s, _, _) = call(&app, "GET", uri, None).await;
        assert_eq!(s, StatusCode::OK, "{uri}");
    }
    assert_eq!(llm.calls(), before);
}
