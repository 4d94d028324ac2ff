//! The chat-completions client pointed at a local stand-in server that fails
//! once before answering, so the retry path is exercised.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use ape::backend::{CompletionBackend, CompletionRequest, HttpBackend, HttpBackendConfig};
use ape::prompting::parse_label;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

async fn completions(State(hits): State<Arc<AtomicUsize>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    if hits.fetch_add(1, Ordering::SeqCst) == 0 {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "error": "warming up" })));
    }
    let hot = body["temperature"].as_f64().unwrap_or(0.0) > 0.5;
    let content = if hot { "Answer: no" } else { "Answer: yes" };
    (StatusCode::OK, Json(json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] })))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hits = Arc::new(AtomicUsize::new(0));
    let (tx, rx) = std::sync::mpsc::channel();
    let state = hits.clone();
    std::thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().expect("runtime");
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
            tx.send(listener.local_addr().expect("addr")).expect("send");
            let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(state);
            axum::serve(listener, app).await.expect("serve");
        });
    });
    let addr = rx.recv()?;

    let config = HttpBackendConfig {
        model: "local-model".into(),
        ..HttpBackendConfig::default()
    };
    let backend = HttpBackend::new(config, &format!("http://{addr}/v1/"), "local-key")?;
    println!("endpoint {}", backend.endpoint());
    for t in [0.0, 0.5, 1.0] {
        let request = CompletionRequest::new("Same entity? Answer yes or no.", t, 16, "local-model")?;
        let response = backend.complete(&request)?;
        println!("t={t}: {:?} -> {:?}", response.text, parse_label(&response.text));
    }
    println!("server saw {} requests", hits.load(Ordering::SeqCst));
    Ok(())
}
