//! Serves the session API on a random local port and walks one iteration
//! through it with a blocking client.

use std::sync::Arc;

use ape::backend::{SyntheticBackend, SyntheticBackendConfig};
use ape::datagen::grid_pool;
use ape::interface::{http::router, shared_backend, SessionStore};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let backend = Arc::new(SyntheticBackend::new(SyntheticBackendConfig::default())?);
    let store = Arc::new(SessionStore::new(dir.path().join("sessions"), shared_backend(backend))?);

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let runtime = tokio::runtime::Runtime::new().expect("runtime");
        runtime.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
            tx.send(listener.local_addr().expect("addr")).expect("send");
            axum::serve(listener, router(store)).await.expect("serve");
        });
    });
    let base = format!("http://{}", rx.recv()?);
    let client = reqwest::blocking::Client::new();

    let created: Value = client
        .post(format!("{base}/sessions"))
        .json(&json!({
            "session_id": "demo",
            "pool": grid_pool(20, "p", 0.5),
            "eval": grid_pool(7, "e", 0.5),
        }))
        .send()?
        .json()?;
    println!("created: {created}");

    let batch: Value = client.post(format!("{base}/sessions/demo/iterate")).send()?.json()?;
    let mut submissions = Vec::new();
    for item in batch["pending"].as_array().into_iter().flatten() {
        let pair = &item["pair"];
        println!("pending {} votes {}", pair["id"], item["score"]["votes"]);
        submissions.push(json!({
            "pair_id": pair["id"],
            "label": pair["gold"],
            "explanation": "matches the gold label",
        }));
    }

    // Wrong phase: the server answers 409 and leaves the session alone.
    let conflict = client.post(format!("{base}/sessions/demo/evaluate")).send()?;
    println!("evaluate before annotating: {}", conflict.status());

    let status = client
        .post(format!("{base}/sessions/demo/annotations"))
        .json(&submissions)
        .send()?
        .status();
    println!("annotations: {status}");
    let report: Value = client.post(format!("{base}/sessions/demo/evaluate")).send()?.json()?;
    println!("f1 after one iteration: {}", report["f1"]);
    let prompt: Value = client.get(format!("{base}/sessions/demo/prompt")).send()?.json()?;
    println!("{}", prompt["preview"].as_str().unwrap_or_default());
    Ok(())
}
