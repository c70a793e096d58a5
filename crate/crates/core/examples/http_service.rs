//! Starts the session API on a local port, creates a session over HTTP,
//! waits for it to finish, steers it and prints the presentation.
//!
//!     cargo run --example http_service

use std::time::Duration;

use serde_json::{json, Value};
use vscript::server::app;
use vscript::{Engine, Orchestrator, SessionManager};

fn call(
    agent: &ureq::Agent,
    method: &str,
    url: &str,
    body: Option<Value>,
) -> Result<Value, Box<dyn std::error::Error>> {
    let mut resp = match (method, body) {
        ("POST", Some(b)) => agent
            .post(url)
            .header("content-type", "application/json")
            .send(b.to_string())?,
        _ => agent.get(url).call()?,
    };
    Ok(serde_json::from_str(&resp.body_mut().read_to_string()?)?)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let orchestrator = Orchestrator::new(Engine::mock(), SessionManager::in_memory());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(async move { axum::serve(listener, app(orchestrator, None)).await });

    let client = tokio::task::spawn_blocking(move || -> Result<(), String> {
        let agent = ureq::Agent::new_with_defaults();
        let run = || -> Result<(), Box<dyn std::error::Error>> {
            let created = call(
                &agent,
                "POST",
                &format!("{base}/v1/sessions"),
                Some(json!({"genre": "sci-fi", "starting_words": "The last colony ship", "seed": 3})),
            )?;
            let id = created["id"].as_str().unwrap_or_default().to_string();
            println!("created {id}");
            let session = loop {
                let s = call(&agent, "GET", &format!("{base}/v1/sessions/{id}"), None)?;
                if s["status"] != "pending" && s["status"] != "running" {
                    break s;
                }
                std::thread::sleep(Duration::from_millis(20));
            };
            println!("status {} with {} scenes", session["status"], session["scene_count"]);
            let steered = call(
                &agent,
                "POST",
                &format!("{base}/v1/sessions/{id}/steer"),
                Some(json!({"genre": "romance"})),
            )?;
            println!("after steering: {} scenes", steered["scene_count"]);
            let p = call(&agent, "GET", &format!("{base}/v1/sessions/{id}/presentation"), None)?;
            println!("{}", serde_json::to_string_pretty(&p)?);
            Ok(())
        };
        run().map_err(|e| e.to_string())
    })
    .await?;
    client.map_err(Into::into)
}
