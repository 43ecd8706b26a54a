//! Serves the HTTP API on a local port and talks to it with a plain client.

use std::future::IntoFuture;
use std::sync::Arc;

use recagent::catalog::games_toy;
use recagent::llm::ScriptedProvider;
use recagent::planner::{DemoStore, HashEmbedder};
use recagent::recmodels::SimilarityModel;
use recagent::service::{router, AppState};
use recagent::turn::{Agent, AgentConfig};
use serde_json::{json, Value};

#[tokio::main]
async fn main() {
    let catalog = games_toy();
    let model = SimilarityModel::build(&catalog.split().train, catalog.len());
    let provider = Arc::new(ScriptedProvider::sequence([
        "Action: Tool Executor\nAction Input: 1. SQL Retrieval Tool (tags LIKE '%Puzzle%'); 2. Ranking Tool ({\"schema\":\"popularity\"}); 3. Candidate Fetching Tool (2)",
        "Final Answer: Try The Witness or Portal 2.",
        "Yes",
    ]));
    let agent = Agent::new(
        Arc::new(catalog),
        Arc::new(model),
        Arc::new(DemoStore::seed(&HashEmbedder).unwrap()),
        provider,
        AgentConfig::default(),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(axum::serve(listener, router(Arc::new(AppState::new(agent)))).into_future());

    let result = tokio::task::spawn_blocking(move || {
        let post = |path: &str, body: Value| -> Value {
            ureq::post(&format!("{base}{path}"))
                .header("Content-Type", "application/json")
                .send(body.to_string())
                .unwrap()
                .body_mut()
                .read_json()
                .unwrap()
        };
        let get = |path: &str| -> Value { ureq::get(&format!("{base}{path}")).call().unwrap().body_mut().read_json().unwrap() };

        println!("healthz: {}", get("/healthz"));
        let id = post("/v1/sessions", json!({}))["session_id"].as_str().unwrap().to_string();
        let reply = post(&format!("/v1/sessions/{id}/messages"), json!({"text": "Any puzzle games?"}));
        println!("reply: {}", reply["reply"]);
        let trace = get(&format!("/v1/sessions/{id}/trace/{}", reply["turn_id"]));
        let tools: Vec<&str> = trace["attempts"][0]["plan"]["steps"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["tool_name"].as_str().unwrap())
            .collect();
        println!("tools: {}", tools.join(" -> "));
    })
    .await;
    result.unwrap();
}
