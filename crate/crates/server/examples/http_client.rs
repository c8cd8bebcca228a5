//! Starts the service in-process on a free port with the mock provider,
//! walks one comment through the assistant over HTTP, then replays the
//! session's event stream.
//!
//! cargo run -p revtogether-server --example http_client

use std::sync::Arc;

use futures::StreamExt;
use revtogether::clock::SystemClock;
use revtogether::gateway::Gateway;
use revtogether::store::Store;
use revtogether_server::{router, AppState};
use serde_json::{json, Value};

async fn post(client: &reqwest::Client, url: String, body: Value) -> Value {
    let resp = client.post(&url).json(&body).send().await.expect("request");
    let status = resp.status();
    let body: Value = resp.json().await.expect("json body");
    println!("POST {} -> {status}", url.split("/v1").nth(1).unwrap_or(&url));
    body
}

#[tokio::main]
async fn main() {
    let data = std::env::temp_dir().join("revtogether-http-example");
    let _ = std::fs::remove_dir_all(&data);
    let state = AppState::new(Store::open(&data).expect("store"), Gateway::mock(), Arc::new(SystemClock));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, router(state)).await });

    let client = reqwest::Client::new();
    let story = "Deep in the ocean, a tiny squid glows. Bacteria living in its light organ make the glow.";
    let created = post(&client, format!("{base}/sessions"), json!({ "text": story })).await;
    let id = created["id"].as_str().unwrap().to_owned();
    let s = format!("{base}/sessions/{id}");

    let comment =
        post(&client, format!("{s}/comment-requests"), json!({ "persona": "curious_girl", "start": 39, "end": 88 }))
            .await;
    let cid = comment["comment"]["id"].as_u64().unwrap();
    println!("  {}", comment["comment"]["text"]);

    let decided = post(&client, format!("{s}/comments/{cid}/decision"), json!({ "decision": "accept" })).await;
    let sid = decided["suggestions"][0]["id"].as_u64().unwrap();
    println!(
        "  suggested {}",
        decided["suggestions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["technique"].to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );

    let view: Value = client.get(&s).send().await.unwrap().json().await.unwrap();
    println!("GET /sessions/{id} -> avatar {}", view["avatars"]["curious_girl"]["asset"]);

    let selected = post(&client, format!("{s}/suggestions/{sid}/select"), Value::Null).await;
    let hid = selected["highlights"][0]["id"].as_u64().unwrap();
    let offered = post(&client, format!("{s}/highlights/{hid}/revision"), Value::Null).await;
    let pid = offered["proposal"]["id"].as_u64().unwrap();
    let adopted = post(&client, format!("{s}/proposals/{pid}/adopt"), Value::Null).await;
    println!("  story v{}: {}", adopted["version"], adopted["text"].as_str().unwrap());

    let stale =
        post(&client, format!("{s}/edits"), json!({ "at": 0, "deleted_len": 0, "inserted": "x", "base_version": 0 }))
            .await;
    println!("  {}: {}", stale["code"], stale["message"]);

    println!("\nGET /sessions/{id}/events?from=0");
    let resp = client.get(format!("{s}/events?from=0")).send().await.unwrap();
    let mut stream = resp.bytes_stream();
    let mut text = String::new();
    let view: Value = client.get(&s).send().await.unwrap().json().await.unwrap();
    let total = view["session"]["event_seq"].as_u64().unwrap() as usize;
    while text.matches("\n\n").count() < total {
        text.push_str(&String::from_utf8_lossy(&stream.next().await.unwrap().unwrap()));
    }
    for block in text.split("\n\n").filter(|b| !b.is_empty()) {
        let field = |name: &str| block.lines().find_map(|l| l.strip_prefix(name)).unwrap_or("").trim().to_owned();
        println!("  id={:<3} {}", field("id:"), field("event:"));
    }
}
