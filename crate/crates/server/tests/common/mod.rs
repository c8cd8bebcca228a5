#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use futures::StreamExt;
use revtogether::clock::SimulatedClock;
use revtogether::gateway::Gateway;
use revtogether::store::Store;
use revtogether_server::{router, AppState};
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub const STORY: &str = "Deep in the ocean, a tiny squid glows. Bacteria living in its light organ \
make the glow. At night the squid hunts in shallow water. Its glow hides its shadow from predators below.";

pub struct Server {
    pub base: String,
    pub state: AppState,
    pub clock: SimulatedClock,
    pub client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl Server {
    pub async fn start(dir: &std::path::Path) -> Self {
        Self::with_gateway(dir, Gateway::mock()).await
    }

    pub async fn with_gateway(dir: &std::path::Path, gateway: Gateway) -> Self {
        let clock = SimulatedClock::starting_at(10_000);
        let state = AppState::new(Store::open(dir).unwrap(), gateway, Arc::new(clock.clone()));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = oneshot::channel();
        let app = router(state.clone());
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
        Server { base, state, clock, client: reqwest::Client::new(), stop: Some(stop), task: Some(task) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn create(&self, text: &str) -> String {
        let (status, body) = self.post("/v1/sessions", json!({ "text": text })).await;
        assert_eq!(status, 201, "{body}");
        body["id"].as_str().unwrap().to_owned()
    }

    pub async fn stop(mut self) {
        self.stop.take().unwrap().send(()).ok();
        self.task.take().unwrap().await.unwrap();
        self.state.save_all().await;
    }
}

/// Char offsets of the unique occurrence of `needle`.
pub fn span(text: &str, needle: &str) -> (usize, usize) {
    let byte = text.find(needle).expect("needle present");
    let start = text[..byte].chars().count();
    (start, start + needle.chars().count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseMessage {
    pub id: u64,
    pub event: String,
    pub data: Value,
}

/// Reads `n` messages from the event stream, skipping keep-alive comments.
pub async fn read_events(server: &Server, session: &str, from: u64, n: usize) -> Vec<SseMessage> {
    let url = server.url(&format!("/v1/sessions/{session}/events?from={from}"));
    let resp = server.client.get(url).send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let mut stream = resp.bytes_stream();
    let mut buf = String::new();
    let mut out = Vec::new();
    let read = async {
        while out.len() < n {
            let chunk = stream.next().await.expect("stream open").unwrap();
            buf.push_str(std::str::from_utf8(&chunk).unwrap());
            while let Some(end) = buf.find("\n\n") {
                let block: String = buf.drain(..end + 2).collect();
                let (mut id, mut event, mut data) = (None, String::new(), String::new());
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = Some(v.trim().parse().unwrap());
                    } else if let Some(v) = line.strip_prefix("event:") {
                        event = v.trim().to_owned();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim_start());
                    }
                }
                if let Some(id) = id {
                    out.push(SseMessage { id, event, data: serde_json::from_str(&data).unwrap() });
                }
            }
        }
    };
    tokio::time::timeout(Duration::from_secs(10), read).await.expect("events arrive in time");
    out.truncate(n);
    out
}
