mod common;

use std::collections::HashSet;
use std::sync::Arc;

use common::{read_events, span, Server, STORY};
use revtogether::gateway::{ChatRequest, Gateway, Provider, ProviderError};
use revtogether::persona::{avatar_asset, Affect, PersonaId};
use revtogether_server::{ServeConfig, StartupError};
use serde_json::{json, Value};

async fn comment(s: &Server, id: &str, persona: &str, needle: &str) -> Value {
    let (start, end) = span(STORY, needle);
    let (status, body) = s
        .post(&format!("/v1/sessions/{id}/comment-requests"), json!({ "persona": persona, "start": start, "end": end }))
        .await;
    assert_eq!(status, 201, "{body}");
    body["comment"].clone()
}

#[tokio::test]
async fn health_reports_ok() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    assert_eq!(s.get("/v1/health").await, (200, json!({ "status": "ok" })));
}

#[tokio::test]
async fn full_revision_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.create(STORY).await;

    let (status, view) = s.get(&format!("/v1/sessions/{id}")).await;
    assert_eq!(status, 200);
    assert_eq!(view["session"]["document"]["text"], STORY);
    assert_eq!(view["session"]["document"]["version"], 0);

    let c = comment(&s, &id, "mad_scientist", "Bacteria living in its light organ").await;
    assert_eq!(c["state"], "pending");
    let cid = c["id"].as_u64().unwrap();

    let (status, decided) =
        s.post(&format!("/v1/sessions/{id}/comments/{cid}/decision"), json!({ "decision": "accept" })).await;
    assert_eq!(status, 200, "{decided}");
    assert_eq!(decided["comment"]["state"], "accepted");
    let suggestions = decided["suggestions"].as_array().unwrap();
    assert!(!suggestions.is_empty());

    let (_, view) = s.get(&format!("/v1/sessions/{id}")).await;
    let avatar = &view["avatars"]["mad_scientist"];
    assert_eq!(avatar["affect"], "happy");
    assert_eq!(avatar["asset"], avatar_asset(PersonaId::MadScientist, Affect::Happy));
    assert_eq!(avatar["flash_until"], 11_000);

    let sid = suggestions[0]["id"].as_u64().unwrap();
    let (status, selected) = s.post(&format!("/v1/sessions/{id}/suggestions/{sid}/select"), json!(null)).await;
    assert_eq!(status, 200, "{selected}");
    let hid = selected["highlights"][0]["id"].as_u64().unwrap();

    let (status, offered) = s.post(&format!("/v1/sessions/{id}/highlights/{hid}/revision"), json!(null)).await;
    assert_eq!(status, 200, "{offered}");
    let proposal = &offered["proposal"];
    let pid = proposal["id"].as_u64().unwrap();
    let replacement = proposal["revised_text"].as_str().unwrap().to_owned();

    let (status, adopted) = s.post(&format!("/v1/sessions/{id}/proposals/{pid}/adopt"), json!(null)).await;
    assert_eq!(status, 200, "{adopted}");
    assert_eq!(adopted["version"], 1);
    assert!(adopted["text"].as_str().unwrap().contains(&replacement));

    let (status, again) = s.post(&format!("/v1/sessions/{id}/proposals/{pid}/adopt"), json!(null)).await;
    assert_eq!(status, 409);
    assert_eq!(again["code"], "illegal_transition");
}

#[tokio::test]
async fn avatars_follow_the_clock() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.create(STORY).await;
    let cid = comment(&s, &id, "curious_girl", "At night the squid hunts").await["id"].as_u64().unwrap();
    s.post(&format!("/v1/sessions/{id}/comments/{cid}/decision"), json!({ "decision": "reject" })).await;
    let (_, view) = s.get(&format!("/v1/sessions/{id}")).await;
    let negative = view["avatars"]["curious_girl"]["affect"].as_str().unwrap().to_owned();
    assert!(negative == "angry" || negative == "disappointed", "{negative}");
    assert_eq!(view["avatars"]["curious_girl"]["asset"], format!("avatars/curious_girl/{negative}.png"));
    assert_eq!(view["avatars"]["mad_scientist"]["flash_until"], Value::Null);

    s.clock.advance(1_000);
    let (_, view) = s.get(&format!("/v1/sessions/{id}")).await;
    assert_ne!(view["avatars"]["curious_girl"]["affect"], negative.as_str());
    assert_eq!(view["avatars"]["curious_girl"]["flash_until"], Value::Null);
}

#[tokio::test]
async fn unknown_session_and_entities_are_404() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let (status, body) = s.get("/v1/sessions/does-not-exist").await;
    assert_eq!(status, 404);
    assert_eq!(body["code"], "not_found");
    let (status, _) = s.get("/v1/sessions/bad.id").await;
    assert_eq!(status, 404);
    let (status, _) = s
        .post("/v1/sessions/nope/edits", json!({ "at": 0, "deleted_len": 0, "inserted": "x", "base_version": 0 }))
        .await;
    assert_eq!(status, 404);

    let id = s.create(STORY).await;
    let (status, body) =
        s.post(&format!("/v1/sessions/{id}/comments/99/decision"), json!({ "decision": "accept" })).await;
    assert_eq!(status, 404);
    assert_eq!(body["code"], "not_found");
}

#[tokio::test]
async fn malformed_bodies_and_bad_ranges_are_422() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.create(STORY).await;
    let r = s.client.post(s.url(&format!("/v1/sessions/{id}/edits"))).body("{not json").send().await.unwrap();
    assert_eq!(r.status().as_u16(), 422);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["code"], "invalid_selection");

    let (status, body) = s
        .post(
            &format!("/v1/sessions/{id}/comment-requests"),
            json!({ "persona": "mad_scientist", "start": 5, "end": 5000 }),
        )
        .await;
    assert_eq!(status, 422, "{body}");
    let (status, _) = s
        .post(&format!("/v1/sessions/{id}/comment-requests"), json!({ "persona": "pirate", "start": 0, "end": 4 }))
        .await;
    assert_eq!(status, 422);
}

#[tokio::test]
async fn parallel_creates_get_distinct_ids() {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(Server::start(dir.path()).await);
    let tasks: Vec<_> = (0..100)
        .map(|i| {
            let s = s.clone();
            tokio::spawn(async move { s.create(&format!("story number {i}")).await })
        })
        .collect();
    let mut ids = HashSet::new();
    for t in tasks {
        ids.insert(t.await.unwrap());
    }
    assert_eq!(ids.len(), 100);
    assert_eq!(s.state.store().list().unwrap().len(), 100);
}

#[tokio::test]
async fn concurrent_edits_on_one_version_admit_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(Server::start(dir.path()).await);
    let id = s.create(STORY).await;
    let tasks: Vec<_> = (0..20)
        .map(|i| {
            let (s, id) = (s.clone(), id.clone());
            tokio::spawn(async move {
                s.post(
                    &format!("/v1/sessions/{id}/edits"),
                    json!({ "at": 0, "deleted_len": 4, "inserted": format!("Edit{i}"), "base_version": 0 }),
                )
                .await
            })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        let (status, body) = t.await.unwrap();
        match status {
            200 => ok += 1,
            409 => {
                assert_eq!(body["code"], "version_mismatch");
                assert_eq!(body["detail"]["current_version"], 1);
            }
            other => panic!("unexpected status {other}: {body}"),
        }
    }
    assert_eq!(ok, 1);
    let (_, view) = s.get(&format!("/v1/sessions/{id}")).await;
    assert_eq!(view["session"]["document"]["version"], 1);
}

#[tokio::test]
async fn event_stream_replays_then_follows_and_resumes_without_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(Server::start(dir.path()).await);
    let id = s.create(STORY).await;
    let cid = comment(&s, &id, "mad_scientist", "Its glow hides its shadow").await["id"].as_u64().unwrap();

    let reader = {
        let (s, id) = (s.clone(), id.clone());
        tokio::spawn(async move { read_events(&s, &id, 0, 5).await })
    };
    tokio::time::sleep(std::time::Duration::from_millis(100)).await;
    s.post(&format!("/v1/sessions/{id}/comments/{cid}/decision"), json!({ "decision": "accept" })).await;
    let all = reader.await.unwrap();
    let seqs: Vec<u64> = all.iter().map(|m| m.id).collect();
    assert_eq!(seqs, vec![1, 2, 3, 4, 5]);
    let kinds: Vec<&str> = all.iter().map(|m| m.event.as_str()).collect();
    assert_eq!(
        kinds,
        ["session_created", "comment_generated", "comment_accepted", "persona_flash", "suggestions_generated"]
    );
    for m in &all {
        assert_eq!(m.data["seq"], m.id);
    }

    let tail = read_events(&s, &id, 3, 2).await;
    assert_eq!(tail, all[3..].to_vec());
}

#[tokio::test]
async fn restart_rehydrates_identical_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let id = s.create(STORY).await;
    let cid = comment(&s, &id, "curious_girl", "a tiny squid glows").await["id"].as_u64().unwrap();
    s.post(&format!("/v1/sessions/{id}/comments/{cid}/decision"), json!({ "decision": "accept" })).await;
    s.post(
        &format!("/v1/sessions/{id}/edits"),
        json!({ "at": 0, "deleted_len": 0, "inserted": "Far away. ", "base_version": 0 }),
    )
    .await;
    let (_, before) = s.get(&format!("/v1/sessions/{id}")).await;
    s.stop().await;

    let s = Server::start(dir.path()).await;
    let (status, after) = s.get(&format!("/v1/sessions/{id}")).await;
    assert_eq!(status, 200);
    assert_eq!(after["session"], before["session"]);
    let events = read_events(&s, &id, 0, before["session"]["event_seq"].as_u64().unwrap() as usize).await;
    assert_eq!(events.last().unwrap().id, before["session"]["event_seq"].as_u64().unwrap());
}

struct Down;

impl Provider for Down {
    fn chat(&self, _: &ChatRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unreachable("connection refused".into()))
    }
}

#[tokio::test]
async fn gateway_failure_is_502_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::with_gateway(dir.path(), Gateway::new(Arc::new(Down), 2)).await;
    let id = s.create(STORY).await;
    let (start, end) = span(STORY, "a tiny squid glows");
    let (status, body) = s
        .post(
            &format!("/v1/sessions/{id}/comment-requests"),
            json!({ "persona": "mad_scientist", "start": start, "end": end }),
        )
        .await;
    assert_eq!(status, 502);
    assert_eq!(body["code"], "gateway_failure");
    let (_, view) = s.get(&format!("/v1/sessions/{id}")).await;
    assert_eq!(view["session"]["comments"], json!([]));
    let events = read_events(&s, &id, 1, 1).await;
    assert_eq!(events[0].event, "gateway_failed");
}

#[test]
fn remote_provider_without_key_fails_startup() {
    let env = |k: &str| match k {
        "REVT_PROVIDER" => Some("remote".to_owned()),
        "REVT_LLM_ENDPOINT" => Some("http://127.0.0.1:9".to_owned()),
        _ => None,
    };
    assert!(matches!(ServeConfig::from_lookup(env), Err(StartupError::Provider(_))));
    let bad_bind = |k: &str| (k == "REVT_BIND_ADDR").then(|| "not an address".to_owned());
    assert!(matches!(ServeConfig::from_lookup(bad_bind), Err(StartupError::BindAddr(_))));
    let defaults = ServeConfig::from_lookup(|_| None).unwrap();
    assert_eq!(defaults.bind_addr.to_string(), ServeConfig::DEFAULT_BIND);
}

#[tokio::test]
async fn empty_and_large_stories_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path()).await;
    let (status, created) = s.post("/v1/sessions", json!({ "text": "" })).await;
    assert_eq!(status, 201);
    assert_eq!(created["version"], 0);

    let large = "The squid glows. ".repeat(3_000);
    assert!(large.len() > 50_000);
    let id = s.create(&large).await;
    let (status, view) = s.get(&format!("/v1/sessions/{id}")).await;
    assert_eq!(status, 200);
    assert_eq!(view["session"]["document"]["text"], large);
}
