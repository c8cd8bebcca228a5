//! HTTP front end for the revision workbench.
//!
//! Mutations are plain JSON request/response routes; everything that
//! happens to a session is also pushed, in `seq` order, on a server-sent
//! event stream. All offsets are Unicode code points.
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/v1/sessions` | `{text}` |
//! | GET | `/v1/sessions/{id}` | |
//! | POST | `/v1/sessions/{id}/edits` | `{at, deleted_len, inserted, base_version}` |
//! | POST | `/v1/sessions/{id}/comment-requests` | `{persona, start, end}` |
//! | POST | `/v1/sessions/{id}/comments/{cid}/decision` | `{decision: "accept" \| "reject"}` |
//! | POST | `/v1/sessions/{id}/suggestions/{sid}/select` | |
//! | POST | `/v1/sessions/{id}/highlights/{hid}/revision` | |
//! | POST | `/v1/sessions/{id}/proposals/{pid}/adopt` | |
//! | GET | `/v1/sessions/{id}/events?from={seq}` | server-sent events |
//! | GET | `/v1/health` | |

mod error;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use revtogether::clock::{Clock, SystemClock};
use revtogether::document::EditOperation;
use revtogether::gateway::{ConfigError, Gateway, GatewayError, ProviderConfig, StructuredReply};
use revtogether::persona::{avatar_asset, PersonaId};
use revtogether::store::Store;
use revtogether::workflow::{ErrorCode, Event, PendingCall, Session, Workbench, WorkflowError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, Mutex};

pub use error::{status_of, ApiError};

const STREAM_BUFFER: usize = 256;

/// Settings for [`serve`], normally read from the environment.
#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind_addr: SocketAddr,
    pub data_dir: PathBuf,
    pub provider: ProviderConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("REVT_BIND_ADDR {0:?} is not a socket address")]
    BindAddr(String),
    #[error(transparent)]
    Provider(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] revtogether::store::StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Listen { addr: SocketAddr, source: std::io::Error },
}

impl ServeConfig {
    pub const DEFAULT_BIND: &'static str = "127.0.0.1:8080";
    pub const DEFAULT_DATA_DIR: &'static str = "./revtogether-data";

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, StartupError> {
        let bind = lookup("REVT_BIND_ADDR").unwrap_or_else(|| Self::DEFAULT_BIND.to_owned());
        let bind_addr = bind.parse().map_err(|_| StartupError::BindAddr(bind))?;
        let data_dir = lookup("REVT_DATA_DIR").unwrap_or_else(|| Self::DEFAULT_DATA_DIR.to_owned()).into();
        let provider = ProviderConfig::from_lookup(&lookup)?;
        provider.validate()?;
        Ok(Self { bind_addr, data_dir, provider })
    }

    pub fn from_env() -> Result<Self, StartupError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }
}

struct SessionHandle {
    bench: Mutex<Workbench>,
    feed: broadcast::Sender<Event>,
}

/// Shared server state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    gateway: Arc<Gateway>,
    clock: Arc<dyn Clock>,
    sessions: StdMutex<HashMap<String, Arc<SessionHandle>>>,
    // serializes first loads so two requests never build two handles
    loading: Mutex<()>,
}

impl AppState {
    pub fn new(store: Store, gateway: Gateway, clock: Arc<dyn Clock>) -> Self {
        Self {
            inner: Arc::new(Inner {
                store,
                gateway: Arc::new(gateway),
                clock,
                sessions: StdMutex::new(HashMap::new()),
                loading: Mutex::new(()),
            }),
        }
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    fn cached(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.inner.sessions.lock().expect("session map").get(id).cloned()
    }

    fn insert(&self, id: String, bench: Workbench) -> Arc<SessionHandle> {
        let (feed, _) = broadcast::channel(STREAM_BUFFER);
        let handle = Arc::new(SessionHandle { bench: Mutex::new(bench), feed });
        self.inner.sessions.lock().expect("session map").insert(id, handle.clone());
        handle
    }

    async fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        if let Some(h) = self.cached(id) {
            return Ok(h);
        }
        let _guard = self.inner.loading.lock().await;
        if let Some(h) = self.cached(id) {
            return Ok(h);
        }
        let store = self.inner.store.clone();
        let owned = id.to_owned();
        let loaded = tokio::task::spawn_blocking(move || store.load(&owned)).await.expect("load task")?;
        let bench = Workbench::from_parts(loaded.session, loaded.events, self.inner.clock.clone())
            .map_err(|e| ApiError::new(ErrorCode::Integrity, e.to_string()))?;
        Ok(self.insert(id.to_owned(), bench))
    }

    /// Persists whatever was committed after `since` and pushes it to subscribers.
    fn publish(&self, handle: &SessionHandle, bench: &Workbench, since: u64) {
        let fresh = bench.events_after(since);
        if fresh.is_empty() {
            return;
        }
        if let Err(e) = self.inner.store.save(bench.session(), bench.events()) {
            tracing::error!(session = %bench.session().id, error = %e, "autosave failed; session kept in memory");
        }
        for e in fresh {
            let _ = handle.feed.send(e.clone());
        }
    }

    /// Saves every session held in memory.
    pub async fn save_all(&self) -> usize {
        let handles: Vec<_> = self.inner.sessions.lock().expect("session map").values().cloned().collect();
        let mut saved = 0;
        for h in handles {
            let bench = h.bench.lock().await;
            match self.inner.store.save(bench.session(), bench.events()) {
                Ok(()) => saved += 1,
                Err(e) => tracing::error!(session = %bench.session().id, error = %e, "save failed"),
            }
        }
        saved
    }

    async fn mutate<R>(
        &self,
        id: &str,
        op: impl FnOnce(&mut Workbench) -> Result<R, WorkflowError>,
    ) -> Result<R, ApiError> {
        let handle = self.handle(id).await?;
        let mut bench = handle.bench.lock().await;
        let since = bench.session().event_seq;
        let result = op(&mut bench);
        self.publish(&handle, &bench, since);
        Ok(result?)
    }

    /// Plans under the session lock, calls the model without it, then
    /// finishes under the lock again.
    async fn two_phase<P, R>(
        &self,
        id: &str,
        plan: impl FnOnce(&Workbench, &Gateway) -> Result<P, WorkflowError>,
        finish: impl FnOnce(&mut Workbench, P, Result<StructuredReply<P::Reply>, GatewayError>) -> Result<R, WorkflowError>,
    ) -> Result<R, ApiError>
    where
        P: PendingCall + Clone + Send + 'static,
        P::Reply: Send + 'static,
    {
        let handle = self.handle(id).await?;
        let pending = {
            let bench = handle.bench.lock().await;
            plan(&bench, &self.inner.gateway)?
        };
        let gateway = self.inner.gateway.clone();
        let call = pending.clone();
        let result = tokio::task::spawn_blocking(move || call.call(&gateway)).await.expect("gateway task");
        self.mutate(id, |bench| finish(bench, pending, result)).await
    }
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

#[derive(Deserialize)]
struct CreateSession {
    #[serde(default)]
    text: String,
}

#[derive(Serialize)]
struct SessionDescriptor {
    id: String,
    version: u64,
    event_seq: u64,
}

async fn create_session(State(app): State<AppState>, bytes: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = if bytes.is_empty() { CreateSession { text: String::new() } } else { body(&bytes)? };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let bench = Workbench::create(id.clone(), req.text, app.inner.clock.clone());
    let handle = app.insert(id.clone(), bench);
    let bench = handle.bench.lock().await;
    app.publish(&handle, &bench, 0);
    let d = SessionDescriptor { id, version: bench.session().document.version, event_seq: bench.session().event_seq };
    Ok((StatusCode::CREATED, Json(d)))
}

#[derive(Serialize)]
struct AvatarView {
    affect: revtogether::persona::Affect,
    asset: String,
    flash_until: Option<u64>,
}

#[derive(Serialize)]
struct SessionView {
    session: Session,
    now: u64,
    avatars: BTreeMap<PersonaId, AvatarView>,
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let handle = app.handle(&id).await?;
    let session = handle.bench.lock().await.session().clone();
    let now = app.inner.clock.now();
    let avatars = PersonaId::ALL
        .into_iter()
        .map(|p| {
            let state = session.persona_state(p);
            let affect = state.current_affect(now);
            let flash_until = state.flash.filter(|_| state.flash_active(now)).map(|f| f.expires_at);
            (p, AvatarView { affect, asset: avatar_asset(p, affect), flash_until })
        })
        .collect();
    Ok(Json(SessionView { session, now, avatars }))
}

async fn post_edit(State(app): State<AppState>, Path(id): Path<String>, bytes: Bytes) -> Result<Json<Value>, ApiError> {
    let edit: EditOperation = body(&bytes)?;
    let out = app.mutate(&id, |b| b.writer_edit(edit)).await?;
    Ok(Json(json!({
        "version": out.version,
        "orphaned": out.orphaned,
        "discarded_proposals": out.discarded_proposals,
    })))
}

#[derive(Deserialize)]
struct CommentRequest {
    persona: PersonaId,
    start: usize,
    end: usize,
}

async fn post_comment_request(
    State(app): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: CommentRequest = body(&bytes)?;
    let comment = app
        .two_phase(
            &id,
            |b, g| b.plan_comment(g, req.persona, req.start, req.end),
            |b, p, r| {
                let cid = b.finish_comment(p, r)?;
                Ok(b.session().comment(cid).cloned().expect("just created"))
            },
        )
        .await?;
    Ok((StatusCode::CREATED, Json(json!({ "comment": comment }))))
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum DecisionKind {
    Accept,
    Reject,
}

#[derive(Deserialize)]
struct DecisionRequest {
    decision: DecisionKind,
}

async fn post_decision(
    State(app): State<AppState>,
    Path((id, cid)): Path<(String, u64)>,
    bytes: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: DecisionRequest = body(&bytes)?;
    let view = |b: &Workbench| {
        let s = b.session();
        json!({
            "comment": s.comment(cid),
            "suggestions": s.suggestions_for(cid).collect::<Vec<_>>(),
        })
    };
    let out = match req.decision {
        DecisionKind::Accept => {
            app.two_phase(&id, |b, g| b.plan_accept(g, cid), |b, p, r| b.finish_accept(p, r).map(|_| view(b))).await?
        }
        DecisionKind::Reject => app.mutate(&id, |b| b.reject_comment(cid).map(|_| view(b))).await?,
    };
    Ok(Json(out))
}

async fn post_select(
    State(app): State<AppState>,
    Path((id, sid)): Path<(String, u64)>,
) -> Result<Json<Value>, ApiError> {
    let highlights = app
        .two_phase(
            &id,
            |b, g| b.plan_select(g, sid),
            |b, p, r| {
                let ids = b.finish_select(p, r)?;
                Ok(ids.iter().map(|h| b.session().highlight(*h).cloned().expect("just created")).collect::<Vec<_>>())
            },
        )
        .await?;
    Ok(Json(json!({ "highlights": highlights })))
}

async fn post_revision(
    State(app): State<AppState>,
    Path((id, hid)): Path<(String, u64)>,
) -> Result<Json<Value>, ApiError> {
    let proposal = app
        .two_phase(
            &id,
            |b, g| b.plan_revision(g, hid),
            |b, p, r| {
                let pid = b.finish_revision(p, r)?;
                Ok(b.session().proposal(pid).cloned().expect("just created"))
            },
        )
        .await?;
    Ok(Json(json!({ "proposal": proposal })))
}

async fn post_adopt(
    State(app): State<AppState>,
    Path((id, pid)): Path<(String, u64)>,
) -> Result<Json<Value>, ApiError> {
    let (version, text, proposal) = app
        .mutate(&id, |b| {
            let v = b.adopt_revision(pid)?;
            Ok((v, b.session().document.text.clone(), b.session().proposal(pid).cloned()))
        })
        .await?;
    Ok(Json(json!({ "version": version, "text": text, "proposal": proposal })))
}

#[derive(Deserialize)]
struct StreamQuery {
    #[serde(default)]
    from: u64,
}

struct StreamState {
    handle: Arc<SessionHandle>,
    rx: broadcast::Receiver<Event>,
    backlog: VecDeque<Event>,
    last: u64,
}

fn sse_event(e: &Event) -> SseEvent {
    SseEvent::default()
        .id(e.seq.to_string())
        .event(e.kind.name())
        .data(serde_json::to_string(e).expect("events serialize"))
}

async fn event_stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let handle = app.handle(&id).await?;
    // subscribe before reading history so nothing falls between the two
    let (rx, backlog) = {
        let bench = handle.bench.lock().await;
        (handle.feed.subscribe(), bench.events_after(q.from).iter().cloned().collect())
    };
    let state = StreamState { handle, rx, backlog, last: q.from };
    let stream = futures::stream::unfold(state, |mut st| async move {
        loop {
            if let Some(e) = st.backlog.pop_front() {
                if e.seq <= st.last {
                    continue;
                }
                st.last = e.seq;
                return Some((Ok(sse_event(&e)), st));
            }
            match st.rx.recv().await {
                Ok(e) => st.backlog.push_back(e),
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    let bench = st.handle.bench.lock().await;
                    st.backlog.extend(bench.events_after(st.last).iter().cloned());
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/edits", post(post_edit))
        .route("/v1/sessions/{id}/comment-requests", post(post_comment_request))
        .route("/v1/sessions/{id}/comments/{cid}/decision", post(post_decision))
        .route("/v1/sessions/{id}/suggestions/{sid}/select", post(post_select))
        .route("/v1/sessions/{id}/highlights/{hid}/revision", post(post_revision))
        .route("/v1/sessions/{id}/proposals/{pid}/adopt", post(post_adopt))
        .route("/v1/sessions/{id}/events", get(event_stream))
        .with_state(state)
}

/// Builds the state for `config` with the system clock.
pub fn build_state(config: &ServeConfig) -> Result<AppState, StartupError> {
    let gateway = Gateway::from_config(&config.provider)?;
    let store = Store::open(&config.data_dir)?;
    Ok(AppState::new(store, gateway, Arc::new(SystemClock)))
}

/// Serves until `shutdown` resolves, then saves every open session.
pub async fn serve(
    config: ServeConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), StartupError> {
    let state = build_state(&config)?;
    let listener = tokio::net::TcpListener::bind(config.bind_addr)
        .await
        .map_err(|source| StartupError::Listen { addr: config.bind_addr, source })?;
    let addr = listener.local_addr().map_err(|source| StartupError::Listen { addr: config.bind_addr, source })?;
    tracing::info!(%addr, data_dir = %config.data_dir.display(), provider = ?config.provider.kind, "listening");
    axum::serve(listener, router(state.clone()))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| StartupError::Listen { addr, source })?;
    let saved = state.save_all().await;
    tracing::info!(saved, "sessions saved; shutting down");
    Ok(())
}

/// Resolves on SIGTERM or Ctrl-C.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
