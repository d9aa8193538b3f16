//! A small room-inventory REST service used as the system under test in
//! integration and acceptance tests.
//!
//! The service keeps all state in memory and exposes three control routes
//! that are not part of its OpenAPI document:
//!
//! * `POST /__reset` clears all resources and restarts the id sequence.
//! * `GET /__stats` reports reset and per-route request counters.
//! * `POST /__defects` switches seeded defects on or off.
//!
//! Seeded defects mirror validation bugs found in real services: accepting an
//! inverted date range, accepting a non-string `room_type_id`, and crashing on
//! a non-string `room_type_id`.

#![allow(clippy::result_large_err)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use axum::body::Body;
use axum::extract::{MatchedPath, Path, State};
use axum::http::{Request, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::oneshot;

/// OpenAPI 3.0 description of the public routes.
pub const OPENAPI_YAML: &str = include_str!("openapi.yaml");

/// Switchable seeded defects. All off means a correct service.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Defects {
    /// `POST /rooms/{roomId}/availability` answers 200 when `until < from`.
    pub accept_inverted_dates: bool,
    /// `POST /rooms` accepts a non-string `room_type_id`.
    pub accept_wrong_room_type: bool,
    /// `POST /rooms` answers 500 for a non-string `room_type_id`.
    pub crash_on_wrong_room_type: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Stats {
    pub resets: u64,
    /// Keyed by `"METHOD /route/{template}"`.
    pub requests: BTreeMap<String, u64>,
}

#[derive(Debug, Default)]
struct Inner {
    defects: Defects,
    next_id: u64,
    rooms: BTreeMap<u64, Map<String, Value>>,
    availability: Vec<Value>,
    stats: Stats,
}

impl Inner {
    fn reset_data(&mut self) {
        self.next_id = 1;
        self.rooms.clear();
        self.availability.clear();
    }
}

type Shared = Arc<Mutex<Inner>>;

fn lock(state: &Shared) -> MutexGuard<'_, Inner> {
    state.lock().unwrap_or_else(|e| e.into_inner())
}

/// A running fixture server. Dropping the handle stops the server.
pub struct FixtureServer {
    addr: SocketAddr,
    state: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Binds an ephemeral port on 127.0.0.1 and serves on a background thread.
    pub fn spawn(defects: Defects) -> std::io::Result<Self> {
        Self::spawn_on("127.0.0.1:0", defects)
    }

    pub fn spawn_on(bind: &str, defects: Defects) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state: Shared = Arc::new(Mutex::new(Inner {
            defects,
            next_id: 1,
            ..Inner::default()
        }));
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let thread = std::thread::Builder::new()
            .name(format!("fixture-{}", addr.port()))
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_current_thread()
                    .enable_all()
                    .build()
                    .expect("fixture runtime");
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)
                        .expect("fixture listener");
                    let _ = axum::serve(listener, app)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await;
                });
            })?;
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Shell command that resets the fixture, suitable as an init script.
    pub fn reset_command(&self) -> String {
        format!("curl -sf -X POST {}/__reset", self.base_url())
    }

    pub fn set_defects(&self, defects: Defects) {
        lock(&self.state).defects = defects;
    }

    pub fn defects(&self) -> Defects {
        lock(&self.state).defects
    }

    pub fn stats(&self) -> Stats {
        lock(&self.state).stats.clone()
    }

    pub fn reset_count(&self) -> u64 {
        lock(&self.state).stats.resets
    }

    /// Number of requests seen for `route`, e.g. `"POST /rooms"`.
    pub fn request_count(&self, route: &str) -> u64 {
        lock(&self.state)
            .stats
            .requests
            .get(route)
            .copied()
            .unwrap_or(0)
    }

    /// Clears request counters and the reset counter, keeping data and defects.
    pub fn clear_stats(&self) {
        lock(&self.state).stats = Stats::default();
    }

    /// Resets data in-process without counting it as a reset invocation.
    pub fn reset_data(&self) {
        lock(&self.state).reset_data();
    }

    /// Blocks the calling thread until the server stops.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn router(state: Shared) -> Router {
    Router::new()
        .route("/ping", get(ping))
        .route("/rooms", post(create_room))
        .route("/rooms/{roomId}", get(get_room).put(update_room))
        .route("/rooms/{roomId}/availability", post(set_availability))
        .route("/crash", get(crash))
        .route("/legacy/import", post(legacy_import))
        .route("/__reset", post(reset))
        .route("/__stats", get(stats))
        .route("/__defects", post(set_defects))
        .layer(middleware::from_fn_with_state(state.clone(), count_requests))
        .with_state(state)
}

async fn count_requests(State(state): State<Shared>, req: Request<Body>, next: Next) -> Response {
    if let Some(path) = req.extensions().get::<MatchedPath>() {
        if !path.as_str().starts_with("/__") {
            let key = format!("{} {}", req.method(), path.as_str());
            *lock(&state).stats.requests.entry(key).or_insert(0) += 1;
        }
    }
    next.run(req).await
}

fn bad_request(msg: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": msg.into() }))).into_response()
}

fn not_found() -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": "room not found" }))).into_response()
}

fn parse_body(body: &str) -> Result<Map<String, Value>, Response> {
    match serde_json::from_str::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(bad_request("body must be a JSON object")),
        Err(e) => Err(bad_request(format!("malformed JSON: {e}"))),
    }
}

fn parse_room_id(raw: &str) -> Result<u64, Response> {
    raw.parse::<u64>()
        .map_err(|_| bad_request(format!("roomId must be an integer, got '{raw}'")))
}

fn check_name(v: Option<&Value>) -> Result<String, Response> {
    match v {
        Some(Value::String(s)) if !s.is_empty() && s.chars().count() <= 40 => Ok(s.clone()),
        Some(Value::String(_)) => Err(bad_request("name must have 1..40 characters")),
        Some(_) => Err(bad_request("name must be a string")),
        None => Err(bad_request("name is required")),
    }
}

fn check_capacity(v: Option<&Value>) -> Result<i64, Response> {
    match v.and_then(Value::as_i64) {
        Some(c) if (1..=10).contains(&c) => Ok(c),
        Some(_) => Err(bad_request("capacity must be between 1 and 10")),
        None if v.is_none() => Err(bad_request("capacity is required")),
        None => Err(bad_request("capacity must be an integer")),
    }
}

/// Accepts `YYYY-MM-DD` and returns a sortable tuple.
fn parse_date(v: Option<&Value>, field: &str) -> Result<(u32, u32, u32), Response> {
    let s = match v {
        Some(Value::String(s)) => s,
        Some(_) => return Err(bad_request(format!("{field} must be a date string"))),
        None => return Err(bad_request(format!("{field} is required"))),
    };
    let parts: Vec<&str> = s.split('-').collect();
    let parsed = match parts.as_slice() {
        [y, m, d] if y.len() == 4 && m.len() == 2 && d.len() == 2 => {
            match (y.parse::<u32>(), m.parse::<u32>(), d.parse::<u32>()) {
                (Ok(y), Ok(m), Ok(d)) if (1..=12).contains(&m) && (1..=31).contains(&d) => {
                    Some((y, m, d))
                }
                _ => None,
            }
        }
        _ => None,
    };
    parsed.ok_or_else(|| bad_request(format!("{field} must be a date in YYYY-MM-DD format")))
}

async fn ping() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_room(State(state): State<Shared>, body: String) -> Response {
    let input = match parse_body(&body) {
        Ok(m) => m,
        Err(r) => return r,
    };
    let defects = lock(&state).defects;
    let room_type = match input.get("room_type_id") {
        Some(Value::String(s)) if !s.is_empty() => Value::String(s.clone()),
        Some(Value::String(_)) => return bad_request("room_type_id must not be empty"),
        None => return bad_request("room_type_id is required"),
        Some(other) => {
            if defects.crash_on_wrong_room_type {
                return (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    Json(json!({ "error": "internal server error" })),
                )
                    .into_response();
            }
            if !defects.accept_wrong_room_type {
                return bad_request("room_type_id must be a string");
            }
            other.clone()
        }
    };
    let name = match check_name(input.get("name")) {
        Ok(n) => n,
        Err(r) => return r,
    };
    let capacity = match check_capacity(input.get("capacity")) {
        Ok(c) => c,
        Err(r) => return r,
    };
    let mut inner = lock(&state);
    let id = inner.next_id;
    inner.next_id += 1;
    let mut room = Map::new();
    room.insert("id".into(), json!(id));
    room.insert("room_type_id".into(), room_type);
    room.insert("name".into(), json!(name));
    room.insert("capacity".into(), json!(capacity));
    inner.rooms.insert(id, room.clone());
    (StatusCode::CREATED, Json(Value::Object(room))).into_response()
}

async fn get_room(State(state): State<Shared>, Path(raw): Path<String>) -> Response {
    let id = match parse_room_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    match lock(&state).rooms.get(&id) {
        Some(room) => Json(Value::Object(room.clone())).into_response(),
        None => not_found(),
    }
}

async fn update_room(State(state): State<Shared>, Path(raw): Path<String>, body: String) -> Response {
    let id = match parse_room_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let input = match parse_body(&body) {
        Ok(m) => m,
        Err(r) => return r,
    };
    let name = match check_name(input.get("name")) {
        Ok(n) => n,
        Err(r) => return r,
    };
    let capacity = match check_capacity(input.get("capacity")) {
        Ok(c) => c,
        Err(r) => return r,
    };
    let mut inner = lock(&state);
    match inner.rooms.get_mut(&id) {
        Some(room) => {
            room.insert("name".into(), json!(name));
            room.insert("capacity".into(), json!(capacity));
            Json(Value::Object(room.clone())).into_response()
        }
        None => not_found(),
    }
}

async fn set_availability(
    State(state): State<Shared>,
    Path(raw): Path<String>,
    body: String,
) -> Response {
    let id = match parse_room_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    let input = match parse_body(&body) {
        Ok(m) => m,
        Err(r) => return r,
    };
    let from = match parse_date(input.get("from"), "from") {
        Ok(d) => d,
        Err(r) => return r,
    };
    let until = match parse_date(input.get("until"), "until") {
        Ok(d) => d,
        Err(r) => return r,
    };
    let count = match input.get("count").and_then(Value::as_i64) {
        Some(c) if (1..=10).contains(&c) => c,
        _ => return bad_request("count must be an integer between 1 and 10"),
    };
    let mut inner = lock(&state);
    if until < from && !inner.defects.accept_inverted_dates {
        return bad_request("until must not be before from");
    }
    if !inner.rooms.contains_key(&id) {
        return not_found();
    }
    let record = json!({
        "room_id": id,
        "from": input["from"],
        "until": input["until"],
        "count": count,
    });
    inner.availability.push(record.clone());
    Json(record).into_response()
}

async fn crash() -> Response {
    (
        StatusCode::INTERNAL_SERVER_ERROR,
        Json(json!({ "error": "seeded crash" })),
    )
        .into_response()
}

async fn legacy_import() -> Response {
    bad_request("legacy import is disabled")
}

async fn reset(State(state): State<Shared>) -> Response {
    let mut inner = lock(&state);
    inner.reset_data();
    inner.stats.resets += 1;
    StatusCode::NO_CONTENT.into_response()
}

async fn stats(State(state): State<Shared>) -> Json<Stats> {
    Json(lock(&state).stats.clone())
}

async fn set_defects(State(state): State<Shared>, Json(defects): Json<Defects>) -> Response {
    lock(&state).defects = defects;
    StatusCode::NO_CONTENT.into_response()
}
