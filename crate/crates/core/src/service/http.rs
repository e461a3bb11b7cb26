//! HTTP + JSON front end and the server-sent event stream.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tokio_stream::wrappers::errors::BroadcastStreamRecvError;
use tokio_stream::wrappers::BroadcastStream;

use super::{Location, SeekerRegistration, Service, VolunteerRegistration};
use crate::error::Error;
use crate::geometry::Polygon;

pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::Parse(_) => StatusCode::BAD_REQUEST,
        Error::Validation { .. } | Error::DuplicateId(_) | Error::Lookup(_) => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Precondition(_) => StatusCode::CONFLICT,
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        let mut body = json!({"error": self.0.to_string()});
        if let Error::Validation { field: Some(f), .. } = &self.0 {
            body["field"] = json!(f);
        }
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Decode a JSON body, reporting the offending field on type errors.
pub fn decode<T: DeserializeOwned>(body: &[u8]) -> crate::Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => Error::Validation {
                message: inner.to_string(),
                field: (path != ".").then_some(path),
            },
            _ => Error::Parse(inner.to_string()),
        }
    })
}

type Shared = State<Arc<Service>>;

async fn create_session(State(svc): Shared, body: Bytes) -> ApiResult<Response> {
    let req = decode(&body)?;
    let id = tokio::task::spawn_blocking(move || svc.create_session(req))
        .await
        .map_err(|e| Error::Io(std::io::Error::other(e)))??;
    Ok((StatusCode::CREATED, Json(json!({"session_id": id}))).into_response())
}

async fn register_volunteer(State(svc): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let reg: VolunteerRegistration = decode(&body)?;
    let view = svc.register_volunteer(&id, reg)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn register_seeker(State(svc): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let reg: SeekerRegistration = decode(&body)?;
    let view = svc.register_seeker(&id, reg)?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn update_location(
    State(svc): Shared,
    Path((id, cid)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let loc: Location = decode(&body)?;
    Ok(Json(svc.update_location(&id, &cid, loc)?).into_response())
}

async fn set_zone(State(svc): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let zone: Polygon = decode(&body)?;
    Ok(Json(svc.set_zone(&id, zone)?).into_response())
}

async fn replan(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let plan = tokio::task::spawn_blocking(move || svc.replan(&id))
        .await
        .map_err(|e| Error::Io(std::io::Error::other(e)))??;
    Ok(Json(plan).into_response())
}

async fn snapshot(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.snapshot(&id)?).into_response())
}

async fn plan(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.plan(&id)?).into_response())
}

fn sse_event(message: &Value) -> SseEvent {
    let name = message["event"].as_str().unwrap_or("message");
    SseEvent::default().event(name).data(message["data"].to_string())
}

/// Events for one subscriber: the retained plan first, then live messages.
/// A lagging subscriber gets a `resync` event telling it to refetch the
/// snapshot.
pub fn event_stream(
    retained: Option<Value>,
    receiver: tokio::sync::broadcast::Receiver<Value>,
) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    let first = retained.map(|plan| sse_event(&json!({"event": "plan-published", "data": plan})));
    let live = BroadcastStream::new(receiver).map(|m| match m {
        Ok(message) => sse_event(&message),
        Err(BroadcastStreamRecvError::Lagged(n)) => SseEvent::default().event("resync").data(n.to_string()),
    });
    stream::iter(first).chain(live).map(Ok)
}

async fn stream_events(State(svc): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let sub = svc.subscribe(&id)?;
    let events = event_stream(sub.retained, sub.receiver);
    Ok(Sse::new(events).keep_alive(KeepAlive::default()).into_response())
}

pub fn router(svc: Arc<Service>, console: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/:id/volunteers", post(register_volunteer))
        .route("/sessions/:id/seekers", post(register_seeker))
        .route("/sessions/:id/clients/:cid/location", put(update_location))
        .route("/sessions/:id/zone", put(set_zone))
        .route("/sessions/:id/replan", post(replan))
        .route("/sessions/:id/snapshot", get(snapshot))
        .route("/sessions/:id/plan", get(plan))
        .route("/sessions/:id/stream", get(stream_events))
        .with_state(svc);
    match console {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serve until ctrl-c.
pub async fn serve(addr: SocketAddr, svc: Arc<Service>, console: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc, console))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
