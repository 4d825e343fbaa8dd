use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;

use crate::error::SessionError;
use crate::session::{CreateRequest, FinishReport, SessionStore, StateView};

type Store = Arc<SessionStore>;
type Reply<T> = Result<T, SessionError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PickBody {
    group: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AutoBody {
    steps: usize,
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Reply<T> {
    b.map(|Json(v)| v).map_err(|e| SessionError::BadRequest(e.body_text()))
}

/// Engine work is CPU bound, so it runs off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Reply<T> + Send + 'static) -> Reply<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| SessionError::Io(format!("worker failed: {e}")))?
}

async fn create(State(store): State<Store>, req: Result<Json<CreateRequest>, JsonRejection>) -> Reply<(StatusCode, Json<StateView>)> {
    let req = body(req)?;
    let view = blocking(move || store.create(&req)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn state(State(store): State<Store>, Path(id): Path<String>) -> Reply<Json<StateView>> {
    store.get(&id).map(Json)
}

async fn pick(
    State(store): State<Store>,
    Path(id): Path<String>,
    req: Result<Json<PickBody>, JsonRejection>,
) -> Reply<Json<StateView>> {
    let group = body(req)?.group;
    if group == 0 {
        return Err(SessionError::BadRequest("group ids are one-based".into()));
    }
    blocking(move || store.pick(&id, group - 1)).await.map(Json)
}

async fn auto(
    State(store): State<Store>,
    Path(id): Path<String>,
    req: Result<Json<AutoBody>, JsonRejection>,
) -> Reply<Json<StateView>> {
    let steps = body(req)?.steps;
    blocking(move || store.auto(&id, steps)).await.map(Json)
}

async fn finish(State(store): State<Store>, Path(id): Path<String>) -> Reply<Json<FinishReport>> {
    blocking(move || store.finish(&id)).await.map(Json)
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/pick", post(pick))
        .route("/sessions/{id}/auto", post(auto))
        .route("/sessions/{id}/finish", post(finish))
        .with_state(store)
}

pub async fn serve(listener: TcpListener, store: Arc<SessionStore>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}
