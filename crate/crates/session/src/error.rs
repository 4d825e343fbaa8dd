use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

use crate::session::Phase;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("group {group} is not in A_lambda")]
    PickOutside { group: usize },
    #[error("session is {0:?}; expected awaiting_pick")]
    WrongPhase(Phase),
    #[error("another request is modifying this session")]
    Busy,
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Engine(#[from] iga::Error),
}

impl SessionError {
    pub fn status(&self) -> StatusCode {
        match self {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::PickOutside { .. } | SessionError::WrongPhase(_) | SessionError::Busy => StatusCode::CONFLICT,
            SessionError::BadRequest(_) => StatusCode::BAD_REQUEST,
            // malformed uploads surface as engine validation errors
            SessionError::Engine(e) => match e {
                iga::Error::NonConvergence { .. } | iga::Error::Singular(_) | iga::Error::Io(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
                _ => StatusCode::BAD_REQUEST,
            },
            SessionError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SessionError::NotFound(_) => "not_found",
            SessionError::PickOutside { .. } => "pick_outside_candidate_set",
            SessionError::WrongPhase(_) => "wrong_phase",
            SessionError::Busy => "busy",
            SessionError::BadRequest(_) => "bad_request",
            SessionError::Io(_) => "io",
            SessionError::Engine(_) => "engine",
        }
    }
}

impl IntoResponse for SessionError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.kind(), "message": self.to_string() }));
        (self.status(), body).into_response()
    }
}
