//! HTTP+JSON service that lets an operator drive a selection path one pick
//! at a time. Group ids on the wire are one-based.
//!
//! | route | body | effect |
//! |---|---|---|
//! | `POST /sessions` | [`CreateRequest`] | new session, first candidates scored |
//! | `GET /sessions/{id}` | | current [`StateView`] |
//! | `POST /sessions/{id}/pick` | `{"group": g}` | add `g` (must be in `A_lambda`), then backward sweep |
//! | `POST /sessions/{id}/auto` | `{"steps": k}` | up to `k` greedy picks |
//! | `POST /sessions/{id}/finish` | | freeze; returns [`FinishReport`] |

mod api;
mod error;
mod session;

pub use api::{router, serve};
pub use error::SessionError;
pub use session::{CandidateView, CreateRequest, FinishReport, ModelView, Phase, Session, SessionStore, StateView};
