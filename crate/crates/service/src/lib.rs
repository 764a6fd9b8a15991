//! Interactive active-learning sessions over HTTP.
//!
//! A client creates a session on a built-in or uploaded dataset, then
//! alternates between requesting a query and submitting its label. Session
//! state can be persisted to an event log and replayed on restart.

pub mod api;
pub mod error;
pub mod session;
pub mod store;

pub use api::{router, AppState, SharedState};
pub use error::ApiError;
pub use session::{CreateSession, Environment, Session};
