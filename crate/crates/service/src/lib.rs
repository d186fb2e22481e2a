//! Live side of the arena: executions are registered, qualified annotators
//! receive double-blind pairs of rollouts from the same scene, their
//! preferences go to an append-only event log, and leaderboards are fitted
//! on demand from that log.

mod arena;
mod clock;
pub mod http;
mod log;
mod model;
mod roles;
mod shared;

use arena_core::ranking::RankingError;
use thiserror::Error;

pub use arena::{Arena, ArenaConfig, LeaderboardFilter, LeaderboardPayload, QuizResult};
pub use clock::{Clock, ManualClock, SystemClock};
pub use log::{read_entries, EventLog};
pub use model::*;
pub use roles::{parse_task_roles, ParseError, TaskRoles};
pub use shared::SharedArena;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("annotator has not passed the qualification quiz")]
    NotQualified,
    #[error("missing or unknown bearer token")]
    Unauthorized,
    #[error("no pairs available for this annotator")]
    NoPairsAvailable,
    #[error("a written rationale is required")]
    RationaleRequired,
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("pair already judged")]
    AlreadyJudged,
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("event log is corrupt: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
