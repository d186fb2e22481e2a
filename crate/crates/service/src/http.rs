//! JSON-over-HTTP front end.
//!
//! | method | path            | auth   |
//! |--------|-----------------|--------|
//! | POST   | `/policies`     |        |
//! | POST   | `/executions`   |        |
//! | GET    | `/quiz`         |        |
//! | POST   | `/quiz`         |        |
//! | GET    | `/pairs/next`   | bearer |
//! | POST   | `/preferences`  | bearer |
//! | GET    | `/leaderboard`  |        |

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use arena_core::ranking::{PolicyId, RankingError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{BlindedPair, Choice, LeaderboardFilter, NewExecution, QuizPaper, QuizState, ServiceError, SharedArena};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ServiceError::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            ServiceError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            ServiceError::NotQualified => (StatusCode::FORBIDDEN, "not_qualified"),
            ServiceError::NoPairsAvailable => (StatusCode::NOT_FOUND, "no_pairs_available"),
            ServiceError::InvalidPair(_) => (StatusCode::NOT_FOUND, "invalid_pair"),
            ServiceError::AlreadyJudged => (StatusCode::CONFLICT, "already_judged"),
            ServiceError::RationaleRequired => (StatusCode::UNPROCESSABLE_ENTITY, "rationale_required"),
            ServiceError::Ranking(RankingError::EmptyDecisiveSet) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "empty_decisive_set")
            }
            ServiceError::Ranking(RankingError::GraphDisconnected { .. }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "graph_disconnected")
            }
            ServiceError::Ranking(RankingError::InvalidArgument(_)) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            ServiceError::Ranking(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ranking_failed"),
            ServiceError::Corrupt(_) | ServiceError::Io(_) | ServiceError::Json(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        let mut body = json!({ "error": code, "message": self.to_string() });
        if let ServiceError::Ranking(RankingError::GraphDisconnected { components }) = &self {
            body["components"] = json!(components);
        }
        (status, Json(body)).into_response()
    }
}

pub fn router(arena: SharedArena) -> Router {
    Router::new()
        .route("/policies", post(register_policy))
        .route("/executions", post(register_execution))
        .route("/quiz", get(start_quiz).post(grade_quiz))
        .route("/pairs/next", get(next_pair))
        .route("/preferences", post(submit_preference))
        .route("/leaderboard", get(leaderboard))
        .with_state(arena)
}

pub async fn serve(listener: tokio::net::TcpListener, arena: SharedArena) -> std::io::Result<()> {
    axum::serve(listener, router(arena)).await
}

fn annotator_for(arena: &SharedArena, headers: &HeaderMap) -> Result<String, ServiceError> {
    let token = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or(ServiceError::Unauthorized)?;
    arena.lock().authenticate(token.trim()).map(str::to_string).ok_or(ServiceError::Unauthorized)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyBody {
    pub policy: PolicyId,
}

async fn register_policy(
    State(arena): State<SharedArena>,
    Json(body): Json<PolicyBody>,
) -> Result<(StatusCode, Json<serde_json::Value>), ServiceError> {
    let created = arena.lock().register_policy(body.policy.clone())?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "policy": body.policy, "created": created }))))
}

async fn register_execution(
    State(arena): State<SharedArena>,
    Json(body): Json<NewExecution>,
) -> Result<(StatusCode, Json<serde_json::Value>), ServiceError> {
    let (id, created) = arena.lock().register_execution(body)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "execution_id": id, "created": created }))))
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

async fn start_quiz(
    State(arena): State<SharedArena>,
    Query(q): Query<AnnotatorQuery>,
) -> Result<Json<QuizPaper>, ServiceError> {
    Ok(Json(arena.lock().start_quiz(&q.annotator)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuizSubmission {
    pub annotator: String,
    pub responses: Vec<Choice>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuizReply {
    pub passed: bool,
    pub correct: usize,
    pub state: QuizState,
    pub token: Option<String>,
}

async fn grade_quiz(
    State(arena): State<SharedArena>,
    Json(body): Json<QuizSubmission>,
) -> Result<Json<QuizReply>, ServiceError> {
    let result = arena.lock().quiz_evaluate(&body.annotator, &body.responses)?;
    Ok(Json(QuizReply {
        passed: result.state.passed,
        correct: result.state.correct_count(),
        state: result.state,
        token: result.token,
    }))
}

async fn next_pair(State(arena): State<SharedArena>, headers: HeaderMap) -> Result<Json<BlindedPair>, ServiceError> {
    let who = annotator_for(&arena, &headers)?;
    Ok(Json(arena.lock().next_pair(&who)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreferenceBody {
    pub pair_id: String,
    pub choice: Choice,
    #[serde(default)]
    pub rationale: String,
}

async fn submit_preference(
    State(arena): State<SharedArena>,
    headers: HeaderMap,
    Json(body): Json<PreferenceBody>,
) -> Result<(StatusCode, Json<serde_json::Value>), ServiceError> {
    let who = annotator_for(&arena, &headers)?;
    arena.lock().submit_preference(&body.pair_id, &who, body.choice, &body.rationale)?;
    // The unblinded record stays server-side.
    Ok((StatusCode::CREATED, Json(json!({ "pair_id": body.pair_id, "status": "recorded" }))))
}

async fn leaderboard(
    State(arena): State<SharedArena>,
    Query(filter): Query<LeaderboardFilter>,
) -> Result<Response, ServiceError> {
    let payload = arena.leaderboard(&filter)?;
    Ok(Json(&*payload).into_response())
}
