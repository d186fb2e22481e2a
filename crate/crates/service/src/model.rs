use arena_core::perturb::PerturbationSpec;
use arena_core::progress::FrameScoreSeries;
use arena_core::ranking::{ComparisonRecord, PolicyId};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Registration request for one policy rollout video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewExecution {
    pub policy: PolicyId,
    pub environment_id: String,
    pub task: String,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    pub video_uri: String,
    pub initial_condition_hash: String,
    #[serde(default)]
    pub frame_scores: Option<FrameScoreSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub execution_id: String,
    #[serde(flatten)]
    pub spec: NewExecution,
}

impl ExecutionRecord {
    /// Executions are only compared within the same scene and condition.
    pub(crate) fn group_key(&self) -> GroupKey {
        GroupKey {
            environment_id: self.spec.environment_id.clone(),
            task: self.spec.task.clone(),
            initial_condition_hash: self.spec.initial_condition_hash.clone(),
            perturbation: perturbation_key(&self.spec.perturbation),
        }
    }

    pub(crate) fn identity_key(&self) -> (PolicyId, String, String, String) {
        (
            self.spec.policy.clone(),
            self.spec.environment_id.clone(),
            perturbation_key(&self.spec.perturbation),
            self.spec.initial_condition_hash.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct GroupKey {
    pub environment_id: String,
    pub task: String,
    pub initial_condition_hash: String,
    pub perturbation: String,
}

pub(crate) fn perturbation_key(p: &Option<PerturbationSpec>) -> String {
    match p {
        None => String::new(),
        Some(spec) => serde_json::to_string(spec).expect("perturbation spec serializes"),
    }
}

/// Short label used for leaderboard filtering: `none`, `BG`, `COLOR` or
/// `OBJ_POSE`.
pub fn perturbation_kind(p: &Option<PerturbationSpec>) -> &'static str {
    match p {
        None => "none",
        Some(PerturbationSpec::Background { .. }) => "BG",
        Some(PerturbationSpec::Color { .. }) => "COLOR",
        Some(PerturbationSpec::ObjPose { .. }) => "OBJ_POSE",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Choice {
    Left,
    Right,
    Tie,
}

/// A pair of executions handed to one annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAssignment {
    pub pair_id: String,
    pub left: String,
    pub right: String,
    pub annotator: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub environment_id: String,
    pub task: String,
    pub blinded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedVideo {
    pub execution_id: String,
    pub video_uri: String,
}

/// What an annotator sees: videos only, never the policies behind them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedPair {
    pub pair_id: String,
    pub left: BlindedVideo,
    pub right: BlindedVideo,
    pub task: String,
    pub environment_id: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub blinded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEvent {
    pub pair_id: String,
    pub choice: Choice,
    pub environment_id: String,
    pub perturbation: Option<PerturbationSpec>,
    #[serde(flatten)]
    pub record: ComparisonRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldPair {
    pub left_uri: String,
    pub right_uri: String,
    pub correct: Choice,
}

/// The ten reference pairs used to qualify annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizConfig {
    pub pairs: Vec<GoldPair>,
}

pub const QUIZ_LENGTH: usize = 10;
pub const QUIZ_PASS_MARK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizQuestion {
    pub question: usize,
    pub left_uri: String,
    pub right_uri: String,
}

/// One attempt's questions, in a per-attempt order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizPaper {
    pub annotator: String,
    pub attempt: u64,
    pub questions: Vec<QuizQuestion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizAnswer {
    pub gold_pair: usize,
    pub response: Choice,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizState {
    pub annotator: String,
    pub answered: Vec<QuizAnswer>,
    pub passed: bool,
}

impl QuizState {
    pub fn correct_count(&self) -> usize {
        self.answered.iter().filter(|a| a.correct).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizGraded {
    pub attempt: u64,
    #[serde(flatten)]
    pub state: QuizState,
    /// SHA-256 of the bearer token issued on a pass.
    pub token_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    PolicyRegistered { policy: PolicyId },
    ExecutionRegistered(ExecutionRecord),
    QuizIssued { annotator: String, attempt: u64, order: Vec<usize> },
    QuizGraded(QuizGraded),
    PairIssued(PairAssignment),
    PreferenceRecorded(PreferenceEvent),
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(flatten)]
    pub event: Event,
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
}
