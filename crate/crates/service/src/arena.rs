use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use arena_core::ranking::{leaderboard, ComparisonRecord, Leaderboard, Outcome, PolicyId};
use chrono::Duration;
use rand::rngs::ChaCha8Rng;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;
use crate::log::EventLog;
use crate::model::*;
use crate::ServiceError;

type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaConfig {
    pub seed: u64,
    /// Seconds an issued pair stays open for submission.
    pub pair_ttl_seconds: i64,
    pub quiz: QuizConfig,
    /// Significance level of leaderboard confidence bands.
    pub alpha: f64,
}

impl ArenaConfig {
    pub fn new(quiz: QuizConfig) -> Self {
        Self { seed: 0, pair_ttl_seconds: 1800, quiz, alpha: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quiz.pairs.len() != QUIZ_LENGTH {
            return Err(ServiceError::InvalidArgument(format!(
                "quiz needs exactly {QUIZ_LENGTH} gold pairs, got {}",
                self.quiz.pairs.len()
            )));
        }
        if self.pair_ttl_seconds <= 0 {
            return Err(ServiceError::InvalidArgument("pair TTL must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ServiceError::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeaderboardFilter {
    pub environment: Option<String>,
    /// One of `none`, `BG`, `COLOR`, `OBJ_POSE`.
    pub perturbation: Option<String>,
}

impl LeaderboardFilter {
    fn validate(&self) -> Result<()> {
        match self.perturbation.as_deref() {
            None | Some("none" | "BG" | "COLOR" | "OBJ_POSE") => Ok(()),
            Some(other) => Err(ServiceError::InvalidArgument(format!(
                "unknown perturbation filter {other:?}"
            ))),
        }
    }

    fn matches(&self, p: &PreferenceEvent) -> bool {
        self.environment.as_ref().is_none_or(|e| *e == p.environment_id)
            && self.perturbation.as_deref().is_none_or(|k| k == perturbation_kind(&p.perturbation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardPayload {
    pub filter: LeaderboardFilter,
    /// Number of log events the payload was computed from.
    pub log_length: usize,
    #[serde(flatten)]
    pub board: Leaderboard,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuizResult {
    pub state: QuizState,
    /// Bearer token, present only when the attempt passed.
    pub token: Option<String>,
}

type PairKey = (String, String);

fn pair_key(a: &str, b: &str) -> PairKey {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Derived index rebuilt from the event log.
#[derive(Debug, Default)]
struct State {
    policies: BTreeSet<PolicyId>,
    executions: Vec<ExecutionRecord>,
    execution_index: HashMap<String, usize>,
    identities: HashMap<(PolicyId, String, String, String), String>,
    groups: BTreeMap<GroupKey, Vec<usize>>,
    pairs: HashMap<String, PairAssignment>,
    answered: HashSet<String>,
    issued_to: HashSet<(String, PairKey)>,
    judgments: HashMap<PairKey, usize>,
    preferences: Vec<PreferenceEvent>,
    open_quizzes: HashMap<String, (u64, Vec<usize>)>,
    quiz_attempts: HashMap<String, u64>,
    last_quiz: HashMap<String, QuizState>,
    qualified: HashSet<String>,
    tokens: HashMap<String, String>,
}

impl State {
    fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::PolicyRegistered { policy } => {
                self.policies.insert(policy.clone());
            }
            Event::ExecutionRegistered(rec) => {
                if self.execution_index.contains_key(&rec.execution_id) {
                    return Err(ServiceError::Corrupt(format!("duplicate execution {}", rec.execution_id)));
                }
                let idx = self.executions.len();
                self.execution_index.insert(rec.execution_id.clone(), idx);
                self.identities.insert(rec.identity_key(), rec.execution_id.clone());
                self.groups.entry(rec.group_key()).or_default().push(idx);
                self.executions.push(rec.clone());
            }
            Event::QuizIssued { annotator, attempt, order } => {
                self.quiz_attempts.insert(annotator.clone(), *attempt);
                self.open_quizzes.insert(annotator.clone(), (*attempt, order.clone()));
            }
            Event::QuizGraded(g) => {
                let who = &g.state.annotator;
                self.open_quizzes.remove(who);
                self.last_quiz.insert(who.clone(), g.state.clone());
                if g.state.passed {
                    self.qualified.insert(who.clone());
                }
                if let Some(hash) = &g.token_sha256 {
                    self.tokens.insert(hash.clone(), who.clone());
                }
            }
            Event::PairIssued(p) => {
                if !self.execution_index.contains_key(&p.left) || !self.execution_index.contains_key(&p.right) {
                    return Err(ServiceError::Corrupt(format!("pair {} references unknown executions", p.pair_id)));
                }
                self.issued_to.insert((p.annotator.clone(), pair_key(&p.left, &p.right)));
                self.pairs.insert(p.pair_id.clone(), p.clone());
            }
            Event::PreferenceRecorded(pref) => {
                let pair = self
                    .pairs
                    .get(&pref.pair_id)
                    .ok_or_else(|| ServiceError::Corrupt(format!("preference for unknown pair {}", pref.pair_id)))?;
                if !self.answered.insert(pref.pair_id.clone()) {
                    return Err(ServiceError::Corrupt(format!("pair {} answered twice", pref.pair_id)));
                }
                *self.judgments.entry(pair_key(&pair.left, &pair.right)).or_default() += 1;
                self.preferences.push(pref.clone());
            }
        }
        Ok(())
    }

    fn execution(&self, id: &str) -> &ExecutionRecord {
        &self.executions[self.execution_index[id]]
    }
}

fn rng_for(seed: u64, seq: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ seq.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn token_hash(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

/// The arena's single-writer core. Every mutation is appended to the event
/// log first and then applied to the in-memory index, so replaying the log
/// from the start rebuilds exactly the same state.
pub struct Arena {
    config: ArenaConfig,
    clock: Arc<dyn Clock>,
    log: EventLog,
    state: State,
}

impl std::fmt::Debug for Arena {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Arena").field("config", &self.config).field("events", &self.log.len()).finish()
    }
}

impl Arena {
    /// Builds the arena by replaying every entry already in `log`.
    pub fn open(config: ArenaConfig, clock: Arc<dyn Clock>, log: EventLog) -> Result<Self> {
        config.validate()?;
        let mut state = State::default();
        for env in log.entries() {
            state.apply(&env.event)?;
        }
        Ok(Self { config, clock, log, state })
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    fn commit(&mut self, event: Event) -> Result<()> {
        let now = self.clock.now();
        let env = self.log.append(event, now)?;
        self.state.apply(&env.event)
    }

    pub fn register_policy(&mut self, policy: PolicyId) -> Result<bool> {
        if self.state.policies.contains(&policy) {
            return Ok(false);
        }
        self.commit(Event::PolicyRegistered { policy })?;
        Ok(true)
    }

    pub fn policies(&self) -> impl Iterator<Item = &PolicyId> {
        self.state.policies.iter()
    }

    /// Returns the execution id and whether it was newly created. A record
    /// matching an existing (policy, environment, perturbation, initial
    /// condition) returns the existing id.
    pub fn register_execution(&mut self, spec: NewExecution) -> Result<(String, bool)> {
        for (name, value) in [
            ("video_uri", &spec.video_uri),
            ("environment_id", &spec.environment_id),
            ("task", &spec.task),
            ("initial_condition_hash", &spec.initial_condition_hash),
        ] {
            if value.trim().is_empty() {
                return Err(ServiceError::InvalidArgument(format!("{name} must not be empty")));
            }
        }
        if !self.state.policies.contains(&spec.policy) {
            return Err(ServiceError::InvalidArgument(format!("unknown policy {}", spec.policy)));
        }
        let record = ExecutionRecord { execution_id: format!("ex-{:06}", self.state.executions.len() + 1), spec };
        if let Some(existing) = self.state.identities.get(&record.identity_key()) {
            return Ok((existing.clone(), false));
        }
        let id = record.execution_id.clone();
        self.commit(Event::ExecutionRegistered(record))?;
        Ok((id, true))
    }

    pub fn execution(&self, id: &str) -> Option<&ExecutionRecord> {
        self.state.execution_index.get(id).map(|&i| &self.state.executions[i])
    }

    pub fn start_quiz(&mut self, annotator: &str) -> Result<QuizPaper> {
        if annotator.trim().is_empty() {
            return Err(ServiceError::InvalidArgument("annotator must not be empty".into()));
        }
        let attempt = self.state.quiz_attempts.get(annotator).copied().unwrap_or(0) + 1;
        let mut order: Vec<usize> = (0..QUIZ_LENGTH).collect();
        order.shuffle(&mut rng_for(self.config.seed, self.log.next_seq()));
        let questions = order
            .iter()
            .enumerate()
            .map(|(q, &g)| QuizQuestion {
                question: q,
                left_uri: self.config.quiz.pairs[g].left_uri.clone(),
                right_uri: self.config.quiz.pairs[g].right_uri.clone(),
            })
            .collect();
        self.commit(Event::QuizIssued { annotator: annotator.to_string(), attempt, order })?;
        Ok(QuizPaper { annotator: annotator.to_string(), attempt, questions })
    }

    /// Grades `responses`, given in the question order of the open attempt.
    pub fn quiz_evaluate(&mut self, annotator: &str, responses: &[Choice]) -> Result<QuizResult> {
        let Some((attempt, order)) = self.state.open_quizzes.get(annotator).cloned() else {
            return Err(ServiceError::InvalidArgument(format!("no quiz in progress for {annotator:?}")));
        };
        if responses.len() != QUIZ_LENGTH {
            return Err(ServiceError::InvalidArgument(format!(
                "expected {QUIZ_LENGTH} responses, got {}",
                responses.len()
            )));
        }
        let answered: Vec<QuizAnswer> = order
            .iter()
            .zip(responses)
            .map(|(&g, &response)| QuizAnswer {
                gold_pair: g,
                response,
                correct: self.config.quiz.pairs[g].correct == response,
            })
            .collect();
        let passed = answered.iter().filter(|a| a.correct).count() >= QUIZ_PASS_MARK;
        let token = passed.then(|| hex::encode(rand::rng().random::<[u8; 32]>()));
        let state = QuizState { annotator: annotator.to_string(), answered, passed };
        self.commit(Event::QuizGraded(QuizGraded {
            attempt,
            state: state.clone(),
            token_sha256: token.as_deref().map(token_hash),
        }))?;
        Ok(QuizResult { state, token })
    }

    pub fn quiz_state(&self, annotator: &str) -> Option<&QuizState> {
        self.state.last_quiz.get(annotator)
    }

    pub fn is_qualified(&self, annotator: &str) -> bool {
        self.state.qualified.contains(annotator)
    }

    /// Resolves a bearer token to its annotator.
    pub fn authenticate(&self, token: &str) -> Option<&str> {
        self.state.tokens.get(&token_hash(token)).map(String::as_str)
    }

    /// Issues the least-judged eligible pair this annotator has never seen,
    /// breaking ties and choosing sides at random.
    pub fn next_pair(&mut self, annotator: &str) -> Result<BlindedPair> {
        if !self.is_qualified(annotator) {
            return Err(ServiceError::NotQualified);
        }
        let st = &self.state;
        let mut best: Vec<(usize, usize)> = Vec::new();
        let mut fewest = usize::MAX;
        for members in st.groups.values() {
            for (k, &i) in members.iter().enumerate() {
                for &j in &members[k + 1..] {
                    let (a, b) = (&st.executions[i], &st.executions[j]);
                    if a.spec.policy == b.spec.policy {
                        continue;
                    }
                    let key = pair_key(&a.execution_id, &b.execution_id);
                    if st.issued_to.contains(&(annotator.to_string(), key.clone())) {
                        continue;
                    }
                    let n = st.judgments.get(&key).copied().unwrap_or(0);
                    if n < fewest {
                        fewest = n;
                        best.clear();
                    }
                    if n == fewest {
                        best.push((i, j));
                    }
                }
            }
        }
        if best.is_empty() {
            return Err(ServiceError::NoPairsAvailable);
        }
        let seq = self.log.next_seq();
        let mut rng = rng_for(self.config.seed, seq);
        let (i, j) = best[rng.random_range(0..best.len())];
        let (left, right) = if rng.random::<bool>() { (j, i) } else { (i, j) };
        let (left, right) = (&st.executions[left], &st.executions[right]);
        let now = self.clock.now();
        let assignment = PairAssignment {
            pair_id: format!("pair-{seq:06}"),
            left: left.execution_id.clone(),
            right: right.execution_id.clone(),
            annotator: annotator.to_string(),
            issued_at: now,
            expires_at: now + Duration::seconds(self.config.pair_ttl_seconds),
            environment_id: left.spec.environment_id.clone(),
            task: left.spec.task.clone(),
            blinded: true,
        };
        let view = self.blind(&assignment);
        self.commit(Event::PairIssued(assignment))?;
        Ok(view)
    }

    fn blind(&self, p: &PairAssignment) -> BlindedPair {
        let video = |id: &str| BlindedVideo {
            execution_id: id.to_string(),
            video_uri: self.state.execution(id).spec.video_uri.clone(),
        };
        BlindedPair {
            pair_id: p.pair_id.clone(),
            left: video(&p.left),
            right: video(&p.right),
            task: p.task.clone(),
            environment_id: p.environment_id.clone(),
            issued_at: p.issued_at,
            expires_at: p.expires_at,
            blinded: true,
        }
    }

    pub fn assignment(&self, pair_id: &str) -> Option<&PairAssignment> {
        self.state.pairs.get(pair_id)
    }

    pub fn assignments(&self) -> impl Iterator<Item = &PairAssignment> {
        self.log.entries().iter().filter_map(|e| match &e.event {
            Event::PairIssued(p) => Some(p),
            _ => None,
        })
    }

    /// Unblinds a judgment into a record with policies in lexicographic
    /// order, so `+1` always means the smaller id won.
    pub fn submit_preference(
        &mut self,
        pair_id: &str,
        annotator: &str,
        choice: Choice,
        rationale: &str,
    ) -> Result<ComparisonRecord> {
        if rationale.trim().is_empty() {
            return Err(ServiceError::RationaleRequired);
        }
        let pair = match self.state.pairs.get(pair_id) {
            Some(p) if p.annotator == annotator => p,
            _ => return Err(ServiceError::InvalidPair(format!("{pair_id} was not issued to this annotator"))),
        };
        if self.state.answered.contains(pair_id) {
            return Err(ServiceError::AlreadyJudged);
        }
        let now = self.clock.now();
        if now > pair.expires_at {
            return Err(ServiceError::InvalidPair(format!("{pair_id} expired at {}", pair.expires_at)));
        }
        let left = self.state.execution(&pair.left);
        let right = self.state.execution(&pair.right);
        let left_is_a = left.spec.policy <= right.spec.policy;
        let (a, b) = if left_is_a { (left, right) } else { (right, left) };
        let outcome = match (choice, left_is_a) {
            (Choice::Tie, _) => Outcome::Tie,
            (Choice::Left, true) | (Choice::Right, false) => Outcome::PreferA,
            (Choice::Left, false) | (Choice::Right, true) => Outcome::PreferB,
        };
        let record = ComparisonRecord {
            policy_a: a.spec.policy.clone(),
            policy_b: b.spec.policy.clone(),
            outcome,
            task: pair.task.clone(),
            annotator: annotator.to_string(),
            rationale: rationale.to_string(),
            timestamp: now,
        };
        let event = PreferenceEvent {
            pair_id: pair_id.to_string(),
            choice,
            environment_id: pair.environment_id.clone(),
            perturbation: left.spec.perturbation.clone(),
            record: record.clone(),
        };
        self.commit(Event::PreferenceRecorded(event))?;
        Ok(record)
    }

    pub fn comparison_records(&self, filter: &LeaderboardFilter) -> Vec<ComparisonRecord> {
        self.state.preferences.iter().filter(|p| filter.matches(p)).map(|p| p.record.clone()).collect()
    }

    /// Number of judgments collected for an unordered execution pair.
    pub fn judgment_count(&self, a: &str, b: &str) -> usize {
        self.state.judgments.get(&pair_key(a, b)).copied().unwrap_or(0)
    }

    pub(crate) fn leaderboard_snapshot(&self, filter: &LeaderboardFilter) -> Result<(usize, Vec<ComparisonRecord>)> {
        filter.validate()?;
        Ok((self.log.len(), self.comparison_records(filter)))
    }

    pub fn leaderboard(&self, filter: &LeaderboardFilter) -> Result<LeaderboardPayload> {
        let (log_length, records) = self.leaderboard_snapshot(filter)?;
        compute_leaderboard(filter, log_length, &records, self.config.alpha)
    }
}

pub(crate) fn compute_leaderboard(
    filter: &LeaderboardFilter,
    log_length: usize,
    records: &[ComparisonRecord],
    alpha: f64,
) -> Result<LeaderboardPayload> {
    Ok(LeaderboardPayload { filter: filter.clone(), log_length, board: leaderboard(records, alpha)? })
}
