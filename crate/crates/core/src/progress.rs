//! Per-frame task-progress scores from an external scorer.
//!
//! Frames are sent to the scorer in shuffled order with the initial frame
//! prepended as a zero-progress reference. Returned scores are mapped back to
//! temporal order, the reference is split off, and the series is reduced to a
//! single number (final 30% of frames by default).

use rand::rngs::ChaCha8Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_SCORE: f64 = 0.0;
pub const MAX_SCORE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgressError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
}

pub type Result<T> = std::result::Result<T, ProgressError>;

fn invalid(msg: impl Into<String>) -> ProgressError {
    ProgressError::InvalidArgument(msg.into())
}

/// Ordered progress scores for one execution video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct FrameScoreSeries {
    execution_id: String,
    frame_indices: Vec<u64>,
    scores: Vec<f64>,
    #[serde(skip)]
    clamped: bool,
}

#[derive(Deserialize)]
struct RawSeries {
    execution_id: String,
    frame_indices: Vec<u64>,
    scores: Vec<f64>,
}

impl TryFrom<RawSeries> for FrameScoreSeries {
    type Error = ProgressError;

    fn try_from(raw: RawSeries) -> Result<Self> {
        Self::new(raw.execution_id, raw.frame_indices, raw.scores)
    }
}

impl FrameScoreSeries {
    /// Builds a series, clamping out-of-range scores into `[0, 100]`.
    /// [`FrameScoreSeries::was_clamped`] reports whether any score moved.
    pub fn new(
        execution_id: impl Into<String>,
        frame_indices: Vec<u64>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(invalid("score series must be non-empty"));
        }
        if scores.len() != frame_indices.len() {
            return Err(invalid(format!(
                "{} scores for {} frame indices",
                scores.len(),
                frame_indices.len()
            )));
        }
        if frame_indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("frame indices must be strictly increasing"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(invalid("scores must be finite"));
        }
        let mut clamped = false;
        let scores = scores
            .into_iter()
            .map(|s| {
                let c = s.clamp(MIN_SCORE, MAX_SCORE);
                clamped |= c != s;
                c
            })
            .collect();
        Ok(Self {
            execution_id: execution_id.into(),
            frame_indices,
            scores,
            clamped,
        })
    }

    /// Series with frame indices `0..scores.len()`.
    pub fn from_scores(execution_id: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        let indices = (0..scores.len() as u64).collect();
        Self::new(execution_id, indices, scores)
    }

    pub fn execution_id(&self) -> &str {
        &self.execution_id
    }

    pub fn frame_indices(&self) -> &[u64] {
        &self.frame_indices
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }
}

/// Order in which frames are transmitted to the scorer.
///
/// Frame `i` of the original sequence is sent at shuffled position
/// `permutation[i]`; the zero-progress reference sits at
/// `zero_reference_index` of the transmitted list (always 0, it is prepended).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShufflePlan {
    pub permutation: Vec<usize>,
    pub seed: u64,
    pub zero_reference_index: usize,
}

/// Seeded Fisher-Yates shuffle over `frame_count` positions.
pub fn make_shuffle_plan(frame_count: usize, seed: u64) -> Result<ShufflePlan> {
    if frame_count == 0 {
        return Err(invalid("frame_count must be at least 1"));
    }
    let mut permutation: Vec<usize> = (0..frame_count).collect();
    permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(ShufflePlan {
        permutation,
        seed,
        zero_reference_index: 0,
    })
}

impl ShufflePlan {
    pub fn frame_count(&self) -> usize {
        self.permutation.len()
    }

    /// Length of the transmitted list, reference included.
    pub fn transmitted_len(&self) -> usize {
        self.permutation.len() + 1
    }

    /// Arranges `frames` (temporal order) and the reference into the
    /// transmitted order.
    pub fn transmission_order<T: Clone>(&self, zero_reference: T, frames: &[T]) -> Result<Vec<T>> {
        if frames.len() != self.permutation.len() {
            return Err(invalid(format!(
                "plan covers {} frames, got {}",
                self.permutation.len(),
                frames.len()
            )));
        }
        let mut slots: Vec<Option<T>> = vec![None; self.transmitted_len()];
        slots[self.zero_reference_index] = Some(zero_reference);
        for (i, frame) in frames.iter().enumerate() {
            slots[self.slot_of(i)] = Some(frame.clone());
        }
        Ok(slots.into_iter().map(|s| s.expect("plan is a bijection")).collect())
    }

    /// Transmitted position of original frame `i`.
    fn slot_of(&self, i: usize) -> usize {
        let pos = self.permutation[i];
        if pos >= self.zero_reference_index {
            pos + 1
        } else {
            pos
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeshuffledScores {
    pub series: FrameScoreSeries,
    /// Score returned for the zero-progress reference; diagnostic only.
    pub zero_reference_score: f64,
}

/// Maps scores from transmitted order back to temporal order.
///
/// `transmitted_scores` includes the reference entry, so its length must be
/// `plan.frame_count() + 1`.
pub fn deshuffle_scores(
    execution_id: impl Into<String>,
    frame_indices: Vec<u64>,
    transmitted_scores: &[f64],
    plan: &ShufflePlan,
) -> Result<DeshuffledScores> {
    if transmitted_scores.len() != plan.transmitted_len() {
        return Err(invalid(format!(
            "expected {} scores (reference included), got {}",
            plan.transmitted_len(),
            transmitted_scores.len()
        )));
    }
    let scores = (0..plan.frame_count())
        .map(|i| transmitted_scores[plan.slot_of(i)])
        .collect();
    Ok(DeshuffledScores {
        series: FrameScoreSeries::new(execution_id, frame_indices, scores)?,
        zero_reference_score: transmitted_scores[plan.zero_reference_index],
    })
}

/// Request sent to the external progress scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerRequest {
    pub execution_id: String,
    pub instruction: String,
    /// Image URIs in transmitted order.
    pub frames: Vec<String>,
    pub zero_reference_position: usize,
}

impl ScorerRequest {
    pub fn build(
        execution_id: impl Into<String>,
        instruction: impl Into<String>,
        zero_reference_uri: &str,
        frame_uris: &[String],
        plan: &ShufflePlan,
    ) -> Result<Self> {
        Ok(Self {
            execution_id: execution_id.into(),
            instruction: instruction.into(),
            frames: plan.transmission_order(zero_reference_uri.to_string(), frame_uris)?,
            zero_reference_position: plan.zero_reference_index,
        })
    }
}

/// Scorer reply; scores are in transmitted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggregationMethod {
    FullMean,
    /// Mean of the last 30% of frames.
    #[default]
    #[serde(rename = "FINAL_30")]
    Final30,
    /// Mean of the highest-scored 30% of frames.
    #[serde(rename = "TOP_30")]
    Top30,
}

impl std::str::FromStr for AggregationMethod {
    type Err = ProgressError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "FULL_MEAN" => Ok(Self::FullMean),
            "FINAL_30" | "FINAL30" => Ok(Self::Final30),
            "TOP_30" | "TOP30" => Ok(Self::Top30),
            _ => Err(invalid(format!("unknown aggregation method {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub value: f64,
    pub method: AggregationMethod,
}

/// `max(1, round(0.3·T))`, rounding half up, in integer arithmetic.
pub fn window_size(frame_count: usize) -> usize {
    ((3 * frame_count + 5) / 10).max(1)
}

pub fn aggregate(series: &FrameScoreSeries, method: AggregationMethod) -> Result<AggregateScore> {
    let scores = series.scores();
    if scores.is_empty() {
        return Err(invalid("cannot aggregate an empty series"));
    }
    let k = window_size(scores.len());
    let value = match method {
        AggregationMethod::FullMean => mean(scores),
        AggregationMethod::Final30 => mean(&scores[scores.len() - k..]),
        AggregationMethod::Top30 => {
            let mut sorted = scores.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            mean(&sorted[..k])
        }
    };
    Ok(AggregateScore { value, method })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean: sample standard deviation (`n − 1`) over `√n`.
pub fn sem(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(ProgressError::InsufficientSamples(n));
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Ok((ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}
