//! Bradley-Terry ranking over pairwise preference records.
//!
//! Records with outcome `+1` prefer `policy_a`, `-1` prefer `policy_b` and `0`
//! are ties. Ties are stored for completeness but never enter the likelihood.
//!
//! ```text
//! P(i ≻ j) = θ_i / (θ_i + θ_j),   β_i = ln θ_i
//! ```
//!
//! Abilities are fitted by Newton-Raphson on the log-ability scale, the
//! uncertainty comes from the sandwich estimator `H⁺ S H⁺` projected onto the
//! sum-zero subspace, and the global ranking is a sort by `β̂` with adjacent
//! non-overlapping confidence bands marked as decisive.

mod fit;
mod leaderboard;
mod likelihood;
mod uncertainty;

use std::collections::HashMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fit::{fit_bradley_terry, fit_bradley_terry_with, FitConfig, FitFlag, FitReport, Gauge};
pub use leaderboard::{leaderboard, Leaderboard, LeaderboardEntry, RecordCounts};
pub use likelihood::{bt_probability, fisher_information, log_likelihood, score_function};
pub use uncertainty::{
    centering_projector, confidence_intervals, global_ranking, pseudo_inverse_psd,
    sandwich_covariance, standard_normal_quantile, AbilityEstimate, ConfidenceBand, Interval,
    RankedPolicy, SANDWICH_GRADIENT_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no decisive comparisons to fit")]
    EmptyDecisiveSet,
    #[error("comparison graph is disconnected into {} components", components.len())]
    GraphDisconnected { components: Vec<Vec<PolicyId>> },
    #[error("abilities are not at a maximum-likelihood point (gradient norm {gradient_norm:e})")]
    NotAtOptimum { gradient_norm: f64 },
}

pub type Result<T> = std::result::Result<T, RankingError>;

/// Opaque, non-empty policy identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PolicyId(String);

impl PolicyId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(RankingError::InvalidArgument("policy id must be non-empty".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PolicyId {
    type Error = RankingError;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PolicyId> for String {
    fn from(value: PolicyId) -> Self {
        value.0
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Result of one pairwise judgment, serialized as the integer `1`, `0` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Outcome {
    PreferA,
    Tie,
    PreferB,
}

impl Outcome {
    pub fn is_decisive(self) -> bool {
        self != Outcome::Tie
    }

    pub fn reversed(self) -> Self {
        match self {
            Outcome::PreferA => Outcome::PreferB,
            Outcome::Tie => Outcome::Tie,
            Outcome::PreferB => Outcome::PreferA,
        }
    }
}

impl TryFrom<i8> for Outcome {
    type Error = RankingError;

    fn try_from(value: i8) -> Result<Self> {
        match value {
            1 => Ok(Outcome::PreferA),
            0 => Ok(Outcome::Tie),
            -1 => Ok(Outcome::PreferB),
            other => Err(RankingError::InvalidArgument(format!(
                "outcome must be one of -1, 0, 1 (got {other})"
            ))),
        }
    }
}

impl From<Outcome> for i8 {
    fn from(value: Outcome) -> Self {
        match value {
            Outcome::PreferA => 1,
            Outcome::Tie => 0,
            Outcome::PreferB => -1,
        }
    }
}

/// One double-blind pairwise human judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub policy_a: PolicyId,
    pub policy_b: PolicyId,
    pub outcome: Outcome,
    pub task: String,
    pub annotator: String,
    pub rationale: String,
    pub timestamp: DateTime<Utc>,
}

impl ComparisonRecord {
    /// Checks the structural invariants. `policy_a` and `policy_b` must differ.
    pub fn validate(&self) -> Result<()> {
        if self.policy_a == self.policy_b {
            return Err(RankingError::InvalidArgument(format!(
                "record compares policy {} with itself",
                self.policy_a
            )));
        }
        Ok(())
    }

    /// The same judgment with the sides swapped.
    pub fn swapped(&self) -> Self {
        Self {
            policy_a: self.policy_b.clone(),
            policy_b: self.policy_a.clone(),
            outcome: self.outcome.reversed(),
            ..self.clone()
        }
    }

    /// The same sides with winner and loser exchanged.
    pub fn relabeled(&self) -> Self {
        Self {
            outcome: self.outcome.reversed(),
            ..self.clone()
        }
    }
}

/// Ordered set of policies; the position of an id is its index into `β`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicySet {
    ids: Vec<PolicyId>,
    index: HashMap<PolicyId, usize>,
}

impl PolicySet {
    pub fn new(ids: impl IntoIterator<Item = PolicyId>) -> Result<Self> {
        let mut set = Self::default();
        for id in ids {
            if set.index.contains_key(&id) {
                return Err(RankingError::InvalidArgument(format!("duplicate policy id {id}")));
            }
            set.index.insert(id.clone(), set.ids.len());
            set.ids.push(id);
        }
        Ok(set)
    }

    /// Every policy that takes part in at least one decisive record, sorted by id.
    pub fn from_decisive(records: &[ComparisonRecord]) -> Self {
        let mut ids: Vec<PolicyId> = records
            .iter()
            .filter(|r| r.outcome.is_decisive())
            .flat_map(|r| [r.policy_a.clone(), r.policy_b.clone()])
            .collect();
        ids.sort();
        ids.dedup();
        Self::new(ids).expect("ids are deduplicated")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[PolicyId] {
        &self.ids
    }

    pub fn index_of(&self, id: &PolicyId) -> Option<usize> {
        self.index.get(id).copied()
    }
}

/// A decisive record resolved to policy indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Decisive {
    pub a: usize,
    pub b: usize,
    pub a_won: bool,
}

/// Resolves decisive records against `policies`, preserving input order. Ties
/// are skipped before lookup, so they may name policies outside the set.
pub(crate) fn decisive_pairs(
    policies: &PolicySet,
    records: &[ComparisonRecord],
) -> Result<Vec<Decisive>> {
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        record.validate()?;
        if !record.outcome.is_decisive() {
            continue;
        }
        let lookup = |id: &PolicyId| {
            policies
                .index_of(id)
                .ok_or_else(|| RankingError::InvalidArgument(format!("unknown policy id {id}")))
        };
        let a = lookup(&record.policy_a)?;
        let b = lookup(&record.policy_b)?;
        match record.outcome {
            Outcome::PreferA => out.push(Decisive { a, b, a_won: true }),
            Outcome::PreferB => out.push(Decisive { a, b, a_won: false }),
            Outcome::Tie => {}
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn outcome_serializes_as_integer() {
        let r = rec("A", "B", -1);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["outcome"], -1);
        let back: ComparisonRecord = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn outcome_out_of_range_rejected() {
        let mut json = serde_json::to_value(rec("A", "B", 1)).unwrap();
        json["outcome"] = 2.into();
        assert!(serde_json::from_value::<ComparisonRecord>(json).is_err());
    }

    #[test]
    fn empty_policy_id_rejected() {
        assert!(PolicyId::new("").is_err());
        assert!(serde_json::from_str::<PolicyId>("\"\"").is_err());
    }

    #[test]
    fn self_comparison_rejected() {
        let set = PolicySet::new([pid("A")]).unwrap();
        let err = decisive_pairs(&set, &[rec("A", "A", 1)]).unwrap_err();
        assert!(matches!(err, RankingError::InvalidArgument(_)));
    }

    #[test]
    fn policy_set_from_decisive_skips_tie_only_policies() {
        let records = vec![rec("B", "A", 1), rec("C", "A", 0)];
        let set = PolicySet::from_decisive(&records);
        assert_eq!(set.ids(), &[pid("A"), pid("B")]);
    }

    #[test]
    fn duplicate_policy_rejected() {
        assert!(PolicySet::new([pid("A"), pid("A")]).is_err());
    }
}
