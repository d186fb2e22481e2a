use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    confidence_intervals, fit_bradley_terry, global_ranking, ComparisonRecord, FitConfig, FitFlag,
    Interval, Outcome, PolicyId, Result,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordCounts {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub policy: PolicyId,
    pub rank: usize,
    pub beta: f64,
    pub theta: f64,
    /// Absent when the fit is flagged as separated or diverged.
    pub interval: Option<Interval>,
    pub decisive: Option<bool>,
    pub records: RecordCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub alpha: f64,
    pub entries: Vec<LeaderboardEntry>,
    pub flags: BTreeSet<FitFlag>,
    pub iterations: usize,
    pub total_records: usize,
    pub decisive_records: usize,
}

/// Fits, bands and ranks `records` in one go. Policies that only appear in
/// ties are not ranked. A separated or diverged fit is still ordered by `β̂`
/// but carries no confidence bands, since they would be meaningless there.
pub fn leaderboard(records: &[ComparisonRecord], alpha: f64) -> Result<Leaderboard> {
    let report = fit_bradley_terry(records, &FitConfig::default())?;
    let est = &report.estimate;
    let mut counts: BTreeMap<&PolicyId, RecordCounts> = BTreeMap::new();
    for r in records {
        let (a, b) = (&r.policy_a, &r.policy_b);
        match r.outcome {
            Outcome::PreferA => {
                counts.entry(a).or_default().wins += 1;
                counts.entry(b).or_default().losses += 1;
            }
            Outcome::PreferB => {
                counts.entry(b).or_default().wins += 1;
                counts.entry(a).or_default().losses += 1;
            }
            Outcome::Tie => {
                counts.entry(a).or_default().ties += 1;
                counts.entry(b).or_default().ties += 1;
            }
        }
    }

    let bands_valid = est.centered_covariance.is_some() && report.flags.is_empty();
    let entries = if bands_valid {
        let band = confidence_intervals(est, alpha)?;
        global_ranking(est, &band)?
            .into_iter()
            .map(|r| LeaderboardEntry {
                records: counts.get(&r.policy).copied().unwrap_or_default(),
                policy: r.policy,
                rank: r.rank,
                beta: r.beta,
                theta: r.theta,
                interval: Some(r.interval),
                decisive: r.decisive,
            })
            .collect()
    } else {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(super::RankingError::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        let ids = est.policies.ids();
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&i, &j| est.betas[j].total_cmp(&est.betas[i]).then_with(|| ids[i].cmp(&ids[j])));
        order
            .iter()
            .enumerate()
            .map(|(pos, &i)| LeaderboardEntry {
                policy: ids[i].clone(),
                rank: pos + 1,
                beta: est.betas[i],
                theta: est.thetas[i],
                interval: None,
                decisive: None,
                records: counts.get(&ids[i]).copied().unwrap_or_default(),
            })
            .collect()
    };

    Ok(Leaderboard {
        alpha,
        entries,
        flags: report.flags.clone(),
        iterations: report.iterations,
        total_records: records.len(),
        decisive_records: records.iter().filter(|r| r.outcome.is_decisive()).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::ranking::RankingError;

    #[test]
    fn three_one_board() {
        let mut records = three_one();
        records.push(rec("A", "B", 0));
        let board = leaderboard(&records, 0.05).unwrap();
        let names: Vec<_> = board.entries.iter().map(|e| e.policy.as_str()).collect();
        assert_eq!(names, ["A", "B"]);
        assert!((board.entries[0].beta - board.entries[1].beta - 3f64.ln()).abs() < 1e-8);
        assert_eq!(board.entries[0].records, RecordCounts { wins: 3, losses: 1, ties: 1 });
        assert_eq!(board.entries[1].records, RecordCounts { wins: 1, losses: 3, ties: 1 });
        assert_eq!((board.total_records, board.decisive_records), (5, 4));
        assert!(board.entries[0].interval.is_some());
    }

    #[test]
    fn separated_board_has_no_bands() {
        let records = vec![rec("A", "B", 1), rec("B", "C", 1), rec("A", "C", 1)];
        let board = leaderboard(&records, 0.05).unwrap();
        assert!(board.flags.contains(&FitFlag::Separated));
        assert!(board.entries.iter().all(|e| e.interval.is_none()));
        let names: Vec<_> = board.entries.iter().map(|e| e.policy.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
    }

    #[test]
    fn all_ties_is_empty() {
        assert_eq!(leaderboard(&[rec("A", "B", 0)], 0.05).unwrap_err(), RankingError::EmptyDecisiveSet);
    }
}
