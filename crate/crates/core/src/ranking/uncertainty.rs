use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::fit::Gauge;
use super::likelihood::{fisher, residual, score};
use super::{decisive_pairs, ComparisonRecord, Decisive, PolicyId, PolicySet, RankingError, Result};

/// Largest score ∞-norm at which `β` is accepted as a maximum-likelihood point
/// for the sandwich estimator.
pub const SANDWICH_GRADIENT_THRESHOLD: f64 = 1e-6;

/// Relative eigenvalue cutoff for the pseudo-inverse of the Fisher information.
const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AbilityEstimate {
    pub policies: PolicySet,
    /// Log-abilities, summing to zero.
    pub betas: DVector<f64>,
    /// `θ_i = exp(β_i)`.
    pub thetas: DVector<f64>,
    /// Centered sandwich covariance `Ṽ`; present only at a maximum-likelihood point.
    pub centered_covariance: Option<DMatrix<f64>>,
    pub gauge: Gauge,
}

impl AbilityEstimate {
    pub fn new(
        policies: PolicySet,
        betas: DVector<f64>,
        centered_covariance: Option<DMatrix<f64>>,
        gauge: Gauge,
    ) -> Self {
        let thetas = betas.map(f64::exp);
        Self {
            policies,
            betas,
            thetas,
            centered_covariance,
            gauge,
        }
    }

    pub fn beta(&self, id: &PolicyId) -> Option<f64> {
        self.policies.index_of(id).map(|i| self.betas[i])
    }
}

/// `A = I − (1/N)·11ᵀ`.
pub fn centering_projector(n: usize) -> DMatrix<f64> {
    let inv = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - inv } else { -inv })
}

/// Moore-Penrose inverse of a symmetric positive semidefinite matrix through
/// its eigendecomposition; eigenvalues at or below `1e-12·λ_max` are zeroed.
pub fn pseudo_inverse_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.max();
    if !(lambda_max > 0.0) {
        return DMatrix::zeros(n, n);
    }
    let cutoff = PINV_RELATIVE_CUTOFF * lambda_max;
    let inv = eig.eigenvalues.map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&inv) * q.transpose();
    symmetrize(out)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Centered robust covariance `Ṽ = A·H⁺ S H⁺·Aᵀ` of the log-abilities.
///
/// `betas_at_mle` must have a score ∞-norm of at most
/// [`SANDWICH_GRADIENT_THRESHOLD`].
pub fn sandwich_covariance(
    policies: &PolicySet,
    records: &[ComparisonRecord],
    betas_at_mle: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if betas_at_mle.len() != policies.len() {
        return Err(RankingError::InvalidArgument(format!(
            "expected {} log-abilities, got {}",
            policies.len(),
            betas_at_mle.len()
        )));
    }
    let pairs = decisive_pairs(policies, records)?;
    let gradient_norm = score(&pairs, betas_at_mle).amax();
    if !(gradient_norm <= SANDWICH_GRADIENT_THRESHOLD) {
        return Err(RankingError::NotAtOptimum { gradient_norm });
    }
    Ok(sandwich_from_pairs(&pairs, betas_at_mle))
}

pub(crate) fn sandwich_from_pairs(pairs: &[Decisive], betas: &DVector<f64>) -> DMatrix<f64> {
    let n = betas.len();
    let mut meat = DMatrix::zeros(n, n);
    for p in pairs {
        let r = residual(p, betas);
        let w = r * r;
        meat[(p.a, p.a)] += w;
        meat[(p.b, p.b)] += w;
        meat[(p.a, p.b)] -= w;
        meat[(p.b, p.a)] -= w;
    }
    let bread = pseudo_inverse_psd(&fisher(pairs, betas));
    let v = &bread * meat * &bread;
    let a = centering_projector(n);
    symmetrize(&a * v * a.transpose())
}

/// `Φ⁻¹(p)` for the standard normal distribution.
pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub policies: Vec<PolicyId>,
    pub alpha: f64,
    /// `z_{1−α/2}`.
    pub z: f64,
    pub intervals: Vec<Interval>,
}

/// Per-policy `β̂_i ± z_{1−α/2}·√Ṽ_ii`.
pub fn confidence_intervals(estimate: &AbilityEstimate, alpha: f64) -> Result<ConfidenceBand> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RankingError::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let cov = estimate.centered_covariance.as_ref().ok_or_else(|| {
        RankingError::InvalidArgument("estimate carries no covariance".into())
    })?;
    let z = standard_normal_quantile(1.0 - alpha / 2.0);
    let intervals = estimate
        .betas
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let half = z * cov[(i, i)].max(0.0).sqrt();
            Interval {
                lower: b - half,
                upper: b + half,
            }
        })
        .collect();
    Ok(ConfidenceBand {
        policies: estimate.policies.ids().to_vec(),
        alpha,
        z,
        intervals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPolicy {
    pub policy: PolicyId,
    /// 1-based position.
    pub rank: usize,
    pub beta: f64,
    pub theta: f64,
    pub interval: Interval,
    /// Whether this policy's band is disjoint from the next-ranked policy's;
    /// `None` for the last entry.
    pub decisive: Option<bool>,
}

/// Sorts policies by `β̂` descending (ties by id) and marks adjacent pairs
/// whose confidence bands do not overlap.
pub fn global_ranking(
    estimate: &AbilityEstimate,
    band: &ConfidenceBand,
) -> Result<Vec<RankedPolicy>> {
    if band.policies != estimate.policies.ids() || band.intervals.len() != estimate.betas.len() {
        return Err(RankingError::InvalidArgument(
            "estimate and confidence band cover different policies".into(),
        ));
    }
    let ids = estimate.policies.ids();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&i, &j| {
        estimate.betas[j]
            .partial_cmp(&estimate.betas[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[i].cmp(&ids[j]))
    });
    let ranked = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| RankedPolicy {
            policy: ids[i].clone(),
            rank: pos + 1,
            beta: estimate.betas[i],
            theta: estimate.thetas[i],
            interval: band.intervals[i],
            decisive: order
                .get(pos + 1)
                .map(|&next| !band.intervals[i].overlaps(&band.intervals[next])),
        })
        .collect();
    Ok(ranked)
}
