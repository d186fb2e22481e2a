use nalgebra::{DMatrix, DVector};

use super::{decisive_pairs, ComparisonRecord, Decisive, PolicySet, RankingError, Result};

/// Probability that a policy with log-ability `beta_i` is preferred over one
/// with `beta_j`.
pub fn bt_probability(beta_i: f64, beta_j: f64) -> Result<f64> {
    if !beta_i.is_finite() || !beta_j.is_finite() {
        return Err(RankingError::InvalidArgument(
            "log-abilities must be finite".into(),
        ));
    }
    Ok(sigmoid(beta_i - beta_j))
}

pub(crate) fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(d)` without overflow for large `|d|`.
pub(crate) fn log_sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        -(-d).exp().ln_1p()
    } else {
        d - d.exp().ln_1p()
    }
}

fn check_betas(policies: &PolicySet, betas: &DVector<f64>) -> Result<()> {
    if betas.len() != policies.len() {
        return Err(RankingError::InvalidArgument(format!(
            "expected {} log-abilities, got {}",
            policies.len(),
            betas.len()
        )));
    }
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(RankingError::InvalidArgument(
            "log-abilities must be finite".into(),
        ));
    }
    Ok(())
}

/// Log-likelihood of the decisive records; ties contribute nothing.
pub fn log_likelihood(
    policies: &PolicySet,
    records: &[ComparisonRecord],
    betas: &DVector<f64>,
) -> Result<f64> {
    check_betas(policies, betas)?;
    let pairs = decisive_pairs(policies, records)?;
    Ok(ll(&pairs, betas))
}

/// Gradient of [`log_likelihood`] with respect to `β`.
pub fn score_function(
    policies: &PolicySet,
    records: &[ComparisonRecord],
    betas: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_betas(policies, betas)?;
    let pairs = decisive_pairs(policies, records)?;
    Ok(score(&pairs, betas))
}

/// Observed Fisher information (negative Hessian of [`log_likelihood`]).
pub fn fisher_information(
    policies: &PolicySet,
    records: &[ComparisonRecord],
    betas: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_betas(policies, betas)?;
    let pairs = decisive_pairs(policies, records)?;
    Ok(fisher(&pairs, betas))
}

pub(crate) fn ll(pairs: &[Decisive], betas: &DVector<f64>) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let d = betas[p.a] - betas[p.b];
            if p.a_won {
                log_sigmoid(d)
            } else {
                log_sigmoid(-d)
            }
        })
        .sum()
}

/// Per-record score contribution `(𝟙[a won] − p_ab)`; the vector is this value
/// at `a` and its negation at `b`.
pub(crate) fn residual(p: &Decisive, betas: &DVector<f64>) -> f64 {
    let prob = sigmoid(betas[p.a] - betas[p.b]);
    let y = if p.a_won { 1.0 } else { 0.0 };
    y - prob
}

pub(crate) fn score(pairs: &[Decisive], betas: &DVector<f64>) -> DVector<f64> {
    let mut u = DVector::zeros(betas.len());
    for p in pairs {
        let r = residual(p, betas);
        u[p.a] += r;
        u[p.b] -= r;
    }
    u
}

pub(crate) fn fisher(pairs: &[Decisive], betas: &DVector<f64>) -> DMatrix<f64> {
    let n = betas.len();
    let mut h = DMatrix::zeros(n, n);
    for p in pairs {
        let prob = sigmoid(betas[p.a] - betas[p.b]);
        let w = prob * (1.0 - prob);
        h[(p.a, p.a)] += w;
        h[(p.b, p.b)] += w;
        h[(p.a, p.b)] -= w;
        h[(p.b, p.a)] -= w;
    }
    h
}
