use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use super::likelihood::{fisher, ll, score};
use super::uncertainty::{sandwich_from_pairs, AbilityEstimate, SANDWICH_GRADIENT_THRESHOLD};
use super::{decisive_pairs, ComparisonRecord, Decisive, PolicyId, PolicySet, RankingError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Gauge {
    /// `Σ β_i = 0`.
    #[default]
    #[serde(rename = "sum-zero")]
    SumZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Convergence threshold on the ∞-norm of the score.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step halvings tried when a full Newton step lowers the likelihood.
    pub max_halvings: usize,
    pub gauge: Gauge,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
            max_halvings: 30,
            gauge: Gauge::SumZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitFlag {
    /// The gradient did not reach the tolerance within the iteration cap.
    Diverged,
    /// Some proper subset of policies never lost to the rest, so the MLE
    /// lies at infinity along that direction.
    Separated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub estimate: AbilityEstimate,
    pub iterations: usize,
    /// ∞-norm of the score at the returned `β`.
    pub final_gradient_norm: f64,
    pub flags: BTreeSet<FitFlag>,
}

impl FitReport {
    pub fn converged(&self) -> bool {
        !self.flags.contains(&FitFlag::Diverged)
    }
}

impl Serialize for FitReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Export<'a> {
            policies: &'a [PolicyId],
            betas: Vec<f64>,
            thetas: Vec<f64>,
            /// Row-major `N×N`, absent when the fit did not reach an optimum.
            covariance: Option<Vec<f64>>,
            gauge: Gauge,
            flags: &'a BTreeSet<FitFlag>,
            iterations: usize,
            final_gradient_norm: f64,
        }
        let est = &self.estimate;
        Export {
            policies: est.policies.ids(),
            betas: est.betas.iter().copied().collect(),
            thetas: est.thetas.iter().copied().collect(),
            covariance: est.centered_covariance.as_ref().map(row_major),
            gauge: est.gauge,
            flags: &self.flags,
            iterations: self.iterations,
            final_gradient_norm: self.final_gradient_norm,
        }
        .serialize(serializer)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()
}

/// Fits the Bradley-Terry model over every policy that appears in a decisive
/// record (policies ordered by id).
pub fn fit_bradley_terry(records: &[ComparisonRecord], config: &FitConfig) -> Result<FitReport> {
    let policies = PolicySet::from_decisive(records);
    fit_bradley_terry_with(policies, records, config)
}

/// Fits the Bradley-Terry model over an explicit policy set. Every policy in
/// the set must be connected to the others through decisive records.
pub fn fit_bradley_terry_with(
    policies: PolicySet,
    records: &[ComparisonRecord],
    config: &FitConfig,
) -> Result<FitReport> {
    if !(config.tolerance > 0.0) || config.max_iterations == 0 {
        return Err(RankingError::InvalidArgument(
            "tolerance must be positive and max_iterations at least 1".into(),
        ));
    }
    let pairs = decisive_pairs(&policies, records)?;
    if pairs.is_empty() {
        return Err(RankingError::EmptyDecisiveSet);
    }
    let components = connected_components(policies.len(), &pairs);
    if components.len() > 1 {
        return Err(RankingError::GraphDisconnected {
            components: components
                .into_iter()
                .map(|c| c.into_iter().map(|i| policies.ids()[i].clone()).collect())
                .collect(),
        });
    }

    let mut flags = BTreeSet::new();
    if is_separated(policies.len(), &pairs) {
        flags.insert(FitFlag::Separated);
    }

    let n = policies.len();
    let mut betas = DVector::zeros(n);
    let mut iterations = 0;
    let augment = DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut current_ll = ll(&pairs, &betas);

    while iterations < config.max_iterations {
        let u = score(&pairs, &betas);
        if u.amax() <= config.tolerance {
            break;
        }
        let system = fisher(&pairs, &betas) + &augment;
        let Some(chol) = system.cholesky() else {
            break;
        };
        let step = chol.solve(&u);
        if step.iter().any(|s| !s.is_finite()) {
            break;
        }

        let slack = 1e-14 * current_ll.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let candidate = recenter(&betas + &step * scale);
            let candidate_ll = ll(&pairs, &candidate);
            if candidate_ll >= current_ll - slack {
                accepted = Some((candidate, candidate_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            break;
        };
        betas = next;
        current_ll = next_ll;
        iterations += 1;
    }

    let final_gradient_norm = score(&pairs, &betas).amax();
    if !(final_gradient_norm <= config.tolerance) {
        flags.insert(FitFlag::Diverged);
    }
    let centered_covariance = (final_gradient_norm <= SANDWICH_GRADIENT_THRESHOLD)
        .then(|| sandwich_from_pairs(&pairs, &betas));

    Ok(FitReport {
        estimate: AbilityEstimate::new(policies, betas, centered_covariance, config.gauge),
        iterations,
        final_gradient_norm,
        flags,
    })
}

fn recenter(mut betas: DVector<f64>) -> DVector<f64> {
    let mean = betas.mean();
    betas.add_scalar_mut(-mean);
    betas
}

/// Components of the undirected comparison graph, each sorted, ordered by
/// smallest member.
fn connected_components(n: usize, pairs: &[Decisive]) -> Vec<Vec<usize>> {
    let mut adjacency = vec![Vec::new(); n];
    for p in pairs {
        adjacency[p.a].push(p.b);
        adjacency[p.b].push(p.a);
    }
    let mut component = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        component[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if component[w] == usize::MAX {
                    component[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// A nonempty proper subset with no losses to its complement exists exactly
/// when the "beat" digraph is not strongly connected.
fn is_separated(n: usize, pairs: &[Decisive]) -> bool {
    if n < 2 {
        return false;
    }
    let mut forward = vec![Vec::new(); n];
    let mut backward = vec![Vec::new(); n];
    for p in pairs {
        let (winner, loser) = if p.a_won { (p.a, p.b) } else { (p.b, p.a) };
        forward[winner].push(loser);
        backward[loser].push(winner);
    }
    let reach_all = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    !(reach_all(&forward) && reach_all(&backward))
}
