//! PD gain identification by simulated annealing.
//!
//! A [`Plant`] maps gains and a joint command sequence to an end-effector
//! trajectory. [`anneal_gains`] searches the gain box for the pair whose
//! simulated trajectories best match recorded ones under [`trajectory_loss`].
//! [`ReferencePlant`] is a small analytic stand-in for a physics engine.

use log::warn;
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::rngs::ChaCha8Rng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SysIdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical instability at integration step {step}")]
    NumericalInstability { step: usize },
    #[error("plant failed: {0}")]
    Plant(String),
    #[error("all {attempts} candidate evaluations failed")]
    OptimizationFailed { attempts: usize },
}

pub type Result<T> = std::result::Result<T, SysIdError>;

fn invalid(msg: impl Into<String>) -> SysIdError {
    SysIdError::InvalidArgument(msg.into())
}

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !(err <= ORTHONORMAL_TOLERANCE) || !((r.determinant() - 1.0).abs() <= ORTHONORMAL_TOLERANCE) {
        return Err(invalid(format!("not a rotation matrix (orthonormality error {err:.3e})")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub kp: (f64, f64),
    pub kd: (f64, f64),
}

impl Default for GainBounds {
    fn default() -> Self {
        Self { kp: (2000.0, 15000.0), kd: (10.0, 2000.0) }
    }
}

impl GainBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("kp", self.kp), ("kd", self.kd)] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return Err(invalid(format!("{name} bounds [{lo}, {hi}] are degenerate")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, g: &PdGains) -> bool {
        (self.kp.0..=self.kp.1).contains(&g.kp) && (self.kd.0..=self.kd.1).contains(&g.kd)
    }

    pub fn midpoint(&self) -> PdGains {
        PdGains { kp: 0.5 * (self.kp.0 + self.kp.1), kd: 0.5 * (self.kd.0 + self.kd.1) }
    }

    pub fn clip(&self, g: PdGains) -> PdGains {
        PdGains { kp: g.kp.clamp(self.kp.0, self.kp.1), kd: g.kd.clamp(self.kd.0, self.kd.1) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EePoseTrajectory {
    positions: Vec<Vector3<f64>>,
    rotations: Vec<Matrix3<f64>>,
}

impl EePoseTrajectory {
    pub fn new(positions: Vec<Vector3<f64>>, rotations: Vec<Matrix3<f64>>) -> Result<Self> {
        if positions.len() != rotations.len() {
            return Err(invalid(format!(
                "{} positions but {} orientations",
                positions.len(),
                rotations.len()
            )));
        }
        for r in &rotations {
            check_rotation(r)?;
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(invalid("non-finite position"));
        }
        Ok(Self { positions, rotations })
    }

    /// Trajectory with identity orientation throughout.
    pub fn from_positions(positions: Vec<Vector3<f64>>) -> Self {
        let rotations = vec![Matrix3::identity(); positions.len()];
        Self { positions, rotations }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn rotations(&self) -> &[Matrix3<f64>] {
        &self.rotations
    }
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// Joint angles; a trailing gripper channel may be present.
    pub q: Vec<f64>,
    pub x: [f64; 3],
    /// `(w, x, y, z)`.
    pub quat: [f64; 4],
}

impl TrajectoryRecord {
    pub fn rotation(&self) -> Result<Matrix3<f64>> {
        let [w, x, y, z] = self.quat;
        let q = Quaternion::new(w, x, y, z);
        if !((q.norm() - 1.0).abs() <= ORTHONORMAL_TOLERANCE) {
            return Err(invalid(format!("quaternion norm {} at t={}", q.norm(), self.t)));
        }
        Ok(*UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix())
    }
}

impl EePoseTrajectory {
    pub fn from_records(records: &[TrajectoryRecord]) -> Result<Self> {
        let positions = records.iter().map(|r| Vector3::from(r.x)).collect();
        let rotations = records.iter().map(TrajectoryRecord::rotation).collect::<Result<_>>()?;
        Self::new(positions, rotations)
    }
}

/// `arcsin(‖Ra − Rb‖_F / (2√2))`, which is half the geodesic angle between
/// the two rotations.
///
/// Evaluated as `½·atan2(sin φ, cos φ)` on `M = Ra·Rbᵀ`, with
/// `sin φ = ‖M − Mᵀ‖_F / (2√2)` and `cos φ = (tr M − 1) / 2`, so the result
/// stays accurate near `φ = π` where the arcsine is ill-conditioned.
pub fn rotation_distance(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> Result<f64> {
    check_rotation(ra)?;
    check_rotation(rb)?;
    Ok(rotation_term(ra, rb))
}

fn rotation_term(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let m = ra * rb.transpose();
    let sin = (m - m.transpose()).norm() / (2.0 * std::f64::consts::SQRT_2);
    let cos = (m.trace() - 1.0) / 2.0;
    0.5 * sin.atan2(cos)
}

/// Sum over time of position error plus [`rotation_distance`].
pub fn trajectory_loss(gt: &EePoseTrajectory, sim: &EePoseTrajectory) -> Result<f64> {
    if gt.len() != sim.len() {
        return Err(invalid(format!("trajectory lengths differ: {} vs {}", gt.len(), sim.len())));
    }
    Ok((0..gt.len())
        .map(|t| {
            (gt.positions[t] - sim.positions[t]).norm() + rotation_term(&gt.rotations[t], &sim.rotations[t])
        })
        .sum())
}

/// Joint targets sampled every `period` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCommands {
    pub period: f64,
    pub targets: Vec<Vector3<f64>>,
}

/// Simulator seam: deterministic for fixed inputs.
pub trait Plant {
    /// Returns one end-effector pose per command sample.
    fn simulate(&self, gains: &PdGains, commands: &JointCommands) -> Result<EePoseTrajectory>;
}

/// Three decoupled point masses under PD control, `m ẍ = kp (x_cmd − x) − kd ẋ`,
/// with orientation fixed at identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePlant {
    pub mass: f64,
    pub dt: f64,
}

impl Default for ReferencePlant {
    fn default() -> Self {
        Self { mass: 10.0, dt: 0.002 }
    }
}

const BLOW_UP: f64 = 1e6;

impl ReferencePlant {
    fn substeps(&self, period: f64) -> Result<usize> {
        if !(self.dt > 0.0 && self.mass > 0.0) {
            return Err(invalid("dt and mass must be positive"));
        }
        let ratio = period / self.dt;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(format!("command period {period} is not a multiple of dt {}", self.dt)));
        }
        Ok(n as usize)
    }
}

impl Plant for ReferencePlant {
    fn simulate(&self, gains: &PdGains, commands: &JointCommands) -> Result<EePoseTrajectory> {
        let sub = self.substeps(commands.period)?;
        let dense = reference_plant(gains, commands, self.dt, self.mass)?;
        let positions = dense.positions.iter().step_by(sub).copied().collect();
        Ok(EePoseTrajectory::from_positions(positions))
    }
}

/// Integrates the reference plant with semi-implicit Euler and returns the
/// state at every integration step, starting at rest on the first target.
/// Over `(k·P, (k+1)·P]` the controller tracks `targets[k+1]`.
pub fn reference_plant(
    gains: &PdGains,
    commands: &JointCommands,
    dt: f64,
    mass: f64,
) -> Result<EePoseTrajectory> {
    let plant = ReferencePlant { mass, dt };
    let sub = plant.substeps(commands.period)?;
    let Some(first) = commands.targets.first() else {
        return Err(invalid("empty command sequence"));
    };
    let mut x = *first;
    let mut v = Vector3::zeros();
    let mut out = Vec::with_capacity((commands.targets.len() - 1) * sub + 1);
    out.push(x);
    for target in &commands.targets[1..] {
        for _ in 0..sub {
            let a = (gains.kp * (target - x) - gains.kd * v) / mass;
            v += a * dt;
            x += v * dt;
            if x.amax() > BLOW_UP || !x.iter().all(|c| c.is_finite()) {
                return Err(SysIdError::NumericalInstability { step: out.len() });
            }
            out.push(x);
        }
    }
    Ok(EePoseTrajectory::from_positions(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    /// Number of proposals after the initial evaluation.
    pub steps: usize,
    /// Starting temperature; `None` uses the loss of the initial candidate.
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
    /// Proposal standard deviation as a fraction of each gain range.
    pub sigma_fraction: f64,
    /// Return to the best-so-far after this many steps without improvement.
    pub restart_after: usize,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            initial_temperature: None,
            cooling: 0.999,
            sigma_fraction: 0.05,
            restart_after: 1000,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(invalid("cooling must lie in (0, 1)"));
        }
        if !(self.sigma_fraction > 0.0 && self.sigma_fraction.is_finite()) {
            return Err(invalid("sigma fraction must be positive"));
        }
        if let Some(t) = self.initial_temperature {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(invalid("initial temperature must be non-negative"));
            }
        }
        Ok(())
    }
}

/// A command sequence paired with the trajectory it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub commands: JointCommands,
    pub ground_truth: EePoseTrajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealResult {
    pub gains: PdGains,
    pub loss: f64,
    /// Best loss so far: entry 0 after the initial candidate, entry `k` after
    /// proposal `k`. Infinite until some candidate evaluates successfully.
    pub trace: Vec<f64>,
    pub accepted: usize,
    pub failed_evaluations: usize,
}

/// Mean trajectory loss over episodes, summed in order.
pub fn mean_episode_loss<P: Plant + ?Sized>(plant: &P, gains: &PdGains, episodes: &[Episode]) -> Result<f64> {
    let mut total = 0.0;
    for e in episodes {
        let sim = plant.simulate(gains, &e.commands)?;
        total += trajectory_loss(&e.ground_truth, &sim)?;
    }
    Ok(total / episodes.len() as f64)
}

/// Simulated annealing over `(kp, kd)` starting at the middle of the bounds.
///
/// Proposals add independent Gaussian noise to each gain and are clipped to
/// the bounds. Improvements are always accepted, worsening moves with
/// probability `exp(−Δ/T_k)` where `T_k = T₀·γᵏ`. A candidate whose
/// evaluation fails is rejected and logged.
pub fn anneal_gains<P: Plant + ?Sized>(
    plant: &P,
    episodes: &[Episode],
    bounds: &GainBounds,
    config: &AnnealConfig,
) -> Result<AnnealResult> {
    bounds.validate()?;
    config.validate()?;
    if episodes.is_empty() {
        return Err(invalid("need at least one episode"));
    }
    let evaluate = |g: &PdGains| match mean_episode_loss(plant, g, episodes) {
        Ok(l) if l.is_finite() => Some(l),
        Ok(l) => {
            warn!("gains kp={} kd={} gave non-finite loss {l}", g.kp, g.kd);
            None
        }
        Err(e) => {
            warn!("gains kp={} kd={} rejected: {e}", g.kp, g.kd);
            None
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sigma_kp = config.sigma_fraction * (bounds.kp.1 - bounds.kp.0);
    let sigma_kd = config.sigma_fraction * (bounds.kd.1 - bounds.kd.0);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut current = bounds.midpoint();
    let mut current_loss = evaluate(&current);
    let mut failed = usize::from(current_loss.is_none());
    let mut best = current;
    let mut best_loss = current_loss.unwrap_or(f64::INFINITY);
    let mut temperature = config.initial_temperature.or(current_loss);
    let mut trace = Vec::with_capacity(config.steps + 1);
    trace.push(best_loss);
    let mut accepted = 0;
    let mut stale = 0;

    for _ in 0..config.steps {
        let candidate = bounds.clip(PdGains {
            kp: current.kp + sigma_kp * noise.sample(&mut rng),
            kd: current.kd + sigma_kd * noise.sample(&mut rng),
        });
        let u: f64 = rng.random();
        match evaluate(&candidate) {
            None => failed += 1,
            Some(loss) => {
                let temp = *temperature.get_or_insert(loss);
                let take = match current_loss {
                    None => true,
                    Some(c) if loss <= c => true,
                    Some(c) => temp > 0.0 && u < (-(loss - c) / temp).exp(),
                };
                if take {
                    current = candidate;
                    current_loss = Some(loss);
                    accepted += 1;
                }
                if loss < best_loss {
                    best = candidate;
                    best_loss = loss;
                    stale = 0;
                }
            }
        }
        stale += 1;
        if stale > config.restart_after && best_loss.is_finite() {
            current = best;
            current_loss = Some(best_loss);
            stale = 0;
        }
        if let Some(t) = temperature.as_mut() {
            *t *= config.cooling;
        }
        trace.push(best_loss);
    }

    if !best_loss.is_finite() {
        return Err(SysIdError::OptimizationFailed { attempts: config.steps + 1 });
    }
    Ok(AnnealResult { gains: best, loss: best_loss, trace, accepted, failed_evaluations: failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn rz(a: f64) -> Matrix3<f64> {
        *Rotation3::from_axis_angle(&Vector3::z_axis(), a).matrix()
    }

    #[test]
    fn rotation_distance_examples() {
        let i = Matrix3::identity();
        assert_eq!(rotation_distance(&i, &i).unwrap(), 0.0);
        assert_abs_diff_eq!(rotation_distance(&i, &rz(PI / 2.0)).unwrap(), PI / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rotation_distance(&i, &rz(PI)).unwrap(), PI / 2.0, epsilon = 1e-7);
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(rotation_distance(&i, &skew).is_err());
    }

    fn rotation(axis: [f64; 3], angle: f64) -> Option<Matrix3<f64>> {
        let v = Vector3::from(axis);
        (v.norm() > 1e-3).then(|| *Rotation3::from_axis_angle(&Unit::new_normalize(v), angle).matrix())
    }

    proptest! {
        #[test]
        fn rotation_distance_is_half_angle(axis in prop::array::uniform3(-1.0f64..1.0), phi in 0.0f64..PI) {
            if let Some(r) = rotation(axis, phi) {
                let d = rotation_distance(&Matrix3::identity(), &r).unwrap();
                // arcsin loses precision near its upper end.
                let tol = if phi < PI - 1e-3 { 1e-9 } else { 1e-6 };
                prop_assert!((d - phi / 2.0).abs() < tol, "{d} vs {}", phi / 2.0);
            }
        }

        #[test]
        fn rotation_distance_is_bi_invariant(
            a in prop::array::uniform3(-1.0f64..1.0), pa in 0.0f64..PI,
            b in prop::array::uniform3(-1.0f64..1.0), pb in 0.0f64..PI,
            g in prop::array::uniform3(-1.0f64..1.0), pg in 0.0f64..PI,
        ) {
            if let (Some(ra), Some(rb), Some(rg)) = (rotation(a, pa), rotation(b, pb), rotation(g, pg)) {
                let d = rotation_distance(&ra, &rb).unwrap();
                prop_assert!((0.0..=PI / 2.0).contains(&d));
                prop_assert!((d - rotation_distance(&rb, &ra).unwrap()).abs() < 1e-15);
                prop_assert!((d - rotation_distance(&(rg * ra), &(rg * rb)).unwrap()).abs() < 1e-7);
                prop_assert!((d - rotation_distance(&(ra * rg), &(rb * rg)).unwrap()).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn trajectory_loss_examples() {
        let base: Vec<_> = (0..3).map(|t| Vector3::new(t as f64, 0.0, 1.0)).collect();
        let a = EePoseTrajectory::from_positions(base.clone());
        assert_eq!(trajectory_loss(&a, &a).unwrap(), 0.0);
        let shifted = EePoseTrajectory::from_positions(base.iter().map(|p| p + Vector3::y()).collect());
        assert_abs_diff_eq!(trajectory_loss(&a, &shifted).unwrap(), 3.0, epsilon = 1e-15);
        assert_eq!(trajectory_loss(&a, &shifted).unwrap(), trajectory_loss(&shifted, &a).unwrap());

        let p = vec![Vector3::zeros(); 4];
        let still = EePoseTrajectory::new(p.clone(), vec![Matrix3::identity(); 4]).unwrap();
        let turned = EePoseTrajectory::new(p, vec![rz(PI / 2.0); 4]).unwrap();
        assert_abs_diff_eq!(trajectory_loss(&still, &turned).unwrap(), PI, epsilon = 1e-12);
        assert!(trajectory_loss(&a, &still).is_err());
    }

    #[test]
    fn records_convert_to_trajectory() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let recs = vec![
            TrajectoryRecord { t: 0.0, q: vec![0.0; 8], x: [0.1, 0.2, 0.3], quat: [1.0, 0.0, 0.0, 0.0] },
            TrajectoryRecord { t: 0.1, q: vec![0.0; 8], x: [0.1, 0.2, 0.4], quat: [h, 0.0, 0.0, h] },
        ];
        let traj = EePoseTrajectory::from_records(&recs).unwrap();
        assert_eq!(traj.positions()[1], Vector3::new(0.1, 0.2, 0.4));
        assert!((traj.rotations()[1] - rz(PI / 2.0)).norm() < 1e-12);
        let mut bad = recs.clone();
        bad[0].quat = [2.0, 0.0, 0.0, 0.0];
        assert!(EePoseTrajectory::from_records(&bad).is_err());
    }

    fn step_commands(n: usize, period: f64) -> JointCommands {
        let mut targets = vec![Vector3::zeros()];
        targets.extend(std::iter::repeat_n(Vector3::new(1.0, -0.5, 0.25), n - 1));
        JointCommands { period, targets }
    }

    #[test]
    fn constant_command_stays_put() {
        let p = Vector3::new(0.3, 0.1, -0.2);
        let cmd = JointCommands { period: 0.01, targets: vec![p; 20] };
        let traj = reference_plant(&PdGains { kp: 5000.0, kd: 100.0 }, &cmd, 0.002, 10.0).unwrap();
        assert!(traj.positions().iter().all(|x| *x == p));
    }

    #[test]
    fn doubling_dt_halves_steps() {
        let cmd = step_commands(11, 0.02);
        let g = PdGains { kp: 5000.0, kd: 300.0 };
        let fine = reference_plant(&g, &cmd, 0.002, 10.0).unwrap();
        let coarse = reference_plant(&g, &cmd, 0.004, 10.0).unwrap();
        assert_eq!(fine.len() - 1, 2 * (coarse.len() - 1));
        assert!(reference_plant(&g, &cmd, 0.003, 10.0).is_err());
    }

    /// Fourth-order Runge-Kutta on one axis with a much finer step.
    fn rk4_step_response(kp: f64, kd: f64, m: f64, target: f64, horizon: f64, h: f64) -> Vec<(f64, f64)> {
        let f = |x: f64, v: f64| (v, (kp * (target - x) - kd * v) / m);
        let (mut x, mut v, mut t) = (0.0, 0.0, 0.0);
        let mut out = vec![(t, x)];
        while t < horizon - 1e-12 {
            let (k1x, k1v) = f(x, v);
            let (k2x, k2v) = f(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
            let (k3x, k3v) = f(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
            let (k4x, k4v) = f(x + h * k3x, v + h * k3v);
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            t += h;
            out.push((t, x));
        }
        out
    }

    #[test]
    fn critically_damped_step_is_monotone_and_matches_fine_integration() {
        let (kp, m, dt): (f64, f64, f64) = (2000.0, 10.0, 0.0005);
        let kd = 2.0 * (kp * m).sqrt();
        let cmd = step_commands(101, 0.01);
        let traj = reference_plant(&PdGains { kp, kd }, &cmd, dt, m).unwrap();
        let xs: Vec<f64> = traj.positions().iter().map(|p| p.x).collect();
        for w in xs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(xs.iter().all(|x| *x <= 1.0 + 1e-6));
        // The first target is the start, so motion begins right away.
        let reference = rk4_step_response(kp, kd, m, 1.0, 1.0, dt / 50.0);
        for (i, x) in xs.iter().enumerate() {
            let (_, r) = reference[i * 50];
            assert!((x - r).abs() < 5e-3, "step {i}: {x} vs {r}");
        }
        assert!((xs.last().unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn unstable_gains_are_reported() {
        let cmd = step_commands(200, 0.1);
        let err = reference_plant(&PdGains { kp: 15000.0, kd: 10.0 }, &cmd, 0.1, 1.0).unwrap_err();
        assert!(matches!(err, SysIdError::NumericalInstability { .. }));
    }

    struct Replay(EePoseTrajectory);
    impl Plant for Replay {
        fn simulate(&self, _: &PdGains, _: &JointCommands) -> Result<EePoseTrajectory> {
            Ok(self.0.clone())
        }
    }

    struct Broken;
    impl Plant for Broken {
        fn simulate(&self, _: &PdGains, _: &JointCommands) -> Result<EePoseTrajectory> {
            Err(SysIdError::Plant("engine crashed".into()))
        }
    }

    fn episodes(truth: PdGains) -> Vec<Episode> {
        let plant = ReferencePlant::default();
        [0.02, 0.05]
            .into_iter()
            .map(|period| {
                let targets = (0..40)
                    .map(|k| {
                        let s = k as f64 * period;
                        Vector3::new(0.3 * (3.0 * s).sin(), 0.2 * (s > 0.3) as u8 as f64, 0.1 * s)
                    })
                    .collect();
                let commands = JointCommands { period, targets };
                let ground_truth = plant.simulate(&truth, &commands).unwrap();
                Episode { commands, ground_truth }
            })
            .collect()
    }

    #[test]
    fn replaying_plant_gives_flat_zero_trace() {
        let eps = episodes(PdGains { kp: 5000.0, kd: 200.0 });
        let plant = Replay(eps[0].ground_truth.clone());
        let res = anneal_gains(&plant, &eps[..1], &GainBounds::default(), &AnnealConfig { steps: 50, ..Default::default() })
            .unwrap();
        assert_eq!(res.loss, 0.0);
        assert!(res.trace.iter().all(|l| *l == 0.0));
        assert_eq!(res.trace.len(), 51);
    }

    #[test]
    fn broken_plant_fails_optimization() {
        let eps = episodes(PdGains { kp: 5000.0, kd: 200.0 });
        let err = anneal_gains(&Broken, &eps, &GainBounds::default(), &AnnealConfig { steps: 5, ..Default::default() })
            .unwrap_err();
        assert_eq!(err, SysIdError::OptimizationFailed { attempts: 6 });
    }

    #[test]
    fn anneal_is_deterministic_bounded_and_monotone() {
        let eps = episodes(PdGains { kp: 4200.0, kd: 350.0 });
        let bounds = GainBounds::default();
        let config = AnnealConfig { steps: 400, seed: 7, ..Default::default() };
        let a = anneal_gains(&ReferencePlant::default(), &eps, &bounds, &config).unwrap();
        let b = anneal_gains(&ReferencePlant::default(), &eps, &bounds, &config).unwrap();
        assert_eq!(a, b);
        assert!(bounds.contains(&a.gains));
        for w in a.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(a.loss < a.trace[0]);
    }

    /// Records every evaluated candidate so the chain can be inspected.
    struct Spy<'a> {
        inner: ReferencePlant,
        seen: std::cell::RefCell<Vec<(PdGains, f64)>>,
        eps: &'a [Episode],
    }
    impl Plant for Spy<'_> {
        fn simulate(&self, g: &PdGains, c: &JointCommands) -> Result<EePoseTrajectory> {
            let out = self.inner.simulate(g, c)?;
            if std::ptr::eq(c, &self.eps[0].commands) {
                let l = trajectory_loss(&self.eps[0].ground_truth, &out)?;
                self.seen.borrow_mut().push((*g, l));
            }
            Ok(out)
        }
    }

    #[test]
    fn zero_temperature_only_accepts_improvements() {
        let eps = episodes(PdGains { kp: 9000.0, kd: 120.0 });
        let spy = Spy { inner: ReferencePlant::default(), seen: Default::default(), eps: &eps[..1] };
        let config = AnnealConfig { steps: 300, initial_temperature: Some(0.0), seed: 3, ..Default::default() };
        let bounds = GainBounds::default();
        let res = anneal_gains(&spy, &eps[..1], &bounds, &config).unwrap();
        let seen = spy.seen.into_inner();
        assert!(seen.iter().all(|(g, _)| bounds.contains(g)));
        // Without restarts firing, the current point is the running minimum,
        // so the accepted count equals the number of non-increasing moves.
        let mut current = seen[0].1;
        let mut expected = 0;
        for (_, l) in &seen[1..] {
            if *l <= current {
                current = *l;
                expected += 1;
            }
        }
        assert_eq!(res.accepted, expected);
        assert_eq!(res.loss, current);
    }
}
