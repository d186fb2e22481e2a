//! Camera-to-robot pose calibration by analysis-by-synthesis.
//!
//! A [`Renderer`] produces image, flow and feature maps of the robot for a
//! candidate pose and a joint-angle sequence. The composite loss compares them
//! with the observed video; [`fit_camera_pose`] minimizes it over SE(3)
//! starting from the best pose of a coarse grid.

use nalgebra::{Rotation3, Vector3};
use rand::rngs::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{invalid, orthonormalize, GeometryError, Result, RigidTransform};

/// Dense `height × width × channels` array, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(invalid("field dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(invalid(format!(
                "{height}x{width}x{channels} field needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Image, flow to the next frame, and feature map for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub image: Field,
    /// Motion from this frame to the next; unused on the last frame.
    pub flow: Option<Field>,
    pub features: Field,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationObservation {
    pub observed: FrameData,
    pub rendered: FrameData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationLossWeights {
    pub rgb: f64,
    pub feat: f64,
    pub flow: f64,
}

impl Default for CalibrationLossWeights {
    fn default() -> Self {
        Self { rgb: 1.0, feat: 1.0, flow: 1.0 }
    }
}

impl CalibrationLossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.rgb, self.feat, self.flow];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("loss weights must be non-negative and finite"));
        }
        if w.iter().all(|v| *v == 0.0) {
            return Err(invalid("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// How squared image and flow errors are reduced per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Squared error summed over channels, averaged over pixels.
    #[default]
    PixelMean,
    /// Raw squared L2 norm of the whole difference.
    Sum,
}

/// Weighted loss terms; `total = rgb + feat + flow`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationLoss {
    pub total: f64,
    pub rgb: f64,
    pub feat: f64,
    pub flow: f64,
}

pub fn calibration_loss(
    observations: &[CalibrationObservation],
    weights: &CalibrationLossWeights,
    reduction: LossReduction,
) -> Result<CalibrationLoss> {
    loss_over(
        observations.iter().map(|o| (&o.observed, &o.rendered)),
        observations.len(),
        weights,
        reduction,
    )
}

fn loss_over<'a>(
    frames: impl Iterator<Item = (&'a FrameData, &'a FrameData)>,
    count: usize,
    weights: &CalibrationLossWeights,
    reduction: LossReduction,
) -> Result<CalibrationLoss> {
    weights.validate()?;
    if count == 0 {
        return Err(invalid("need at least one frame"));
    }
    let (mut rgb, mut feat, mut flow) = (0.0, 0.0, 0.0);
    for (t, (observed, rendered)) in frames.enumerate() {
        rgb += squared_error(&rendered.image, &observed.image, reduction, "image")?;
        feat += 1.0 - cosine(&rendered.features, &observed.features)?;
        if t + 1 < count && weights.flow > 0.0 {
            match (&rendered.flow, &observed.flow) {
                (Some(r), Some(o)) => flow += squared_error(r, o, reduction, "flow")?,
                _ => return Err(invalid(format!("frame {t} is missing a flow field"))),
            }
        }
    }
    let (rgb, feat, flow) = (weights.rgb * rgb, weights.feat * feat, weights.flow * flow);
    Ok(CalibrationLoss { total: rgb + feat + flow, rgb, feat, flow })
}

fn squared_error(a: &Field, b: &Field, reduction: LossReduction, what: &str) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(invalid(format!(
            "{what} shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(match reduction {
        LossReduction::PixelMean => sum / a.pixels() as f64,
        LossReduction::Sum => sum,
    })
}

/// Cosine similarity of the flattened maps. Equal maps (including two
/// all-zero maps) give exactly 1; one all-zero map is orthogonal to anything.
fn cosine(a: &Field, b: &Field) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(invalid(format!(
            "feature shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.data == b.data {
        return Ok(1.0);
    }
    let dot: f64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum();
    let na = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(match (na > 0.0, nb > 0.0) {
        (false, false) => 1.0,
        (true, true) => (dot / (na * nb)).clamp(-1.0, 1.0),
        _ => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct RenderError(pub String);

/// Renders the robot for a camera pose and per-frame joint angles. The
/// returned sequence must have one [`FrameData`] per joint-angle entry.
pub trait Renderer {
    fn render(
        &self,
        pose: &RigidTransform,
        joint_angles: &[Vec<f64>],
    ) -> std::result::Result<Vec<FrameData>, RenderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSearchConfig {
    /// Number of refinement proposals after the grid evaluation.
    pub budget: usize,
    /// Initial proposal standard deviation for translation, meters.
    pub sigma_translation: f64,
    /// Initial proposal standard deviation for rotation, radians.
    pub sigma_rotation: f64,
    /// Geometric decay applied to both proposal scales after every proposal.
    pub cooling: f64,
    pub seed: u64,
    pub weights: CalibrationLossWeights,
    pub reduction: LossReduction,
}

impl Default for PoseSearchConfig {
    fn default() -> Self {
        Self {
            budget: 2000,
            sigma_translation: 0.02,
            sigma_rotation: 2f64.to_radians(),
            cooling: 0.998,
            seed: 0,
            weights: CalibrationLossWeights::default(),
            reduction: LossReduction::PixelMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseFit {
    pub pose: RigidTransform,
    pub loss: CalibrationLoss,
    /// Grid pose the refinement started from.
    pub initial_index: usize,
    /// Losses of the initial poses, in input order.
    pub initial_losses: Vec<f64>,
    pub accepted_moves: usize,
}

/// Minimizes the calibration loss over SE(3).
///
/// Every initial pose is scored and the lowest (first on ties) seeds a
/// seeded stochastic local search: Gaussian perturbations of translation and
/// axis-angle rotation whose scales decay geometrically, keeping a proposal
/// only if it lowers the loss.
pub fn fit_camera_pose<R: Renderer + ?Sized>(
    renderer: &R,
    observed: &[FrameData],
    joint_angles: &[Vec<f64>],
    initial_poses: &[RigidTransform],
    config: &PoseSearchConfig,
) -> Result<PoseFit> {
    if initial_poses.is_empty() {
        return Err(invalid("need at least one initial pose"));
    }
    if observed.len() != joint_angles.len() {
        return Err(invalid("one joint-angle vector per observed frame is required"));
    }
    if !(config.cooling > 0.0 && config.cooling <= 1.0) {
        return Err(invalid("cooling must lie in (0, 1]"));
    }
    config.weights.validate()?;

    let evaluate = |pose: &RigidTransform| -> Result<CalibrationLoss> {
        let rendered = renderer.render(pose, joint_angles).map_err(|e| GeometryError::Render {
            pose: Box::new(*pose),
            message: e.0,
        })?;
        if rendered.len() != observed.len() {
            return Err(GeometryError::Render {
                pose: Box::new(*pose),
                message: format!("rendered {} frames for {} observed", rendered.len(), observed.len()),
            });
        }
        loss_over(
            observed.iter().zip(rendered.iter()),
            observed.len(),
            &config.weights,
            config.reduction,
        )
    };

    let mut initial_losses = Vec::with_capacity(initial_poses.len());
    let mut best: Option<(usize, CalibrationLoss)> = None;
    for (i, pose) in initial_poses.iter().enumerate() {
        let loss = evaluate(pose)?;
        initial_losses.push(loss.total);
        if best.is_none_or(|(_, b)| loss.total < b.total) {
            best = Some((i, loss));
        }
    }
    let (initial_index, mut best_loss) = best.expect("initial poses are non-empty");
    let mut best_pose = initial_poses[initial_index];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut scale = 1.0;
    let mut accepted_moves = 0;
    for _ in 0..config.budget {
        if best_loss.total == 0.0 {
            break;
        }
        let dt = Vector3::from_fn(|_, _| unit.sample(&mut rng)) * (config.sigma_translation * scale);
        let dr = Vector3::from_fn(|_, _| unit.sample(&mut rng)) * (config.sigma_rotation * scale);
        scale *= config.cooling;
        let candidate = RigidTransform {
            rotation: orthonormalize(&(Rotation3::from_scaled_axis(dr).matrix() * best_pose.rotation)),
            translation: best_pose.translation + dt,
        };
        let loss = evaluate(&candidate)?;
        if loss.total < best_loss.total {
            best_pose = candidate;
            best_loss = loss;
            accepted_moves += 1;
        }
    }

    Ok(PoseFit {
        pose: best_pose,
        loss: best_loss,
        initial_index,
        initial_losses,
        accepted_moves,
    })
}

/// Synthetic renderer drawing each marker as a Gaussian sprite.
///
/// Marker `i` sits at `markers[i] + q[i % q.len()] * displacements[i]` in the
/// robot frame for joint vector `q`, and is projected with
/// `x_cam = R x + t`. The image holds the sum of all sprites, the features
/// hold one sprite per channel, and the flow is the sprite-weighted image
/// motion of the markers to the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSpriteRenderer {
    pub markers: Vec<Vector3<f64>>,
    pub displacements: Vec<Vector3<f64>>,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub sprite_sigma: f64,
}

impl PointSpriteRenderer {
    fn pixels_of(&self, pose: &RigidTransform, q: &[f64]) -> std::result::Result<Vec<(f64, f64)>, RenderError> {
        let (cx, cy) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
        self.markers
            .iter()
            .zip(&self.displacements)
            .enumerate()
            .map(|(i, (m, d))| {
                let joint = if q.is_empty() { 0.0 } else { q[i % q.len()] };
                let x = pose.apply(&(m + d * joint));
                if x.z <= 1e-6 {
                    return Err(RenderError(format!("marker {i} is behind the camera")));
                }
                Ok((self.focal * x.x / x.z + cx, self.focal * x.y / x.z + cy))
            })
            .collect()
    }

    fn sprites(&self, centers: &[(f64, f64)]) -> Vec<Vec<f64>> {
        let inv = 1.0 / (2.0 * self.sprite_sigma * self.sprite_sigma);
        centers
            .iter()
            .map(|&(u, v)| {
                let mut out = Vec::with_capacity(self.width * self.height);
                for row in 0..self.height {
                    for col in 0..self.width {
                        let r2 = (col as f64 - u).powi(2) + (row as f64 - v).powi(2);
                        out.push((-r2 * inv).exp());
                    }
                }
                out
            })
            .collect()
    }
}

impl Renderer for PointSpriteRenderer {
    fn render(
        &self,
        pose: &RigidTransform,
        joint_angles: &[Vec<f64>],
    ) -> std::result::Result<Vec<FrameData>, RenderError> {
        if self.markers.len() != self.displacements.len() || self.markers.is_empty() {
            return Err(RenderError("one displacement per marker is required".into()));
        }
        let centers = joint_angles
            .iter()
            .map(|q| self.pixels_of(pose, q))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n = self.width * self.height;
        let m = self.markers.len();
        let to_field = |c, data| {
            Field::new(self.height, self.width, c, data).map_err(|e| RenderError(e.to_string()))
        };
        let mut frames = Vec::with_capacity(centers.len());
        for (t, c) in centers.iter().enumerate() {
            let sprites = self.sprites(c);
            let mut image = vec![0.0; n];
            let mut features = vec![0.0; n * m];
            let mut flow = vec![0.0; n * 2];
            for (k, sprite) in sprites.iter().enumerate() {
                let motion = centers.get(t + 1).map(|next| (next[k].0 - c[k].0, next[k].1 - c[k].1));
                for (p, w) in sprite.iter().enumerate() {
                    image[p] += w;
                    features[p * m + k] = *w;
                    if let Some((du, dv)) = motion {
                        flow[2 * p] += w * du;
                        flow[2 * p + 1] += w * dv;
                    }
                }
            }
            frames.push(FrameData {
                image: to_field(1, image)?,
                flow: Some(to_field(2, flow)?),
                features: to_field(m, features)?,
            });
        }
        Ok(frames)
    }
}
