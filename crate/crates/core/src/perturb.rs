//! Controlled visual and layout perturbations of a scene: background swap,
//! red/blue color shift and object-position permutation.

use std::collections::HashSet;

use image::{GrayImage, RgbImage, RgbaImage};
use rand::rngs::ChaCha8Rng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::CameraModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerturbError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("background {0:?} is not in the catalog")]
    NotInCatalog(String),
}

pub type Result<T> = std::result::Result<T, PerturbError>;

fn invalid(msg: impl Into<String>) -> PerturbError {
    PerturbError::InvalidArgument(msg.into())
}

/// Blend intensities used for the color-shift sweep.
pub const COLOR_SHIFT_LEVELS: [f64; 4] = [0.0, 0.33, 0.66, 1.0];

/// Pixels whose mask value is at least this are eligible for recoloring.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceType {
    Glass,
    Water,
    Emission,
    Plastic,
    Rough,
    Smooth,
    Reflective,
    Metal,
    Iron,
    Aluminium,
    Copper,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: String,
    pub mesh_ref: String,
    /// Meters, world frame.
    pub position: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
    pub scale: f64,
    /// Kilograms.
    pub mass: f64,
    pub friction: f64,
    pub surface_type: SurfaceType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    pub assets: Vec<Asset>,
    pub background_ref: String,
    pub camera: CameraModel,
    pub task: String,
}

impl SceneManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for a in &self.assets {
            if !seen.insert(a.asset_id.as_str()) {
                return Err(invalid(format!("duplicate asset id {:?}", a.asset_id)));
            }
            let norm = a.orientation.iter().map(|q| q * q).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= 1e-9) {
                return Err(invalid(format!("asset {:?}: quaternion norm {norm}", a.asset_id)));
            }
            if !(a.scale > 0.0) || !(a.mass > 0.0) {
                return Err(invalid(format!("asset {:?}: scale and mass must be positive", a.asset_id)));
            }
            if !(a.friction >= 0.0) {
                return Err(invalid(format!("asset {:?}: friction must be non-negative", a.asset_id)));
            }
            if a.position.iter().any(|p| !p.is_finite()) {
                return Err(invalid(format!("asset {:?}: non-finite position", a.asset_id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scene: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PerturbationSpec {
    #[serde(rename = "BG")]
    Background { background_id: String },
    Color { alpha: f64 },
    ObjPose { permutation_index: usize, seed: u64 },
}

fn blend(x: u8, y: u8, alpha: f64) -> u8 {
    ((1.0 - alpha) * x as f64 + alpha * y as f64).round().clamp(0.0, 255.0) as u8
}

fn swap_channels(
    data: &mut [u8],
    channels: usize,
    width: u32,
    height: u32,
    mask: Option<&GrayImage>,
    alpha: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if let Some(m) = mask {
        if m.dimensions() != (width, height) {
            return Err(invalid(format!(
                "mask is {:?} but image is {:?}",
                m.dimensions(),
                (width, height)
            )));
        }
    }
    if alpha == 0.0 {
        return Ok(());
    }
    for (i, px) in data.chunks_exact_mut(channels).enumerate() {
        if let Some(m) = mask {
            if m.as_raw()[i] < MASK_THRESHOLD {
                continue;
            }
        }
        let (r, b) = (px[0], px[2]);
        px[0] = blend(r, b, alpha);
        px[2] = blend(b, r, alpha);
    }
    Ok(())
}

/// Blends eligible pixels toward their BGR counterpart:
/// `(1 - alpha) * [R, G, B] + alpha * [B, G, R]`. Green is never touched and
/// pixels outside the mask are copied verbatim.
pub fn color_swap(image: &RgbImage, mask: Option<&GrayImage>, alpha: f64) -> Result<RgbImage> {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    swap_channels(&mut out, 3, w, h, mask, alpha)?;
    Ok(out)
}

/// [`color_swap`] for RGBA images; alpha values pass through untouched.
pub fn color_swap_rgba(image: &RgbaImage, mask: Option<&GrayImage>, alpha: f64) -> Result<RgbaImage> {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    swap_channels(&mut out, 4, w, h, mask, alpha)?;
    Ok(out)
}

/// Returns one variant per asset. Variant 0 is the scene itself; the others
/// give asset `i` the position of asset `perm[i]` for distinct non-identity
/// permutations drawn by a seeded Fisher-Yates shuffle. When fewer distinct
/// non-identity permutations exist than are needed, repeats are allowed.
pub fn pose_permutations(scene: &SceneManifest, seed: u64) -> Result<Vec<SceneManifest>> {
    scene.validate()?;
    let n = scene.assets.len();
    if n == 0 {
        return Err(invalid("scene has no assets to permute"));
    }
    let identity: Vec<usize> = (0..n).collect();
    let available = non_identity_count(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut variants = vec![scene.clone()];
    while variants.len() < n {
        let mut perm = identity.clone();
        perm.shuffle(&mut rng);
        if perm == identity {
            continue;
        }
        if available.is_some_and(|a| a >= n - 1) && !seen.insert(perm.clone()) {
            continue;
        }
        variants.push(apply_permutation(scene, &perm));
    }
    Ok(variants)
}

/// `n! - 1`, or `None` when it exceeds `u64`.
fn non_identity_count(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k)).map(|f| f - 1)
}

pub fn apply_permutation(scene: &SceneManifest, perm: &[usize]) -> SceneManifest {
    let mut out = scene.clone();
    for (asset, &src) in out.assets.iter_mut().zip(perm) {
        asset.position = scene.assets[src].position;
    }
    out
}

/// Replaces the background reference; nothing else changes.
pub fn swap_background<S: AsRef<str>>(
    scene: &SceneManifest,
    background_id: &str,
    catalog: &[S],
) -> Result<SceneManifest> {
    if !catalog.iter().any(|c| c.as_ref() == background_id) {
        return Err(PerturbError::NotInCatalog(background_id.to_string()));
    }
    Ok(SceneManifest { background_ref: background_id.to_string(), ..scene.clone() })
}
