use std::io::{self, Read, Write};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::registration::{Correspondence3D, PointPair};
use super::wire::matrix_row_major;
use super::{invalid, is_rotation, GeometryError, Result, ROTATION_TOLERANCE};

/// Pinhole camera. World points map to camera coordinates by
/// `X_cam = R·(P + t)`, the inverse of the unprojection
/// `P = Rᵀ·D·K⁻¹·[u, v, 1]ᵀ − t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "CameraWire", try_from = "CameraWire")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct CameraWire {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

impl From<CameraModel> for CameraWire {
    fn from(c: CameraModel) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            r: matrix_row_major(&c.rotation),
            t: c.translation.into(),
        }
    }
}

impl TryFrom<CameraWire> for CameraModel {
    type Error = GeometryError;

    fn try_from(w: CameraWire) -> Result<Self> {
        CameraModel::new(
            w.fx,
            w.fy,
            w.cx,
            w.cy,
            Matrix3::from_row_slice(&w.r),
            Vector3::from(w.t),
        )
    }
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(invalid("focal lengths must be positive and the principal point finite"));
        }
        if !is_rotation(&rotation, ROTATION_TOLERANCE) {
            return Err(invalid("camera rotation must be orthonormal with det +1"));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(invalid("camera translation must be finite"));
        }
        Ok(Self { fx, fy, cx, cy, rotation, translation })
    }

    /// Camera at the world origin looking down +z.
    pub fn identity(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(fx, fy, cx, cy, Matrix3::identity(), Vector3::zeros())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.translation
    }
}

/// World point seen at pixel `(u, v)` with depth `depth` along the optical axis.
pub fn unproject(pixel: (f64, f64), depth: f64, camera: &CameraModel) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(invalid(format!("depth must be positive and finite, got {depth}")));
    }
    let (u, v) = pixel;
    let ray = Vector3::new((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
    Ok(camera.rotation.transpose() * (ray * depth) - camera.translation)
}

/// Forward pinhole map: pixel and depth of a world point.
pub fn project(point: &Vector3<f64>, camera: &CameraModel) -> Result<((f64, f64), f64)> {
    let cam = camera.rotation * (point + camera.translation);
    if !(cam.z > 0.0) {
        return Err(invalid("point is behind the camera"));
    }
    let u = camera.fx * cam.x / cam.z + camera.cx;
    let v = camera.fy * cam.y / cam.z + camera.cy;
    Ok(((u, v), cam.z))
}

/// Row-major per-pixel depth in meters. Non-finite or non-positive values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(invalid(format!(
                "depth map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Valid depth at integer pixel `(col, row)`.
    pub fn get(&self, col: usize, row: usize) -> Option<f64> {
        if col >= self.width || row >= self.height {
            return None;
        }
        let d = self.values[row * self.width + col] as f64;
        (d.is_finite() && d > 0.0).then_some(d)
    }

    /// Depth at the pixel nearest to a sub-pixel location.
    pub fn sample(&self, (u, v): (f64, f64)) -> Option<f64> {
        let (col, row) = (u.round(), v.round());
        if !(col >= 0.0 && row >= 0.0) {
            return None;
        }
        self.get(col as usize, row as usize)
    }

    pub fn scaled(&self, factor: f64) -> DepthMap {
        DepthMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| (v as f64 * factor) as f32).collect(),
        }
    }

    /// Reads the binary form: width and height as little-endian `u32`, then
    /// `width·height` little-endian `f32` values in row-major order.
    pub fn read_from(mut reader: impl Read) -> io::Result<Self> {
        let mut header = [0u8; 8];
        reader.read_exact(&mut header)?;
        let width = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[4..].try_into().unwrap()) as usize;
        let mut raw = vec![0u8; width * height * 4];
        reader.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        DepthMap::new(width, height, values)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }

    pub fn write_to(&self, mut writer: impl Write) -> io::Result<()> {
        writer.write_all(&(self.width as u32).to_le_bytes())?;
        writer.write_all(&(self.height as u32).to_le_bytes())?;
        for v in &self.values {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Minimum number of pixels valid in both maps for [`depth_scale_factor`].
pub const MIN_DEPTH_OVERLAP: usize = 10;

/// Median over the masked region of `reference / relative`, the factor that
/// brings a relative depth prediction to metric scale.
pub fn depth_scale_factor(
    relative: &DepthMap,
    reference: &DepthMap,
    region_mask: &[bool],
) -> Result<f64> {
    if relative.width != reference.width || relative.height != reference.height {
        return Err(invalid("depth maps differ in size"));
    }
    if region_mask.len() != relative.values.len() {
        return Err(invalid("region mask does not match the depth map size"));
    }
    let valid = |d: f32| d.is_finite() && d > 0.0;
    let mut ratios: Vec<f64> = region_mask
        .iter()
        .zip(relative.values.iter().zip(&reference.values))
        .filter(|(&m, (&rel, &rf))| m && valid(rel) && valid(rf))
        .map(|(_, (&rel, &rf))| rf as f64 / rel as f64)
        .collect();
    if ratios.len() < MIN_DEPTH_OVERLAP {
        return Err(GeometryError::InsufficientOverlap {
            valid: ratios.len(),
            required: MIN_DEPTH_OVERLAP,
        });
    }
    ratios.sort_by(f64::total_cmp);
    let mid = ratios.len() / 2;
    Ok(if ratios.len() % 2 == 1 {
        ratios[mid]
    } else {
        0.5 * (ratios[mid - 1] + ratios[mid])
    })
}

/// Matched 2D keypoints `(u, v)` in the simulated render and the original image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointPair {
    pub sim: [f64; 2],
    pub orig: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedCorrespondences {
    pub correspondences: Correspondence3D,
    /// Indices of input pairs that survived.
    pub kept: Vec<usize>,
    /// Indices of input pairs dropped for falling outside an image or on invalid depth.
    pub rejected: Vec<usize>,
}

/// Lifts 2D matches to 3D by unprojecting each side with its own camera and
/// depth (nearest-pixel lookup).
pub fn lift_correspondences(
    pairs: &[KeypointPair],
    sim_camera: &CameraModel,
    sim_depth: &DepthMap,
    real_camera: &CameraModel,
    real_depth: &DepthMap,
) -> Result<LiftedCorrespondences> {
    let mut out = Vec::new();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let lift = |kp: [f64; 2], cam: &CameraModel, depth: &DepthMap| {
            let px = (kp[0], kp[1]);
            depth.sample(px).and_then(|d| unproject(px, d, cam).ok())
        };
        match (
            lift(pair.sim, sim_camera, sim_depth),
            lift(pair.orig, real_camera, real_depth),
        ) {
            (Some(sim), Some(orig)) => {
                out.push(PointPair { sim, orig });
                kept.push(i);
            }
            _ => rejected.push(i),
        }
    }
    if out.len() < 3 {
        return Err(GeometryError::InsufficientCorrespondences { found: out.len() });
    }
    Ok(LiftedCorrespondences {
        correspondences: Correspondence3D::new(out)?,
        kept,
        rejected,
    })
}
