//! Camera and object geometry: pinhole unprojection, metric depth rescaling,
//! orbit views, correspondence lifting, rigid registration and camera pose
//! calibration against a rendering interface.

mod calibration;
mod camera;
mod registration;
mod views;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{
    calibration_loss, fit_camera_pose, CalibrationLoss, CalibrationLossWeights,
    CalibrationObservation, Field, FrameData, LossReduction, PointSpriteRenderer, PoseFit, PoseSearchConfig,
    RenderError, Renderer,
};
pub use camera::{
    depth_scale_factor, lift_correspondences, project, unproject, CameraModel, DepthMap,
    KeypointPair, LiftedCorrespondences, MIN_DEPTH_OVERLAP,
};
pub use registration::{
    align_scale, estimate_rigid_transform, BoundingBox, Correspondence3D, PointPair, RigidFit,
};
pub use views::{orbit_view_poses, select_optimal_view, ViewPose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("only {valid} valid pixels in the overlap region, need {required}")]
    InsufficientOverlap { valid: usize, required: usize },
    #[error("{found} correspondences, need at least 3")]
    InsufficientCorrespondences { found: usize },
    #[error("correspondences are collinear or coincident (best-effort rmsd {})", best_effort.rmsd)]
    DegenerateConfiguration { best_effort: Box<RigidFit> },
    #[error("bounding box has zero diagonal")]
    DegenerateBox,
    #[error("renderer failed at pose t={:?}: {message}", pose.translation.as_slice())]
    Render { pose: Box<RigidTransform>, message: String },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub(crate) fn invalid(msg: impl Into<String>) -> GeometryError {
    GeometryError::InvalidArgument(msg.into())
}

/// Tolerance used to check that a matrix is a proper rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

pub fn is_rotation(r: &Matrix3<f64>, tolerance: f64) -> bool {
    (r.transpose() * r - Matrix3::identity()).amax() <= tolerance
        && (r.determinant() - 1.0).abs() <= tolerance
}

/// Nearest rotation in the Frobenius sense (polar factor of `m`).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let smallest = svd.singular_values.imin();
        u.column_mut(smallest).neg_mut();
        r = u * v_t;
    }
    r
}

/// Rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "wire::RigidWire", try_from = "wire::RigidWire")]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !is_rotation(&rotation, ROTATION_TOLERANCE) {
            return Err(invalid("rotation must be orthonormal with det +1"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: orthonormalize(&(self.rotation * other.rotation)),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle between the two rotations, in radians.
    pub fn angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

pub(crate) mod wire {
    use super::*;

    pub fn matrix_row_major(m: &Matrix3<f64>) -> [f64; 9] {
        [
            m[(0, 0)], m[(0, 1)], m[(0, 2)],
            m[(1, 0)], m[(1, 1)], m[(1, 2)],
            m[(2, 0)], m[(2, 1)], m[(2, 2)],
        ]
    }

    #[derive(Serialize, Deserialize)]
    pub struct RigidWire {
        #[serde(rename = "R")]
        pub r: [f64; 9],
        pub t: [f64; 3],
    }

    impl From<RigidTransform> for RigidWire {
        fn from(v: RigidTransform) -> Self {
            Self {
                r: matrix_row_major(&v.rotation),
                t: v.translation.into(),
            }
        }
    }

    impl TryFrom<RigidWire> for RigidTransform {
        type Error = GeometryError;

        fn try_from(w: RigidWire) -> Result<Self> {
            RigidTransform::new(Matrix3::from_row_slice(&w.r), Vector3::from(w.t))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn orthonormalize_recovers_rotation() {
        let r = *Rotation3::from_euler_angles(0.3, -0.2, 1.1).matrix();
        let noisy = r + Matrix3::from_element(1e-4);
        let fixed = orthonormalize(&noisy);
        assert!(is_rotation(&fixed, 1e-12));
        assert!((fixed - r).amax() < 1e-3);
    }

    #[test]
    fn rigid_transform_wire_format() {
        let t = RigidTransform::new(*Rotation3::from_euler_angles(0.0, 0.0, 0.5).matrix(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let json = serde_json::to_value(t).unwrap();
        assert_eq!(json["t"], serde_json::json!([1.0, 2.0, 3.0]));
        assert_eq!(json["R"].as_array().unwrap().len(), 9);
        assert_eq!(json["R"][1].as_f64().unwrap(), t.rotation[(0, 1)]);
        let back: RigidTransform = serde_json::from_value(json).unwrap();
        assert!((back.rotation - t.rotation).amax() < 1e-15);
        let bad = serde_json::json!({"R": [1,0,0,0,1,0,0,0,-1], "t": [0,0,0]});
        assert!(serde_json::from_value::<RigidTransform>(bad).is_err());
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let t = RigidTransform::new(*Rotation3::from_euler_angles(0.4, 0.1, -0.7).matrix(), Vector3::new(0.5, -1.0, 2.0)).unwrap();
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(id.translation.amax() < 1e-12);
        assert!(t.angle_to(&t) < 1e-7);
    }
}
