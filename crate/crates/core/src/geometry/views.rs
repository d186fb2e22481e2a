use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{invalid, CameraModel, Result};

/// A camera placed on a sphere of radius `radius` around `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub position: [f64; 3],
    pub target: [f64; 3],
    /// Elevation parameter `z_i` (the un-normalized vertical component).
    pub elevation: f64,
    /// Azimuth `θ_i` in radians.
    pub azimuth: f64,
    pub radius: f64,
}

impl ViewPose {
    /// World-to-camera rotation with the optical axis (+z) aimed at `target`,
    /// image x to the right and y down, world +z as the up hint.
    pub fn look_at_rotation(&self) -> Matrix3<f64> {
        let forward = (Vector3::from(self.target) - Vector3::from(self.position)).normalize();
        let mut up = Vector3::z();
        if forward.cross(&up).norm() < 1e-9 {
            up = Vector3::y();
        }
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
    }

    /// Camera at this pose with the given intrinsics.
    pub fn camera(&self, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<CameraModel> {
        CameraModel::new(
            fx,
            fy,
            cx,
            cy,
            self.look_at_rotation(),
            -Vector3::from(self.position),
        )
    }
}

/// Orbit views: view `i` uses `θ = theta_values[i mod M]` and
/// `z = z_levels[⌊i / M⌋]`, direction `(cos θ, sin θ, z)` normalized, at
/// distance `radius` from `target`.
pub fn orbit_view_poses(
    target: [f64; 3],
    radius: f64,
    z_levels: &[f64],
    theta_values: &[f64],
) -> Result<Vec<ViewPose>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid("orbit radius must be positive"));
    }
    if z_levels.is_empty() || theta_values.is_empty() {
        return Err(invalid("elevation and azimuth lists must be non-empty"));
    }
    let m = theta_values.len();
    let centre = Vector3::from(target);
    Ok((0..z_levels.len() * m)
        .map(|i| {
            let theta = theta_values[i % m];
            let z = z_levels[i / m];
            let dir = Vector3::new(theta.cos(), theta.sin(), z);
            let dir = dir / (theta.cos().powi(2) + theta.sin().powi(2) + z * z).sqrt();
            ViewPose {
                position: (centre + dir * radius).into(),
                target,
                elevation: z,
                azimuth: theta,
                radius,
            }
        })
        .collect())
}

/// Index of the view with the most matches; ties go to the lowest index.
pub fn select_optimal_view(match_counts: &[usize]) -> Result<usize> {
    if match_counts.is_empty() {
        return Err(invalid("no views to select from"));
    }
    let mut best = 0;
    for (i, &c) in match_counts.iter().enumerate() {
        if c > match_counts[best] {
            best = i;
        }
    }
    Ok(best)
}
