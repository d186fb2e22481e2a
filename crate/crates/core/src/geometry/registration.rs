use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{invalid, GeometryError, Result, RigidTransform};

/// One 3D–3D correspondence between a simulated point and the original point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PairWire", try_from = "PairWire")]
pub struct PointPair {
    pub sim: Vector3<f64>,
    pub orig: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PairWire {
    sim: [f64; 3],
    orig: [f64; 3],
}

impl From<PointPair> for PairWire {
    fn from(p: PointPair) -> Self {
        Self { sim: p.sim.into(), orig: p.orig.into() }
    }
}

impl TryFrom<PairWire> for PointPair {
    type Error = GeometryError;

    fn try_from(w: PairWire) -> Result<Self> {
        if w.sim.iter().chain(&w.orig).any(|v| !v.is_finite()) {
            return Err(invalid("correspondence coordinates must be finite"));
        }
        Ok(Self { sim: w.sim.into(), orig: w.orig.into() })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Correspondence3D {
    pairs: Vec<PointPair>,
}

impl Correspondence3D {
    pub fn new(pairs: Vec<PointPair>) -> Result<Self> {
        if pairs
            .iter()
            .any(|p| p.sim.iter().chain(p.orig.iter()).any(|v| !v.is_finite()))
        {
            return Err(invalid("correspondence coordinates must be finite"));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[PointPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidFit {
    pub transform: RigidTransform,
    /// Root-mean-square residual `‖P_orig − (R·P_sim + t)‖`.
    pub rmsd: f64,
    /// Whether the naive SVD solution was a reflection and was corrected.
    pub reflection_corrected: bool,
}

/// Rank threshold on the cross-covariance singular values, relative to the largest.
const RANK_TOLERANCE: f64 = 1e-10;

/// Least-squares rigid transform with `P_orig ≈ R·P_sim + t` (Kabsch).
///
/// Collinear or coincident inputs leave the rotation about the line
/// unconstrained; the best-effort fit is returned inside
/// [`GeometryError::DegenerateConfiguration`].
pub fn estimate_rigid_transform(correspondences: &Correspondence3D) -> Result<RigidFit> {
    let pairs = correspondences.pairs();
    if pairs.len() < 3 {
        return Err(GeometryError::InsufficientCorrespondences { found: pairs.len() });
    }
    let n = pairs.len() as f64;
    let sim_centroid = pairs.iter().map(|p| p.sim).sum::<Vector3<f64>>() / n;
    let orig_centroid = pairs.iter().map(|p| p.orig).sum::<Vector3<f64>>() / n;

    let mut cross = Matrix3::zeros();
    for p in pairs {
        cross += (p.sim - sim_centroid) * (p.orig - orig_centroid).transpose();
    }
    let svd = cross.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let sigma = svd.singular_values;

    let mut correction = Matrix3::identity();
    let reflection_corrected = (v * u.transpose()).determinant() < 0.0;
    if reflection_corrected {
        correction[(sigma.imin(), sigma.imin())] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = orig_centroid - rotation * sim_centroid;
    let transform = RigidTransform { rotation, translation };

    let sse: f64 = pairs
        .iter()
        .map(|p| (p.orig - transform.apply(&p.sim)).norm_squared())
        .sum();
    let fit = RigidFit {
        transform,
        rmsd: (sse / n).sqrt(),
        reflection_corrected,
    };

    // Rank of the centered source cloud: collinear sets have one non-zero
    // singular value in their scatter matrix.
    let mut scatter = Matrix3::zeros();
    for p in pairs {
        let d = p.sim - sim_centroid;
        scatter += d * d.transpose();
    }
    let mut spread = scatter.symmetric_eigenvalues().as_slice().to_vec();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] <= RANK_TOLERANCE * spread[0] {
        return Err(GeometryError::DegenerateConfiguration { best_effort: Box::new(fit) });
    }
    Ok(fit)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let (mut lo, mut hi) = (*first, *first);
        for p in iter {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Some(Self { min: lo.into(), max: hi.into() })
    }

    pub fn diagonal(&self) -> f64 {
        (Vector3::from(self.max) - Vector3::from(self.min)).norm()
    }
}

/// Uniform scale that makes the mesh box diagonal match the cloud box diagonal.
pub fn align_scale(mesh: &BoundingBox, cloud: &BoundingBox) -> Result<f64> {
    let (dm, dc) = (mesh.diagonal(), cloud.diagonal());
    if !(dm > 0.0 && dc > 0.0) || !dm.is_finite() || !dc.is_finite() {
        return Err(GeometryError::DegenerateBox);
    }
    Ok(dc / dm)
}
