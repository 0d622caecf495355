use crate::error::{Error, Result};
use crate::geometry::{
    point_triangle_distance_sq, project, BinaryMask, CameraIntrinsics, Point3, PointCloud, RigidTransform,
    TriangleMesh,
};

/// Distances closer than this are treated as equal when choosing a level.
pub const TIE_EPS: f64 = 1e-12;

/// A mesh moved into camera space with per-triangle bounds for culling.
struct PreparedMesh {
    level: u32,
    tris: Vec<[Point3; 3]>,
    lo: Vec<Point3>,
    hi: Vec<Point3>,
}

fn box_dist_sq(p: Point3, lo: Point3, hi: Point3) -> f64 {
    (0..3)
        .map(|a| {
            let d = (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0);
            d * d
        })
        .sum()
}

impl PreparedMesh {
    fn new(mesh: &TriangleMesh, t: &RigidTransform) -> Self {
        let cam: Vec<Point3> = mesh.vertices.iter().map(|&v| t.apply(v)).collect();
        let tris: Vec<[Point3; 3]> = mesh
            .triangles
            .iter()
            .map(|f| [cam[f[0]], cam[f[1]], cam[f[2]]])
            .collect();
        let lo = tris
            .iter()
            .map(|t| std::array::from_fn(|a| t[0][a].min(t[1][a]).min(t[2][a])))
            .collect();
        let hi = tris
            .iter()
            .map(|t| std::array::from_fn(|a| t[0][a].max(t[1][a]).max(t[2][a])))
            .collect();
        Self {
            level: mesh.level,
            tris,
            lo,
            hi,
        }
    }

    /// Squared distance to the surface if it is at most `limit_sq`.
    fn distance_sq_within(&self, p: Point3, limit_sq: f64) -> Option<f64> {
        let mut best = f64::INFINITY;
        for (i, t) in self.tris.iter().enumerate() {
            if box_dist_sq(p, self.lo[i], self.hi[i]) > limit_sq.min(best) {
                continue;
            }
            best = best.min(point_triangle_distance_sq(p, t[0], t[1], t[2]));
        }
        (best <= limit_sq).then_some(best)
    }
}

/// Labels each point with the level of the nearest mesh surface within
/// `tau_bg` (meshes are moved into camera space by `t`), else 0. Ties go to
/// the lower level.
pub fn generate_gt_labels(
    spine: &PointCloud,
    meshes: &[TriangleMesh],
    t: &RigidTransform,
    tau_bg: f64,
) -> Result<PointCloud> {
    if meshes.is_empty() {
        return Err(Error::Empty("labelling needs at least one mesh".into()));
    }
    if !(tau_bg >= 0.0 && tau_bg.is_finite()) {
        return Err(Error::InvalidInput(format!("tau_bg must be non-negative, got {tau_bg}")));
    }
    if let Some(m) = meshes.iter().find(|m| m.level == 0) {
        return Err(Error::InvalidInput(format!(
            "mesh level 0 is reserved for background ({} triangles)",
            m.triangles.len()
        )));
    }
    let mut prepared: Vec<PreparedMesh> = meshes.iter().map(|m| PreparedMesh::new(m, t)).collect();
    prepared.sort_by_key(|m| m.level);
    let limit_sq = tau_bg * tau_bg;
    let labels = spine
        .points
        .iter()
        .map(|&p| {
            let mut best: Option<(f64, u32)> = None;
            for m in &prepared {
                if let Some(d2) = m.distance_sq_within(p, limit_sq) {
                    let d = d2.sqrt();
                    if best.is_none_or(|(bd, _)| d < bd - TIE_EPS) {
                        best = Some((d, m.level));
                    }
                }
            }
            best.map_or(0, |(_, l)| l)
        })
        .collect();
    let mut out = spine.clone();
    out.labels = Some(labels);
    Ok(out)
}

/// Labels points by looking up the pixel nearest to their projection in a
/// level mask; points outside the image or behind the camera get 0.
pub fn labels_from_mask(spine: &PointCloud, mask: &BinaryMask, intr: &CameraIntrinsics) -> Result<PointCloud> {
    if mask.width != intr.width || mask.height != intr.height {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs camera {}x{}",
            mask.width, mask.height, intr.width, intr.height
        )));
    }
    let labels = project(spine, intr)
        .into_iter()
        .map(|pr| {
            pr.and_then(|pr| {
                let (u, v) = (pr.u.round(), pr.v.round());
                (u >= 0.0 && v >= 0.0 && u < mask.width as f64 && v < mask.height as f64)
                    .then(|| mask.get(u as usize, v as usize))
            })
            .unwrap_or(0)
        })
        .collect();
    let mut out = spine.clone();
    out.labels = Some(labels);
    Ok(out)
}
