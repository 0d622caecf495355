use serde::{Deserialize, Serialize};

use super::vec3;
use super::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Proper rigid motion `p -> R p + t` (rotation orthonormal, det +1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

const ORTHO_TOL: f64 = 1e-6;

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Checked constructor; rejects rotations that are not orthonormal with
    /// determinant +1 (within 1e-6).
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn translation(t: Point3) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rotation of `angle` radians about `axis` (Rodrigues), then translation.
    pub fn from_axis_angle(axis: Point3, angle: f64, translation: Point3) -> Self {
        let n = vec3::norm(axis);
        let [x, y, z] = if n > 0.0 {
            vec3::scale(axis, 1.0 / n)
        } else {
            [0.0, 0.0, 1.0]
        };
        let (s, c) = angle.sin_cos();
        let k = 1.0 - c;
        Self {
            rotation: [
                [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
                [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
                [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
            ],
            translation,
        }
    }

    /// From a row-major 4x4 homogeneous matrix.
    pub fn from_matrix4(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::InvalidInput(format!(
                "pose matrix needs 16 entries, got {}",
                m.len()
            )));
        }
        let last = &m[12..16];
        if last[0].abs() > ORTHO_TOL
            || last[1].abs() > ORTHO_TOL
            || last[2].abs() > ORTHO_TOL
            || (last[3] - 1.0).abs() > ORTHO_TOL
        {
            return Err(Error::InvalidInput(format!(
                "pose matrix last row must be [0, 0, 0, 1], got {last:?}"
            )));
        }
        Self::new(
            [
                [m[0], m[1], m[2]],
                [m[4], m[5], m[6]],
                [m[8], m[9], m[10]],
            ],
            [m[3], m[7], m[11]],
        )
    }

    pub fn to_matrix4(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0], r[0][1], r[0][2], t[0], //
            r[1][0], r[1][1], r[1][2], t[1], //
            r[2][0], r[2][1], r[2][2], t[2], //
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if !r.iter().flatten().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("transform has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - expect).abs() > ORTHO_TOL {
                    return Err(Error::InvalidInput(format!(
                        "rotation is not orthonormal (R^T R [{i}][{j}] = {d})"
                    )));
                }
            }
        }
        let det = vec3::dot(r[0], vec3::cross(r[1], r[2]));
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        let r = &self.rotation;
        [
            vec3::dot(r[0], p) + self.translation[0],
            vec3::dot(r[1], p) + self.translation[1],
            vec3::dot(r[2], p) + self.translation[2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.translation;
        let ti = [-vec3::dot(rt[0], t), -vec3::dot(rt[1], t), -vec3::dot(rt[2], t)];
        Self {
            rotation: rt,
            translation: ti,
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Self {
            rotation: r,
            translation: self.apply(other.translation),
        }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Maps every point through `t`; colours and labels pass through unchanged.
pub fn apply_transform(t: &RigidTransform, pc: &PointCloud) -> PointCloud {
    PointCloud {
        points: pc.points.iter().map(|&p| t.apply(p)).collect(),
        colors: pc.colors.clone(),
        labels: pc.labels.clone(),
    }
}
