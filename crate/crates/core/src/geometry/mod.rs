//! Camera model, rigid transforms, depth unprojection, mask rendering and
//! mesh surface sampling. Lengths are millimetres throughout.

mod camera;
mod mesh;
mod raster;
mod transform;
pub mod vec3;

pub use camera::{
    mask_bbox, project, unproject, BinaryMask, BoundingBox2D, CameraIntrinsics, ColorImage,
    DepthImage, Projection,
};
pub use mesh::{point_triangle_distance_sq, sample_mesh_surface, TriangleMesh};
pub use raster::{render_depth_and_mask, render_mask};
pub use transform::{apply_transform, RigidTransform};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// An unordered set of 3D points with optional per-point colour and label.
///
/// Labels are vertebra class ids: 0 is background, 1..=5 are L1..L5.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub colors: Option<Vec<[f64; 3]>>,
    pub labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            colors: None,
            labels: None,
        }
    }

    /// Builds a cloud and checks the attribute lengths and finiteness.
    pub fn try_new(
        points: Vec<Point3>,
        colors: Option<Vec<[f64; 3]>>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        let pc = Self {
            points,
            colors,
            labels,
        };
        pc.validate()?;
        Ok(pc)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} points",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} colors for {n} points",
                    c.len()
                )));
            }
        }
        if let Some(l) = &self.labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {n} points",
                    l.len()
                )));
            }
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidInput(format!("point {i} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-cloud made of the given indices (repeats allowed), attributes carried.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        Some([c[0] / n, c[1] / n, c[2] / n])
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some((lo, hi))
    }

    pub fn bbox_diagonal(&self) -> Option<f64> {
        self.bounds().map(|(lo, hi)| vec3::dist(lo, hi))
    }

    pub fn bbox_longest_side(&self) -> Option<f64> {
        self.bounds()
            .map(|(lo, hi)| (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max))
    }

    /// Returns a copy with every point translated by `t`.
    pub fn translated(&self, t: Point3) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = vec3::add(*p, t);
        }
        out
    }

    /// Returns a copy with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> PointCloud {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = vec3::scale(*p, s);
        }
        out
    }

    /// Concatenates clouds; attributes survive only when every part carries them.
    pub fn concat(parts: &[&PointCloud]) -> PointCloud {
        let points = parts.iter().flat_map(|p| p.points.iter().copied()).collect();
        let colors = if parts.iter().all(|p| p.colors.is_some()) {
            Some(
                parts
                    .iter()
                    .flat_map(|p| p.colors.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        let labels = if parts.iter().all(|p| p.labels.is_some()) {
            Some(
                parts
                    .iter()
                    .flat_map(|p| p.labels.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        PointCloud {
            points,
            colors,
            labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_rejects_mismatched_attributes() {
        let pc = PointCloud {
            points: vec![[0.0; 3]; 2],
            colors: Some(vec![[0.0; 3]]),
            labels: None,
        };
        assert!(matches!(pc.validate(), Err(Error::DimensionMismatch(_))));
        let pc = PointCloud::new(vec![[0.0; 3]; 2]);
        assert!(pc.clone().with_labels(vec![1]).is_err());
        assert!(pc.with_labels(vec![1, 2]).is_ok());
    }

    #[test]
    fn validate_rejects_non_finite() {
        let pc = PointCloud::new(vec![[0.0, f64::NAN, 0.0]]);
        assert!(matches!(pc.validate(), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bounds_and_centroid() {
        let pc = PointCloud::new(vec![[0.0, 0.0, 0.0], [2.0, 4.0, -4.0]]);
        assert_eq!(pc.centroid(), Some([1.0, 2.0, -2.0]));
        assert_eq!(pc.bbox_longest_side(), Some(4.0));
        assert_eq!(pc.bbox_diagonal(), Some(6.0));
        assert_eq!(PointCloud::default().centroid(), None);
    }
}
