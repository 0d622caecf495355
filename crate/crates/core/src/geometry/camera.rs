use serde::{Deserialize, Serialize};

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Distortion-free pinhole intrinsics. Integer pixel coordinates address
/// pixel centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidInput(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn unproject_point(&self, u: f64, v: f64, depth: f64) -> Point3 {
        [
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ]
    }

    /// `None` when the point is not in front of the camera.
    #[inline]
    pub fn project_point(&self, p: Point3) -> Option<Projection> {
        if !(p[2] > 0.0) {
            return None;
        }
        Some(Projection {
            u: self.fx * p[0] / p[2] + self.cx,
            v: self.fy * p[1] / p[2] + self.cy,
            depth: p[2],
        })
    }

    fn check_dims(&self, what: &str, w: usize, h: usize) -> Result<()> {
        if w != self.width || h != self.height {
            return Err(Error::DimensionMismatch(format!(
                "{what} is {w}x{h}, intrinsics expect {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Per-pixel depth in millimetres, row-major; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "depth buffer has {} values for {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("negative or non-finite depth {v}")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }
}

/// Per-pixel RGB with channels in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<[f64; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, values: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "color buffer has {} pixels for {width}x{height}",
                values.len()
            )));
        }
        if values.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("color channel outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }
}

/// Pixel mask. A plain binary mask stores 0/1; multi-class masks store the
/// label per pixel. Any non-zero value counts as "inside".
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u32>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, values: Vec<u32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} values for {width}x{height}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.values[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, label: u32) {
        self.values[v * self.width + u] = label;
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Collapses a label mask to 0/1.
    pub fn to_binary(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| u32::from(v != 0)).collect(),
        }
    }
}

/// Inclusive pixel box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox2D {
    pub u_min: usize,
    pub v_min: usize,
    pub u_max: usize,
    pub v_max: usize,
}

impl BoundingBox2D {
    pub fn contains(&self, u: usize, v: usize) -> bool {
        (self.u_min..=self.u_max).contains(&u) && (self.v_min..=self.v_max).contains(&v)
    }
}

/// Back-projects every valid pixel (depth > 0, inside `mask` when given) in
/// row-major order. Colour is attached when `color` is given.
pub fn unproject(
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    mask: Option<&BinaryMask>,
    color: Option<&ColorImage>,
) -> Result<PointCloud> {
    intr.check_dims("depth image", depth.width, depth.height)?;
    if let Some(m) = mask {
        intr.check_dims("mask", m.width, m.height)?;
    }
    if let Some(c) = color {
        intr.check_dims("color image", c.width, c.height)?;
    }
    let mut points = Vec::new();
    let mut colors = color.map(|_| Vec::new());
    for v in 0..depth.height {
        for u in 0..depth.width {
            let idx = v * depth.width + u;
            let d = depth.values[idx];
            if d <= 0.0 {
                continue;
            }
            if let Some(m) = mask {
                if m.values[idx] == 0 {
                    continue;
                }
            }
            points.push(intr.unproject_point(u as f64, v as f64, d));
            if let (Some(out), Some(c)) = (colors.as_mut(), color) {
                out.push(c.values[idx]);
            }
        }
    }
    Ok(PointCloud {
        points,
        colors,
        labels: None,
    })
}

/// Projects every point; points with `z <= 0` come back as `None`.
pub fn project(pc: &PointCloud, intr: &CameraIntrinsics) -> Vec<Option<Projection>> {
    pc.points.iter().map(|&p| intr.project_point(p)).collect()
}

/// Tight box around the non-zero pixels.
pub fn mask_bbox(mask: &BinaryMask) -> Result<BoundingBox2D> {
    let mut bbox: Option<BoundingBox2D> = None;
    for v in 0..mask.height {
        for u in 0..mask.width {
            if mask.get(u, v) == 0 {
                continue;
            }
            bbox = Some(match bbox {
                None => BoundingBox2D {
                    u_min: u,
                    v_min: v,
                    u_max: u,
                    v_max: v,
                },
                Some(b) => BoundingBox2D {
                    u_min: b.u_min.min(u),
                    v_min: b.v_min.min(v),
                    u_max: b.u_max.max(u),
                    v_max: b.v_max.max(v),
                },
            });
        }
    }
    bbox.ok_or(Error::EmptyMask)
}
