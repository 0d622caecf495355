use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vec3::{self, add, cross, dot, scale, sub};
use super::{Point3, PointCloud, RigidTransform};
use crate::error::{Error, Result};

/// Triangle surface of one vertebra; `level` is its class id (1..=5 for L1..L5).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub level: u32,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, level: u32) -> Result<Self> {
        let m = Self {
            vertices,
            triangles,
            level,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!(
                    "triangle {i} references vertex beyond {n}: {t:?}"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput(format!(
                    "triangle {i} repeats a vertex index: {t:?}"
                )));
            }
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("mesh has non-finite vertices".into()));
        }
        Ok(())
    }

    pub fn corners(&self, tri: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, tri: usize) -> f64 {
        let [a, b, c] = self.corners(tri);
        0.5 * vec3::norm(cross(sub(b, a), sub(c, a)))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Option<Point3> {
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for i in 0..self.triangles.len() {
            let [a, b, c] = self.corners(i);
            let w = self.triangle_area(i);
            acc = add(acc, scale(add(add(a, b), c), w / 3.0));
            total += w;
        }
        (total > 0.0).then(|| scale(acc, 1.0 / total))
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&p| t.apply(p)).collect(),
            triangles: self.triangles.clone(),
            level: self.level,
        }
    }

    pub fn scaled(&self, s: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&p| scale(p, s)).collect(),
            triangles: self.triangles.clone(),
            level: self.level,
        }
    }

    /// Squared distance from `p` to the closest point of the surface.
    pub fn distance_sq(&self, p: Point3) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.corners(i);
                point_triangle_distance_sq(p, a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Draws `n` surface points: triangles are chosen area-proportionally by
/// systematic sampling along the cumulative area (one random offset), and each
/// point is uniform over its triangle. Deterministic for a given seed.
pub fn sample_mesh_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::Empty("mesh has no triangles".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.random();
    let mut points = Vec::with_capacity(n);
    let mut tri = 0;
    for i in 0..n {
        let target = (i as f64 + offset) / n as f64 * total;
        while tri + 1 < cumulative.len() && cumulative[tri] <= target {
            tri += 1;
        }
        let [a, b, c] = mesh.corners(tri);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
        points.push(add(add(scale(a, wa), scale(b, wb)), scale(c, wc)));
    }
    Ok(PointCloud::new(points))
}

/// Squared distance between `p` and triangle `abc` (closest-point by Voronoi
/// region classification).
pub fn point_triangle_distance_sq(p: Point3, a: Point3, b: Point3, c: Point3) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return vec3::dist_sq(p, a);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return vec3::dist_sq(p, b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return vec3::dist_sq(p, add(a, scale(ab, v)));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return vec3::dist_sq(p, c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return vec3::dist_sq(p, add(a, scale(ac, w)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return vec3::dist_sq(p, add(b, scale(sub(c, b), w)));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let q = add(a, add(scale(ab, v), scale(ac, w)));
    vec3::dist_sq(p, q)
}
