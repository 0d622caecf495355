//! Procedural data: superquadric vertebra stand-ins, a small posed RGB-D
//! fixture on disk, and occluded shapes for completion experiments.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{FrameRecord, Manifest, MeshRecord, MANIFEST_VERSION};
use crate::error::Result;
use crate::geometry::{render_depth_and_mask, vec3, CameraIntrinsics, ColorImage, DepthImage, Point3, PointCloud, RigidTransform, TriangleMesh};
use crate::io::ply::PlyFormat;
use crate::io::{atomic_write_str, write_color_png, write_depth_png, write_json, write_mask_png, write_ply_mesh};

fn spow(v: f64, e: f64) -> f64 {
    v.signum() * v.abs().powf(e)
}

/// Closed superquadric surface with semi-axes `radii` and shape exponents
/// `e1` (latitude) and `e2` (longitude), centred at `center`.
pub fn superquadric_mesh(
    center: Point3,
    radii: [f64; 3],
    e1: f64,
    e2: f64,
    rings: usize,
    segments: usize,
    level: u32,
) -> Result<TriangleMesh> {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let point = |eta: f64, omega: f64| -> Point3 {
        let (ce, se) = (eta.cos(), eta.sin());
        let (co, so) = (omega.cos(), omega.sin());
        [
            center[0] + radii[0] * spow(ce, e1) * spow(co, e2),
            center[1] + radii[1] * spow(ce, e1) * spow(so, e2),
            center[2] + radii[2] * spow(se, e1),
        ]
    };
    let mut v = vec![[center[0], center[1], center[2] - radii[2]]];
    for i in 1..rings {
        let eta = -PI / 2.0 + PI * i as f64 / rings as f64;
        for j in 0..segments {
            v.push(point(eta, 2.0 * PI * j as f64 / segments as f64));
        }
    }
    v.push([center[0], center[1], center[2] + radii[2]]);
    let top = v.len() - 1;
    let ring = |i: usize, j: usize| 1 + i * segments + j % segments;
    let mut t = Vec::new();
    for j in 0..segments {
        t.push([0, ring(0, j + 1), ring(0, j)]);
    }
    for i in 0..rings - 2 {
        for j in 0..segments {
            t.push([ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)]);
            t.push([ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)]);
        }
    }
    for j in 0..segments {
        t.push([top, ring(rings - 2, j), ring(rings - 2, j + 1)]);
    }
    TriangleMesh::new(v, t, level)
}

/// Layout of the generated RGB-D fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub specimens: usize,
    pub levels: u32,
    pub views: usize,
    pub frames_per_view: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            specimens: 2,
            levels: 2,
            views: 1,
            frames_per_view: 2,
            width: 80,
            height: 64,
            focal: 200.0,
            seed: 7,
        }
    }
}

/// Config tuned for the fixture: desk model, small clouds, short training.
pub const FIXTURE_CONFIG: &str = r#"seed = 7
threads = 0

[projection]
spine_points = 1024
voxel_mm = 0.5

[labels]
tau_bg_mm = 2.0

[metrics]
gt_points = 512
emd_points = 128

[model]
preset = "desk"

[train]
lr = 1e-3
batch_size = 4
epochs = 2
seed = 7
"#;

/// Vertebra meshes of one specimen in CT coordinates (mm).
pub fn specimen_meshes(specimen: usize, levels: u32) -> Result<Vec<TriangleMesh>> {
    (1..=levels)
        .map(|l| {
            let y = (l as f64 - (levels as f64 + 1.0) / 2.0) * 36.0;
            let k = specimen as f64;
            superquadric_mesh(
                [0.0, y, 0.0],
                [14.0 + 1.5 * k, 10.0 + 0.5 * k + l as f64, 9.0],
                0.6,
                0.8,
                12,
                20,
                l,
            )
        })
        .collect()
}

/// Writes meshes, depth/color/mask PNGs, `manifest.json` and
/// `fixture.toml` under `dir`; returns the manifest path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let intr = CameraIntrinsics::new(
        spec.focal,
        spec.focal,
        (spec.width as f64 - 1.0) / 2.0,
        (spec.height as f64 - 1.0) / 2.0,
        spec.width,
        spec.height,
    )?;
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        meshes: Vec::new(),
        frames: Vec::new(),
    };
    for s in 0..spec.specimens {
        let id = format!("S{}", s + 2);
        let meshes = specimen_meshes(s, spec.levels)?;
        for m in &meshes {
            let rel = PathBuf::from(format!("meshes/{id}_L{}.ply", m.level));
            write_ply_mesh(&dir.join(&rel), m, PlyFormat::Ascii)?;
            manifest.meshes.push(MeshRecord {
                specimen: id.clone(),
                level: m.level,
                path: rel,
            });
        }
        for view in 0..spec.views {
            for f in 0..spec.frames_per_view {
                let yaw = rng.random_range(-0.35..0.35) + if view % 2 == 1 { PI } else { 0.0 };
                let pitch = rng.random_range(-0.25..0.25);
                let dist = rng.random_range(230.0..260.0);
                let pose = RigidTransform::from_axis_angle([1.0, 0.0, 0.0], pitch, [0.0; 3]).compose(
                    &RigidTransform::from_axis_angle([0.0, 1.0, 0.0], yaw, [0.0; 3]),
                );
                let pose = RigidTransform::translation([0.0, 0.0, dist]).compose(&pose);
                let (levels, depth) = render_depth_and_mask(&meshes, &pose, &intr)?;
                let depth = DepthImage::new(
                    depth.width,
                    depth.height,
                    depth.values.iter().map(|d| d.round()).collect(),
                )?;
                let color = ColorImage::new(
                    intr.width,
                    intr.height,
                    levels
                        .values
                        .iter()
                        .map(|&l| match l {
                            0 => [0.1, 0.1, 0.1],
                            l => [0.9, 0.8 - 0.15 * l as f64, 0.6],
                        })
                        .collect(),
                )?;
                let stem = format!("frames/{id}_v{view}_f{f:03}");
                let rec = FrameRecord {
                    specimen: id.clone(),
                    view: format!("v{view}"),
                    frame: format!("f{f:03}"),
                    depth: PathBuf::from(format!("{stem}_depth.png")),
                    color: Some(PathBuf::from(format!("{stem}_color.png"))),
                    spine_mask: Some(PathBuf::from(format!("{stem}_spine.png"))),
                    level_mask: Some(PathBuf::from(format!("{stem}_levels.png"))),
                    intrinsics: intr,
                    pose: {
                        let m = pose.to_matrix4();
                        std::array::from_fn(|r| std::array::from_fn(|c| m[r * 4 + c]))
                    },
                };
                write_depth_png(&dir.join(&rec.depth), &depth)?;
                write_color_png(&dir.join(rec.color.as_ref().expect("set above")), &color)?;
                write_mask_png(&dir.join(rec.spine_mask.as_ref().expect("set above")), &levels.to_binary())?;
                write_mask_png(&dir.join(rec.level_mask.as_ref().expect("set above")), &levels)?;
                manifest.frames.push(rec);
            }
        }
    }
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    atomic_write_str(&dir.join("fixture.toml"), FIXTURE_CONFIG)?;
    Ok(path)
}

/// A complete shape and its occluded view.
#[derive(Debug, Clone, PartialEq)]
pub struct OccludedShape {
    pub partial: PointCloud,
    pub complete: PointCloud,
    pub removed_fraction: f64,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = vec3::norm(v);
        if n > 1e-3 && n <= 1.0 {
            return vec3::scale(v, 1.0 / n);
        }
    }
}

/// Random sphere or superellipsoid `Σ|x_k/a_k|^p = 1` (semi-axes 8 to 20,
/// exponent 2 for spheres, otherwise in [1.5, 4]) with `n` surface points,
/// cut by a random half-space that removes between `removed.0` and
/// `removed.1` of them.
pub fn occluded_shape(seed: u64, n: usize, removed: (f64, f64)) -> OccludedShape {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sphere = rng.random_bool(0.3);
    let (radii, p) = if sphere {
        let r = rng.random_range(8.0..20.0);
        ([r; 3], 2.0)
    } else {
        (
            [rng.random_range(8.0..20.0), rng.random_range(8.0..20.0), rng.random_range(8.0..20.0)],
            rng.random_range(1.5..4.0),
        )
    };
    let center = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
    let points: Vec<Point3> = (0..n)
        .map(|_| {
            let d = unit_vector(&mut rng);
            let s = (0..3).map(|k| (d[k] / radii[k]).abs().powf(p)).sum::<f64>().powf(-1.0 / p);
            vec3::add(center, vec3::scale(d, s))
        })
        .collect();
    let normal = unit_vector(&mut rng);
    let frac = rng.random_range(removed.0..removed.1);
    let mut proj: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, q)| (vec3::dot(vec3::sub(*q, center), normal), i))
        .collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = n - ((n as f64 * frac).round() as usize).min(n - 1);
    let mut kept: Vec<usize> = proj[..keep].iter().map(|(_, i)| *i).collect();
    kept.sort_unstable();
    let complete = PointCloud::new(points);
    OccludedShape {
        partial: complete.select(&kept),
        removed_fraction: 1.0 - keep as f64 / n as f64,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn superquadric_is_closed_and_valid() {
        let m = superquadric_mesh([0.0; 3], [3.0, 2.0, 1.0], 1.0, 1.0, 8, 12, 1).unwrap();
        assert_eq!(m.vertices.len(), 2 + 7 * 12);
        assert_eq!(m.triangles.len(), 2 * 12 + 2 * 6 * 12);
        // closed 2-manifold: every edge used twice
        let mut edges = std::collections::BTreeMap::new();
        for t in &m.triangles {
            for k in 0..3 {
                let (a, b) = (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]));
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }

    #[test]
    fn occlusion_removes_requested_fraction() {
        for seed in 0..20 {
            let s = occluded_shape(seed, 1000, (0.4, 0.75));
            assert!((0.4..=0.75).contains(&s.removed_fraction), "{}", s.removed_fraction);
            assert_eq!(s.partial.len() + (s.removed_fraction * 1000.0).round() as usize, 1000);
        }
    }
}
