//! Z-buffer rasterization of labelled meshes into a mask and a depth map.
//!
//! Coverage is sampled at integer pixel coordinates (pixel centres, matching
//! [`CameraIntrinsics::unproject_point`]) with a top-left fill rule, so two
//! triangles sharing an edge never both claim a pixel on it. Triangles are
//! clipped against a near plane before projection; facing is ignored.

use super::{vec3, BinaryMask, CameraIntrinsics, DepthImage, Point3, RigidTransform, TriangleMesh};
use crate::error::{Error, Result};

const NEAR_MM: f64 = 1e-3;

/// Renders the vertebra-level mask: every pixel carries the level of the
/// nearest triangle covering it, 0 where nothing does.
pub fn render_mask(
    meshes: &[TriangleMesh],
    t: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Result<BinaryMask> {
    Ok(render_depth_and_mask(meshes, t, intr)?.0)
}

/// Level mask plus the camera-space depth of the visible surface at each
/// pixel centre (0 where nothing is hit).
pub fn render_depth_and_mask(
    meshes: &[TriangleMesh],
    t: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Result<(BinaryMask, DepthImage)> {
    if meshes.is_empty() {
        return Err(Error::Empty("render_mask needs at least one mesh".into()));
    }
    let mut mask = BinaryMask::zeros(intr.width, intr.height);
    // Stores 1/z; larger is nearer.
    let mut zbuf = vec![0.0f64; intr.width * intr.height];
    for mesh in meshes {
        let cam: Vec<Point3> = mesh.vertices.iter().map(|&p| t.apply(p)).collect();
        for tri in &mesh.triangles {
            let poly = clip_near([cam[tri[0]], cam[tri[1]], cam[tri[2]]]);
            if poly.len() < 3 {
                continue;
            }
            let screen: Vec<[f64; 3]> = poly
                .iter()
                .map(|&p| {
                    let pr = intr
                        .project_point(p)
                        .expect("clipped vertices lie in front of the camera");
                    [pr.u, pr.v, 1.0 / pr.depth]
                })
                .collect();
            for k in 1..screen.len() - 1 {
                raster_triangle(
                    [screen[0], screen[k], screen[k + 1]],
                    mesh.level,
                    &mut mask,
                    &mut zbuf,
                );
            }
        }
    }
    let depth = zbuf.iter().map(|&iz| if iz > 0.0 { 1.0 / iz } else { 0.0 }).collect();
    let depth = DepthImage::new(intr.width, intr.height, depth)?;
    Ok((mask, depth))
}

/// Sutherland–Hodgman against `z >= NEAR_MM`.
fn clip_near(tri: [Point3; 3]) -> Vec<Point3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a[2] >= NEAR_MM;
        let b_in = b[2] >= NEAR_MM;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let s = (NEAR_MM - a[2]) / (b[2] - a[2]);
            let mut p = vec3::add(a, vec3::scale(vec3::sub(b, a), s));
            p[2] = NEAR_MM;
            out.push(p);
        }
    }
    out
}

#[inline]
fn edge(a: [f64; 3], b: [f64; 3], px: f64, py: f64) -> f64 {
    (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0])
}

/// With the winding normalised so that all edge functions are positive
/// inside, a top edge runs in +u along a constant v and a left edge runs
/// toward -v.
#[inline]
fn is_top_left(a: [f64; 3], b: [f64; 3]) -> bool {
    let dy = b[1] - a[1];
    let dx = b[0] - a[0];
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn raster_triangle(mut v: [[f64; 3]; 3], label: u32, mask: &mut BinaryMask, zbuf: &mut [f64]) {
    let mut area = edge(v[0], v[1], v[2][0], v[2][1]);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    if area < 0.0 {
        v.swap(1, 2);
        area = -area;
    }
    let (w, h) = (mask.width as f64, mask.height as f64);
    let min_u = v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_u = v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).floor().min(w - 1.0);
    let min_v = v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_v = v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).floor().min(h - 1.0);
    if min_u > max_u || min_v > max_v {
        return;
    }
    let tl = [
        is_top_left(v[1], v[2]),
        is_top_left(v[2], v[0]),
        is_top_left(v[0], v[1]),
    ];
    let covers = |e: f64, top_left: bool| e > 0.0 || (e == 0.0 && top_left);
    for py in (min_v as usize)..=(max_v as usize) {
        let y = py as f64;
        for px in (min_u as usize)..=(max_u as usize) {
            let x = px as f64;
            let w0 = edge(v[1], v[2], x, y);
            let w1 = edge(v[2], v[0], x, y);
            let w2 = edge(v[0], v[1], x, y);
            if !(covers(w0, tl[0]) && covers(w1, tl[1]) && covers(w2, tl[2])) {
                continue;
            }
            let inv_z = (w0 * v[0][2] + w1 * v[1][2] + w2 * v[2][2]) / area;
            let idx = py * mask.width + px;
            if inv_z > zbuf[idx] {
                zbuf[idx] = inv_z;
                mask.values[idx] = label;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{mask_bbox, sample_mesh_surface};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap()
    }

    fn quad(z: f64, half: f64, level: u32) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                [-half, -half, z],
                [half, -half, z],
                [half, half, z],
                [-half, half, z],
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            level,
        )
        .unwrap()
    }

    /// Analytic point-in-triangle test on the projected corners; `None`
    /// for pixel centers on an edge, where the fill rule decides.
    fn inside(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<bool> {
        let s = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let (d0, d1, d2) = (s(a, b), s(b, c), s(c, a));
        if [d0, d1, d2].iter().any(|d| d.abs() < 1e-9) {
            return None;
        }
        Some((d0 > 0.0 && d1 > 0.0 && d2 > 0.0) || (d0 < 0.0 && d1 < 0.0 && d2 < 0.0))
    }

    #[test]
    fn triangle_covers_principal_point() {
        let k = intr();
        let m = TriangleMesh::new(
            vec![[-5.0, -5.0, 100.0], [5.0, -3.0, 100.0], [0.0, 6.0, 100.0]],
            vec![[0, 1, 2]],
            3,
        )
        .unwrap();
        let mask = render_mask(std::slice::from_ref(&m), &RigidTransform::identity(), &k).unwrap();
        assert_eq!(mask.get(32, 24), 3);
        let proj: Vec<[f64; 2]> = m
            .vertices
            .iter()
            .map(|&p| {
                let pr = k.project_point(p).unwrap();
                [pr.u, pr.v]
            })
            .collect();
        for v in 0..48 {
            for u in 0..64 {
                if let Some(expect) = inside([u as f64, v as f64], proj[0], proj[1], proj[2]) {
                    assert_eq!(mask.get(u, v) == 3, expect, "pixel ({u},{v})");
                }
            }
        }
    }

    #[test]
    fn mesh_behind_camera_gives_empty_mask() {
        let mask = render_mask(&[quad(-100.0, 5.0, 1)], &RigidTransform::identity(), &intr()).unwrap();
        assert_eq!(mask.count_nonzero(), 0);
    }

    #[test]
    fn empty_mesh_list_is_an_error() {
        assert!(render_mask(&[], &RigidTransform::identity(), &intr()).is_err());
    }

    #[test]
    fn nearer_mesh_wins() {
        let k = intr();
        let near = quad(100.0, 3.0, 2);
        let far = quad(200.0, 12.0, 4);
        for order in [[near.clone(), far.clone()], [far.clone(), near.clone()]] {
            let mask = render_mask(&order, &RigidTransform::identity(), &k).unwrap();
            assert_eq!(mask.get(32, 24), 2);
            // Outside the near quad's footprint the far one shows.
            assert_eq!(mask.get(32 + 2, 24), 2);
            assert_eq!(mask.get(32 + 4, 24), 4);
            assert_eq!(mask.get(32 - 5, 24), 4);
        }
    }

    #[test]
    fn shared_edges_are_filled_exactly_once() {
        // Pixel-aligned square split along its diagonal; diagonal pixel
        // centres sit exactly on the shared edge.
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 16, 16).unwrap();
        let tri = |a: Point3, b: Point3, c: Point3| {
            TriangleMesh::new(vec![a, b, c], vec![[0, 1, 2]], 1).unwrap()
        };
        let (p00, p10, p11, p01) = (
            [2.0, 2.0, 1.0],
            [10.0, 2.0, 1.0],
            [10.0, 10.0, 1.0],
            [2.0, 10.0, 1.0],
        );
        let m1 = render_mask(&[tri(p00, p10, p11)], &RigidTransform::identity(), &k).unwrap();
        let m2 = render_mask(&[tri(p00, p11, p01)], &RigidTransform::identity(), &k).unwrap();
        for v in 0..16 {
            for u in 0..16 {
                let n = (m1.get(u, v) != 0) as u32 + (m2.get(u, v) != 0) as u32;
                // Top-left rule: left and top borders filled, right and bottom not.
                let expect = u32::from((2..10).contains(&u) && (2..10).contains(&v));
                assert_eq!(n, expect, "pixel ({u},{v})");
            }
        }
    }

    #[test]
    fn straddling_near_plane_is_clipped() {
        let k = intr();
        let m = TriangleMesh::new(
            vec![[-5.0, -5.0, -50.0], [5.0, -5.0, 100.0], [0.0, 5.0, 100.0]],
            vec![[0, 1, 2]],
            5,
        )
        .unwrap();
        let mask = render_mask(&[m], &RigidTransform::identity(), &k).unwrap();
        assert!(mask.count_nonzero() > 0);
    }

    #[test]
    fn bbox_contains_projected_vertices_and_matches_dense_samples() {
        let k = intr();
        let t = RigidTransform::from_axis_angle([0.3, 1.0, 0.2], 0.6, [1.0, -2.0, 150.0]);
        let m = TriangleMesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [20.0, 0.0, 0.0],
                [0.0, 15.0, 0.0],
                [0.0, 0.0, 18.0],
            ],
            vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
            1,
        )
        .unwrap();
        let mask = render_mask(std::slice::from_ref(&m), &t, &k).unwrap();
        let bbox = mask_bbox(&mask).unwrap();
        for &p in &m.vertices {
            let pr = k.project_point(t.apply(p)).unwrap();
            let (u, v) = (pr.u.round(), pr.v.round());
            if u >= 0.0 && v >= 0.0 && u < 64.0 && v < 48.0 {
                let (u, v) = (u as usize, v as usize);
                assert!(
                    bbox.u_min <= u + 1 && u <= bbox.u_max + 1 && bbox.v_min <= v + 1 && v <= bbox.v_max + 1
                );
            }
        }
        // Every densely sampled surface point projects within one pixel of
        // the rendered footprint, and every rendered pixel has a sample
        // within one pixel.
        let dense = sample_mesh_surface(&m.transformed(&t), 200_000, 2).unwrap();
        let mut hit = BinaryMask::zeros(64, 48);
        for &p in &dense.points {
            let pr = k.project_point(p).unwrap();
            let (u, v) = (pr.u.round() as i64, pr.v.round() as i64);
            if (0..64).contains(&u) && (0..48).contains(&v) {
                hit.set(u as usize, v as usize, 1);
            }
        }
        let near = |m: &BinaryMask, u: usize, v: usize| {
            (-1i64..=1).any(|du| {
                (-1i64..=1).any(|dv| {
                    let (x, y) = (u as i64 + du, v as i64 + dv);
                    (0..64).contains(&x) && (0..48).contains(&y) && m.get(x as usize, y as usize) != 0
                })
            })
        };
        for v in 0..48 {
            for u in 0..64 {
                if mask.get(u, v) != 0 {
                    assert!(near(&hit, u, v), "rendered ({u},{v}) has no sample nearby");
                }
                if hit.get(u, v) != 0 {
                    assert!(near(&mask, u, v), "sample at ({u},{v}) not rendered nearby");
                }
            }
        }
    }
}
