use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{vec3, Point3, PointCloud};

/// Farthest-point sampling starting from a seeded random index.
pub fn fps(pc: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if pc.is_empty() {
        return Err(Error::Empty("fps on an empty cloud".into()));
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..pc.len());
    fps_from(pc, n, start)
}

/// Farthest-point sampling from an explicit start index. Each step takes the
/// point maximising the distance to the chosen set (lowest index on ties).
pub fn fps_from(pc: &PointCloud, n: usize, start: usize) -> Result<PointCloud> {
    let idx = fps_indices(&pc.points, n, start)?;
    Ok(pc.select(&idx))
}

pub fn fps_indices(points: &[Point3], n: usize, start: usize) -> Result<Vec<usize>> {
    if n == 0 || n > points.len() {
        return Err(Error::InvalidInput(format!(
            "fps needs 1 <= n <= {}, got {n}",
            points.len()
        )));
    }
    if start >= points.len() {
        return Err(Error::InvalidInput(format!("fps start {start} out of range")));
    }
    let mut chosen = Vec::with_capacity(n);
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut taken = vec![false; points.len()];
    let mut current = start;
    for _ in 0..n {
        chosen.push(current);
        taken[current] = true;
        let c = points[current];
        let mut best = None::<(f64, usize)>;
        for (i, p) in points.iter().enumerate() {
            let d = vec3::dist_sq(*p, c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if !taken[i] && best.is_none_or(|(bd, _)| min_d[i] > bd) {
                best = Some((min_d[i], i));
            }
        }
        match best {
            Some((_, i)) => current = i,
            None => break,
        }
    }
    Ok(chosen)
}

/// Uniform random subset of size `n`. When `n` exceeds the cloud, every point
/// is kept once and the remainder is drawn with replacement.
pub fn random_downsample(pc: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    Ok(pc.select(&random_indices(pc.len(), n, seed)?))
}

pub(crate) fn random_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Empty("random_downsample on an empty cloud".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("random_downsample needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n <= len {
        let mut idx = rand::seq::index::sample(&mut rng, len, n).into_vec();
        idx.shuffle(&mut rng);
        Ok(idx)
    } else {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        idx.extend((len..n).map(|_| rng.random_range(0..len)));
        Ok(idx)
    }
}

/// Grid placement shared by occupancy queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point3,
    pub voxel_size: f64,
}

impl GridSpec {
    pub fn new(origin: Point3, voxel_size: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        Ok(Self { origin, voxel_size })
    }

    #[inline]
    pub fn cell(&self, p: Point3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.voxel_size).floor() as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Point3,
    pub voxel_size: f64,
    pub occupied: BTreeSet<[i64; 3]>,
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }
}

/// Cells holding at least one point.
pub fn occupancy(pc: &PointCloud, spec: &GridSpec) -> Result<VoxelGrid> {
    let spec = GridSpec::new(spec.origin, spec.voxel_size)?;
    Ok(VoxelGrid {
        origin: spec.origin,
        voxel_size: spec.voxel_size,
        occupied: pc.points.iter().map(|&p| spec.cell(p)).collect(),
    })
}

/// One point per occupied voxel (grid anchored at the cloud's min corner):
/// the member centroid, the majority label (lowest id on ties) and the mean
/// colour. Output is ordered by voxel key.
pub fn voxel_downsample(pc: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    let Some((lo, _)) = pc.bounds() else {
        GridSpec::new([0.0; 3], voxel_size)?;
        return Ok(PointCloud {
            points: vec![],
            colors: pc.colors.as_ref().map(|_| vec![]),
            labels: pc.labels.as_ref().map(|_| vec![]),
        });
    };
    let spec = GridSpec::new(lo, voxel_size)?;
    let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, &p) in pc.points.iter().enumerate() {
        cells.entry(spec.cell(p)).or_default().push(i);
    }
    let mut points = Vec::with_capacity(cells.len());
    let mut colors = pc.colors.as_ref().map(|_| Vec::with_capacity(cells.len()));
    let mut labels = pc.labels.as_ref().map(|_| Vec::with_capacity(cells.len()));
    for members in cells.values() {
        let inv = 1.0 / members.len() as f64;
        let mut c = [0.0; 3];
        for &i in members {
            c = vec3::add(c, pc.points[i]);
        }
        points.push(vec3::scale(c, inv));
        if let (Some(out), Some(src)) = (colors.as_mut(), pc.colors.as_ref()) {
            let mut rgb = [0.0; 3];
            for &i in members {
                rgb = vec3::add(rgb, src[i]);
            }
            out.push(vec3::scale(rgb, inv));
        }
        if let (Some(out), Some(src)) = (labels.as_mut(), pc.labels.as_ref()) {
            let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
            for &i in members {
                *votes.entry(src[i]).or_default() += 1;
            }
            // BTreeMap iterates ascending, so the first maximum is the lowest id.
            let mut best = (0u32, 0usize);
            for (&label, &count) in &votes {
                if count > best.1 {
                    best = (label, count);
                }
            }
            out.push(best.0);
        }
    }
    Ok(PointCloud {
        points,
        colors,
        labels,
    })
}
