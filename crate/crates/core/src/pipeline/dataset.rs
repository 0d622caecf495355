//! Dataset manifest and sample assembly.
//!
//! The manifest is one JSON document; paths are relative to its directory.
//!
//! ```json
//! {
//!   "version": 1,
//!   "meshes": [{"specimen": "s2", "level": 1, "path": "meshes/s2_L1.ply"}],
//!   "frames": [{
//!     "specimen": "s2", "view": "v0", "frame": "f000",
//!     "depth": "frames/s2_v0_f000_depth.png",
//!     "color": "frames/s2_v0_f000_color.png",
//!     "spine_mask": "frames/s2_v0_f000_spine.png",
//!     "level_mask": "frames/s2_v0_f000_levels.png",
//!     "intrinsics": {"fx": 300.0, "fy": 300.0, "cx": 47.5, "cy": 39.5, "width": 96, "height": 80},
//!     "pose": [[1,0,0,0],[0,1,0,0],[0,0,1,300],[0,0,0,1]]
//!   }]
//! }
//! ```
//!
//! `pose` is T_CT^CAM, mapping mesh (CT) coordinates into the camera frame.
//! `color`, `spine_mask` and `level_mask` are optional. Without a spine
//! mask the posed meshes are rendered to obtain one. A level mask is an
//! external vertebra segmentation: when present, partial clouds are cut by
//! it and segmentation scores are reported against the geometric labels.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extract::extract_vertebra;
use super::labels::{generate_gt_labels, labels_from_mask};
use crate::config::{Downsample, ExperimentConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    render_mask, sample_mesh_surface, unproject, CameraIntrinsics, PointCloud, RigidTransform, TriangleMesh,
};
use crate::index::{fps, random_downsample, voxel_downsample};
use crate::io::{read_color_png, read_depth_png, read_json, read_mask_png, read_ply_mesh};
use crate::metrics::seg_metrics;
use crate::nn::train::mix_seed;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub meshes: Vec<MeshRecord>,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshRecord {
    pub specimen: String,
    pub level: u32,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub specimen: String,
    pub view: String,
    pub frame: String,
    pub depth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spine_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_mask: Option<PathBuf>,
    pub intrinsics: CameraIntrinsics,
    /// Row-major 4×4 T_CT^CAM.
    pub pose: [[f64; 4]; 4],
}

impl FrameRecord {
    pub fn transform(&self) -> Result<RigidTransform> {
        let flat: Vec<f64> = self.pose.iter().flatten().copied().collect();
        RigidTransform::from_matrix4(&flat)
    }

    /// Identifier used in report rows.
    pub fn id(&self) -> String {
        format!("{}/{}", self.view, self.frame)
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = read_json(path)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Json {
                path: path.to_path_buf(),
                message: format!("unsupported manifest version {}", m.version),
            });
        }
        Ok(m)
    }

    /// Specimen ids in order of first appearance among the frames.
    pub fn specimens(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.frames {
            if !out.contains(&f.specimen) {
                out.push(f.specimen.clone());
            }
        }
        out
    }
}

/// One vertebra of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub specimen: String,
    pub frame: String,
    pub level: u32,
    /// Visible vertebra surface (camera frame, mm).
    pub partial: PointCloud,
    /// Points sampled from the posed mesh.
    pub complete: PointCloud,
    pub seg_iou: Option<f64>,
    pub seg_accuracy: Option<f64>,
}

/// A vertebra left out of the dataset, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipRecord {
    pub specimen: String,
    pub frame: String,
    pub level: u32,
    pub points: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub specimens: Vec<String>,
    pub samples: Vec<SampleRecord>,
    pub skipped: Vec<SkipRecord>,
}

impl Dataset {
    pub fn skipped_csv(&self) -> String {
        let mut s = String::from("specimen,frame,level,points,reason\n");
        for k in &self.skipped {
            s.push_str(&format!("{},{},{},{},{}\n", k.specimen, k.frame, k.level, k.points, k.reason));
        }
        s
    }
}

/// Reduces a spine cloud to exactly `cfg.projection.spine_points` points.
pub fn downsample_spine(cloud: &PointCloud, cfg: &ExperimentConfig, seed: u64) -> Result<PointCloud> {
    let n = cfg.projection.spine_points;
    match cfg.projection.method {
        Downsample::VoxelRandom => {
            let v = voxel_downsample(cloud, cfg.projection.voxel_mm)?;
            random_downsample(&v, n, seed)
        }
        Downsample::Random => random_downsample(cloud, n, seed),
        Downsample::Fps if cloud.len() >= n => fps(cloud, n, seed),
        Downsample::Fps => random_downsample(cloud, n, seed),
    }
}

/// Meshes per specimen, scaled to millimetres and sorted by level.
pub fn load_meshes(manifest: &Manifest, base: &Path, mesh_scale_mm: f64) -> Result<BTreeMap<String, Vec<TriangleMesh>>> {
    let mut out: BTreeMap<String, Vec<TriangleMesh>> = BTreeMap::new();
    for m in &manifest.meshes {
        let mesh = read_ply_mesh(&base.join(&m.path), m.level)?.scaled(mesh_scale_mm);
        out.entry(m.specimen.clone()).or_default().push(mesh);
    }
    for v in out.values_mut() {
        v.sort_by_key(|m| m.level);
    }
    Ok(out)
}

/// Unprojected, downsampled spine cloud of one frame.
pub fn frame_spine_cloud(
    rec: &FrameRecord,
    base: &Path,
    meshes: &[TriangleMesh],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PointCloud> {
    let mut depth = read_depth_png(&base.join(&rec.depth))?;
    depth.values.iter_mut().for_each(|v| *v *= cfg.units.depth_scale_mm);
    let color = rec.color.as_ref().map(|p| read_color_png(&base.join(p))).transpose()?;
    let mask = match (&rec.spine_mask, &rec.level_mask) {
        (Some(p), _) | (None, Some(p)) => read_mask_png(&base.join(p))?.to_binary(),
        (None, None) => render_mask(meshes, &rec.transform()?, &rec.intrinsics)?.to_binary(),
    };
    let cloud = unproject(&depth, &rec.intrinsics, Some(&mask), color.as_ref())?;
    if cloud.is_empty() {
        return Ok(cloud);
    }
    downsample_spine(&cloud, cfg, seed)
}

fn frame_samples(
    index: usize,
    rec: &FrameRecord,
    base: &Path,
    meshes: &BTreeMap<String, Vec<TriangleMesh>>,
    cfg: &ExperimentConfig,
) -> Result<(Vec<SampleRecord>, Vec<SkipRecord>)> {
    let meshes = meshes.get(&rec.specimen).ok_or_else(|| {
        Error::InvalidInput(format!("no meshes listed for specimen {}", rec.specimen))
    })?;
    let pose = rec.transform()?;
    rec.intrinsics.validate()?;
    let seed = mix_seed(cfg.seed, &[index as u64]);
    let spine = frame_spine_cloud(rec, base, meshes, cfg, seed)?;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let skip = |level: u32, points: usize, reason: &str| SkipRecord {
        specimen: rec.specimen.clone(),
        frame: rec.id(),
        level,
        points,
        reason: reason.to_string(),
    };
    if spine.is_empty() {
        skipped.extend(meshes.iter().map(|m| skip(m.level, 0, "empty spine cloud")));
        return Ok((samples, skipped));
    }
    let gt = generate_gt_labels(&spine, meshes, &pose, cfg.labels.tau_bg_mm)?;
    let pred = match &rec.level_mask {
        Some(p) => Some(labels_from_mask(&spine, &read_mask_png(&base.join(p))?, &rec.intrinsics)?),
        None => None,
    };
    let seg = pred.as_ref().map(|p| seg_metrics(p, &gt)).transpose()?;
    for mesh in meshes {
        let source = pred.as_ref().unwrap_or(&gt);
        let partial = match extract_vertebra(source, mesh.level)? {
            Some(p) if p.len() >= cfg.labels.min_points => p,
            Some(p) => {
                skipped.push(skip(mesh.level, p.len(), "too few points"));
                continue;
            }
            None => {
                skipped.push(skip(mesh.level, 0, "level not visible"));
                continue;
            }
        };
        let posed = mesh.transformed(&pose);
        let complete = sample_mesh_surface(
            &posed,
            cfg.metrics.gt_points,
            mix_seed(seed, &[u64::from(mesh.level)]),
        )?;
        samples.push(SampleRecord {
            specimen: rec.specimen.clone(),
            frame: rec.id(),
            level: mesh.level,
            partial: PointCloud::new(partial.points),
            complete,
            seg_iou: seg.as_ref().map(|s| s.class_iou(mesh.level).unwrap_or(0.0)),
            seg_accuracy: seg.as_ref().map(|s| s.accuracy),
        });
    }
    Ok((samples, skipped))
}

/// Loads every frame of the manifest into vertebra samples. Frames are
/// processed in parallel and collected in manifest order.
pub fn build_dataset(manifest_path: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let meshes = load_meshes(&manifest, base, cfg.units.mesh_scale_mm)?;
    let per_frame = manifest
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, rec)| frame_samples(i, rec, base, &meshes, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset {
        specimens: manifest.specimens(),
        ..Default::default()
    };
    for (s, k) in per_frame {
        ds.samples.extend(s);
        ds.skipped.extend(k);
    }
    for k in &ds.skipped {
        log::info!("skipped {} {} L{}: {} ({} points)", k.specimen, k.frame, k.level, k.reason, k.points);
    }
    Ok(ds)
}
