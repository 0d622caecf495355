use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::index::{occupancy, GridSpec};

/// Voxel-occupancy IoU on a shared grid anchored at the joint min corner.
pub fn voxel_iou(a: &PointCloud, b: &PointCloud, voxel_size: f64) -> Result<f64> {
    let joint = match (a.bounds(), b.bounds()) {
        (None, None) => return Err(Error::Empty("voxel IoU of two empty clouds".into())),
        (Some((lo, _)), None) | (None, Some((lo, _))) => lo,
        (Some((la, _)), Some((lb, _))) => [0, 1, 2].map(|k| la[k].min(lb[k])),
    };
    let spec = GridSpec::new(joint, voxel_size)?;
    let oa = occupancy(a, &spec)?;
    let ob = occupancy(b, &spec)?;
    let inter = oa.occupied.intersection(&ob.occupied).count();
    let union = oa.occupied.union(&ob.occupied).count();
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegMetrics {
    pub accuracy: f64,
    /// IoU for every label seen in either prediction or ground truth.
    pub per_class_iou: BTreeMap<u32, f64>,
    /// Mean IoU over the labels present in the ground truth.
    pub mean_iou: f64,
}

impl SegMetrics {
    pub fn class_iou(&self, label: u32) -> Option<f64> {
        self.per_class_iou.get(&label).copied()
    }
}

pub fn seg_metrics(pred: &PointCloud, gt: &PointCloud) -> Result<SegMetrics> {
    let p = pred
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("predicted cloud has no labels".into()))?;
    let g = gt
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("ground-truth cloud has no labels".into()))?;
    seg_metrics_labels(p, g)
}

pub fn seg_metrics_labels(pred: &[u32], gt: &[u32]) -> Result<SegMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted labels vs {} ground-truth labels",
            pred.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::Empty("no labels to score".into()));
    }
    // (tp, fp, fn) per label
    let mut counts: BTreeMap<u32, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0usize;
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            correct += 1;
            counts.entry(g).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().2 += 1;
        }
    }
    let per_class_iou: BTreeMap<u32, f64> = counts
        .iter()
        .map(|(&l, &(tp, fp, fn_))| (l, tp as f64 / (tp + fp + fn_) as f64))
        .collect();
    let present: Vec<f64> = counts
        .iter()
        .filter(|(_, &(tp, _, fn_))| tp + fn_ > 0)
        .map(|(l, _)| per_class_iou[l])
        .collect();
    Ok(SegMetrics {
        accuracy: correct as f64 / gt.len() as f64,
        mean_iou: present.iter().sum::<f64>() / present.len() as f64,
        per_class_iou,
    })
}
