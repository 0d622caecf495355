use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::index::SpatialIndex;

use super::stats::median;

/// Both directed terms of the symmetric Chamfer distance (squared distances).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamferResult {
    pub cd: f64,
    pub cd_pred_to_gt: f64,
    pub cd_gt_to_pred: f64,
}

/// Chamfer distance restricted to the visible (top) and occluded (bottom)
/// parts of the ground truth.
///
/// A partition whose ground-truth side is empty has no defined distance and
/// comes back as `None`. When the ground-truth side is populated but no
/// predicted point falls in that partition, the prediction missed the region
/// entirely; the value is then the coverage term alone (mean squared distance
/// from those ground-truth points to the whole prediction) and the matching
/// `*_pred_empty` flag is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChamferResult {
    pub cd_top: Option<f64>,
    pub cd_bottom: Option<f64>,
    pub visible_fraction: f64,
    pub gt_top: usize,
    pub gt_bottom: usize,
    pub pred_top: usize,
    pub pred_bottom: usize,
    pub top_pred_empty: bool,
    pub bottom_pred_empty: bool,
}

fn require_non_empty(pc: &PointCloud, what: &str) -> Result<()> {
    if pc.is_empty() {
        return Err(Error::Empty(format!("{what} cloud is empty")));
    }
    Ok(())
}

/// Squared distance from every point of `from` to its nearest neighbour in `to`.
pub fn nearest_dist_sq(from: &[Point3], to: &SpatialIndex) -> Vec<f64> {
    from.iter()
        .map(|&p| to.nearest(p).map_or(f64::INFINITY, |n| n.dist_sq))
        .collect()
}

fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn chamfer(pred: &PointCloud, gt: &PointCloud) -> Result<ChamferResult> {
    require_non_empty(pred, "predicted")?;
    require_non_empty(gt, "ground-truth")?;
    Ok(chamfer_points(&pred.points, &gt.points))
}

fn chamfer_points(pred: &[Point3], gt: &[Point3]) -> ChamferResult {
    let gt_index = SpatialIndex::build(gt);
    let pred_index = SpatialIndex::build(pred);
    let a = mean_of(&nearest_dist_sq(pred, &gt_index));
    let b = mean_of(&nearest_dist_sq(gt, &pred_index));
    ChamferResult {
        cd: a + b,
        cd_pred_to_gt: a,
        cd_gt_to_pred: b,
    }
}

/// Twice the median nearest-neighbour spacing of the input cloud.
/// Coincident points (as left by padding resamplers) count once.
pub fn default_visibility_threshold(input_partial: &PointCloud) -> Result<f64> {
    let mut unique = input_partial.points.clone();
    unique.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    unique.dedup();
    if unique.len() < 2 {
        return Err(Error::InvalidInput(
            "visibility threshold needs at least two distinct input points".into(),
        ));
    }
    let index = SpatialIndex::build(&unique);
    let spacing: Vec<f64> = unique
        .iter()
        .enumerate()
        .map(|(i, &p)| index.knn_excluding(p, 1, i).map(|n| n[0].distance()))
        .collect::<Result<_>>()?;
    Ok(2.0 * median(&spacing).expect("non-empty"))
}

pub fn chamfer_split(
    pred: &PointCloud,
    gt: &PointCloud,
    input_partial: &PointCloud,
    tau_vis: f64,
) -> Result<SplitChamferResult> {
    require_non_empty(pred, "predicted")?;
    require_non_empty(gt, "ground-truth")?;
    require_non_empty(input_partial, "input partial")?;
    if !(tau_vis > 0.0) {
        return Err(Error::InvalidInput(format!(
            "visibility threshold must be positive, got {tau_vis}"
        )));
    }
    let input_index = SpatialIndex::from_cloud(input_partial);
    let tau_sq = tau_vis * tau_vis;
    let split = |pts: &[Point3]| -> (Vec<Point3>, Vec<Point3>) {
        let d = nearest_dist_sq(pts, &input_index);
        let mut top = Vec::new();
        let mut bottom = Vec::new();
        for (p, d) in pts.iter().zip(d) {
            if d <= tau_sq {
                top.push(*p);
            } else {
                bottom.push(*p);
            }
        }
        (top, bottom)
    };
    let (gt_top, gt_bottom) = split(&gt.points);
    let (pred_top, pred_bottom) = split(&pred.points);
    let pred_index = SpatialIndex::from_cloud(pred);
    let part = |p: &[Point3], g: &[Point3]| -> Option<f64> {
        if g.is_empty() {
            None
        } else if p.is_empty() {
            Some(mean_of(&nearest_dist_sq(g, &pred_index)))
        } else {
            Some(chamfer_points(p, g).cd)
        }
    };
    Ok(SplitChamferResult {
        cd_top: part(&pred_top, &gt_top),
        cd_bottom: part(&pred_bottom, &gt_bottom),
        visible_fraction: gt_top.len() as f64 / gt.len() as f64,
        gt_top: gt_top.len(),
        gt_bottom: gt_bottom.len(),
        pred_top: pred_top.len(),
        pred_bottom: pred_bottom.len(),
        top_pred_empty: !gt_top.is_empty() && pred_top.is_empty(),
        bottom_pred_empty: !gt_bottom.is_empty() && pred_bottom.is_empty(),
    })
}

/// F-score at a distance threshold: harmonic mean of precision (predicted
/// points within `threshold` of the ground truth) and recall (ground-truth
/// points within `threshold` of the prediction).
pub fn fscore(pred: &PointCloud, gt: &PointCloud, threshold: f64) -> Result<f64> {
    require_non_empty(pred, "predicted")?;
    require_non_empty(gt, "ground-truth")?;
    if !(threshold > 0.0) {
        return Err(Error::InvalidInput(format!(
            "F-score threshold must be positive, got {threshold}"
        )));
    }
    let t2 = threshold * threshold;
    let within = |from: &[Point3], to: &[Point3]| {
        let index = SpatialIndex::build(to);
        let hits = nearest_dist_sq(from, &index)
            .into_iter()
            .filter(|&d| d <= t2)
            .count();
        hits as f64 / from.len() as f64
    };
    let precision = within(&pred.points, &gt.points);
    let recall = within(&gt.points, &pred.points);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// `fraction` (0.01 for F-score@1%) of the longest ground-truth bbox side.
pub fn fscore_threshold(gt: &PointCloud, fraction: f64) -> Result<f64> {
    let side = gt
        .bbox_longest_side()
        .ok_or_else(|| Error::Empty("ground-truth cloud is empty".into()))?;
    if side == 0.0 {
        return Err(Error::InvalidInput(
            "ground-truth cloud has zero extent".into(),
        ));
    }
    Ok(fraction * side)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pc(p: &[Point3]) -> PointCloud {
        PointCloud::new(p.to_vec())
    }

    #[test]
    fn chamfer_hand_values() {
        let a = pc(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        assert_eq!(chamfer(&a, &a).unwrap().cd, 0.0);
        let r = chamfer(&pc(&[[0.0; 3]]), &pc(&[[1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(r.cd, 2.0);
        let r = chamfer(&pc(&[[0.0; 3]]), &pc(&[[0.0; 3], [2.0, 0.0, 0.0]])).unwrap();
        assert_eq!(r.cd_pred_to_gt, 0.0);
        assert_eq!(r.cd_gt_to_pred, 2.0);
        assert_eq!(r.cd, 2.0);
        assert!(chamfer(&PointCloud::default(), &a).is_err());
    }

    #[test]
    fn split_degenerate_cases() {
        let gt = pc(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let pred = pc(&[[0.1, 0.0, 0.0], [1.9, 0.0, 0.0]]);
        let full = chamfer(&pred, &gt).unwrap().cd;
        let r = chamfer_split(&pred, &gt, &gt, 0.5).unwrap();
        assert_eq!(r.cd_top, Some(full));
        assert_eq!(r.cd_bottom, None);
        assert_eq!(r.visible_fraction, 1.0);

        let far = pc(&[[1000.0, 0.0, 0.0]]);
        let r = chamfer_split(&pred, &gt, &far, 0.5).unwrap();
        assert_eq!(r.cd_top, None);
        assert_eq!(r.cd_bottom, Some(full));
        assert_eq!(r.visible_fraction, 0.0);

        assert!(chamfer_split(&pred, &gt, &PointCloud::default(), 0.5).is_err());
        assert!(chamfer_split(&pred, &gt, &gt, 0.0).is_err());
    }

    #[test]
    fn split_two_clusters() {
        let a: Vec<Point3> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let b: Vec<Point3> = (0..6).map(|i| [100.0 + i as f64, 0.0, 0.0]).collect();
        let gt = pc(&[a.clone(), b].concat());
        let r = chamfer_split(&gt, &gt, &pc(&a), 0.5).unwrap();
        assert_eq!(r.cd_top, Some(0.0));
        assert_eq!(r.cd_bottom, Some(0.0));
        assert_eq!(r.visible_fraction, 0.4);
        assert_eq!((r.gt_top, r.gt_bottom), (4, 6));
    }

    #[test]
    fn split_prediction_missing_a_region_uses_coverage_term() {
        let a: Vec<Point3> = (0..4).map(|i| [i as f64, 0.0, 0.0]).collect();
        let b: Vec<Point3> = vec![[13.0, 0.0, 0.0], [23.0, 0.0, 0.0]];
        let gt = pc(&[a.clone(), b].concat());
        // Copying the visible input covers only the top partition.
        let r = chamfer_split(&pc(&a), &gt, &pc(&a), 0.5).unwrap();
        assert_eq!(r.cd_top, Some(0.0));
        assert!(r.bottom_pred_empty);
        assert_eq!(r.cd_bottom, Some((100.0 + 400.0) / 2.0));
    }

    #[test]
    fn fscore_cases() {
        let g = pc(&[[0.0; 3]]);
        assert_eq!(fscore(&g, &g, 0.1).unwrap(), 1.0);
        assert_eq!(fscore(&pc(&[[1000.0, 0.0, 0.0]]), &g, 1.0).unwrap(), 0.0);
        let pred = pc(&[[0.0; 3], [10.0, 0.0, 0.0]]);
        let f = fscore(&pred, &g, 1.0).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        assert!(fscore(&pred, &g, 0.0).is_err());
    }

    #[test]
    fn threshold_from_bbox() {
        let g = pc(&[[0.0; 3], [50.0, 20.0, 10.0]]);
        assert_eq!(fscore_threshold(&g, 0.01).unwrap(), 0.5);
    }

    #[test]
    fn default_tau_is_twice_median_spacing() {
        let p = pc(&[[0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [6.0, 0.0, 0.0]]);
        // Spacings 1, 1, 2, 3 -> median 1.5.
        assert_eq!(default_visibility_threshold(&p).unwrap(), 3.0);
        let padded = pc(&[[0.0; 3], [0.0; 3], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [6.0, 0.0, 0.0], [6.0, 0.0, 0.0]]);
        assert_eq!(default_visibility_threshold(&padded).unwrap(), 3.0);
        assert!(default_visibility_threshold(&pc(&[[1.0; 3], [1.0; 3]])).is_err());
    }
}
