use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{vec3, Point3};
use crate::index::SpatialIndex;

/// Differentiable Chamfer distance (squared, mean in both directions)
/// between the `n×3` prediction and fixed `gt` points. Nearest-neighbor
/// correspondences are held constant in the backward pass.
pub fn cd_loss(g: &mut Graph, pred: Var, gt: &[Point3]) -> Result<Var> {
    let (n, c) = g.shape(pred);
    if c != 3 {
        return Err(Error::DimensionMismatch(format!("prediction has {c} columns, expected 3")));
    }
    if n == 0 || gt.is_empty() {
        return Err(Error::Empty("chamfer loss needs non-empty point sets".into()));
    }
    let p = g.value(pred).to_points();
    let gt_index = SpatialIndex::build(gt);
    let pred_index = SpatialIndex::build(&p);
    let mut grad = Tensor::zeros(n, 3);
    let mut fwd = 0.0;
    for (i, pi) in p.iter().enumerate() {
        let nb = gt_index.nearest(*pi).expect("non-empty index");
        fwd += nb.dist_sq;
        let d = vec3::sub(*pi, gt[nb.index]);
        for (a, da) in d.iter().enumerate() {
            grad.data[i * 3 + a] += 2.0 * da / n as f64;
        }
    }
    let mut bwd = 0.0;
    for gj in gt {
        let nb = pred_index.nearest(*gj).expect("non-empty index");
        bwd += nb.dist_sq;
        let d = vec3::sub(p[nb.index], *gj);
        for (a, da) in d.iter().enumerate() {
            grad.data[nb.index * 3 + a] += 2.0 * da / gt.len() as f64;
        }
    }
    let value = fwd / n as f64 + bwd / gt.len() as f64;
    g.custom_scalar(pred, value, grad)
}
