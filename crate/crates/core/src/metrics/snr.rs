use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vec3, PointCloud};
use crate::index::SpatialIndex;

/// How ground-truth points are paired with predicted points in the noise term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePairing {
    /// Each ground-truth point against its nearest predicted point.
    #[default]
    Nn,
    /// Point `i` against point `i`; clouds must have equal size.
    IndexMatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrResult {
    pub p_signal: f64,
    pub p_noise: f64,
    /// `+inf` when the noise power is exactly zero.
    pub snr_db: f64,
}

pub fn snr(pred: &PointCloud, gt: &PointCloud) -> Result<SnrResult> {
    snr_with(pred, gt, NoisePairing::Nn)
}

/// Signal power is the mean squared distance of the ground truth to its
/// centroid; noise power is the mean squared ground-truth-to-prediction error
/// under `pairing`; both are normalised by the ground-truth size.
pub fn snr_with(pred: &PointCloud, gt: &PointCloud, pairing: NoisePairing) -> Result<SnrResult> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Empty("SNR needs non-empty clouds".into()));
    }
    let n = gt.len() as f64;
    let mu = gt.centroid().expect("non-empty");
    let p_signal = gt.points.iter().map(|&g| vec3::dist_sq(g, mu)).sum::<f64>() / n;
    let p_noise = match pairing {
        NoisePairing::Nn => {
            let index = SpatialIndex::from_cloud(pred);
            gt.points
                .iter()
                .map(|&g| index.nearest(g).expect("non-empty").dist_sq)
                .sum::<f64>()
                / n
        }
        NoisePairing::IndexMatched => {
            if pred.len() != gt.len() {
                return Err(Error::UnequalSizes(pred.len(), gt.len()));
            }
            gt.points
                .iter()
                .zip(&pred.points)
                .map(|(&g, &p)| vec3::dist_sq(g, p))
                .sum::<f64>()
                / n
        }
    };
    let snr_db = if p_noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (p_signal / p_noise).log10()
    };
    Ok(SnrResult {
        p_signal,
        p_noise,
        snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pc(p: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(p.to_vec())
    }

    #[test]
    fn perfect_prediction_is_infinite() {
        let g = pc(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let r = snr(&g, &g).unwrap();
        assert_eq!(r.p_noise, 0.0);
        assert_eq!(r.snr_db, f64::INFINITY);
    }

    #[test]
    fn shifted_pair_gives_twenty_db() {
        let g = pc(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let r = snr(&g.translated([0.0, 0.1, 0.0]), &g).unwrap();
        assert_eq!(r.p_signal, 1.0);
        assert!((r.p_noise - 0.01).abs() < 1e-15);
        assert!((r.snr_db - 20.0).abs() < 1e-9);
        let r2 = snr(&g.translated([0.0, 0.2, 0.0]), &g).unwrap();
        assert!((r.snr_db - r2.snr_db - 10.0 * 4f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn index_matched_pairing() {
        let g = pc(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        // Swapped order: nn pairing sees zero error, index pairing does not.
        let p = pc(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert_eq!(snr_with(&p, &g, NoisePairing::Nn).unwrap().p_noise, 0.0);
        assert_eq!(snr_with(&p, &g, NoisePairing::IndexMatched).unwrap().p_noise, 4.0);
        assert!(snr_with(&pc(&[[0.0; 3]]), &g, NoisePairing::IndexMatched).is_err());
        assert!(snr(&PointCloud::default(), &g).is_err());
    }
}
