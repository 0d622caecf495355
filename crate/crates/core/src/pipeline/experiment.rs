use rayon::prelude::*;

use super::dataset::{Dataset, SampleRecord};
use super::folds::{make_folds, FoldSpec};
use crate::config::{CompleterKind, ExperimentConfig, MetricsConfig};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::index::random_downsample;
use crate::metrics::report::{MetricsReport, MetricsRow};
use crate::metrics::{
    chamfer, chamfer_split, default_visibility_threshold, emd_approx, emd_exact_with_cap, fscore,
    fscore_threshold, snr_with, voxel_iou,
};
use crate::nn::train::{mix_seed, prepare_input, train, LossCurve, TrainingPair};
use crate::nn::CompletionModel;

/// Source of completed clouds.
#[derive(Debug, Clone, Copy)]
pub enum Completer<'a> {
    Model(&'a CompletionModel),
    /// Resampled ground truth.
    Oracle,
    /// Resampled partial input.
    CopyInput,
}

impl Completer<'_> {
    /// Completion of `sample` with `n_output` points.
    pub fn complete(&self, sample: &SampleRecord, n_output: usize, seed: u64) -> Result<PointCloud> {
        match self {
            Completer::Model(m) => {
                let input = prepare_input(&sample.partial, m.config().n_input, seed)?;
                m.complete(&input)
            }
            Completer::Oracle => random_downsample(&sample.complete, n_output, seed),
            Completer::CopyInput => random_downsample(&sample.partial, n_output, seed),
        }
    }
}

/// Full metric suite for one prediction.
pub fn evaluate_prediction(
    sample: &SampleRecord,
    pred: &PointCloud,
    cfg: &MetricsConfig,
    seed: u64,
) -> Result<MetricsRow> {
    let gt = &sample.complete;
    let partial = &sample.partial;
    let cd = chamfer(pred, gt)?.cd;
    let tau_vis = match cfg.tau_vis_mm {
        Some(t) => t,
        None => default_visibility_threshold(partial)?,
    };
    let split = chamfer_split(pred, gt, partial, tau_vis)?;
    let f1 = fscore(pred, gt, fscore_threshold(gt, cfg.fscore_fraction)?)?;
    let diag = gt.bbox_diagonal().filter(|d| *d > 0.0).unwrap_or(1.0);
    // Same draw on canonically ordered points for both sides, so clouds
    // holding the same points in any order get the same subset.
    let resample = |c: &PointCloud| -> Result<PointCloud> {
        let c = if c.len() == cfg.emd_points {
            c.clone()
        } else {
            let mut pts = c.points.clone();
            pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2])));
            random_downsample(&PointCloud::new(pts), cfg.emd_points, mix_seed(seed, &[1]))?
        };
        Ok(c.scaled(1.0 / diag))
    };
    let (pe, ge) = (resample(pred)?, resample(gt)?);
    let emd = if cfg.emd_points <= cfg.emd_exact_cap {
        emd_exact_with_cap(&pe, &ge, cfg.emd_exact_cap)?.emd
    } else {
        emd_approx(&pe, &ge, cfg.emd_epsilon)?.emd
    };
    let snr_db = snr_with(pred, gt, cfg.snr_pairing)?.snr_db;
    Ok(MetricsRow {
        specimen: sample.specimen.clone(),
        frame: sample.frame.clone(),
        level: sample.level,
        iou_input: voxel_iou(partial, gt, cfg.iou_voxel_mm)?,
        seg_iou: sample.seg_iou,
        seg_accuracy: sample.seg_accuracy,
        cd,
        cd_top: split.cd_top,
        cd_bottom: split.cd_bottom,
        f1,
        emd,
        snr_db,
    })
}

/// Completes and scores every sample; rows come back in input order.
pub fn evaluate_samples(
    samples: &[SampleRecord],
    completer: Completer<'_>,
    n_output: usize,
    cfg: &MetricsConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let si = mix_seed(seed, &[i as u64]);
            let pred = completer.complete(s, n_output, si)?;
            evaluate_prediction(s, &pred, cfg, si)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::new(rows))
}

pub fn training_pairs<'a>(samples: impl IntoIterator<Item = &'a SampleRecord>) -> Vec<TrainingPair> {
    samples
        .into_iter()
        .map(|s| TrainingPair {
            partial: s.partial.clone(),
            complete: s.complete.clone(),
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: FoldSpec,
    pub report: MetricsReport,
    pub curve: Option<LossCurve>,
    pub model: Option<CompletionModel>,
}

fn run_fold_inner(fold: &FoldSpec, samples: &[SampleRecord], cfg: &ExperimentConfig) -> Result<FoldOutcome> {
    let model_cfg = cfg.model_config()?;
    let held: Vec<SampleRecord> = samples.iter().filter(|s| s.specimen == fold.held_out).cloned().collect();
    let (model, curve) = match cfg.crossval.completer {
        CompleterKind::Model => {
            let train_pairs = training_pairs(samples.iter().filter(|s| fold.train.contains(&s.specimen)));
            let val_pairs = training_pairs(&held);
            let mut model = CompletionModel::new(model_cfg.clone(), mix_seed(cfg.model.seed, &[fold.seed]))?;
            let mut tc = cfg.train.clone();
            tc.seed = mix_seed(cfg.train.seed, &[fold.seed]);
            let curve = train(&mut model, &train_pairs, &val_pairs, &tc)?;
            (Some(model), Some(curve))
        }
        _ => (None, None),
    };
    let completer = match (&model, cfg.crossval.completer) {
        (Some(m), _) => Completer::Model(m),
        (None, CompleterKind::Oracle) => Completer::Oracle,
        (None, _) => Completer::CopyInput,
    };
    let report = evaluate_samples(&held, completer, model_cfg.n_output(), &cfg.metrics, fold.seed)?;
    Ok(FoldOutcome {
        fold: fold.clone(),
        report,
        curve,
        model,
    })
}

/// Trains on the fold's training specimens (for the model completer) and
/// scores every held-out sample. Errors carry the fold's specimen id.
pub fn run_fold(fold: &FoldSpec, samples: &[SampleRecord], cfg: &ExperimentConfig) -> Result<FoldOutcome> {
    run_fold_inner(fold, samples, cfg).map_err(|e| Error::Fold {
        fold: fold.held_out.clone(),
        source: Box::new(e),
    })
}

/// Leave-one-specimen-out over the dataset's specimens, in order.
pub fn run_crossval(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<FoldOutcome>> {
    let folds = make_folds(&ds.specimens, cfg.seed)?;
    folds.iter().map(|f| run_fold(f, &ds.samples, cfg)).collect()
}
