use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::loss::cd_loss;
use super::model::{CompletionModel, Normalization};
use super::optim::{adamw_step, AdamState, AdamWConfig};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::index::random_downsample;
use crate::metrics::chamfer;
use crate::metrics::report::fmt_f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops early once this many optimizer steps have been taken.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamWConfig::default();
        Self {
            lr: a.lr,
            weight_decay: a.weight_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            batch_size: 32,
            epochs: 50,
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay > 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be positive, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub partial: PointCloud,
    pub complete: PointCloud,
}

/// One row of the loss curve. Epoch 0 is the untrained model.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    /// Mean training loss (coarse + fine Chamfer, normalized units).
    pub train_loss: Option<f64>,
    /// Mean Chamfer distance of completions on the validation pairs.
    pub val_cd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub epochs: Vec<EpochStats>,
}

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut s = String::from("epoch,steps,train_loss,val_cd\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.steps, opt(e.train_loss), opt(e.val_cd)));
        }
        s
    }
}

/// SplitMix64 finalizer over a base seed and a sequence of indices.
pub fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(*p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Resamples a partial cloud to the model's input cardinality.
pub fn prepare_input(partial: &PointCloud, n_input: usize, seed: u64) -> Result<PointCloud> {
    random_downsample(&PointCloud::new(partial.points.clone()), n_input, seed)
}

/// Loss and parameter gradients for one `(input, complete)` pair, where
/// `input` already has `n_input` points.
pub fn sample_loss(model: &CompletionModel, input: &[Point3], complete: &[Point3]) -> Result<(f64, Vec<Tensor>)> {
    let norm = Normalization::fit(input)?;
    let x = norm.apply(input);
    let gt = norm.apply(complete);
    let mut g = Graph::new();
    model.bind(&mut g);
    let out = model.forward(&mut g, &x)?;
    let lf = cd_loss(&mut g, out.fine, &gt)?;
    let lc = cd_loss(&mut g, out.coarse, &gt)?;
    let l = g.add(lf, lc)?;
    let grads = g.backward(l)?;
    Ok((g.value(l).item(), grads.param_grads(&g)))
}

/// Mean Chamfer distance of model completions against the complete clouds.
pub fn evaluate_cd(model: &CompletionModel, pairs: &[TrainingPair], seed: u64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("no evaluation pairs".into()));
    }
    let n_input = model.config().n_input;
    let cds = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let input = prepare_input(&p.partial, n_input, mix_seed(seed, &[u64::MAX, i as u64]))?;
            let pred = model.complete(&input)?;
            Ok(chamfer(&pred, &p.complete)?.cd)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(cds.iter().sum::<f64>() / cds.len() as f64)
}

/// Seeded mini-batch AdamW training on the summed coarse and fine Chamfer
/// loss. Per-sample gradients may be computed in parallel; they are always
/// reduced in batch order, so results do not depend on the thread count.
pub fn train(
    model: &mut CompletionModel,
    data: &[TrainingPair],
    validation: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<LossCurve> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let n_input = model.config().n_input;
    let adam = cfg.adamw();
    let mut state = AdamState::new(model.params().tensors());
    let val = |m: &CompletionModel| -> Result<Option<f64>> {
        if validation.is_empty() {
            Ok(None)
        } else {
            evaluate_cd(m, validation, cfg.seed).map(Some)
        }
    };
    let mut curve = LossCurve {
        epochs: vec![EpochStats {
            epoch: 0,
            steps: 0,
            train_loss: None,
            val_cd: val(model)?,
        }],
    };
    let mut steps = 0usize;
    'outer: for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[epoch as u64])));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let results = batch
                .par_iter()
                .map(|&i| {
                    let s = mix_seed(cfg.seed, &[epoch as u64, i as u64]);
                    let input = prepare_input(&data[i].partial, n_input, s)?;
                    sample_loss(model, &input.points, &data[i].complete.points)
                })
                .collect::<Result<Vec<_>>>()?;
            let inv = 1.0 / batch.len() as f64;
            let mut total: Vec<Tensor> = model
                .params()
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect();
            for (loss, grads) in &results {
                loss_sum += loss;
                for (acc, g) in total.iter_mut().zip(grads) {
                    acc.add_assign(g);
                }
            }
            seen += results.len();
            for t in &mut total {
                t.data.iter_mut().for_each(|v| *v *= inv);
            }
            adamw_step(model.params_mut().tensors_mut(), &total, &mut state, &adam)?;
            steps += 1;
        }
        let stats = EpochStats {
            epoch,
            steps,
            train_loss: (seen > 0).then(|| loss_sum / seen as f64),
            val_cd: val(model)?,
        };
        log::info!(
            "epoch {epoch}: steps {steps}, train loss {:?}, val cd {:?}",
            stats.train_loss,
            stats.val_cd
        );
        curve.epochs.push(stats);
        if cfg.max_steps.is_some_and(|m| steps >= m) {
            break 'outer;
        }
    }
    Ok(curve)
}
