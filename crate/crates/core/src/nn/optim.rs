use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            t: 0,
        }
    }
}

/// One AdamW step: `w ← w − lr·wd·w`, then the bias-corrected Adam update.
pub fn adamw_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamWConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() || p.shape() != state.v[i].shape() {
            return Err(Error::DimensionMismatch(format!(
                "parameter {i}: {}x{} vs gradient {}x{}",
                p.rows, p.cols, g.rows, g.cols
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i].data, &mut state.v[i].data);
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let w = p.data[j] - cfg.lr * cfg.weight_decay * p.data[j];
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            p.data[j] = w - cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Vec<Tensor> {
        vec![Tensor::scalar(v)]
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = one(0.0);
        let mut s = AdamState::new(&p);
        adamw_step(&mut p, &one(1.0), &mut s, &cfg).unwrap();
        // m̂ = v̂ = 1 after bias correction
        let expect = -0.1 * (1.0 / (1.0 + cfg.eps));
        assert!((p[0].item() - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_without_decay_is_identity() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut p = one(0.75);
        let mut s = AdamState::new(&p);
        adamw_step(&mut p, &one(0.0), &mut s, &cfg).unwrap();
        assert_eq!(p[0].item(), 0.75);
    }

    #[test]
    fn decoupled_decay_only() {
        let cfg = AdamWConfig::default();
        let mut p = one(1.0);
        let mut s = AdamState::new(&p);
        adamw_step(&mut p, &one(0.0), &mut s, &cfg).unwrap();
        assert_eq!(p[0].item(), 1.0 - 1e-4 * 5e-4);
        assert!((1.0 - p[0].item() - 5e-8).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = vec![Tensor::zeros(2, 2)];
        let mut s = AdamState::new(&p);
        assert!(adamw_step(&mut p, &[Tensor::zeros(1, 2)], &mut s, &AdamWConfig::default()).is_err());
        assert!(adamw_step(&mut p, &[], &mut s, &AdamWConfig::default()).is_err());
    }
}
