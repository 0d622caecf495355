use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Coordinates checked per input tensor (all of them if the tensor is smaller).
    pub samples_per_input: usize,
    pub seed: u64,
    /// Lower bound on the denominator of the relative error.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            samples_per_input: 24,
            seed: 0,
            abs_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

fn eval<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.shape(out) != (1, 1) {
        return Err(Error::DimensionMismatch("grad_check needs a scalar function".into()));
    }
    Ok(g.value(out).item())
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// central differences with step `1e-5·(1+|x|)` on a random subsample of
/// input coordinates. Differences within the rounding bound of the
/// central difference count as zero error.
pub fn grad_check<F>(inputs: &[Tensor], f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(&g, *v)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    let mut work = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        let coords: Vec<usize> = if t.len() <= cfg.samples_per_input {
            (0..t.len()).collect()
        } else {
            sample(&mut rng, t.len(), cfg.samples_per_input).into_vec()
        };
        for j in coords {
            let x = t.data[j];
            let h = 1e-5 * (1.0 + x.abs());
            work[ti].data[j] = x + h;
            let fp = eval(&work, &f)?;
            work[ti].data[j] = x - h;
            let fm = eval(&work, &f)?;
            work[ti].data[j] = x;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[ti].data[j];
            // Rounding in fp and fm alone can move the quotient by this much;
            // without it an exactly-zero gradient would fail on noise.
            let roundoff = 4.0 * f64::EPSILON * (fp.abs() + fm.abs()) / (2.0 * h);
            let excess = ((a - numeric).abs() - roundoff).max(0.0);
            let rel = excess / a.abs().max(numeric.abs()).max(cfg.abs_floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((ti, j, a, numeric));
            }
        }
    }
    Ok(report)
}
