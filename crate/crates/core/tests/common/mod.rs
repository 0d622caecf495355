//! Shared fixtures for the integration tests and the acceptance runner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinecomp::geometry::{Point3, PointCloud, RigidTransform};
use spinecomp::index::random_downsample;
use spinecomp::metrics::{chamfer, chamfer_split, default_visibility_threshold};
use spinecomp::nn::layers::{DecoderBlock, EdgeConv, GeometryAwareBlock, LayerNorm, Linear, Mlp, MultiHeadAttention};
use spinecomp::nn::train::{evaluate_cd, mix_seed, prepare_input, train, TrainConfig, TrainingPair};
use spinecomp::nn::{cd_loss, grad_check, CompletionModel, GradCheckConfig, GradCheckReport, Graph, ModelConfig, ParamStore, Tensor, Var};
use spinecomp::pipeline::synth::occluded_shape;
use spinecomp::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-extent..extent)))
        .collect()
}

pub fn cloud(points: &[Point3]) -> PointCloud {
    PointCloud::new(points.to_vec())
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_rigid(rng: &mut ChaCha8Rng) -> RigidTransform {
    let axis: Point3 = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let axis = if axis.iter().all(|a| a.abs() < 1e-3) { [0.0, 0.0, 1.0] } else { axis };
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let t: Point3 = std::array::from_fn(|_| rng.random_range(-100.0..100.0));
    RigidTransform::from_axis_angle(axis, angle, t)
}

/// Scalar probe `Σ w ⊙ x` with fixed pseudo-random weights, so every output
/// entry gets a distinct gradient.
pub fn probe(g: &mut Graph, x: Var) -> Result<Var> {
    let (r, c) = g.shape(x);
    let w = random_tensor(&mut rng(0xC0FFEE ^ (r * 131 + c) as u64), r, c);
    let w = g.constant(w);
    let y = g.mul(x, w)?;
    Ok(g.sum_all(y))
}

fn check<F>(inputs: &[Tensor], f: F) -> GradCheckReport
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check(inputs, f, &GradCheckConfig::default()).expect("gradient check runs")
}

/// Layer inputs followed by the layer's parameters; the closure sees the
/// parameters bound as graph parameters.
fn check_layer<F>(store: &ParamStore, inputs: Vec<Tensor>, f: F) -> GradCheckReport
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let n = inputs.len();
    let mut all = inputs;
    all.extend(store.tensors().iter().cloned());
    check(&all, |g, v| {
        g.use_params(v[n..].to_vec());
        f(g, &v[..n])
    })
}

/// Finite-difference checks of every differentiable primitive and layer.
pub fn op_gradchecks() -> Vec<(&'static str, GradCheckReport)> {
    let mut r = rng(42);
    let mut out = Vec::new();
    let a34 = random_tensor(&mut r, 3, 4);
    let b34 = random_tensor(&mut r, 3, 4);
    let b42 = random_tensor(&mut r, 4, 2);
    let b54 = random_tensor(&mut r, 5, 4);
    let row4 = random_tensor(&mut r, 1, 4);
    let a35 = random_tensor(&mut r, 3, 5);
    let a63 = random_tensor(&mut r, 6, 3);
    let a26 = random_tensor(&mut r, 2, 6);

    out.push(("matmul", check(&[a34.clone(), b42], |g, v| {
        let y = g.matmul(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("matmul_nt", check(&[a34.clone(), b54], |g, v| {
        let y = g.matmul_nt(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("add", check(&[a34.clone(), b34.clone()], |g, v| {
        let y = g.add(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("sub", check(&[a34.clone(), b34.clone()], |g, v| {
        let y = g.sub(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("mul", check(&[a34.clone(), b34.clone()], |g, v| {
        let y = g.mul(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("add_row", check(&[a34.clone(), row4.clone()], |g, v| {
        let y = g.add_row(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("mul_row", check(&[a34.clone(), row4], |g, v| {
        let y = g.mul_row(v[0], v[1])?;
        probe(g, y)
    })));
    out.push(("scale", check(std::slice::from_ref(&a34), |g, v| {
        let y = g.scale(v[0], -2.5);
        probe(g, y)
    })));
    out.push(("gelu", check(std::slice::from_ref(&a34), |g, v| {
        let y = g.gelu(v[0]);
        probe(g, y)
    })));
    out.push(("softmax_rows", check(std::slice::from_ref(&a35), |g, v| {
        let y = g.softmax_rows(v[0]);
        probe(g, y)
    })));
    out.push(("normalize_rows", check(std::slice::from_ref(&a35), |g, v| {
        let y = g.normalize_rows(v[0], 1e-5);
        probe(g, y)
    })));
    out.push(("gather_rows", check(std::slice::from_ref(&a63), |g, v| {
        let y = g.gather_rows(v[0], &[2, 0, 2, 5])?;
        probe(g, y)
    })));
    out.push(("concat_cols", check(&[a34.clone(), a35.clone()], |g, v| {
        let y = g.concat_cols(&[v[0], v[1]])?;
        probe(g, y)
    })));
    out.push(("slice_cols", check(&[a35], |g, v| {
        let y = g.slice_cols(v[0], 1, 4)?;
        probe(g, y)
    })));
    out.push(("group_max", check(std::slice::from_ref(&a63), |g, v| {
        let y = g.group_max(v[0], 3)?;
        probe(g, y)
    })));
    out.push(("max_rows", check(&[a63], |g, v| {
        let y = g.max_rows(v[0])?;
        probe(g, y)
    })));
    out.push(("reshape", check(&[a26], |g, v| {
        let y = g.reshape(v[0], 4, 3)?;
        probe(g, y)
    })));
    out.push(("sum_all", check(std::slice::from_ref(&a34), |g, v| {
        let y = g.gelu(v[0]);
        Ok(g.sum_all(y))
    })));

    let mut s = ParamStore::new();
    let lin = Linear::new(&mut s, &mut r, "lin", 4, 3);
    out.push(("linear", check_layer(&s, vec![a34.clone()], |g, v| {
        let y = lin.forward(g, v[0])?;
        probe(g, y)
    })));
    let mut s = ParamStore::new();
    let ln = LayerNorm::new(&mut s, "ln", 4);
    s.tensors_mut()[0] = random_tensor(&mut r, 1, 4);
    s.tensors_mut()[1] = random_tensor(&mut r, 1, 4);
    out.push(("layer_norm", check_layer(&s, vec![a34.clone()], |g, v| {
        let y = ln.forward(g, v[0])?;
        probe(g, y)
    })));
    let mut s = ParamStore::new();
    let mlp = Mlp::new(&mut s, &mut r, "mlp", [4, 6, 2]);
    out.push(("mlp", check_layer(&s, vec![a34], |g, v| {
        let y = mlp.forward(g, v[0])?;
        probe(g, y)
    })));

    let mut s = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut s, &mut r, "mha", 8, 2).unwrap();
    let q = random_tensor(&mut r, 4, 8);
    let kv = random_tensor(&mut r, 6, 8);
    out.push(("mha", check_layer(&s, vec![q, kv], |g, v| {
        let y = mha.forward(g, v[0], v[1])?;
        probe(g, y)
    })));

    let pts = random_points(&mut r, 12, 1.0);
    let mut s = ParamStore::new();
    let ec = EdgeConv::new(&mut s, &mut r, "ec", 4, 6);
    let feats = random_tensor(&mut r, 12, 4);
    out.push(("edgeconv", check_layer(&s, vec![feats], |g, v| {
        let y = ec.forward(g, &pts, v[0], 4)?;
        probe(g, y)
    })));

    let mut s = ParamStore::new();
    let block = GeometryAwareBlock::new(&mut s, &mut r, "enc", 8, 2).unwrap();
    let tokens = random_tensor(&mut r, 12, 8);
    out.push(("geometry_aware_block", check_layer(&s, vec![tokens.clone()], |g, v| {
        let y = block.forward(g, v[0], &pts, 4)?;
        probe(g, y)
    })));

    let mut s = ParamStore::new();
    let dec = DecoderBlock::new(&mut s, &mut r, "dec", 8, 2).unwrap();
    let queries = random_tensor(&mut r, 10, 8);
    let qpts = random_points(&mut r, 10, 1.0);
    let nbr = spinecomp::index::knn_graph(&qpts, 4).unwrap();
    out.push(("decoder_block", check_layer(&s, vec![queries, tokens], |g, v| {
        let y = dec.forward(g, v[0], &nbr, 4, v[1])?;
        probe(g, y)
    })));

    let pred = random_tensor(&mut r, 32, 3);
    let gt = random_points(&mut r, 48, 1.0);
    out.push(("cd_loss", check(&[pred], |g, v| cd_loss(g, v[0], &gt))));

    out.push(("desk_model", model_gradcheck()));
    out
}

/// Desk configuration within the gradient-check budget (64 points, width 32).
pub fn small_desk_config() -> ModelConfig {
    ModelConfig {
        n_input: 64,
        n_tokens: 16,
        n_coarse: 16,
        fold_factor: 4,
        ..ModelConfig::desk()
    }
}

/// Gradient of the training loss (fine + coarse Chamfer) with respect to
/// every parameter tensor of a desk-scale model.
pub fn model_gradcheck() -> GradCheckReport {
    let cfg = small_desk_config();
    let model = CompletionModel::new(cfg.clone(), 3).unwrap();
    let mut r = rng(9);
    let input = random_points(&mut r, cfg.n_input, 0.5);
    let gt = random_points(&mut r, 80, 0.5);
    let cfg_check = GradCheckConfig {
        samples_per_input: 6,
        ..GradCheckConfig::default()
    };
    grad_check(
        model.params().tensors(),
        |g, v| {
            g.use_params(v.to_vec());
            let out = model.forward(g, &input)?;
            let a = cd_loss(g, out.fine, &gt)?;
            let b = cd_loss(g, out.coarse, &gt)?;
            g.add(a, b)
        },
        &cfg_check,
    )
    .unwrap()
}

/// Outcome of the occluded-shape completion benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub init_cd: f64,
    pub trained_cd: f64,
    pub model_cd_bottom: f64,
    pub copy_cd_bottom: f64,
    pub steps: usize,
}

pub const BENCH_SHAPES: u64 = 200;
pub const BENCH_HOLDOUT: usize = 40;
pub const BENCH_STEPS: usize = 200;

/// Trains the desk model on occluded spheres and superquadrics and scores
/// the held-out shapes against the copy-input baseline.
pub fn completion_benchmark(steps: usize) -> BenchmarkOutcome {
    let shapes: Vec<TrainingPair> = (0..BENCH_SHAPES)
        .map(|i| {
            let s = occluded_shape(1000 + i, 1024, (0.40, 0.75));
            TrainingPair {
                partial: s.partial,
                complete: s.complete,
            }
        })
        .collect();
    let (train_set, holdout) = shapes.split_at(shapes.len() - BENCH_HOLDOUT);
    let cfg = ModelConfig::desk();
    let mut model = CompletionModel::new(cfg.clone(), 0).unwrap();
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 32,
        epochs: usize::MAX,
        max_steps: Some(steps),
        seed: 0,
        ..TrainConfig::default()
    };
    let eval_seed = 5;
    let init_cd = evaluate_cd(&model, holdout, eval_seed).unwrap();
    let curve = train(&mut model, train_set, &[], &tc).unwrap();
    let trained_cd = evaluate_cd(&model, holdout, eval_seed).unwrap();
    let (mut mb, mut cb) = (0.0, 0.0);
    for (i, p) in holdout.iter().enumerate() {
        let s = mix_seed(eval_seed, &[i as u64]);
        let tau = default_visibility_threshold(&p.partial).unwrap();
        let pred = model.complete(&prepare_input(&p.partial, cfg.n_input, s).unwrap()).unwrap();
        let copy = random_downsample(&p.partial, cfg.n_output(), s).unwrap();
        mb += chamfer_split(&pred, &p.complete, &p.partial, tau).unwrap().cd_bottom.unwrap();
        cb += chamfer_split(&copy, &p.complete, &p.partial, tau).unwrap().cd_bottom.unwrap();
    }
    let n = holdout.len() as f64;
    BenchmarkOutcome {
        init_cd,
        trained_cd,
        model_cd_bottom: mb / n,
        copy_cd_bottom: cb / n,
        steps: curve.epochs.last().map_or(0, |e| e.steps),
    }
}

/// Mean Chamfer distance between two clouds, for quick assertions.
pub fn cd(a: &PointCloud, b: &PointCloud) -> f64 {
    chamfer(a, b).unwrap().cd
}
