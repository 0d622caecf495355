mod common;

use common::*;
use spinecomp::geometry::Point3;
use spinecomp::index::knn_graph;
use spinecomp::nn::checkpoint;
use spinecomp::nn::layers::{EdgeConv, GeometryAwareBlock, MultiHeadAttention};
use spinecomp::nn::train::sample_loss;
use spinecomp::nn::{train, CompletionModel, Graph, ParamStore, Tensor, TrainConfig, TrainingPair};
use spinecomp::pipeline::synth::occluded_shape;

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let data = perm.iter().flat_map(|&i| t.row(i).to_vec()).collect();
    Tensor::new(perm.len(), t.shape().1, data).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}

fn small_pairs(n: usize, points: usize) -> Vec<TrainingPair> {
    (0..n as u64)
        .map(|i| {
            let s = occluded_shape(500 + i, points, (0.4, 0.6));
            TrainingPair {
                partial: s.partial,
                complete: s.complete,
            }
        })
        .collect()
}

#[test]
fn op_gradients_match_finite_differences() {
    for (name, report) in op_gradchecks() {
        assert!(report.max_rel_error < 1e-4, "{name}: {report:?}");
        assert!(report.checked > 0, "{name}");
    }
}

#[test]
fn edgeconv_is_permutation_equivariant() {
    let mut r = rng(1);
    let mut store = ParamStore::new();
    let ec = EdgeConv::new(&mut store, &mut r, "ec", 5, 7);
    let pts = random_points(&mut r, 20, 1.0);
    let feats = random_tensor(&mut r, 20, 5);
    let run = |pts: &[Point3], feats: Tensor| {
        let mut g = Graph::new();
        g.bind_params(store.tensors());
        let x = g.constant(feats);
        let y = ec.forward(&mut g, pts, x, 4).unwrap();
        g.value(y).clone()
    };
    let base = run(&pts, feats.clone());
    let perm = shuffled(20, 2);
    let ppts: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
    let out = run(&ppts, permute_rows(&feats, &perm));
    assert_eq!(out, permute_rows(&base, &perm));
}

#[test]
fn encoder_block_is_permutation_equivariant() {
    let mut r = rng(3);
    let mut store = ParamStore::new();
    let block = GeometryAwareBlock::new(&mut store, &mut r, "b", 8, 2).unwrap();
    let pts = random_points(&mut r, 16, 1.0);
    let x = random_tensor(&mut r, 16, 8);
    let run = |pts: &[Point3], x: Tensor| {
        let mut g = Graph::new();
        g.bind_params(store.tensors());
        let v = g.constant(x);
        let y = block.forward(&mut g, v, pts, 4).unwrap();
        g.value(y).clone()
    };
    let base = run(&pts, x.clone());
    let perm = shuffled(16, 4);
    let ppts: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
    assert_eq!(run(&ppts, permute_rows(&x, &perm)), permute_rows(&base, &perm));
}

#[test]
fn attention_rows_are_distributions() {
    let mut r = rng(5);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, &mut r, "a", 8, 2).unwrap();
    let mut g = Graph::new();
    g.bind_params(store.tensors());
    let q = g.constant(random_tensor(&mut r, 4, 8));
    let kv = g.constant(random_tensor(&mut r, 6, 8));
    let (_, weights) = mha.forward_with_weights(&mut g, q, kv).unwrap();
    for w in weights {
        let w = g.value(w);
        assert_eq!(w.shape(), (4, 6));
        for i in 0..4 {
            assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    let row = random_tensor(&mut r, 1, 8);
    let same = g.constant(permute_rows(&row, &[0; 5]));
    let (_, weights) = mha.forward_with_weights(&mut g, q, same).unwrap();
    for w in weights {
        assert!(g.value(w).data.iter().all(|&a| (a - 0.2).abs() < 1e-12));
    }
}

#[test]
fn attention_ignores_key_order() {
    let mut r = rng(6);
    let mut store = ParamStore::new();
    let mha = MultiHeadAttention::new(&mut store, &mut r, "a", 8, 4).unwrap();
    let qt = random_tensor(&mut r, 3, 8);
    let kvt = random_tensor(&mut r, 9, 8);
    let run = |kv: Tensor| {
        let mut g = Graph::new();
        g.bind_params(store.tensors());
        let q = g.constant(qt.clone());
        let kv = g.constant(kv);
        let y = mha.forward(&mut g, q, kv).unwrap();
        g.value(y).clone()
    };
    assert_eq!(run(kvt.clone()), run(permute_rows(&kvt, &shuffled(9, 7))));
}

#[test]
fn completion_is_translation_equivariant() {
    let model = CompletionModel::new(small_desk_config(), 0).unwrap();
    let s = occluded_shape(9, 256, (0.4, 0.5));
    let input = spinecomp::nn::prepare_input(&s.partial, 64, 0).unwrap();
    let t = [123.0, -45.5, 300.25];
    let a = model.complete(&input).unwrap();
    let b = model.complete(&input.translated(t)).unwrap();
    let diag = input.bbox_diagonal().unwrap();
    let worst = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| (0..3).map(|i| (p[i] + t[i] - q[i]).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    assert!(worst < 1e-5 * diag, "worst {worst}");
}

#[test]
fn construction_and_inference_are_deterministic() {
    let a = CompletionModel::new(small_desk_config(), 3).unwrap();
    let b = CompletionModel::new(small_desk_config(), 3).unwrap();
    let c = CompletionModel::new(small_desk_config(), 4).unwrap();
    assert_eq!(a.params().tensors(), b.params().tensors());
    assert_ne!(a.params().tensors(), c.params().tensors());
    let input = cloud(&random_points(&mut rng(8), 64, 10.0));
    assert_eq!(a.complete(&input).unwrap(), b.complete(&input).unwrap());
}

#[test]
fn training_is_deterministic_and_thread_independent() {
    let pairs = small_pairs(6, 256);
    let cfg = TrainConfig {
        batch_size: 3,
        epochs: 2,
        seed: 1,
        ..TrainConfig::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut m = CompletionModel::new(small_desk_config(), 0).unwrap();
            let curve = train(&mut m, &pairs, &pairs[..2], &cfg).unwrap();
            (checkpoint::to_bytes(&m), curve)
        })
    };
    let (m1, c1) = run(1);
    let (m2, c2) = run(3);
    assert_eq!(m1, m2);
    assert_eq!(c1, c2);
    assert_eq!(c1.epochs.len(), 3);
}

#[test]
fn small_gradient_step_lowers_the_loss() {
    let mut model = CompletionModel::new(small_desk_config(), 0).unwrap();
    let pair = &small_pairs(1, 256)[0];
    let input = spinecomp::nn::prepare_input(&pair.partial, 64, 0).unwrap();
    let (before, grads) = sample_loss(&model, &input.points, &pair.complete.points).unwrap();
    for (p, g) in model.params_mut().tensors_mut().iter_mut().zip(&grads) {
        for (x, d) in p.data.iter_mut().zip(&g.data) {
            *x -= 1e-4 * d;
        }
    }
    let (after, _) = sample_loss(&model, &input.points, &pair.complete.points).unwrap();
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = CompletionModel::new(small_desk_config(), 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.config(), model.config());
    assert_eq!(back.seed(), model.seed());
    assert_eq!(back.params().names(), model.params().names());
    let bits = |m: &CompletionModel| -> Vec<u64> {
        m.params().tensors().iter().flat_map(|t| t.data.iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(bits(&back), bits(&model));
    assert_eq!(checkpoint::to_bytes(&back), std::fs::read(&path).unwrap());
    let input = cloud(&random_points(&mut rng(12), 64, 10.0));
    assert_eq!(back.complete(&input).unwrap(), model.complete(&input).unwrap());
}

#[test]
fn adaptive_queries_follow_the_input() {
    let model = CompletionModel::new(small_desk_config(), 0).unwrap();
    let coarse = |seed: u64| {
        let pts = random_points(&mut rng(seed), 64, 1.0);
        let mut g = Graph::new();
        model.bind(&mut g);
        let (_, global) = model.encode(&mut g, &pts).unwrap();
        let (c, _) = model.adaptive_queries(&mut g, global).unwrap();
        g.value(c).clone()
    };
    let (a, b) = (coarse(1), coarse(2));
    let diff = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff > 1e-6, "coarse proposals ignore the input");
}

#[test]
fn every_parameter_group_receives_gradient() {
    let model = CompletionModel::new(small_desk_config(), 0).unwrap();
    let pair = &small_pairs(1, 256)[0];
    let input = spinecomp::nn::prepare_input(&pair.partial, 64, 0).unwrap();
    let (_, grads) = sample_loss(&model, &input.points, &pair.complete.points).unwrap();
    for prefix in ["feat.", "pos.", "enc.", "query.", "dec.", "rebuild."] {
        let norm: f64 = model
            .params()
            .names()
            .iter()
            .zip(&grads)
            .filter(|(n, _)| n.starts_with(prefix))
            .flat_map(|(_, g)| g.data.iter().map(|x| x * x))
            .sum();
        assert!(norm > 0.0, "no gradient reaches {prefix}");
    }
}

#[test]
fn knn_graph_excludes_self() {
    let pts = random_points(&mut rng(13), 30, 1.0);
    let nbr = knn_graph(&pts, 5).unwrap();
    assert_eq!(nbr.len(), 150);
    for (i, row) in nbr.chunks(5).enumerate() {
        assert!(!row.contains(&i));
    }
}
