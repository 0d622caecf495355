//! Differentiable building blocks. Layers hold parameter ids; values come
//! from the parameters bound on the [`Graph`].

use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::index::knn_graph;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = store.glorot(format!("{name}.w"), in_dim, out_dim, rng);
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, out_dim));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.matmul(x, g.param(self.w))?;
        g.add_row(h, g.param(self.b))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::filled(1, dim, 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(1, dim));
        Self { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let n = g.normalize_rows(x, LAYER_NORM_EPS);
        let s = g.mul_row(n, g.param(self.gamma))?;
        g.add_row(s, g.param(self.beta))
    }
}

/// Two linear layers with a GELU in between.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dims: [usize; 3]) -> Self {
        Self {
            fc1: Linear::new(store, rng, &format!("{name}.fc1"), dims[0], dims[1]),
            fc2: Linear::new(store, rng, &format!("{name}.fc2"), dims[1], dims[2]),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, x)?;
        let h = g.gelu(h);
        self.fc2.forward(g, h)
    }
}

/// Row order that depends only on row contents (lexicographic, total order).
fn canonical_row_order(t: &Tensor) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..t.rows).collect();
    idx.sort_by(|&a, &b| {
        t.row(a)
            .iter()
            .zip(t.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Scaled dot-product multi-head attention with an output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::InvalidInput(format!(
                "hidden dimension {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: Linear::new(store, rng, &format!("{name}.q"), dim, dim),
            k: Linear::new(store, rng, &format!("{name}.k"), dim, dim),
            v: Linear::new(store, rng, &format!("{name}.v"), dim, dim),
            o: Linear::new(store, rng, &format!("{name}.o"), dim, dim),
            heads,
            dim,
        })
    }

    pub fn forward(&self, g: &mut Graph, queries: Var, keys_values: Var) -> Result<Var> {
        Ok(self.forward_with_weights(g, queries, keys_values)?.0)
    }

    /// Also returns the per-head attention matrices (`m×n`, rows sum to 1).
    /// Key/value rows are visited in a content-defined order, so the output
    /// does not depend on the order in which they were supplied.
    pub fn forward_with_weights(&self, g: &mut Graph, queries: Var, keys_values: Var) -> Result<(Var, Vec<Var>)> {
        let (sq, skv) = (g.shape(queries), g.shape(keys_values));
        if sq.1 != self.dim || skv.1 != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "attention width {} given queries {}x{} and keys {}x{}",
                self.dim, sq.0, sq.1, skv.0, skv.1
            )));
        }
        if skv.0 == 0 {
            return Err(Error::Empty("attention over zero keys".into()));
        }
        let order = canonical_row_order(g.value(keys_values));
        let kv = g.gather_rows(keys_values, &order)?;
        let q = self.q.forward(g, queries)?;
        let k = self.k.forward(g, kv)?;
        let v = self.v.forward(g, kv)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, (h + 1) * dh)?;
            let kh = g.slice_cols(k, h * dh, (h + 1) * dh)?;
            let vh = g.slice_cols(v, h * dh, (h + 1) * dh)?;
            let logits = g.matmul_nt(qh, kh)?;
            let logits = g.scale(logits, scale);
            let a = g.softmax_rows(logits);
            outs.push(g.matmul(a, vh)?);
            weights.push(a);
        }
        let cat = g.concat_cols(&outs)?;
        Ok((self.o.forward(g, cat)?, weights))
    }
}

/// Max over neighbors `j` of `GELU(W·[f_i, f_j − f_i] + b)`.
#[derive(Debug, Clone)]
pub struct EdgeConv {
    pub mlp: Linear,
}

impl EdgeConv {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            mlp: Linear::new(store, rng, &format!("{name}.edge"), 2 * in_dim, out_dim),
        }
    }

    /// Edge features `[f_i, f_j − f_i]` for the flattened neighbor table
    /// (`k` entries per point), one row per edge.
    pub fn edge_features(g: &mut Graph, features: Var, neighbors: &[usize], k: usize) -> Result<Var> {
        let n = g.shape(features).0;
        if neighbors.len() != n * k {
            return Err(Error::DimensionMismatch(format!(
                "neighbor table has {} entries, expected {n}x{k}",
                neighbors.len()
            )));
        }
        let centers: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        let fi = g.gather_rows(features, &centers)?;
        let fj = g.gather_rows(features, neighbors)?;
        let d = g.sub(fj, fi)?;
        g.concat_cols(&[fi, d])
    }

    pub fn forward_with_graph(&self, g: &mut Graph, features: Var, neighbors: &[usize], k: usize) -> Result<Var> {
        let e = Self::edge_features(g, features, neighbors, k)?;
        let h = self.mlp.forward(g, e)?;
        let h = g.gelu(h);
        g.group_max(h, k)
    }

    /// Builds the kNN graph (self excluded) on `points`, then aggregates.
    pub fn forward(&self, g: &mut Graph, points: &[Point3], features: Var, k: usize) -> Result<Var> {
        if points.len() != g.shape(features).0 {
            return Err(Error::DimensionMismatch(format!(
                "{} points for {} feature rows",
                points.len(),
                g.shape(features).0
            )));
        }
        let nbr = knn_graph(points, k)?;
        self.forward_with_graph(g, features, &nbr, k)
    }
}

/// Pre-norm block: global attention and a kNN-local EdgeConv branch merged
/// into one residual update, followed by a residual MLP.
#[derive(Debug, Clone)]
pub struct GeometryAwareBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub local: EdgeConv,
    pub merge: Linear,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl GeometryAwareBlock {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), dim, heads)?,
            local: EdgeConv::new(store, rng, &format!("{name}.local"), dim, dim),
            merge: Linear::new(store, rng, &format!("{name}.merge"), 2 * dim, dim),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            mlp: Mlp::new(store, rng, &format!("{name}.mlp"), [dim, 2 * dim, dim]),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, coords: &[Point3], k: usize) -> Result<Var> {
        let nbr = knn_graph(coords, k)?;
        self.forward_with_graph(g, x, &nbr, k)
    }

    pub fn forward_with_graph(&self, g: &mut Graph, x: Var, neighbors: &[usize], k: usize) -> Result<Var> {
        let h = self.ln1.forward(g, x)?;
        let global = self.attn.forward(g, h, h)?;
        let local = self.local.forward_with_graph(g, h, neighbors, k)?;
        let both = g.concat_cols(&[global, local])?;
        let upd = self.merge.forward(g, both)?;
        let x = g.add(x, upd)?;
        let h = self.ln2.forward(g, x)?;
        let m = self.mlp.forward(g, h)?;
        g.add(x, m)
    }
}

/// Geometry-aware self-attention over queries, cross-attention to the
/// encoder memory, then a residual MLP.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub ln1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub local: EdgeConv,
    pub merge: Linear,
    pub ln_q: LayerNorm,
    pub ln_m: LayerNorm,
    pub cross: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl DecoderBlock {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            self_attn: MultiHeadAttention::new(store, rng, &format!("{name}.self_attn"), dim, heads)?,
            local: EdgeConv::new(store, rng, &format!("{name}.local"), dim, dim),
            merge: Linear::new(store, rng, &format!("{name}.merge"), 2 * dim, dim),
            ln_q: LayerNorm::new(store, &format!("{name}.ln_q"), dim),
            ln_m: LayerNorm::new(store, &format!("{name}.ln_m"), dim),
            cross: MultiHeadAttention::new(store, rng, &format!("{name}.cross"), dim, heads)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            mlp: Mlp::new(store, rng, &format!("{name}.mlp"), [dim, 2 * dim, dim]),
        })
    }

    /// `neighbors` is the flattened kNN table (`k` per query) over the
    /// queries' coarse coordinates.
    pub fn forward(&self, g: &mut Graph, q: Var, neighbors: &[usize], k: usize, memory: Var) -> Result<Var> {
        let h = self.ln1.forward(g, q)?;
        let global = self.self_attn.forward(g, h, h)?;
        let local = self.local.forward_with_graph(g, h, neighbors, k)?;
        let both = g.concat_cols(&[global, local])?;
        let upd = self.merge.forward(g, both)?;
        let q = g.add(q, upd)?;
        let hq = self.ln_q.forward(g, q)?;
        let hm = self.ln_m.forward(g, memory)?;
        let c = self.cross.forward(g, hq, hm)?;
        let q = g.add(q, c)?;
        let h = self.ln2.forward(g, q)?;
        let m = self.mlp.forward(g, h)?;
        g.add(q, m)
    }
}
